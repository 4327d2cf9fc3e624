"""
Exception hierarchy for ALR Bayes

Families map onto CLI exit codes: DataError -> 2, ConfigError -> 1.
"""

from typing import Optional


class AlrError(Exception):
    """Base class for every error raised by the package"""


# Data errors

class DataError(AlrError):
    """Input data cannot be used as given"""


class ZeroPartError(DataError):
    """A composition part is zero or negative, so the ALR is undefined"""


class NonPositiveEntryError(DataError):
    def __init__(self, row: int, column: int, value: float):
        self.row = row
        self.column = column
        self.value = value
        super().__init__(
            f"row {row}: entry in column {column} is {value!r}, parts must be > 0"
        )


class RowSumError(DataError):
    def __init__(self, row: int, observed_sum: float, expected_total: float = 1.0):
        self.row = row
        self.observed_sum = observed_sum
        self.expected_total = expected_total
        super().__init__(
            f"row {row}: parts sum to {observed_sum:.6g}, "
            f"expected {expected_total:g} within 1%"
        )


class ParseError(DataError):
    def __init__(self, message: str, row: Optional[int] = None,
                 column: Optional[str] = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column '{column}'")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class DimensionMismatchError(DataError):
    """Array shapes do not agree"""


# Model errors

class ModelError(AlrError):
    """A parameter configuration is outside the model's support"""


class AlrOverflowError(ModelError, OverflowError):
    """ALR coordinates too extreme to map back onto the simplex"""


class NonPositiveVarianceError(ModelError):
    """A variance sigma2_j is not strictly positive"""


class NotPositiveDefiniteError(ModelError):
    """The correlation matrix built from rho is not positive definite"""


class InvalidStateError(ModelError):
    """A sampler was handed a state outside the posterior support"""


class MeanStateOutOfSupportError(ModelError):
    """The componentwise posterior mean is not a valid parameter state"""


# Diagnostics errors

class DiagnosticsError(AlrError):
    """Chain output cannot be summarized as requested"""


class TooFewChainsError(DiagnosticsError):
    """Gelman-Rubin needs at least two chains"""


class DegenerateChainsError(DiagnosticsError):
    """Within-chain variance is zero"""


class EmptyDrawsError(DiagnosticsError):
    """Fewer draws than the summary needs"""


# Configuration errors

class ConfigError(AlrError):
    """Invalid settings, flags or sweep specification"""


class ScenarioError(ConfigError):
    """Invalid simulation scenario"""
