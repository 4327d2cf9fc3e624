"""
Simplex-valued data and the additive log-ratio (ALR) transform

The reference (denominator) part is always the last one, so column order in
the input decides it.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import (
    AlrOverflowError,
    DimensionMismatchError,
    NonPositiveEntryError,
    RowSumError,
    ZeroPartError,
)
from src.logger import get_logger

logger = get_logger(__name__)

SUM_TOLERANCE = 1e-9
# Construction renormalizes raw sums within this absolute distance of 1
RENORMALIZE_TOLERANCE = 1e-2
# Dataset rows may deviate this much (relative) from their expected total
ROW_SUM_TOLERANCE = 0.01
# exp() of a shifted coordinate below -EXP_LIMIT underflows a part to zero
EXP_LIMIT = 700.0

ArrayLike = Union[Sequence[float], np.ndarray]


def _frozen(values: ArrayLike) -> np.ndarray:
    array = np.array(values, dtype=float)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class Composition:
    """One point of the simplex: G strictly positive parts summing to 1"""

    parts: np.ndarray

    def __post_init__(self):
        parts = np.asarray(self.parts, dtype=float)
        if parts.ndim != 1 or parts.size < 1:
            raise DimensionMismatchError("a composition is a non-empty vector")
        if not np.all(np.isfinite(parts)) or np.any(parts <= 0):
            raise ZeroPartError(f"composition parts must be finite and > 0, got {parts}")
        total = parts.sum()
        if abs(total - 1.0) > RENORMALIZE_TOLERANCE:
            raise RowSumError(row=0, observed_sum=float(total))
        object.__setattr__(self, "parts", _frozen(parts / total))

    @property
    def n_parts(self) -> int:
        return self.parts.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Composition):
            return NotImplemented
        return np.array_equal(self.parts, other.parts)

    def __hash__(self) -> int:
        return hash(self.parts.tobytes())


@dataclass(frozen=True)
class CompositionDataset:
    """n compositions sharing the same number of parts G >= 2"""

    rows: Tuple[Composition, ...]
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        rows = tuple(self.rows)
        if not rows:
            raise DimensionMismatchError("a composition dataset needs at least one row")
        sizes = {row.n_parts for row in rows}
        if len(sizes) != 1:
            raise DimensionMismatchError(f"rows have differing part counts {sorted(sizes)}")
        if rows[0].n_parts < 2:
            raise DimensionMismatchError("compositions need at least two parts")
        object.__setattr__(self, "rows", rows)
        if self.labels is not None:
            labels = tuple(str(label) for label in self.labels)
            if len(labels) != len(rows):
                raise DimensionMismatchError(
                    f"{len(labels)} labels for {len(rows)} rows"
                )
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return len(self.rows)

    @property
    def n_parts(self) -> int:
        return self.rows[0].n_parts

    def as_array(self) -> np.ndarray:
        return np.vstack([row.parts for row in self.rows])

    def alr(self) -> np.ndarray:
        """ALR coordinates of every row, shape (n, G - 1)"""
        return alr_forward_matrix(self.as_array())


def alr_forward(c: Union[Composition, ArrayLike]) -> np.ndarray:
    """y_j = log(parts[j] / parts[G]) for j = 1..G-1"""
    parts = c.parts if isinstance(c, Composition) else np.asarray(c, dtype=float)
    if np.any(~(parts > 0)):
        raise ZeroPartError(f"ALR undefined for non-positive parts {parts}")
    return np.log(parts[:-1]) - np.log(parts[-1])


def alr_forward_matrix(parts: np.ndarray) -> np.ndarray:
    """Row-wise ALR of an (n, G) matrix of positive parts"""
    parts = np.asarray(parts, dtype=float)
    if np.any(~(parts > 0)):
        raise ZeroPartError("ALR undefined: matrix holds non-positive parts")
    logs = np.log(parts)
    return logs[:, :-1] - logs[:, -1:]


def _shifted_exponentials(y: np.ndarray) -> np.ndarray:
    """exp([y, 0] - max) along the last axis; rows sum to the closure denominator"""
    padded = np.concatenate([y, np.zeros(y.shape[:-1] + (1,))], axis=-1)
    shifted = padded - padded.max(axis=-1, keepdims=True)
    if np.any(shifted < -EXP_LIMIT):
        raise AlrOverflowError(
            "ALR coordinates too far apart: a part would underflow to zero"
        )
    return np.exp(shifted)


def alr_inverse(y: ArrayLike) -> Composition:
    """Map g ALR coordinates back to a G = g + 1 part composition"""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1:
        raise DimensionMismatchError("alr_inverse expects a vector")
    if not np.all(np.isfinite(y)):
        raise AlrOverflowError(f"ALR coordinates must be finite, got {y}")
    weights = _shifted_exponentials(y)
    return Composition(weights / weights.sum())


def alr_inverse_matrix(y: np.ndarray) -> np.ndarray:
    """Row-wise inverse ALR of an (n, g) matrix, returning (n, g + 1) parts"""
    y = np.asarray(y, dtype=float)
    if not np.all(np.isfinite(y)):
        raise AlrOverflowError("ALR coordinates must be finite")
    weights = _shifted_exponentials(y)
    return weights / weights.sum(axis=-1, keepdims=True)


def _expected_total(sums: np.ndarray) -> float:
    """Percent data sums to ~100, proportions to ~1"""
    return 100.0 if np.median(sums) > 10.0 else 1.0


def validate_and_normalize(raw_rows: ArrayLike,
                           labels: Optional[Sequence[str]] = None) -> CompositionDataset:
    """Check raw part rows and close each one to sum 1

    The expected total (1 or 100) is detected from the rows' magnitude; a row
    whose sum is more than 1% away from it is rejected, never padded.
    """
    raw = np.asarray(raw_rows, dtype=float)
    if raw.ndim == 1:
        raw = raw[np.newaxis, :]
    if raw.ndim != 2 or raw.shape[0] < 1:
        raise DimensionMismatchError("expected an (n, G) matrix of parts")

    bad = np.argwhere(~(raw > 0))
    if bad.size:
        row, column = (int(v) for v in bad[0])
        raise NonPositiveEntryError(row=row, column=column, value=float(raw[row, column]))

    sums = raw.sum(axis=1)
    total = _expected_total(sums)
    deviation = np.abs(sums - total) / total
    offending = np.flatnonzero(deviation > ROW_SUM_TOLERANCE)
    if offending.size:
        row = int(offending[0])
        raise RowSumError(row=row, observed_sum=float(sums[row]), expected_total=total)

    closed = raw / sums[:, np.newaxis]
    logger.debug("Normalized compositions", rows=raw.shape[0], parts=raw.shape[1],
                 expected_total=total)
    return CompositionDataset(
        rows=tuple(Composition(row) for row in closed),
        labels=None if labels is None else tuple(labels),
    )
