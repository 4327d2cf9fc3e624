"""
CSV ingestion of compositions and covariates
"""

from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.errors import ParseError
from src.logger import get_logger
from src.model import RegressionDataset
from src.simplex import CompositionDataset, validate_and_normalize

logger = get_logger(__name__)

VOLLEYBALL_PATH = Path(__file__).parent / "data" / "volleyball.csv"
# Percent of points won by attack, block, serve and opponent errors; the last is the reference
VOLLEYBALL_COMPONENTS = ("attack", "block", "serve", "errors")
VOLLEYBALL_COVARIATES = ("z1", "z2", "z3", "z4")
VOLLEYBALL_LABEL = "match"

PathLike = Union[str, Path]


def read_table(path: PathLike) -> pd.DataFrame:
    """UTF-8 CSV with a header row and dot decimals"""
    try:
        frame = pd.read_csv(path, encoding="utf-8")
    except FileNotFoundError as e:
        raise ParseError(f"file not found: {path}") from e
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise ParseError(f"cannot parse {path}: {e}") from e
    frame.columns = [str(c).strip() for c in frame.columns]
    logger.debug("Read table", path=str(path), rows=len(frame), columns=list(frame.columns))
    return frame


def numeric_columns(frame: pd.DataFrame, columns: Sequence[str]) -> np.ndarray:
    """Columns as a float matrix; ParseError names the first missing column or bad cell"""
    for column in columns:
        if column not in frame.columns:
            raise ParseError(f"missing column (available: {', '.join(frame.columns)})", column=column)
    block = frame.loc[:, list(columns)]
    values = block.apply(pd.to_numeric, errors="coerce")
    bad = values.isna().to_numpy()
    if bad.any():
        row, col = (int(v) for v in np.argwhere(bad)[0])
        raw = block.iat[row, col]
        raise ParseError(f"not a number: {raw!r}", row=row, column=columns[col])
    return values.to_numpy(dtype=float)


def load_compositions(frame: pd.DataFrame, components: Sequence[str],
                      label: Optional[str] = None) -> CompositionDataset:
    if len(components) < 2:
        raise ParseError("need at least two component columns")
    labels = None
    if label is not None and label in frame.columns:
        labels = [str(v) for v in frame[label]]
    return validate_and_normalize(numeric_columns(frame, components), labels=labels)


def build_regression_dataset(frame: pd.DataFrame, components: Sequence[str],
                             covariates: Sequence[str],
                             label: Optional[str] = None) -> Tuple[RegressionDataset, CompositionDataset]:
    """ALR responses of ``components`` against ``covariates``"""
    compositions = load_compositions(frame, components, label)
    z = numeric_columns(frame, covariates) if covariates else np.zeros((compositions.n, 0))
    names = tuple(f"alr_{j}" for j in range(1, compositions.n_parts))
    data = RegressionDataset(
        y=compositions.alr(),
        z=z,
        response_names=names,
        covariate_names=tuple(covariates),
    )
    return data, compositions


def load_regression_dataset(path: PathLike, components: Sequence[str], covariates: Sequence[str],
                            label: Optional[str] = None) -> Tuple[RegressionDataset, CompositionDataset]:
    return build_regression_dataset(read_table(path), components, covariates, label)


def load_volleyball() -> Tuple[RegressionDataset, CompositionDataset]:
    """The bundled 128-match dataset"""
    return load_regression_dataset(VOLLEYBALL_PATH, VOLLEYBALL_COMPONENTS,
                                   VOLLEYBALL_COVARIATES, VOLLEYBALL_LABEL)
