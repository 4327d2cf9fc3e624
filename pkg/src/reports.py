"""
Result files: CSV tables through pandas, JSON sidecars with sorted keys

Every CSV uses 6 significant digits and "\n" line endings so reruns with the
same seed are byte-identical.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, List, Sequence, Union

import numpy as np
import pandas as pd

from src.criteria import CriteriaReport
from src.diagnostics import DEFAULT_LEVEL, PosteriorSummary
from src.logger import get_logger
from src.model import RegressionDataset, fitted_compositions
from src.sampler import ChainOutput
from src.simplex import CompositionDataset
from src.simulation import StudyResult

logger = get_logger(__name__)

FLOAT_FORMAT = "%.6g"
SUMMARY_COLUMNS = ("name", "mean", "sd", "lower", "upper", "psrf", "ess", "excludes_zero")
COMPARISON_COLUMNS = ("model", "eaic", "ebic", "dic", "lpml", "p_d", "n_params")

PathLike = Union[str, Path]


def write_csv(frame: pd.DataFrame, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.debug("Wrote CSV", path=str(path), rows=len(frame))
    return path


def _jsonable(value: Any) -> Any:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def write_json(payload: Dict[str, Any], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n", encoding="utf-8")
    logger.debug("Wrote JSON", path=str(path))
    return path


def transformed_frame(frame: pd.DataFrame, components: Sequence[str],
                      compositions: CompositionDataset) -> pd.DataFrame:
    """Non-component columns kept in order, then alr_1..alr_g"""
    kept = frame.drop(columns=list(components)).reset_index(drop=True)
    alr = compositions.alr()
    for j in range(alr.shape[1]):
        kept[f"alr_{j + 1}"] = alr[:, j]
    return kept


def summary_frame(summaries: Sequence[PosteriorSummary]) -> pd.DataFrame:
    rows = [{column: s.as_dict()[column] for column in SUMMARY_COLUMNS} for s in summaries]
    return pd.DataFrame(rows, columns=list(SUMMARY_COLUMNS))


def write_summary(summaries: Sequence[PosteriorSummary], path: PathLike) -> Path:
    return write_csv(summary_frame(summaries), path)


def read_summary_csv(path: PathLike, level: float = DEFAULT_LEVEL) -> List[PosteriorSummary]:
    frame = pd.read_csv(path, encoding="utf-8")
    return [
        PosteriorSummary(
            name=str(row["name"]),
            mean=float(row["mean"]),
            sd=float(row["sd"]),
            lower=float(row["lower"]),
            upper=float(row["upper"]),
            ess=float(row["ess"]),
            psrf=float(row["psrf"]),
            level=level,
        )
        for _, row in frame.iterrows()
    ]


def draws_frame(chains: Sequence[ChainOutput]) -> pd.DataFrame:
    """iteration, chain, then one column per parameter, chains stacked in order"""
    blocks = []
    for chain in chains:
        block = pd.DataFrame(chain.draws, columns=list(chain.parameter_names))
        block.insert(0, "chain", chain.chain)
        block.insert(0, "iteration", chain.kept_iterations)
        blocks.append(block)
    return pd.concat(blocks, ignore_index=True)


def write_draws(chains: Sequence[ChainOutput], path: PathLike) -> Path:
    return write_csv(draws_frame(chains), path)


def write_criteria(report: CriteriaReport, path: PathLike) -> Path:
    return write_json(report.as_dict(), path)


def fitted_frame(data: RegressionDataset, compositions: CompositionDataset,
                 beta_mean: np.ndarray, components: Sequence[str]) -> pd.DataFrame:
    """Observed and fitted mean compositions side by side"""
    observed = compositions.as_array()
    fitted = fitted_compositions(data, beta_mean)
    columns = {}
    for k, component in enumerate(components):
        columns[f"observed_{component}"] = observed[:, k]
    for k, component in enumerate(components):
        columns[f"fitted_{component}"] = fitted[:, k]
    frame = pd.DataFrame(columns)
    if compositions.labels is not None:
        frame.insert(0, "label", list(compositions.labels))
    return frame


def comparison_frame(reports: Sequence[CriteriaReport]) -> pd.DataFrame:
    rows = [{column: report.as_dict()[column] for column in COMPARISON_COLUMNS} for report in reports]
    return pd.DataFrame(rows, columns=list(COMPARISON_COLUMNS))


def study_frame(results: Sequence[StudyResult]) -> pd.DataFrame:
    """One row per (n, model, parameter), sample sizes stacked"""
    records = [record for result in results for record in result.as_records()]
    return pd.DataFrame(records, columns=["n", "model", "parameter", "truth", "mean", "sd", "cp",
                                          "replicates"])


def write_study(results: Sequence[StudyResult], out_dir: PathLike) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    return {
        "csv": write_csv(study_frame(results), out_dir / "study.csv"),
        "json": write_json({"studies": [result.to_dict() for result in results]}, out_dir / "study.json"),
    }


def sensitivity_frame(rows: Sequence[Dict[str, Any]]) -> pd.DataFrame:
    return pd.DataFrame(list(rows), columns=["substitution", "model", "parameter", "baseline_mean",
                                             "mean", "delta", "baseline_sd", "delta_over_sd"])
