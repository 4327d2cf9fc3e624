"""
Run metrics in Prometheus text format

Gauges live in a private registry and are written once per run to
``<out_dir>/metrics.prom`` for a node-exporter textfile collector.
"""

from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from prometheus_client import CollectorRegistry, Gauge, write_to_textfile

from src.diagnostics import PosteriorSummary
from src.logger import get_logger
from src.sampler import ChainOutput
from src.simulation import StudyResult

logger = get_logger(__name__)

METRICS_FILE = "metrics.prom"


class RunMetrics:
    def __init__(self, registry: Optional[CollectorRegistry] = None):
        self.registry = registry or CollectorRegistry()
        self.psrf = Gauge("alr_psrf", "Potential scale reduction factor per parameter",
                          ["model", "parameter"], registry=self.registry)
        self.ess = Gauge("alr_ess", "Effective sample size per parameter",
                         ["model", "parameter"], registry=self.registry)
        self.acceptance = Gauge("alr_acceptance_rate", "Post burn-in Metropolis acceptance rate",
                                ["model", "chain", "parameter"], registry=self.registry)
        self.kept_draws = Gauge("alr_kept_draws", "Kept draws pooled over chains",
                                ["model"], registry=self.registry)
        self.replicates = Gauge("alr_replicates", "Simulation replicates by outcome",
                                ["model", "status"], registry=self.registry)

    def record_fit(self, model: str, summaries: Sequence[PosteriorSummary],
                   chains: Sequence[ChainOutput]) -> None:
        for summary in summaries:
            if np.isfinite(summary.psrf):
                self.psrf.labels(model=model, parameter=summary.name).set(summary.psrf)
            self.ess.labels(model=model, parameter=summary.name).set(summary.ess)
        for chain in chains:
            for parameter, rate in chain.acceptance.items():
                self.acceptance.labels(model=model, chain=str(chain.chain), parameter=parameter).set(rate)
        self.kept_draws.labels(model=model).set(sum(chain.n_draws for chain in chains))

    def record_study(self, result: StudyResult) -> None:
        for model, count in result.completed.items():
            self.replicates.labels(model=model, status="completed").inc(count)
        for model, count in result.failed.items():
            self.replicates.labels(model=model, status="failed").inc(count)

    def write(self, out_dir: Union[str, Path]) -> Optional[Path]:
        """Write the textfile; failures are logged, never raised"""
        path = Path(out_dir) / METRICS_FILE
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            write_to_textfile(str(path), self.registry)
        except OSError as e:
            logger.error("Failed to write metrics", path=str(path), error=str(e))
            return None
        logger.debug("Wrote metrics", path=str(path))
        return path
