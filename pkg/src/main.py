#!/usr/bin/env python3
"""
ALR Bayes - command-line application

    python -m src.main transform   --data matches.csv --out alr.csv
    python -m src.main fit         --model both --chains 3
    python -m src.main simulate    --scenario volleyball --sample-sizes 70 100 150
    python -m src.main sensitivity --sweep b2=100 d=10
"""

import argparse
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

from src import __version__
from src.config import Config
from src.criteria import DEFINITIONS
from src.datasets import (
    VOLLEYBALL_COMPONENTS,
    VOLLEYBALL_COVARIATES,
    VOLLEYBALL_LABEL,
    VOLLEYBALL_PATH,
    build_regression_dataset,
    load_compositions,
    read_table,
)
from src.errors import AlrError, ConfigError, DataError
from src.fitting import FitResult, FitRunner, parse_substitution
from src.logger import RunLogger, get_logger, setup_logging
from src.metrics import RunMetrics
from src.model import PriorSpec, RegressionDataset
from src.reports import (
    comparison_frame,
    fitted_frame,
    sensitivity_frame,
    transformed_frame,
    write_criteria,
    write_csv,
    write_draws,
    write_json,
    write_study,
    write_summary,
)
from src.sampler import MODELS
from src.simplex import CompositionDataset
from src.simulation import STUDY_SAMPLE_SIZES, SimScenario, run_sample_sizes

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_CONVERGENCE = 3

BUILTIN_SCENARIOS = ("volleyball", "volleyball-rho")

logger = get_logger("main")

# CLI flag dest -> Config field
FLAG_FIELDS = {
    "iterations": "iterations",
    "burn_in": "burn_in",
    "thin": "thin",
    "chains": "n_chains",
    "seed": "seed",
    "workers": "workers",
    "level": "level",
    "psrf_threshold": "psrf_threshold",
    "out_dir": "out_dir",
    "metrics": "metrics_enabled",
    "prior_a": "prior_a",
    "prior_b2": "prior_b2",
    "prior_c": "prior_c",
    "prior_d": "prior_d",
    "prior_a_intercept": "prior_a_intercept",
    "prior_b2_intercept": "prior_b2_intercept",
    "prior_a_slope": "prior_a_slope",
    "prior_b2_slope": "prior_b2_slope",
    "log_level": "log_level",
    "log_format": "log_format",
}

# simulate reads the chain flags as replicate chain settings
STUDY_FLAG_FIELDS = {
    "iterations": "study_iterations",
    "burn_in": "study_burn_in",
    "thin": "study_thin",
    "chains": "study_chains",
}


class CliParser(argparse.ArgumentParser):
    """ArgumentParser whose usage errors exit with the config status"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML settings file (chain/priors/report/study/logging)")
    parser.add_argument("--out-dir", help="directory for result files")
    parser.add_argument("--seed", type=int, help="master seed; chain c uses seed + c")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--log-format", choices=["console", "json"])


def _add_data(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--data", help="input CSV (default: bundled volleyball data)")
    parser.add_argument("--components", nargs="+", default=list(VOLLEYBALL_COMPONENTS),
                        help="component columns; the last one is the ALR reference")
    parser.add_argument("--covariates", nargs="*", default=list(VOLLEYBALL_COVARIATES),
                        help="covariate columns")
    parser.add_argument("--label", default=VOLLEYBALL_LABEL, help="optional row label column")


def _add_chain(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--model", choices=list(MODELS) + ["both"], default="both")
    parser.add_argument("--iterations", type=int)
    parser.add_argument("--burn-in", type=int)
    parser.add_argument("--thin", type=int)
    parser.add_argument("--chains", type=int)
    parser.add_argument("--workers", type=int, help="processes for chains or replicates")
    parser.add_argument("--level", type=float, help="credible level (default 0.90)")
    parser.add_argument("--metrics", action="store_true", default=None,
                        help="write metrics.prom next to the results")
    for name in ("a", "b2", "c", "d"):
        parser.add_argument(f"--prior-{name}", type=float)
    for name in ("a", "b2"):
        parser.add_argument(f"--prior-{name}-intercept", type=float)
        parser.add_argument(f"--prior-{name}-slope", type=float)


def build_parser() -> CliParser:
    parser = CliParser(prog="alr-bayes", description="Bayesian compositional regression with ALR responses")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", parser_class=CliParser)
    commands.required = True

    transform = commands.add_parser("transform", help="write ALR coordinates of component columns")
    _add_common(transform)
    _add_data(transform)
    transform.add_argument("--out", help="output CSV (default: <out-dir>/transformed.csv)")

    fit = commands.add_parser("fit", help="fit the regression and write summaries and criteria")
    _add_common(fit)
    _add_data(fit)
    _add_chain(fit)
    fit.add_argument("--psrf-threshold", type=float)

    simulate = commands.add_parser("simulate", help="run a coverage simulation study")
    _add_common(simulate)
    _add_chain(simulate)
    simulate.add_argument("--scenario", default="volleyball",
                          help="scenario JSON file or a built-in name (volleyball, volleyball-rho)")
    simulate.add_argument("--replicates", type=int)
    simulate.add_argument("--sample-sizes", type=int, nargs="+", choices=STUDY_SAMPLE_SIZES)

    sensitivity = commands.add_parser("sensitivity", help="one-at-a-time prior sensitivity sweep")
    _add_common(sensitivity)
    _add_data(sensitivity)
    _add_chain(sensitivity)
    sensitivity.add_argument("--sweep", nargs="*", default=[],
                             help="substitutions name[.scope]=value, e.g. b2=100 b2.slopes=10 d=10")
    return parser


def load_settings(args: argparse.Namespace) -> Config:
    """defaults < environment (.env) < YAML file < flags"""
    try:
        settings = Config()
    except ValueError as e:
        raise ConfigError(f"invalid environment setting: {e}") from e
    if getattr(args, "config", None):
        settings.load_yaml(args.config)
    mapping = dict(FLAG_FIELDS)
    if args.command == "simulate":
        mapping.update(STUDY_FLAG_FIELDS)
    settings.update(**{field: getattr(args, dest) for dest, field in mapping.items()
                       if hasattr(args, dest)})
    return settings.validate()


def _load_data(args: argparse.Namespace):
    path = Path(args.data) if args.data else VOLLEYBALL_PATH
    frame = read_table(path)
    if len(args.components) < 2:
        raise ConfigError("need at least two --components")
    return path, frame


def _models(args: argparse.Namespace) -> List[str]:
    return list(MODELS) if args.model == "both" else [args.model]


def cmd_transform(args: argparse.Namespace, settings: Config) -> int:
    path, frame = _load_data(args)
    compositions = load_compositions(frame, args.components, args.label)
    out = Path(args.out) if args.out else Path(settings.out_dir) / "transformed.csv"
    write_csv(transformed_frame(frame, args.components, compositions), out)
    logger.info("Transformed compositions", source=str(path), rows=compositions.n,
                reference=args.components[-1], out=str(out))
    return EXIT_OK


def _fit_metadata(args: argparse.Namespace, settings: Config, data: RegressionDataset,
                  priors: PriorSpec, result: FitResult, source: Path) -> Dict:
    return {
        "version": __version__,
        "model": result.model,
        "data": {
            "source": source.name,
            "n": data.n,
            "g": data.g,
            "p": data.p,
            "components": list(args.components),
            "reference_component": args.components[-1],
            "covariates": list(data.covariate_names),
        },
        "chain": {
            "iterations": settings.iterations,
            "burn_in": settings.burn_in,
            "thin": settings.thin,
            "n_chains": settings.n_chains,
            "seeds": [chain.seed_used for chain in result.chains],
            "acceptance": {str(chain.chain): chain.acceptance for chain in result.chains},
            "proposal_scales": {str(chain.chain): chain.proposal_scales for chain in result.chains},
        },
        "priors": priors.as_dict(),
        "level": settings.level,
        "psrf_threshold": settings.psrf_threshold,
        "max_psrf": result.max_psrf,
        "converged": result.converged,
        "criteria_definitions": DEFINITIONS,
        "theta_bar": result.criteria.theta_bar,
    }


def _write_fit(args: argparse.Namespace, settings: Config, data: RegressionDataset,
               compositions: CompositionDataset, priors: PriorSpec,
               results: Dict[str, FitResult], source: Path) -> None:
    out_dir = Path(settings.out_dir)
    for model, result in results.items():
        write_summary(result.summaries, out_dir / f"summary_{model}.csv")
        write_criteria(result.criteria, out_dir / f"criteria_{model}.json")
        write_draws(result.chains, out_dir / f"draws_{model}.csv")
        write_csv(fitted_frame(data, compositions, result.beta_mean(), args.components),
                  out_dir / f"fitted_{model}.csv")
        write_json(_fit_metadata(args, settings, data, priors, result, source),
                   out_dir / f"metadata_{model}.json")
    if len(results) > 1:
        write_csv(comparison_frame([r.criteria for r in results.values()]), out_dir / "comparison.csv")


def cmd_fit(args: argparse.Namespace, settings: Config) -> int:
    source, frame = _load_data(args)
    data, compositions = build_regression_dataset(frame, args.components, args.covariates, args.label)
    priors = settings.to_prior_spec(data.g, data.p)
    runner = FitRunner(settings.to_chain_config(), settings.level, settings.psrf_threshold)
    results = runner.fit(data, priors, _models(args))
    _write_fit(args, settings, data, compositions, priors, results, source)

    if settings.metrics_enabled:
        metrics = RunMetrics()
        for model, result in results.items():
            metrics.record_fit(model, result.summaries, result.chains)
        metrics.write(settings.out_dir)

    failed = [model for model, result in results.items() if not result.converged]
    if failed:
        logger.error("Convergence check failed", models=failed, threshold=settings.psrf_threshold)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _load_scenario(args: argparse.Namespace) -> SimScenario:
    if args.scenario in BUILTIN_SCENARIOS:
        scenario = SimScenario.builtin(args.scenario)
    else:
        scenario = SimScenario.from_json(args.scenario)
    if args.replicates is not None:
        scenario = SimScenario.from_dict({**scenario.to_dict(), "replicates": args.replicates})
    if args.level is not None:
        scenario = SimScenario.from_dict({**scenario.to_dict(), "level": args.level})
    return scenario


def cmd_simulate(args: argparse.Namespace, settings: Config) -> int:
    scenario = _load_scenario(args)
    priors = settings.to_prior_spec(scenario.g, scenario.p)
    sizes = args.sample_sizes or [scenario.n]
    results = run_sample_sizes(scenario, priors, settings.to_study_chain_config(), sizes,
                               _models(args), workers=settings.workers)
    paths = write_study(results, settings.out_dir)
    if settings.metrics_enabled:
        metrics = RunMetrics()
        for result in results:
            metrics.record_study(result)
        metrics.write(settings.out_dir)
    logger.info("Simulation results written", csv=str(paths["csv"]), json=str(paths["json"]))
    return EXIT_OK


def cmd_sensitivity(args: argparse.Namespace, settings: Config) -> int:
    substitutions = [parse_substitution(entry) for entry in args.sweep]
    source, frame = _load_data(args)
    data, _ = build_regression_dataset(frame, args.components, args.covariates, args.label)
    priors = settings.to_prior_spec(data.g, data.p)
    runner = FitRunner(settings.to_chain_config(), settings.level, settings.psrf_threshold)
    rows = runner.sensitivity(data, priors, substitutions, _models(args))
    out = write_csv(sensitivity_frame(rows), Path(settings.out_dir) / "sensitivity.csv")
    logger.info("Sensitivity sweep written", source=source.name, substitutions=len(substitutions),
                out=str(out))
    return EXIT_OK


COMMANDS = {
    "transform": cmd_transform,
    "fit": cmd_fit,
    "simulate": cmd_simulate,
    "sensitivity": cmd_sensitivity,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main application entry point"""
    args = build_parser().parse_args(argv)
    run_logger = RunLogger("main")
    try:
        settings = load_settings(args)
        setup_logging(settings.log_level, settings.log_format)
        run_logger.log_startup(args.command, settings.as_dict())
        return COMMANDS[args.command](args, settings)
    except ConfigError as e:
        run_logger.log_error(e, context=args.command)
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        run_logger.log_error(e, context=args.command)
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except AlrError as e:
        run_logger.log_error(e, context=args.command)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        logger.info("Received interrupt signal, shutting down...")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
