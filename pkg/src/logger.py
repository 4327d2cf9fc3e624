"""
Logging configuration for ALR Bayes
"""

import logging
import sys
from typing import Any, Dict, Mapping, Optional

import structlog
from colorama import init as colorama_init

from src.config import config

# Initialize colorama for cross-platform colored output
colorama_init()


def setup_logging(log_level: Optional[str] = None, log_format: Optional[str] = None) -> None:
    """Setup structured logging for the application"""
    log_level = log_level or config.log_level
    log_format = log_format or config.log_format

    # Configure structlog
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer() if log_format == "json"
            else structlog.dev.ConsoleRenderer(colors=True)
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )

    # Configure standard library logging
    logging.basicConfig(
        format="%(message)s",
        stream=sys.stdout,
        level=getattr(logging, log_level.upper()),
        force=True,
    )


def get_logger(name: str) -> structlog.BoundLogger:
    """Get a structured logger instance"""
    return structlog.get_logger(name)


class RunLogger:
    """Specialized logger for fitting and simulation runs"""

    def __init__(self, name: str = "alr-bayes"):
        self.logger = get_logger(name)

    def log_startup(self, command: str, config_dict: Dict[str, Any]) -> None:
        """Log command startup"""
        from src import __version__

        self.logger.info(
            "ALR Bayes starting up",
            version=__version__,
            command=command,
            config=config_dict
        )

    def log_chain_start(self, model: str, chain: int, seed: int, iterations: int) -> None:
        self.logger.info(
            "Starting chain",
            model=model,
            chain=chain,
            seed=seed,
            iterations=iterations
        )

    def log_chain_end(self, model: str, chain: int, kept_draws: int,
                      acceptance: Optional[Mapping[str, float]] = None) -> None:
        """Log the end of a chain with its mean block acceptance"""
        mean_acceptance = None
        if acceptance:
            mean_acceptance = round(sum(acceptance.values()) / len(acceptance), 4)
        self.logger.info(
            "Chain completed",
            model=model,
            chain=chain,
            kept_draws=kept_draws,
            mean_acceptance=mean_acceptance
        )

    def log_convergence(self, model: str, max_psrf: float, threshold: float) -> None:
        if max_psrf > threshold:
            self.logger.warning(
                "Chains have not converged",
                model=model,
                max_psrf=round(max_psrf, 4),
                threshold=threshold
            )
        else:
            self.logger.info(
                "Chains converged",
                model=model,
                max_psrf=round(max_psrf, 4)
            )

    def log_replicate_failed(self, replicate: int, model: str, error: Exception) -> None:
        """Log a simulation replicate that was excluded"""
        self.logger.warning(
            "Replicate failed and was excluded",
            replicate=replicate,
            model=model,
            error=str(error),
            error_type=type(error).__name__
        )

    def log_error(self, error: Exception, context: str = None) -> None:
        """Log errors with context"""
        self.logger.error(
            "Error occurred",
            error=str(error),
            error_type=type(error).__name__,
            context=context,
        )

    def log_warning(self, message: str, **kwargs) -> None:
        """Log warnings"""
        self.logger.warning(message, **kwargs)

    def log_debug(self, message: str, **kwargs) -> None:
        """Log debug information"""
        self.logger.debug(message, **kwargs)
