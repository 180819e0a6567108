"""Logging configuration and setup"""

import functools
import logging
import logging.handlers
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

import structlog


def setup_logging(level: str = "INFO",
                  verbose: bool = False,
                  log_dir: str = "logs",
                  file_logging: bool = True) -> None:
    """
    Setup logging configuration

    Args:
        level: Base log level name
        verbose: Enable verbose (DEBUG) logging
        log_dir: Directory for log files
        file_logging: Write rotating log files in addition to the console
    """
    log_level = logging.DEBUG if verbose else getattr(logging, str(level).upper(), logging.INFO)

    detailed_formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(filename)s:%(lineno)d - %(funcName)s() - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    simple_formatter = logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Clear existing handlers
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)

    # Console goes to stderr; stdout is reserved for tables and JSON
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(log_level)
    console_handler.setFormatter(simple_formatter)
    root_logger.addHandler(console_handler)

    if file_logging:
        log_path = Path(log_dir)
        log_path.mkdir(parents=True, exist_ok=True)

        main_file_handler = logging.handlers.RotatingFileHandler(
            log_path / "kernel-verify.log",
            maxBytes=10 * 1024 * 1024,  # 10MB
            backupCount=5
        )
        main_file_handler.setLevel(logging.INFO)
        main_file_handler.setFormatter(detailed_formatter)
        root_logger.addHandler(main_file_handler)

        error_file_handler = logging.handlers.RotatingFileHandler(
            log_path / "kernel-verify-error.log",
            maxBytes=5 * 1024 * 1024,  # 5MB
            backupCount=3
        )
        error_file_handler.setLevel(logging.ERROR)
        error_file_handler.setFormatter(detailed_formatter)
        root_logger.addHandler(error_file_handler)

    for noisy in ('matplotlib', 'numexpr', 'PIL'):
        logging.getLogger(noisy).setLevel(logging.WARNING)

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.processors.KeyValueRenderer(key_order=["event"], sort_keys=True),
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )

    logger = logging.getLogger(__name__)
    logger.debug("Logging system initialized (level=%s, files=%s)",
                 logging.getLevelName(log_level), file_logging)


def _summarize(values: Sequence[float]) -> dict:
    if len(values) == 0:
        return {"count": 0}
    return {"count": len(values), "min": float(min(values)), "max": float(max(values))}


class StructuredLogger:
    """Structured logging helper: one key=value event per pipeline stage"""

    def __init__(self, name: str):
        self.logger = structlog.get_logger(name)

    def log_spectrum(self, n_samples: int, rank: int, eigenvalues: Sequence[float]):
        """Log the retained spectrum of the base Gram matrix"""
        self.logger.info("spectrum", n_samples=n_samples, rank=rank, **_summarize(eigenvalues))

    def log_learning(self,
                     mode: str,
                     alpha: float,
                     iterations: int,
                     ratio_trace: float,
                     stop_reason: Optional[str] = None):
        """Log the outcome of spectral coefficient learning"""
        self.logger.info(
            "kernel_learned",
            mode=mode,
            alpha=alpha,
            iterations=iterations,
            ratio_trace=ratio_trace,
            stop_reason=stop_reason,
        )

    def log_fit(self, m_b: int, clients: int, degenerate_clients: Sequence[str] = ()):
        """Log the discriminant fit; degenerate clients escalate to a warning"""
        if degenerate_clients:
            self.logger.warning("cskda_fit", m_b=m_b, clients=clients,
                                degenerate_clients=list(degenerate_clients))
        else:
            self.logger.info("cskda_fit", m_b=m_b, clients=clients)

    def log_evaluation(self,
                       mode: str,
                       threshold: float,
                       test_far: float,
                       test_frr: float,
                       test_ter: float):
        """Log one verification report"""
        self.logger.info(
            "evaluation",
            mode=mode,
            threshold=threshold,
            test_far=test_far,
            test_frr=test_frr,
            test_ter=test_ter,
        )

    def log_export_event(self,
                         export_type: str,
                         file_path: str,
                         record_count: int,
                         file_size_bytes: int):
        """Log artifact export events"""
        self.logger.info(
            "export",
            export_type=export_type,
            path=file_path,
            records=record_count,
            size_bytes=file_size_bytes,
        )


def log_performance(logger_name: Optional[str] = None):
    """Decorator to log function wall time at DEBUG"""
    def decorator(func):
        @functools.wraps(func)
        def wrapper(*args, **kwargs):
            logger = logging.getLogger(logger_name or func.__module__)
            start_time = time.perf_counter()

            try:
                result = func(*args, **kwargs)
                duration = (time.perf_counter() - start_time) * 1000
                logger.debug(f"Performance - {func.__name__}: {duration:.2f}ms")
                return result
            except Exception as e:
                duration = (time.perf_counter() - start_time) * 1000
                logger.debug(f"Performance - {func.__name__}: {duration:.2f}ms (FAILED: {e})")
                raise

        return wrapper

    return decorator
