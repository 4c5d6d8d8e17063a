"""Logging configuration for the silcal logger tree"""
import logging
import sys
from datetime import datetime
from pathlib import Path
from typing import Optional, Union

ROOT_LOGGER = "silcal"

# Third-party loggers that flood DEBUG output (font lookups, backend selection)
_NOISY_LIBRARIES = ("matplotlib", "PIL")


def parse_level(level: Union[int, str, None], default: int = logging.INFO) -> int:
    """Accepts logging constants or names like 'debug'; unknown names give default"""
    if level is None:
        return default
    if isinstance(level, int):
        return level
    value = logging.getLevelName(str(level).upper())
    return value if isinstance(value, int) else default


def setup_logging(
    log_level: Union[int, str] = logging.INFO,
    log_to_file: bool = False,
    log_dir: Union[str, Path] = "logs",
    log_filename: Optional[str] = None,
) -> logging.Logger:
    """
    Configure the silcal logger.

    Console output goes to stderr so subcommands can print results on stdout.
    The optional file handler records DEBUG and above with function and line.

    Args:
        log_level: Console level, constant or name
        log_to_file: Also write a log file
        log_dir: Directory for log files
        log_filename: Custom log filename (default: silcal_YYYYMMDD_HHMMSS.log)

    Returns:
        logger: The configured 'silcal' logger
    """
    level = parse_level(log_level)
    logger = logging.getLogger(ROOT_LOGGER)
    logger.setLevel(logging.DEBUG if log_to_file else level)

    # Repeated CLI invocations in one process must not stack handlers
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.setFormatter(logging.Formatter(
        '%(asctime)s - %(levelname)s - %(message)s',
        datefmt='%H:%M:%S'
    ))
    logger.addHandler(console_handler)

    if log_to_file:
        directory = Path(log_dir)
        directory.mkdir(parents=True, exist_ok=True)
        if log_filename is None:
            log_filename = f"silcal_{datetime.now().strftime('%Y%m%d_%H%M%S')}.log"
        log_path = directory / log_filename

        file_handler = logging.FileHandler(log_path, mode='a', encoding='utf-8')
        file_handler.setLevel(logging.DEBUG)
        file_handler.setFormatter(logging.Formatter(
            '%(asctime)s - %(name)s - %(levelname)s - %(funcName)s:%(lineno)d - %(message)s',
            datefmt='%Y-%m-%d %H:%M:%S'
        ))
        logger.addHandler(file_handler)
        logger.info(f"Logging to file: {log_path}")

    for name in _NOISY_LIBRARIES:
        logging.getLogger(name).setLevel(max(level, logging.WARNING))

    return logger
