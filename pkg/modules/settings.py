import os
import logging
from dataclasses import dataclass

from dotenv import load_dotenv

load_dotenv()

DEFAULT_LOG_FORMAT = "%(asctime)s - %(levelname)s - %(message)s"


class InvalidConfig(ValueError):
    """A configuration value outside its permitted range."""


def _env_int(name: str, default: int, minimum: int = 1) -> int:
    raw = (os.getenv(name) or "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        logging.warning("Ignoring %s=%r: not an integer, using %s", name, raw, default)
        return default
    if value < minimum:
        logging.warning("Ignoring %s=%s: below minimum %s, using %s", name, value, minimum, default)
        return default
    return value


def _env_level(name: str, default: str) -> int:
    raw = (os.getenv(name) or default).strip().upper()
    level = logging.getLevelName(raw)
    if not isinstance(level, int):
        logging.warning("Unknown log level %s=%r, using %s", name, raw, default)
        level = logging.getLevelName(default)
    return level


@dataclass(frozen=True)
class Settings:
    log_level: int
    log_format: str
    batch_workers: int


def get_settings() -> Settings:
    """
    Reads runtime settings from the environment (.env honoured):
      - CROSSING_LOG_LEVEL      logging level name (default WARNING)
      - CROSSING_LOG_FORMAT     logging format string
      - CROSSING_BATCH_WORKERS  worker processes used by the batch command (default 4)
    """
    load_dotenv()
    return Settings(
        log_level=_env_level("CROSSING_LOG_LEVEL", "WARNING"),
        log_format=os.getenv("CROSSING_LOG_FORMAT") or DEFAULT_LOG_FORMAT,
        batch_workers=_env_int("CROSSING_BATCH_WORKERS", 4),
    )


def configure_logging(settings: Settings = None) -> Settings:
    settings = settings or get_settings()
    logging.basicConfig(level=settings.log_level, format=settings.log_format)
    return settings
