from pydantic import BaseModel, Field
from typing import Dict, Optional
import logging
import os

from errors import DataError

# Process-level settings, overridable through the environment
THREADS = int(os.getenv("AIRQ_THREADS", "1"))
LOG_LEVEL = os.getenv("AIRQ_LOG_LEVEL", "INFO")
DEFAULT_SEED = os.getenv("AIRQ_SEED")

TOOL_VERSION = "1.0.0"

logger = logging.getLogger(__name__)


class Settings(BaseModel):
    threads: int = Field(1, ge=1)
    log_level: str = "INFO"
    seed: Optional[int] = Field(None, ge=0)


def get_settings() -> Settings:
    """Collect environment settings into a validated model"""
    return Settings(
        threads=THREADS,
        log_level=LOG_LEVEL.upper(),
        seed=int(DEFAULT_SEED) if DEFAULT_SEED else None,
    )


def read_config_file(path: str) -> Dict[str, str]:
    """Read a flat `key = value` run configuration file"""
    if not os.path.exists(path):
        raise DataError(f"Config file not found: {path}")

    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected 'key = value', got {raw.strip()!r}")
            key, value = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if not key:
                raise DataError(f"{path}:{lineno}: empty key")
            values[key] = value.strip()

    logger.debug("Read %d config values from %s", len(values), path)
    return values
