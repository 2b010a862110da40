"""
Environment-driven settings.

Values come from environment variables, optionally loaded from a `.env` file
next to the process working directory. Algorithm configuration (training,
graph construction, synthetic cases) lives in pydantic models in schemas.py.
"""

import os
from dataclasses import dataclass, field
from typing import List

from dotenv import load_dotenv

# Load environment variables from a .env file (if present)
load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s - %(message)s"

_DEFAULT_ORIGINS = [
    "http://localhost:5173",
    "http://127.0.0.1:5173",
    "http://localhost:8000",
    "http://127.0.0.1:8000",
]


def _env_flag(name: str, default: str = "0") -> bool:
    return os.getenv(name, default) in ("1", "true", "True")


def _env_origins() -> List[str]:
    env_origins = os.getenv("FRONTEND_ORIGINS", "")
    if env_origins:
        return [origin.strip() for origin in env_origins.split(",") if origin.strip()]
    return list(_DEFAULT_ORIGINS)


@dataclass(frozen=True)
class Settings:
    log_level: str = field(default_factory=lambda: os.getenv("LOG_LEVEL", "INFO"))
    database_url: str = field(default_factory=lambda: os.getenv("DATABASE_URL", "sqlite:///./wellgraph.db"))
    output_dir: str = field(default_factory=lambda: os.getenv("WELLGRAPH_OUTPUT_DIR", "./runs"))
    record_runs: bool = field(default_factory=lambda: _env_flag("WELLGRAPH_RECORD_RUNS", "1"))
    frontend_origins: List[str] = field(default_factory=_env_origins)


def get_settings() -> Settings:
    """Read settings from the current environment (re-read on every call so tests can monkeypatch)."""
    return Settings()
