import os
from pathlib import Path
from typing import Dict, List, Optional

from dotenv import load_dotenv
from pydantic import BaseModel, Field

from carleman import __version__

load_dotenv()


def _default_threads() -> int:
    raw = os.getenv("CARLEMAN_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            pass
    return os.cpu_count() or 1


class Settings(BaseModel):
    """Process-wide settings read from the environment (and a local .env file)."""

    threads: int = Field(default_factory=_default_threads)
    log_level: str = Field(
        default_factory=lambda: os.getenv("CARLEMAN_LOG_LEVEL", "INFO").upper()
    )
    out_dir: Path = Field(
        default_factory=lambda: Path(os.getenv("CARLEMAN_OUT_DIR", "runs"))
    )


def get_settings() -> Settings:
    return Settings()


class NumericsConfig(BaseModel):
    """Configuration for truncation lengths, grids and tolerances."""

    K: int = 256
    tol: float = 1e-9
    grid: int = 512
    eps0: float = 0.4
    levels: int = 5
    dcap: int = 40
    interval_samples: int = 401
    boundary_samples: int = 1024
    min_gap_cells: int = 8
    chunk: int = 2048

    def eps_list(self) -> List[float]:
        return [self.eps0 * 2.0 ** (-i) for i in range(self.levels)]


class RunConfig(BaseModel):
    """Everything needed to re-execute a CLI command; serialized as the run manifest."""

    command: str
    inputs: Dict[str, Optional[str]] = Field(default_factory=dict)
    options: Dict[str, str] = Field(default_factory=dict)
    numerics: NumericsConfig = Field(default_factory=NumericsConfig)
    out_dir: Path = Path("runs")
    version: str = __version__

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, json_str: str) -> "RunConfig":
        return cls.model_validate_json(json_str)
