import logging
from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_FORMAT = "%(asctime)s [%(levelname)8s] %(message)s (%(filename)s:%(lineno)s)"
LOG_DATE_FORMAT = "%Y-%m-%d %H:%M:%S"


class Settings(BaseSettings):
    model_config = SettingsConfigDict(
        env_file=".env", env_file_encoding="utf-8", env_prefix="ASGL_", extra="ignore"
    )

    # Application
    APP_NAME: str = "asgl: private adversarial signed graph embedding"
    LOG_LEVEL: str = "INFO"
    SHOW_PROGRESS: bool = False

    # Directories
    DATA_DIR: Path = Path("./data")
    RUNS_DIR: Path = Path("./runs")

    # Evaluation protocol
    DEFAULT_TEST_FRACTION: float = 0.2
    DEFAULT_SPLIT_SEED: int = 0
    EVAL_REPEATS: int = 5
    EVAL_MAX_TRAIN_PAIRS: Optional[int] = 200_000

    # Logistic regression used by the evaluation harness
    LOGREG_L2: float = 1e-4
    LOGREG_MAX_ITERS: int = 500

    @field_validator("LOG_LEVEL", mode="before")
    def normalize_log_level(cls, v: str) -> str:
        level = str(v).upper()
        # logging.getLevelNamesMapping() is 3.11+; _nameToLevel is the same mapping on 3.10
        level_names = getattr(logging, "getLevelNamesMapping", lambda: dict(logging._nameToLevel))()
        if level not in level_names:
            raise ValueError(f"Unknown log level: {v}")
        return level

    @field_validator("DEFAULT_TEST_FRACTION")
    def check_test_fraction(cls, v: float) -> float:
        if not 0.0 < v < 1.0:
            raise ValueError("DEFAULT_TEST_FRACTION must lie in (0, 1)")
        return v

    def resolve_data_path(self, path: Path) -> Path:
        """Resolve a relative dataset path against DATA_DIR when it does not exist as given."""
        path = Path(path)
        if path.is_absolute() or path.exists():
            return path
        candidate = self.DATA_DIR / path
        return candidate if candidate.exists() else path


@lru_cache()
def get_settings() -> Settings:
    return Settings()


def configure_logging(level: Optional[str] = None) -> None:
    """Configure the root logger the same way the test runner formats log lines."""
    logging.basicConfig(
        level=(level or get_settings().LOG_LEVEL).upper(),
        format=LOG_FORMAT,
        datefmt=LOG_DATE_FORMAT,
        force=True,
    )


# Create a single instance of settings to be imported
settings = get_settings()
