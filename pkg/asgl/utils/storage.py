import hashlib
import logging
import subprocess
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from asgl.config import settings
from asgl.exceptions import MissingArtifactError

logger = logging.getLogger(__name__)

M = TypeVar("M", bound=BaseModel)

# Artifact file names inside a run directory
MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "config.env"
TRAIN_EDGES_FILE = "train_edges.txt"
TEST_EDGES_FILE = "test_edges.txt"
LEDGER_FILE = "ledger.json"
TRAIN_REPORT_FILE = "train_report.json"
EMBEDDINGS_FILE = "embeddings.txt"
ID_MAP_FILE = "id_map.txt"
EVAL_FILE = "eval.jsonl"


def generate_run_name(command: str, seed: int) -> str:
    """Timestamped directory name; never reused."""
    timestamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S%fZ")
    return f"{timestamp}-{command}-s{seed}"


def create_run_dir(command: str, seed: int, root: Optional[Path] = None) -> Path:
    """Create a fresh run directory under ``root`` (default RUNS_DIR). Existing runs are never touched."""
    root = Path(root or settings.RUNS_DIR)
    root.mkdir(parents=True, exist_ok=True)
    name = generate_run_name(command, seed)
    path = root / name
    suffix = 1
    while path.exists():
        path = root / f"{name}-{suffix}"
        suffix += 1
    path.mkdir()
    logger.info(f"Created run directory {path}")
    return path


def calculate_checksum(path: Union[str, Path]) -> str:
    """Calculate SHA-256 checksum of a file."""
    sha256 = hashlib.sha256()
    with Path(path).open("rb") as fh:
        while chunk := fh.read(8192):
            sha256.update(chunk)
    return sha256.hexdigest()


def checksum_artifacts(run_dir: Path, names: Iterable[str]) -> dict[str, str]:
    return {name: calculate_checksum(run_dir / name) for name in names if (run_dir / name).exists()}


def write_model(model: BaseModel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.write_text(model.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return path


def read_model(model_cls: Type[M], path: Union[str, Path]) -> M:
    path = Path(path)
    if not path.exists():
        raise MissingArtifactError(f"artifact not found: {path}")
    try:
        return model_cls.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as exc:
        raise MissingArtifactError(f"{path}: not a valid {model_cls.__name__}: {exc}") from exc


def append_json_lines(models: Iterable[BaseModel], path: Union[str, Path]) -> Path:
    path = Path(path)
    with path.open("a", encoding="utf-8") as fh:
        for model in models:
            fh.write(model.model_dump_json() + "\n")
    return path


def git_describe(cwd: Optional[Path] = None) -> str:
    """``git describe --always --dirty`` of the source tree, or "unknown"."""
    try:
        result = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            cwd=cwd or Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
            check=False,
        )
    except (OSError, subprocess.SubprocessError) as e:
        logger.debug(f"git describe failed: {e}")
        return "unknown"
    return result.stdout.strip() if result.returncode == 0 and result.stdout.strip() else "unknown"
