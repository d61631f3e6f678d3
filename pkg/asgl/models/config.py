from __future__ import annotations

import hashlib
from pathlib import Path
from typing import Any, Mapping, Optional, Union

from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from asgl.exceptions import DomainError, InvalidConfigError


def receptive_field_size(n: int, l: int) -> int:
    """(n^(l+1) - 1) / (n - 1): the node count of a full n-ary tree of depth l."""
    if n < 1 or l < 0:
        raise DomainError(f"receptive field needs n >= 1 and l >= 0, got n={n}, l={l}")
    if n == 1:
        return l + 1
    return (n ** (l + 1) - 1) // (n - 1)


class DpConfig(BaseModel):
    """Privacy parameters of discriminator training."""

    model_config = ConfigDict(frozen=True)

    epsilon_target: float = Field(3.0, gt=0)
    delta: float = Field(1e-5, gt=0, lt=1)
    sigma: float = Field(1.0, gt=0)
    clip_c: float = Field(1.0, gt=0)
    path_count_n: int = Field(3, ge=1)
    path_len_l: int = Field(4, ge=1)
    batch_size_d: int = Field(256, ge=1)

    @property
    def receptive_field(self) -> int:
        """Largest number of stored subgraphs one node can occur in."""
        return receptive_field_size(self.path_count_n, self.path_len_l)


# Flat configuration keys (file and CLI) -> (section, field)
FLAT_KEYS: dict[str, tuple[str, str]] = {
    "epsilon": ("dp", "epsilon_target"),
    "delta": ("dp", "delta"),
    "sigma": ("dp", "sigma"),
    "clip": ("dp", "clip_c"),
    "paths_n": ("dp", "path_count_n"),
    "path_len_l": ("dp", "path_len_l"),
    "batch_d": ("dp", "batch_size_d"),
    "dim": ("train", "k"),
    "epochs": ("train", "n_epoch"),
    "iters": ("train", "n_iter"),
    "batch_g": ("train", "b_g"),
    "lr_d": ("train", "lr_d"),
    "lr_g": ("train", "lr_g"),
    "seed": ("train", "seed"),
}


class TrainConfig(BaseModel):
    """Inputs of one adversarial training run."""

    model_config = ConfigDict(frozen=True)

    dp: DpConfig = Field(default_factory=DpConfig)
    k: int = Field(128, ge=1)
    n_epoch: int = Field(50, ge=0)
    n_iter: int = Field(10, ge=1)
    b_g: int = Field(256, ge=1)
    lr_d: float = Field(0.05, gt=0)
    lr_g: float = Field(0.05, gt=0)
    seed: int = Field(0, ge=0)

    @field_validator("lr_d", "lr_g")
    def check_learning_rate(cls, v: float) -> float:
        if v > 10.0:
            raise ValueError("learning rate above 10 is certainly a typo")
        return v

    @property
    def b_d(self) -> int:
        return self.dp.batch_size_d

    @classmethod
    def from_flat(cls, values: Mapping[str, Any], base: Optional["TrainConfig"] = None) -> "TrainConfig":
        """Build a config from flat ``key=value`` pairs, layered over ``base``."""
        base = base or cls()
        dp = base.dp.model_dump()
        train = base.model_dump(exclude={"dp"})
        for key, value in values.items():
            if value is None:
                continue
            normalized = key.strip().lower().replace("-", "_")
            if normalized not in FLAT_KEYS:
                raise InvalidConfigError(f"unknown configuration key: {key}")
            section, field = FLAT_KEYS[normalized]
            (dp if section == "dp" else train)[field] = value
        try:
            return cls(dp=DpConfig(**dp), **train)
        except ValidationError as exc:
            raise InvalidConfigError(str(exc)) from exc

    @classmethod
    def from_file(
        cls, path: Union[str, Path], overrides: Optional[Mapping[str, Any]] = None
    ) -> "TrainConfig":
        """Read a flat dotenv-style file; ``overrides`` win over file values."""
        path = Path(path)
        if not path.exists():
            raise InvalidConfigError(f"config file not found: {path}")
        values: dict[str, Any] = dict(dotenv_values(path))
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_flat(values)

    def to_flat(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for key, (section, field) in FLAT_KEYS.items():
            out[key] = getattr(self.dp if section == "dp" else self, field)
        return out

    def write(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.write_text("".join(f"{k}={v}\n" for k, v in self.to_flat().items()), encoding="utf-8")
        return path

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form; identifies a configuration in reports."""
        return hashlib.sha256(self.model_dump_json().encode("utf-8")).hexdigest()[:16]
