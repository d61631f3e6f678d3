from __future__ import annotations

import math
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from asgl.models.privacy import PrivacyLedger


class Component(str, Enum):
    """The four alternating training components, in execution order."""

    D_POS = "D+"
    G_POS = "G+"
    D_NEG = "D-"
    G_NEG = "G-"

    def __str__(self) -> str:
        return self.value

    @property
    def is_discriminator(self) -> bool:
        return self in (Component.D_POS, Component.D_NEG)


class TrainReport(BaseModel):
    """Outcome of one training run. Contains no wall-clock data so reruns compare equal."""

    ledger: PrivacyLedger
    steps: Dict[str, int] = Field(default_factory=lambda: {str(c): 0 for c in Component})
    epochs_completed: int = 0
    stopped_early: bool = False
    spent_delta: float = 0.0
    stop_delta: Optional[float] = None
    epsilon: float = 0.0
    best_alpha: Optional[float] = None
    loss_traces: Dict[str, List[float]] = Field(default_factory=lambda: {str(c): [] for c in Component})
    skipped_signs: List[str] = Field(default_factory=list)
    config_hash: str = ""

    @field_validator("epsilon")
    def finite_epsilon(cls, v: float) -> float:
        if math.isnan(v):
            raise ValueError("epsilon cannot be NaN")
        return v


class EvalRecord(BaseModel):
    """One line of the JSON-lines evaluation output."""

    metric: str
    value: float
    config_hash: str
    seed: int
    variant: str = "full"
    std: Optional[float] = None
    repeats: int = 1


class EvalReport(BaseModel):
    auc: Optional[float] = Field(None, ge=0.0, le=1.0)
    ssi: Optional[float] = Field(None, ge=0.0)
    attack_auc: Optional[float] = Field(None, ge=0.0, le=1.0)
    variant: str = "full"
    config_hash: str = ""
    seed: int = 0
    metadata: Dict[str, Any] = Field(default_factory=dict)

    def metrics(self) -> Dict[str, float]:
        out = {"auc": self.auc, "ssi": self.ssi, "attack_auc": self.attack_auc}
        return {k: v for k, v in out.items() if v is not None}

    def records(self) -> List[EvalRecord]:
        return [
            EvalRecord(
                metric=name,
                value=value,
                config_hash=self.config_hash,
                seed=self.seed,
                variant=self.variant,
            )
            for name, value in self.metrics().items()
        ]


class RunManifest(BaseModel):
    """Everything needed to reproduce a run directory."""

    model_config = ConfigDict(validate_assignment=True)

    command: str
    argv: List[str] = Field(default_factory=list)
    graph_path: Optional[str] = None
    config_path: Optional[str] = None
    overrides: Dict[str, Any] = Field(default_factory=dict)
    seed: int = 0
    split_seed: Optional[int] = None
    test_fraction: Optional[float] = None
    config_hash: str = ""
    git_describe: str = "unknown"
    started_at: datetime = Field(default_factory=lambda: datetime.now(timezone.utc))
    finished_at: Optional[datetime] = None
    status: str = "running"
    artifacts: Dict[str, str] = Field(default_factory=dict)

    def finish(self, status: str = "ok") -> None:
        self.finished_at = datetime.now(timezone.utc)
        self.status = status
