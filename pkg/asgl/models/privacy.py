from __future__ import annotations

import math
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from asgl.models.graph import Sign


class LedgerSnapshot(BaseModel):
    """Accounting parameters frozen at the start of training."""

    model_config = ConfigDict(frozen=True)

    n_tr_pos: int = Field(ge=0)
    n_tr_neg: int = Field(ge=0)
    r_nl: int = Field(ge=1)
    b_d: int = Field(ge=1)
    sigma: float = Field(gt=0)

    def n_tr(self, sign: Sign) -> int:
        return self.n_tr_pos if sign is Sign.POSITIVE else self.n_tr_neg


class PrivacyLedger(BaseModel):
    """Accumulated RDP cost of discriminator training, one entry per order alpha.

    Per-step costs are stored per discriminator; the accumulated cost at an
    order is ``steps_pos * gamma_pos + steps_neg * gamma_neg``. Orders whose
    per-step cost overflowed are excluded when the ledger is opened.
    """

    model_config = ConfigDict(frozen=True)

    orders: Tuple[float, ...]
    gamma_pos: Tuple[float, ...]
    gamma_neg: Tuple[float, ...]
    steps_pos: int = Field(0, ge=0)
    steps_neg: int = Field(0, ge=0)
    snapshot: LedgerSnapshot

    @model_validator(mode="after")
    def check_orders(self) -> "PrivacyLedger":
        if not (len(self.orders) == len(self.gamma_pos) == len(self.gamma_neg)):
            raise ValueError("orders and per-step costs must have equal length")
        if any(a <= 1.0 for a in self.orders):
            raise ValueError("RDP orders must be strictly greater than 1")
        if any(not math.isfinite(g) or g < 0 for g in self.gamma_pos + self.gamma_neg):
            raise ValueError("per-step RDP costs must be finite and nonnegative")
        return self

    @property
    def steps_taken(self) -> int:
        return self.steps_pos + self.steps_neg

    @property
    def rdp_per_order(self) -> Tuple[float, ...]:
        return tuple(
            self.steps_pos * gp + self.steps_neg * gn
            for gp, gn in zip(self.gamma_pos, self.gamma_neg)
        )

    def gamma(self, sign: Sign) -> Tuple[float, ...]:
        return self.gamma_pos if sign is Sign.POSITIVE else self.gamma_neg

    def with_steps(self, steps_pos: int, steps_neg: int) -> "PrivacyLedger":
        return self.model_copy(update={"steps_pos": steps_pos, "steps_neg": steps_neg})
