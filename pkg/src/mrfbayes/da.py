"""Data augmentation: exchange update of theta given x, then Gibbs sweeps on x."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exchange import ExchangeConfig, exchange_mh_step
from .gibbs import posterior_target, run_sweeps
from .models import ModelError, Prior


@dataclass(frozen=True)
class DaConfig:
    L: int = 1000
    exchange: ExchangeConfig = field(default_factory=ExchangeConfig)

    def __post_init__(self):
        if self.L < 1:
            raise ModelError("L must be >= 1")


def da_step(state, y, config: DaConfig, model, prior: Prior, rng, u_prev=None):
    """Returns (theta', x', accepted, diagnostics)."""
    theta, x = state
    theta, accepted, diag = exchange_mh_step((theta, x), y, config.exchange, model, prior, rng, u_prev)
    x = run_sweeps(x, posterior_target(model, theta, y), config.L, rng, model)
    return np.asarray(theta, dtype=float), x, accepted, diag
