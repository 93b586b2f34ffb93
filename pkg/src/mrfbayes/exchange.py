"""Exchange-type theta updates that cancel the intractable normaliser of the field."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .gibbs import _seed, _tally, prior_target, run_sweeps
from .models import ModelError, Prior


@dataclass(frozen=True)
class ExchangeConfig:
    """Auxiliary-simulation settings shared by DA, EMPMCMC and standalone exchange.

    ``s`` is the random-walk variance per component (scalar or one per
    component). ``u_init`` is "y" (restart every iteration from the data) or
    "previous" (warm start from the last auxiliary draw). ``exact_aux`` replaces
    the M sweeps with an exact enumeration draw; tiny models only.
    """

    M: int = 1000
    K: int = 0
    s: float | tuple = 1.0
    u_init: str = "y"
    exact_aux: bool = False

    def __post_init__(self):
        if self.M < 1:
            raise ModelError("M must be >= 1")
        if self.K < 0:
            raise ModelError("K must be >= 0")
        if np.any(np.asarray(self.s, dtype=float) <= 0):
            raise ModelError("proposal variance s must be > 0")
        if self.u_init not in ("y", "previous"):
            raise ModelError(f"unknown u_init {self.u_init!r}")

    @property
    def sweeps_per_proposal(self) -> int:
        return 0 if self.exact_aux else self.M + self.K


def propose_theta(theta, s, rng, free=None) -> np.ndarray:
    """Gaussian random walk with variance s on each free component."""
    theta = np.asarray(theta, dtype=float)
    s = np.broadcast_to(np.asarray(s, dtype=float), theta.shape)
    if np.any(s <= 0):
        raise ModelError("proposal variance must be > 0")
    step = rng.normal(0.0, 1.0, theta.shape) * np.sqrt(s)
    if free is not None:
        step = np.where(free, step, 0.0)
    return theta + step


def simulate_auxiliary(theta_star, model, M: int, x0, rng) -> np.ndarray:
    if M < 1:
        raise ModelError("M must be >= 1")
    return run_sweeps(x0, prior_target(model, theta_star), M, rng, model)


def extended_bridge(u0, theta, theta_star, K: int, rng, model) -> tuple[np.ndarray, float]:
    """Carry u0 ~ gamma(.|theta*) through K bridging targets towards gamma(.|theta).

    Returns the final state and the accumulated log correction, which for K=0
    is log gamma(u0|theta) - log gamma(u0|theta*).
    """
    if K < 0:
        raise ModelError("K must be >= 0")
    tx, _ = model.split(theta)
    ts, _ = model.split(theta_star)
    h, J = model.prior_fields(tx)
    hs, Js = model.prior_fields(ts)
    u = np.array(model.check_state(u0), dtype=np.int8)
    ptr, nbr, _ = model.mrf.csr
    seed = _seed(rng) if K else 0
    corr = _kernels.bridge_sweeps(u, h, hs, J, Js, K, ptr, nbr, model.mrf.pairs, model.mrf.spin, seed)
    _tally(K)
    return u, float(corr)


def exchange_accept_log_ratio(theta, theta_star, x, y, log_correction, prior: Prior,
                              proposal_log_ratio: float = 0.0, model=None) -> float:
    """log of the exchange acceptance ratio.

    ``proposal_log_ratio`` is log q(theta|theta*) - log q(theta*|theta).
    """
    vals = np.r_[np.ravel(theta), np.ravel(theta_star), log_correction, proposal_log_ratio]
    if np.any(np.isnan(vals)):
        raise ModelError("NaN in exchange acceptance inputs")
    lp_star = prior.logpdf(theta_star)
    if lp_star == -np.inf:
        return -np.inf
    lp = prior.logpdf(theta)
    num = lp_star + float(model.log_unnorm_joint(x, y, theta_star))
    den = lp + float(model.log_unnorm_joint(x, y, theta))
    out = num - den + proposal_log_ratio + log_correction
    if np.isnan(out):
        raise ModelError("exchange acceptance ratio is NaN")
    return float(out)


def auxiliary_route(theta, theta_star, x0, config: ExchangeConfig, model, rng):
    """u ~ (approximately) f(.|theta*), then the bridge. Returns (u_K, log_correction)."""
    if config.exact_aux:
        from .oracle import enumerator

        u0 = enumerator(model).sample_prior(theta_star, rng)
        if config.K:
            raise ModelError("exact auxiliary draws are only supported with K=0")
    else:
        u0 = simulate_auxiliary(theta_star, model, config.M, x0, rng)
    return extended_bridge(u0, theta, theta_star, config.K, rng, model)


def exchange_mh_step(state, y, config: ExchangeConfig, model, prior: Prior, rng, u_prev=None):
    """One theta update with x held fixed.

    ``state`` is (theta, x); for directly observed data pass x = y.
    Returns (theta', accepted, diagnostics).
    """
    theta, x = state
    theta = np.asarray(theta, dtype=float)
    theta_star = propose_theta(theta, config.s, rng, prior.free)
    diag = {"theta_star": theta_star, "in_support": False, "log_alpha": -np.inf,
            "log_correction": 0.0, "u": u_prev}
    if prior.logpdf(theta_star) == -np.inf:
        return theta, False, diag
    x0 = u_prev if (config.u_init == "previous" and u_prev is not None) else y
    u, corr = auxiliary_route(theta, theta_star, x0, config, model, rng)
    log_alpha = exchange_accept_log_ratio(theta, theta_star, x, y, corr, prior, 0.0, model)
    diag.update(in_support=True, log_alpha=log_alpha, log_correction=corr, u=u)
    if np.log(rng.random()) < log_alpha:
        return theta_star, True, diag
    return theta, False, diag
