"""Pseudo-marginal theta samplers: IS baseline, marginal PMCMC and exchange-marginal PMCMC."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .exchange import ExchangeConfig, auxiliary_route, propose_theta
from .models import ModelError, Prior
from .smc import (ParticleSystem, ResamplePolicy, SmcFailure, draw_particle, hot_coupling_sequence,
                  smc_run, tempering_sequence)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PmcmcConfig:
    """``estimator``: "smc" (sequence + P), "importance" (N uniform draws) or "exact" (enumeration)."""

    P: int = 100
    sequence: str = "hot_coupling"
    T: int = 100
    exchange: ExchangeConfig = field(default_factory=ExchangeConfig)
    estimator: str = "smc"
    N: int = 10_000
    policy: ResamplePolicy = field(default_factory=ResamplePolicy)

    def __post_init__(self):
        if self.P < 1 or self.N < 1:
            raise ModelError("P and N must be >= 1")
        if self.sequence not in ("hot_coupling", "tempering"):
            raise ModelError(f"unknown target sequence {self.sequence!r}")
        if self.sequence == "tempering" and self.T < 2:
            raise ModelError("tempering needs T >= 2")
        if self.estimator not in ("smc", "importance", "exact"):
            raise ModelError(f"unknown estimator {self.estimator!r}")

    def n_targets(self, model) -> int:
        if self.sequence == "tempering":
            return self.T
        return len(model.mrf.pairs) - model.n_vars + 2

    def sweeps_per_estimate(self, model) -> int:
        return (self.n_targets(model) - 1) * self.P if self.estimator == "smc" else 0


def particles_for_budget(L: int, T: int) -> int:
    """P = floor(L / T): one SMC run then costs about as much as L Gibbs sweeps."""
    return max(1, L // T)


@dataclass
class PmcmcState:
    theta: np.ndarray
    x: np.ndarray
    log_phi_hat: float
    iteration: int = 0
    system: ParticleSystem | None = None
    u: np.ndarray | None = None


def is_log_evidence(theta, y, N: int, model, rng, prior: Prior | None = None, return_draw: bool = False):
    """log (1/N) sum_k p(theta) gamma(x_k, y | theta) / q(x_k), q uniform over states."""
    if N < 1:
        raise ModelError("N must be >= 1")
    vals = model.mrf.values.astype(np.int8)
    X = vals[rng.integers(0, 2, (N, model.n_vars))]
    lp = 0.0 if prior is None else prior.logpdf(theta)
    lw = model.log_unnorm_joint(X, y, theta) + lp + model.n_vars * np.log(2.0)
    est = float(logsumexp(lw) - np.log(N))
    if not return_draw:
        return est
    if not np.isfinite(est):
        raise SmcFailure("importance weights all vanished")
    W = np.exp(lw - logsumexp(lw))
    return est, ParticleSystem(X, W, est)


def estimate(theta, y, model, config: PmcmcConfig, prior: Prior, rng) -> tuple[float, np.ndarray, ParticleSystem]:
    """(log phi-hat, one latent draw, weighted population) at theta."""
    if config.estimator == "exact":
        from .oracle import enumerator

        en = enumerator(model)
        x = en.sample_posterior(theta, y, rng)
        lphi = en.log_evidence(theta, y, prior)
        return lphi, x, ParticleSystem(x[None, :], np.ones(1), lphi)
    if config.estimator == "importance":
        lphi, sys = is_log_evidence(theta, y, config.N, model, rng, prior, return_draw=True)
        return lphi, draw_particle(sys, rng), sys
    if config.sequence == "hot_coupling":
        seq = hot_coupling_sequence(None, theta, y, model, rng, prior)
    else:
        seq = tempering_sequence(theta, y, model, config.T, prior)
    sys, lphi = smc_run(seq, config.P, config.policy, rng)
    return lphi, draw_particle(sys, rng), sys


def init_state(theta0, y, model, config: PmcmcConfig, prior: Prior, rng) -> PmcmcState:
    theta0 = np.asarray(theta0, dtype=float)
    if prior.logpdf(theta0) == -np.inf:
        raise ModelError("initial theta lies outside the prior support")
    lphi, x, sys = estimate(theta0, y, model, config, prior, rng)
    return PmcmcState(theta0, x, lphi, 0, sys)


def _accept(state, theta_star, lphi_star, x_star, sys_star, log_alpha, rng, u=None):
    if np.log(rng.random()) < log_alpha:
        return PmcmcState(theta_star, x_star, lphi_star, state.iteration + 1, sys_star, u), True
    # the retained estimate must be carried over untouched
    return PmcmcState(state.theta, state.x, state.log_phi_hat, state.iteration + 1, state.system,
                      u if u is not None else state.u), False


def marginal_pmcmc_step(state: PmcmcState, y, config: PmcmcConfig, model, prior: Prior, rng):
    """Plain marginal PMCMC. Only valid when the field normaliser does not depend on theta."""
    theta_star = propose_theta(state.theta, config.exchange.s, rng, prior.free)
    info = {"theta_star": theta_star, "in_support": False, "failure": None}
    if prior.logpdf(theta_star) == -np.inf:
        return PmcmcState(state.theta, state.x, state.log_phi_hat, state.iteration + 1,
                          state.system, state.u), False, info
    info["in_support"] = True
    try:
        lphi, x, sys = estimate(theta_star, y, model, config, prior, rng)
    except SmcFailure as exc:
        log.warning("estimator failure at theta*=%s: %s", theta_star, exc)
        info["failure"] = str(exc)
        return PmcmcState(state.theta, state.x, state.log_phi_hat, state.iteration + 1,
                          state.system, state.u), False, info
    new, acc = _accept(state, theta_star, lphi, x, sys, lphi - state.log_phi_hat, rng)
    return new, acc, info


def empmcmc_step(state: PmcmcState, y, config: PmcmcConfig, model, prior: Prior, rng):
    """Exchange-marginal PMCMC: the auxiliary route cancels Z(theta*)/Z(theta)."""
    ex = config.exchange
    theta_star = propose_theta(state.theta, ex.s, rng, prior.free)
    info = {"theta_star": theta_star, "in_support": False, "failure": None, "log_correction": 0.0}
    if prior.logpdf(theta_star) == -np.inf:
        return PmcmcState(state.theta, state.x, state.log_phi_hat, state.iteration + 1,
                          state.system, state.u), False, info
    info["in_support"] = True
    x0 = state.u if (ex.u_init == "previous" and state.u is not None) else y
    u, corr = auxiliary_route(state.theta, theta_star, x0, ex, model, rng)
    info["log_correction"] = corr
    try:
        lphi, x, sys = estimate(theta_star, y, model, config, prior, rng)
    except SmcFailure as exc:
        log.warning("estimator failure at theta*=%s: %s", theta_star, exc)
        info["failure"] = str(exc)
        return PmcmcState(state.theta, state.x, state.log_phi_hat, state.iteration + 1,
                          state.system, u), False, info
    log_alpha = lphi - state.log_phi_hat + corr
    new, acc = _accept(state, theta_star, lphi, x, sys, log_alpha, rng, u)
    return new, acc, info


@dataclass
class ChainTrace:
    theta: np.ndarray
    s1_x: np.ndarray
    accepted: np.ndarray
    log_phi_hat: np.ndarray
    names: tuple = ()
    recycled_s1: np.ndarray | None = None
    n_in_support: int = 0
    failures: int = 0

    def __len__(self):
        return len(self.accepted)

    @property
    def acceptance_rate(self) -> float:
        return float(np.mean(self.accepted)) if len(self) else float("nan")

    def header(self) -> list[str]:
        d = self.theta.shape[1]
        return ["iter"] + [f"theta_{i + 1}" for i in range(d)] + ["s1_x", "accepted", "log_phi_hat"]

    def rows(self):
        for i in range(len(self)):
            yield ([i] + [repr(float(v)) for v in self.theta[i]]
                   + [repr(float(self.s1_x[i])), int(self.accepted[i]), repr(float(self.log_phi_hat[i]))])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(self.header())
            wr.writerows(self.rows())


def _s1(model, x) -> float:
    return float(model.stats(x)[..., 0])


def run_chain(kind: str, init, y, config, n_burn: int, n_keep: int, rng, model, prior: Prior,
              x0=None) -> ChainTrace:
    """Iterate one of the theta samplers; burn-in iterations are discarded.

    ``kind``: "da" (config is a DaConfig), "exchange" (ExchangeConfig, x = y
    observed directly), "empmcmc", "marginal" or "is_pseudo" (EMPMCMC with
    the importance estimator).
    """
    if n_burn < 0 or n_keep < 0:
        raise ModelError("n_burn and n_keep must be >= 0")
    d = model.n_theta
    theta_out = np.empty((n_keep, d))
    s1 = np.empty(n_keep)
    acc = np.zeros(n_keep, dtype=bool)
    lphi = np.full(n_keep, np.nan)
    recycled = np.full(n_keep, np.nan)
    trace = ChainTrace(theta_out, s1, acc, lphi, model.theta_names, recycled)
    if n_keep == 0 and n_burn == 0:
        return trace
    if kind == "exchange":
        from .exchange import exchange_mh_step

        theta = np.asarray(init, dtype=float)
        if prior.logpdf(theta) == -np.inf:
            raise ModelError("initial theta lies outside the prior support")
        y = np.asarray(y, dtype=np.int8)
        s1_y, u = _s1(model, y), None
        for i in range(n_burn + n_keep):
            theta, a, diag = exchange_mh_step((theta, y), y, config, model, prior, rng, u)
            u = diag["u"]
            trace.n_in_support += diag["in_support"]
            j = i - n_burn
            if j >= 0:
                theta_out[j], s1[j], acc[j] = theta, s1_y, a
        return trace
    if kind == "da":
        from .da import da_step

        theta = np.asarray(init, dtype=float)
        if prior.logpdf(theta) == -np.inf:
            raise ModelError("initial theta lies outside the prior support")
        x = np.array(y if x0 is None else x0, dtype=np.int8)
        u = None
        for i in range(n_burn + n_keep):
            theta, x, a, diag = da_step((theta, x), y, config, model, prior, rng, u)
            u = diag["u"]
            trace.n_in_support += diag["in_support"]
            j = i - n_burn
            if j >= 0:
                theta_out[j], s1[j], acc[j] = theta, _s1(model, x), a
        return trace
    if kind == "is_pseudo":
        from dataclasses import replace

        config = replace(config, estimator="importance")
        kind = "empmcmc"
    if kind not in ("empmcmc", "marginal"):
        raise ModelError(f"unknown chain kind {kind!r}")
    step = empmcmc_step if kind == "empmcmc" else marginal_pmcmc_step
    state = init_state(init, y, model, config, prior, rng)
    if x0 is not None:
        state.x = np.array(x0, dtype=np.int8)

    def pooled(sys):
        return float(sys.weights @ model.stats(sys.X)[:, 0])

    rec = pooled(state.system)
    for i in range(n_burn + n_keep):
        state, a, info = step(state, y, config, model, prior, rng)
        trace.n_in_support += info["in_support"]
        trace.failures += info["failure"] is not None
        if a:
            rec = pooled(state.system)
        j = i - n_burn
        if j >= 0:
            theta_out[j], s1[j], acc[j], lphi[j] = state.theta, _s1(model, state.x), a, state.log_phi_hat
            recycled[j] = rec
    return trace
