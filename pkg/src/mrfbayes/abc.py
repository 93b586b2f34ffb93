"""Uniform-kernel ABC: summaries, ABC-MCMC moves and the adaptive-tolerance ABC-SMC sampler."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .gibbs import sweep_rows
from .models import ModelError, Prior
from .smc import stratified_resample

log = logging.getLogger(__name__)


class AbcFailure(RuntimeError):
    """No particle survives the requested tolerance."""


def summary_ising(y, g) -> np.ndarray:
    """(sum over lattice edges of y_i y_j, magnetisation)."""
    y = np.asarray(y, dtype=np.int64)
    if y.shape[-1] != g.node_count:
        raise ModelError("state length does not match graph")
    e = g.edges
    return np.stack([np.sum(y[..., e[:, 0]] * y[..., e[:, 1]], axis=-1), y.sum(axis=-1)], axis=-1).astype(float)


def summary_ergm(y, n: int) -> np.ndarray:
    from .models import ErgmModel

    return ErgmModel(n, latent=False).stats(y)


def abc_distance(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ModelError("summary vectors differ in dimension")
    return float(np.sqrt(np.sum((a - b) ** 2)))


def _noise_rows(X, theta_y, model, rng):
    p = 0.5 * (1.0 + np.tanh(np.asarray(theta_y, dtype=float)))[:, None]
    agree = rng.random(X.shape) < p
    flipped = -X if model.mrf.spin else 1 - X
    return np.where(agree, X, flipped).astype(np.int8)


def simulate_pseudo_batch(thetas, model, M_sim: int, y, rng, start: str = "y") -> np.ndarray:
    """Summaries of one pseudo-dataset per row of ``thetas``.

    x comes from M_sim prior sweeps started at y (``start="y"``) or at a
    uniformly random state (``start="random"``, flip-symmetric).
    """
    if M_sim < 1:
        raise ModelError("M_sim must be >= 1")
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if start == "y":
        X = np.repeat(np.asarray(y, dtype=np.int8)[None, :], len(thetas), axis=0)
    elif start == "random":
        X = model.mrf.values.astype(np.int8)[rng.integers(0, 2, (len(thetas), model.n_vars))]
    else:
        raise ModelError(f"unknown simulation start {start!r}")
    sweep_rows(X, thetas[:, : model.n_theta_x], rng, model, M_sim)
    if model.latent:
        X = _noise_rows(X, thetas[:, -1], model, rng)
    return model.summary(X)


def abc_simulate_pseudo(theta, model, M_sim: int, rng, y=None) -> np.ndarray:
    y = model.random_state(rng) if y is None else y
    return simulate_pseudo_batch(theta, model, M_sim, y, rng)[0]


def _propose(theta, cov, free, rng):
    d = theta.shape[-1]
    cov = np.asarray(cov, dtype=float)
    if cov.ndim < 2:
        cov = np.diag(np.broadcast_to(cov, (d,)))
    step = rng.multivariate_normal(np.zeros(d), cov, size=len(theta), method="eigh")
    return theta + np.where(free, step, 0.0)


def move_population(theta, summ, dist, s_obs, eps, cov, model, prior: Prior, M_sim, y, rng, start="y"):
    """One ABC-MH move per particle. Returns (theta, summ, dist, n_accepted, n_simulated)."""
    P = len(theta)
    prop = _propose(theta, cov, prior.free, rng)
    lp_old = np.array([prior.logpdf(t) for t in theta])
    lp_new = np.array([prior.logpdf(t) for t in prop])
    # prior-ratio test first; failures need no simulation
    with np.errstate(invalid="ignore"):
        ok = np.log(rng.random(P)) < lp_new - lp_old
    ok &= np.isfinite(lp_new)
    idx = np.flatnonzero(ok)
    theta, summ, dist = theta.copy(), summ.copy(), dist.copy()
    if len(idx) == 0:
        return theta, summ, dist, 0, 0
    s_new = simulate_pseudo_batch(prop[idx], model, M_sim, y, rng, start)
    d_new = np.sqrt(np.sum((s_new - s_obs) ** 2, axis=1))
    hit = d_new <= eps
    acc = idx[hit]
    theta[acc], summ[acc], dist[acc] = prop[acc], s_new[hit], d_new[hit]
    return theta, summ, dist, int(hit.sum()), len(idx)


def abc_mcmc_move(particle, y_summary, eps, proposal_cov, model, prior: Prior, rng, M_sim: int = 1000, y=None):
    """Single-particle ABC-MH step; ``particle`` is (theta, summary, distance)."""
    if eps < 0:
        raise ModelError("tolerance must be >= 0")
    theta, summ, d = particle
    y = model.random_state(rng) if y is None else y
    th, sm, ds, _, _ = move_population(np.atleast_2d(theta), np.atleast_2d(summ), np.atleast_1d(float(d)),
                                       np.asarray(y_summary, float), eps, proposal_cov, model, prior, M_sim, y, rng)
    return th[0], sm[0], float(ds[0])


def select_epsilon(dist, alive_fraction: float, cap: float = math.inf) -> tuple[float, bool]:
    """Smallest achieved distance keeping >= alive_fraction alive, capped at ``cap``.

    When the cap binds at a positive value (no progress possible at the
    requested fraction), fall back to the largest achieved distance strictly
    below the cap, or hold the cap when nothing lies below it. Returns
    (epsilon, fallback_used).
    """
    if not 0.0 < alive_fraction < 1.0:
        raise ModelError("alive_fraction must lie in (0, 1)")
    d = np.sort(np.asarray(dist, dtype=float))
    k = max(1, math.ceil(alive_fraction * len(d)))
    eps = float(d[k - 1])
    if eps < cap:
        return eps, False
    if cap == 0.0:
        return 0.0, False
    below = d[d < cap]
    if len(below) == 0:
        # hold the tolerance for another round of moves
        return float(cap), True
    return float(below[-1]), True


@dataclass
class AbcPopulation:
    theta: np.ndarray
    summaries: np.ndarray
    distance: np.ndarray
    epsilon: float
    n: int
    proposal_cov: np.ndarray
    alive: int
    acceptance_rate: float = float("nan")
    fallback: bool = False


@dataclass
class AbcResult:
    history: list = field(default_factory=list)
    sims: int = 0

    @property
    def final(self) -> AbcPopulation:
        return self.history[-1]

    @property
    def n_iterations(self) -> int:
        return len(self.history)

    def write_iterations(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["n", "epsilon", "alive_count", "acceptance_rate"])
            for p in self.history:
                wr.writerow([p.n, repr(p.epsilon), p.alive, repr(p.acceptance_rate)])

    def write_population(self, path) -> None:
        f = self.final
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow([f"theta_{i + 1}" for i in range(f.theta.shape[1])] + ["distance"])
            for t, d in zip(f.theta, f.distance):
                wr.writerow([repr(float(v)) for v in t] + [repr(float(d))])


def abc_smc_run(y, model, prior: Prior, rng, P: int = 10_000, eps1: float = 20.0, alive_fraction: float = 0.7,
                adapt_cov: bool = False, proposal_var=0.1, M_sim: int = 1000, max_iter: int = 200,
                final_moves: int = 0, sim_start: str = "y") -> AbcResult:
    """Adaptive ABC-SMC, resampling at every iteration, until the tolerance reaches 0.

    Iteration n picks epsilon_n, weights by the indicator d <= epsilon_n,
    resamples, and (unless epsilon_n = 0) moves every particle with ABC-MH at
    epsilon_n. With ``adapt_cov`` the move covariance is twice the weighted
    sample covariance of the population; otherwise ``proposal_var`` is used.
    """
    if P < 1:
        raise ModelError("P must be >= 1")
    if M_sim < 1:
        raise ModelError("M_sim must be >= 1")
    y = np.asarray(y, dtype=np.int8)
    s_obs = model.summary(y)
    res = AbcResult()
    theta = prior.sample(rng, P)
    summ = simulate_pseudo_batch(theta, model, M_sim, y, rng, sim_start)
    res.sims += P
    dist = np.sqrt(np.sum((summ - s_obs) ** 2, axis=1))
    eps_prev = math.inf
    fixed_cov = np.diag(np.broadcast_to(np.asarray(proposal_var, dtype=float), (model.n_theta,))) \
        if np.ndim(proposal_var) < 2 else np.asarray(proposal_var, dtype=float)
    for n in range(1, max_iter + 1):
        if n == 1:
            eps, fb = min(eps1, select_epsilon(dist, alive_fraction)[0]), False
        else:
            eps, fb = select_epsilon(dist, alive_fraction, eps_prev)
        w = (dist <= eps).astype(float)
        alive = int(w.sum())
        if alive == 0:
            raise AbcFailure(f"no particle alive at epsilon={eps} (iteration {n})")
        if fb:
            log.info("tolerance stalled at %s; forcing decrease to %s (%d alive)", eps_prev, eps, alive)
        if adapt_cov:
            cov = 2.0 * np.atleast_2d(np.cov(theta.T, aweights=w)) if alive > 1 else fixed_cov
            cov = np.where(np.outer(prior.free, prior.free), cov, 0.0)
        else:
            cov = fixed_cov
        idx = stratified_resample(w, rng)
        theta, summ, dist = theta[idx], summ[idx], dist[idx]
        pop = AbcPopulation(theta, summ, dist, eps, n, cov, alive, fallback=fb)
        res.history.append(pop)
        if eps == 0.0:
            n_acc = 0
            for _ in range(final_moves):
                theta, summ, dist, a, n_sim = move_population(theta, summ, dist, s_obs, 0.0, cov, model, prior,
                                                              M_sim, y, rng, sim_start)
                res.sims += n_sim
                n_acc += a
            if final_moves:
                pop.theta, pop.summaries, pop.distance = theta, summ, dist
                pop.acceptance_rate = n_acc / (P * final_moves)
            return res
        theta, summ, dist, n_acc, n_sim = move_population(theta, summ, dist, s_obs, eps, cov, model, prior,
                                                          M_sim, y, rng, sim_start)
        res.sims += n_sim
        pop.acceptance_rate = n_acc / P
        eps_prev = eps
    raise AbcFailure(f"tolerance did not reach 0 within {max_iter} iterations (last {eps_prev})")
