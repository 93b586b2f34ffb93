"""Brute-force enumeration on tiny models: exact normalisers, samples and posteriors."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

from .models import GraphStructure, IsingModel, ModelError, Prior, log_two_cosh

MAX_VARS = 20


def _enumerate_spins(n: int) -> np.ndarray:
    if n > MAX_VARS:
        raise ModelError(f"{n} binary variables is too many to enumerate (limit {MAX_VARS})")
    bits = (np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1
    return (2 * bits - 1).astype(np.int8)


def enumerate_log_z(g: GraphStructure, theta_x: float) -> float:
    """log sum_x exp(theta_x sum_edges x_i x_j) over all spin configurations of g."""
    X = _enumerate_spins(g.node_count).astype(np.int64)
    e = g.edges
    s = np.sum(X[:, e[:, 0]] * X[:, e[:, 1]], axis=1)
    vals, counts = np.unique(s, return_counts=True)
    return float(logsumexp(theta_x * vals, b=counts))


class Enumerator:
    """All states of a small model with their sufficient statistics."""

    def __init__(self, model):
        self.model = model
        self.states = model.all_states()
        self.stats = np.asarray(model.stats(self.states), dtype=float)
        self._stat_u, self._stat_inv, self._stat_cnt = np.unique(
            self.stats, axis=0, return_inverse=True, return_counts=True)

    def log_z(self, theta_x) -> float:
        return float(logsumexp(self._stat_u @ np.atleast_1d(theta_x), b=self._stat_cnt))

    def log_z_many(self, theta_x) -> np.ndarray:
        return logsumexp(np.atleast_2d(theta_x) @ self._stat_u.T, b=self._stat_cnt[None, :], axis=1)

    def _joint_table(self, y):
        # distinct (S(x), agree(x,y)) rows with multiplicities
        A = self.model.agreement(self.states, y)[:, None].astype(float)
        key = np.hstack([self.stats, A])
        u, cnt = np.unique(key, axis=0, return_counts=True)
        return u[:, :-1], u[:, -1], cnt

    def log_evidence(self, theta, y, prior: Prior | None = None) -> float:
        """log phi(theta, y) = log p(theta) + log sum_x gamma(x, y | theta)."""
        S, A, cnt = self._joint_table(y)
        tx, ty = self.model.split(theta)
        lp = prior.logpdf(theta) if prior is not None else 0.0
        if not self.model.latent:
            s = self.model.stats(y) @ tx
            return float(lp + s)
        return float(lp + logsumexp(S @ tx + ty * A, b=cnt) - self.model.n_vars * log_two_cosh(ty))

    def log_posterior_unnorm(self, thetas, y, prior: Prior) -> np.ndarray:
        """log p(theta) + log p(y | theta) for each row of ``thetas``."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        k = self.model.n_theta_x
        tx = thetas[:, :k]
        out = np.array([prior.logpdf(t) for t in thetas])
        out = out - self.log_z_many(tx)
        if self.model.latent:
            S, A, cnt = self._joint_table(y)
            ty = thetas[:, k]
            out += logsumexp(tx @ S.T + ty[:, None] * A[None, :], b=cnt[None, :], axis=1)
            out -= self.model.n_vars * log_two_cosh(ty)
        else:
            out += self.model.stats(y) @ tx.T
        return out

    def probs_prior(self, theta) -> np.ndarray:
        tx, _ = self.model.split(theta)
        lw = self.stats @ tx
        return np.exp(lw - logsumexp(lw))

    def probs_posterior(self, theta, y) -> np.ndarray:
        tx, ty = self.model.split(theta)
        lw = self.stats @ tx
        if self.model.latent:
            lw = lw + ty * self.model.agreement(self.states, y)
        return np.exp(lw - logsumexp(lw))

    def sample_prior(self, theta, rng, size=None):
        idx = rng.choice(len(self.states), size=size, p=self.probs_prior(theta))
        return self.states[idx].copy()

    def sample_posterior(self, theta, y, rng, size=None):
        idx = rng.choice(len(self.states), size=size, p=self.probs_posterior(theta, y))
        return self.states[idx].copy()

    def state_index(self, X) -> np.ndarray:
        """Row index into ``states`` of each state in X."""
        lo = self.model.mrf.values[0]
        bits = (np.atleast_2d(X) != lo).astype(np.int64)
        return bits @ (1 << np.arange(self.model.n_vars))


@lru_cache(maxsize=32)
def _cached_enumerator(key):
    model = key[0]
    return Enumerator(model)


def enumerator(model) -> Enumerator:
    return _cached_enumerator((model,))


@dataclass
class GridPosterior:
    axes: list
    log_density: np.ndarray
    density: np.ndarray

    def marginal(self, dim: int) -> np.ndarray:
        """Marginal density along ``dim`` (trapezoid over the other axes)."""
        d = self.density
        for ax in reversed(range(d.ndim)):
            if ax != dim:
                d = _trapz(d, self.axes[ax], ax)
        return d


def _trapz(values, axis_pts, ax):
    if len(axis_pts) == 1:
        return np.take(values, 0, axis=ax)
    return np.trapezoid(values, axis_pts, axis=ax)


def exact_posterior_grid(y, model, prior: Prior, axes) -> GridPosterior:
    """p(theta | y) on the tensor grid ``axes`` (one 1-D array per theta component)."""
    axes = [np.atleast_1d(np.asarray(a, dtype=float)) for a in axes]
    if len(axes) != model.n_theta:
        raise ModelError("need one grid axis per parameter")
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    flat = mesh.reshape(-1, model.n_theta)
    lp = enumerator(model).log_posterior_unnorm(flat, y, prior).reshape(mesh.shape[:-1])
    if not np.any(np.isfinite(lp)):
        raise ModelError("posterior is zero everywhere on the grid")
    dens = np.exp(lp - lp[np.isfinite(lp)].max())
    norm = dens
    for ax in reversed(range(dens.ndim)):
        norm = _trapz(norm, axes[ax], ax)
    return GridPosterior(axes, lp, dens / norm)


def binned_posterior(y, model, prior: Prior, edges, refine: int = 5) -> np.ndarray:
    """Posterior mass in each cell of the tensor grid with bin ``edges`` per parameter.

    Each cell is integrated with a ``refine``-point midpoint rule per axis.
    """
    sub = []
    for e in edges:
        e = np.asarray(e, dtype=float)
        w = np.diff(e)
        offs = (np.arange(refine) + 0.5) / refine
        sub.append((e[:-1, None] + w[:, None] * offs[None, :]).ravel())
    mesh = np.stack(np.meshgrid(*sub, indexing="ij"), axis=-1).reshape(-1, len(edges))
    lp = enumerator(model).log_posterior_unnorm(mesh, y, prior)
    shape = tuple(len(s) for s in sub)
    vol = np.ones(shape)
    for ax, e in enumerate(edges):
        w = np.repeat(np.diff(np.asarray(e, dtype=float)) / refine, refine)
        vol = vol * w.reshape([-1 if a == ax else 1 for a in range(len(edges))])
    mass = np.exp(lp - lp[np.isfinite(lp)].max()).reshape(shape) * vol
    for ax in range(len(edges)):
        new = list(mass.shape)
        new[ax:ax + 1] = [len(edges[ax]) - 1, refine]
        mass = mass.reshape(new).sum(axis=ax + 1)
    return mass / mass.sum()


def tv_distance(p, q) -> float:
    p, q = np.asarray(p, dtype=float).ravel(), np.asarray(q, dtype=float).ravel()
    return 0.5 * float(np.abs(p / p.sum() - q / q.sum()).sum())


def marginal_tv(samples, weights, mass, edges) -> list[float]:
    """TV between each binned sample marginal and the matching oracle marginal."""
    samples = np.atleast_2d(samples)
    out = []
    for d, e in enumerate(edges):
        hist, _ = np.histogram(samples[:, d], bins=e, weights=weights)
        m = mass.sum(axis=tuple(a for a in range(mass.ndim) if a != d))
        out.append(tv_distance(hist, m))
    return out


def ising_oracle_model(rows: int, cols: int, latent: bool = True) -> IsingModel:
    return IsingModel(rows, cols, latent=latent)
