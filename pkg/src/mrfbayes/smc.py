"""SMC samplers over sequences of MRF targets, with normalising-constant estimates."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .gibbs import GibbsTarget, sweep_batch
from .models import ModelError, Prior
from .trees import TreeField, spanning_tree_and_order


class SmcFailure(RuntimeError):
    """All incremental weights vanished (or became NaN) at some target."""


def _check_weights(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise ValueError("weights must be a non-empty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    s = w.sum()
    if s <= 0:
        raise ValueError("weights are all zero")
    return w / s


def ess(weights) -> float:
    w = _check_weights(weights)
    return float(1.0 / np.dot(w, w))


def stratified_resample(weights, rng, n: int | None = None) -> np.ndarray:
    """Ancestor indices: one uniform per stratum [p/n, (p+1)/n), inverted through the CDF."""
    w = _check_weights(weights)
    n = len(w) if n is None else n
    u = (np.arange(n) + rng.random(n)) / n
    cdf = np.cumsum(w)
    return np.minimum(np.searchsorted(cdf, u, side="right"), len(w) - 1)


@dataclass(frozen=True)
class ResamplePolicy:
    kind: str = "ess_threshold"
    fraction: float = 0.5

    def __post_init__(self):
        if self.kind not in ("ess_threshold", "every_target"):
            raise ValueError(f"unknown resampling policy {self.kind!r}")
        if not 0.0 < self.fraction <= 1.0:
            raise ValueError("ESS fraction must lie in (0, 1]")

    def should_resample(self, w) -> bool:
        return self.kind == "every_target" or ess(w) < self.fraction * len(w)


@dataclass
class ParticleSystem:
    X: np.ndarray
    weights: np.ndarray
    log_phi_hat: float
    ancestors: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)

    @property
    def ess(self) -> float:
        return ess(self.weights)

    def write_diagnostics(self, path) -> None:
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["target_index", "ess", "log_phi_hat_partial", "resampled"])
            for row in self.diagnostics:
                wr.writerow([row[0], repr(row[1]), repr(row[2]), int(row[3])])


def draw_particle(sys: ParticleSystem, rng) -> np.ndarray:
    w = _check_weights(sys.weights)
    return sys.X[rng.choice(len(w), p=w)].copy()


class TargetSequence:
    """pi_1..pi_T over the latent field; gamma_T = p(theta) gamma(x, y | theta)."""

    T: int

    def __init__(self, model):
        self.model = model

    def target(self, k: int) -> GibbsTarget:
        raise NotImplementedError

    def init(self, P: int, rng) -> tuple[np.ndarray, float]:
        """Exact draw of P particles from pi_1 and log of its normaliser."""
        raise NotImplementedError

    def log_gamma(self, k: int, X) -> np.ndarray:
        if not 1 <= k <= self.T:
            raise IndexError(f"target {k} outside 1..{self.T}")
        return self.target(k).log_density(self.model.mrf, X)

    def incremental_log_weight(self, X, k: int) -> np.ndarray:
        """log gamma_k(x) - log gamma_{k-1}(x) at the pre-move particles."""
        if not 2 <= k <= self.T:
            raise IndexError(f"incremental weight needs 2 <= k <= {self.T}")
        return self.log_gamma(k, X) - self.log_gamma(k - 1, X)

    def move(self, X, k: int, rng) -> None:
        sweep_batch(X, self.target(k), rng, self.model, 1)


def _destination(model, theta, y, prior: Prior | None):
    """(h, pair weights, constant) of log p(theta) + log gamma(x, y | theta)."""
    tx, ty = model.split(theta)
    h, J = model.prior_fields(tx)
    w = np.full(len(model.mrf.pairs), J)
    const = 0.0 if prior is None else prior.logpdf(theta)
    if not np.isfinite(const):
        raise ModelError("theta lies outside the prior support")
    if model.latent:
        hn, c = model.noise_fields(y, ty)
        h, const = h + hn, const + c
    return h, w, const


class HotCoupling(TargetSequence):
    """Spanning tree first, then the remaining pairs added one per target."""

    def __init__(self, model, theta, y, rng, prior: Prior | None = None, g=None):
        super().__init__(model)
        g = model.mrf.as_graph() if g is None else g
        self.h, self.w, self.const = _destination(model, theta, y, prior)
        self.tree, self.rest = spanning_tree_and_order(g, rng)
        self.T = len(self.rest) + 1
        # rank[e] = first target index at which pair e is present
        self.rank = np.empty(len(self.w), dtype=np.int64)
        self.rank[self.tree] = 1
        self.rank[self.rest] = np.arange(2, self.T + 1)

    def target(self, k: int) -> GibbsTarget:
        return GibbsTarget("hot_coupling", self.h, np.where(self.rank <= k, self.w, 0.0), self.const)

    def init(self, P, rng):
        tf = TreeField(self.model.n_vars, self.model.mrf.pairs[self.tree], self.w[self.tree],
                       self.h, self.model.mrf.spin)
        return tf.sample(P, rng), float(tf.log_z) + self.const

    def incremental_log_weight(self, X, k):
        if not 2 <= k <= self.T:
            raise IndexError(f"incremental weight needs 2 <= k <= {self.T}")
        e = self.rest[k - 2]
        i, j = self.model.mrf.pairs[e]
        return self.w[e] * X[:, i].astype(float) * X[:, j]


class Tempering(TargetSequence):
    """gamma_k = p(theta) gamma(x, y | theta)^b_k with b linear from 0 to 1."""

    def __init__(self, model, theta, y, T: int, prior: Prior | None = None):
        if T < 2:
            raise ModelError("tempering needs at least two targets")
        super().__init__(model)
        self.T = T
        self.h, self.w, c = _destination(model, theta, y, prior)
        self.log_prior = 0.0 if prior is None else prior.logpdf(theta)
        self.noise_const = c - self.log_prior
        self.betas = np.linspace(0.0, 1.0, T)

    def target(self, k):
        b = self.betas[k - 1]
        return GibbsTarget("tempering", b * self.h, b * self.w, self.log_prior + b * self.noise_const, beta=b)

    def init(self, P, rng):
        lo_hi = self.model.mrf.values.astype(np.int8)
        X = lo_hi[rng.integers(0, 2, (P, self.model.n_vars))]
        return X, self.log_prior + self.model.n_vars * np.log(2.0)

    def incremental_log_weight(self, X, k):
        if not 2 <= k <= self.T:
            raise IndexError(f"incremental weight needs 2 <= k <= {self.T}")
        db = self.betas[k - 1] - self.betas[k - 2]
        return db * (self.model.mrf.log_gamma(X, self.h, self.w) + self.noise_const)


def hot_coupling_sequence(g, theta, y, model, rng, prior: Prior | None = None) -> HotCoupling:
    return HotCoupling(model, theta, y, rng, prior, g)


def tempering_sequence(theta, y, model, T: int, prior: Prior | None = None) -> Tempering:
    return Tempering(model, theta, y, T, prior)


def smc_run(seq: TargetSequence, P: int, policy: ResamplePolicy | None, rng,
            keep_ancestors: bool = False) -> tuple[ParticleSystem, float]:
    """Weight with the pre-move particles, maybe resample, then one Gibbs sweep on pi_k."""
    if P < 1:
        raise ValueError("need at least one particle")
    policy = policy or ResamplePolicy()
    X, log_phi = seq.init(P, rng)
    log_w = np.full(P, -np.log(P))
    diag = [(1, float(P), float(log_phi), False)]
    ancestors = []
    for k in range(2, seq.T + 1):
        a = log_w + seq.incremental_log_weight(X, k)
        m = logsumexp(a)
        if not np.isfinite(m):
            raise SmcFailure(f"all particle weights vanished at target {k}")
        log_phi += m
        log_w = a - m
        W = np.exp(log_w)
        resampled = policy.should_resample(W)
        if resampled:
            idx = stratified_resample(W, rng)
            if keep_ancestors:
                ancestors.append(idx)
            X = X[idx]
            log_w = np.full(P, -np.log(P))
        diag.append((k, float(1.0 / np.sum(np.exp(2 * log_w))), float(log_phi), resampled))
        seq.move(X, k, rng)
    W = np.exp(log_w - logsumexp(log_w))
    return ParticleSystem(X, W, float(log_phi), ancestors, diag), float(log_phi)
