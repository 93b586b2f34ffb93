"""Single-site Gibbs kernels for prior, posterior and bridging targets."""

from __future__ import annotations

import contextvars
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .models import ModelError

#: Particles per seeded block in batch sweeps. Fixed so that results do not
#: depend on how blocks are distributed over worker threads.
BLOCK = 32

_DEBUG = False
_WORKERS = 1
_counter: contextvars.ContextVar[SweepCounter | None] = contextvars.ContextVar("sweeps", default=None)


def set_debug(flag: bool) -> None:
    """Recompute cached local fields from scratch after every sweep and compare."""
    global _DEBUG
    _DEBUG = bool(flag)


def set_workers(n: int) -> None:
    global _WORKERS
    if n < 1:
        raise ValueError("workers must be >= 1")
    _WORKERS = int(n)


class SweepCounter:
    """Counts single-state Gibbs sweeps performed while active."""

    def __init__(self):
        self.total = 0

    def add(self, n: int) -> None:
        self.total += int(n)


@contextmanager
def count_sweeps():
    c = SweepCounter()
    token = _counter.set(c)
    try:
        yield c
    finally:
        _counter.reset(token)


def _tally(n: int) -> None:
    c = _counter.get()
    if c is not None:
        c.add(n)


def _seed(rng) -> int:
    return int(rng.integers(0, 2**32 - 1))


@dataclass(frozen=True, eq=False)
class GibbsTarget:
    """A pairwise target: log pi(x) = h . v(x) + sum_e pair_w[e] v_i v_j (+ const)."""

    kind: str
    h: np.ndarray
    pair_w: np.ndarray
    const: float = 0.0
    beta: float | None = None

    def log_density(self, mrf, X) -> np.ndarray:
        return mrf.log_gamma(X, self.h, self.pair_w) + self.const


def _fields(model, theta_x, scale=1.0):
    h, J = model.prior_fields(theta_x)
    return scale * h, np.full(len(model.mrf.pairs), scale * J)


def prior_target(model, theta) -> GibbsTarget:
    tx, _ = model.split(theta)
    h, w = _fields(model, tx)
    return GibbsTarget("prior", h, w)


def posterior_target(model, theta, y) -> GibbsTarget:
    tx, ty = model.split(theta)
    h, w = _fields(model, tx)
    const = 0.0
    if model.latent:
        hn, const = model.noise_fields(y, ty)
        h = h + hn
    return GibbsTarget("posterior", h, w, const)


def bridge_target(model, theta, theta_star, beta: float) -> GibbsTarget:
    """gamma(.|theta*)^beta gamma(.|theta)^(1-beta) over the prior part only."""
    if not 0.0 <= beta <= 1.0:
        raise ModelError("bridge exponent must lie in [0, 1]")
    tx, _ = model.split(theta)
    ts, _ = model.split(theta_star)
    h, w = _fields(model, beta * ts + (1.0 - beta) * tx)
    return GibbsTarget("bridge", h, w, beta=beta)


def conditional_log_odds(k: int, x, target: GibbsTarget, model) -> float:
    """log p(x_k = hi | rest) / p(x_k = lo | rest) from the cliques touching k."""
    if not 0 <= k < model.n_vars:
        raise IndexError(f"site {k} out of range")
    ptr, nbr, nbr_pair = model.mrf.csr
    sl = slice(ptr[k], ptr[k + 1])
    f = float(np.dot(target.pair_w[nbr_pair[sl]], np.asarray(x, dtype=float)[nbr[sl]]))
    d = target.h[k] + f
    return 2.0 * d if model.mrf.spin else d


def _run(x, target, n, seed, model):
    ptr, nbr, nbr_pair = model.mrf.csr
    _kernels.sweeps(x, target.h, target.pair_w, ptr, nbr, nbr_pair, model.mrf.spin, n, seed, _DEBUG)


def gibbs_sweep(x, target: GibbsTarget, rng, model) -> np.ndarray:
    """One ascending-order pass, each site redrawn from its full conditional."""
    return run_sweeps(x, target, 1, rng, model)


def run_sweeps(x0, target: GibbsTarget, M: int, rng, model) -> np.ndarray:
    if M < 0:
        raise ModelError("number of sweeps must be >= 0")
    x = np.array(model.check_state(x0), dtype=np.int8)
    if M:
        _run(x, target, M, _seed(rng), model)
        _tally(M)
    return x


def sweep_batch(X, target: GibbsTarget, rng, model, n_sweeps: int = 1) -> None:
    """In-place sweeps on every row of X; deterministic for any worker count."""
    P = X.shape[0]
    if P == 0 or n_sweeps == 0:
        return
    ptr, nbr, nbr_pair = model.mrf.csr
    n_blocks = -(-P // BLOCK)
    seeds = rng.integers(0, 2**32 - 1, n_blocks)
    args = (target.h, target.pair_w, ptr, nbr, nbr_pair, model.mrf.spin, n_sweeps)

    def work(b):
        lo, hi = b * BLOCK, min(P, (b + 1) * BLOCK)
        _kernels.sweeps_block(X, lo, hi, *args, int(seeds[b]), _DEBUG)

    if _WORKERS == 1 or n_blocks == 1:
        for b in range(n_blocks):
            work(b)
    else:
        with ThreadPoolExecutor(_WORKERS) as ex:
            list(ex.map(work, range(n_blocks)))
    _tally(P * n_sweeps)


def sweep_rows(X, theta_x, rng, model, n_sweeps: int) -> None:
    """In-place prior sweeps where row p of X uses its own theta_x[p]."""
    P = X.shape[0]
    if P == 0 or n_sweeps == 0:
        return
    a, J = model.batch_prior_fields(theta_x)
    ptr, nbr, _ = model.mrf.csr
    n_blocks = -(-P // BLOCK)
    seeds = rng.integers(0, 2**32 - 1, n_blocks)

    def work(b):
        lo, hi = b * BLOCK, min(P, (b + 1) * BLOCK)
        _kernels.sweeps_rows(X, lo, hi, a, J, ptr, nbr, model.mrf.spin, n_sweeps, int(seeds[b]))

    if _WORKERS == 1 or n_blocks == 1:
        for b in range(n_blocks):
            work(b)
    else:
        with ThreadPoolExecutor(_WORKERS) as ex:
            list(ex.map(work, range(n_blocks)))
    _tally(P * n_sweeps)
