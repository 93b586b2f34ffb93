"""Latent binary MRF model families: the noisy Ising lattice and the noisy ERGM.

Both families are exponential families in the hidden field x,

    log gamma(x | theta_x) = theta_x . S(x)

observed through a factorised, normalised noise channel

    log g(y | x, theta_y) = theta_y * agree(x, y) - T * log(exp(theta_y) + exp(-theta_y)).

For sampling purposes each model also exposes itself as a binary pairwise MRF
(unary fields + one shared pair coupling), which is what the Gibbs, tree and
SMC machinery operates on.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from pathlib import Path

import numpy as np


class ModelError(ValueError):
    """Raised on malformed states, parameters or graphs."""


# ---------------------------------------------------------------------------
# graphs
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GraphStructure:
    node_count: int
    edges: np.ndarray
    kind: str = "general"
    shape: tuple[int, int] | None = None

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        if self.node_count < 1:
            raise ModelError("node_count must be positive")
        if len(edges):
            if np.any(edges[:, 0] >= edges[:, 1]):
                raise ModelError("edges must be ordered pairs (i, j) with i < j")
            if edges.max() >= self.node_count:
                raise ModelError("edge index out of range")
            if len({tuple(e) for e in edges.tolist()}) != len(edges):
                raise ModelError("duplicate edge")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def lattice(cls, rows: int, cols: int) -> GraphStructure:
        idx = np.arange(rows * cols).reshape(rows, cols)
        horiz = np.stack([idx[:, :-1].ravel(), idx[:, 1:].ravel()], axis=1)
        vert = np.stack([idx[:-1, :].ravel(), idx[1:, :].ravel()], axis=1)
        edges = np.concatenate([horiz, vert])
        edges = edges[np.lexsort((edges[:, 1], edges[:, 0]))]
        return cls(rows * cols, edges, kind="lattice2d", shape=(rows, cols))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def is_connected(self) -> bool:
        parent = list(range(self.node_count))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for i, j in self.edges.tolist():
            parent[find(i)] = find(j)
        return len({find(a) for a in range(self.node_count)}) == 1


@dataclass(frozen=True, eq=False)
class PairwiseMRF:
    """Binary pairwise MRF skeleton: sites, pairs and CSR adjacency."""

    n_vars: int
    pairs: np.ndarray
    spin: bool

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n, pairs = self.n_vars, self.pairs
        deg = np.bincount(pairs.ravel(), minlength=n)
        ptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(deg, out=ptr[1:])
        nbr = np.empty(2 * len(pairs), dtype=np.int64)
        nbr_pair = np.empty(2 * len(pairs), dtype=np.int64)
        fill = ptr[:-1].copy()
        for e, (i, j) in enumerate(pairs.tolist()):
            nbr[fill[i]], nbr_pair[fill[i]] = j, e
            fill[i] += 1
            nbr[fill[j]], nbr_pair[fill[j]] = i, e
            fill[j] += 1
        return ptr, nbr, nbr_pair

    @property
    def values(self) -> np.ndarray:
        return np.array([-1.0, 1.0]) if self.spin else np.array([0.0, 1.0])

    def as_graph(self) -> GraphStructure:
        return GraphStructure(self.n_vars, self.pairs)

    def log_gamma(self, X, h, pair_w) -> np.ndarray:
        """Unnormalised log density for one state or a batch of states (rows)."""
        X = np.asarray(X, dtype=np.float64)
        a, b = self.pairs[:, 0], self.pairs[:, 1]
        pair_w = np.broadcast_to(np.asarray(pair_w, dtype=np.float64), (len(self.pairs),))
        return X @ h + (X[..., a] * X[..., b]) @ pair_w


# ---------------------------------------------------------------------------
# priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ModelError("uniform prior needs lo < hi")

    def logpdf(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.lo) & (t <= self.hi)
        return np.where(inside, -np.log(self.hi - self.lo), -np.inf)

    def sample(self, rng, size=None):
        return rng.uniform(self.lo, self.hi, size)

    def to_dict(self):
        return {"uniform": [self.lo, self.hi]}


@dataclass(frozen=True)
class Gaussian:
    mean: float
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ModelError("gaussian prior needs variance > 0")

    def logpdf(self, t):
        t = np.asarray(t, dtype=float)
        return -0.5 * np.log(2 * np.pi * self.variance) - 0.5 * (t - self.mean) ** 2 / self.variance

    def sample(self, rng, size=None):
        return rng.normal(self.mean, np.sqrt(self.variance), size)

    def to_dict(self):
        return {"gaussian": [self.mean, self.variance]}


@dataclass(frozen=True)
class Fixed:
    """Point mass; the component is held constant by every proposal."""

    value: float

    def logpdf(self, t):
        t = np.asarray(t, dtype=float)
        return np.where(t == self.value, 0.0, -np.inf)

    def sample(self, rng, size=None):
        return np.full(size, self.value) if size is not None else self.value

    def to_dict(self):
        return {"fixed": self.value}


def prior_component(spec) -> Uniform | Gaussian | Fixed:
    if isinstance(spec, (Uniform, Gaussian, Fixed)):
        return spec
    if not isinstance(spec, dict) or len(spec) != 1:
        raise ModelError(f"bad prior component: {spec!r}")
    (kind, args), = spec.items()
    if kind == "uniform":
        return Uniform(*map(float, args))
    if kind == "gaussian":
        return Gaussian(*map(float, args))
    if kind == "fixed":
        return Fixed(float(args))
    raise ModelError(f"unknown prior kind {kind!r}")


@dataclass(frozen=True)
class Prior:
    components: tuple

    def __init__(self, components):
        object.__setattr__(self, "components", tuple(prior_component(c) for c in components))

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def free(self) -> np.ndarray:
        return np.array([not isinstance(c, Fixed) for c in self.components])

    def logpdf(self, theta) -> float:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.dim,):
            raise ModelError(f"theta has shape {theta.shape}, prior has dim {self.dim}")
        if not np.all(np.isfinite(theta)):
            return -np.inf
        return float(sum(c.logpdf(t) for c, t in zip(self.components, theta)))

    def sample(self, rng, size: int) -> np.ndarray:
        return np.column_stack([np.broadcast_to(c.sample(rng, size), (size,)) for c in self.components])

    def to_list(self):
        return [c.to_dict() for c in self.components]


# ---------------------------------------------------------------------------
# model families
# ---------------------------------------------------------------------------


def log_two_cosh(t):
    return np.logaddexp(t, -t)


class _Model:
    """Shared behaviour; subclasses define the statistic and the encoding."""

    kind: str
    mrf: PairwiseMRF
    latent: bool
    n_theta_x: int

    @property
    def n_vars(self) -> int:
        return self.mrf.n_vars

    @property
    def n_theta(self) -> int:
        return self.n_theta_x + (1 if self.latent else 0)

    @property
    def theta_names(self) -> tuple[str, ...]:
        return self.theta_x_names + (("theta_y",) if self.latent else ())

    def check_state(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape[-1] != self.n_vars:
            raise ModelError(f"state has {x.shape[-1]} entries, model has {self.n_vars}")
        return x

    def split(self, theta) -> tuple[np.ndarray, float | None]:
        theta = np.asarray(theta, dtype=float).ravel()
        if theta.shape != (self.n_theta,):
            raise ModelError(f"theta has {theta.size} entries, model expects {self.n_theta}")
        return theta[: self.n_theta_x], (float(theta[-1]) if self.latent else None)

    def log_prior_unnorm(self, x, theta_x) -> float | np.ndarray:
        theta_x = np.atleast_1d(np.asarray(theta_x, dtype=float))
        if theta_x.shape != (self.n_theta_x,):
            raise ModelError(f"theta_x must have {self.n_theta_x} entries")
        return self.stats(x) @ theta_x

    def agreement(self, x, y):
        x, y = self.check_state(x), self.check_state(y)
        if x.shape[-1] != y.shape[-1]:
            raise ModelError("x and y differ in length")
        return np.sum(self._signed(x) * self._signed(y), axis=-1)

    def log_noise(self, x, y, theta_y: float):
        n = self.check_state(y).shape[-1]
        return theta_y * self.agreement(x, y) - n * log_two_cosh(theta_y)

    def log_unnorm_joint(self, x, y, theta):
        """log gamma(x|theta_x) + log g(y|x,theta_y); just the first term if unobserved noise-free."""
        tx, ty = self.split(theta)
        out = self.log_prior_unnorm(x, tx)
        if self.latent:
            out = out + self.log_noise(x, y, ty)
        return out

    # pairwise-MRF view --------------------------------------------------

    def prior_fields(self, theta_x) -> tuple[np.ndarray, float]:
        """(unary field h, pair coupling J) of gamma(x | theta_x)."""
        raise NotImplementedError

    def noise_fields(self, y, theta_y: float) -> tuple[np.ndarray, float]:
        """(unary field, additive constant) such that log g(y|x) = field . x + const."""
        raise NotImplementedError

    def random_state(self, rng) -> np.ndarray:
        v = self.mrf.values.astype(np.int8)
        return v[rng.integers(0, 2, self.n_vars)]

    def sample_noise(self, x, theta_y: float, rng) -> np.ndarray:
        """Exact draw of y ~ g(. | x, theta_y): each site agrees w.p. 1/(1+exp(-2 theta_y))."""
        x = self.check_state(x)
        p_agree = 0.5 * (1.0 + np.tanh(theta_y))
        agree = rng.random(x.shape) < p_agree
        flipped = -x if self.mrf.spin else 1 - x
        return np.where(agree, x, flipped).astype(np.int8)

    def summary(self, y) -> np.ndarray:
        raise NotImplementedError

    def all_states(self) -> np.ndarray:
        n = self.n_vars
        if n > 20:
            raise ModelError(f"{n} binary variables is too many to enumerate (limit 20)")
        bits = ((np.arange(2**n)[:, None] >> np.arange(n)[None, :]) & 1).astype(np.int8)
        return self.mrf.values.astype(np.int8)[bits]


class IsingModel(_Model):
    """Ising field on a rows x cols 4-neighbour lattice, spins in {-1, +1}."""

    kind = "ising"
    n_theta_x = 1
    theta_x_names = ("theta_x",)

    def __init__(self, rows: int, cols: int, latent: bool = True):
        if rows < 1 or cols < 1:
            raise ModelError("lattice dimensions must be positive")
        self.rows, self.cols, self.latent = rows, cols, latent
        self.graph = GraphStructure.lattice(rows, cols)
        self.mrf = PairwiseMRF(rows * cols, self.graph.edges, spin=True)

    def _signed(self, x):
        return np.asarray(x, dtype=np.int64)

    def stats(self, x):
        x = self.check_state(x).astype(np.int64)
        e = self.graph.edges
        return np.sum(x[..., e[:, 0]] * x[..., e[:, 1]], axis=-1)[..., None].astype(float)

    def prior_fields(self, theta_x):
        return np.zeros(self.n_vars), float(np.atleast_1d(theta_x)[0])

    def batch_prior_fields(self, theta_x):
        tx = np.asarray(theta_x, dtype=float).reshape(-1, 1)
        return np.zeros(len(tx)), tx[:, 0].copy()

    def noise_fields(self, y, theta_y):
        y = self.check_state(y).astype(float)
        return theta_y * y, -self.n_vars * float(log_two_cosh(theta_y))

    def summary(self, y):
        y = self.check_state(y)
        return np.array([self.stats(y)[..., 0], np.sum(y, axis=-1)], dtype=float).T

    def describe(self) -> dict:
        return {"model": "ising", "rows": self.rows, "cols": self.cols, "latent": self.latent}


def edge_index(n: int) -> np.ndarray:
    """Canonical lexicographic (i < j) edge list of the complete graph on n nodes."""
    return np.array(list(combinations(range(n), 2)), dtype=np.int64).reshape(-1, 2)


class ErgmModel(_Model):
    """Edges + two-stars ERGM on undirected graphs, edge indicators in {0, 1}.

    ``two_star="standard"`` counts sum_k C(deg_k, 2). ``"literal"`` counts
    sum_k sum_{i<j<k} x_ik x_jk, i.e. only pairs of edges meeting at their
    shared larger endpoint.
    """

    kind = "ergm"
    n_theta_x = 2
    theta_x_names = ("theta_1", "theta_2")

    def __init__(self, node_count: int, latent: bool = True, two_star: str = "standard"):
        if node_count < 2:
            raise ModelError("an ERGM needs at least two nodes")
        if two_star not in ("standard", "literal"):
            raise ModelError(f"unknown two-star variant {two_star!r}")
        self.node_count, self.latent, self.two_star = node_count, latent, two_star
        self.edges = edge_index(node_count)
        incident = [[] for _ in range(node_count)]
        for e, (i, j) in enumerate(self.edges.tolist()):
            incident[i].append(e)
            incident[j].append(e)
        pairs = []
        for k, es in enumerate(incident):
            for e, f in combinations(es, 2):
                if two_star == "literal" and (max(self.edges[e]) != k or max(self.edges[f]) != k):
                    continue
                pairs.append((min(e, f), max(e, f)))
        pairs = np.array(sorted(pairs), dtype=np.int64).reshape(-1, 2)
        self.mrf = PairwiseMRF(len(self.edges), pairs, spin=False)

    def _signed(self, x):
        return 2 * np.asarray(x, dtype=np.int64) - 1

    @cached_property
    def incidence(self) -> np.ndarray:
        B = np.zeros((len(self.edges), self.node_count), dtype=np.int64)
        B[np.arange(len(self.edges)), self.edges[:, 0]] = 1
        B[np.arange(len(self.edges)), self.edges[:, 1]] = 1
        return B

    def degrees(self, x) -> np.ndarray:
        return self.check_state(x).astype(np.int64) @ self.incidence

    def stats(self, x):
        x = self.check_state(x).astype(np.int64)
        s1 = x.sum(axis=-1)
        if self.two_star == "standard":
            deg = self.degrees(x)
            s2 = (deg * (deg - 1) // 2).sum(axis=-1)
        else:
            p = self.mrf.pairs
            s2 = np.sum(x[..., p[:, 0]] * x[..., p[:, 1]], axis=-1)
        return np.stack([s1, s2], axis=-1).astype(float)

    def prior_fields(self, theta_x):
        t1, t2 = np.asarray(theta_x, dtype=float)
        return np.full(self.n_vars, t1), float(t2)

    def batch_prior_fields(self, theta_x):
        tx = np.asarray(theta_x, dtype=float).reshape(-1, 2)
        return tx[:, 0].copy(), tx[:, 1].copy()

    def noise_fields(self, y, theta_y):
        sy = self._signed(self.check_state(y)).astype(float)
        return 2.0 * theta_y * sy, float(-theta_y * sy.sum() - self.n_vars * log_two_cosh(theta_y))

    def summary(self, y):
        return self.stats(y)

    def describe(self) -> dict:
        return {"model": "ergm", "node_count": self.node_count, "latent": self.latent,
                "two_star": self.two_star}

    def adjacency(self, x) -> np.ndarray:
        A = np.zeros((self.node_count, self.node_count), dtype=np.int8)
        sel = self.edges[np.asarray(x) == 1]
        A[sel[:, 0], sel[:, 1]] = A[sel[:, 1], sel[:, 0]] = 1
        return A


def ergm_stats(x, n: int, two_star: str = "standard") -> tuple[int, int]:
    s = ErgmModel(n, latent=False, two_star=two_star).stats(x)
    return int(s[0]), int(s[1])


def ising_log_unnorm_prior(x, theta_x: float, g: GraphStructure) -> float:
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (g.node_count,):
        raise ModelError("state length does not match graph")
    e = g.edges
    return float(theta_x * np.sum(x[e[:, 0]] * x[e[:, 1]]))


def ising_log_noise(x, y, theta_y: float) -> float:
    x, y = np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64)
    if x.shape != y.shape:
        raise ModelError("x and y differ in length")
    return float(theta_y * np.sum(x * y) - len(x) * log_two_cosh(theta_y))


def ergm_log_noise(x, y, theta_y: float) -> float:
    x, y = np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64)
    if x.shape != y.shape:
        raise ModelError("x and y differ in length")
    return float(theta_y * np.sum((2 * x - 1) * (2 * y - 1)) - len(x) * log_two_cosh(theta_y))


def ergm_log_unnorm_prior(x, theta_x) -> float:
    x = np.asarray(x)
    theta_x = np.asarray(theta_x, dtype=float)
    if theta_x.shape != (2,):
        raise ModelError("theta_x must be (theta_1, theta_2)")
    n = int(round((1 + np.sqrt(1 + 8 * len(x))) / 2))
    if n * (n - 1) // 2 != len(x):
        raise ModelError(f"{len(x)} is not a valid edge-vector length")
    return float(np.dot(ergm_stats(x, n), theta_x))


# ---------------------------------------------------------------------------
# datasets
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    model: _Model
    y: np.ndarray
    truth_theta: np.ndarray | None = None
    truth_x: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.y = self.model.check_state(np.asarray(self.y, dtype=np.int8))

    def to_json(self) -> dict:
        d = dict(self.model.describe())
        d["y"] = self.y.astype(int).tolist()
        if self.truth_theta is not None:
            tx, ty = self.model.split(self.truth_theta)
            truth = {"theta_x": tx.tolist()}
            if ty is not None:
                truth["theta_y"] = ty
            if self.truth_x is not None:
                truth["x"] = np.asarray(self.truth_x).astype(int).tolist()
            d["truth"] = truth
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json()) + "\n")


def model_from_dict(d: dict) -> _Model:
    latent = bool(d.get("latent", True))
    if d.get("model") == "ising":
        return IsingModel(int(d["rows"]), int(d["cols"]), latent=latent)
    if d.get("model") == "ergm":
        return ErgmModel(int(d["node_count"]), latent=latent, two_star=d.get("two_star", "standard"))
    raise ModelError(f"unknown model {d.get('model')!r}")


def load_dataset(path) -> Dataset:
    try:
        d = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ModelError(f"cannot read dataset {path}: {exc}") from exc
    model = model_from_dict(d)
    truth = d.get("truth")
    theta = x = None
    if truth:
        theta = np.r_[np.atleast_1d(truth["theta_x"]), [truth["theta_y"]] if "theta_y" in truth else []]
        x = np.asarray(truth["x"], dtype=np.int8) if "x" in truth else None
    return Dataset(model, np.asarray(d["y"], dtype=np.int8), theta, x)


def simulate_dataset(theta, model: _Model, sweeps: int = 1000, rng=None) -> Dataset:
    """x by ``sweeps`` Gibbs sweeps on f(x|theta_x) from a uniform start; y exactly given x."""
    from .gibbs import prior_target, run_sweeps

    if sweeps < 1:
        raise ModelError("simulate_dataset needs at least one sweep")
    rng = np.random.default_rng(rng)
    theta = np.asarray(theta, dtype=float)
    _, ty = model.split(theta)
    x = run_sweeps(model.random_state(rng), prior_target(model, theta), sweeps, rng, model)
    y = model.sample_noise(x, ty, rng) if model.latent else x.copy()
    return Dataset(model, y, theta, x)
