"""Compiled inner loops for binary pairwise MRFs.

Every model in the package reduces to

    log gamma(x) = sum_k h[k] v(x_k) + sum_{(k, l) in pairs} w[e] v(x_k) v(x_l)

with v(x) in {-1, +1} ("spin" encoding) or {0, 1} ("binary" encoding).
Neighbourhoods are stored in CSR form: for site k, ``nbr[ptr[k]:ptr[k+1]]``
are its neighbours and ``nbr_pair`` the index of the connecting pair.

Randomness comes from numba's internal generator, reseeded from an explicit
seed at the start of every call so results depend only on the seeds passed in.
"""

import numba as nb
import numpy as np


@nb.njit(cache=True, nogil=True)
def local_fields(x, pair_w, ptr, nbr, nbr_pair):
    n = x.shape[0]
    f = np.zeros(n)
    for k in range(n):
        s = 0.0
        for t in range(ptr[k], ptr[k + 1]):
            s += pair_w[nbr_pair[t]] * x[nbr[t]]
        f[k] = s
    return f


@nb.njit(cache=True, nogil=True)
def _sweep_cached(x, h, pair_w, ptr, nbr, nbr_pair, spin, n_sweeps, check):
    # f[k] caches sum_l w_kl v(x_l); only updated when a site changes value.
    n = x.shape[0]
    f = local_fields(x, pair_w, ptr, nbr, nbr_pair)
    for _ in range(n_sweeps):
        for k in range(n):
            if spin:
                d = 2.0 * (h[k] + f[k])
                lo = -1
            else:
                d = h[k] + f[k]
                lo = 0
            new = 1 if np.random.random() * (1.0 + np.exp(-d)) < 1.0 else lo
            old = x[k]
            if new != old:
                x[k] = new
                delta = new - old
                for t in range(ptr[k], ptr[k + 1]):
                    f[nbr[t]] += pair_w[nbr_pair[t]] * delta
        if check:
            ref = local_fields(x, pair_w, ptr, nbr, nbr_pair)
            for k in range(n):
                if abs(ref[k] - f[k]) > 1e-9 * (1.0 + abs(ref[k])):
                    raise AssertionError("cached local field drifted from recomputation")


@nb.njit(cache=True, nogil=True)
def sweeps(x, h, pair_w, ptr, nbr, nbr_pair, spin, n_sweeps, seed, check):
    """In-place ascending-order single-site Gibbs sweeps on one state."""
    np.random.seed(seed)
    _sweep_cached(x, h, pair_w, ptr, nbr, nbr_pair, spin, n_sweeps, check)


@nb.njit(cache=True, nogil=True)
def sweeps_block(X, lo, hi, h, pair_w, ptr, nbr, nbr_pair, spin, n_sweeps, seed, check):
    """Sweep rows lo..hi-1 of X with a single seeded stream."""
    np.random.seed(seed)
    for p in range(lo, hi):
        _sweep_cached(X[p], h, pair_w, ptr, nbr, nbr_pair, spin, n_sweeps, check)


@nb.njit(cache=True, nogil=True)
def tree_messages(order, parent, parent_w, h, vals):
    """Upward sum-product pass in log space.

    ``order`` is a BFS order from the root (order[0]); ``parent_w[k]`` is the
    pair weight of the edge to k's parent. Returns per-node "belief" tables
    b[k, s] = h[k] v_s + sum of child messages, and log Z.
    """
    n = order.shape[0]
    b = np.zeros((n, 2))
    for k in range(n):
        b[k, 0] = h[k] * vals[0]
        b[k, 1] = h[k] * vals[1]
    for idx in range(n - 1, 0, -1):
        k = order[idx]
        par = parent[k]
        w = parent_w[k]
        for sp in range(2):
            a0 = b[k, 0] + w * vals[0] * vals[sp]
            a1 = b[k, 1] + w * vals[1] * vals[sp]
            m = max(a0, a1)
            b[par, sp] += m + np.log(np.exp(a0 - m) + np.exp(a1 - m))
    r = order[0]
    m = max(b[r, 0], b[r, 1])
    log_z = m + np.log(np.exp(b[r, 0] - m) + np.exp(b[r, 1] - m))
    return b, log_z


@nb.njit(cache=True, nogil=True)
def tree_draw(X, b, order, parent, parent_w, vals, U):
    """Downward sampling pass; fills X (P x n) as state values."""
    P = X.shape[0]
    n = order.shape[0]
    for p in range(P):
        r = order[0]
        p1 = 1.0 / (1.0 + np.exp(b[r, 0] - b[r, 1]))
        s_idx = np.zeros(n, dtype=np.int64)
        s_idx[r] = 1 if U[p, r] < p1 else 0
        X[p, r] = vals[s_idx[r]]
        for idx in range(1, n):
            k = order[idx]
            sp = s_idx[parent[k]]
            w = parent_w[k]
            a0 = b[k, 0] + w * vals[0] * vals[sp]
            a1 = b[k, 1] + w * vals[1] * vals[sp]
            p1 = 1.0 / (1.0 + np.exp(a0 - a1))
            s_idx[k] = 1 if U[p, k] < p1 else 0
            X[p, k] = vals[s_idx[k]]


@nb.njit(cache=True, nogil=True)
def sweeps_rows(X, lo, hi, a, J, ptr, nbr, spin, n_sweeps, seed):
    """Rows lo..hi-1, each with its own uniform field a[p] and coupling J[p].

    Used when every particle carries a different parameter (ABC moves).
    """
    np.random.seed(seed)
    n = X.shape[1]
    f = np.zeros(n)
    for p in range(lo, hi):
        x = X[p]
        for k in range(n):
            s = 0.0
            for t in range(ptr[k], ptr[k + 1]):
                s += x[nbr[t]]
            f[k] = J[p] * s
        for _ in range(n_sweeps):
            for k in range(n):
                if spin:
                    d = 2.0 * (a[p] + f[k])
                    low = -1
                else:
                    d = a[p] + f[k]
                    low = 0
                new = 1 if np.random.random() * (1.0 + np.exp(-d)) < 1.0 else low
                old = x[k]
                if new != old:
                    x[k] = new
                    delta = J[p] * (new - old)
                    for t in range(ptr[k], ptr[k + 1]):
                        f[nbr[t]] += delta


@nb.njit(cache=True, nogil=True)
def bridge_sweeps(x, h, hs, J, Js, K, ptr, nbr, pairs, spin, seed):
    """Annealed route from gamma(.|theta*) to gamma(.|theta) for a uniform-coupling field.

    Target k (k = 1..K) has exponent b_k = (K-k+1)/(K+1) on theta* and gets one
    sweep. Returns sum_{k=0}^{K} [L(u_k) - L*(u_k)] / (K+1) with
    L(u) = h . v + J sum_pairs v_i v_j.
    """
    np.random.seed(seed)
    n = x.shape[0]
    ns = np.zeros(n)
    for k in range(n):
        s = 0.0
        for t in range(ptr[k], ptr[k + 1]):
            s += x[nbr[t]]
        ns[k] = s
    lo = -1 if spin else 0
    acc = 0.0
    for step in range(K + 1):
        if step > 0:
            b = (K - step + 1) / (K + 1.0)
            Jb = b * Js + (1.0 - b) * J
            for k in range(n):
                hb = b * hs[k] + (1.0 - b) * h[k]
                d = hb + Jb * ns[k]
                if spin:
                    d *= 2.0
                new = 1 if np.random.random() * (1.0 + np.exp(-d)) < 1.0 else lo
                old = x[k]
                if new != old:
                    x[k] = new
                    delta = new - old
                    for t in range(ptr[k], ptr[k + 1]):
                        ns[nbr[t]] += delta
        u = 0.0
        for k in range(n):
            u += (h[k] - hs[k]) * x[k]
        pair = 0.0
        for e in range(pairs.shape[0]):
            pair += x[pairs[e, 0]] * x[pairs[e, 1]]
        acc += u + (J - Js) * pair
    return acc / (K + 1.0)
