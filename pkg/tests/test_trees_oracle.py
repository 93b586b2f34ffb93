import math

import numpy as np
import pytest
from scipy.special import logsumexp

from conftest import brute_states
from mrfbayes.models import GraphStructure, IsingModel, ModelError, Prior
from mrfbayes.oracle import binned_posterior, enumerate_log_z, enumerator, exact_posterior_grid, tv_distance
from mrfbayes.trees import TreeField, spanning_tree_and_order, tree_sample_and_log_z


def brute_log_z(n, edges, w, h=None):
    X = brute_states(n).astype(float)
    h = np.zeros(n) if h is None else np.asarray(h, float)
    e = np.asarray(edges)
    s = X @ h + (X[:, e[:, 0]] * X[:, e[:, 1]]) @ np.broadcast_to(w, len(e))
    return float(logsumexp(s))


def random_tree(n, rng):
    # random Pruefer-free construction: attach node k to a random earlier node
    return np.array([(int(rng.integers(0, k)), k) for k in range(1, n)])


class TestSpanningTree:
    @pytest.mark.parametrize("shape,tree,rest", [((2, 2), 3, 1), ((10, 10), 99, 81), ((3, 3), 8, 4)])
    def test_counts_lattice(self, rng, shape, tree, rest):
        g = GraphStructure.lattice(*shape)
        t, r = spanning_tree_and_order(g, rng)
        assert len(t) == tree and len(r) == rest
        assert sorted(np.r_[t, r].tolist()) == list(range(g.edge_count))

    def test_triangle(self, rng):
        t, r = spanning_tree_and_order(GraphStructure(3, np.array([[0, 1], [0, 2], [1, 2]])), rng)
        assert (len(t), len(r)) == (2, 1)

    def test_tree_is_acyclic_and_spanning(self, rng):
        g = GraphStructure.lattice(4, 5)
        t, _ = spanning_tree_and_order(g, rng)
        TreeField(g.node_count, g.edges[t], 0.3, np.zeros(g.node_count))  # raises on a cycle

    def test_disconnected(self, rng):
        with pytest.raises(ModelError):
            spanning_tree_and_order(GraphStructure(4, np.array([[0, 1], [2, 3]])), rng)

    def test_randomness_covers_all_trees(self):
        # the 4-cycle has exactly 4 spanning trees
        g = GraphStructure.lattice(2, 2)
        rng = np.random.default_rng(0)
        seen = {tuple(sorted(spanning_tree_and_order(g, rng)[0].tolist())) for _ in range(200)}
        assert len(seen) == 4


class TestTreeSampler:
    def test_two_node_log_z(self, rng):
        _, lz = tree_sample_and_log_z([(0, 1)], 0.0, np.zeros(2), rng)
        assert lz == pytest.approx(math.log(4))
        _, lz = tree_sample_and_log_z([(0, 1)], 1.0, np.zeros(2), rng)
        assert lz == pytest.approx(math.log(2 * math.e + 2 / math.e))
        # log(6.1724...) = 1.82008
        assert lz == pytest.approx(1.82008, abs=1e-5)

    def test_three_chain(self, rng):
        _, lz = tree_sample_and_log_z([(0, 1), (1, 2)], 0.5, np.zeros(3), rng)
        assert lz == pytest.approx(brute_log_z(3, [(0, 1), (1, 2)], 0.5))

    def test_cycle_detected(self, rng):
        with pytest.raises(ModelError):
            tree_sample_and_log_z([(0, 1), (1, 2), (0, 2)], 0.5, np.zeros(4), rng)

    def test_exhaustive_small_trees(self):
        rng = np.random.default_rng(5)
        for n in range(2, 11):
            for _ in range(3):
                edges = random_tree(n, rng)
                w = rng.normal(0, 0.8, n - 1)
                h = rng.normal(0, 0.8, n)
                tf = TreeField(n, edges, w, h)
                assert tf.log_z == pytest.approx(brute_log_z(n, edges, w, h), rel=1e-10)

    def test_binary_encoding_log_z(self):
        rng = np.random.default_rng(6)
        edges, w, h = random_tree(6, rng), rng.normal(0, 1, 5), rng.normal(0, 1, 6)
        X = brute_states(6, (0, 1)).astype(float)
        s = X @ h + (X[:, edges[:, 0]] * X[:, edges[:, 1]]) @ w
        assert TreeField(6, edges, w, h, spin=False).log_z == pytest.approx(logsumexp(s))

    def test_sample_frequencies(self):
        rng = np.random.default_rng(7)
        edges = np.array([(0, 1), (1, 2), (1, 3)])
        w, h = np.array([0.8, -0.5, 0.3]), np.array([0.2, 0.0, -0.4, 0.1])
        tf = TreeField(4, edges, w, h)
        N = 100_000
        X = tf.sample(N, rng)
        S = brute_states(4).astype(float)
        logp = S @ h + (S[:, edges[:, 0]] * S[:, edges[:, 1]]) @ w
        p = np.exp(logp - logsumexp(logp))
        idx = ((X + 1) // 2).astype(int) @ (1 << np.arange(3, -1, -1))
        counts = np.bincount(idx, minlength=16)
        sd = np.sqrt(N * p * (1 - p))
        assert np.all(np.abs(counts - N * p) < 3.5 * sd)


class TestEnumeration:
    def test_zero_coupling(self):
        for g in [GraphStructure.lattice(2, 2), GraphStructure.lattice(3, 3), GraphStructure(5, np.zeros((0, 2)))]:
            assert enumerate_log_z(g, 0.0) == pytest.approx(g.node_count * math.log(2))

    def test_lattice22(self):
        want = math.log(2 * math.e**2 + 12 + 2 * math.e**-2)
        assert enumerate_log_z(GraphStructure.lattice(2, 2), 0.5) == pytest.approx(want)
        assert want == pytest.approx(math.log(27.049), abs=1e-4)

    def test_single_edge(self):
        g = GraphStructure(2, np.array([[0, 1]]))
        assert enumerate_log_z(g, 1.0) == pytest.approx(math.log(2 * math.e + 2 / math.e))

    def test_too_large(self):
        with pytest.raises(ModelError):
            enumerate_log_z(GraphStructure.lattice(5, 5), 0.1)

    def test_evidence_against_brute_force(self):
        m = IsingModel(2, 3)
        y = np.array([1, -1, 1, 1, -1, -1])
        theta = np.array([0.4, 0.7])
        X = brute_states(6).astype(float)
        e = m.mrf.pairs
        lg = 0.4 * (X[:, e[:, 0]] * X[:, e[:, 1]]).sum(1) + 0.7 * (X @ y) - 6 * np.logaddexp(0.7, -0.7)
        assert enumerator(m).log_evidence(theta, y) == pytest.approx(logsumexp(lg))


class TestGrid:
    def test_single_point(self):
        m = IsingModel(2, 2)
        prior = Prior([{"uniform": [0, 3]}, {"uniform": [0, 3]}])
        gp = exact_posterior_grid(np.ones(4), m, prior, [[1.0], [1.0]])
        assert gp.density.shape == (1, 1) and gp.density[0, 0] == pytest.approx(1.0)

    def test_flip_symmetry_in_theta_y(self):
        # y with zero magnetisation and a flip-symmetric model: p(theta_y) is even
        m = IsingModel(2, 2)
        prior = Prior([{"uniform": [0, 3]}, {"uniform": [-2, 2]}])
        y = np.array([1, -1, -1, 1])
        ax = np.linspace(-2, 2, 21)
        gp = exact_posterior_grid(y, m, prior, [np.linspace(0, 3, 7), ax])
        marg = gp.marginal(1)
        assert np.allclose(marg, marg[::-1])

    def test_normalised(self):
        m = IsingModel(3, 3)
        prior = Prior([{"uniform": [0, 3]}, {"uniform": [0, 3]}])
        y = np.array([1, -1, -1, 1, -1, -1, 1, -1, 1])
        ax = np.linspace(0, 3, 30)
        gp = exact_posterior_grid(y, m, prior, [ax, ax])
        assert np.trapezoid(np.trapezoid(gp.density, ax, axis=1), ax) == pytest.approx(1.0)

    def test_binned_matches_grid(self):
        m = IsingModel(3, 3)
        prior = Prior([{"uniform": [0, 3]}, {"uniform": [0, 3]}])
        y = np.array([1, -1, -1, 1, -1, -1, 1, -1, 1])
        edges = [np.linspace(0, 3, 11)] * 2
        mass = binned_posterior(y, m, prior, edges, refine=8)
        fine = np.linspace(0, 3, 301)
        gp = exact_posterior_grid(y, m, prior, [fine, fine])
        cell = np.add.reduceat(np.add.reduceat(gp.density[:-1, :-1], np.arange(0, 300, 30), 0),
                               np.arange(0, 300, 30), 1)
        assert tv_distance(mass, cell) < 0.01
