import json
import math

import numpy as np
import pytest

from mrfbayes.models import (Dataset, ErgmModel, GraphStructure, IsingModel, ModelError, Prior,
                             edge_index, ergm_log_noise, ergm_log_unnorm_prior, ergm_stats,
                             ising_log_noise, ising_log_unnorm_prior, load_dataset, simulate_dataset)

ALL_UP = np.ones(4, dtype=int)
CHECKER = np.array([1, -1, -1, 1])  # 2x2 lattice, row-major


def triangle():
    return np.ones(3, dtype=int)


class TestGraph:
    def test_lattice_edge_count(self):
        for r, c in [(1, 1), (2, 2), (3, 4), (10, 10)]:
            g = GraphStructure.lattice(r, c)
            assert g.edge_count == r * (c - 1) + c * (r - 1)

    def test_lattice_is_four_neighbour(self):
        g = GraphStructure.lattice(3, 3)
        got = {tuple(e) for e in g.edges.tolist()}
        want = set()
        for i in range(3):
            for j in range(3):
                k = 3 * i + j
                if j < 2:
                    want.add((k, k + 1))
                if i < 2:
                    want.add((k, k + 3))
        assert got == want

    @pytest.mark.parametrize("edges", [[(0, 0)], [(1, 0)], [(0, 1), (0, 1)], [(0, 5)]])
    def test_bad_edges_rejected(self, edges):
        with pytest.raises(ModelError):
            GraphStructure(3, np.array(edges))


class TestIsingDensities:
    def test_prior_zero_coupling(self, lattice22):
        assert ising_log_unnorm_prior(ALL_UP, 0.0, lattice22) == 0.0

    def test_prior_all_up(self, lattice22):
        assert ising_log_unnorm_prior(ALL_UP, 0.5, lattice22) == pytest.approx(2.0)

    def test_prior_checkerboard(self, lattice22):
        assert ising_log_unnorm_prior(CHECKER, 0.5, lattice22) == pytest.approx(-2.0)

    def test_prior_shape_mismatch(self, lattice22):
        with pytest.raises(ModelError):
            ising_log_unnorm_prior(np.ones(5), 0.5, lattice22)

    def test_noise_uniform(self):
        assert ising_log_noise(ALL_UP, ALL_UP, 0.0) == pytest.approx(-4 * math.log(2))

    def test_noise_agree_and_disagree(self):
        assert ising_log_noise([1], [1], 1.0) == pytest.approx(-0.12693, abs=1e-5)
        assert ising_log_noise([1], [-1], 1.0) == pytest.approx(-2.12693, abs=1e-5)

    def test_noise_length_mismatch(self):
        with pytest.raises(ModelError):
            ising_log_noise([1, 1], [1], 1.0)

    def test_noise_large_theta_is_finite(self):
        assert np.isfinite(ising_log_noise(ALL_UP, ALL_UP, 100.0))
        assert ising_log_noise(ALL_UP, ALL_UP, 100.0) == pytest.approx(0.0, abs=1e-12)

    def test_global_flip_symmetry(self, lattice22, rng):
        for _ in range(20):
            x = rng.choice([-1, 1], 4)
            assert ising_log_unnorm_prior(x, 0.7, lattice22) == ising_log_unnorm_prior(-x, 0.7, lattice22)


class TestErgm:
    def test_edge_order_lexicographic(self):
        assert edge_index(4).tolist() == [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]]

    def test_stats_examples(self):
        assert ergm_stats(np.zeros(3, int), 3) == (0, 0)
        assert ergm_stats(triangle(), 3) == (3, 3)
        star = np.array([1, 1, 1, 0, 0, 0])  # hub 0 joined to 1, 2, 3
        assert ergm_stats(star, 4) == (3, 3)

    @pytest.mark.parametrize("n", [2, 3, 4, 6, 9])
    def test_complete_graph(self, n):
        x = np.ones(n * (n - 1) // 2, int)
        assert ergm_stats(x, n) == (math.comb(n, 2), n * math.comb(n - 1, 2))

    def test_literal_two_star_undercounts(self):
        # triangle: only the pair of edges meeting at node 2 is counted
        assert ergm_stats(triangle(), 3, two_star="literal") == (3, 1)

    def test_unnorm_prior(self):
        assert ergm_log_unnorm_prior(np.zeros(3), [1.3, -0.2]) == 0.0
        assert ergm_log_unnorm_prior(triangle(), [1.0, 0.0]) == pytest.approx(3.0)
        assert ergm_log_unnorm_prior(triangle(), [-2.0, 0.5]) == pytest.approx(-4.5)
        with pytest.raises(ModelError):
            ergm_log_unnorm_prior(triangle(), [1.0])

    def test_noise(self):
        assert ergm_log_noise([1], [1], 0.0) == pytest.approx(-math.log(2))
        # direct evaluation: 2 - log(e^2 + e^-2) = -0.018150
        assert ergm_log_noise([0], [0], 2.0) == pytest.approx(2 - math.log(math.exp(2) + math.exp(-2)))
        assert ergm_log_noise([0], [0], 2.0) == pytest.approx(-0.018150, abs=1e-6)
        want = -2 - 2 * math.log(math.e + 1 / math.e)
        assert ergm_log_noise([1, 0], [0, 1], 1.0) == pytest.approx(want)

    def test_pair_view_matches_two_star(self, rng):
        # h.x + J * sum_pairs x_e x_f must reproduce theta . S(x)
        m = ErgmModel(6, latent=False)
        theta = np.array([-0.7, 0.3])
        h, J = m.prior_fields(theta)
        for _ in range(20):
            x = rng.integers(0, 2, m.n_vars)
            want = float(m.stats(x) @ theta)
            assert m.mrf.log_gamma(x, h, J) == pytest.approx(want)


class TestJoint:
    def test_ising_examples(self, ising22):
        assert ising22.log_unnorm_joint(ALL_UP, ALL_UP, [0.0, 0.0]) == pytest.approx(-4 * math.log(2))
        assert ising22.log_unnorm_joint(ALL_UP, ALL_UP, [0.5, 0.0]) == pytest.approx(2.0 - 4 * math.log(2))

    def test_ergm_example(self, ergm3):
        assert ergm3.log_unnorm_joint(triangle(), triangle(), [1.0, 0.0, 0.0]) == pytest.approx(3 - 3 * math.log(2))

    def test_additive(self, ising22, rng, lattice22):
        for _ in range(20):
            x, y = rng.choice([-1, 1], 4), rng.choice([-1, 1], 4)
            tx, ty = rng.uniform(-2, 2, 2)
            want = ising_log_unnorm_prior(x, tx, lattice22) + ising_log_noise(x, y, ty)
            assert ising22.log_unnorm_joint(x, y, [tx, ty]) == pytest.approx(want)

    def test_pair_view_matches_joint(self, ising22, rng):
        for _ in range(20):
            x, y = rng.choice([-1, 1], 4), rng.choice([-1, 1], 4)
            theta = rng.uniform(-1, 2, 2)
            h, J = ising22.prior_fields(theta[:1])
            hn, c = ising22.noise_fields(y, theta[1])
            assert ising22.mrf.log_gamma(x, h + hn, J) + c == pytest.approx(ising22.log_unnorm_joint(x, y, theta))


class TestPrior:
    def test_uniform_support(self):
        p = Prior([{"uniform": [0, 3]}, {"uniform": [0, 3]}])
        assert p.logpdf([1.0, 1.0]) == pytest.approx(-2 * math.log(3))
        assert p.logpdf([3.5, 1.0]) == -np.inf

    def test_gaussian(self):
        p = Prior([{"gaussian": [0, 30]}])
        assert p.logpdf([2.0]) == pytest.approx(-0.5 * math.log(2 * math.pi * 30) - 4 / 60)

    @pytest.mark.parametrize("bad", [[{"uniform": [1, 1]}], [{"gaussian": [0, 0]}], [{"beta": [1, 1]}], ["x"]])
    def test_invalid(self, bad):
        with pytest.raises(ModelError):
            Prior(bad)


class TestSimulate:
    def test_noise_free_limit(self, rng):
        ds = simulate_dataset([0.3, 50.0], IsingModel(4, 4), 50, rng)
        assert np.array_equal(ds.y, ds.truth_x)

    def test_zero_theta_y_is_fair_coin(self, rng):
        m = IsingModel(10, 10)
        ys = np.array([simulate_dataset([0.5, 0.0], m, 5, rng).y for _ in range(200)])
        frac = (ys == 1).mean()
        assert abs(frac - 0.5) < 3 * math.sqrt(0.25 / ys.size)

    def test_invalid_sweeps(self, rng):
        with pytest.raises(ModelError):
            simulate_dataset([0.1, 0.1], IsingModel(2, 2), 0, rng)

    def test_ten_by_ten_shape(self, rng):
        ds = simulate_dataset([0.1, 0.1], IsingModel(10, 10), 1000, rng)
        assert ds.y.shape == (100,) and set(np.unique(ds.y)) <= {-1, 1}

    def test_dataset_roundtrip(self, tmp_path, rng):
        ds = simulate_dataset([0.2, -0.4, 1.0], ErgmModel(5), 10, rng)
        ds.save(tmp_path / "d.json")
        back = load_dataset(tmp_path / "d.json")
        assert np.array_equal(back.y, ds.y) and np.allclose(back.truth_theta, ds.truth_theta)
        d = json.loads((tmp_path / "d.json").read_text())
        assert d["model"] == "ergm" and d["node_count"] == 5

    def test_dataset_shape_checked(self):
        with pytest.raises(ModelError):
            Dataset(IsingModel(2, 2), np.ones(5))
