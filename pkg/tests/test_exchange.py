import math

import numpy as np
import pytest
from scipy.special import logsumexp

from mrfbayes.exchange import (ExchangeConfig, exchange_accept_log_ratio, exchange_mh_step, extended_bridge,
                               propose_theta, simulate_auxiliary)
from mrfbayes.gibbs import count_sweeps
from mrfbayes.models import ErgmModel, IsingModel, ModelError, Prior
from mrfbayes.oracle import enumerator, exact_posterior_grid
from mrfbayes.pmcmc import run_chain

U03 = Prior([{"uniform": [0, 3]}, {"uniform": [0, 3]}])


class TestPropose:
    def test_tiny_scale(self, rng):
        th = np.array([0.4, 1.1])
        assert np.allclose(propose_theta(th, 1e-12, rng), th, atol=1e-4)

    def test_moments(self, rng):
        th = np.array([0.5, -2.0])
        d = np.array([propose_theta(th, 0.25, rng) for _ in range(20_000)]) - th
        assert np.all(np.abs(d.mean(0)) < 3 * 0.5 / math.sqrt(len(d)))
        assert np.allclose(d.var(0), 0.25, rtol=0.05)

    def test_fixed_components_held(self, rng):
        out = propose_theta([1.0, 2.0, 3.0], 1.0, rng, free=np.array([True, False, True]))
        assert out[1] == 2.0

    def test_bad_scale(self, rng):
        with pytest.raises(ModelError):
            propose_theta([0.0], 0.0, rng)
        with pytest.raises(ModelError):
            ExchangeConfig(M=0)
        with pytest.raises(ModelError):
            ExchangeConfig(K=-1)


class TestAuxiliary:
    def test_zero_coupling_uniform(self, rng):
        m = IsingModel(10, 10)
        us = np.array([simulate_auxiliary([0.0, 0.0], m, 1, np.ones(100), rng) for _ in range(50)])
        assert abs((us == 1).mean() - 0.5) < 3 * math.sqrt(0.25 / us.size)

    def test_counts_sweeps(self, ising22, rng):
        with count_sweeps() as c:
            simulate_auxiliary([0.5, 0.1], ising22, 13, np.ones(4), rng)
        assert c.total == 13
        with pytest.raises(ModelError):
            simulate_auxiliary([0.5, 0.1], ising22, 0, np.ones(4), rng)


class TestBridge:
    def test_k0_is_plain_exchange(self, ising22, rng):
        u0 = np.array([1, -1, 1, 1], np.int8)
        th, ts = np.array([0.2, 0.5]), np.array([0.9, 0.5])
        u, corr = extended_bridge(u0, th, ts, 0, rng, ising22)
        assert np.array_equal(u, u0)
        s1 = ising22.stats(u0)[0]
        assert corr == pytest.approx((0.2 - 0.9) * s1)

    @pytest.mark.parametrize("K", [0, 1, 10])
    def test_identical_endpoints(self, ising22, rng, K):
        _, corr = extended_bridge(np.ones(4), [0.7, 0.1], [0.7, 0.1], K, rng, ising22)
        assert corr == 0.0

    def test_telescopes_when_kernel_cannot_move(self, rng):
        m = ErgmModel(4, latent=False)
        u0 = np.ones(m.n_vars, np.int8)
        th, ts = np.array([40.0, 0.1]), np.array([40.0, 0.3])
        u, corr = extended_bridge(u0, th, ts, 5, rng, m)
        assert np.array_equal(u, u0)
        assert corr == pytest.approx((0.1 - 0.3) * 12)

    @pytest.mark.parametrize("K", [0, 3, 20])
    def test_importance_identity(self, K):
        # u0 ~ f(.|theta*) exactly  =>  E[exp(corr)] = Z(theta) / Z(theta*)
        m = IsingModel(2, 2, latent=False)
        en = enumerator(m)
        th, ts = np.array([0.9]), np.array([0.3])
        rng = np.random.default_rng(K)
        R = 20_000
        U0 = en.sample_prior(ts, rng, R)
        w = np.array([extended_bridge(u, th, ts, K, rng, m)[1] for u in U0])
        truth = math.exp(en.log_z(th) - en.log_z(ts))
        est = np.exp(w)
        se = est.std(ddof=1) / math.sqrt(R)
        assert abs(est.mean() - truth) < 3 * se

    def test_tally(self, ising22, rng):
        with count_sweeps() as c:
            extended_bridge(np.ones(4), [0.1, 0.1], [0.2, 0.1], 9, rng, ising22)
        assert c.total == 9


class TestAcceptRatio:
    def test_identity_proposal(self, ising22):
        x = y = np.array([1, -1, 1, 1])
        assert exchange_accept_log_ratio([0.4, 0.2], [0.4, 0.2], x, y, 0.0, U03, 0.0, ising22) == 0.0

    def test_outside_support(self, ising22):
        x = np.ones(4)
        assert exchange_accept_log_ratio([0.4, 0.2], [3.4, 0.2], x, x, 0.0, U03, 0.0, ising22) == -np.inf

    def test_term_by_term(self, ising22):
        x = np.array([1, -1, 1, 1])
        y = np.array([1, 1, -1, 1])
        th, ts = (0.4, 0.2), (1.1, 0.7)
        # S1(x): edges (0,1),(2,3),(0,2),(1,3) -> -1 + 1 + 1 - 1 = 0 ; agree(x, y) = 1 - 1 - 1 + 1 = 0
        ln2c = lambda t: math.log(math.exp(t) + math.exp(-t))  # noqa: E731
        num = math.log(1 / 9) + 1.1 * 0 + 0.7 * 0 - 4 * ln2c(0.7)
        den = math.log(1 / 9) + 0.4 * 0 + 0.2 * 0 - 4 * ln2c(0.2)
        want = num - den + 0.3 - 0.05
        assert exchange_accept_log_ratio(th, ts, x, y, 0.3, U03, -0.05, ising22) == pytest.approx(want)

    def test_antisymmetric(self, ising22, rng):
        for _ in range(10):
            x, y = rng.choice([-1, 1], 4), rng.choice([-1, 1], 4)
            a, b = rng.uniform(0.1, 2.9, 2), rng.uniform(0.1, 2.9, 2)
            c = rng.normal()
            f = exchange_accept_log_ratio(a, b, x, y, c, U03, 0.0, ising22)
            r = exchange_accept_log_ratio(b, a, x, y, -c, U03, 0.0, ising22)
            assert f == pytest.approx(-r)

    def test_nan_rejected(self, ising22):
        with pytest.raises(ModelError):
            exchange_accept_log_ratio([0.4, 0.2], [0.4, 0.2], np.ones(4), np.ones(4), float("nan"), U03, 0.0, ising22)


class TestStep:
    def test_tiny_scale_always_accepts(self, ising22, rng):
        cfg = ExchangeConfig(M=5, K=2, s=1e-12)
        y = np.array([1, -1, 1, 1], np.int8)
        acc = [exchange_mh_step(([0.8, 0.8], y), y, cfg, ising22, U03, rng)[1] for _ in range(100)]
        assert np.mean(acc) > 0.97

    def test_outside_support_skips_simulation(self, ising22, rng):
        cfg = ExchangeConfig(M=50, s=100.0)
        y = np.ones(4, np.int8)
        with count_sweeps() as c:
            out = [exchange_mh_step(([1.5, 1.5], y), y, cfg, ising22, U03, rng)[2] for _ in range(50)]
        n_in = sum(d["in_support"] for d in out)
        assert n_in < 50 and c.total == 50 * n_in

    def test_exact_aux_chain_matches_posterior(self):
        # direct observation, K=0, exact auxiliary draws: the exchange chain is exact
        m = IsingModel(3, 3, latent=False)
        prior = Prior([{"uniform": [0, 3]}])
        y = np.array([1, 1, -1, 1, 1, -1, 1, 1, 1], np.int8)
        cfg = ExchangeConfig(M=1, K=0, s=0.5, exact_aux=True)
        tr = run_chain("exchange", [0.5], y, cfg, 1000, 100_000, np.random.default_rng(4), m, prior)
        ax = np.linspace(0, 3, 3001)
        gp = exact_posterior_grid(y, m, prior, [ax])
        cdf = np.concatenate([[0], np.cumsum((gp.density[1:] + gp.density[:-1]) / 2 * np.diff(ax))])
        s = np.sort(tr.theta[:, 0])
        emp = np.arange(1, len(s) + 1) / len(s)
        ks = np.max(np.abs(emp - np.interp(s, ax, cdf)))
        assert ks < 0.02
