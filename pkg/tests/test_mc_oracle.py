import math

import numpy as np
import pytest

from conftest import REF_K, REF_MEANS, random_generator, random_spd, random_stochastic, regime_fixture
from gvswap.contracts import Measure, SwapContract
from gvswap.errors import DomainError
from gvswap.markov_engine import GeneratorModel
from gvswap.mc_oracle import (
    SimulationConfig,
    mc_expected_covariance,
    mc_swap_price,
    simulate_regime_paths,
    simulate_return_paths,
)
from gvswap.regime_covariance import RegimeCovariance, assemble_expected_covariance
from gvswap.regime_inference import STATES, Regime, TransitionModel
from gvswap.trace_swap import price_trace


def model_from_pi(pi):
    return TransitionModel.from_counts(np.rint(np.asarray(pi) * 10**12).astype(np.int64))


def single_state_model():
    return TransitionModel.from_counts([[10]], states=[Regime.MIDDLE])


class TestRegimePaths:
    def test_absorbing_identity(self):
        model = TransitionModel(STATES, np.eye(3, dtype=np.int64), np.eye(3), np.zeros((3, 3)), np.full(3, 1 / 3))
        paths = simulate_regime_paths(model, SimulationConfig(500, 30, base_seed=1, initial="Down"))
        assert np.all(paths.indices == 0)

    def test_bit_identical_across_workers_and_chunks(self, ref_model):
        base = simulate_regime_paths(ref_model, SimulationConfig(3000, 20, base_seed=9))
        again = simulate_regime_paths(ref_model, SimulationConfig(3000, 20, base_seed=9, n_workers=4, chunk_size=257))
        assert np.array_equal(base.indices, again.indices)
        other = simulate_regime_paths(ref_model, SimulationConfig(3000, 20, base_seed=10))
        assert not np.array_equal(base.indices, other.indices)

    def test_prefix_stability(self, ref_model):
        # path i does not depend on how many other paths are drawn
        small = simulate_regime_paths(ref_model, SimulationConfig(100, 15, base_seed=3))
        large = simulate_regime_paths(ref_model, SimulationConfig(1000, 15, base_seed=3))
        assert np.array_equal(small.indices, large.indices[:100])

    def test_day_63_marginals(self, ref_model):
        n = 100_000
        paths = simulate_regime_paths(ref_model, SimulationConfig(n, 63, base_seed=11, initial="Up", n_workers=4))
        start = np.array([0.0, 0.0, 1.0])
        target = start @ np.linalg.matrix_power(ref_model.pi, 63)
        freq = np.bincount(paths.indices[:, 63], minlength=3) / n
        se = np.sqrt(target * (1 - target) / n)
        assert np.all(np.abs(freq - target) < 3 * se)

    def test_chi_square_by_day(self):
        rng = np.random.default_rng(2)
        model = model_from_pi(random_stochastic(rng, 3))
        n = 100_000
        paths = simulate_regime_paths(model, SimulationConfig(n, 5, base_seed=12, initial="Down", n_workers=4))
        law = np.array([1.0, 0.0, 0.0])
        for t in range(1, 6):
            law = law @ model.pi
            observed = np.bincount(paths.indices[:, t], minlength=3)
            chi2 = float(((observed - n * law) ** 2 / (n * law)).sum())
            # 99.9% quantile of chi-square with 2 degrees of freedom
            assert chi2 < 13.8


class TestReturnPaths:
    def test_zero_covariance(self, ref_model):
        cov = RegimeCovariance({s: np.zeros((3, 3)) for s in STATES})
        cfg = SimulationConfig(50, 10, base_seed=1)
        r = simulate_return_paths(cov, REF_MEANS, simulate_regime_paths(ref_model, cfg), cfg)
        assert r.shape == (50, 10, 3)
        assert np.all(r == REF_MEANS)

    def test_single_state_sample_covariance(self):
        rng = np.random.default_rng(3)
        omega = random_spd(rng, 3) * 1e-4
        model = single_state_model()
        cov = RegimeCovariance({Regime.MIDDLE: omega})
        n = 100_000
        cfg = SimulationConfig(n, 1, base_seed=5, n_workers=4)
        day1 = simulate_return_paths(cov, np.zeros(3), simulate_regime_paths(model, cfg), cfg)[:, 0, :]
        est = np.cov(day1, rowvar=False)
        se = np.sqrt((omega**2 + np.outer(np.diag(omega), np.diag(omega))) / (n - 1))
        assert np.all(np.abs(est - omega) < 3 * se)

    def test_perfect_correlation(self, ref_model):
        per = {}
        for i, s in enumerate(STATES):
            v = np.array([1.0, 1.0, 0.5]) * 0.01 * (i + 1)
            per[s] = np.outer(v, v)
            per[s][:2, :2] = per[s][0, 0]
        cov = RegimeCovariance(per)
        means = np.array([0.001, -0.002, 0.0])
        cfg = SimulationConfig(200, 20, base_seed=8)
        r = simulate_return_paths(cov, means, simulate_regime_paths(ref_model, cfg), cfg)
        np.testing.assert_allclose(r[..., 0] - r[..., 1], 0.003, atol=1e-12)

    def test_non_psd(self, ref_model):
        bad = np.array([[1.0, 2.0, 0.0], [2.0, 1.0, 0.0], [0.0, 0.0, 1.0]]) * 1e-4
        cov = RegimeCovariance({s: bad for s in STATES})
        cfg = SimulationConfig(10, 5)
        with pytest.raises(DomainError, match="positive semidefinite"):
            simulate_return_paths(cov, REF_MEANS, simulate_regime_paths(ref_model, cfg), cfg)

    def test_deterministic(self, ref_model):
        cov = RegimeCovariance({s: np.eye(3) * 1e-4 for s in STATES})
        cfg = SimulationConfig(300, 7, base_seed=4)
        cfg4 = SimulationConfig(300, 7, base_seed=4, n_workers=3, chunk_size=64)
        a = simulate_return_paths(cov, REF_MEANS, simulate_regime_paths(ref_model, cfg), cfg)
        b = simulate_return_paths(cov, REF_MEANS, simulate_regime_paths(ref_model, cfg4), cfg4)
        assert np.array_equal(a, b)


class TestExpectedCovariance:
    def test_single_state_exact(self):
        rng = np.random.default_rng(5)
        omega = random_spd(rng, 3) * 1e-4
        model = single_state_model()
        cov = RegimeCovariance({Regime.MIDDLE: omega})
        c = SwapContract(63, 0.0004, 0.0)
        est = mc_expected_covariance(cov, model, c, SimulationConfig(200, 63, base_seed=2))
        analytic = assemble_expected_covariance(cov, model, None, c).matrix
        np.testing.assert_allclose(est.mean, analytic, atol=1e-12)
        gen = GeneratorModel(np.zeros((1, 1)))
        est = mc_expected_covariance(cov, model, c, SimulationConfig(200, 63, base_seed=2), gen)
        np.testing.assert_allclose(est.mean, analytic, atol=1e-12)

    def test_generator_mode_agreement(self):
        rng = np.random.default_rng(6)
        model = model_from_pi(random_stochastic(rng, 3))
        gen = GeneratorModel(random_generator(rng, 3) * 0.2)
        cov = RegimeCovariance({s: random_spd(rng, 3) * 1e-4 for s in STATES})
        c = SwapContract(20, 0.0004, 0.0)
        cfg = SimulationConfig(100_000, 20, base_seed=3, initial="Down", n_workers=4)
        est = mc_expected_covariance(cov, model, c, cfg, gen)
        analytic = assemble_expected_covariance(cov, model, gen, c, "generator", initial="Down").matrix
        assert np.all(np.abs(est.mean - analytic) <= 3 * est.std_err)

    def test_one_step_reference_fixture(self, ref_model, ref_table):
        cov = regime_fixture(ref_model, ref_table, perturb=1.5)
        c = SwapContract(63, 0.0004, 0.0)
        est = mc_expected_covariance(cov, ref_model, c, SimulationConfig(100_000, 63, base_seed=4, n_workers=4))
        assert np.all(np.abs(np.diag(est.mean) - [42.978, 43.275, 40.240]) <= 3 * np.diag(est.std_err))

    def test_standard_error_rate(self, ref_model, ref_table):
        cov = regime_fixture(ref_model, ref_table)
        c = SwapContract(63, 0.0004, 0.0)
        small = mc_expected_covariance(cov, ref_model, c, SimulationConfig(10_000, 63, base_seed=5))
        large = mc_expected_covariance(cov, ref_model, c, SimulationConfig(40_000, 63, base_seed=6, n_workers=4))
        ratio = small.std_err / large.std_err
        assert np.all(np.abs(ratio - 2.0) < 0.2 * 2.0)


class TestSwapPrice:
    def test_trace_single_state(self):
        rng = np.random.default_rng(7)
        omega = random_spd(rng, 3) * 1e-4
        model = single_state_model()
        cov = RegimeCovariance({Regime.MIDDLE: omega})
        c = SwapContract(63, 0.0004, 90.0)
        mc = mc_swap_price(Measure.TRACE, cov, model, c, SimulationConfig(50, 63))
        analytic = price_trace(assemble_expected_covariance(cov, model, None, c), c).price
        assert mc.price == pytest.approx(analytic, abs=1e-9)

    def test_eigen_needs_target(self, ref_model, ref_table):
        cov = regime_fixture(ref_model, ref_table)
        c = SwapContract(63, 0.0004, 30.0, Measure.MAX_EIGEN)
        with pytest.raises(DomainError):
            mc_swap_price("max-eigen", cov, ref_model, c, SimulationConfig(10, 63))

    def test_jensen_gap_nonnegative_four_assets(self):
        rng = np.random.default_rng(8)
        model = model_from_pi(random_stochastic(rng, 3))
        cov = RegimeCovariance({s: random_spd(rng, 4) * 1e-4 for s in STATES})
        means = np.array([0.0005, 0.0009, 0.0007, 0.0003])
        c = SwapContract(10, 0.0004, 30.0, Measure.MAX_EIGEN)
        mc = mc_swap_price(Measure.MAX_EIGEN, cov, model, c, SimulationConfig(5_000, 10, base_seed=1), means, 0.0006)
        # a pointwise maximum is convex, so its average dominates the maximum of the average
        assert mc.jensen_gap > 0
        assert mc.weights.shape == (4,)
