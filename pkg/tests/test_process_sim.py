import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from navar.process_sim import (
    F1,
    F2,
    F3,
    F4,
    F5,
    PAPER_FUNCTIONS,
    ZERO,
    AdditiveVarSpec,
    NoiseKind,
    NonstationaryError,
    PatternKind,
    PatternSpec,
    TimeSeriesPanel,
    component_from_name,
    coupling_decay,
    custom,
    generate_pattern,
    linear,
    lipschitz_matrix,
    paper_design,
    simulate,
    simulate_batch,
    spec_from_adjacency,
    stability_margin,
)


def numeric_lipschitz(f, lo=-10.0, hi=10.0, m=2_000_001):
    x = np.linspace(lo, hi, m)
    return float(np.max(np.abs(np.diff(f(x)) / np.diff(x))))


class TestComponents:
    def test_paper_functions_values(self):
        from scipy.stats import norm

        x = np.array([-1.3, 0.0, 0.7, 2.5])
        np.testing.assert_allclose(F1(x), 0.2 * x)
        np.testing.assert_allclose(F2(x), -0.15 * np.sin(1.5 * x))
        np.testing.assert_allclose(F3(x), -0.5 * norm.cdf(x - 0.5))
        np.testing.assert_allclose(F4(x), 0.2 * x * np.exp(-x**2 / 2))
        np.testing.assert_allclose(F5(x), 0.15 * np.log(np.abs(x) + 2))

    @pytest.mark.parametrize("f", PAPER_FUNCTIONS, ids=lambda f: f.name)
    def test_lipschitz_matches_dense_grid(self, f):
        assert f.lipschitz_constant() == pytest.approx(numeric_lipschitz(f), rel=1e-5)

    def test_analytic_constants(self):
        consts = [f.lipschitz_constant() for f in PAPER_FUNCTIONS]
        np.testing.assert_allclose(consts, [0.2, 0.225, 0.5 / math.sqrt(2 * math.pi), 0.2, 0.075])

    def test_zero_and_linear(self):
        assert ZERO.lipschitz_constant() == 0
        np.testing.assert_array_equal(ZERO(np.arange(3.0)), 0)
        assert linear(-0.7).lipschitz_constant() == 0.7

    def test_custom_without_constant_is_unbounded(self):
        spec = AdditiveVarSpec(1, {(0, 0): custom(np.tanh)})
        with pytest.raises(ValueError, match="unbounded component"):
            lipschitz_matrix(spec)

    def test_name_roundtrip(self):
        for f in (*PAPER_FUNCTIONS, ZERO, linear(0.25)):
            assert component_from_name(f.name) == f


class TestSpecAndMatrix:
    def test_index_validation(self):
        with pytest.raises(ValueError):
            AdditiveVarSpec(2, {(0, 2): F1})

    def test_counts(self):
        spec = AdditiveVarSpec(3, {(0, 0): F1, (0, 2): F2, (2, 1): F3, (1, 1): ZERO})
        assert spec.s == 3 and spec.s0 == 2

    def test_all_zero_matrix(self):
        spec = AdditiveVarSpec(3, {(0, 0): ZERO})
        np.testing.assert_array_equal(lipschitz_matrix(spec), 0)

    def test_scalar(self):
        np.testing.assert_array_equal(lipschitz_matrix(AdditiveVarSpec(1, {(0, 0): linear(0.5)})), [[0.5]])

    def test_full_row_sum(self):
        spec = AdditiveVarSpec(5, {(0, k): f for k, f in enumerate(PAPER_FUNCTIONS)})
        H = lipschitz_matrix(spec)
        assert H[0].sum() == pytest.approx(0.8995, abs=1e-4)
        numeric = sum(numeric_lipschitz(f) for f in PAPER_FUNCTIONS)
        assert H[0].sum() == pytest.approx(numeric, rel=1e-5)


class TestStabilityMargin:
    def test_zero(self):
        assert stability_margin(np.zeros((3, 3))) == 0

    def test_diagonal(self):
        assert stability_margin(0.9 * np.eye(4)) == pytest.approx(0.9)

    def test_power_helps(self):
        H = np.array([[0.0, 2.0], [0.3, 0.0]])
        assert stability_margin(H, m_max=2) == pytest.approx(math.sqrt(0.6))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(1, 6), st.integers(0, 10_000))
    def test_bounded_by_norm_and_radius(self, p, seed):
        H = np.random.default_rng(seed).uniform(0, 0.5, (p, p))
        m = stability_margin(H)
        assert m <= np.abs(H).sum(axis=1).max() + 1e-12
        assert m >= max(abs(np.linalg.eigvals(H))) - 1e-12


class TestSimulate:
    def test_unstable_rejected(self):
        spec = AdditiveVarSpec(1, {(0, 0): linear(1.1)})
        with pytest.raises(NonstationaryError, match="nonstationary specification"):
            simulate(spec, 10)

    def test_white_noise_variance(self):
        panel = simulate(AdditiveVarSpec(2, {}), 10_000, seed=3)
        assert np.all(np.abs(panel.data.var(axis=0) / 0.04 - 1) < 0.1)
        r1 = [np.corrcoef(c[:-1], c[1:])[0, 1] for c in panel.data.T]
        assert np.all(np.abs(r1) < 3 / math.sqrt(panel.n))

    def test_ar1_moments(self):
        n = 50_000
        x = simulate(AdditiveVarSpec(1, {(0, 0): linear(0.5)}, noise_scale=1.0), n, seed=11).data[:, 0]
        r1 = np.corrcoef(x[:-1], x[1:])[0, 1]
        # asymptotic sd of the lag-1 autocorrelation of an AR(1): sqrt((1 - phi^2) / n)
        assert abs(r1 - 0.5) < 3 * math.sqrt(0.75 / n)
        # var of the sample variance: 2 sigma^4 (1 + phi^2) / ((1 - phi^2) n)
        v = 1 / 0.75
        assert abs(x.var() - v) < 3 * math.sqrt(2 * v**2 * 1.25 / 0.75 / n)

    def test_paper_design_bounded(self):
        panel = simulate(paper_design("random", 20, seed=2), 500, seed=5)
        assert np.max(np.abs(panel.data)) < 10

    def test_determinism(self):
        spec = paper_design("band", 10, seed=1)
        a = simulate(spec, 100, seed=9).data
        b = simulate(spec, 100, seed=9).data
        assert np.array_equal(a, b)

    def test_short_burn_in_warns(self):
        spec = AdditiveVarSpec(1, {(0, 0): linear(0.9)})
        with pytest.warns(RuntimeWarning, match="burn_in"):
            simulate(spec, 10, burn_in=5)

    def test_nonfinite_reports_time(self):
        spec = AdditiveVarSpec(1, {(0, 0): custom(lambda x: np.where(x > 0, np.inf, 0.0), 0.5)})
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            with pytest.raises(FloatingPointError, match="time index"):
                simulate_batch(spec, 50, 1, burn_in=0, seed=1)

    @pytest.mark.parametrize("kind", list(NoiseKind))
    def test_noise_standardised(self, kind):
        spec = AdditiveVarSpec(1, {}, noise_scale=0.5, noise_kind=kind)
        e = spec.draw_noise(np.random.default_rng(0), 400_000)
        assert e.std() == pytest.approx(0.5, rel=0.02)

    def test_batch_shape(self):
        out = simulate_batch(paper_design("random", 20), 30, 4, seed=1)
        assert out.shape == (4, 30, 20)


class TestPanel:
    def test_validation(self):
        with pytest.raises(ValueError):
            TimeSeriesPanel(np.zeros((1, 3)))
        with pytest.raises(ValueError, match="row 1"):
            TimeSeriesPanel(np.array([[0.0, 1.0], [np.nan, 2.0]]))

    def test_labels_default(self):
        assert TimeSeriesPanel(np.zeros((3, 2))).labels == ("x1", "x2")


class TestCoupling:
    def test_memoryless(self):
        d = coupling_decay(AdditiveVarSpec(3, {}), 5, 10, seed=0)
        np.testing.assert_array_equal(d, 0)

    def test_scalar_linear_exact(self):
        d = coupling_decay(AdditiveVarSpec(1, {(0, 0): linear(0.5)}), 20, 7, seed=0)
        np.testing.assert_allclose(d, 0.5 ** np.arange(1, 21), rtol=1e-12)

    def test_paper_design_contracts(self):
        spec = paper_design("random", 20, seed=0)
        rho = stability_margin(lipschitz_matrix(spec))
        d = coupling_decay(spec, 30, 200, seed=1)
        assert np.all(np.diff(d) <= 0)
        slope = np.polyfit(np.arange(1, 31), np.log(d), 1)[0]
        assert slope <= math.log(rho) + 0.02


class TestPatterns:
    @pytest.mark.parametrize("kind", list(PatternKind))
    @pytest.mark.parametrize("p", [20, 50, 100])
    def test_row_sums(self, kind, p):
        A = generate_pattern(PatternSpec(kind, p, 5, seed=p))
        assert np.all(A.sum(axis=1) == 5)

    def test_band_small(self):
        A = generate_pattern(PatternSpec("band", 6, 3))
        expected = np.array([
            [1, 1, 1, 0, 0, 0],
            [1, 1, 1, 0, 0, 0],
            [0, 1, 1, 1, 0, 0],
            [0, 0, 1, 1, 1, 0],
            [0, 0, 0, 1, 1, 1],
            [0, 0, 0, 1, 1, 1],
        ])
        np.testing.assert_array_equal(A, expected)

    def test_cluster_blocks(self):
        A = generate_pattern(PatternSpec("cluster", 20, 5, seed=4))
        mask = np.kron(np.eye(2), np.ones((10, 10)))
        assert np.all(A[mask == 0] == 0)

    def test_infeasible(self):
        with pytest.raises(ValueError):
            PatternSpec("cluster", 15)
        with pytest.raises(ValueError):
            PatternSpec("random", 4, 5)

    def test_deterministic(self):
        a = generate_pattern(PatternSpec("random", 30, 5, seed=7))
        b = generate_pattern(PatternSpec("random", 30, 5, seed=7))
        assert np.array_equal(a, b)

    def test_functions_in_column_order(self):
        A = np.zeros((1, 8), dtype=int)
        A[0, [1, 3, 4, 6, 7]] = 1
        spec = spec_from_adjacency(np.vstack([A] * 8))
        assert [spec.entries[(0, k)] for k in (1, 3, 4, 6, 7)] == list(PAPER_FUNCTIONS)

    def test_paper_design_stable(self):
        for kind in PatternKind:
            spec = paper_design(kind, 20)
            assert stability_margin(lipschitz_matrix(spec)) == pytest.approx(0.8994711, abs=1e-6)
