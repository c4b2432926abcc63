import numpy as np
import pytest
from hypothesis import given, strategies as st

from coagfrag.errors import ConfigError, WeightError
from coagfrag.kinetics import (becker_doring_model, powerlaw_model,
                               uniform_binary_model)
from coagfrag.weights import (MomentFunctional, TildeWeight, WeightSequence,
                              analytic_kappa_sup, find_kappa_certificate,
                              first_moment, kappa_estimate, number_moment,
                              weighted_norm)


class TestWeightSequence:
    def test_power_values(self):
        w = WeightSequence.power(2.0)
        assert np.array_equal(w.values(4), [1.0, 4.0, 9.0, 16.0])

    def test_geometric_values(self):
        w = WeightSequence.geometric(3.0)
        assert np.array_equal(w.values(3), [3.0, 9.0, 27.0])

    def test_power_p1_is_mass_weight(self):
        assert np.array_equal(WeightSequence.power(1.0).values(5),
                              np.arange(1.0, 6.0))

    def test_tabulated_roundtrip(self):
        w = WeightSequence.tabulated([1.0, 2.5, 4.0])
        assert np.array_equal(w.values(3), [1.0, 2.5, 4.0])

    def test_rejects_weight_below_size(self):
        # admissibility requires w_n >= n
        with pytest.raises(WeightError):
            WeightSequence.tabulated([1.0, 1.5, 3.0]).values(3)

    def test_rejects_nonmonotone(self):
        with pytest.raises(WeightError):
            WeightSequence.tabulated([2.0, 5.0, 4.0]).values(3)

    def test_rejects_subexponential_power(self):
        with pytest.raises(ConfigError):
            WeightSequence.power(0.5)

    def test_rejects_geometric_ratio_below_one(self):
        with pytest.raises(ConfigError):
            WeightSequence.geometric(0.9)

    def test_ratio_matches_direct_quotient(self):
        w = WeightSequence.power(2.0)
        assert w.ratio(np.array([2]), 4)[0] == pytest.approx(0.25, abs=1e-15)

    def test_ratio_is_overflow_safe(self):
        # w_n / w_j with w_n = 3**n overflows any direct evaluation at
        # these indices; the quotient itself is representable (or cleanly
        # underflows to zero far below the diagonal).
        w = WeightSequence.geometric(3.0)
        with np.errstate(over="raise"):
            vals = w.ratio(np.arange(790, 800), 800)
        assert np.all(np.isfinite(vals))
        assert vals[-1] == pytest.approx(1.0 / 3.0, rel=1e-12)

    def test_log_values_match_values(self):
        w = WeightSequence.geometric(2.0)
        assert np.allclose(np.exp(w.log_values(20)), w.values(20), rtol=1e-13)


class TestTildeWeight:
    def test_alpha_zero_is_passthrough(self):
        w = WeightSequence.power(1.0)
        model = becker_doring_model()
        tw = TildeWeight(w, 0.0, model.rates)
        assert np.array_equal(tw.values(6), w.values(6))

    def test_alpha_half_scales_by_rates(self):
        w = WeightSequence.power(1.0)
        model = becker_doring_model()
        a = model.rates(4)
        tw = TildeWeight(w, 0.5, model.rates)
        expected = (1.0 + a) ** 0.5 * w.values(4)
        assert np.allclose(tw.values(4), expected, rtol=1e-15)

    def test_alpha_range_is_validated(self):
        w = WeightSequence.power(1.0)
        with pytest.raises(Exception):
            TildeWeight(w, 1.0, becker_doring_model().rates)


class TestMoments:
    def test_number_and_mass(self):
        u = np.array([1.0, 2.0, 0.5])
        assert number_moment(u) == pytest.approx(3.5, abs=0.0)
        assert first_moment(u) == pytest.approx(1 + 4 + 1.5, abs=0.0)

    def test_functional_from_weight(self):
        w = WeightSequence.power(2.0)
        f = MomentFunctional.from_weight(w)
        u = np.array([1.0, 1.0])
        assert f.apply(u) == pytest.approx(5.0, abs=0.0)

    @given(st.lists(st.floats(-10, 10), min_size=1, max_size=40),
           st.lists(st.floats(-10, 10), min_size=1, max_size=40))
    def test_norm_triangle_inequality(self, xs, ys):
        n = max(len(xs), len(ys))
        u = np.zeros(n); u[:len(xs)] = xs
        v = np.zeros(n); v[:len(ys)] = ys
        w = WeightSequence.power(1.0).values(n)
        lhs = weighted_norm(w, u + v)
        rhs = weighted_norm(w, u) + weighted_norm(w, v)
        assert lhs <= rhs * (1 + 1e-12) + 1e-12

    @given(st.lists(st.floats(-5, 5), min_size=1, max_size=30),
           st.floats(-3, 3))
    def test_norm_absolute_homogeneity(self, xs, c):
        u = np.array(xs)
        w = WeightSequence.power(1.0).values(len(xs))
        assert weighted_norm(w, c * u) == pytest.approx(
            abs(c) * weighted_norm(w, u), rel=1e-12, abs=1e-12)


class TestKappa:
    def test_becker_doring_geometric_exact(self):
        # row maximum sits at j = 2: (w_1 * 2) / w_2 = 2/r
        model = becker_doring_model()
        w = WeightSequence.geometric(3.0)
        assert kappa_estimate(model, w, 200) == pytest.approx(2.0 / 3.0,
                                                              abs=1e-14)

    def test_mass_conserving_families_kappa_one(self):
        w = WeightSequence.power(1.0)
        for model in (becker_doring_model(), uniform_binary_model(),
                      powerlaw_model(1.0)):
            assert kappa_estimate(model, w, 300) == pytest.approx(1.0,
                                                                  abs=1e-12)

    def test_analytic_sup_table(self):
        bd = becker_doring_model()
        ub = uniform_binary_model()
        assert analytic_kappa_sup(bd, WeightSequence.geometric(3.0)) \
            == pytest.approx(2.0 / 3.0, abs=1e-15)
        assert analytic_kappa_sup(bd, WeightSequence.power(2.0)) == 1.0
        assert analytic_kappa_sup(ub, WeightSequence.geometric(2.0)) \
            == pytest.approx(1.0, abs=1e-15)
        assert analytic_kappa_sup(ub, WeightSequence.power(3.0)) \
            == pytest.approx(0.5, abs=1e-15)

    @given(st.integers(4, 64))
    def test_estimate_never_exceeds_analytic_sup(self, J):
        model = uniform_binary_model()
        w = WeightSequence.power(2.0)
        sup = analytic_kappa_sup(model, w)
        assert kappa_estimate(model, w, J) <= sup * (1 + 1e-12)

    @given(st.integers(3, 40), st.integers(3, 40))
    def test_estimate_monotone_in_grid_size(self, j1, j2):
        lo, hi = sorted((j1, j2))
        model = uniform_binary_model()
        w = WeightSequence.power(1.5)
        assert kappa_estimate(model, w, lo) <= \
            kappa_estimate(model, w, hi) + 1e-15

    def test_certificate_becker_doring(self):
        model = becker_doring_model()
        found = find_kappa_certificate(model, "geometric", 200, target=0.7)
        assert found is not None
        w, kappa = found
        assert w.kind == "geometric" and w.r == pytest.approx(3.0)
        assert kappa == pytest.approx(2.0 / 3.0, abs=1e-12)

    def test_certificate_uniform_binary_power(self):
        model = uniform_binary_model()
        found = find_kappa_certificate(model, "power", 200, target=0.9)
        assert found is not None
        w, kappa = found
        # 2/(p+1) <= 0.9 first holds on the grid at p = 1.5
        assert w.p == pytest.approx(1.5)
        assert kappa <= 0.9

    def test_certificate_failure_returns_none(self):
        # kappa = 1 for every admissible weight; target below 1 fails
        model = becker_doring_model()
        assert find_kappa_certificate(model, "power", 64, target=0.5) is None
