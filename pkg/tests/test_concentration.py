"""Tests for path statistics, tail curves and concentration checks.

Oracles used here:

* scalar paths with closed-form Hölder constants (constants give 0, the
  identity path gives exactly 1) and the closed-form double integral
  B = 1/10 behind the continuity bound for f(t) = t with p = 8,
* per-pair Besov norms recomputed directly, against the stacked block
  evaluation used by the fast path,
* exact Gaussian moments: E He_2(g)^4 = 60 and E He_2(g)^2 = 2 by
  moment expansion with double factorials, plus the p = 2 degeneration
  of the moment ratio, which is identically 1,
* the binomial <-> beta quantile identities defining exact confidence
  bounds, cross-checked through the binomial CDF,
* synthetic tail curves sampled from a distribution whose exceedance
  function is exactly exp(-5 h^2 / sigma^2), fitted back with and
  without binomial noise,
* exact amplitude homogeneity of the noise recursion, which forces the
  fitted h^2 rate at sigma and 2 sigma to differ by a factor 4.
"""

import csv
import json
import math

import numpy as np
import pytest
from scipy.stats import binom

from phi4lab.coeffs import CoefficientSet
from phi4lab.concentration import (
    TailCurve,
    gaussian_tail_fit,
    grr_bound,
    holder_constant,
    linear_solution_path,
    linear_sup_statistic,
    nelson_check,
    sup_path_norm,
    symbol_sup_statistic,
    t_scaling_probe,
    tail_curve_csv,
    tail_estimate,
    tail_report_json,
    xi_norm,
)
from phi4lab.grids import SpectralField, TorusGrid
from phi4lab.noise import NoiseRealization, StepKernel, TimeGrid, quartic_renorm_mc
from phi4lab.paley import besov_norm, default_partition
from phi4lab.solvers import solve_vw
from phi4lab.symbols import SymbolStepper

DAMPED = CoefficientSet(0.0, -1.0, 1.0)


class TestPathNorms:
    def test_constant_path_has_zero_holder_constant(self):
        ts = np.linspace(0.0, 1.0, 101)
        path = (ts, np.full(101, 2.3))
        assert holder_constant(path, 0.0, 0.5) == 0.0
        assert sup_path_norm(path, 0.0) == 2.3

    def test_identity_path_holder_constant_is_one(self):
        ts = np.linspace(0.0, 1.0, 101)
        assert holder_constant((ts, ts.copy()), 0.0, 1.0) == 1.0

    def test_spectral_sup_matches_per_time_besov(self):
        grid = TorusGrid(16, 3)
        path = linear_solution_path(grid, TimeGrid(1.0, 24), 8, DAMPED, 0.1, seed=3)
        part = default_partition(grid)
        direct = max(besov_norm(SpectralField(grid, c), -0.6, part) for c in path.coeffs)
        assert sup_path_norm(path, -0.6) == direct

    def test_spectral_holder_matches_per_pair_besov(self):
        grid = TorusGrid(16, 3)
        path = linear_solution_path(grid, TimeGrid(1.0, 24), 8, DAMPED, 0.1, seed=3)
        part = default_partition(grid)
        best = 0.0
        for i in range(len(path)):
            for j in range(i + 1, len(path)):
                d = besov_norm(SpectralField(grid, path.coeffs[j] - path.coeffs[i]), -0.7, part)
                best = max(best, d / (path.times[j] - path.times[i]) ** 0.05)
        fast = holder_constant(path, -0.7, 0.05)
        assert abs(fast - best) <= 1e-12 * best

    def test_subsampling_cap_keeps_linear_path_exact(self):
        # the identity path attains its ratio on every pair, so the evenly
        # subsampled enumeration must still return exactly 1
        ts = np.linspace(0.0, 1.0, 1500)
        assert holder_constant((ts, ts.copy()), 0.0, 1.0) == 1.0
        assert holder_constant((ts, ts.copy()), 0.0, 1.0, cap=16) == 1.0

    def test_subsampling_is_a_lower_bound_on_rough_paths(self):
        rng = np.random.default_rng(7)
        ts = np.linspace(0.0, 1.0, 801)
        walk = np.cumsum(rng.standard_normal(801)) * 0.05
        full = holder_constant((ts, walk), 0.0, 0.5, cap=801)
        sub = holder_constant((ts, walk), 0.0, 0.5, cap=64)
        assert 0.0 < sub <= full

    def test_gamma_outside_unit_interval_rejected(self):
        ts = np.linspace(0.0, 1.0, 11)
        with pytest.raises(ValueError, match="gamma"):
            holder_constant((ts, ts.copy()), 0.0, 0.0)
        with pytest.raises(ValueError, match="gamma"):
            holder_constant((ts, ts.copy()), 0.0, 1.2)

    def test_path_argument_validation(self):
        with pytest.raises(TypeError, match="path"):
            sup_path_norm(3.0, 0.0)
        with pytest.raises(ValueError, match="entries"):
            sup_path_norm((np.linspace(0, 1, 5), np.zeros(4)), 0.0)


class TestRefinementStudy:
    def test_linear_path_holder_stable_under_time_refinement(self):
        # lam = 0.1: Hölder exponent lam/2 in smoothness -0.6 - lam, on one
        # shared noise realization aggregated to each coarser grid
        grid = TorusGrid(16, 3)
        lam = 0.1
        for seed in (1, 2):
            base = NoiseRealization(grid, TimeGrid(1.0, 256), 8, seed)
            consts = []
            for fac in (4, 2, 1):
                nz = base.aggregate(fac) if fac > 1 else base
                path = linear_solution_path(grid, nz.timegrid, 8, DAMPED, 0.1, seed, noise=nz)
                consts.append(holder_constant(path, -0.6 - lam, lam / 2.0))
            assert all(np.isfinite(c) and c > 0.0 for c in consts)
            for a, b in zip(consts, consts[1:]):
                assert 0.8 < b / a < 1.5


class TestGrrBound:
    def test_constant_path_bound_is_zero(self):
        ts = np.linspace(0.0, 1.0, 101)
        assert grr_bound((ts, np.full(101, 1.7)), 8, 0.5) == 0.0

    def test_identity_path_against_closed_form(self):
        # B = int int |x-y|^3 = 1/10 exactly; the trapezoidal value sits a
        # hair above it, and the bound must dominate the unit Hölder constant
        ts = np.linspace(0.0, 1.0, 101)
        bound = grr_bound((ts, ts.copy()), 8, 0.5)
        const = (8.0 * 4.0**0.125 * (0.5 + 0.125) / (0.5 - 0.125)) ** 8
        assert abs(bound - const * 0.1) <= 5e-3 * const * 0.1
        hol = holder_constant((ts, ts.copy()), 0.0, 0.5 - 0.125)
        assert hol == 1.0
        assert bound >= hol**8

    def test_parameter_validation(self):
        ts = np.linspace(0.0, 1.0, 11)
        path = (ts, ts.copy())
        with pytest.raises(ValueError, match="even integer"):
            grr_bound(path, 7, 0.5)
        with pytest.raises(ValueError, match="even integer"):
            grr_bound(path, 0, 0.5)
        with pytest.raises(ValueError, match="exceed 1/p"):
            grr_bound(path, 8, 0.125)
        grid = TorusGrid(8, 2)
        spath = (ts, np.zeros((11,) + grid.hshape, dtype=np.complex128), grid)
        with pytest.raises(ValueError, match="beta"):
            grr_bound(spath, 8, 0.5)

    def test_domination_on_fifty_noise_paths(self):
        # property sweep: the bound must dominate the matching Hölder power
        # on every sampled stochastic-convolution path, no exceptions
        grid = TorusGrid(8, 3)
        tg = TimeGrid(1.0, 48)
        p, gp, beta = 8, 0.3, -1.2
        for seed in range(50):
            path = linear_solution_path(grid, tg, 4, DAMPED, 0.1, seed)
            bound = grr_bound(path, p, gp, beta=beta)
            hol = holder_constant(path, beta, gp - 1.0 / p)
            assert np.isfinite(bound)
            assert bound >= hol**p


class TestNelson:
    def test_exact_fourth_moment_of_second_chaos(self):
        # E (g^2 - 1)^4 by moment expansion: sum C(4,j) (-1)^(4-j) (2j-1)!!
        dfact = {0: 1, 2: 1, 4: 3, 6: 15, 8: 105}
        ex4 = sum(math.comb(4, j) * (-1) ** (4 - j) * dfact[2 * j] for j in range(5))
        ex2 = dfact[4] - 2 * dfact[2] + 1
        assert ex4 == 60
        assert ex2 == 2
        # the exact ratio sits well under the bound even with constant 1
        exact_ratio = 60.0**0.25 / (3.0 * math.sqrt(2.0))
        assert exact_ratio < 1.0
        emp = nelson_check(2, 4, replicas=200_000, seed=24)
        assert abs(emp - exact_ratio) < 0.02

    def test_gaussian_fourth_moment(self):
        exact_ratio = 3.0**0.25 / math.sqrt(3.0)
        emp = nelson_check(1, 4, replicas=200_000, seed=14)
        assert abs(emp - exact_ratio) < 0.02

    def test_p_two_ratio_is_exactly_one(self):
        for order in (1, 2, 3):
            assert nelson_check(order, 2, replicas=50_000, seed=order) == 1.0

    def test_ratio_below_conservative_ceiling(self):
        for order in (1, 2, 3):
            for p in (2, 4, 6, 8):
                ratio = nelson_check(order, p, replicas=100_000, seed=10 * order + p)
                assert 0.2 < ratio <= 3.0

    def test_parameter_validation(self):
        with pytest.raises(ValueError, match="even"):
            nelson_check(2, 3)
        with pytest.raises(ValueError, match="order"):
            nelson_check(0, 4)


class TestTailEstimate:
    def test_threshold_zero_has_unit_probability(self):
        stat = lambda i, s: 1.0 + 0.1 * i
        curve = tail_estimate(stat, [0.0, 1.5], 200, 5)
        assert curve.p_hat[0] == 1.0
        assert curve.ci_low[0] < 1.0 == curve.ci_high[0]

    def test_degenerate_statistic(self):
        curve = tail_estimate(lambda i, s: 0.5, [0.0, 0.4, 0.6], 200, 5)
        assert list(curve.p_hat) == [1.0, 1.0, 0.0]
        assert list(curve.zero_cells) == [False, False, True]

    def test_statistic_receives_replica_and_master_seed(self):
        seen = []
        tail_estimate(lambda i, s: seen.append((i, s)) or 1.0, [0.5], 5, 42)
        assert seen == [(i, 42) for i in range(5)]

    def test_deterministic_given_master_seed(self):
        def stat(i, seed):
            return np.random.default_rng((seed, i)).exponential()

        a = tail_estimate(stat, [0.2, 0.6, 1.8], 300, 9)
        b = tail_estimate(stat, [0.2, 0.6, 1.8], 300, 9)
        c = tail_estimate(stat, [0.2, 0.6, 1.8], 300, 10)
        assert np.array_equal(a.counts, b.counts)
        assert not np.array_equal(a.counts, c.counts)
        assert np.all(np.diff(a.counts) <= 0)

    def test_confidence_bounds_solve_binomial_equations(self):
        values = np.concatenate([np.ones(37), np.zeros(63)])
        curve = tail_estimate(lambda i, s: values[i], [0.5, 2.0], 100, 1)
        assert list(curve.counts) == [37, 0]
        k, n = 37, 100
        low, high = curve.ci_low[0], curve.ci_high[0]
        assert abs(binom.cdf(k - 1, n, low) - 0.975) < 1e-9
        assert abs(binom.cdf(k, n, high) - 0.025) < 1e-9
        assert curve.ci_low[1] == 0.0
        assert abs(curve.ci_high[1] - (1.0 - 0.025 ** (1.0 / n))) < 1e-12

    def test_input_validation(self):
        with pytest.raises(ValueError, match="h_grid"):
            tail_estimate(lambda i, s: 1.0, [0.5, 0.4], 10, 0)
        with pytest.raises(ValueError, match="h_grid"):
            tail_estimate(lambda i, s: 1.0, [-0.1, 0.4], 10, 0)
        with pytest.raises(ValueError, match="replica"):
            tail_estimate(lambda i, s: 1.0, [0.5], 0, 0)

    def test_curve_invariants_enforced(self):
        ok = dict(replicas=100, sigma=0.1)
        TailCurve([0.1, 0.2], [0.8, 0.4], [0.7, 0.3], [0.9, 0.5], **ok)
        with pytest.raises(ValueError, match="non-increasing"):
            TailCurve([0.1, 0.2], [0.4, 0.8], [0.3, 0.7], [0.5, 0.9], **ok)
        with pytest.raises(ValueError, match=r"\[0, 1\]"):
            TailCurve([0.1, 0.2], [1.2, 0.4], [0.7, 0.3], [1.0, 0.5], **ok)
        with pytest.raises(ValueError, match="counts"):
            TailCurve([0.1, 0.2], [0.5, 0.5], [0.4, 0.4], [0.6, 0.6], counts=[50, 51], **ok)
        with pytest.raises(ValueError, match="shape"):
            TailCurve([0.1, 0.2], [0.8, 0.4, 0.1], [0.7, 0.3], [0.9, 0.5], **ok)


def _nested_gaussian_statistic(sig, rate):
    """Replica statistic with exceedance function exactly exp(-rate h^2/sig^2)."""

    def stat(i, seed):
        u = np.random.default_rng((seed, i)).random()
        return sig * math.sqrt(-math.log(u) / rate)

    return stat


class TestGaussianFit:
    def test_exact_synthetic_curve_recovered(self):
        h = np.linspace(0.05, 0.5, 8)
        sig = 0.25
        p = np.exp(-5.0 * h**2 / sig**2)
        curve = TailCurve(h, p, np.clip(0.9 * p, 0, 1), np.clip(1.1 * p, 0, 1), 1000, sigma=sig)
        fit = gaussian_tail_fit(curve)
        assert abs(fit.slope_C - 5.0) < 1e-9
        assert fit.r_squared > 1.0 - 1e-12
        assert abs(fit.intercept_logD) < 1e-10
        assert fit.cells == 8

    def test_noisy_recovery_within_fifteen_percent(self):
        h = np.linspace(0.05, 0.45, 9)
        for seed in (1, 2, 3):
            curve = tail_estimate(_nested_gaussian_statistic(0.3, 5.0), h, 1000, seed, sigma=0.3)
            fit = gaussian_tail_fit(curve)
            assert abs(fit.slope_C - 5.0) / 5.0 < 0.15
            assert fit.r_squared > 0.99

    def test_synthetic_sigma_scaling_of_raw_rate(self):
        h = np.linspace(0.04, 0.44, 11)
        for seed in (4, 11, 23):
            c1 = tail_estimate(_nested_gaussian_statistic(0.2, 2.0), h, 1000, seed, sigma=0.2)
            c2 = tail_estimate(_nested_gaussian_statistic(0.4, 2.0), h, 1000, seed, sigma=0.4)
            f1, f2 = gaussian_tail_fit(c1), gaussian_tail_fit(c2)
            raw_ratio = (f1.slope_C / 0.2**2) / (f2.slope_C / 0.4**2)
            assert 3.0 < raw_ratio < 5.3

    def test_insufficient_cells_rejected(self):
        curve = TailCurve([0.1, 0.2, 0.3], [1.0, 0.5, 0.0], [0.9, 0.4, 0.0],
                          [1.0, 0.6, 0.1], 100, sigma=0.1)
        with pytest.raises(ValueError, match="4 cells"):
            gaussian_tail_fit(curve)

    def test_missing_sigma_rejected(self):
        h = np.linspace(0.1, 0.8, 6)
        p = np.exp(-h)
        curve = TailCurve(h, p, p * 0.9, np.clip(p * 1.1, 0, 1), 100)
        with pytest.raises(ValueError, match="sigma"):
            gaussian_tail_fit(curve)


@pytest.fixture(scope="module")
def lin_tail_pair():
    """Stochastic-convolution sup-norm curves at sigma and 2 sigma."""
    grid = TorusGrid(8, 3)
    tg = TimeGrid(1.0, 24)
    h = np.linspace(0.15, 0.45, 11)
    c1 = tail_estimate(
        linear_sup_statistic(grid, tg, 4, DAMPED, 0.1, -0.6), h, 400, 3,
        sigma=0.1, label="lin sup -0.6",
    )
    c2 = tail_estimate(
        linear_sup_statistic(grid, tg, 4, DAMPED, 0.2, -0.6), 2.0 * h, 400, 104,
        sigma=0.2, label="lin sup -0.6",
    )
    return c1, c2


class TestLinearStatisticTails:
    def test_gaussian_shape_of_sup_norm_tail(self, lin_tail_pair):
        c1, c2 = lin_tail_pair
        for curve in (c1, c2):
            fit = gaussian_tail_fit(curve)
            assert fit.slope_C > 0.0
            assert fit.r_squared > 0.95
            assert fit.cells >= 8

    def test_raw_rate_scales_by_four_between_sigmas(self, lin_tail_pair):
        c1, c2 = lin_tail_pair
        f1, f2 = gaussian_tail_fit(c1), gaussian_tail_fit(c2)
        raw_ratio = (f1.slope_C / c1.sigma**2) / (f2.slope_C / c2.sigma**2)
        assert 3.0 < raw_ratio < 5.3
        # the normalized slopes themselves must collapse
        assert 0.8 < f1.slope_C / f2.slope_C < 1.25

    def test_statistic_is_deterministic_per_replica(self):
        grid = TorusGrid(8, 2)
        stat = linear_sup_statistic(grid, TimeGrid(0.5, 8), 4, DAMPED, 0.1, -0.6)
        assert stat(0, 7) == stat(0, 7)
        assert stat(0, 7) != stat(1, 7)


class TestChaosFamilyTails:
    def test_literal_power_thresholds_share_gaussian_shape(self):
        # events are sup ||tau|| > h^k for the degree-k member of the
        # ensemble; each curve must fit the same exp(-c h^2/sigma^2) form
        grid = TorusGrid(8, 2)
        tg = TimeGrid(1.0, 16)
        sig, seed, reps = 0.7, 77, 250
        part = default_partition(grid)
        kern = StepKernel(grid, tg, DAMPED)
        ct = quartic_renorm_mc(grid, tg, 4, DAMPED, seed, replicas=64, sigma=sig, kernel=kern)
        family = {"lin": 1, "iwick3": 3, "res_iwick3_wick2": 5}
        sups = {name: np.zeros(reps) for name in family}
        for r in range(reps):
            sym = SymbolStepper(
                grid, tg, 4, DAMPED, sig, seed,
                replica=r, kernel=kern, partition=part, ctilde=ct["estimate"],
            )
            for _ in range(tg.M):
                sym.step()
                vals = sym.values()
                for name in family:
                    b = besov_norm(SpectralField(grid, vals[name]), -0.6, part)
                    sups[name][r] = max(sups[name][r], b)
        hgrids = {
            "lin": np.linspace(1.1, 2.4, 8),
            "iwick3": np.linspace(0.36, 0.56, 8),
            "res_iwick3_wick2": np.linspace(0.52, 0.78, 8),
        }
        for name, k in family.items():
            h = hgrids[name]
            raw = tail_estimate(lambda i, s: sups[name][i], h**k, reps, seed, sigma=sig)
            # literal event check: counts really are exceedances of h**k
            recount = [(sups[name] > hk).sum() for hk in h**k]
            assert list(raw.counts) == recount
            curve = TailCurve(
                h, raw.p_hat, raw.ci_low, raw.ci_high, reps,
                sigma=sig, label=f"order {k}", counts=raw.counts, seed=seed,
            )
            fit = gaussian_tail_fit(curve)
            assert np.isfinite(fit.slope_C) and fit.slope_C > 0.0
            assert fit.r_squared > 0.9
            assert fit.cells >= 5


class TestXiNorm:
    def test_zero_paths_give_zero(self):
        grid = TorusGrid(8, 2)
        ts = np.linspace(0.0, 0.5, 11)
        z = np.zeros((11,) + grid.hshape, dtype=np.complex128)
        out = xi_norm((ts, z, grid), (ts, z, grid), 0.5, 0.05)
        assert out.value == 0.0

    def test_single_time_window_gives_zero(self):
        grid = TorusGrid(8, 2)
        ts = np.linspace(0.0, 0.5, 11)
        coeffs = np.ones((11,) + grid.hshape, dtype=np.complex128)
        out = xi_norm((ts, coeffs, grid), (ts, coeffs, grid), 0.0, 0.05)
        assert (out.sup_v, out.sup_w, out.holder_v, out.holder_w) == (0.0,) * 4

    def test_monotone_in_window_and_matches_components(self):
        grid = TorusGrid(8, 2)
        tg = TimeGrid(0.5, 20)
        sym = SymbolStepper(grid, tg, 4, CoefficientSet(0.5, -1.0, 0.5), 0.05, seed=21, ctilde=0.0)
        sol = solve_vw(sym)
        eps = 0.05
        values = []
        for t0 in (0.1, 0.25, 0.5):
            xi = xi_norm(sol.v_path(), sol.w_path(), t0, eps)
            values.append(xi.value)
            assert xi.value == max(xi.sup_v, xi.sup_w, xi.holder_v, xi.holder_w)
            keep = sol.times <= t0 + 1e-12
            vwin = (sol.times[keep], sol.v[keep], grid)
            wwin = (sol.times[keep], sol.w[keep], grid)
            assert xi.sup_v == sup_path_norm(vwin, 1.0 - 2 * eps)
            assert xi.sup_w == sup_path_norm(wwin, 1.5 - 2 * eps)
            assert xi.holder_v == holder_constant(vwin, 0.0, 0.125)
            assert xi.holder_w == holder_constant(wwin, 0.0, 0.125)
        assert values[0] <= values[1] <= values[2]
        assert 0.0 < values[2] < np.inf

    def test_parameter_validation(self):
        grid = TorusGrid(8, 2)
        ts = np.linspace(0.0, 0.5, 6)
        z = np.zeros((6,) + grid.hshape, dtype=np.complex128)
        with pytest.raises(ValueError, match="eps"):
            xi_norm((ts, z, grid), (ts, z, grid), 0.5, 0.0)
        with pytest.raises(ValueError, match="t0"):
            xi_norm((ts, z, grid), (ts, z, grid), -0.1, 0.05)


class TestTScalingProbe:
    def test_flat_statistic_gives_flat_slopes(self):
        h = np.linspace(0.05, 0.45, 9)
        fam = lambda T: _nested_gaussian_statistic(0.3, 5.0)
        rows = t_scaling_probe(fam, [0.5, 1.0, 2.0], 0.1, h, 600, 3, 0.3)
        assert len(rows) == 3
        slopes = [r["slope_C"] for r in rows]
        assert all(np.isfinite(s) and s > 0.0 for s in slopes)
        assert max(slopes) / min(slopes) < 1.2
        for r in rows:
            T = r["T"]
            expect = r["slope_C"] * max(T**0.1, T**0.02)
            assert abs(r["rescaled_slope"] - expect) < 1e-12

    def test_noise_path_family_reports_positive_slopes(self):
        grid = TorusGrid(8, 3)

        def family(T):
            return linear_sup_statistic(grid, TimeGrid(T, max(4, int(24 * T))), 4, DAMPED, 0.1, -0.6)

        rows = t_scaling_probe(family, [0.5, 1.0, 2.0], 0.1, np.linspace(0.15, 0.45, 11), 300, 3, 0.1)
        for r in rows:
            assert np.isfinite(r["slope_C"]) and r["slope_C"] > 0.0
            assert r["usable_cells"] >= 4

    def test_single_horizon_degenerate_table(self):
        fam = lambda T: _nested_gaussian_statistic(0.3, 5.0)
        rows = t_scaling_probe(fam, [1.0], 0.1, np.linspace(0.05, 0.45, 9), 300, 3, 0.3)
        assert len(rows) == 1

    def test_horizons_must_increase(self):
        fam = lambda T: _nested_gaussian_statistic(0.3, 5.0)
        with pytest.raises(ValueError, match="increasing"):
            t_scaling_probe(fam, [1.0, 0.5], 0.1, [0.1, 0.2, 0.3, 0.4], 200, 3, 0.3)


class TestSerialization:
    def _curve(self):
        h = np.linspace(0.1, 0.5, 5)
        p = np.exp(-4.0 * h**2 / 0.4**2)
        counts = np.round(p * 500).astype(int)
        p = counts / 500.0
        return TailCurve(h, p, np.clip(p * 0.9, 0, 1), np.clip(p * 1.1 + 1e-3, 0, 1),
                         500, sigma=0.4, T=1.0, label="demo", seed=7, counts=counts)

    def test_csv_roundtrip(self, tmp_path):
        curve = self._curve()
        out = tmp_path / "curve.csv"
        tail_curve_csv(curve, out)
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["h", "p_hat", "ci_low", "ci_high"]
        assert len(rows) == 1 + len(curve)
        got = np.array([[float(x) for x in row] for row in rows[1:]])
        assert np.allclose(got[:, 0], curve.h_grid, rtol=1e-10)
        assert np.allclose(got[:, 1], curve.p_hat, rtol=1e-10)

    def test_json_report_fields(self, tmp_path):
        curve = self._curve()
        fit = gaussian_tail_fit(curve)
        out = tmp_path / "report.json"
        tail_report_json(curve, fit, out, config={"N": 8, "dim": 2})
        doc = json.loads(out.read_text())
        assert doc["label"] == "demo"
        assert doc["replicas"] == 500
        assert doc["seed"] == 7
        assert doc["config"] == {"N": 8, "dim": 2}
        assert abs(doc["fit"]["slope_C"] - fit.slope_C) < 1e-12
        assert doc["counts"] == [int(k) for k in curve.counts]
        assert doc["zero_cells"] == [int(i) for i in np.flatnonzero(curve.zero_cells)]

    def test_json_without_fit_and_byte_stability(self, tmp_path):
        curve = self._curve()
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        tail_report_json(curve, None, a)
        tail_report_json(curve, None, b)
        assert a.read_bytes() == b.read_bytes()
        assert json.loads(a.read_text())["fit"] is None


class TestLinearSolutionPath:
    def test_record_every_subsamples_bitwise(self):
        grid = TorusGrid(8, 2)
        tg = TimeGrid(0.5, 12)
        full = linear_solution_path(grid, tg, 4, DAMPED, 0.3, seed=5)
        thin = linear_solution_path(grid, tg, 4, DAMPED, 0.3, seed=5, record_every=5)
        assert np.array_equal(thin.times, tg.ts[[0, 5, 10, 12]])
        assert np.array_equal(thin.coeffs, full.coeffs[[0, 5, 10, 12]])

    def test_replicas_are_independent(self):
        grid = TorusGrid(8, 2)
        tg = TimeGrid(0.5, 12)
        a = linear_solution_path(grid, tg, 4, DAMPED, 0.3, seed=5, replica=0)
        b = linear_solution_path(grid, tg, 4, DAMPED, 0.3, seed=5, replica=1)
        assert not np.array_equal(a.coeffs, b.coeffs)
        assert a.meta["replica"] == 0 and b.meta["replica"] == 1
