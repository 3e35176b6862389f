"""Noise stream, exact-variance kernel and renormalization constant checks."""

import numpy as np
import pytest

from phi4lab.coeffs import CoefficientSet
from phi4lab.grids import SpectralField, TorusGrid
from phi4lab.noise import (
    LinearPath,
    NoiseRealization,
    StepKernel,
    TimeGrid,
    increment_variance_check,
    lin_variance_curve,
    lin_variance_path,
    quartic_renorm_mc,
)
from phi4lab.paley import resonant


class TestTimeGrid:
    def test_values(self):
        tg = TimeGrid(2.0, 8)
        assert tg.dt == 0.25
        assert tg.ts[0] == 0.0 and tg.ts[-1] == 2.0

    def test_validation(self):
        with pytest.raises(ValueError):
            TimeGrid(0.0, 4)
        with pytest.raises(ValueError):
            TimeGrid(1.0, 0)


class TestNoiseRealization:
    def test_deterministic_and_random_access(self):
        grid = TorusGrid(8, 2)
        tg = TimeGrid(1.0, 8)
        a = NoiseRealization(grid, tg, 4, seed=12345, replica=3)
        b = NoiseRealization(grid, tg, 4, seed=12345, replica=3)
        assert np.array_equal(a.increment(5), b.increment(5))
        # order of access must not matter
        first = a.increment(2).copy()
        a.increment(7)
        assert np.array_equal(a.increment(2), first)

    def test_streams_differ(self):
        grid = TorusGrid(8, 2)
        tg = TimeGrid(1.0, 4)
        base = NoiseRealization(grid, tg, 4, seed=1, replica=0, role=0)
        assert not np.array_equal(
            base.increment(0),
            NoiseRealization(grid, tg, 4, seed=1, replica=1, role=0).increment(0),
        )
        assert not np.array_equal(
            base.increment(0),
            NoiseRealization(grid, tg, 4, seed=1, replica=0, role=1).increment(0),
        )
        assert not np.array_equal(base.increment(0), base.increment(1))

    def test_band_mask(self):
        grid = TorusGrid(16, 2)
        tg = TimeGrid(1.0, 4)
        noise = NoiseRealization(grid, tg, 3, seed=7)
        dw = noise.increment(0)
        assert np.all(dw[grid.kinf > 3] == 0)
        assert np.any(dw[grid.kinf <= 3] != 0)

    def test_increment_variance(self):
        grid = TorusGrid(8, 2)
        tg = TimeGrid(1.0, 4)
        acc = np.zeros(grid.hshape)
        R = 600
        for r in range(R):
            dw = NoiseRealization(grid, tg, 4, seed=99, replica=r).increment(0)
            acc += np.abs(dw) ** 2
        acc /= R * tg.dt
        assert abs(acc.mean() - 1.0) < 0.05
        assert np.all(np.abs(acc - 1.0) < 0.5)

    def test_aggregate_sums_increments(self):
        grid = TorusGrid(8, 2)
        fine = NoiseRealization(grid, TimeGrid(1.0, 8), 4, seed=5)
        coarse = fine.aggregate(2)
        assert coarse.timegrid.M == 4
        expect = fine.increment(4) + fine.increment(5)
        assert np.array_equal(coarse.increment(2), expect)

    def test_aggregate_validation(self):
        grid = TorusGrid(8, 2)
        fine = NoiseRealization(grid, TimeGrid(1.0, 8), 4, seed=5)
        with pytest.raises(ValueError):
            fine.aggregate(3)

    def test_cutoff_validation(self):
        with pytest.raises(ValueError):
            NoiseRealization(TorusGrid(8, 2), TimeGrid(1.0, 4), 5, seed=0)


class TestStepKernel:
    def test_constant_coefficient_closed_form_matches_quadrature(self):
        grid = TorusGrid(8, 3)
        tg = TimeGrid(0.5, 10)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=0.5)
        kern = StepKernel(grid, tg, cs)
        closed = kern.variance(3)
        gl = kern._variance_gl(3)
        assert np.max(np.abs(closed - gl) / closed) < 1e-12

    def test_polynomial_coefficient_variance_consistent_over_steps(self):
        # for a(t) = const the polynomial path must agree with the cache
        grid = TorusGrid(8, 2)
        tg = TimeGrid(0.5, 5)
        cs_poly = CoefficientSet(f2=0.0, a=[-1.0, 0.0], T=0.5)  # degree 1, constant value
        cs_const = CoefficientSet(f2=0.0, a=-1.0, T=0.5)
        kp = StepKernel(grid, tg, cs_poly)
        kc = StepKernel(grid, tg, cs_const)
        assert np.max(np.abs(kp.variance(2) - kc.variance(2))) < 1e-14
        assert np.max(np.abs(kp.propagator(2) - kc.propagator(2))) < 1e-15

    def test_etd_weight_limit(self):
        grid = TorusGrid(8, 1)
        tg = TimeGrid(1.0, 10)
        cs = CoefficientSet(f2=0.0, a=0.0, T=1.0)
        kern = StepKernel(grid, tg, cs)
        w = kern.etd_weight(0)
        assert abs(w[0] - tg.dt) < 1e-14  # zero mode: plain Euler weight
        assert np.all(w <= tg.dt + 1e-14)

    def test_propagator_matches_exact_exponential(self):
        grid = TorusGrid(8, 2)
        tg = TimeGrid(1.0, 4)
        cs = CoefficientSet(f2=0.0, a=[-0.5, 1.0], T=1.0)
        kern = StepKernel(grid, tg, cs)
        j = 2
        expect = np.exp(cs.alpha(tg.ts[j + 1], tg.ts[j]) - 4 * np.pi**2 * grid.k2 * tg.dt)
        assert np.max(np.abs(kern.propagator(j) - expect)) < 1e-14


class TestLinearPath:
    def test_sigma_linearity_exact(self):
        grid = TorusGrid(8, 2)
        tg = TimeGrid(0.5, 8)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=0.5)
        kern = StepKernel(grid, tg, cs)

        def run(sigma):
            noise = NoiseRealization(grid, tg, 4, seed=11, replica=0)
            p = LinearPath(noise, cs, sigma, kernel=kern)
            p.run_to(8)
            return p.state

        one = run(1.0)
        two = run(2.0)
        assert np.max(np.abs(two - 2.0 * one)) < 1e-14

    def test_mode_zero_matches_ou_law(self):
        # for a = -1 the zero mode is an OU process with
        # variance sigma^2 (1 - exp(-2t)) / 2
        grid = TorusGrid(2, 1)
        tg = TimeGrid(1.0, 16)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=1.0)
        kern = StepKernel(grid, tg, cs)
        sigma = 0.8
        R = 3000
        vals = np.empty(R)
        for r in range(R):
            noise = NoiseRealization(grid, tg, 0, seed=2024, replica=r)
            p = LinearPath(noise, cs, sigma, kernel=kern)
            p.run_to(16)
            vals[r] = p.state[0].real
        target = sigma**2 * (1 - np.exp(-2.0)) / 2.0
        vhat = vals.var(ddof=1)
        se = target * np.sqrt(2.0 / R)
        assert abs(vhat - target) < 4 * se

    def test_run_backwards_rejected(self):
        grid = TorusGrid(8, 1)
        tg = TimeGrid(1.0, 4)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=1.0)
        p = LinearPath(NoiseRealization(grid, tg, 4, seed=0), cs, 1.0)
        p.run_to(3)
        with pytest.raises(ValueError):
            p.run_to(1)


class TestVarianceCurves:
    def test_recursion_matches_quadrature_constant(self):
        grid = TorusGrid(8, 3)
        tg = TimeGrid(0.5, 20)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=0.5)
        path = lin_variance_path(grid, tg, 4, cs, sigma=0.7)
        curve = lin_variance_curve(grid, 4, cs, 0.7, tg.ts)
        assert np.max(np.abs(path - curve)) / curve[-1] < 1e-12

    def test_recursion_matches_quadrature_polynomial(self):
        grid = TorusGrid(8, 3)
        tg = TimeGrid(0.5, 20)
        cs = CoefficientSet(f2=0.0, a=[-1.0, -0.5, 0.3], T=0.5)
        path = lin_variance_path(grid, tg, 4, cs, sigma=1.0)
        curve = lin_variance_curve(grid, 4, cs, 1.0, tg.ts)
        assert np.max(np.abs(path - curve)) / curve[-1] < 1e-9

    def test_monte_carlo_agrees(self):
        grid = TorusGrid(8, 2)
        tg = TimeGrid(0.5, 10)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=0.5)
        kern = StepKernel(grid, tg, cs)
        sigma = 0.7
        R = 500
        vals = np.empty(R)
        hw = grid.half_weights
        for r in range(R):
            noise = NoiseRealization(grid, tg, 4, seed=77, replica=r)
            p = LinearPath(noise, cs, sigma, kernel=kern)
            p.run_to(10)
            vals[r] = np.sum(hw * np.abs(p.state) ** 2)
        exact = lin_variance_path(grid, tg, 4, cs, sigma)[-1]
        z = (vals.mean() - exact) / (vals.std(ddof=1) / np.sqrt(R))
        assert abs(z) < 4

    def test_negative_time_rejected(self):
        grid = TorusGrid(8, 2)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=1.0)
        with pytest.raises(ValueError):
            lin_variance_curve(grid, 4, cs, 1.0, [-0.1])


class TestIncrementCheck:
    def test_ratio_near_one(self):
        grid = TorusGrid(8, 2)
        tg = TimeGrid(0.5, 10)
        cs = CoefficientSet(f2=0.0, a=[-1.0, 0.5], T=0.5)
        report = increment_variance_check(
            grid, tg, 4, cs, sigma=0.9, seed=31, replicas=400, j_from=3, j_to=8
        )
        assert abs(report["zscore"]) < 4
        assert 0.8 < report["ratio"] < 1.2

    def test_index_validation(self):
        grid = TorusGrid(8, 2)
        tg = TimeGrid(0.5, 10)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=0.5)
        with pytest.raises(ValueError):
            increment_variance_check(grid, tg, 4, cs, 1.0, 0, 10, j_from=5, j_to=5)


class TestQuarticConstant:
    def test_pairing_mean_equals_resonant_field_average(self):
        # the spectral inner product used by the estimator must equal the
        # spatial mean of the literal resonant product, path by path
        grid = TorusGrid(8, 3)
        tg = TimeGrid(0.25, 8)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=0.25)
        kern = StepKernel(grid, tg, cs)
        noise = NoiseRealization(grid, tg, 2, seed=13, replica=0, role=1)
        from phi4lab.grids import product_spectra
        from phi4lab.noise import ROLE_RENORM
        from phi4lab.paley import default_partition

        lin = LinearPath(noise, cs, 1.0, kernel=kern)
        var = np.zeros(grid.hshape)
        iw2 = np.zeros(grid.hshape, dtype=np.complex128)
        band = min(4, grid.N // 2 - 1)
        hw = grid.half_weights
        mask = grid.kinf <= 2
        c = 0.0
        for j in range(8):
            w2 = product_spectra([lin.state, lin.state], grid.N, band=band)
            w2[0, 0, 0] -= c
            iw2 = kern.propagator(j) * (iw2 + tg.dt * w2)
            var = kern.propagator(j) ** 2 * var + kern.variance(j)
            c = float(np.sum(hw * np.where(mask, var, 0.0)))
            lin.step()
        w2 = product_spectra([lin.state, lin.state], grid.N, band=band)
        w2[0, 0, 0] -= c
        w_pair = hw * default_partition(grid).resonance_weight()
        inner = float(np.sum(w_pair * (iw2 * np.conj(w2)).real))
        res = resonant(SpectralField(grid, iw2), SpectralField(grid, w2))
        assert abs(inner - res.coeff((0, 0, 0)).real) < 1e-12 * max(1.0, abs(inner))

    def test_sigma_scaling_exact(self):
        grid = TorusGrid(8, 3)
        tg = TimeGrid(0.25, 6)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=0.25)
        one = quartic_renorm_mc(grid, tg, 2, cs, seed=21, replicas=8, sigma=1.0)
        two = quartic_renorm_mc(grid, tg, 2, cs, seed=21, replicas=8, sigma=2.0)
        assert np.allclose(two["estimate"], 16.0 * one["estimate"], rtol=1e-12)

    def test_initial_time_zero(self):
        grid = TorusGrid(8, 3)
        tg = TimeGrid(0.25, 6)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=0.25)
        rep = quartic_renorm_mc(grid, tg, 2, cs, seed=22, replicas=4)
        assert rep["estimate"][0] == 0.0

    def test_positive_at_later_times(self):
        grid = TorusGrid(8, 3)
        tg = TimeGrid(0.25, 8)
        cs = CoefficientSet(f2=0.0, a=-1.0, T=0.25)
        rep = quartic_renorm_mc(grid, tg, 4, cs, seed=23, replicas=96, time_indices=[8])
        assert rep["estimate"][0] > 0
        assert rep["estimate"][0] > 2 * rep["se"][0]
