"""Path statistics, replica tail curves and Gaussian concentration checks.

Everything here works on recorded paths, so all suprema and Hölder constants
are exact maxima over grid times and grid-time pairs.  The block transform
behind the Besov norm is linear, which lets pair differences reuse one matrix
of scaled block point values per path instead of re-transforming every pair.

The quantitative continuity bound :func:`grr_bound` converts a double time
integral of p-th power increments into an explicit-constant bound on the
Hölder constant with exponent shifted down by 1/p; the implementation keeps
the constant and the left-hand exponent tied together so the domination check
is a one-liner in the tests.

Tail curves count exceedances of nested events ``value > h`` over independent
replicas, carry exact binomial (Clopper-Pearson) intervals, and fit the
Gaussian shape ``exp(logD - C h^2 / sigma^2)`` by weighted least squares on
the log scale.  Thresholds whose count is zero are flagged rather than
dropped silently: past those cells the tail is below Monte Carlo resolution.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np
from numpy.polynomial.hermite_e import hermeval
from scipy import stats

from .grids import SpectralField, TorusGrid
from .noise import LinearPath, NoiseRealization, StepKernel
from .paley import besov_norm, default_partition
from .solvers import SolutionPath, _record_indices
from .symbols import SymbolStepper

__all__ = [
    "XiNorm",
    "TailCurve",
    "GaussianFit",
    "sup_path_norm",
    "holder_constant",
    "grr_bound",
    "nelson_check",
    "tail_estimate",
    "gaussian_tail_fit",
    "xi_norm",
    "t_scaling_probe",
    "tail_curve_csv",
    "tail_report_json",
    "linear_solution_path",
    "linear_sup_statistic",
    "symbol_sup_statistic",
]

# O(M^2) pair enumeration guard: longer paths are subsampled evenly.
PAIR_CAP = 512

_XI_HOLDER_EXPONENT = 0.125


def _unpack(path):
    """Normalize a path argument to ``(times, data, grid_or_None)``.

    Accepted forms: an object with ``times``/``coeffs``/``grid`` attributes
    (a :class:`~.solvers.SolutionPath`), a ``(times, values)`` pair of plain
    real arrays, or a ``(times, coeffs, grid)`` triple of raw spectra.
    """
    if hasattr(path, "coeffs") and hasattr(path, "grid"):
        times = np.asarray(path.times, dtype=np.float64)
        data, grid = np.asarray(path.coeffs), path.grid
    elif isinstance(path, (tuple, list)) and len(path) == 2:
        times = np.asarray(path[0], dtype=np.float64)
        data, grid = np.asarray(path[1], dtype=np.float64), None
    elif isinstance(path, (tuple, list)) and len(path) == 3:
        times = np.asarray(path[0], dtype=np.float64)
        data, grid = np.asarray(path[1]), path[2]
    else:
        raise TypeError(
            "path must be a SolutionPath, a (times, values) pair "
            "or a (times, coeffs, grid) triple"
        )
    if len(times) != len(data):
        raise ValueError(f"{len(times)} times for {len(data)} path entries")
    return times, data, grid


def _pair_indices(n: int, cap: int) -> np.ndarray:
    if n <= cap:
        return np.arange(n)
    return np.unique(np.round(np.linspace(0, n - 1, cap)).astype(int))


def _feature_rows(times, data, grid, index, partition):
    """One row per time whose pairwise sup differences realize the path norm.

    Spectral data is expanded into dyadic block point values scaled by
    ``2**(index * k)``; because the block transform is linear, the norm of
    ``f(t) - f(s)`` is exactly ``max |row_t - row_s|``.  Plain arrays are
    flattened as-is and the smoothness index is ignored.
    """
    if grid is None:
        return data.reshape(len(times), -1).astype(np.float64, copy=False)
    part = default_partition(grid) if partition is None else partition
    scales = 2.0 ** (index * np.arange(-1, part.K + 1))
    rows = np.empty((len(times), part.nblocks * grid.npoints))
    for i in range(len(times)):
        vals = part.block_values(data[i])
        rows[i] = (scales[:, None] * vals.reshape(part.nblocks, -1)).ravel()
    return rows


def sup_path_norm(path, alpha: float, partition=None) -> float:
    """Largest norm attained along the path.

    Spectral paths are measured in the Hölder-Besov norm of smoothness
    ``alpha``; plain paths return the sup of absolute values and ignore it.
    """
    times, data, grid = _unpack(path)
    if len(times) == 0:
        return 0.0
    if grid is None:
        return float(np.max(np.abs(data)))
    part = default_partition(grid) if partition is None else partition
    return max(
        besov_norm(SpectralField(grid, data[i]), alpha, part) for i in range(len(times))
    )


def holder_constant(path, beta: float, gamma: float, partition=None, cap: int = PAIR_CAP) -> float:
    """Exact ``gamma``-Hölder constant of the path over recorded time pairs.

    ``max ||f(t) - f(s)|| / |t - s|**gamma`` with the spatial norm of
    smoothness ``beta`` (ignored for plain paths).  Requires ``gamma`` in
    (0, 1].  Paths longer than ``cap`` times are subsampled evenly before the
    O(M^2) pair enumeration.
    """
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    times, data, grid = _unpack(path)
    idx = _pair_indices(len(times), cap)
    times = times[idx]
    rows = _feature_rows(times, data[idx], grid, beta, partition)
    best = 0.0
    for lag in range(1, len(times)):
        diff = rows[lag:] - rows[:-lag]
        np.abs(diff, out=diff)
        gaps = times[lag:] - times[:-lag]
        best = max(best, float(np.max(np.max(diff, axis=1) / gaps**gamma)))
    return best


def grr_bound(path, p, gamma_prime: float, beta=None, partition=None, cap: int = PAIR_CAP) -> float:
    """Explicit-constant continuity bound from a double integral of increments.

    Computes ``B``, the trapezoidal double time integral of
    ``||f(x) - f(y)||**p / |x - y|**(gamma_prime * p + 1)``, and returns

        ``(8 * 4**(1/p) * (gamma_prime + 1/p) / (gamma_prime - 1/p))**p * B``

    which dominates ``holder_constant(path, beta, gamma_prime - 1/p)**p``.
    ``p`` must be an even integer >= 2 and ``gamma_prime > 1/p``.  Spectral
    paths need the spatial smoothness ``beta``; plain paths ignore it.
    """
    if p != int(p) or int(p) < 2 or int(p) % 2:
        raise ValueError(f"p must be an even integer >= 2, got {p}")
    p = int(p)
    if gamma_prime <= 1.0 / p:
        raise ValueError(f"gamma_prime must exceed 1/p = {1.0 / p:.4g}, got {gamma_prime}")
    times, data, grid = _unpack(path)
    if grid is not None and beta is None:
        raise ValueError("spectral paths need the spatial smoothness index beta")
    idx = _pair_indices(len(times), cap)
    times = times[idx]
    rows = _feature_rows(times, data[idx], grid, beta, partition)
    n = len(times)
    dist = np.zeros((n, n))
    for i in range(n - 1):
        diff = np.abs(rows[i + 1 :] - rows[i])
        dist[i, i + 1 :] = dist[i + 1 :, i] = diff.max(axis=1)
    gaps = np.abs(times[:, None] - times[None, :])
    integrand = np.zeros_like(dist)
    off = gaps > 0.0
    integrand[off] = dist[off] ** p / gaps[off] ** (gamma_prime * p + 1.0)
    B = np.trapezoid(np.trapezoid(integrand, times, axis=1), times)
    const = 8.0 * 4.0 ** (1.0 / p) * (gamma_prime + 1.0 / p) / (gamma_prime - 1.0 / p)
    return float(const**p * B)


def nelson_check(order, p, replicas: int = 200_000, seed: int = 0) -> float:
    """Empirical moment ratio of a pure-chaos variable against its bound.

    Samples ``X = He_order(g)`` for a standard Gaussian ``g`` (probabilists'
    Hermite polynomial, so X sits in the chaos of that order) and returns

        ``E[|X|^p]^(1/p) / ((p - 1)^(order/2) * E[X^2]^(1/2))``

    with both expectations replaced by sample means.  The hypercontractive
    bound says the exact ratio is at most 1; the empirical one carries Monte
    Carlo noise on top, which is why callers compare against a slack ceiling.
    """
    if p != int(p) or int(p) < 2 or int(p) % 2:
        raise ValueError(f"p must be an even integer >= 2, got {p}")
    if order != int(order) or int(order) < 1:
        raise ValueError(f"chaos order must be a positive integer, got {order}")
    p, order = int(p), int(order)
    rng = np.random.default_rng(seed)
    g = rng.standard_normal(int(replicas))
    coefs = np.zeros(order + 1)
    coefs[order] = 1.0
    x = hermeval(g, coefs)
    lhs = float(np.mean(np.abs(x) ** p) ** (1.0 / p))
    rhs = (p - 1.0) ** (order / 2.0) * math.sqrt(float(np.mean(x**2)))
    return lhs / rhs


class TailCurve:
    """Empirical exceedance probabilities of a replica statistic.

    ``p_hat[i]`` estimates ``P(statistic > h_grid[i])`` from ``replicas``
    independent draws, with exact binomial 95% bounds in ``ci_low``/
    ``ci_high``.  The events are nested in ``h``, so ``p_hat`` (and the raw
    ``counts`` when present) must be non-increasing; the constructor rejects
    anything else.  ``zero_cells`` flags thresholds with no exceedances at
    all: there the tail is below Monte Carlo resolution and only the upper
    confidence bound carries information.
    """

    def __init__(
        self,
        h_grid,
        p_hat,
        ci_low,
        ci_high,
        replicas: int,
        sigma=None,
        T=None,
        label: str = "statistic",
        seed=None,
        counts=None,
    ):
        self.h_grid = np.asarray(h_grid, dtype=np.float64)
        self.p_hat = np.asarray(p_hat, dtype=np.float64)
        self.ci_low = np.asarray(ci_low, dtype=np.float64)
        self.ci_high = np.asarray(ci_high, dtype=np.float64)
        self.replicas = int(replicas)
        self.sigma = None if sigma is None else float(sigma)
        self.T = None if T is None else float(T)
        self.label = str(label)
        self.seed = seed
        self.counts = None if counts is None else np.asarray(counts, dtype=np.int64)
        self._validate()

    def _validate(self) -> None:
        h = self.h_grid
        if h.ndim != 1 or len(h) == 0:
            raise ValueError("h_grid must be a non-empty 1-d array")
        if np.any(h < 0.0) or np.any(np.diff(h) <= 0.0):
            raise ValueError("h_grid must be non-negative and strictly increasing")
        for name in ("p_hat", "ci_low", "ci_high"):
            q = getattr(self, name)
            if q.shape != h.shape:
                raise ValueError(f"{name} shape {q.shape} does not match h_grid")
            if np.any(q < 0.0) or np.any(q > 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if np.any(np.diff(self.p_hat) > 0.0):
            raise ValueError("p_hat must be non-increasing: exceedance events are nested in h")
        if self.counts is not None and np.any(np.diff(self.counts) > 0):
            raise ValueError("exceedance counts must be non-increasing in h")

    def __len__(self) -> int:
        return len(self.h_grid)

    @property
    def zero_cells(self) -> np.ndarray:
        if self.counts is not None:
            return self.counts == 0
        return self.p_hat == 0.0


def _clopper_pearson(counts, n: int, level: float = 0.95):
    """Exact binomial confidence bounds for each count out of ``n`` trials."""
    tail = (1.0 - level) / 2.0
    low = np.zeros(len(counts))
    high = np.ones(len(counts))
    for i, k in enumerate(np.asarray(counts, dtype=np.int64)):
        if k > 0:
            low[i] = stats.beta.ppf(tail, k, n - k + 1)
        if k < n:
            high[i] = stats.beta.ppf(1.0 - tail, k + 1, n - k)
    return low, high


def tail_estimate(
    statistic,
    h_grid,
    replicas: int,
    master_seed: int,
    sigma=None,
    T=None,
    label: str = "statistic",
) -> TailCurve:
    """Monte Carlo exceedance curve of a replica statistic.

    ``statistic(replica, seed)`` is called once per replica index with
    ``seed = master_seed``; independence across replicas is the statistic's
    responsibility (the noise layer binds its streams to the (seed, replica)
    pair, so passing both through is enough).  The whole curve is a
    deterministic function of ``master_seed``.  Exceedance events are the
    nested ``value > h``, which forces the raw counts to be non-increasing;
    the returned curve re-checks that along with the range invariants.
    """
    h = np.asarray(h_grid, dtype=np.float64)
    if h.ndim != 1 or len(h) == 0 or np.any(h < 0.0) or np.any(np.diff(h) <= 0.0):
        raise ValueError("h_grid must be non-negative and strictly increasing")
    replicas = int(replicas)
    if replicas < 1:
        raise ValueError(f"need at least one replica, got {replicas}")
    values = np.empty(replicas)
    for i in range(replicas):
        values[i] = float(statistic(i, master_seed))
    counts = (values[None, :] > h[:, None]).sum(axis=1)
    p_hat = counts / float(replicas)
    ci_low, ci_high = _clopper_pearson(counts, replicas)
    return TailCurve(
        h, p_hat, ci_low, ci_high, replicas,
        sigma=sigma, T=T, label=label, seed=master_seed, counts=counts,
    )


class GaussianFit:
    """Log-scale weighted fit of a tail curve to ``exp(logD - C h^2/sigma^2)``."""

    def __init__(self, slope_C: float, intercept_logD: float, r_squared: float, cells: int = 0):
        self.slope_C = float(slope_C)
        self.intercept_logD = float(intercept_logD)
        self.r_squared = float(r_squared)
        self.cells = int(cells)


def gaussian_tail_fit(curve: TailCurve) -> GaussianFit:
    """Fit ``log p_hat`` against ``h^2 / sigma^2`` by weighted least squares.

    Cells with ``p_hat`` in {0, 1} carry no log-scale information and are
    excluded; at least four usable cells are required.  Weights are the
    inverse delta-method variances ``n p / (1 - p)`` of ``log p_hat``, so
    deep-tail cells with a handful of hits do not dominate the fit.  A
    positive ``slope_C`` is what the Gaussian shape predicts; the fit reports
    whatever the data gives and leaves the pass/fail judgement to callers.
    """
    if curve.sigma is None or curve.sigma <= 0.0:
        raise ValueError("tail curve must carry a positive noise level sigma")
    p = curve.p_hat
    usable = (p > 0.0) & (p < 1.0)
    cells = int(usable.sum())
    if cells < 4:
        raise ValueError(f"need at least 4 cells with 0 < p_hat < 1, got {cells}")
    x = curve.h_grid[usable] ** 2 / curve.sigma**2
    y = np.log(p[usable])
    w = curve.replicas * p[usable] / (1.0 - p[usable])
    sw = np.sqrt(w)
    design = sw[:, None] * np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(design, sw * y, rcond=None)
    resid = y - (coef[0] + coef[1] * x)
    ss_res = float(np.sum(w * resid**2))
    ybar = float(np.sum(w * y) / np.sum(w))
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    if ss_tot > 0.0:
        r_squared = 1.0 - ss_res / ss_tot
    else:
        r_squared = 1.0 if ss_res == 0.0 else 0.0
    return GaussianFit(-coef[1], coef[0], r_squared, cells)


class XiNorm:
    """Four-component size of a remainder pair on a declared sub-interval.

    ``value`` is the maximum of the two sup norms and the two time-Hölder
    constants, so it dominates each component by construction.
    """

    def __init__(self, sup_v: float, sup_w: float, holder_v: float, holder_w: float):
        self.sup_v = float(sup_v)
        self.sup_w = float(sup_w)
        self.holder_v = float(holder_v)
        self.holder_w = float(holder_w)
        self.value = max(self.sup_v, self.sup_w, self.holder_v, self.holder_w)


def xi_norm(v, w, t0: float, eps: float, partition=None, cap: int = PAIR_CAP) -> XiNorm:
    """Combined norm of the remainder pair over recorded times up to ``t0``.

    The components are the sup of ``v`` in smoothness ``1 - 2 eps``, the sup
    of ``w`` in ``3/2 - 2 eps``, and the 1/8-Hölder constants of both paths
    in smoothness 0.  Restricting to a longer window can only add times, so
    the result is non-decreasing in ``t0``.  With fewer than two recorded
    times inside the window (in particular at ``t0 = 0``) the norm is 0 by
    convention: no pairs exist and the paths start from 0.
    """
    if eps <= 0.0:
        raise ValueError(f"eps must be positive, got {eps}")
    if t0 < 0.0:
        raise ValueError(f"t0 must be non-negative, got {t0}")
    cut = t0 + 1e-12 * max(1.0, abs(t0))
    windows = []
    for path in (v, w):
        times, data, grid = _unpack(path)
        keep = times <= cut
        windows.append((times[keep], data[keep], grid))
    if any(len(times) < 2 for times, _, _ in windows):
        return XiNorm(0.0, 0.0, 0.0, 0.0)
    vpath = windows[0] if windows[0][2] is not None else windows[0][:2]
    wpath = windows[1] if windows[1][2] is not None else windows[1][:2]
    return XiNorm(
        sup_path_norm(vpath, 1.0 - 2.0 * eps, partition),
        sup_path_norm(wpath, 1.5 - 2.0 * eps, partition),
        holder_constant(vpath, 0.0, _XI_HOLDER_EXPONENT, partition, cap),
        holder_constant(wpath, 0.0, _XI_HOLDER_EXPONENT, partition, cap),
    )


def t_scaling_probe(
    statistic_family,
    t_list,
    lam: float,
    h_grid,
    replicas: int,
    master_seed: int,
    sigma: float,
    label: str = "statistic",
):
    """Descriptive table of fitted tail slopes across time horizons.

    ``statistic_family(T)`` must return a replica statistic for horizon
    ``T``; every horizon shares the threshold grid, the noise level and the
    master seed.  Each row reports the fitted slope, the slope rescaled by
    ``max(T**lam, T**(lam/5))``, and the fit quality.  Nothing is asserted
    about monotonicity across horizons: the constants in the underlying
    bounds are unknown, so this is a reporting tool, not a pass/fail check.
    Horizons whose curve has too few usable cells get NaN fit columns.
    """
    ts = [float(T) for T in t_list]
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise ValueError("t_list must be strictly increasing")
    rows = []
    for T in ts:
        curve = tail_estimate(
            statistic_family(T), h_grid, replicas, master_seed,
            sigma=sigma, T=T, label=f"{label} T={T:g}",
        )
        usable = int(((curve.p_hat > 0.0) & (curve.p_hat < 1.0)).sum())
        row = {
            "T": T,
            "slope_C": math.nan,
            "intercept_logD": math.nan,
            "r_squared": math.nan,
            "rescaled_slope": math.nan,
            "usable_cells": usable,
        }
        try:
            fit = gaussian_tail_fit(curve)
        except ValueError:
            rows.append(row)
            continue
        row["slope_C"] = fit.slope_C
        row["intercept_logD"] = fit.intercept_logD
        row["r_squared"] = fit.r_squared
        row["rescaled_slope"] = fit.slope_C * max(T**lam, T ** (lam / 5.0))
        rows.append(row)
    return rows


def tail_curve_csv(curve: TailCurve, path) -> None:
    """Write the curve as CSV with columns h, p_hat, ci_low, ci_high."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["h", "p_hat", "ci_low", "ci_high"])
        for i in range(len(curve)):
            writer.writerow(
                [
                    f"{curve.h_grid[i]:.12g}",
                    f"{curve.p_hat[i]:.12g}",
                    f"{curve.ci_low[i]:.12g}",
                    f"{curve.ci_high[i]:.12g}",
                ]
            )


def tail_report_json(curve: TailCurve, fit, path, config=None) -> None:
    """Write the curve, optional fit parameters and a config echo as JSON."""
    doc = {
        "label": curve.label,
        "sigma": curve.sigma,
        "T": curve.T,
        "replicas": curve.replicas,
        "seed": curve.seed,
        "h_grid": [float(x) for x in curve.h_grid],
        "p_hat": [float(x) for x in curve.p_hat],
        "ci_low": [float(x) for x in curve.ci_low],
        "ci_high": [float(x) for x in curve.ci_high],
        "counts": None if curve.counts is None else [int(k) for k in curve.counts],
        "zero_cells": [int(i) for i in np.flatnonzero(curve.zero_cells)],
        "fit": None
        if fit is None
        else {
            "slope_C": fit.slope_C,
            "intercept_logD": fit.intercept_logD,
            "r_squared": fit.r_squared,
            "cells": fit.cells,
        },
        "config": config,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def linear_solution_path(
    grid: TorusGrid,
    timegrid,
    cutoff: int,
    coeffs,
    sigma: float,
    seed: int,
    replica: int = 0,
    record_every: int = 1,
    kernel=None,
    noise=None,
) -> SolutionPath:
    """Record the damped stochastic convolution of one noise replica.

    A thin recording loop around :class:`~.noise.LinearPath`; pass a
    prebuilt ``kernel`` when sweeping replicas, or an aggregated ``noise``
    object for refinement studies on a shared realization.
    """
    if noise is None:
        noise = NoiseRealization(grid, timegrid, cutoff, seed, replica=replica)
    walker = LinearPath(noise, coeffs, sigma, kernel=kernel)
    recs = _record_indices(timegrid.M, record_every)
    out = np.zeros((len(recs),) + grid.hshape, dtype=np.complex128)
    pos = {j: i for i, j in enumerate(recs)}
    for j in range(1, timegrid.M + 1):
        walker.step()
        i = pos.get(j)
        if i is not None:
            out[i] = walker.state
    meta = {
        "kind": "linear",
        "sigma": float(sigma),
        "cutoff": int(cutoff),
        "seed": int(seed),
        "replica": int(replica),
        "dt": timegrid.dt,
    }
    return SolutionPath(grid, timegrid.ts[recs], out, meta)


def linear_sup_statistic(grid, timegrid, cutoff, coeffs, sigma, alpha, partition=None):
    """Replica statistic: running sup of the linear path's smoothness-``alpha`` norm.

    Returns a ``(replica, seed) -> float`` callable for :func:`tail_estimate`;
    the step kernel is built once and shared across replicas.
    """
    part = default_partition(grid) if partition is None else partition
    kernel = StepKernel(grid, timegrid, coeffs)

    def statistic(replica, seed):
        noise = NoiseRealization(grid, timegrid, cutoff, seed, replica=replica)
        walker = LinearPath(noise, coeffs, sigma, kernel=kernel)
        best = 0.0
        for _ in range(timegrid.M):
            walker.step()
            best = max(best, besov_norm(SpectralField(grid, walker.state), alpha, part))
        return best

    return statistic


def symbol_sup_statistic(
    grid, timegrid, cutoff, coeffs, sigma, name, alpha, ctilde=0.0, partition=None
):
    """Replica statistic: running sup of one symbol's smoothness-``alpha`` norm.

    Same shape as :func:`linear_sup_statistic` but runs the full polynomial
    ensemble and watches the symbol called ``name``.  The quartic constant
    defaults to 0 rather than a per-replica Monte Carlo estimate: the
    constant is deterministic, so re-estimating it inside every replica
    would only add bias jitter; pass a precomputed path when the centred
    version matters.
    """
    part = default_partition(grid) if partition is None else partition
    kernel = StepKernel(grid, timegrid, coeffs)

    def statistic(replica, seed):
        sym = SymbolStepper(
            grid, timegrid, cutoff, coeffs, sigma, seed,
            replica=replica, kernel=kernel, partition=part, ctilde=ctilde,
        )
        best = 0.0
        for _ in range(timegrid.M):
            sym.step()
            best = max(best, besov_norm(SpectralField(grid, sym.values()[name]), alpha, part))
        return best

    return statistic
