"""Command line front end: configuration-driven experiment runners.

Subcommands
-----------
verify
    Fast invariant sweep across the modules; machine-readable pass/fail
    per check, nonzero exit on any failure.
symbols
    Step the symbol ensemble once and tabulate per-symbol Besov norms
    over time; dumps the final quintic-symbol field.
renorm
    Sweep band cutoffs and tabulate the quadratic constant (exact
    quadrature) and the quartic constant (Monte Carlo) at mid-horizon,
    with linear and logarithmic fit summaries.
simulate
    Run the remainder system at the configured parameters and write the
    norm table plus the final reconstructed field.
tail
    Estimate exceedance curves of the stochastic-convolution sup norm at
    every configured noise level, fit the Gaussian shape, and report the
    rate ratios between levels.
equivalence
    Gap between the direct renormalized solve and the remainder-route
    reconstruction, with its dt-refinement ratio.

Every file-producing command writes a ``manifest.json`` recording the
resolved configuration, code version, per-replica seed bindings, wall
clock and a SHA-256 digest per output file.  Outputs are deterministic
functions of (config, seed): rerunning with equal manifests (ignoring
the wall clock) reproduces every file byte for byte, regardless of
``--threads``.

Binary field dumps are little-endian 64-bit floats in C order with a
JSON sidecar (same path plus ``.json``) holding shape and grid metadata.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .coeffs import CoefficientSet
from .concentration import (
    gaussian_tail_fit,
    grr_bound,
    holder_constant,
    linear_solution_path,
    linear_sup_statistic,
    nelson_check,
    tail_curve_csv,
    tail_estimate,
    tail_report_json,
)
from .config import ConfigError, ExperimentConfig, RunManifest
from .grids import SpectralField, TorusGrid, dealiased_product, random_band_field
from .noise import LinearPath, NoiseRealization, StepKernel, TimeGrid, lin_variance_curve, quartic_renorm_mc
from .paley import besov_norm, default_partition, para_gt, para_lt, resonant
from .solvers import equivalence_report, norms_csv, solve_deterministic, solve_renormalized, solve_vw
from .symbols import CATALOG, SYMBOL_NAMES, SymbolStepper, chaos_components

__all__ = [
    "main",
    "cmd_verify",
    "cmd_symbols",
    "cmd_renorm",
    "cmd_simulate",
    "cmd_tail",
    "cmd_equivalence",
    "check_partition_unity",
    "write_field_bin",
]


# ---------------------------------------------------------------------------
# small shared helpers


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)!r}")


def _dump_json(doc, path) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def write_field_bin(path, values: np.ndarray, meta: dict) -> None:
    """Little-endian float64 dump in C order, with a JSON sidecar header."""
    arr = np.ascontiguousarray(values, dtype="<f8")
    arr.tofile(path)
    _dump_json({"dtype": "<f8", "order": "C", "shape": list(arr.shape), **meta},
               str(path) + ".json")


def _replica_values(stat, replicas: int, seed: int, threads: int) -> np.ndarray:
    """Evaluate a per-replica statistic, optionally on a worker pool.

    Each worker computes a pure function of (seed, replica) and the results
    are collected by replica index, so the aggregation is independent of
    scheduling order and of the pool size.
    """
    if threads <= 1:
        return np.array([float(stat(r, seed)) for r in range(replicas)])
    with ThreadPoolExecutor(max_workers=threads) as pool:
        vals = list(pool.map(lambda r: float(stat(r, seed)), range(replicas)))
    return np.array(vals)


def _ctilde_path(cfg: ExperimentConfig, grid: TorusGrid, tg: TimeGrid,
                 co: CoefficientSet, sigma: float) -> np.ndarray:
    """Quartic constant estimated once on a coarse grid, interpolated."""
    tgc = TimeGrid(cfg.T, min(50, tg.M))
    rep = quartic_renorm_mc(grid, tgc, cfg.cutoff, co, cfg.master_seed,
                            replicas=cfg.ctilde_replicas, sigma=sigma)
    return np.interp(tg.ts, rep["times"], rep["estimate"])


def _linear_fit(x, y) -> dict:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return {"slope": float(slope), "intercept": float(intercept), "r_squared": r2}


def _finish(cfg: ExperimentConfig, out_dir: Path, files, t0: float, command: str) -> None:
    manifest = RunManifest.collect(cfg, out_dir, files, time.perf_counter() - t0,
                                   command=command)
    manifest.write(out_dir / "manifest.json")


def _real_values(grid: TorusGrid, c: np.ndarray) -> np.ndarray:
    axes = tuple(range(grid.dim))
    return np.fft.irfftn(c, s=grid.shape, axes=axes) * grid.npoints


# ---------------------------------------------------------------------------
# verify: invariant sweep


def check_partition_unity(grid: TorusGrid, partition=None) -> tuple[bool, dict]:
    """Max deviation of the block weights from summing to one."""
    part = partition if partition is not None else default_partition(grid)
    dev = float(np.max(np.abs(part.weight_sum() - 1.0)))
    return dev <= 1e-12, {"max_deviation": dev}


def _check_partitions() -> tuple[bool, dict]:
    oks, detail = [], {}
    for N, dim in ((64, 2), (16, 3)):
        ok, d = check_partition_unity(TorusGrid(N, dim))
        oks.append(ok)
        detail[f"N{N}_d{dim}"] = d["max_deviation"]
    return all(oks), detail


def _check_block_reconstruction() -> tuple[bool, dict]:
    grid = TorusGrid(32, 2)
    part = default_partition(grid)
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(5):
        f = random_band_field(grid, rng)
        total = sum(b.coeffs for b in part.blocks(f))
        worst = max(worst, float(np.max(np.abs(total - f.coeffs)) / np.max(np.abs(f.coeffs))))
    return worst <= 1e-10, {"max_rel_deviation": worst}


def _check_product_decomposition() -> tuple[bool, dict]:
    grid = TorusGrid(32, 2)
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(5):
        f = random_band_field(grid, rng, band=15)
        g = random_band_field(grid, rng, band=15)
        total = para_lt(f, g).coeffs + para_gt(f, g).coeffs + resonant(f, g).coeffs
        prod = dealiased_product(f, g).coeffs
        worst = max(worst, float(np.max(np.abs(total - prod)) / np.max(np.abs(prod))))
    return worst <= 1e-10, {"max_rel_deviation": worst}


def _check_ou_variance() -> tuple[bool, dict]:
    grid = TorusGrid(16, 2)
    tg = TimeGrid(1.0, 32)
    co = CoefficientSet(0.0, -1.0, 1.0)
    sigma, reps = 0.3, 400
    kern = StepKernel(grid, tg, co)
    finals = np.empty(reps)
    for r in range(reps):
        lp = LinearPath(NoiseRealization(grid, tg, 8, 6, replica=r), co, sigma, kernel=kern)
        for _ in range(tg.M):
            lp.step()
        finals[r] = lp.state[(0,) * grid.dim].real
    var_hat = float(np.var(finals))
    target = sigma**2 * (1.0 - np.exp(-2.0)) / 2.0
    z = abs(var_hat - target) / (target * np.sqrt(2.0 / reps))
    return z <= 4.0, {"var_hat": var_hat, "target": target, "z": float(z)}


def _check_sigma_zero() -> tuple[bool, dict]:
    grid = TorusGrid(8, 2)
    tg = TimeGrid(0.4, 40)
    co = CoefficientSet(0.7, [-1.0, -0.5], 0.4)
    det = solve_deterministic(grid, tg, [0.7], [-1.0, -0.5], [0.3, 0.1], 0.0)
    ren = solve_renormalized(grid, tg, 3, co, 0.0, c=np.zeros(tg.M + 1),
                             ctilde=0.0, forcing=[0.3, 0.1])
    same = bool(np.array_equal(det.coeffs, ren.coeffs))
    sym = SymbolStepper(grid, tg, 3, co, 0.0, seed=0, ctilde=0.0)
    sol = solve_vw(sym)
    v_zero = bool(np.all(sol.v == 0.0))
    return same and v_zero, {"direct_bitwise": same, "v_identically_zero": v_zero}


def _check_homogeneity() -> tuple[bool, dict]:
    grid = TorusGrid(8, 2)
    tg = TimeGrid(0.5, 8)
    co = CoefficientSet(0.3, -1.0, 0.5)
    dec = chaos_components(grid, tg, 2, co, seed=3, name="res_iwick3_wick2",
                           ctilde_replicas=8)
    m1, m2 = dec.mass(1.0), dec.mass(2.0)
    top = max(m1.values())
    off = max(v for k, v in m1.items() if k != dec.degree) / top
    scale_err = abs(m2[dec.degree] / m1[dec.degree] - 2.0**dec.degree) / 2.0**dec.degree
    return off <= 1e-6 and scale_err <= 1e-8, {"off_order_rel": off, "scale_rel_err": scale_err}


def _check_equivalence_smoke() -> tuple[bool, dict]:
    grid = TorusGrid(8, 2)
    co = CoefficientSet(0.5, -1.0, 0.25)
    rep = equivalence_report(grid, 0.25, 20, 3, co, 0.1, seed=5,
                             ctilde_replicas=8, ctilde_steps=20)
    ok = np.isfinite(rep["gap"]) and rep["gap"] < 0.1 and rep["ratio"] < 0.9
    return bool(ok), {"gap": rep["gap"], "ratio": rep["ratio"]}


def _check_tail_trivials() -> tuple[bool, dict]:
    curve = tail_estimate(lambda i, s: 0.5, [0.0, 0.4, 0.6], 200, 5)
    shape = list(curve.p_hat) == [1.0, 1.0, 0.0]
    endpoint = abs(curve.ci_high[2] - (1.0 - 0.025 ** (1.0 / 200))) < 1e-12
    return shape and endpoint, {"p_hat": list(curve.p_hat)}


def _check_nelson() -> tuple[bool, dict]:
    exact = nelson_check(2, 2, replicas=50_000, seed=2) == 1.0
    ratio = nelson_check(2, 4, replicas=100_000, seed=2)
    return exact and ratio <= 3.0, {"p2_exact": exact, "p4_ratio": float(ratio)}


def _check_grr_domination() -> tuple[bool, dict]:
    grid = TorusGrid(8, 2)
    path = linear_solution_path(grid, TimeGrid(1.0, 32), 4,
                                CoefficientSet(0.0, -1.0, 1.0), 0.1, seed=11)
    p, gp, beta = 8, 0.3, -1.2
    bound = grr_bound(path, p, gp, beta=beta)
    hol = holder_constant(path, beta, gp - 1.0 / p)
    return bool(np.isfinite(bound) and bound >= hol**p), {"bound": bound, "holder_p": hol**p}


_VERIFY_CHECKS = (
    ("partition_of_unity", _check_partitions),
    ("block_reconstruction", _check_block_reconstruction),
    ("product_decomposition", _check_product_decomposition),
    ("ou_mode_zero_variance", _check_ou_variance),
    ("sigma_zero_degeneration", _check_sigma_zero),
    ("symbol_amplitude_homogeneity", _check_homogeneity),
    ("route_equivalence_smoke", _check_equivalence_smoke),
    ("tail_estimator_exactness", _check_tail_trivials),
    ("hermite_moment_ratio", _check_nelson),
    ("continuity_bound_domination", _check_grr_domination),
)


def cmd_verify() -> dict:
    """Run every registered invariant check; never raises, always reports."""
    checks = []
    for name, fn in _VERIFY_CHECKS:
        t0 = time.perf_counter()
        try:
            ok, detail = fn()
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, {"error": f"{type(exc).__name__}: {exc}"}
        checks.append({
            "name": name,
            "passed": bool(ok),
            "detail": detail,
            "seconds": round(time.perf_counter() - t0, 3),
        })
    return {"passed": all(c["passed"] for c in checks), "checks": checks}


# ---------------------------------------------------------------------------
# file-producing commands


def cmd_symbols(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> dict:
    t0 = time.perf_counter()
    grid, tg, co = cfg.grid(), cfg.timegrid(), cfg.coeffs()
    sigma = cfg.sigmas[0]
    part = default_partition(grid)
    kern = StepKernel(grid, tg, co)
    ct = _ctilde_path(cfg, grid, tg, co, sigma)
    sym = SymbolStepper(grid, tg, cfg.cutoff, co, sigma, cfg.master_seed,
                        kernel=kern, partition=part, ctilde=ct)
    alphas = {name: CATALOG[name].regularity - cfg.lam for name in SYMBOL_NAMES}
    rows = []
    vals = sym.values()
    for j in range(tg.M + 1):
        if j % cfg.record_every == 0 or j == tg.M:
            rows.append([tg.ts[j]] + [
                besov_norm(SpectralField(grid, vals[name]), alphas[name], part)
                for name in SYMBOL_NAMES
            ])
        if j < tg.M:
            sym.step()
            vals = sym.values()
    with open(out_dir / "symbols.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time"] + list(SYMBOL_NAMES))
        for row in rows:
            writer.writerow([f"{row[0]:.10g}"] + [f"{x:.12g}" for x in row[1:]])
    write_field_bin(out_dir / "ww_final.f64",
                    _real_values(grid, vals["res_iwick3_wick2"]),
                    {"field": "res_iwick3_wick2", "time": cfg.T, "N": cfg.N,
                     "dim": cfg.dimension, "sigma": sigma, "seed": cfg.master_seed})
    files = ["symbols.csv", "ww_final.f64", "ww_final.f64.json"]
    _finish(cfg, out_dir, files, t0, "symbols")
    return {"files": files, "rows": len(rows), "symbols": list(SYMBOL_NAMES)}


def cmd_renorm(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> dict:
    t0 = time.perf_counter()
    co = cfg.coeffs()
    sigma = cfg.sigmas[0]
    tmid = cfg.T / 2.0
    rows = []
    for n in cfg.cutoff_list:
        gridn = TorusGrid(2 * n, cfg.dimension)
        c_val = float(lin_variance_curve(gridn, n, co, sigma, [tmid])[0])
        tgc = TimeGrid(cfg.T, min(50, cfg.steps))
        rep = quartic_renorm_mc(gridn, tgc, n, co, cfg.master_seed,
                                replicas=cfg.replicas, sigma=sigma)
        ct_val = float(np.interp(tmid, rep["times"], rep["estimate"]))
        ct_se = float(np.interp(tmid, rep["times"], rep["se"]))
        rows.append((n, c_val, ct_val, ct_se))
    with open(out_dir / "renorm.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "c_n", "ctilde_n", "ctilde_se"])
        for n, c_val, ct_val, ct_se in rows:
            writer.writerow([n, f"{c_val:.12g}", f"{ct_val:.12g}", f"{ct_se:.12g}"])
    ns = [r[0] for r in rows]
    report = {
        "t": tmid,
        "replicas": cfg.replicas,
        "c_fit_vs_n": _linear_fit(ns, [r[1] for r in rows]),
        "ctilde_fit_vs_log_n": _linear_fit(np.log(ns), [r[2] for r in rows]),
        "rows": [{"n": n, "c": c, "ctilde": ct, "ctilde_se": se} for n, c, ct, se in rows],
    }
    _dump_json(report, out_dir / "renorm_fits.json")
    files = ["renorm.csv", "renorm_fits.json"]
    _finish(cfg, out_dir, files, t0, "renorm")
    return report


def cmd_simulate(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> dict:
    t0 = time.perf_counter()
    grid, tg, co = cfg.grid(), cfg.timegrid(), cfg.coeffs()
    sigma = cfg.sigmas[0]
    kern = StepKernel(grid, tg, co)
    ct = _ctilde_path(cfg, grid, tg, co, sigma)
    sym = SymbolStepper(grid, tg, cfg.cutoff, co, sigma, cfg.master_seed,
                        kernel=kern, ctilde=ct)
    sol = solve_vw(sym, record_every=cfg.record_every)
    norms_csv(sol.phi_path(), out_dir / "norms.csv")
    write_field_bin(out_dir / "phi_final.f64", _real_values(grid, sol.phi[-1]),
                    {"field": "phi", "time": cfg.T, "N": cfg.N, "dim": cfg.dimension,
                     "sigma": sigma, "seed": cfg.master_seed})
    files = ["norms.csv", "phi_final.f64", "phi_final.f64.json"]
    _finish(cfg, out_dir, files, t0, "simulate")
    sups = sol.phi_path().sup_norms()
    return {"files": files, "recorded_times": len(sol), "final_sup": float(sups[-1]),
            "max_sup": float(np.max(sups))}


def cmd_tail(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> dict:
    if cfg.h_grid is None:
        raise ConfigError([("h_grid", "tail runs need a threshold grid")])
    t0 = time.perf_counter()
    grid, tg, co = cfg.grid(), cfg.timegrid(), cfg.coeffs()
    alpha = -0.5 - cfg.eps
    sig0 = cfg.sigmas[0]
    files, results = [], []
    for i, sig in enumerate(cfg.sigmas):
        stat = linear_sup_statistic(grid, tg, cfg.cutoff, co, sig, alpha)
        seed_i = cfg.master_seed + i
        vals = _replica_values(stat, cfg.replicas, seed_i, threads)
        curve = tail_estimate(
            lambda r, s, vals=vals: vals[r],
            cfg.h_grid * (sig / sig0), cfg.replicas, seed_i,
            sigma=sig, T=cfg.T, label=f"{cfg.label} sigma={sig:g}",
        )
        try:
            fit = gaussian_tail_fit(curve)
        except ValueError:
            fit = None
        base = "tail_s" + f"{sig:g}".replace(".", "p")
        tail_curve_csv(curve, out_dir / f"{base}.csv")
        tail_report_json(curve, fit, out_dir / f"{base}.json", config=cfg.to_dict())
        files += [f"{base}.csv", f"{base}.json"]
        results.append({
            "sigma": sig,
            "curve_csv": f"{base}.csv",
            "fit": None if fit is None else {
                "slope_C": fit.slope_C, "intercept_logD": fit.intercept_logD,
                "r_squared": fit.r_squared, "cells": fit.cells,
            },
        })
    ratios = []
    for a, b in zip(results, results[1:]):
        if a["fit"] and b["fit"]:
            ratios.append({
                "sigma_pair": [a["sigma"], b["sigma"]],
                "raw_rate_ratio": (a["fit"]["slope_C"] / a["sigma"] ** 2)
                / (b["fit"]["slope_C"] / b["sigma"] ** 2),
                "collapse_ratio": a["fit"]["slope_C"] / b["fit"]["slope_C"],
            })
    report = {"statistic": f"sup C^{alpha:g} norm of the stochastic convolution",
              "levels": results, "ratios": ratios, "replicas": cfg.replicas}
    _dump_json(report, out_dir / "tail_report.json")
    files.append("tail_report.json")
    _finish(cfg, out_dir, files, t0, "tail")
    return report


def cmd_equivalence(cfg: ExperimentConfig, out_dir: Path, threads: int = 1) -> dict:
    t0 = time.perf_counter()
    rep = equivalence_report(cfg.grid(), cfg.T, cfg.steps, cfg.cutoff, cfg.coeffs(),
                             cfg.sigmas[0], cfg.master_seed,
                             ctilde_replicas=cfg.ctilde_replicas)
    _dump_json(rep, out_dir / "equivalence.json")
    _finish(cfg, out_dir, ["equivalence.json"], t0, "equivalence")
    return rep


_COMMANDS = {
    "symbols": cmd_symbols,
    "renorm": cmd_renorm,
    "simulate": cmd_simulate,
    "tail": cmd_tail,
    "equivalence": cmd_equivalence,
}


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phi4lab",
        description="Pseudospectral laboratory for renormalized cubic equations on the torus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "verify": "run the invariant checks and report pass/fail",
        "symbols": "tabulate symbol norms over time",
        "renorm": "sweep cutoffs and fit the renormalization constants",
        "simulate": "run the remainder system and dump the reconstruction",
        "tail": "estimate and fit exceedance curves per noise level",
        "equivalence": "direct-vs-reconstruction gap and refinement ratio",
    }
    for name in ("verify", "symbols", "renorm", "simulate", "tail", "equivalence"):
        p = sub.add_parser(name, help=helps[name])
        if name != "verify":
            p.add_argument("--config", required=True, help="JSON experiment configuration")
            p.add_argument("--seed", type=int, default=None, help="override master_seed")
        p.add_argument("--threads", type=int, default=1, help="replica worker pool size")
        p.add_argument("--out", default=None, help="override the output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "verify":
        report = cmd_verify()
        text = json.dumps(report, indent=2, sort_keys=True, default=_json_default)
        print(text)
        if args.out:
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "verify.json").write_text(text + "\n")
        return 0 if report["passed"] else 1

    try:
        cfg = ExperimentConfig.from_json(args.config)
        if args.seed is not None:
            cfg.master_seed = int(args.seed)
        if args.out is not None:
            cfg.out_dir = str(args.out)
        out_dir = Path(cfg.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report = _COMMANDS[args.command](cfg, out_dir, threads=max(1, args.threads))
    except ConfigError as exc:
        print(json.dumps({"error": "config", "fields": exc.fields, "message": str(exc)},
                         indent=2, sort_keys=True), file=sys.stderr)
        return 2
    except RuntimeError as exc:
        if "blow-up" not in str(exc):
            raise
        diag = {"error": "blow-up", "message": str(exc), "config": cfg.to_dict()}
        print(json.dumps(diag, indent=2, sort_keys=True, default=_json_default),
              file=sys.stderr)
        return 3
    print(json.dumps(report, indent=2, sort_keys=True, default=_json_default))
    return 0


if __name__ == "__main__":
    sys.exit(main())
