"""Two routes to the renormalized cubic equation, one answer.

The direct route steps the renormalized equation for phi itself.  The
paracontrolled route writes phi as a sum of explicit noise polynomials
plus a smoother remainder pair (v, w), steps only the pair, and
reconstructs phi afterwards.  On a shared noise realization the two
routes must agree up to time discretization error, and the gap between
them must shrink like dt.  With the noise switched off entirely, the
direct route degenerates to the plain deterministic solver.
"""

import numpy as np

from phi4lab.coeffs import CoefficientSet
from phi4lab.grids import TorusGrid
from phi4lab.noise import TimeGrid
from phi4lab.solvers import equivalence_report, solve_deterministic, solve_renormalized


def main():
    grid = TorusGrid(8, 2)
    coeffs = CoefficientSet(0.5, -1.0, 0.25)

    # sigma = 0: both renormalization constants vanish and the stochastic
    # solver, driven only by a constant source, coincides with the plain
    # deterministic one step by step.
    tg = TimeGrid(0.25, 32)
    det = solve_deterministic(grid, tg, coeffs.f2, coeffs.a, 0.4, phi0=0.0)
    sto = solve_renormalized(grid, tg, 3, coeffs, sigma=0.0, seed=1,
                             c=np.zeros(tg.M + 1), ctilde=0.0, forcing=0.4)
    gap0 = np.max(np.abs(det.coeffs - sto.coeffs))
    print(f"sigma = 0 degeneration: max |direct - deterministic| = {gap0:.3e}")

    # With noise on, compare the two routes on one shared realization and
    # again after halving dt on the same Brownian path.
    rep = equivalence_report(grid, T=0.25, M=40, cutoff=3, coeffs=coeffs,
                             sigma=0.1, seed=5, extra_seeds=(6, 7))
    print(f"relative sup gap at dt = {rep['dt']:.4g}: {rep['gap']:.3e}")
    print(f"relative sup gap at dt = {rep['dt_refined']:.4g}: {rep['gap_refined']:.3e}")
    print(f"refinement ratio (first order means about 0.5): {rep['ratio']:.3f}")
    for s, g in rep["seed_gaps"].items():
        print(f"  seed {s}: gap {g:.3e}")

    # The reconstruction is exact at t = 0 by construction; the gap is a
    # pure discretization effect and carries the solution scale.
    print(f"sup of the direct solution itself: {rep['sup_direct']:.4f}")


if __name__ == "__main__":
    main()
