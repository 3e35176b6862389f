"""Pseudospectral laboratory for renormalized cubic stochastic PDEs on the torus.

The package is organized bottom-up:

* :mod:`phi4lab.grids` -- periodic grids, half-layout spectra, dealiased products
* :mod:`phi4lab.paley` -- dyadic frequency decomposition, Besov norms, paraproducts
* :mod:`phi4lab.coeffs` -- time-dependent reaction coefficients and recentring
* :mod:`phi4lab.noise` -- white-in-time forcing and the damped stochastic convolution
* :mod:`phi4lab.symbols` -- the renormalized polynomial ensemble built from one noise path
* :mod:`phi4lab.solvers` -- exponential time stepping for the direct and paracontrolled routes
* :mod:`phi4lab.concentration` -- path norms, tail statistics and concentration checks
* :mod:`phi4lab.config` / :mod:`phi4lab.cli` -- reproducible experiment driver
"""

__version__ = "0.1.0"
