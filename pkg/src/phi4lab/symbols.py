"""The renormalized polynomial ensemble driven by one noise path.

Every object here is a functional of a single noise realization and the
exact renormalization constants:

* ``lin``: the damped stochastic convolution (first chaos).
* ``wick2``: Wick square ``lin**2 - c`` with ``c`` the exact pointwise
  variance of ``lin``.
* ``iwick2``: damped time integral of ``wick2``.
* ``wick3``: Wick cube ``lin**3 - 3 c lin`` (an integrand; it is not a
  function of time with useful regularity, so only its integral is cataloged).
* ``iwick3``: damped time integral of ``wick3``.
* ``res_iwick3_lin``: resonant product of ``iwick3`` with ``lin``; mean free
  by chaos parity, no subtraction needed.
* ``res_iwick2_wick2``: resonant product of ``iwick2`` with ``wick2`` minus
  twice the quartic constant.
* ``res_iwick3_wick2``: resonant product of ``iwick3`` with ``wick2`` minus
  six times the quartic constant times ``lin``.

The damped integral of ``res_iwick3_wick2`` is streamed alongside because the
solution reconstruction needs it.

All products are dealiased one-pass products truncated to the open grid band,
so the multilinear identities between these objects hold exactly at the
discrete level, and every object is exactly homogeneous of its polynomial
degree in the noise amplitude.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .coeffs import CoefficientSet
from .grids import SpectralField, TorusGrid, product_spectra
from .noise import (
    ROLE_MAIN,
    LinearPath,
    NoiseRealization,
    StepKernel,
    TimeGrid,
    lin_variance_path,
    quartic_renorm_mc,
)
from .paley import DyadicPartition, _resonant_core, default_partition

__all__ = [
    "SymbolInfo",
    "CATALOG",
    "SYMBOL_NAMES",
    "SymbolStepper",
    "SymbolEnsemble",
    "build_ensemble",
    "ChaosDecomposition",
    "chaos_components",
    "save_ensemble",
    "load_ensemble",
]


@dataclass(frozen=True)
class SymbolInfo:
    """Catalog entry: parabolic regularity, chaos levels, amplitude degree."""

    regularity: float
    chaos: tuple[int, ...]
    degree: int


CATALOG: dict[str, SymbolInfo] = {
    "lin": SymbolInfo(-0.5, (1,), 1),
    "wick2": SymbolInfo(-1.0, (2,), 2),
    "iwick2": SymbolInfo(1.0, (2,), 2),
    "iwick3": SymbolInfo(0.5, (3,), 3),
    "res_iwick3_lin": SymbolInfo(0.0, (2, 4), 4),
    "res_iwick2_wick2": SymbolInfo(0.0, (2, 4), 4),
    "res_iwick3_wick2": SymbolInfo(-0.5, (1, 3, 5), 5),
}

SYMBOL_NAMES = tuple(CATALOG)

_PATH_NAMES = SYMBOL_NAMES + ("wick3", "i_res_iwick3_wick2")

_STORE_BUDGET_BYTES = 512 * 2**20


class SymbolStepper:
    """Advances the whole ensemble one time step at a time.

    Memory stays bounded in the number of steps, so this is the engine used
    for long runs; :func:`build_ensemble` wraps it when full paths fit in
    memory.  Block point values on the doubled grid are cached per step and
    shared with the solver through :meth:`stack`.
    """

    def __init__(
        self,
        grid: TorusGrid,
        timegrid: TimeGrid,
        cutoff: int,
        coeffs: CoefficientSet,
        sigma: float,
        seed: int,
        replica: int = 0,
        role: int = ROLE_MAIN,
        kernel: StepKernel | None = None,
        partition: DyadicPartition | None = None,
        ctilde=None,
        ctilde_replicas: int = 64,
        noise: NoiseRealization | None = None,
    ):
        self.grid = grid
        self.timegrid = timegrid
        self.cutoff = int(cutoff)
        self.coeffs = coeffs
        self.sigma = float(sigma)
        self.band = grid.N // 2 - 1
        self.kernel = kernel or StepKernel(grid, timegrid, coeffs)
        self.partition = partition or default_partition(grid)
        self.c = lin_variance_path(grid, timegrid, self.cutoff, coeffs, self.sigma, kernel=self.kernel)
        if ctilde is None:
            report = quartic_renorm_mc(
                grid, timegrid, self.cutoff, coeffs, seed,
                replicas=ctilde_replicas, sigma=self.sigma, kernel=self.kernel,
            )
            ctilde = report["estimate"]
        self.ctilde = np.asarray(ctilde, dtype=np.float64)
        if self.ctilde.ndim == 0:
            self.ctilde = np.full(timegrid.M + 1, float(self.ctilde))
        if self.ctilde.shape != (timegrid.M + 1,):
            raise ValueError("quartic constant path must have one value per grid time")
        if noise is None:
            noise = NoiseRealization(grid, timegrid, self.cutoff, seed, replica=replica, role=role)
        elif noise.timegrid.M != timegrid.M or noise.cutoff != self.cutoff:
            raise ValueError("supplied noise realization does not match the requested grids")
        self.lin = LinearPath(noise, coeffs, self.sigma, kernel=self.kernel)
        self.noise = noise
        self.iw2 = np.zeros(grid.hshape, dtype=np.complex128)
        self.iw3 = np.zeros(grid.hshape, dtype=np.complex128)
        self.iww = np.zeros(grid.hshape, dtype=np.complex128)
        self.j = 0
        self._vals: dict[str, np.ndarray] | None = None
        self._stacks: dict[str, np.ndarray] = {}

    @property
    def t(self) -> float:
        return float(self.timegrid.ts[self.j])

    def stack(self, name: str) -> np.ndarray:
        """Padded block point values of one of the tracked spectra."""
        if name not in self._stacks:
            vals = self.values()
            if name not in vals:
                raise KeyError(f"no tracked spectrum named {name!r}")
            self._stacks[name] = self.partition.padded_blocks(vals[name])
        return self._stacks[name]

    def values(self) -> dict[str, np.ndarray]:
        """Current values of every symbol (half-layout arrays), computed once."""
        if self._vals is not None:
            return self._vals
        grid = self.grid
        N, dim = grid.N, grid.dim
        j = self.j
        zero = (0,) * dim
        lin = self.lin.state
        cj = self.c[j]
        ctj = self.ctilde[j]
        w2 = product_spectra([lin, lin], N, band=self.band)
        w2[zero] -= cj
        w3 = product_spectra([lin, lin, lin], N, band=self.band) - 3.0 * cj * lin
        part = self.partition
        self._stacks.setdefault("lin", part.padded_blocks(lin))
        self._stacks.setdefault("wick2", part.padded_blocks(w2))
        self._stacks.setdefault("iwick2", part.padded_blocks(self.iw2))
        self._stacks.setdefault("iwick3", part.padded_blocks(self.iw3))
        bl = self._stacks["lin"]
        bw2 = self._stacks["wick2"]
        bi2 = self._stacks["iwick2"]
        bi3 = self._stacks["iwick3"]
        r3l = _resonant_core(bi3, bl, N, dim)
        r22 = _resonant_core(bi2, bw2, N, dim)
        r22[zero] -= 2.0 * ctj
        r32 = _resonant_core(bi3, bw2, N, dim) - 6.0 * ctj * lin
        self._vals = {
            "lin": lin,
            "wick2": w2,
            "wick3": w3,
            "iwick2": self.iw2,
            "iwick3": self.iw3,
            "res_iwick3_lin": r3l,
            "res_iwick2_wick2": r22,
            "res_iwick3_wick2": r32,
            "i_res_iwick3_wick2": self.iww,
        }
        return self._vals

    def step(self) -> None:
        if self.j >= self.timegrid.M:
            raise ValueError("already at the final time")
        vals = self.values()
        P = self.kernel.propagator(self.j)
        dt = self.timegrid.dt
        self.iw2 = P * (self.iw2 + dt * vals["wick2"])
        self.iw3 = P * (self.iw3 + dt * vals["wick3"])
        self.iww = P * (self.iww + dt * vals["res_iwick3_wick2"])
        self.lin.step()
        self.j += 1
        self._vals = None
        self._stacks = {}


class SymbolEnsemble:
    """Full-path storage of the ensemble at every grid time."""

    def __init__(self, grid, timegrid, cutoff, sigma, seed, replica, paths, c, ctilde):
        self.grid = grid
        self.timegrid = timegrid
        self.cutoff = cutoff
        self.sigma = sigma
        self.seed = seed
        self.replica = replica
        self.paths = paths
        self.c = c
        self.ctilde = ctilde

    def path(self, name: str) -> np.ndarray:
        if name not in self.paths:
            raise KeyError(f"no stored path named {name!r}; have {sorted(self.paths)}")
        return self.paths[name]

    def at(self, name: str, j: int) -> SpectralField:
        return SpectralField(self.grid, self.path(name)[j])


def build_ensemble(
    grid: TorusGrid,
    timegrid: TimeGrid,
    cutoff: int,
    coeffs: CoefficientSet,
    sigma: float,
    seed: int,
    replica: int = 0,
    role: int = ROLE_MAIN,
    ctilde=None,
    ctilde_replicas: int = 64,
    names=None,
) -> SymbolEnsemble:
    """Run a :class:`SymbolStepper` over the whole grid and store the paths.

    Refuses configurations whose stored paths would exceed a fixed memory
    budget; stream with :class:`SymbolStepper` in that case.
    """
    names = tuple(names) if names is not None else _PATH_NAMES
    for n in names:
        if n not in _PATH_NAMES:
            raise ValueError(f"unknown symbol {n!r}; valid: {_PATH_NAMES}")
    hsize = int(np.prod(grid.hshape))
    budget = len(names) * (timegrid.M + 1) * hsize * 16
    if budget > _STORE_BUDGET_BYTES:
        raise ValueError(
            f"stored ensemble would need ~{budget / 2**20:.0f} MiB; "
            "use SymbolStepper for streaming access"
        )
    stepper = SymbolStepper(
        grid, timegrid, cutoff, coeffs, sigma, seed,
        replica=replica, role=role, ctilde=ctilde, ctilde_replicas=ctilde_replicas,
    )
    paths = {n: np.empty((timegrid.M + 1,) + grid.hshape, dtype=np.complex128) for n in names}
    for j in range(timegrid.M + 1):
        vals = stepper.values()
        for n in names:
            paths[n][j] = vals[n]
        if j < timegrid.M:
            stepper.step()
    return SymbolEnsemble(
        grid, timegrid, cutoff, sigma, seed, replica, paths, stepper.c, stepper.ctilde
    )


@dataclass
class ChaosDecomposition:
    """Amplitude-interpolation decomposition of one symbol.

    ``kernels[l]`` is the coefficient path of the amplitude power ``l``; the
    component at amplitude ``sigma`` and order ``l`` is ``sigma**l *
    kernels[l]``.
    """

    name: str
    degree: int
    sigma_list: tuple[float, ...]
    kernels: np.ndarray
    grid: TorusGrid
    timegrid: TimeGrid

    def component(self, sigma: float, ell: int) -> np.ndarray:
        if not 0 <= ell <= self.degree:
            raise ValueError(f"order {ell} outside [0, {self.degree}]")
        return sigma**ell * self.kernels[ell]

    def mass(self, sigma: float) -> dict[int, float]:
        """Largest path norm of each component at the given amplitude."""
        hw = self.grid.half_weights
        out = {}
        for ell in range(self.degree + 1):
            comp = self.component(sigma, ell)
            norms = np.sqrt(np.sum(hw * np.abs(comp) ** 2, axis=tuple(range(1, comp.ndim))))
            out[ell] = float(np.max(norms))
        return out


_DEFAULT_SIGMAS = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0)


def chaos_components(
    grid: TorusGrid,
    timegrid: TimeGrid,
    cutoff: int,
    coeffs: CoefficientSet,
    seed: int,
    name: str,
    sigma_list=None,
    replica: int = 0,
    ctilde_replicas: int = 64,
) -> ChaosDecomposition:
    """Split one symbol into amplitude-power components by interpolation.

    The same noise realization is rebuilt at ``degree + 1`` distinct
    amplitudes and the Vandermonde system ``sum_l sigma_i**l K_l = path_i``
    is solved pointwise.  Since each symbol is exactly homogeneous, all mass
    lands in the component of its own degree; the decomposition is the
    instrument that verifies this.
    """
    if name not in CATALOG:
        raise ValueError(f"unknown symbol {name!r}; valid: {SYMBOL_NAMES}")
    degree = CATALOG[name].degree
    if sigma_list is None:
        sigma_list = _DEFAULT_SIGMAS[: degree + 1]
    sigma_list = tuple(float(s) for s in sigma_list)
    if len(sigma_list) != degree + 1:
        raise ValueError(f"need exactly {degree + 1} amplitudes, got {len(sigma_list)}")
    if len(set(sigma_list)) != len(sigma_list):
        raise ValueError("amplitudes must be distinct")
    taus = []
    for s in sigma_list:
        ens = build_ensemble(
            grid, timegrid, cutoff, coeffs, s, seed,
            replica=replica, ctilde_replicas=ctilde_replicas, names=(name,),
        )
        taus.append(ens.path(name))
    taus = np.stack(taus)
    V = np.vander(np.asarray(sigma_list), N=degree + 1, increasing=True)
    flat = taus.reshape(len(sigma_list), -1)
    kernels = np.linalg.solve(V, flat).reshape((degree + 1,) + taus.shape[1:])
    return ChaosDecomposition(name, degree, sigma_list, kernels, grid, timegrid)


def save_ensemble(ens: SymbolEnsemble, path: str) -> None:
    """Write paths plus a JSON description to ``path`` (.npz) and ``path + .json``."""
    arrays = {f"path_{k}": v for k, v in ens.paths.items()}
    np.savez_compressed(
        path, c=ens.c, ctilde=ens.ctilde, ts=ens.timegrid.ts, **arrays
    )
    meta = {
        "N": ens.grid.N,
        "dim": ens.grid.dim,
        "T": ens.timegrid.T,
        "M": ens.timegrid.M,
        "cutoff": ens.cutoff,
        "sigma": ens.sigma,
        "seed": ens.seed,
        "replica": ens.replica,
        "names": sorted(ens.paths),
    }
    with open(str(path) + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_ensemble(path: str) -> SymbolEnsemble:
    with open(str(path) + ".json") as fh:
        meta = json.load(fh)
    data = np.load(str(path) if str(path).endswith(".npz") else str(path) + ".npz")
    grid = TorusGrid(meta["N"], meta["dim"])
    timegrid = TimeGrid(meta["T"], meta["M"])
    paths = {k[5:]: data[k] for k in data.files if k.startswith("path_")}
    return SymbolEnsemble(
        grid, timegrid, meta["cutoff"], meta["sigma"], meta["seed"],
        meta["replica"], paths, data["c"], data["ctilde"],
    )
