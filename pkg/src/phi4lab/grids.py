"""Fourier representation of real periodic fields on the torus.

Conventions used throughout the package:

* The grid has ``N`` points per axis (``N`` even) on the unit torus
  ``[0, 1)^dim``, and the forward DFT is normalized by ``1/N**dim``.  A field
  ``v(x) = sum_w c_w exp(2 pi i w.x)`` then has exactly the coefficients
  ``c_w`` and ``mean(v**2) == sum |c_w|**2``.
* Coefficients are stored in "half" layout (the layout of
  :func:`numpy.fft.rfftn`): the last axis keeps frequencies ``0 .. N/2`` and
  the negative half is implicit by conjugation, so reality of the field is
  structural rather than something to police.
* The retained frequency band of an ``N``-grid is ``-N/2 < w <= N/2`` per
  axis.  The Nyquist frequency ``N/2`` is a single slot shared by ``+N/2``
  and ``-N/2``; when a field is moved to a finer grid that slot is split
  evenly between the two, the unique choice that keeps the interpolant real.
* Products are dealiased by evaluating all factors on the doubled grid in a
  single pass and restricting the result back to the original band.  This is
  exact against the convolution sum for factors supported in the open band
  ``|w|_inf <= N/2 - 1``; ternary products can fold at the far corners of the
  closed band, which is why dynamical states elsewhere in the package are
  kept Nyquist-free.
"""

from __future__ import annotations

from functools import lru_cache
from numbers import Number
from typing import Sequence

import numpy as np

__all__ = [
    "TorusGrid",
    "RealField",
    "SpectralField",
    "dft",
    "idft",
    "spectral_truncate",
    "heat_propagate",
    "dealiased_product",
    "pad_half",
    "unpad_half",
    "product_spectra",
    "random_band_field",
]


@lru_cache(maxsize=None)
def _int_freqs(N: int, dim: int) -> tuple[np.ndarray, ...]:
    """Integer frequency along each axis of the half layout."""
    full = np.fft.fftfreq(N, d=1.0 / N).astype(np.int64)
    half = np.arange(N // 2 + 1, dtype=np.int64)
    return tuple([full] * (dim - 1) + [half])


@lru_cache(maxsize=None)
def _kinf_array(N: int, dim: int) -> np.ndarray:
    out = np.zeros((N,) * (dim - 1) + (N // 2 + 1,), dtype=np.int64)
    for i, f in enumerate(_int_freqs(N, dim)):
        sh = [1] * dim
        sh[i] = f.size
        out = np.maximum(out, np.abs(f).reshape(sh))
    return out


@lru_cache(maxsize=None)
def _k2_array(N: int, dim: int) -> np.ndarray:
    out = np.zeros((N,) * (dim - 1) + (N // 2 + 1,), dtype=np.int64)
    for i, f in enumerate(_int_freqs(N, dim)):
        sh = [1] * dim
        sh[i] = f.size
        out = out + (f.reshape(sh)) ** 2
    return out


class TorusGrid:
    """Uniform grid with ``N`` points per axis on the ``dim``-torus.

    Parameters
    ----------
    N : int
        Points per axis; must be even and at least 2.
    dim : int
        Spatial dimension, between 1 and 3.
    """

    def __init__(self, N: int, dim: int):
        N, dim = int(N), int(dim)
        if N < 2 or N % 2:
            raise ValueError(f"N must be even and >= 2, got {N}")
        if not 1 <= dim <= 3:
            raise ValueError(f"dim must be 1, 2 or 3, got {dim}")
        self.N = N
        self.dim = dim
        self.shape = (N,) * dim
        self.hshape = (N,) * (dim - 1) + (N // 2 + 1,)
        self.npoints = N**dim

    @property
    def k2(self) -> np.ndarray:
        """Integer ``|w|^2`` over the half-layout spectrum."""
        return _k2_array(self.N, self.dim)

    @property
    def kinf(self) -> np.ndarray:
        """Integer ``max_i |w_i|`` over the half-layout spectrum."""
        return _kinf_array(self.N, self.dim)

    @property
    def half_weights(self) -> np.ndarray:
        """Conjugate-pair multiplicity of each stored mode (1 or 2)."""
        w = np.full(self.hshape, 2.0)
        w[..., 0] = 1.0
        w[..., -1] = 1.0
        return w

    def points(self) -> list[np.ndarray]:
        x = np.arange(self.N) / self.N
        return np.meshgrid(*([x] * self.dim), indexing="ij")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, TorusGrid)
            and other.N == self.N
            and other.dim == self.dim
        )

    def __hash__(self):
        return hash((self.N, self.dim))

    def __repr__(self):
        return f"TorusGrid(N={self.N}, dim={self.dim})"


class RealField:
    """Real point values of a periodic field on a :class:`TorusGrid`."""

    def __init__(self, grid: TorusGrid, values: np.ndarray):
        values = np.asarray(values, dtype=np.float64)
        if values.shape != grid.shape:
            raise ValueError(f"values shape {values.shape} != grid shape {grid.shape}")
        self.grid = grid
        self.values = values

    def to_spectral(self) -> "SpectralField":
        return dft(self)

    def mean(self) -> float:
        return float(self.values.mean())

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))

    def __add__(self, other: "RealField") -> "RealField":
        _check_same_grid(self, other)
        return RealField(self.grid, self.values + other.values)

    def __sub__(self, other: "RealField") -> "RealField":
        _check_same_grid(self, other)
        return RealField(self.grid, self.values - other.values)


def _conj_reflect(plane: np.ndarray) -> np.ndarray:
    """``conj(plane[(-j) mod n, ...])`` along every axis of ``plane``."""
    out = plane
    for ax in range(plane.ndim):
        out = np.roll(np.flip(out, axis=ax), 1, axis=ax)
    return np.conj(out)


def _check_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise ValueError(f"grid mismatch: {a.grid} vs {b.grid}")


class SpectralField:
    """Half-layout Fourier coefficients of a real periodic field.

    The stored array has shape ``grid.hshape``.  Negative frequencies on the
    last axis are implicit by conjugation.  The two self-conjugate planes
    (last-axis frequency 0 and N/2) carry their own internal reflection
    constraint; pass ``enforce=True`` to symmetrize data that was not
    produced by a real-input transform.
    """

    def __init__(self, grid: TorusGrid, coeffs: np.ndarray, enforce: bool = False):
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != grid.hshape:
            raise ValueError(f"coeffs shape {coeffs.shape} != half shape {grid.hshape}")
        self.grid = grid
        self.coeffs = coeffs
        if enforce:
            for idx in (0, grid.N // 2):
                plane = self.coeffs[..., idx]
                self.coeffs[..., idx] = 0.5 * (plane + _conj_reflect(plane))

    def coeff(self, omega: Sequence[int]) -> complex:
        """Coefficient at the integer frequency vector ``omega``.

        Components may lie anywhere in ``[-N/2, N/2]``; a negative last
        component is resolved through the conjugate half.
        """
        w = tuple(int(o) for o in omega)
        if len(w) != self.grid.dim:
            raise ValueError(f"expected {self.grid.dim} components, got {len(w)}")
        N = self.grid.N
        for o in w:
            if not -N // 2 <= o <= N // 2:
                raise ValueError(f"frequency {o} outside [-N/2, N/2]")
        last = w[-1]
        if last < 0 and last != -N // 2:
            return complex(np.conj(self.coeff(tuple(-o for o in w))))
        idx = tuple(o % N for o in w[:-1]) + (last % N,)
        return complex(self.coeffs[idx])

    def to_real(self) -> RealField:
        return idft(self)

    def l2(self) -> float:
        """Root mean square of the represented field (Parseval)."""
        return float(
            np.sqrt(np.sum(self.grid.half_weights * np.abs(self.coeffs) ** 2))
        )

    def copy(self) -> "SpectralField":
        return SpectralField(self.grid, self.coeffs.copy())

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_same_grid(self, other)
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        if not isinstance(scalar, Number):
            return NotImplemented
        return SpectralField(self.grid, self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "SpectralField":
        return SpectralField(self.grid, -self.coeffs)


def dft(field: RealField) -> SpectralField:
    """Forward transform, normalized so coefficients are Fourier amplitudes."""
    c = np.fft.rfftn(field.values) / field.grid.npoints
    return SpectralField(field.grid, c)


def idft(spec: SpectralField) -> RealField:
    axes = tuple(range(spec.grid.dim))
    vals = np.fft.irfftn(spec.coeffs, s=spec.grid.shape, axes=axes) * spec.grid.npoints
    return RealField(spec.grid, vals)


def spectral_truncate(spec: SpectralField, n: int) -> SpectralField:
    """Sharp frequency cutoff: zero every mode with ``max_i |w_i| > n``.

    For ``n >= N/2`` the whole band is retained and this is the identity.
    """
    n = int(n)
    if n < 0:
        raise ValueError(f"cutoff must be nonnegative, got {n}")
    if n >= spec.grid.N // 2:
        return spec.copy()
    out = np.where(spec.grid.kinf <= n, spec.coeffs, 0.0)
    return SpectralField(spec.grid, out)


def heat_propagate(spec: SpectralField, s: float, t: float, alpha: float = 0.0) -> SpectralField:
    """Apply the damped heat propagator from time ``s`` to ``t >= s``.

    Multiplies each coefficient by ``exp(alpha) * exp(-4 pi^2 |w|^2 (t-s))``
    where ``alpha`` is the time integral of the zeroth-order coefficient over
    ``[s, t]`` (0 for the plain heat semigroup).
    """
    if t < s:
        raise ValueError(f"propagation runs forward in time, got s={s} > t={t}")
    sym = np.exp(alpha - 4.0 * np.pi**2 * spec.grid.k2 * (t - s))
    return SpectralField(spec.grid, spec.coeffs * sym)


def pad_half(c: np.ndarray, N: int, P: int) -> np.ndarray:
    """Zero-pad a half-layout ``N``-grid spectrum onto the finer ``P``-grid.

    The Nyquist slot of each axis is split evenly between ``+N/2`` and
    ``-N/2`` on the target grid.
    """
    if N % 2 or P % 2 or P < N:
        raise ValueError(f"need even P >= N, got N={N}, P={P}")
    if P == N:
        return np.array(c, dtype=np.complex128)
    dim = c.ndim
    h = N // 2
    # gather the small band once, halve the Nyquist entries, scatter into the
    # fine grid in one indexing pass (the Nyquist row appears at +-N/2)
    lead_src = list(range(h + 1)) + [h] + list(range(h + 1, N))
    lead_dst = list(range(h + 1)) + [P - h] + list(range(P - N + h + 1, P))
    lead_wt = np.ones(N + 1)
    lead_wt[h] = lead_wt[h + 1] = 0.5
    last_wt = np.ones(h + 1)
    last_wt[h] = 0.5
    src = [lead_src] * (dim - 1) + [list(range(h + 1))]
    dst = [lead_dst] * (dim - 1) + [list(range(h + 1))]
    g = np.asarray(c, dtype=np.complex128)[np.ix_(*src)]
    for ax in range(dim):
        wt = lead_wt if ax < dim - 1 else last_wt
        g = g * wt.reshape((-1,) + (1,) * (dim - 1 - ax))
    out = np.zeros((P,) * (dim - 1) + (P // 2 + 1,), dtype=np.complex128)
    out[np.ix_(*dst)] = g
    return out


def unpad_half(C: np.ndarray, P: int, N: int) -> np.ndarray:
    """Restrict a half-layout ``P``-grid spectrum to the ``N``-grid band.

    Adjoint of :func:`pad_half`: fine-grid frequencies ``+N/2`` and ``-N/2``
    alias to the single coarse Nyquist slot and are summed there, so
    ``unpad_half(pad_half(c)) == c`` for conjugate-symmetric input.
    """
    if N % 2 or P % 2 or P < N:
        raise ValueError(f"need even P >= N, got N={N}, P={P}")
    if P == N:
        return np.array(C, dtype=np.complex128)
    dim = C.ndim
    h = N // 2
    cur = C
    for ax in range(dim - 1):
        src = np.moveaxis(cur, ax, 0)
        nxt = np.zeros((N,) + src.shape[1:], dtype=np.complex128)
        nxt[:h] = src[:h]
        nxt[h + 1 :] = src[P - h + 1 :]
        nxt[h] = src[h] + src[P - h]
        cur = np.moveaxis(nxt, 0, ax)
    out = np.zeros(cur.shape[:-1] + (h + 1,), dtype=np.complex128)
    out[..., :h] = cur[..., :h]
    nyq = cur[..., h]
    out[..., h] = nyq + _conj_reflect(nyq)
    return out


def _padded_points(c: np.ndarray, N: int, P: int) -> np.ndarray:
    dim = c.ndim
    axes = tuple(range(dim))
    # scale the small band before padding rather than the big point array
    return np.fft.irfftn(pad_half(c * float(P) ** dim, N, P), s=(P,) * dim, axes=axes)


def product_spectra(
    cs: Sequence[np.ndarray], N: int, band: int | None = None, dim: int | None = None
) -> np.ndarray:
    """One-pass dealiased product of 2 or 3 half-layout spectra.

    All factors are interpolated onto the doubled grid, multiplied pointwise
    there, and the result is restricted back to the ``N``-grid band
    (optionally further to ``max_i |w_i| <= band``).  Repeated array objects
    are transformed once.
    """
    if not 2 <= len(cs) <= 3:
        raise ValueError("only binary and ternary products are dealiased exactly")
    dim = cs[0].ndim if dim is None else dim
    P = 2 * N
    cache: dict[int, np.ndarray] = {}
    pts = None
    for c in cs:
        if id(c) not in cache:
            cache[id(c)] = _padded_points(c, N, P)
        p = cache[id(c)]
        pts = p.copy() if pts is None else pts * p
    hat = np.fft.rfftn(pts) / P**dim
    out = unpad_half(hat, P, N)
    if band is not None and band < N // 2:
        out = np.where(_kinf_array(N, dim) <= band, out, 0.0)
    return out


def dealiased_product(*fields: SpectralField, band: int | None = None) -> SpectralField:
    """Dealiased pointwise product of two or three fields on one grid."""
    if not 2 <= len(fields) <= 3:
        raise ValueError("only binary and ternary products are supported")
    grid = fields[0].grid
    for f in fields[1:]:
        _check_same_grid(fields[0], f)
    out = product_spectra([f.coeffs for f in fields], grid.N, band=band)
    return SpectralField(grid, out)


def random_band_field(
    grid: TorusGrid, rng: np.random.Generator, band: int | None = None, scale: float = 1.0
) -> SpectralField:
    """Gaussian random field, optionally truncated to ``max_i |w_i| <= band``."""
    vals = rng.standard_normal(grid.shape) * scale
    spec = dft(RealField(grid, vals))
    if band is not None:
        spec = spectral_truncate(spec, band)
    return spec
