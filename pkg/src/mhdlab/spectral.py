"""Torus grids, Fourier transforms and Fourier multipliers.

Coefficients are stored over the full FFT index set in numpy ordering, so
a field with ``m`` components on an ``n``-dimensional grid of ``N`` points
per side has ``coeffs.shape == (m,) + (N,) * n``.  The coefficient of mode
``k`` is ``(2 pi)^-n * integral f(x) exp(-i k.x) dx``, i.e. ``fftn(f) / N**n``.

Norms are plain sums over coefficients (no ``(2 pi)^n`` Plancherel factor).

The Nyquist index ``-N/2`` has no conjugate partner of its own.  Odd-order
multipliers (derivatives, divergence, Leray projection) treat the Nyquist
wavenumber as zero so that every operation maps real fields to real fields.
Even multipliers (``|k|^s``, Sobolev weights) use the true value ``N/2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as sfft

from .errors import ConfigurationError, ContractError

__all__ = [
    "TorusGrid",
    "SpectralField",
    "transform_roundtrip",
    "leray_project",
    "fractional_laplacian",
    "directional_derivative",
    "sobolev_norm",
    "dealias",
    "divergence",
]


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on the torus ``[0, 2 pi)^n``."""

    n: int
    N: int

    def __post_init__(self):
        if self.n not in (2, 3):
            raise ConfigurationError(f"dimension must be 2 or 3, got {self.n}", "n")
        if self.N < 8 or self.N % 2:
            raise ConfigurationError(f"grid size must be even and >= 8, got {self.N}", "N")

    @property
    def K_dealias(self) -> int:
        return self.N // 3

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.n, 0))

    @property
    def dx(self) -> float:
        return 2 * np.pi / self.N

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Integer wavenumbers per axis, broadcastable to ``shape``."""
        k1 = np.fft.fftfreq(self.N, 1.0 / self.N).round().astype(np.int64)
        return tuple(_along_axis(k1, i, self.n) for i in range(self.n))

    @cached_property
    def odd_wavenumbers(self) -> tuple[np.ndarray, ...]:
        """Wavenumbers with the Nyquist entry zeroed, for odd multipliers."""
        k1 = np.fft.fftfreq(self.N, 1.0 / self.N)
        k1[self.N // 2] = 0.0
        return tuple(_along_axis(k1, i, self.n) for i in range(self.n))

    @cached_property
    def ksq(self) -> np.ndarray:
        return sum(k.astype(float) ** 2 for k in self.wavenumbers) * np.ones(self.shape)

    @cached_property
    def ksq_odd(self) -> np.ndarray:
        return sum(k**2 for k in self.odd_wavenumbers) * np.ones(self.shape)

    @cached_property
    def kmax(self) -> np.ndarray:
        """``max_i |k_i|`` on the full index set."""
        return np.maximum.reduce([np.abs(k) * np.ones(self.shape, dtype=np.int64)
                                  for k in self.wavenumbers])

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        return self.kmax <= self.K_dealias

    def mesh(self) -> tuple[np.ndarray, ...]:
        """Physical coordinates ``x_i = 2 pi j / N``."""
        x = np.arange(self.N) * self.dx
        return tuple(np.meshgrid(*([x] * self.n), indexing="ij"))

    def mode_index(self, k) -> tuple[int, ...]:
        """Array index of integer mode ``k`` (Nyquist folds onto ``-N/2``)."""
        k = tuple(int(v) for v in k)
        if len(k) != self.n:
            raise ConfigurationError(f"mode {k} does not have {self.n} entries")
        if any(abs(v) > self.N // 2 for v in k):
            raise ConfigurationError(f"mode {k} is outside the retained band")
        return tuple(v % self.N for v in k)

    def bdotk(self, b_tilde) -> np.ndarray:
        """``b_tilde . k`` using the odd (Nyquist-zeroed) wavenumbers."""
        b = _as_vector(b_tilde, self.n)
        return sum(bi * ki for bi, ki in zip(b, self.odd_wavenumbers)) * np.ones(self.shape)


def _along_axis(a, axis, n):
    shape = [1] * n
    shape[axis] = -1
    return np.asarray(a).reshape(shape)


def _as_vector(b, n):
    b = np.asarray(b, dtype=float).ravel()
    if b.shape != (n,):
        raise ConfigurationError(f"expected a {n}-vector, got shape {b.shape}")
    return b


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Fourier coefficients of a real scalar or vector field on a torus grid."""

    grid: TorusGrid
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == self.grid.n:
            c = c[np.newaxis]
        if c.shape[1:] != self.grid.shape:
            raise ConfigurationError(
                f"coefficient shape {c.shape[1:]} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", c)

    @property
    def components(self) -> int:
        return self.coeffs.shape[0]

    @classmethod
    def zeros(cls, grid: TorusGrid, components: int) -> "SpectralField":
        return cls(grid, np.zeros((components,) + grid.shape, dtype=complex))

    @classmethod
    def from_physical(cls, grid: TorusGrid, values) -> "SpectralField":
        v = np.asarray(values, dtype=float)
        if v.ndim == grid.n:
            v = v[np.newaxis]
        if v.shape[1:] != grid.shape:
            raise ConfigurationError(f"physical shape {v.shape[1:]} does not match grid {grid.shape}")
        return cls(grid, sfft.fftn(v, axes=grid.axes) / grid.N**grid.n)

    @classmethod
    def from_modes(cls, grid: TorusGrid, modes: dict, components: int = 1) -> "SpectralField":
        """Build a real field from ``{k: amplitude}``; the ``-k`` partner is filled in."""
        c = np.zeros((components,) + grid.shape, dtype=complex)
        for k, amp in modes.items():
            amp = np.broadcast_to(np.asarray(amp, dtype=complex), (components,))
            idx = grid.mode_index(k)
            nidx = grid.mode_index(tuple(-v for v in k))
            c[(slice(None),) + idx] += amp
            if nidx != idx:
                c[(slice(None),) + nidx] += np.conj(amp)
        return cls(grid, c)

    def to_physical(self) -> np.ndarray:
        g = self.grid
        return sfft.ifftn(self.coeffs * g.N**g.n, axes=g.axes).real

    def coefficient(self, k) -> np.ndarray:
        return self.coeffs[(slice(None),) + self.grid.mode_index(k)].copy()

    def with_coeffs(self, coeffs) -> "SpectralField":
        return SpectralField(self.grid, coeffs)

    # invariants -----------------------------------------------------------

    def conjugate_partner(self) -> np.ndarray:
        """``conj(coeff(-k))`` at every index ``k``."""
        c = self.coeffs
        for ax in self.grid.axes:
            c = np.roll(np.flip(c, axis=ax), 1, axis=ax)
        return np.conj(c)

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.coeffs - self.conjugate_partner()), initial=0.0))

    def symmetrized(self) -> "SpectralField":
        return self.with_coeffs(0.5 * (self.coeffs + self.conjugate_partner()))

    def mean_mode(self) -> np.ndarray:
        return self.coeffs[(slice(None),) + (0,) * self.grid.n].copy()

    def is_mean_zero(self, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.mean_mode()) <= atol))

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs), initial=0.0))

    def support_kmax(self) -> int:
        """Largest ``|k|_inf`` carrying a nonzero coefficient (0 for the zero field)."""
        nz = np.any(self.coeffs != 0, axis=0)
        return int(self.grid.kmax[nz].max()) if nz.any() else 0

    # arithmetic -----------------------------------------------------------

    def _check(self, other):
        if not isinstance(other, SpectralField):
            return NotImplemented
        if other.grid != self.grid or other.components != self.components:
            raise ConfigurationError("fields live on different grids or component counts")
        return other

    def __add__(self, other):
        other = self._check(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        other = self._check(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)


def transform_roundtrip(f: SpectralField) -> SpectralField:
    """Inverse transform to physical space and back."""
    return SpectralField.from_physical(f.grid, f.to_physical())


def divergence(f: SpectralField) -> np.ndarray:
    """Coefficients of ``sum_i k_i f_i(k)`` (the divergence symbol without ``i``)."""
    g = f.grid
    if f.components != g.n:
        raise ContractError("divergence needs a vector field")
    return sum(k * c for k, c in zip(g.odd_wavenumbers, f.coeffs))


def leray_project(f: SpectralField) -> SpectralField:
    """Remove the gradient part: ``v - k (k.v) / |k|^2`` for every ``k != 0``."""
    g = f.grid
    if f.components != g.n:
        raise ContractError(f"Leray projection needs {g.n} components, got {f.components}")
    ksq = g.ksq_odd
    inv = np.divide(1.0, ksq, out=np.zeros_like(ksq), where=ksq > 0)
    kdotv = divergence(f) * inv
    out = np.stack([c - k * kdotv for k, c in zip(g.odd_wavenumbers, f.coeffs)])
    return f.with_coeffs(out)


def fractional_laplacian(f: SpectralField, s: float) -> SpectralField:
    """Multiply by ``|k|^s``; the mean mode is zeroed whenever ``s != 0``."""
    if s == 0:
        return f.with_coeffs(f.coeffs.copy())
    if s < 0 and not f.is_mean_zero():
        raise ContractError("negative order needs a mean-zero field")
    return f.with_coeffs(f.coeffs * _abs_k_power(f.grid, s))


def _abs_k_power(grid: TorusGrid, s: float) -> np.ndarray:
    ksq = grid.ksq
    w = np.zeros_like(ksq)
    nz = ksq > 0
    w[nz] = ksq[nz] ** (0.5 * s)
    return w


def directional_derivative(f: SpectralField, b_tilde) -> SpectralField:
    """``(b_tilde . grad) f``, i.e. multiplication by ``i b_tilde.k``."""
    return f.with_coeffs(f.coeffs * (1j * f.grid.bdotk(b_tilde)))


def sobolev_norm(f: SpectralField, s: float, homogeneous: bool = True) -> float:
    """Coefficient-space ``H^s`` (or homogeneous ``Hdot^s``) norm."""
    g = f.grid
    if homogeneous:
        if s < 0 and not f.is_mean_zero():
            raise ContractError("negative-order homogeneous norm needs a mean-zero field")
        w = _abs_k_power(g, 2 * s) if s != 0 else np.ones(g.shape)
    else:
        w = (1.0 + g.ksq) ** s
    return float(np.sqrt(np.sum(w * np.sum(np.abs(f.coeffs) ** 2, axis=0))))


def dealias(f: SpectralField) -> SpectralField:
    """Two-thirds rule: zero every mode with ``max_i |k_i| > N // 3``."""
    return f.with_coeffs(np.where(f.grid.dealias_mask, f.coeffs, 0.0))
