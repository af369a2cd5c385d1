"""Random divergence-free, mean-zero initial data."""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .spectral import SpectralField, TorusGrid, leray_project, sobolev_norm


def _random_solenoidal(grid: TorusGrid, rng: np.random.Generator, support: np.ndarray,
                       magnitude: np.ndarray) -> SpectralField:
    """Unit-polarised random-phase coefficients on ``support``, scaled by ``magnitude``."""
    n = grid.n
    shape = (n,) + grid.shape
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    c = np.where(support, c, 0.0)
    f = leray_project(SpectralField(grid, c)).symmetrized()
    f = leray_project(f)
    amp = np.sqrt(np.sum(np.abs(f.coeffs) ** 2, axis=0))
    scale = np.divide(magnitude, amp, out=np.zeros_like(amp), where=amp > 0)
    return f.with_coeffs(f.coeffs * scale)


def shell_support(grid: TorusGrid, shells) -> np.ndarray:
    """Modes with ``j - 1 < |k| <= j`` for some ``j`` in ``shells``."""
    shells = sorted({int(j) for j in shells})
    if not shells or shells[0] < 1:
        raise ConfigurationError("shells must be positive integers", "shells")
    if shells[-1] > grid.K_dealias:
        raise ConfigurationError(
            f"shell {shells[-1]} exceeds the dealiasing cutoff {grid.K_dealias}", "shells")
    kabs = np.sqrt(grid.ksq)
    mask = np.zeros(grid.shape, dtype=bool)
    for j in shells:
        mask |= (kabs > j - 1) & (kabs <= j)
    return mask


def random_shell_pair(grid: TorusGrid, shells, amplitude: float, m: float, seed: int):
    """Velocity and magnetic perturbations on the given shells.

    Every retained mode gets the same coefficient magnitude and a random
    phase and polarisation; the pair is then scaled so that
    ``||u||_{H^m} + ||b||_{H^m} == amplitude``.
    """
    rng = np.random.default_rng(seed)
    support = shell_support(grid, shells)
    ones = np.ones(grid.shape)
    u = _random_solenoidal(grid, rng, support, ones)
    b = _random_solenoidal(grid, rng, support, ones)
    total = sobolev_norm(u, m, homogeneous=False) + sobolev_norm(b, m, homogeneous=False)
    return u * (amplitude / total), b * (amplitude / total)


def power_law_pair(grid: TorusGrid, decay: float, band: int, seed: int):
    """Velocity and magnetic fields with ``|coeff(k)| = |k|^-decay`` for ``0 < |k|_inf <= band``."""
    if band >= grid.N // 2:
        raise ConfigurationError(f"band {band} must be below N/2 = {grid.N // 2}", "band")
    rng = np.random.default_rng(seed)
    support = (grid.kmax <= band) & (grid.ksq > 0)
    mag = np.zeros(grid.shape)
    mag[support] = grid.ksq[support] ** (-0.5 * decay)
    return _random_solenoidal(grid, rng, support, mag), _random_solenoidal(grid, rng, support, mag)


def random_scalar(grid: TorusGrid, band: int, seed: int) -> SpectralField:
    """Real mean-zero scalar field with gaussian coefficients on ``0 < |k|_inf <= band``."""
    if not 1 <= band < grid.N // 2:
        raise ConfigurationError(f"band {band} must satisfy 1 <= band < N/2 = {grid.N // 2}", "band")
    rng = np.random.default_rng(seed)
    c = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    support = (grid.kmax <= band) & (grid.ksq > 0)
    return SpectralField(grid, np.where(support, c, 0.0)[None]).symmetrized()
