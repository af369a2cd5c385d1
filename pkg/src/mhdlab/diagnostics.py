"""Norm series, the Lyapunov functional, decay fits and bound checks."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .spectral import SpectralField, fractional_laplacian, sobolev_norm

__all__ = [
    "NormSeries",
    "DecayFit",
    "LyapunovConfig",
    "cross_term",
    "lyapunov_value",
    "fit_decay_exponent",
    "default_window",
    "decay_bound_check",
    "energy_balance_residual",
    "max_relative_increase",
    "lyapunov_lower_bound",
    "state_hook",
    "write_csv",
    "fmt",
]


@dataclass(frozen=True)
class NormSeries:
    times: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.shape != v.shape or t.ndim != 1:
            raise ContractError("times and values must be 1-D arrays of equal length")
        if np.any(np.diff(t) <= 0):
            raise ContractError("times must be strictly increasing")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ContractError("values must be finite and nonnegative")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class DecayFit:
    exponent: float
    amplitude: float
    window: tuple[float, float]
    residual: float
    samples: int
    super_algebraic: bool = False
    local_slopes: tuple[float, ...] = field(default=())


@dataclass(frozen=True)
class LyapunovConfig:
    """Functional index ``s`` and weight ``A``; ``A`` defaults to ``|b~|/2 + 1``."""

    s: float
    A: float

    @classmethod
    def for_background(cls, b_tilde, r: float, s: float | None = None) -> "LyapunovConfig":
        return cls(2 * r if s is None else s, float(np.linalg.norm(b_tilde)) / 2 + 1)


def cross_term(u: SpectralField, b: SpectralField, b_tilde, s: float) -> float:
    """``int (b~.grad u) . Lambda^s b`` in coefficient normalisation.

    ``Re sum_k i (b~.k) u(k) . conj(|k|^s b(k))``; the imaginary part of
    the sum vanishes for real fields.
    """
    bk = 1j * u.grid.bdotk(b_tilde)
    lb = fractional_laplacian(b, s)
    total = np.sum(bk * u.coeffs * np.conj(lb.coeffs))
    return float(total.real)


def _cross_imag(u, b, b_tilde, s):
    bk = 1j * u.grid.bdotk(b_tilde)
    lb = fractional_laplacian(b, s)
    return complex(np.sum(bk * u.coeffs * np.conj(lb.coeffs)))


def lyapunov_value(u: SpectralField, b: SpectralField, b_tilde, cfg: LyapunovConfig) -> float:
    """``A (||Lambda^{s/2+1} u||^2 + ||Lambda^{s/2+1} b||^2) - cross_term``."""
    lam = cfg.s / 2 + 1
    energy = sobolev_norm(u, lam) ** 2 + sobolev_norm(b, lam) ** 2
    return cfg.A * energy - cross_term(u, b, b_tilde, cfg.s)


def lyapunov_lower_bound(u: SpectralField, b: SpectralField, cfg: LyapunovConfig) -> float:
    lam = cfg.s / 2 + 1
    return sobolev_norm(u, lam) ** 2 + sobolev_norm(b, lam) ** 2


def default_window(times) -> tuple[float, float]:
    """The last half decade of ``log10(1 + t)``."""
    t = np.asarray(times, dtype=float)
    hi = float(t[-1])
    lo = 10 ** (math.log10(1 + hi) - 0.5) - 1
    return max(lo, float(t[0])), hi


def _lsq(x, y):
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(res**2)))


def fit_decay_exponent(series: NormSeries, window=None, min_samples: int = 8) -> DecayFit:
    """Least-squares slope of ``log value`` against ``log(1 + t)`` inside ``window``.

    ``amplitude`` is the intercept (log of the prefactor).  The window is
    split into three equal pieces in ``log(1 + t)``; when the local slopes
    keep steepening by more than 10 % per piece the decay is flagged
    super-algebraic.
    """
    lo, hi = default_window(series.times) if window is None else window
    sel = (series.times >= lo) & (series.times <= hi)
    t = series.times[sel]
    v = series.values[sel]
    if len(t) < min_samples:
        raise ContractError(f"need at least {min_samples} samples in window, got {len(t)}")
    if np.any(v <= 0):
        raise ContractError("decay fit needs strictly positive values")
    x, y = np.log1p(t), np.log(v)
    slope, intercept, resid = _lsq(x, y)
    edges = np.linspace(x[0], x[-1], 4)
    slopes = []
    for a, b in zip(edges[:-1], edges[1:]):
        m = (x >= a) & (x <= b)
        if m.sum() >= 3:
            slopes.append(_lsq(x[m], y[m])[0])
    steep = (len(slopes) == 3 and slopes[0] < 0
             and all(s2 < s1 * 1.1 for s1, s2 in zip(slopes, slopes[1:])))
    return DecayFit(slope, intercept, (float(t[0]), float(t[-1])), resid, len(t), steep, tuple(slopes))


def decay_bound_check(series: NormSeries, p: float, late_fraction: float = 0.2) -> tuple[float, bool]:
    """Observed constant in ``value <= C (1 + t)^-p`` and whether it stays bounded.

    ``ok`` requires a finite constant whose running maximum is reached
    before the final ``late_fraction`` of the window, measured in
    ``log(1 + t)``.
    """
    if p < 0:
        raise ContractError("decay rate p must be nonnegative")
    x = np.log1p(series.times)
    scaled = series.values * (1 + series.times) ** p
    C = float(np.max(scaled))
    # first sample within rounding of the maximum, so a flat series is not "late"
    i = int(np.argmax(scaled >= C * (1 - 1e-12)))
    cutoff = x[0] + (1 - late_fraction) * (x[-1] - x[0])
    ok = math.isfinite(C) and x[i] < cutoff
    return C, bool(ok)


def max_relative_increase(times, values, start_fraction: float = 0.0) -> float:
    """Largest ``(v[i+1] - v[i]) / |v[i]|`` over samples with ``t >= start_fraction * t_end``.

    Negative when the series decreases strictly; ``-inf`` with fewer than two samples.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    sel = t >= t[0] + start_fraction * (t[-1] - t[0])
    v = v[sel]
    if len(v) < 2:
        return -math.inf
    scale = np.abs(v[:-1])
    rel = np.divide(np.diff(v), scale, out=np.where(np.diff(v) > 0, np.inf, 0.0), where=scale > 0)
    return float(np.max(rel))


def energy_balance_residual(times, energy, dissipation) -> float:
    """``max |E_{i+1} - E_i + dt (D_i + D_{i+1}) / 2| / E_i`` over consecutive samples.

    ``energy`` is ``(||u||^2 + ||b||^2) / 2`` and ``dissipation`` is
    ``mu ||grad u||^2 + nu ||grad b||^2`` at the same times.  Steps whose
    starting energy is zero contribute nothing.
    """
    t = np.asarray(times, dtype=float)
    E = np.asarray(energy, dtype=float)
    D = np.asarray(dissipation, dtype=float)
    if len(t) < 2:
        return 0.0
    budget = np.diff(E) + 0.5 * np.diff(t) * (D[:-1] + D[1:])
    scale = E[:-1]
    rel = np.divide(np.abs(budget), scale, out=np.zeros_like(scale), where=scale > 0)
    return float(np.max(rel))


def fmt(x) -> str:
    """CSV number format: 17 significant digits."""
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    return f"{float(x):.17g}"


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else fmt(v) for v in row])


def state_hook(alphas, lyap: LyapunovConfig, r: float):
    """Solver hook recording the quantities tracked by nonlinear experiments."""

    def hook(state):
        u, b, bt = state.u, state.b, state.bg.b_tilde
        row = {}
        for a in alphas:
            row[f"H{a:g}"] = (sobolev_norm(u, a, homogeneous=False)
                              + sobolev_norm(b, a, homogeneous=False))
        row["Hr1"] = sobolev_norm(u, r + 1, homogeneous=False) + sobolev_norm(b, r + 1, homogeneous=False)
        row["cross"] = cross_term(u, b, bt, lyap.s)
        row["F"] = lyap.A * lyapunov_lower_bound(u, b, lyap) - row["cross"]
        row["F_lower"] = lyapunov_lower_bound(u, b, lyap)
        return row

    return hook
