"""Exact per-mode solution of the linearised perturbation system.

Every Fourier mode of the second-order form

    phi_tt = Delta phi_t + (b.grad)^2 phi + f

is a damped oscillator ``lambda^2 + 2 a lambda + d = 0`` with ``a = |k|^2 / 2``
and ``d = (b.k)^2``.  The two kernels

    L1(t) = (e^{l1 t} + e^{l2 t}) / 2,   L2(t) = (e^{l1 t} - e^{l2 t}) / (l1 - l2)

give ``phi = L1 phi0 + L2 (phi1 + a phi0) + int_0^t L2(t - tau) f(tau) dtau``.
Three regimes are evaluated separately so that ``L2`` never cancels
catastrophically: real roots, complex roots, and the (near) double root.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .diophantine import BackgroundField, Region, classify_array
from .errors import ConfigurationError, ContractError
from .spectral import SpectralField, TorusGrid

__all__ = [
    "ModeExponents",
    "KernelConstants",
    "PROOF_CONSTANTS",
    "mode_exponents",
    "kernel_values",
    "kernel_arrays",
    "kernel_bound_check",
    "kernel_bound_suite",
    "propagate_linear",
    "propagate_modes",
    "solve_duhamel",
    "initial_velocity",
    "CASES",
]

CASES = ((0.0, 1.0), (1.0, 0.0))
DEGENERATE_RTOL = 1e-10


def _check_case(case):
    case = (float(case[0]), float(case[1]))
    if case not in CASES:
        raise ConfigurationError(f"case (mu, nu) must be (0, 1) or (1, 0), got {case}", "case")
    return case


@dataclass(frozen=True)
class ModeExponents:
    k: tuple[int, ...]
    a: float
    d: float
    regime: str
    sigma_or_omega: float
    lambda1: complex
    lambda2: complex


def _regime(a2, d):
    thr = DEGENERATE_RTOL * np.maximum(np.maximum(a2, d), 1.0)
    disc = a2 - d
    return np.where(np.abs(disc) <= thr, 0, np.where(disc > 0, 1, -1))


def mode_exponents(k, b_tilde) -> ModeExponents:
    kv = np.asarray(k, dtype=float)
    ksq = float(kv @ kv)
    if ksq == 0:
        raise ContractError("mode exponents are undefined at k = 0")
    a = 0.5 * ksq
    bk = float(np.dot(np.asarray(b_tilde, dtype=float), kv))
    d = bk * bk
    reg = int(_regime(a * a, d))
    root = math.sqrt(abs(a * a - d))
    if reg == 1:
        lam2 = -a - root
        lam1 = -d / (a + root)  # Vieta form; -a + root cancels when d << a^2
        l1, l2 = complex(lam1), complex(lam2)
    elif reg == -1:
        l1, l2 = complex(-a, root), complex(-a, -root)
    else:
        l1 = l2 = complex(-a)
    name = {1: "hyperbolic", -1: "oscillatory", 0: "degenerate"}[reg]
    return ModeExponents(tuple(int(v) for v in k), a, d, name, root, l1, l2)


def kernel_arrays(ksq, bk, t):
    """Vectorised ``(L1, L2)`` for arrays of ``|k|^2`` and ``b.k`` at time ``t >= 0``.

    ``t`` may be a scalar or broadcast against the mode arrays.  Entries with
    ``ksq == 0`` get ``(1, t)``, the limit of the formulas as ``k -> 0``.
    """
    ksq = np.asarray(ksq, dtype=float)
    bk = np.asarray(bk, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ContractError("kernels are only defined for t >= 0")
    ksq, bk, t = np.broadcast_arrays(ksq, bk, t)
    a = 0.5 * ksq
    d = bk * bk
    a2 = a * a
    reg = _regime(a2, d)
    root = np.sqrt(np.abs(a2 - d))
    L1 = np.empty(ksq.shape)
    L2 = np.empty(ksq.shape)

    h = reg == 1
    if h.any():
        s, th, ah, dh = root[h], t[h], a[h], d[h]
        lam1 = -dh / (ah + s)
        lam2 = -ah - s
        e1 = np.exp(lam1 * th)
        L1[h] = 0.5 * (e1 + np.exp(lam2 * th))
        L2[h] = -e1 * np.expm1(-2.0 * s * th) / (2.0 * s)

    o = reg == -1
    if o.any():
        w, to, ao = root[o], t[o], a[o]
        damp = np.exp(-ao * to)
        L1[o] = damp * np.cos(w * to)
        L2[o] = damp * np.sin(w * to) / w

    g = reg == 0
    if g.any():
        tg, ag = t[g], a[g]
        q = (a2[g] - d[g]) * tg * tg  # signed (sigma t)^2
        c, s = _even_odd_series(q)
        damp = np.exp(-ag * tg)
        L1[g] = damp * c
        L2[g] = tg * damp * s
    return L1, L2


def _even_odd_series(q):
    """``cosh(sqrt q)`` and ``sinh(sqrt q) / sqrt q`` for signed ``q``."""
    c = np.empty_like(q)
    s = np.empty_like(q)
    big = np.abs(q) > 1.0
    if big.any():
        qb = q[big]
        x = np.sqrt(np.abs(qb))
        c[big] = np.where(qb > 0, np.cosh(x), np.cos(x))
        s[big] = np.where(qb > 0, np.sinh(x), np.sin(x)) / x
    sm = ~big
    if sm.any():
        qs = q[sm]
        tc = np.ones_like(qs)
        ts = np.ones_like(qs)
        cs = tc.copy()
        ss = ts.copy()
        for j in range(1, 40):
            tc = tc * qs / ((2 * j - 1) * (2 * j))
            ts = ts * qs / ((2 * j) * (2 * j + 1))
            cs += tc
            ss += ts
            if np.all(np.abs(tc) < 1e-17 * np.abs(cs)) and np.all(np.abs(ts) < 1e-17 * np.abs(ss)):
                break
        c[sm] = cs
        s[sm] = ss
    return c, s


def kernel_values(k, b_tilde, t: float) -> tuple[float, float]:
    kv = np.asarray(k, dtype=float)
    ksq = float(kv @ kv)
    if ksq == 0:
        raise ContractError("kernels are undefined at k = 0")
    if t < 0:
        raise ContractError("kernels are only defined for t >= 0")
    bk = float(np.dot(np.asarray(b_tilde, dtype=float), kv))
    L1, L2 = kernel_arrays(ksq, bk, t)
    return float(L1), float(L2)


@dataclass(frozen=True)
class KernelConstants:
    """Multiplicative constants in the region-wise kernel bounds.

    ``s1_l2 = 4/e`` and ``s2_l2 = 8/e`` come from ``y e^{-y} <= 1/e``.
    ``s3_l2`` defaults to 1 as the bound is usually quoted; the proof step
    ``2 sigma >= |k|^2 / 2`` only supports 2, see ``PROOF_CONSTANTS``.
    """

    s1_l2: float = 4.0 / math.e
    s2_l1: float = 1.0
    s2_l2: float = 8.0 / math.e
    s3_l1: float = 1.0
    s3_l2: float = 1.0


PROOF_CONSTANTS = KernelConstants(s3_l2=2.0)
_BOUND_RTOL = 1e-12
_MEAN_ATOL = 1e-13


def kernel_bounds(ksq, bk, t, constants: KernelConstants = KernelConstants()):
    """Region codes and the ``(L1, L2)`` bounds for arrays of modes."""
    ksq = np.asarray(ksq, dtype=float)
    bk = np.asarray(bk, dtype=float)
    t = np.asarray(t, dtype=float)
    ksq, bk, t = np.broadcast_arrays(ksq, bk, t)
    region = classify_array(ksq, bk)
    kt = ksq * t
    slow = np.exp(-np.divide(bk * bk, ksq, out=np.zeros_like(ksq), where=ksq > 0) * t)
    fast = np.exp(-0.75 * kt)
    inv = np.divide(1.0, ksq, out=np.full_like(ksq, np.inf), where=ksq > 0)
    b1 = np.select(
        [region == 1, region == 2, region == 3],
        [np.exp(-0.5 * kt), constants.s2_l1 * np.exp(-0.25 * kt), constants.s3_l1 * 0.5 * (slow + fast)],
        np.inf)
    b2 = np.select(
        [region == 1, region == 2, region == 3],
        [constants.s1_l2 * np.exp(-0.25 * kt) * inv,
         constants.s2_l2 * np.exp(-0.125 * kt) * inv,
         constants.s3_l2 * (slow + fast) * inv],
        np.inf)
    return region, b1, b2


def kernel_bound_check(k, b_tilde, t: float,
                       constants: KernelConstants = KernelConstants()) -> tuple[bool, float]:
    """Check the region-specific bounds on ``|L1|`` and ``|L2|`` for one mode.

    ``slack`` is the smaller of ``bound - |value|`` over the two bounds.
    """
    kv = np.asarray(k, dtype=float)
    ksq = float(kv @ kv)
    if ksq == 0:
        raise ContractError("kernel bounds are undefined at k = 0")
    bk = float(np.dot(np.asarray(b_tilde, dtype=float), kv))
    L1, L2 = kernel_arrays(ksq, bk, t)
    _, b1, b2 = kernel_bounds(ksq, bk, t, constants)
    ok = (abs(L1) <= b1 * (1 + _BOUND_RTOL)) and (abs(L2) <= b2 * (1 + _BOUND_RTOL))
    slack = min(float(b1 - abs(L1)), float(b2 - abs(L2)))
    return bool(ok), slack


def kernel_bound_suite(b_tilde, K: int, times, constants: KernelConstants = KernelConstants()):
    """Kernel bounds for every mode ``0 < |k|_inf <= K`` and every time.

    Returns a dict of flat arrays: ``k`` (m, n), ``region``, ``t``, ``L1``,
    ``L2``, ``slack`` and ``ok``.  Rows are ordered time-major, then by mode
    in lexicographic order.
    """
    b = np.asarray(b_tilde, dtype=float)
    n = b.size
    rng = np.arange(-K, K + 1)
    ks = np.stack(np.meshgrid(*([rng] * n), indexing="ij"), axis=-1).reshape(-1, n)
    ks = ks[np.any(ks != 0, axis=1)]
    ksq = np.sum(ks.astype(float) ** 2, axis=1)
    bk = ks @ b
    rows = {key: [] for key in ("k", "region", "t", "L1", "L2", "slack", "ok")}
    for t in times:
        L1, L2 = kernel_arrays(ksq, bk, float(t))
        region, b1, b2 = kernel_bounds(ksq, bk, float(t), constants)
        slack = np.minimum(b1 - np.abs(L1), b2 - np.abs(L2))
        ok = (np.abs(L1) <= b1 * (1 + _BOUND_RTOL)) & (np.abs(L2) <= b2 * (1 + _BOUND_RTOL))
        rows["k"].append(ks)
        rows["region"].append(region)
        rows["t"].append(np.full(len(ks), float(t)))
        rows["L1"].append(L1)
        rows["L2"].append(L2)
        rows["slack"].append(slack)
        rows["ok"].append(ok)
    return {key: np.concatenate(v) for key, v in rows.items()}


def propagate_modes(ksq, bk, U0, B0, t: float, case=(0.0, 1.0)):
    """Apply the exact propagator to coefficient arrays.

    ``U0``/``B0`` have a leading component axis and trailing axes matching
    ``ksq``/``bk``.  Case ``(0, 1)``:

        U = (L1 + a L2) U0 + i(b.k) L2 B0,   B = i(b.k) L2 U0 + (L1 - a L2) B0

    and the signs of the ``a L2`` terms swap for case ``(1, 0)``.
    """
    mu, nu = _check_case(case)
    L1, L2 = kernel_arrays(ksq, bk, t)
    a = 0.5 * np.asarray(ksq, dtype=float)
    sign = 1.0 if mu == 0.0 else -1.0
    cross = 1j * np.asarray(bk) * L2
    U = (L1 + sign * a * L2) * U0 + cross * B0
    B = cross * U0 + (L1 - sign * a * L2) * B0
    return U, B


def propagate_linear(U0: SpectralField, B0: SpectralField, bg: BackgroundField, t: float,
                     case=(0.0, 1.0)) -> tuple[SpectralField, SpectralField]:
    """Exact solution of the linearised system at time ``t``."""
    _check_fields(U0, B0, bg)
    if t < 0:
        raise ContractError("propagation time must be nonnegative")
    if t == 0:
        return U0.with_coeffs(U0.coeffs.copy()), B0.with_coeffs(B0.coeffs.copy())
    g = U0.grid
    U, B = propagate_modes(g.ksq_odd, g.bdotk(bg.b_tilde), U0.coeffs, B0.coeffs, t, case)
    return U0.with_coeffs(U), B0.with_coeffs(B)


def _check_fields(U0, B0, bg):
    g = U0.grid
    if B0.grid != g:
        raise ConfigurationError("U0 and B0 live on different grids")
    if g.n != bg.n:
        raise ConfigurationError("field and background dimensions differ")
    # sampled physical data carries round-off in the mean mode
    if not all(f.is_mean_zero(_MEAN_ATOL * max(f.max_abs(), 1.0)) for f in (U0, B0)):
        raise ContractError("linear propagation needs mean-zero data")


def initial_velocity(U0: SpectralField, B0: SpectralField, bg: BackgroundField, case=(0.0, 1.0)):
    """Time derivatives ``(U_t, B_t)`` at ``t = 0`` read off the first-order system."""
    mu, nu = _check_case(case)
    g = U0.grid
    bk = 1j * g.bdotk(bg.b_tilde)
    ksq = g.ksq_odd
    Ut = bk * B0.coeffs - mu * ksq * U0.coeffs
    Bt = bk * U0.coeffs - nu * ksq * B0.coeffs
    return U0.with_coeffs(Ut), B0.with_coeffs(Bt)


def _simpson_weights(m: int, h: float) -> np.ndarray:
    """Composite Simpson weights on ``m`` intervals; Simpson 3/8 closes an odd count."""
    w = np.zeros(m + 1)
    if m == 1:
        w[:] = h / 2
        return w
    even = m if m % 2 == 0 else m - 3
    if even > 0:
        w[0:even + 1:2] += 2 * h / 3
        w[1:even:2] += 4 * h / 3
        w[0] -= h / 3
        w[even] -= h / 3
    if m % 2:
        w[even:even + 4] += 3 * h / 8 * np.array([1.0, 3.0, 3.0, 1.0])
    return w


def solve_duhamel(phi0: SpectralField, phi1: SpectralField, forcing, t: float,
                  bg: BackgroundField, times=None) -> SpectralField:
    """Solution of the forced second-order problem at time ``t``.

    ``forcing`` is a sequence of fields sampled on the uniform grid ``times``
    (default ``linspace(0, t, len(forcing))``) that must span ``[0, t]``.  The
    homogeneous part is exact per mode; the convolution integral uses
    composite Simpson quadrature, which is ``O(h^4)``.
    """
    g = phi0.grid
    if phi1.grid != g or phi1.components != phi0.components:
        raise ConfigurationError("phi0 and phi1 must share grid and component count")
    if t < 0:
        raise ContractError("time must be nonnegative")
    ksq = g.ksq_odd
    bk = g.bdotk(bg.b_tilde)
    L1, L2 = kernel_arrays(ksq, bk, t)
    out = L1 * phi0.coeffs + L2 * (phi1.coeffs + 0.5 * ksq * phi0.coeffs)
    forcing = list(forcing) if forcing is not None else []
    if forcing:
        m = len(forcing) - 1
        if times is None:
            times = np.linspace(0.0, t, m + 1)
        times = np.asarray(times, dtype=float)
        if len(times) != m + 1 or m < 1:
            raise ContractError("forcing needs at least two samples matching the time grid")
        scale = max(abs(t), 1.0)
        if abs(times[0]) > 1e-12 * scale or abs(times[-1] - t) > 1e-12 * scale:
            raise ContractError(f"forcing samples span [{times[0]}, {times[-1]}], not [0, {t}]")
        h = (times[-1] - times[0]) / m
        if np.max(np.abs(np.diff(times) - h)) > 1e-9 * max(h, 1e-300):
            raise ContractError("forcing samples must be uniformly spaced")
        w = _simpson_weights(m, h)
        for wj, tj, fj in zip(w, times, forcing):
            if fj.grid != g or fj.components != phi0.components:
                raise ConfigurationError("forcing sample does not match phi0")
            _, L2j = kernel_arrays(ksq, bk, max(t - tj, 0.0))
            out = out + wj * L2j * fj.coeffs
    return phi0.with_coeffs(out)
