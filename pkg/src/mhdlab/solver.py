"""Pseudospectral integration of the perturbation MHD system.

    u_t = mu Lap u - P(u.grad u - b.grad b) + (b~.grad) b
    b_t = nu Lap b - u.grad b + b.grad u + (b~.grad) u

with exactly one of ``mu``, ``nu`` equal to 1.  Quadratic terms are built in
flux form, ``u.grad u - b.grad b = div(u u - b b)`` and
``b.grad u - u.grad b = div(u b - b u)``, from dealiased fields on the
physical grid.  Time stepping is classical RK4 on integrating-factor
variables, so diffusion is integrated exactly and only the coupling and
transport terms are explicit.

Internally the state holds only the modes that survive dealiasing, on the
real-FFT half spectrum; ``SimState`` holds full-spectrum ``SpectralField``
values and conversions between the two are exact (no transforms).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

from .diophantine import BackgroundField
from .errors import ConfigurationError, ContractError, DivergenceError
from .linear import _check_case
from .spectral import SpectralField, TorusGrid, divergence

__all__ = ["SimState", "SolverConfig", "Trajectory", "nonlinear_rhs", "step", "run"]

INVARIANT_ATOL = 1e-12


@dataclass(frozen=True)
class SimState:
    t: float
    u: SpectralField
    b: SpectralField
    case: tuple[float, float]
    bg: BackgroundField

    def __post_init__(self):
        object.__setattr__(self, "case", _check_case(self.case))
        g = self.u.grid
        if self.b.grid != g:
            raise ConfigurationError("u and b live on different grids")
        if self.u.components != g.n or self.b.components != g.n:
            raise ConfigurationError("u and b must be vector fields")
        if self.bg.n != g.n:
            raise ConfigurationError("background dimension does not match the grid")

    @property
    def grid(self) -> TorusGrid:
        return self.u.grid

    @property
    def mu(self) -> float:
        return self.case[0]

    @property
    def nu(self) -> float:
        return self.case[1]

    def invariant_defects(self) -> dict[str, float]:
        return {
            "divergence": max(float(np.max(np.abs(divergence(f)))) for f in (self.u, self.b)),
            "mean": max(float(np.max(np.abs(f.mean_mode()))) for f in (self.u, self.b)),
            "symmetry": max(f.symmetry_defect() for f in (self.u, self.b)),
        }

    def check_invariants(self, atol: float = INVARIANT_ATOL) -> None:
        bad = {k: v for k, v in self.invariant_defects().items() if v > atol}
        if bad:
            raise ContractError(f"state violates invariants: {bad}")

    def energy(self) -> float:
        return 0.5 * float(np.sum(np.abs(self.u.coeffs) ** 2) + np.sum(np.abs(self.b.coeffs) ** 2))


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    T: float = 1.0
    cfl_guard: float = 1.0
    project_b: bool = True
    record_stride: int = 100

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive", "dt")
        if not self.T >= 0:
            raise ConfigurationError("T must be nonnegative", "T")
        if self.record_stride < 1:
            raise ConfigurationError("record_stride must be at least 1", "record_stride")
        if not self.cfl_guard > 0:
            raise ConfigurationError("cfl_guard must be positive", "cfl_guard")


@dataclass
class Trajectory:
    """Per-step energy budget plus hook records at the record stride."""

    times: np.ndarray
    energy: np.ndarray
    dissipation: np.ndarray
    record_times: np.ndarray
    records: list[dict]
    final: SimState
    max_divergence: float
    max_mean: float
    steps: int

    def series(self, key: str) -> np.ndarray:
        return np.array([r[key] for r in self.records])


# ---------------------------------------------------------------------------
# retained-mode layout
#
# The integrator keeps only the modes that survive dealiasing: along every
# axis but the last the wavenumbers -K..K in FFT order (2K + 1 entries), along
# the last axis 0..K.  Transforms pad one axis at a time, so the zero rows are
# never pushed through a full-length FFT.


def _retained_index(N: int, K: int) -> np.ndarray:
    return np.concatenate([np.arange(K + 1), np.arange(N - K, N)])


def full_to_retained(c: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Restrict full-spectrum coefficients (leading component axes) to the retained modes."""
    N, K, n = grid.N, grid.K_dealias, grid.n
    idx = _retained_index(N, K)
    out = c[..., : K + 1]
    for ax in range(n - 1):
        out = np.take(out, idx, axis=out.ndim - n + ax)
    return np.ascontiguousarray(out)


def retained_to_full(r: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Embed retained coefficients in the full spectrum, filling conjugate partners."""
    N, K, n = grid.N, grid.K_dealias, grid.n
    lead = r.shape[: r.ndim - n]
    full = np.zeros(lead + grid.shape, dtype=complex)
    idx = _retained_index(N, K)
    sel = (Ellipsis,) + np.ix_(*([idx] * (n - 1) + [np.arange(K + 1)]))
    full[sel] = r
    # modes with negative last index are conjugates of their mirror image
    neg = (Ellipsis,) + np.ix_(*([(-idx) % N] * (n - 1) + [(N - np.arange(1, K + 1)) % N]))
    full[neg] = np.conj(r[..., 1:])
    return full


def _crop(a: np.ndarray, axis: int, N: int, K: int) -> np.ndarray:
    lo = [slice(None)] * a.ndim
    hi = [slice(None)] * a.ndim
    lo[axis], hi[axis] = slice(0, K + 1), slice(N - K, N)
    return np.concatenate([a[tuple(lo)], a[tuple(hi)]], axis=axis)


class _Integrator:
    """Lawson RK4 on the stacked state ``Y = (u_1..u_n, b_1..b_n)``."""

    def __init__(self, grid: TorusGrid, bg: BackgroundField, case, cfg: SolverConfig):
        self.grid = grid
        self.cfg = cfg
        self.mu, self.nu = _check_case(case)
        n, N, K = grid.n, grid.N, grid.K_dealias
        self.n, self.N, self.K = n, N, K
        kr = np.concatenate([np.arange(K + 1), np.arange(-K, 0)]).astype(float)
        axes = [kr] * (n - 1) + [np.arange(K + 1, dtype=float)]
        self.rshape = tuple(len(a) for a in axes)
        self.k = np.stack([np.broadcast_to(a.reshape([-1 if j == i else 1 for j in range(n)]), self.rshape)
                           for i, a in enumerate(axes)])
        self.ik = 1j * self.k
        self.ksq = np.sum(self.k**2, axis=0)
        self.inv_ksq = np.divide(1.0, self.ksq, out=np.zeros(self.rshape), where=self.ksq > 0)
        self.ik_bk = 1j * np.tensordot(np.asarray(bg.b_tilde), self.k, axes=1)
        w = np.full(K + 1, 2.0)
        w[0] = 1.0  # the last-axis zero plane is not doubled by conjugation
        self.weight = np.broadcast_to(w, self.rshape)
        dt = cfg.dt
        diff = np.array([self.mu] * n + [self.nu] * n).reshape((2 * n,) + (1,) * n)
        self.diff = diff
        self.E = np.exp(-diff * self.ksq * dt)
        self.Eh = np.exp(-0.5 * diff * self.ksq * dt)
        self.ordered = [(i, j) for i in range(n) for j in range(n) if i != j]
        self.half_ik = 0.5 * self.ik
        self.k_over_ksq = self.k * self.inv_ksq
        self._pad_cache = {}
        self.umax = 0.0
        self.mirror = [np.concatenate([[0], np.arange(2 * K, 0, -1)])] * (n - 1)

    # transforms -----------------------------------------------------------

    def _buffers(self, lead):
        """Zeroed padding buffers, one per padded axis, reused across calls.

        The last buffer holds the half spectrum at its full length
        ``N // 2 + 1``; letting ``irfft`` pad a short axis itself is more than
        twice as slow.
        """
        if lead not in self._pad_cache:
            n, N = self.n, self.N
            bufs = []
            shape = [lead] + list(self.rshape)
            for ax in range(n - 1):
                shape[1 + ax] = N
                bufs.append(np.zeros(shape, dtype=complex))
            shape[-1] = N // 2 + 1
            bufs.append(np.zeros(shape, dtype=complex))
            self._pad_cache[lead] = bufs
        return self._pad_cache[lead]

    def to_physical(self, Y):
        n, N, K = self.n, self.N, self.K
        *bufs, last = self._buffers(len(Y))
        a = Y
        for ax, buf in enumerate(bufs):
            lo = (slice(None),) * (1 + ax) + (slice(0, K + 1),)
            hi = (slice(None),) * (1 + ax) + (slice(N - K, N),)
            src_hi = (slice(None),) * (1 + ax) + (slice(K + 1, None),)
            buf[lo] = a[lo]
            buf[hi] = a[src_hi]
            a = sfft.ifft(buf, axis=1 + ax, norm="forward")
        last[..., : K + 1] = a
        return sfft.irfft(last, n=N, axis=-1, norm="forward")

    def to_spectral(self, f):
        n, N, K = self.n, self.N, self.K
        a = sfft.rfft(f, axis=-1, norm="forward")[..., : K + 1]
        for ax in range(n - 2, -1, -1):
            a = _crop(sfft.fft(a, axis=1 + ax, norm="forward"), 1 + ax, N, K)
        return a

    # projections ----------------------------------------------------------

    def project(self, V):
        """Leray projection of a stack of ``n``-vectors, shape ``(m * n,) + rshape``."""
        n = self.n
        W = V.reshape((-1, n) + self.rshape)
        kdotv = self.k_over_ksq[0] * W[:, 0]
        for j in range(1, n):
            kdotv += self.k_over_ksq[j] * W[:, j]
        out = np.empty_like(W)
        for j in range(n):
            np.multiply(self.k[j], kdotv, out=out[:, j])
            np.subtract(W[:, j], out[:, j], out=out[:, j])
        return out.reshape(V.shape)

    def _symmetrize(self, Y):
        Y[(slice(None),) + (0,) * self.n] = 0.0
        plane = Y[..., 0]
        Y[..., 0] = 0.5 * (plane + np.conj(plane[(slice(None),) + np.ix_(*self.mirror)]))
        return Y

    def clean(self, Y):
        """Re-project, zero the mean and restore conjugate symmetry after a step."""
        if self.cfg.project_b:
            Y = self.project(Y)
        else:
            Y[: self.n] = self.project(Y[: self.n])
        return self._symmetrize(Y)

    # right-hand side ------------------------------------------------------

    def nonlinear(self, Y, want_umax=False):
        """Explicit tendencies (everything except diffusion).

        Products are formed from the Elsasser fields ``z+ = u + b`` and
        ``z- = u - b``: with ``P_ij = z+_i z-_j`` one has
        ``u_i u_j - b_i b_j = (P_ij + P_ji) / 2`` and
        ``u_i b_j - b_i u_j = (P_ji - P_ij) / 2``.  Only the trace-free part of
        the momentum flux is transformed; its trace is a gradient and the
        projection removes it.
        """
        n = self.n
        Z = np.empty_like(Y)
        np.add(Y[:n], Y[n:], out=Z[:n])
        np.subtract(Y[:n], Y[n:], out=Z[n:])
        phys = self.to_physical(Z)
        zp, zm = phys[:n], phys[n:]
        if want_umax:
            self.umax = 0.5 * float(np.max(np.abs(zp + zm)))
        last = zp[n - 1] * zm[n - 1]
        prods = [zp[i] * zm[i] - last for i in range(n - 1)]
        prods += [zp[i] * zm[j] for i, j in self.ordered]
        F = self.to_spectral(np.stack(prods))
        P = {ij: F[n - 1 + m] for m, ij in enumerate(self.ordered)}
        out = np.empty_like(Y)
        hik = self.half_ik
        for i in range(n):
            mom = self.ik[i] * F[i] if i < n - 1 else np.zeros(self.rshape, dtype=complex)
            ind = np.zeros(self.rshape, dtype=complex)
            for j in range(n):
                if j == i:
                    continue
                mom += hik[j] * (P[i, j] + P[j, i])
                ind += hik[j] * (P[j, i] - P[i, j])
            np.negative(mom, out=out[i])
            out[n + i] = ind
        out[:n] += self.ik_bk * Y[n:]
        out[n:] += self.ik_bk * Y[:n]
        if self.cfg.project_b:
            return self.project(out)
        out[:n] = self.project(out[:n])
        return out

    # stepping -------------------------------------------------------------

    def step(self, Y):
        h = self.cfg.dt
        E, Eh = self.E, self.Eh
        k1 = self.nonlinear(Y, want_umax=True)
        EhY = Eh * Y
        k2 = self.nonlinear(EhY + (0.5 * h) * (Eh * k1))
        k3 = self.nonlinear(EhY + (0.5 * h) * k2)
        k4 = self.nonlinear(E * Y + h * (Eh * k3))
        k2 += k3
        k2 *= 2.0
        k2 *= Eh
        k2 += k4
        k1 += Y * (6.0 / h)
        k1 *= E
        k1 += k2
        k1 *= h / 6.0
        return self.clean(k1)

    # state layout ---------------------------------------------------------

    def load(self, Y):
        """Internal state from stacked retained coefficients ``(u, b)``."""
        return Y

    def store(self, X):
        """Stacked retained coefficients ``(u, b)`` from the internal state."""
        return X

    # diagnostics ----------------------------------------------------------

    def energy_and_dissipation(self, Y):
        n = self.n
        p = Y.real**2 + Y.imag**2
        pu = np.sum(p[:n], axis=0) * self.weight
        pb = np.sum(p[n:], axis=0) * self.weight
        energy = 0.5 * float(np.sum(pu) + np.sum(pb))
        dissipation = 0.0
        if self.mu:
            dissipation += self.mu * float(np.vdot(self.ksq, pu))
        if self.nu:
            dissipation += self.nu * float(np.vdot(self.ksq, pb))
        return energy, dissipation

    def defects(self, Y):
        div = np.einsum("i...,mi...->m...", self.k, Y.reshape((2, self.n) + self.rshape))
        mean = Y[(slice(None),) + (0,) * self.n]
        return float(np.max(np.abs(div))), float(np.max(np.abs(mean)))


class _Integrator2D(_Integrator):
    """Two-dimensional variant on scalar potentials.

    A solenoidal mean-zero field is ``v(k) = i kperp(k) phi(k)`` with
    ``kperp = (k_2, -k_1)``, so velocity and magnetic field are carried as
    two scalar potentials and the Leray projection is exact by construction.
    With the trace-free flux ``D = P_11 - P_22``, ``s = P_12 + P_21`` and
    ``d = P_12 - P_21`` the explicit tendencies are

        psi_t = -(k_1 k_2 D + (k_2^2 - k_1^2) s / 2) / |k|^2 + i (b~.k) a
        a_t   = -d / 2 + i (b~.k) psi
    """

    def __init__(self, grid, bg, case, cfg):
        super().__init__(grid, bg, case, cfg)
        if grid.n != 2 or not cfg.project_b:
            raise ContractError("the potential form needs n = 2 and a projected b tendency")
        k0, k1 = self.k
        self.ikperp = np.stack([1j * k1, -1j * k0])
        self.coef_D = -k0 * k1 * self.inv_ksq
        self.coef_s = -0.5 * (k1 * k1 - k0 * k0) * self.inv_ksq
        self.E = self.E[::2]
        self.Eh = self.Eh[::2]

    def load(self, Y):
        # phi = -i kperp . v / |k|^2 inverts v = i kperp phi on solenoidal fields
        k0, k1 = self.k
        X = np.stack([k1 * Y[0] - k0 * Y[1], k1 * Y[2] - k0 * Y[3]])
        return -1j * X * self.inv_ksq

    def store(self, X):
        ip = self.ikperp
        return np.stack([ip[0] * X[0], ip[1] * X[0], ip[0] * X[1], ip[1] * X[1]])

    def nonlinear(self, X, want_umax=False):
        zp = X[0] + X[1]
        zm = X[0] - X[1]
        ip = self.ikperp
        phys = self.to_physical(np.stack([ip[0] * zp, ip[1] * zp, ip[0] * zm, ip[1] * zm]))
        if want_umax:
            self.umax = 0.5 * float(np.max(np.abs(phys[:2] + phys[2:])))
        p00 = phys[0] * phys[2]
        p00 -= phys[1] * phys[3]
        F = self.to_spectral(np.stack([p00, phys[0] * phys[3], phys[1] * phys[2]]))
        s = F[1] + F[2]
        d = F[1] - F[2]
        out = np.empty_like(X)
        np.multiply(self.coef_D, F[0], out=out[0])
        out[0] += self.coef_s * s
        out[0] += self.ik_bk * X[1]
        np.multiply(-0.5, d, out=out[1])
        out[1] += self.ik_bk * X[0]
        return out

    def clean(self, X):
        return self._symmetrize(X)

    def energy_and_dissipation(self, X):
        p = (X.real**2 + X.imag**2) * (self.ksq * self.weight)
        energy = 0.5 * float(np.sum(p))
        dissipation = self.mu * float(np.vdot(self.ksq, p[0])) + self.nu * float(np.vdot(self.ksq, p[1]))
        return energy, dissipation

    def defects(self, X):
        return super().defects(self.store(X))


def _integrator(state: SimState, cfg: SolverConfig, generic: bool = False) -> _Integrator:
    if state.grid.n == 2 and cfg.project_b and not generic:
        return _Integrator2D(state.grid, state.bg, state.case, cfg)
    return _Integrator(state.grid, state.bg, state.case, cfg)


def _pack(integ: _Integrator, state: SimState) -> np.ndarray:
    return integ.load(full_to_retained(np.concatenate([state.u.coeffs, state.b.coeffs]), state.grid))


def _unpack(integ: _Integrator, template: SimState, t: float, X) -> SimState:
    g = template.grid
    full = retained_to_full(integ.store(X), g)
    n = g.n
    return replace(template, t=t, u=SpectralField(g, full[:n]), b=SpectralField(g, full[n:]))


def nonlinear_rhs(state: SimState) -> tuple[SpectralField, SpectralField, SpectralField, SpectralField]:
    """Explicit tendencies and the diffusion terms, as full-spectrum fields.

    Returns ``(du, db, diff_u, diff_b)`` where ``du``/``db`` hold transport,
    pressure (via projection) and background-coupling terms and
    ``diff_u = mu Lap u``, ``diff_b = nu Lap b``.  Input modes beyond the
    dealiasing cutoff are ignored.
    """
    integ = _integrator(state, SolverConfig())
    out = integ.store(integ.nonlinear(_pack(integ, state)))
    _check_finite(out, state)
    g = state.grid
    full = retained_to_full(out, g)
    ksq = g.ksq_odd
    return (SpectralField(g, full[: g.n]), SpectralField(g, full[g.n:]),
            SpectralField(g, -state.mu * ksq * state.u.coeffs),
            SpectralField(g, -state.nu * ksq * state.b.coeffs))


def _check_finite(Y, state):
    if not np.all(np.isfinite(Y)):
        raise DivergenceError(f"non-finite values after t = {state.t}", state)


def _check_cfl(integ: _Integrator, state: SimState):
    courant = integ.umax * integ.cfg.dt / state.grid.dx
    if courant > integ.cfg.cfl_guard:
        raise DivergenceError(
            f"CFL number {courant:.3g} exceeds guard {integ.cfg.cfl_guard} at t = {state.t}", state)


def step(state: SimState, config: SolverConfig) -> SimState:
    """One integrating-factor RK4 step of size ``config.dt``.

    Modes beyond the dealiasing cutoff are dropped from the result.
    """
    integ = _integrator(state, config)
    with np.errstate(over="ignore", invalid="ignore"):
        Yn = integ.step(_pack(integ, state))
    _check_cfl(integ, state)
    _check_finite(Yn, state)
    return _unpack(integ, state, state.t + config.dt, Yn)


Hook = Callable[[SimState], dict]


def run(state0: SimState, config: SolverConfig, hooks: Sequence[Hook] = ()) -> Trajectory:
    """Advance ``state0`` to ``config.T``.

    The initial state is restricted to the dealiased band first.  Energy,
    dissipation and invariant defects are recorded after every step; the
    hooks are called on the initial state, every ``record_stride`` steps and
    on the final state.  Each hook returns a dict merged into that record.
    """
    state0.check_invariants()
    integ = _integrator(state0, config)
    nsteps = max(int(round((config.T - state0.t) / config.dt)), 0)
    Y = _pack(integ, state0)
    t = state0.t
    times = np.empty(nsteps + 1)
    energy = np.empty(nsteps + 1)
    dissipation = np.empty(nsteps + 1)
    records, record_times = [], []

    def record(t, Y):
        st = _unpack(integ, state0, t, Y)
        row = {"t": t}
        for hook in hooks:
            row.update(hook(st) or {})
        records.append(row)
        record_times.append(t)
        return st

    times[0] = t
    energy[0], dissipation[0] = integ.energy_and_dissipation(Y)
    max_div, max_mean = integ.defects(Y)
    last = record(t, Y)
    for i in range(1, nsteps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            Yn = integ.step(Y)
        if not np.all(np.isfinite(Yn)):
            current = _unpack(integ, state0, t, Y)
            raise DivergenceError(f"non-finite values after t = {t}", current)
        courant = integ.umax * config.dt / state0.grid.dx
        if courant > config.cfl_guard:
            current = _unpack(integ, state0, t, Y)
            raise DivergenceError(
                f"CFL number {courant:.3g} exceeds guard {config.cfl_guard} at t = {t}", current)
        Y = Yn
        t = t + config.dt
        times[i] = t
        energy[i], dissipation[i] = integ.energy_and_dissipation(Y)
        div, mean = integ.defects(Y)
        max_div, max_mean = max(max_div, div), max(max_mean, mean)
        if i % config.record_stride == 0 or i == nsteps:
            last = record(t, Y)
    return Trajectory(times, energy, dissipation, np.array(record_times), records, last,
                      max_div, max_mean, nsteps)
