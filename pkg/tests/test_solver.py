
import numpy as np
import pytest

from conftest import PHI
from mhdlab.diagnostics import energy_balance_residual
from mhdlab.diophantine import BackgroundField, certify, golden_vector
from mhdlab.errors import ConfigurationError, ContractError, DivergenceError
from mhdlab.initial import random_shell_pair
from mhdlab.linear import propagate_linear
from mhdlab.snapshot import read_snapshot, write_snapshot
from mhdlab.solver import (
    SimState,
    SolverConfig,
    _integrator,
    _pack,
    _unpack,
    full_to_retained,
    nonlinear_rhs,
    retained_to_full,
    run,
    step,
)
from mhdlab.spectral import SpectralField, TorusGrid, dealias, leray_project


@pytest.fixture(scope="module")
def bg2():
    return certify(golden_vector(2), 1.1, 32)


def shell_state(N, shells=(1, 2, 3), amplitude=1e-2, seed=0, case=(0.0, 1.0), bg=None):
    g = TorusGrid(2, N)
    bg = bg or certify(golden_vector(2), 1.1, 32)
    u, b = random_shell_pair(g, list(shells), amplitude, 2.1, seed)
    return SimState(0.0, u, b, case, bg)


def stream_velocity(g, modes):
    """Solenoidal field from a streamfunction sum of ``amp * cos(k.x + phase)``."""
    x = g.mesh()
    psi_x = np.zeros(g.shape)
    psi_y = np.zeros(g.shape)
    for (k1, k2), amp, ph in modes:
        s = -amp * np.sin(k1 * x[0] + k2 * x[1] + ph)
        psi_x += k1 * s
        psi_y += k2 * s
    return SpectralField.from_physical(g, np.stack([psi_y, -psi_x]))


# ---------------------------------------------------------------------------
# retained layout


def test_retained_roundtrip(bg2):
    st = shell_state(32)
    c = np.concatenate([st.u.coeffs, st.b.coeffs])
    back = retained_to_full(full_to_retained(c, st.grid), st.grid)
    assert np.array_equal(back, dealias(SpectralField(st.grid, c)).coeffs)


@pytest.mark.parametrize("n,N", [(2, 16), (3, 12)])
def test_retained_roundtrip_keeps_dealiased_band(n, N):
    g = TorusGrid(n, N)
    rng = np.random.default_rng(0)
    c = rng.standard_normal((2,) + g.shape) + 1j * rng.standard_normal((2,) + g.shape)
    f = dealias(SpectralField(g, c).symmetrized())
    back = retained_to_full(full_to_retained(f.coeffs, g), g)
    assert np.max(np.abs(back - f.coeffs)) < 1e-15


# ---------------------------------------------------------------------------
# right-hand side


def test_zero_state_has_zero_tendency(bg2):
    g = TorusGrid(2, 16)
    z = SpectralField.zeros(g, 2)
    for f in nonlinear_rhs(SimState(0.0, z, z, (0, 1), bg2)):
        assert f.max_abs() == 0.0


@pytest.mark.parametrize("b_tilde", [(1.0, PHI), (0.3, -2.0)])
def test_shear_magnetic_field_tendency(b_tilde):
    g = TorusGrid(2, 16)
    bg = BackgroundField(b_tilde, 1.5, 1.0, 1)
    x = g.mesh()
    b = SpectralField.from_physical(g, np.stack([np.sin(x[1]), np.zeros(g.shape)]))
    u = SpectralField.zeros(g, 2)
    du, db, diff_u, diff_b = nonlinear_rhs(SimState(0.0, u, b, (0, 1), bg))
    expected = SpectralField.from_physical(g, np.stack([b_tilde[1] * np.cos(x[1]), np.zeros(g.shape)]))
    assert np.max(np.abs(du.coeffs - expected.coeffs)) < 1e-15
    assert db.max_abs() < 1e-15
    assert diff_u.max_abs() == 0.0
    # -|k|^2 b with |k| = 1; transform round-off elsewhere is scaled by |k|^2 <= 128
    assert np.max(np.abs(diff_b.coeffs + b.coeffs)) < 1e-14


def _fd_rhs(u_phys, b_phys, b_tilde, dx):
    """Right-hand side with centred second-order differences on the physical grid."""

    def d(f, axis):
        return (np.roll(f, -1, axis=axis) - np.roll(f, 1, axis=axis)) / (2 * dx)

    def adv(v, f):
        return np.stack([sum(v[j] * d(f[i], j) for j in range(2)) for i in range(2)])

    def bgrad(f):
        return np.stack([sum(b_tilde[j] * d(f[i], j) for j in range(2)) for i in range(2)])

    du = -adv(u_phys, u_phys) + adv(b_phys, b_phys) + bgrad(b_phys)
    db = -adv(u_phys, b_phys) + adv(b_phys, u_phys) + bgrad(u_phys)
    return du, db


def test_rhs_matches_finite_differences():
    b_tilde = (1.0, PHI)
    bg = BackgroundField(b_tilde, 1.5, 1.0, 1)
    errs = []
    for N in (128, 256):
        g = TorusGrid(2, N)
        u = stream_velocity(g, [((1, 2), 0.4, 0.3), ((3, -1), 0.2, 1.1)])
        b = stream_velocity(g, [((2, 1), 0.3, -0.5), ((0, 3), 0.25, 2.0)])
        du, db, _, _ = nonlinear_rhs(SimState(0.0, u, b, (0, 1), bg))
        fu, fb = _fd_rhs(u.to_physical(), b.to_physical(), b_tilde, g.dx)
        ref_u = leray_project(SpectralField.from_physical(g, fu))
        ref_b = leray_project(SpectralField.from_physical(g, fb))
        errs.append(max(np.max(np.abs(du.coeffs - ref_u.coeffs)), np.max(np.abs(db.coeffs - ref_b.coeffs))))
    assert errs[1] < 2e-3
    # second order: halving dx divides the error by four
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_taylor_green_convection_is_a_gradient(bg2):
    g = TorusGrid(2, 32)
    x = g.mesh()
    u = SpectralField.from_physical(
        g, np.stack([np.sin(x[0]) * np.cos(x[1]), -np.cos(x[0]) * np.sin(x[1])]))
    du, db, _, _ = nonlinear_rhs(SimState(0.0, u, SpectralField.zeros(g, 2), (0, 1), bg2))
    assert du.max_abs() < 1e-15
    # b tendency is the background stretching b~.grad u alone
    bt = bg2.b_tilde
    grad = [(np.cos(x[0]) * np.cos(x[1]), -np.sin(x[0]) * np.sin(x[1])),
            (np.sin(x[0]) * np.sin(x[1]), -np.cos(x[0]) * np.cos(x[1]))]
    expected = np.stack([bt[0] * grad[i][0] + bt[1] * grad[i][1] for i in range(2)])
    assert np.max(np.abs(db.to_physical() - expected)) < 1e-14


def test_three_dimensional_rhs_matches_two_dimensional_embedding():
    # fields independent of x3 with zero third components reduce to the 2D system
    bg2 = BackgroundField((1.0, PHI), 1.5, 1.0, 1)
    bg3 = BackgroundField((1.0, PHI, 0.0), 2.5, 1.0, 1)
    g2, g3 = TorusGrid(2, 16), TorusGrid(3, 16)
    u2 = stream_velocity(g2, [((1, 2), 0.4, 0.3), ((2, -1), 0.2, 1.1)])
    b2 = stream_velocity(g2, [((2, 1), 0.3, -0.5)])

    def lift(f):
        c = np.zeros((3,) + g3.shape, dtype=complex)
        c[:2, :, :, 0] = f.coeffs
        return SpectralField(g3, c)

    du2, db2, _, _ = nonlinear_rhs(SimState(0.0, u2, b2, (0, 1), bg2))
    du3, db3, _, _ = nonlinear_rhs(SimState(0.0, lift(u2), lift(b2), (0, 1), bg3))
    assert np.max(np.abs(du3.coeffs - lift(du2).coeffs)) < 1e-15
    assert np.max(np.abs(db3.coeffs - lift(db2).coeffs)) < 1e-15


def test_potential_and_generic_integrators_agree(bg2):
    st = shell_state(32, amplitude=0.05, bg=bg2)
    cfg = SolverConfig(dt=1e-3)
    fast, generic = _integrator(st, cfg), _integrator(st, cfg, generic=True)
    assert type(fast) is not type(generic)
    Xf, Xg = _pack(fast, st), _pack(generic, st)
    for _ in range(20):
        Xf, Xg = fast.step(Xf), generic.step(Xg)
    a, b = _unpack(fast, st, 0.02, Xf), _unpack(generic, st, 0.02, Xg)
    assert np.max(np.abs(a.u.coeffs - b.u.coeffs)) < 1e-14
    assert np.max(np.abs(a.b.coeffs - b.b.coeffs)) < 1e-14


# ---------------------------------------------------------------------------
# stepping


def test_zero_state_is_fixed_point(bg2):
    g = TorusGrid(2, 16)
    z = SpectralField.zeros(g, 2)
    out = step(SimState(0.0, z, z, (1, 0), bg2), SolverConfig(dt=0.01))
    assert out.t == 0.01
    assert out.u.max_abs() == 0.0 and out.b.max_abs() == 0.0


@pytest.mark.parametrize("case", [(0.0, 1.0), (1.0, 0.0)])
def test_small_amplitude_step_matches_linear_propagator(case, bg2):
    eps = 1e-6
    st = shell_state(32, shells=(1, 2), amplitude=eps, seed=3, case=case, bg=bg2)
    dt = 1e-3
    out = step(st, SolverConfig(dt=dt))
    U, B = propagate_linear(st.u, st.b, bg2, dt, case)
    scale = max(st.u.max_abs(), st.b.max_abs())
    # RK4 truncation is ~dt^5 |k|^10 relative; the quadratic terms add ~eps dt relative
    err = max(np.max(np.abs(out.u.coeffs - U.coeffs)), np.max(np.abs(out.b.coeffs - B.coeffs)))
    assert err / scale < 1e-8


def test_linear_consistency_scales_with_amplitude_squared(bg2):
    dt, steps = 1e-3, 50
    errs = []
    for eps in (1e-3, 1e-4):
        st = shell_state(32, shells=(1, 2), amplitude=eps, seed=5, bg=bg2)
        tr = run(st, SolverConfig(dt=dt, T=dt * steps, record_stride=steps))
        U, B = propagate_linear(st.u, st.b, bg2, dt * steps)
        errs.append(max(np.max(np.abs(tr.final.u.coeffs - U.coeffs)),
                        np.max(np.abs(tr.final.b.coeffs - B.coeffs))))
    assert 80 < errs[0] / errs[1] < 120


def test_heat_decay_budget():
    # b~.k = 0 and b-only data: b decays exactly as e^{-|k|^2 t}
    g = TorusGrid(2, 16)
    bg = BackgroundField((1.0, 0.0), 1.5, 1.0, 1)
    x = g.mesh()
    b = SpectralField.from_physical(g, np.stack([np.sin(x[1]), np.zeros(g.shape)]))
    st = SimState(0.0, SpectralField.zeros(g, 2), b, (0, 1), bg)
    tr = run(st, SolverConfig(dt=1e-3, T=0.5))
    assert np.allclose(tr.energy, tr.energy[0] * np.exp(-2 * tr.times), rtol=1e-12)
    assert energy_balance_residual(tr.times, tr.energy, tr.dissipation) <= 1e-8


@pytest.mark.parametrize("case", [(0.0, 1.0), (1.0, 0.0)])
def test_energy_budget_and_invariants_64(case, bg2):
    st = shell_state(64, shells=(1, 2, 3, 4), amplitude=1e-2, seed=1, case=case, bg=bg2)
    tr = run(st, SolverConfig(dt=1e-3, T=0.2))
    assert energy_balance_residual(tr.times, tr.energy, tr.dissipation) <= 1e-6
    assert tr.max_divergence <= 1e-12 and tr.max_mean <= 1e-12
    tr.final.check_invariants()


def test_ideal_core_conserves_energy(bg2):
    # test-only mode: switch off both diffusions inside the integrator
    st = shell_state(32, shells=(1, 2, 3), amplitude=0.05, seed=2, bg=bg2)
    integ = _integrator(st, SolverConfig(dt=1e-4))
    integ.E = np.ones_like(integ.E)
    integ.Eh = np.ones_like(integ.Eh)
    X = _pack(integ, st)
    e0 = integ.energy_and_dissipation(X)[0]
    for _ in range(10000):
        X = integ.step(X)
    e1 = integ.energy_and_dissipation(X)[0]
    assert abs(e1 - e0) / e0 <= 1e-8


def test_step_rejects_cfl_violation(bg2):
    st = shell_state(16, shells=(1,), amplitude=50.0, bg=bg2)
    with pytest.raises(DivergenceError) as info:
        step(st, SolverConfig(dt=0.5, cfl_guard=1.0))
    assert info.value.state is st


def test_run_reports_last_valid_state_on_blowup(bg2):
    st = shell_state(16, shells=(1,), amplitude=50.0, bg=bg2)
    with pytest.raises(DivergenceError) as info:
        run(st, SolverConfig(dt=0.05, T=10.0, cfl_guard=1e300))
    bad = info.value.state
    assert np.all(np.isfinite(bad.u.coeffs)) and bad.t >= 0


def test_run_rejects_invalid_state(bg2):
    g = TorusGrid(2, 16)
    u = SpectralField.from_physical(g, np.ones((2,) + g.shape))
    with pytest.raises(ContractError):
        run(SimState(0.0, u, u, (0, 1), bg2), SolverConfig())


def test_solver_config_validation():
    for kw in [dict(dt=0.0), dict(T=-1.0), dict(record_stride=0), dict(cfl_guard=0.0)]:
        with pytest.raises(ConfigurationError):
            SolverConfig(**kw)


def test_state_validation(bg2):
    g = TorusGrid(2, 16)
    z = SpectralField.zeros(g, 2)
    with pytest.raises(ConfigurationError):
        SimState(0.0, z, z, (1, 1), bg2)
    with pytest.raises(ConfigurationError):
        SimState(0.0, z, SpectralField.zeros(TorusGrid(2, 8), 2), (0, 1), bg2)
    with pytest.raises(ConfigurationError):
        SimState(0.0, z, z, (0, 1), certify(golden_vector(3), 2.1, 4))


# ---------------------------------------------------------------------------
# run


def test_zero_horizon_records_initial_diagnostics(bg2):
    st = shell_state(16, bg=bg2)
    tr = run(st, SolverConfig(T=0.0), [lambda s: {"seen": s.t}])
    assert tr.steps == 0 and len(tr.times) == 1
    assert tr.records == [{"t": 0.0, "seen": 0.0}]
    assert tr.energy[0] == pytest.approx(st.energy(), rel=1e-14)


def test_hook_cadence(bg2):
    st = shell_state(16, bg=bg2)
    tr = run(st, SolverConfig(dt=0.01, T=0.25, record_stride=10), [lambda s: {}])
    assert np.allclose(tr.record_times, [0.0, 0.1, 0.2, 0.25])


def test_run_is_deterministic(bg2):
    st = shell_state(32, amplitude=0.05, bg=bg2)
    cfg = SolverConfig(dt=1e-3, T=0.05)
    a, b = run(st, cfg), run(st, cfg)
    assert np.array_equal(a.energy, b.energy)
    assert np.array_equal(a.dissipation, b.dissipation)
    assert np.array_equal(a.final.u.coeffs, b.final.u.coeffs)


def test_restart_from_snapshot(tmp_path, bg2):
    st = shell_state(32, amplitude=0.05, bg=bg2)
    full = run(st, SolverConfig(dt=1e-3, T=0.1)).final
    half = run(st, SolverConfig(dt=1e-3, T=0.05)).final
    write_snapshot(tmp_path / "mid.snap", half)
    resumed = run(read_snapshot(tmp_path / "mid.snap"), SolverConfig(dt=1e-3, T=0.1)).final
    assert resumed.t == pytest.approx(full.t, abs=1e-12)
    assert np.max(np.abs(resumed.u.coeffs - full.u.coeffs)) <= 1e-12
    assert np.max(np.abs(resumed.b.coeffs - full.b.coeffs)) <= 1e-12


def test_run_dealiases_initial_state(bg2):
    g = TorusGrid(2, 16)
    u = stream_velocity(g, [((7, 0), 0.1, 0.0), ((1, 1), 0.1, 0.0)])
    st = SimState(0.0, u, SpectralField.zeros(g, 2), (0, 1), bg2)
    tr = run(st, SolverConfig(T=0.0))
    assert tr.final.u.coefficient((7, 0)).tolist() == [0, 0]
    assert tr.final.u.coefficient((1, 1))[0] != 0


def test_three_dimensional_run_invariants():
    bg3 = certify(golden_vector(3), 2.1, 8)
    g = TorusGrid(3, 12)
    u, b = random_shell_pair(g, [1, 2], 1e-2, 3.1, 0)
    tr = run(SimState(0.0, u, b, (1, 0), bg3), SolverConfig(dt=1e-3, T=0.02))
    assert energy_balance_residual(tr.times, tr.energy, tr.dissipation) <= 1e-6
    assert tr.max_divergence <= 1e-12 and tr.max_mean <= 1e-12
