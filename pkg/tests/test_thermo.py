import numpy as np
import pytest
import scipy.linalg as sla

from arrowlab import qcore, thermo
from arrowlab.errors import ConfigError, NumericalError

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def small_model(beta1=0.5, beta2=1.0, g=0.4, constant=True, period=6.0):
    dims = (2, 2, 2)
    h1 = np.diag([0.0, 1.3]).astype(complex)
    h2 = np.diag([0.0, 0.9]).astype(complex)
    a1 = qcore.random_hermitian(2, 1.0, 51)
    a2 = qcore.random_hermitian(2, 1.0, 52)
    if constant:
        coeff1 = coeff2 = thermo.ConstCoeff(g)
    else:
        coeff1 = thermo.HalfWaveCoeff(g, period, 1, 2)
        coeff2 = thermo.HalfWaveCoeff(g, period, -1, 2)
    hc = thermo.Schedule([
        thermo.Term.from_factors(thermo.ConstCoeff(0.7), (None, 0.5 * SZ, None), dims),
        thermo.Term.from_factors(coeff1, (a1, SX, None), dims),
        thermo.Term.from_factors(coeff2, (None, SX, a2), dims),
    ], dims=dims)
    return thermo.ContactModel(dims=dims, h1=h1, h2=h2, hc=hc, beta1=beta1, beta2=beta2)


# ---------------------------------------------------------------- reference state

def test_reference_state_infinite_temperature():
    m = small_model(beta1=1e-9, beta2=1e-9)
    ref = thermo.reference_state(m)
    assert np.max(np.abs(ref.matrix - np.eye(8) / 8)) < 1e-8


def test_reference_state_gibbs_weights():
    # H1 = diag(0, 1) at beta = ln 2 gives factor weights (2/3, 1/3)
    dims = (2, 2, 2)
    hc = thermo.Schedule.constant(np.zeros((8, 8), dtype=complex))
    m = thermo.ContactModel(dims=dims, h1=np.diag([0.0, 1.0]).astype(complex),
                            h2=np.diag([0.0, 0.9]).astype(complex),
                            hc=hc, beta1=np.log(2.0), beta2=1.0)
    ref = thermo.reference_state(m)
    factor = qcore.partial_trace(ref, keep=(0,), dims=dims)
    assert np.max(np.abs(np.diag(factor.matrix).real - [2 / 3, 1 / 3])) < 1e-12


def test_reference_state_commutes_with_reservoir_hamiltonians():
    m = small_model()
    ref = thermo.reference_state(m).matrix
    h0 = m.embedded_h1() + m.embedded_h2()
    assert np.max(np.abs(h0 @ ref - ref @ h0)) < 1e-12


# ---------------------------------------------------------------- evolve

def test_evolve_constant_matches_one_shot_exponential():
    m = small_model()
    ref = thermo.reference_state(m)
    t_grid = np.linspace(0.0, 2.0, 21)
    traj = thermo.evolve(m, ref, t_grid, dt_sub=0.02)
    h_full = m.embedded_h1() + m.embedded_h2() + m.hc.matrix(0.0)
    u = sla.expm(-1j * h_full * 2.0)
    direct = u @ ref.matrix @ u.conj().T
    assert np.max(np.abs(traj.states[-1] - direct)) < 1e-8


def test_evolve_zero_contact_keeps_reference_fixed():
    dims = (2, 2, 2)
    hc = thermo.Schedule.constant(np.zeros((8, 8), dtype=complex))
    m = thermo.ContactModel(dims=dims, h1=np.diag([0.0, 1.3]).astype(complex),
                            h2=np.diag([0.0, 0.9]).astype(complex), hc=hc,
                            beta1=0.5, beta2=1.0)
    ref = thermo.reference_state(m)
    traj = thermo.evolve(m, ref, np.linspace(0, 3.0, 16), dt_sub=0.05)
    assert max(np.max(np.abs(s - ref.matrix)) for s in traj.states) < 1e-10
    assert np.max(np.abs(traj.s_rel)) < 1e-10


def test_evolve_unit_trace_and_spectrum():
    m = small_model()
    traj = thermo.evolve(m, thermo.reference_state(m), np.linspace(0, 4, 41), dt_sub=0.02)
    assert traj.trace_drift < 1e-9
    assert traj.spectrum_drift < 1e-9
    # full per-point spectrum check on this small model
    ev0 = np.sort(np.linalg.eigvalsh(traj.states[0]))
    for s in traj.states:
        assert np.max(np.abs(np.sort(np.linalg.eigvalsh(s)) - ev0)) < 1e-9


def test_evolve_split_matches_eigh():
    m = small_model(constant=False)
    ref = thermo.reference_state(m)
    grid = np.linspace(0, 3.0, 13)
    tr_e = thermo.evolve(m, ref, grid, dt_sub=0.005, method="eigh")
    tr_s = thermo.evolve(m, ref, grid, dt_sub=0.005, method="split")
    assert max(np.max(np.abs(a - b)) for a, b in zip(tr_e.states, tr_s.states)) < 1e-4
    assert np.max(np.abs(tr_e.q1 - tr_s.q1)) < 1e-5


def test_evolve_rejects_bad_dt_sub():
    m = small_model()
    with pytest.raises(ConfigError):
        thermo.evolve(m, thermo.reference_state(m), np.linspace(0, 1, 11), dt_sub=0.5)


# ---------------------------------------------------------------- heat power

def test_heat_power_zero_when_commuting():
    # contact made of reservoir operators only: [H_i, HC] = 0
    dims = (2, 2, 2)
    hc = thermo.Schedule([
        thermo.Term.from_factors(thermo.ConstCoeff(0.3), (np.diag([0.0, 1.3]), None, None), dims),
    ], dims=dims)
    m = thermo.ContactModel(dims=dims, h1=np.diag([0.0, 1.3]).astype(complex),
                            h2=np.diag([0.0, 0.9]).astype(complex), hc=hc,
                            beta1=0.5, beta2=1.0)
    rho = qcore.random_density_matrix(8, 8, 53)
    p1, p2 = thermo.heat_power(m, rho, 0.0)
    assert abs(p1) < 1e-12 and abs(p2) < 1e-12


def test_heat_power_matches_energy_flow_derivative():
    # central difference of Tr(Omega_t H_1) around an evolved time
    m = small_model()
    ref = thermo.reference_state(m)
    t_star, dt = 0.5, 1e-4
    traj = thermo.evolve(m, ref, np.array([0.0, t_star - dt, t_star, t_star + dt]), dt_sub=5e-5)
    p1, p2 = thermo.heat_power(m, qcore.DensityMatrix(traj.states[2]), t_star)
    h1e, h2e = m.embedded_h1(), m.embedded_h2()
    for p, he in ((p1, h1e), (p2, h2e)):
        e_m = np.einsum("ij,ji->", traj.states[1], he).real
        e_p = np.einsum("ij,ji->", traj.states[3], he).real
        fd = (e_p - e_m) / (2 * dt)
        assert abs(p - fd) <= 1e-4 * max(1e-12, abs(fd)) + 1e-10


def test_energy_conservation_constant_contact():
    # P1 + P2 + d<HC>/dt = 0 along the flow for time-independent HC
    m = small_model()
    traj = thermo.evolve(m, thermo.reference_state(m), np.linspace(0, 3, 31), dt_sub=0.01)
    duc = np.gradient(traj.u_c, traj.times)
    total = traj.powers[:, 0] + traj.powers[:, 1] + duc
    assert np.max(np.abs(total[2:-2])) < 5e-3


def test_first_law_residual_constant_contact():
    m = small_model()
    traj = thermo.evolve(m, thermo.reference_state(m), np.linspace(0, 2, 21), dt_sub=0.02)
    du = traj.u_c[-1] - traj.u_c[0]
    dq_in = -(traj.q1[-1] + traj.q2[-1])
    dw = traj.work[-1]
    assert abs(du - dq_in - dw) / 2.0 < 1e-6


# ---------------------------------------------------------------- entropy balance

def test_entropy_balance_identity_and_positivity():
    m = small_model()
    traj = thermo.evolve(m, thermo.reference_state(m), np.linspace(0, 4, 161), dt_sub=0.0125)
    bal = thermo.entropy_balance(m, traj)
    assert bal["s_rel_min"] >= -1e-10
    assert bal["max_residual"] <= 1e-3


def test_s_rel_matches_direct_relative_entropy():
    m = small_model()
    ref = thermo.reference_state(m)
    traj = thermo.evolve(m, ref, np.linspace(0, 2, 9), dt_sub=0.05)
    for idx in (0, 4, 8):
        direct = qcore.relative_entropy(qcore.DensityMatrix(traj.states[idx]), ref)
        assert abs(traj.s_rel[idx] - direct) < 1e-9


# ---------------------------------------------------------------- clausius

def test_clausius_zero_contact():
    dims = (2, 2, 2)
    hc = thermo.Schedule.constant(np.zeros((8, 8), dtype=complex))
    m = thermo.ContactModel(dims=dims, h1=np.diag([0.0, 1.3]).astype(complex),
                            h2=np.diag([0.0, 0.9]).astype(complex), hc=hc,
                            beta1=0.5, beta2=1.0)
    traj = thermo.evolve(m, thermo.reference_state(m), np.linspace(0, 2, 11), dt_sub=0.1)
    flow = thermo.clausius_flow(m, traj, (0.0, 2.0))
    assert abs(flow["p1_bar"]) < 1e-12 and abs(flow["p2_bar"]) < 1e-12


def test_clausius_equal_temperatures_reports_no_direction():
    m = small_model(beta1=1.0, beta2=1.0)
    traj = thermo.evolve(m, thermo.reference_state(m), np.linspace(0, 2, 21), dt_sub=0.05)
    flow = thermo.clausius_flow(m, traj, (0.5, 2.0))
    assert flow["hot_to_cold"] is None


def test_clausius_window_validation():
    m = small_model()
    traj = thermo.evolve(m, thermo.reference_state(m), np.linspace(0, 1, 11), dt_sub=0.05)
    with pytest.raises(ConfigError):
        thermo.clausius_flow(m, traj, (0.5, 3.0))


# ---------------------------------------------------------------- carnot

def test_carnot_efficiency_bound_arithmetic():
    m = small_model(constant=False)
    rep = thermo.carnot_run(m, n_transient=1, n_measure=1, dt_sub=0.05, samples_per_cycle=12)
    assert rep.eta_carnot == pytest.approx(0.5)


def test_carnot_zero_contact_not_engine():
    dims = (2, 2, 2)
    hc = thermo.Schedule([
        thermo.Term.from_factors(thermo.HalfWaveCoeff(0.0, 5.0, 1, 2), (None, SX, None), dims),
    ], dims=dims)
    m = thermo.ContactModel(dims=dims, h1=np.diag([0.0, 1.3]).astype(complex),
                            h2=np.diag([0.0, 0.9]).astype(complex), hc=hc,
                            beta1=0.5, beta2=1.0)
    rep = thermo.carnot_run(m, n_transient=0, n_measure=2, dt_sub=0.05, samples_per_cycle=10)
    assert not rep.engine
    assert rep.eta is None


def test_carnot_requires_periodic_schedule():
    m = small_model(constant=True)
    with pytest.raises(ConfigError):
        thermo.carnot_run(m, 1, 1, 0.05)


# ---------------------------------------------------------------- sweeps

def test_sweep_constant_schedule_all_zero():
    dims = (2, 2, 2)
    hc = thermo.Schedule([
        thermo.Term.from_factors(thermo.ConstCoeff(0.5), (None, SX, None), dims),
    ], dims=dims)
    m = thermo.ContactModel(dims=dims, h1=np.diag([0.0, 1.3]).astype(complex),
                            h2=np.diag([0.0, 0.9]).astype(complex), hc=hc,
                            beta1=1.0, beta2=1.0)
    recs = thermo.quasi_static_sweep(m, [1.0, 4.0], beta=1.0, dt_sub=0.02, samples=20)
    for r in recs:
        assert abs(r["dw"]) < 1e-9
        assert abs(r["df_c"]) < 1e-12
        assert abs(r["gap"]) < 1e-9


def test_sweep_commuting_schedule_work_independent_of_tau():
    # diagonal ramp commutes with everything: populations frozen, work
    # equals the frozen-population energy shift for every duration
    dims = (2, 2, 2)
    hc = thermo.Schedule([
        thermo.Term.from_factors(thermo.SmoothStepCoeff(0.6), (None, 0.5 * SZ, None), dims),
    ], dims=dims)
    m = thermo.ContactModel(dims=dims, h1=np.diag([0.0, 1.3]).astype(complex),
                            h2=np.diag([0.0, 0.9]).astype(complex), hc=hc,
                            beta1=1.0, beta2=1.0)
    recs = thermo.quasi_static_sweep(m, [1.0, 10.0], beta=1.0, dt_sub=0.01, samples=50)
    assert recs[0]["dw"] == pytest.approx(recs[1]["dw"], abs=1e-8)
    # frozen-population oracle: sum p_n(0) * dE_n with E from the commuting family
    h_full0 = m.embedded_h1() + m.embedded_h2()
    gibbs = thermo.gibbs_state(h_full0, 1.0).matrix
    shift = hc.matrix(1.0)
    dw_oracle = np.einsum("ij,ji->", gibbs, shift).real
    assert recs[0]["dw"] == pytest.approx(dw_oracle, abs=1e-8)


def test_sweep_gap_nonnegative_and_decreasing():
    m = small_model(beta1=1.0, beta2=1.0)
    dims = (2, 2, 2)
    a1 = qcore.random_hermitian(2, 1.0, 61)
    hc = thermo.Schedule([
        thermo.Term.from_factors(thermo.SmoothStepCoeff(0.7), (a1, SX, None), dims),
        thermo.Term.from_factors(thermo.SmoothStepCoeff(0.5), (None, 0.5 * SZ, None), dims),
    ], dims=dims)
    m = thermo.ContactModel(dims=dims, h1=m.h1, h2=m.h2, hc=hc, beta1=1.0, beta2=1.0)
    recs = thermo.quasi_static_sweep(m, [2.0, 20.0], beta=1.0, dt_sub=0.02, samples=60)
    assert recs[0]["gap"] >= -1e-9
    assert recs[1]["gap"] >= -1e-9
    assert recs[1]["gap"] < recs[0]["gap"]


# ---------------------------------------------------------------- schedule pieces

def test_pulse_coeff_shape_and_derivative():
    p = thermo.PulseCoeff(10.0, 0.2, 0.8, 0.1, 2.0, offset=1.0)
    assert p.value(0.0) == pytest.approx(1.0)
    assert p.value(5.0) == pytest.approx(3.0)
    assert p.value(9.99) == pytest.approx(1.0)
    # derivative consistent with finite differences
    for t in (2.3, 4.0, 7.6):
        fd = (p.value(t + 1e-6) - p.value(t - 1e-6)) / 2e-6
        assert p.derivative(t) == pytest.approx(fd, abs=1e-5)


def test_halfwave_coeff_c1():
    c = thermo.HalfWaveCoeff(1.5, 8.0, 1, 2)
    for t in (1.99, 2.01, 5.0):
        fd = (c.value(t + 1e-6) - c.value(t - 1e-6)) / 2e-6
        assert c.derivative(t) == pytest.approx(fd, abs=1e-5)


def test_schedule_period_consistency():
    dims = (2, 2, 2)
    with pytest.raises(ConfigError):
        thermo.Schedule([
            thermo.Term.from_factors(thermo.CosineCoeff(0, 1, 3.0), (None, SX, None), dims),
            thermo.Term.from_factors(thermo.CosineCoeff(0, 1, 5.0), (None, SZ, None), dims),
        ], dims=dims)
