"""Network model, admittance assembly, power flow, and reactance maps."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmtd.grid import (CaseError, PowerFlowError, SetpointViolation,
                          StateVector, active_flow_jacobian, apply_setpoint,
                          build_admittance, build_descriptors, evaluate_h,
                          jacobians, measure, measurement_count, parse_case,
                          reactance_of_susceptance, solve_power_flow,
                          susceptance_of_reactance)
from gridmtd.grid.cases import case14_document

from conftest import fd_jacobian


def test_case14_dimensions(grid14):
    assert grid14.n_bus == 14
    assert grid14.m == 20
    assert grid14.n == 13
    assert measurement_count(grid14) == 2 * 14 + 4 * 20 == 108
    assert grid14.dfacts_mask.all()   # compensation available on every branch


def test_two_bus_admittance_by_hand(grid2):
    # single series line r + jx behind a from-side tap t: 2x2 bus matrix by hand
    br = grid2.branches[0]
    y = 1.0 / complex(br.r, br.x)
    t = br.tap
    expected = np.array([
        [y / t**2, -y / t],
        [-y / t, y],
    ])
    adm = grid2.admittance()
    assert np.allclose(adm.ybus, expected, atol=1e-14)
    # flow matrix row: i_f = (y/t²) v_f - (y/t) v_t
    assert np.allclose(adm.yf, np.array([[y / t**2, -y / t]]), atol=1e-14)
    assert np.allclose(adm.yt, np.array([[-y / t, y]]), atol=1e-14)


def test_admittance_rows_sum_to_zero_at_unit_tap():
    # series-only model: Ybus rows touching only nominal-tap branches sum to 0
    doc = case14_document()
    for br in doc["branches"]:
        br["tap"] = 1.0
    g = parse_case(doc)
    assert np.allclose(g.admittance().ybus.sum(axis=1), 0.0, atol=1e-12)


def test_power_flow_balances_injections(grid14, state14):
    p_base, q_base = grid14.base_injections()
    v = state14.v
    s = v * np.conj(grid14.admittance().ybus @ v)
    pvpq = grid14.pv + grid14.pq
    assert np.allclose(s.real[pvpq], p_base[pvpq], atol=1e-7)
    assert np.allclose(s.imag[grid14.pq], q_base[grid14.pq], atol=1e-7)
    assert state14.plausible()
    assert state14.va[grid14.ref] == pytest.approx(0.0, abs=1e-12)


def test_power_flow_warm_start_matches_cold(grid14, state14):
    p_base, q_base = grid14.base_injections()
    warm = solve_power_flow(grid14, p_inj=p_base * 1.02, q_inj=q_base * 1.02,
                            init=state14)
    cold = solve_power_flow(grid14, p_inj=p_base * 1.02, q_inj=q_base * 1.02)
    assert np.allclose(warm.v, cold.v, atol=1e-7)


def test_power_flow_diverges_on_absurd_load(grid14):
    p_base, q_base = grid14.base_injections()
    with pytest.raises(PowerFlowError) as err:
        solve_power_flow(grid14, p_inj=p_base * 60.0, q_inj=q_base * 60.0)
    assert err.value.iterations > 0
    assert np.isfinite(err.value.mismatch)


def test_measurement_ordering_and_count(grid14, state14):
    desc = build_descriptors(grid14)
    assert len(desc) == measurement_count(grid14)
    kinds = [d[0] for d in desc]
    n, m = grid14.n_bus, grid14.m
    assert kinds == ["p_bus"] * n + ["p_f"] * m + ["p_t"] * m \
        + ["q_bus"] * n + ["q_f"] * m + ["q_t"] * m
    h = evaluate_h(grid14, state14)
    # injection block must match the power-flow balance at non-ref buses
    p_base, _ = grid14.base_injections()
    pvpq = grid14.pv + grid14.pq
    assert np.allclose(h[:n][pvpq], p_base[pvpq], atol=1e-7)


def test_measure_noise_contract(grid14, state14):
    clean = measure(grid14, state14, noise_scale=0.0)
    assert np.array_equal(clean.z, evaluate_h(grid14, state14))
    assert np.all(clean.sigma > 0)        # sigma stays at the default scale

    a = measure(grid14, state14, noise_scale=0.02, seed=7)
    b = measure(grid14, state14, noise_scale=0.02, seed=7)
    c = measure(grid14, state14, noise_scale=0.02, seed=8)
    assert np.array_equal(a.z, b.z)
    assert not np.array_equal(a.z, c.z)
    assert np.allclose(a.sigma, 0.02 * np.maximum(np.abs(clean.z), 0.01))

    with pytest.raises(ValueError):
        measure(grid14, state14, noise_scale=-0.1)


def test_state_jacobian_matches_fd(grid3):
    state = solve_power_flow(grid3)
    h_v, _ = jacobians(grid3, state)
    nonref = grid3.nonref

    def h_of(u):
        va = state.va.copy(); vm = state.vm.copy()
        va[nonref] = u[:len(nonref)]
        vm[nonref] = u[len(nonref):]
        return evaluate_h(grid3, StateVector.from_polar(vm, va))

    u0 = np.concatenate([state.va[nonref], state.vm[nonref]])
    assert np.allclose(h_v, fd_jacobian(h_of, u0), atol=5e-7)


def test_susceptance_jacobian_matches_fd(grid3):
    state = solve_power_flow(grid3)
    _, h_b = jacobians(grid3, state)

    def h_of(b):
        return evaluate_h(grid3, state, adm=build_admittance(grid3, b))

    assert np.allclose(h_b, fd_jacobian(h_of, grid3.b.copy()), atol=5e-7)


def test_active_flow_jacobian_affine_split(grid14, state14):
    parts = active_flow_jacobian(grid14, state14)
    # at the reference susceptance the split must reproduce the p_f rows of
    # the full angle Jacobian
    h_v, _ = jacobians(grid14, state14)
    n, m = grid14.n_bus, grid14.m
    pf_rows = h_v[n:n + m, :grid14.n]
    assert np.allclose(parts.flow_jacobian(), pf_rows, atol=1e-9)
    # affine in b: J(b1) - J(b2) is linear in (b1 - b2)
    rng = np.random.default_rng(3)
    d = rng.standard_normal(m) * 0.01
    lhs = parts.flow_jacobian(grid14.b + 2 * d) - parts.flow_jacobian(grid14.b)
    rhs = 2 * (parts.flow_jacobian(grid14.b + d) - parts.flow_jacobian(grid14.b))
    assert np.allclose(lhs, rhs, atol=1e-12)


def test_reactance_susceptance_roundtrip_lossless():
    b = susceptance_of_reactance(0.0, 0.2)
    assert b == pytest.approx(-5.0)
    assert reactance_of_susceptance(0.0, b) == pytest.approx(0.2)


@given(r=st.floats(min_value=0.001, max_value=0.3),
       x=st.floats(min_value=0.01, max_value=1.0))
@settings(max_examples=80, deadline=None)
def test_reactance_roundtrip_min_actuation_property(r, x):
    b = susceptance_of_reactance(r, x)
    assert b < 0
    back = reactance_of_susceptance(r, b, x_ref=x)
    assert back == pytest.approx(x, rel=1e-7, abs=1e-10)


def test_reactance_inverse_two_roots():
    # both roots of the lossy inverse reproduce the same susceptance,
    # and x_ref picks whichever is nearer
    r, x = 0.05, 0.02                      # x < r: the low root is physical
    b = susceptance_of_reactance(r, x)
    hi = reactance_of_susceptance(r, b)    # default: x >= r root
    lo = reactance_of_susceptance(r, b, x_ref=x)
    assert hi > r > lo
    assert lo == pytest.approx(x, rel=1e-9)
    assert lo * hi == pytest.approx(r * r, rel=1e-9)
    assert susceptance_of_reactance(r, hi) == pytest.approx(b, rel=1e-9)


def test_setpoint_bounds_and_ratios(grid14):
    # corners are feasible and land within the actuation budget
    b_corner = np.where(np.arange(grid14.m) % 2 == 0, grid14.b_lo, grid14.b_hi)
    g2 = apply_setpoint(grid14, b_corner)
    assert np.allclose(g2.b, b_corner)
    ratios = grid14.reactance_ratios(b_corner)
    assert np.all(ratios[grid14.dfacts_mask] <= 0.5 + 1e-9)
    assert grid14.reactance_ratios(grid14.b.copy()).max() == pytest.approx(0.0, abs=1e-12)

    bad = grid14.b.copy()
    bad[3] = grid14.b_hi[3] + 1.0
    with pytest.raises(SetpointViolation) as err:
        apply_setpoint(grid14, bad)
    br = grid14.branches[3]
    assert f"{br.from_bus}-{br.to_bus}" in str(err.value)


def test_setpoint_rejects_off_branch_moves(grid14):
    doc = case14_document()
    doc["branches"][0]["dfacts"] = False
    g = parse_case(doc)
    bad = g.b.copy()
    bad[0] *= 1.2
    with pytest.raises(SetpointViolation):
        apply_setpoint(g, bad)


def test_with_susceptance_does_not_mutate(grid14):
    before = grid14.b.copy()
    mid = 0.5 * (grid14.b_lo + grid14.b_hi)
    g2 = grid14.with_susceptance(np.where(grid14.dfacts_mask, mid, grid14.b))
    assert np.array_equal(grid14.b, before)
    assert g2 is not grid14
    assert g2.admittance() is not grid14.admittance()


def test_parse_case_validation_errors():
    doc = case14_document()
    doc["buses"][0]["type"] = "pq"         # drop the reference bus
    with pytest.raises(CaseError):
        parse_case(doc)

    doc = case14_document()
    doc["branches"][0]["from"] = "nowhere"
    with pytest.raises(CaseError):
        parse_case(doc)

    doc = case14_document()
    doc["branches"][0]["x"] = 0.0
    with pytest.raises(CaseError):
        parse_case(doc)


def test_state_vector_forms():
    vm = np.array([1.0, 0.98])
    va = np.array([0.0, -0.1])
    s = StateVector.from_polar(vm, va)
    assert np.allclose(s.v_r, vm * np.cos(va))
    assert np.allclose(s.v_i, vm * np.sin(va))
    s2 = StateVector.from_rect(s.v_r, s.v_i)
    assert np.allclose(s2.vm, vm) and np.allclose(s2.va, va)
    assert len(s) == 2
