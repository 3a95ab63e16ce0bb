"""Measurement Jacobians in state and in branch susceptance.

State columns are ordered [angles at non-reference buses, magnitudes at
non-reference buses] (2N columns); the reference bus angle is fixed and
its magnitude treated as known.  Rows follow the package measurement
ordering.

The active-flow decomposition splits the from-side active-flow angle
Jacobian into a constant part plus a part linear in b:
    H(b) = C - V·[b]·A_r^c,
with V the diagonal of from/to voltage-magnitude products,
A_r^c = [cos(δ)/t]·A_r, A_r^s = [sin(δ)/t]·A_r and C = V·[g]·A_r^s,
where δ is the branch angle difference at the expansion state.  The tap
divides both trigonometric factors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .admittance import AdmittanceSet, build_admittance
from .model import GridModel, StateVector


def _bus_voltage_blocks(ybus: np.ndarray, v: np.ndarray):
    vm = np.abs(v)
    dv = np.diag(v)
    i_bus = ybus @ v
    ds_dva = 1j * dv @ np.conj(np.diag(i_bus) - ybus @ dv)
    ds_dvm = dv @ np.conj(np.diag(i_bus) + ybus @ dv) @ np.diag(1.0 / vm)
    return ds_dva, ds_dvm


def _flow_voltage_blocks(yflow: np.ndarray, sel: np.ndarray, v: np.ndarray):
    vm = np.abs(v)
    dv = np.diag(v)
    dvn = np.diag(v / vm)
    i_flow = yflow @ v
    d_i = np.diag(np.conj(i_flow))
    d_sel = np.diag(sel @ v)
    ds_dva = 1j * (d_i @ sel @ dv - d_sel @ np.conj(yflow @ dv))
    ds_dvm = d_i @ sel @ dvn + d_sel @ np.conj(yflow @ dvn)
    return ds_dva, ds_dvm


def jacobians(grid: GridModel, state: StateVector,
              b: np.ndarray | None = None,
              adm: AdmittanceSet | None = None) -> tuple[np.ndarray, np.ndarray]:
    """(H_v: P x 2N state Jacobian, H_b: P x M susceptance Jacobian).

    Both are evaluated at ``state`` and the model's susceptance (or ``b``
    when given).  Raises on operating points where the magnitude-direction
    columns are undefined (voltage magnitude near zero).
    """
    v = state.v
    vm = np.abs(v)
    if not np.all(np.isfinite(v)) or np.any(vm < 1e-6):
        raise ValueError("ill-conditioned operating point: voltage magnitude ~ 0")
    if adm is None:
        adm = grid.admittance() if b is None else build_admittance(grid, b)

    dsb_dva, dsb_dvm = _bus_voltage_blocks(adm.ybus, v)
    dsf_dva, dsf_dvm = _flow_voltage_blocks(adm.yf, adm.cf, v)
    dst_dva, dst_dvm = _flow_voltage_blocks(adm.yt, adm.ct, v)

    h_ang = np.vstack([dsb_dva.real, dsf_dva.real, dst_dva.real,
                       dsb_dva.imag, dsf_dva.imag, dst_dva.imag])
    h_mag = np.vstack([dsb_dvm.real, dsf_dvm.real, dst_dvm.real,
                       dsb_dvm.imag, dsf_dvm.imag, dst_dvm.imag])
    h_v = np.hstack([h_ang[:, grid.nonref], h_mag[:, grid.nonref]])

    # susceptance sensitivity: dy/db = j with the tap two-port structure
    p_dim = h_v.shape[0]
    h_b = np.zeros((p_dim, grid.m))
    cf, ct = adm.cf, adm.ct
    for k in range(grid.m):
        tk = grid.tap[k]
        d_yf_row = (1j / tk**2) * cf[k] + (-1j / tk) * ct[k]
        d_yt_row = (-1j / tk) * cf[k] + 1j * ct[k]
        # only branch row k of the flow matrices moves with b_k
        d_if = d_yf_row @ v
        d_it = d_yt_row @ v
        d_sf = np.zeros(grid.m, dtype=complex)
        d_st = np.zeros(grid.m, dtype=complex)
        d_sf[k] = (cf[k] @ v) * np.conj(d_if)
        d_st[k] = (ct[k] @ v) * np.conj(d_it)
        # bus block: dY_bus = cf_k^T dyf_row + ct_k^T dyt_row, so
        # dY_bus @ v collapses to the two incident unit vectors
        d_sbus = v * np.conj(cf[k] * d_if + ct[k] * d_it)
        h_b[:, k] = np.concatenate([d_sbus.real, d_sf.real, d_st.real,
                                    d_sbus.imag, d_sf.imag, d_st.imag])
    return h_v, h_b


@dataclass(frozen=True)
class ActiveFlowJacobianParts:
    """From-side active-flow angle Jacobian split affinely in b."""

    constant: np.ndarray    # C, M x N
    v_products: np.ndarray  # (M,) |v_f||v_t| diagonal
    a_cos: np.ndarray       # A_r^c = [cos(δ)/t] A_r, M x N
    a_sin: np.ndarray       # A_r^s = [sin(δ)/t] A_r, M x N
    g: np.ndarray           # series conductances
    b_ref: np.ndarray       # susceptance the parts were built at

    def flow_jacobian(self, b: np.ndarray | None = None) -> np.ndarray:
        bvec = self.b_ref if b is None else np.asarray(b, dtype=float)
        return self.constant - (self.v_products * bvec)[:, None] * self.a_cos


def active_flow_jacobian(grid: GridModel, state0: StateVector,
                         b: np.ndarray | None = None) -> ActiveFlowJacobianParts:
    bvec = grid.b if b is None else np.asarray(b, dtype=float)
    adm = grid.admittance()
    va = state0.va
    vm = state0.vm
    delta = adm.a @ va
    vd = vm[grid.f_idx] * vm[grid.t_idx]
    a_sin = (np.sin(delta) / grid.tap)[:, None] * adm.a_r
    a_cos = (np.cos(delta) / grid.tap)[:, None] * adm.a_r
    constant = (vd * grid.g)[:, None] * a_sin
    return ActiveFlowJacobianParts(constant=constant, v_products=vd,
                                   a_cos=a_cos, a_sin=a_sin,
                                   g=grid.g.copy(), b_ref=bvec.copy())
