"""Newton-Raphson AC power flow for scenario generation.

Mismatch equations: active power at every pv/pq bus, reactive power at
pq buses; unknowns are the matching angles and pq magnitudes.  The
reference bus holds its voltage setpoint and absorbs slack.
"""

from __future__ import annotations

import numpy as np

from .admittance import AdmittanceSet
from .model import GridModel, StateVector


class PowerFlowError(RuntimeError):
    """Non-convergence diagnostic with the final mismatch norm."""

    def __init__(self, iterations: int, mismatch: float):
        self.iterations = iterations
        self.mismatch = mismatch
        super().__init__(
            f"power flow did not converge after {iterations} iterations "
            f"(mismatch inf-norm {mismatch:.3e})")


def solve_power_flow(grid: GridModel,
                     p_inj: np.ndarray | None = None,
                     q_inj: np.ndarray | None = None,
                     init: StateVector | None = None,
                     tol: float = 1e-8,
                     max_iter: int = 20,
                     adm: AdmittanceSet | None = None) -> StateVector:
    """Solve for the state matching the specified net injections (p.u.).

    Defaults to the model's base injections.  q_inj is ignored at pv
    buses (their magnitude is held instead).
    """
    adm = adm or grid.admittance()
    if p_inj is None or q_inj is None:
        p_base, q_base = grid.base_injections()
        p_inj = p_base if p_inj is None else np.asarray(p_inj, dtype=float)
        q_inj = q_base if q_inj is None else np.asarray(q_inj, dtype=float)
    else:
        p_inj = np.asarray(p_inj, dtype=float)
        q_inj = np.asarray(q_inj, dtype=float)

    vm_set = grid.vm_setpoints()
    if init is None:
        vm = np.ones(grid.n_bus)
        va = np.zeros(grid.n_bus)
    else:
        vm = init.vm.copy()
        va = init.va.copy()
        va = va - va[grid.ref]          # keep the reference angle pinned at 0
    vm[grid.ref] = vm_set[grid.ref]
    for i in grid.pv:
        vm[i] = vm_set[i]

    pvpq = grid.pv + grid.pq
    pq = grid.pq
    n_ang = len(pvpq)
    mismatch = np.inf
    for it in range(max_iter):
        v = vm * np.exp(1j * va)
        s = v * np.conj(adm.ybus @ v)
        dp = p_inj[pvpq] - s.real[pvpq]
        dq = q_inj[pq] - s.imag[pq]
        mis = np.concatenate([dp, dq])
        mismatch = float(np.max(np.abs(mis))) if len(mis) else 0.0
        if mismatch < tol:
            va = va - va[grid.ref]
            return StateVector.from_polar(vm, va)
        dv = np.diag(v)
        i_bus = adm.ybus @ v
        ds_dva = 1j * dv @ np.conj(np.diag(i_bus) - adm.ybus @ dv)
        ds_dvm = dv @ np.conj(np.diag(i_bus) + adm.ybus @ dv) @ np.diag(1.0 / vm)
        j11 = ds_dva.real[np.ix_(pvpq, pvpq)]
        j12 = ds_dvm.real[np.ix_(pvpq, pq)]
        j21 = ds_dva.imag[np.ix_(pq, pvpq)]
        j22 = ds_dvm.imag[np.ix_(pq, pq)]
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            step = np.linalg.solve(jac, mis)
        except np.linalg.LinAlgError as exc:
            raise PowerFlowError(it, mismatch) from exc
        if not np.all(np.isfinite(step)):
            raise PowerFlowError(it, mismatch)
        va[pvpq] += step[:n_ang]
        vm[pq] += step[n_ang:]
        if np.any(vm <= 0):
            raise PowerFlowError(it + 1, mismatch)
    raise PowerFlowError(max_iter, mismatch)
