"""Weighted-least-squares state estimation, BDD, and residual projectors.

The state is polar at non-reference buses (2N unknowns); the reference
bus angle is 0 and its magnitude is treated as known.  The honest mode
refreshes the Jacobian every Gauss-Newton step; the dishonest mode keeps
the Jacobian frozen at the initial point, which is exactly the variant
whose residual projector the hiddenness analysis relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid.admittance import AdmittanceSet
from .grid.jacobian import jacobians
from .grid.measurement import MeasurementVector, evaluate_h
from .grid.model import GridModel, StateVector


class EstimationError(RuntimeError):
    pass


@dataclass
class SeResult:
    state: StateVector
    objective: float          # J(v̂) = Σ r_i²/σ_i²
    residual: np.ndarray      # r = z − h(v̂)
    gamma: float              # ‖R^{-1/2} r‖² (equals objective at the optimum)
    iterations: int
    converged: bool
    grad_norm: float          # ∞-norm of ∇J at exit
    mode: str


@dataclass(frozen=True)
class Projectors:
    """Residual projector S = I − H(HᵀR⁻¹H)⁻¹HᵀR⁻¹ and its whitened twin."""

    s: np.ndarray             # oblique projector on raw residual space
    s_whitened: np.ndarray    # symmetric projector on whitened space
    h: np.ndarray             # Jacobian the projector was built from
    sigma: np.ndarray
    mode: str

    @property
    def residual_dof(self) -> float:
        return float(np.trace(self.s))


def flat_start(grid: GridModel) -> StateVector:
    vm = np.ones(grid.n_bus)
    vm[grid.ref] = grid.vm_setpoints()[grid.ref]
    return StateVector.from_polar(vm, np.zeros(grid.n_bus))


def _unpack(grid: GridModel, state: StateVector):
    return state.va[grid.nonref], state.vm[grid.nonref]


def _pack(grid: GridModel, va_nr: np.ndarray, vm_nr: np.ndarray) -> StateVector:
    va = np.zeros(grid.n_bus)
    vm = np.empty(grid.n_bus)
    vm[grid.ref] = grid.vm_setpoints()[grid.ref]
    va[grid.nonref] = va_nr
    vm[grid.nonref] = vm_nr
    return StateVector.from_polar(vm, va)


def wls_estimate(grid: GridModel, z, sigma=None,
                 init: StateVector | None = None,
                 mode: str = "honest",
                 tol: float = 1e-8, max_iter: int = 50,
                 adm: AdmittanceSet | None = None) -> SeResult:
    """Gauss-Newton WLS estimate of the state from measurement z.

    ``z`` may be a MeasurementVector (sigma taken from it) or a raw array
    with ``sigma`` supplied.  Iterates until the state update ∞-norm drops
    below ``tol`` or ``max_iter`` is hit (converged flag reports which).
    """
    if isinstance(z, MeasurementVector):
        sigma = z.sigma
        z = z.z
    z = np.asarray(z, dtype=float)
    if sigma is None:
        raise ValueError("sigma required when z is a raw array")
    sigma = np.asarray(sigma, dtype=float)
    if mode not in ("honest", "dishonest"):
        raise ValueError(f"unknown mode {mode!r}")
    if len(z) <= 2 * grid.n:
        raise EstimationError(
            f"insufficient redundancy: {len(z)} measurements for {2 * grid.n} states")

    adm = adm or grid.admittance()
    state = init if init is not None else flat_start(grid)
    va_nr, vm_nr = _unpack(grid, state)
    w = 1.0 / sigma**2

    h_fixed = None
    if mode == "dishonest":
        h_fixed, _ = jacobians(grid, _pack(grid, va_nr, vm_nr), adm=adm)

    iterations = 0
    converged = False
    for iterations in range(1, max_iter + 1):
        st = _pack(grid, va_nr, vm_nr)
        r = z - evaluate_h(grid, st, adm)
        h = h_fixed if h_fixed is not None else jacobians(grid, st, adm=adm)[0]
        hw = h * np.sqrt(w)[:, None]
        rw = r * np.sqrt(w)
        # normal-equation solve via least squares on the whitened system
        try:
            step, _, rank, _ = np.linalg.lstsq(hw, rw, rcond=None)
        except np.linalg.LinAlgError as exc:
            raise EstimationError("gain matrix solve failed") from exc
        if not np.all(np.isfinite(step)):
            raise EstimationError("state estimate diverged (non-finite step)")
        if rank < 2 * grid.n:
            raise EstimationError(
                f"rank-deficient gain matrix: rank {rank} < {2 * grid.n}")
        va_nr = va_nr + step[: grid.n]
        vm_nr = vm_nr + step[grid.n:]
        if float(np.max(np.abs(step))) < tol:
            converged = True
            break

    st = _pack(grid, va_nr, vm_nr)
    r = z - evaluate_h(grid, st, adm)
    h = h_fixed if h_fixed is not None else jacobians(grid, st, adm=adm)[0]
    gamma = float(np.sum(w * r * r))
    grad = -2.0 * h.T @ (w * r)
    return SeResult(state=st, objective=gamma, residual=r, gamma=gamma,
                    iterations=iterations, converged=converged,
                    grad_norm=float(np.max(np.abs(grad))), mode=mode)


def bdd_alarm(gamma: float, tau: float) -> bool:
    """Bad-data decision: alarm iff the weighted residual norm meets τ."""
    return bool(gamma >= tau)


def residual_norm(grid: GridModel, z, sigma, state: StateVector,
                  adm: AdmittanceSet | None = None) -> float:
    r = np.asarray(z, dtype=float) - evaluate_h(grid, state, adm)
    return float(np.sum((r / np.asarray(sigma)) ** 2))


def projectors(grid: GridModel, state: StateVector, sigma: np.ndarray,
               mode: str = "honest",
               adm: AdmittanceSet | None = None) -> Projectors:
    """Residual projectors at the given linearization point.

    mode is a label recording whether the point is an honest estimate or
    the stale pre-move state; the construction is identical.
    """
    sigma = np.asarray(sigma, dtype=float)
    h, _ = jacobians(grid, state, adm=adm)
    root_w = 1.0 / sigma
    hw = h * root_w[:, None]
    u, s, _ = np.linalg.svd(hw, full_matrices=False)
    if np.sum(s > 1e-10 * s[0]) < 2 * grid.n:
        raise EstimationError("rank-deficient Jacobian; projector undefined")
    s_whitened = np.eye(len(sigma)) - u @ u.T
    s_oblique = (sigma[:, None] * s_whitened) * root_w[None, :]
    return Projectors(s=s_oblique, s_whitened=s_whitened, h=h,
                      sigma=sigma, mode=mode)
