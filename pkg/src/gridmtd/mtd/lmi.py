"""Semidefinite blocks for the two design stages.

Two parallel constructions are kept deliberately:

* ``LmiBlock`` — an explicit affine representation (constant plus one
  coefficient matrix per scalar decision variable) used by the algebraic
  tests: symmetry is exact by construction and evaluation needs no
  solver.
* ``StageOneSolver`` / ``StageTwoSolver`` — parameterized cvxpy programs
  compiled once and re-solved each linearization step (the Gram-bound
  linearization point enters only through two parameters, so the
  canonicalization is cached across iterations).

A consistency test pins the two constructions to each other.

Conditioning: the attack ball is scaled to the unit ball, the attack-map
Gram is replaced by its polar factor (orthonormal basis), and the flow
map is divided by its spectral norm.  Without these three moves the raw
blocks mix magnitudes across ~9 orders and interior-point solvers fail.
"""

from __future__ import annotations

from dataclasses import dataclass

import cvxpy as cp
import numpy as np

from .inputs import MtdInputs
from .sdp import SOLVER_ORDER, ConicSolution, solve_sdp


# ----------------------------------------------------------------------
# explicit affine representation
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class LmiBlock:
    """Symmetric block affine in scalar variables: constant + Σ vᵢ·coeffᵢ.

    ``coeffs`` maps a variable name to its coefficient block; the vector
    variable "b" maps to a stacked (M, D, D) array.
    """

    constant: np.ndarray
    coeffs: dict

    def __post_init__(self):
        d = self.constant.shape[0]
        if self.constant.shape != (d, d):
            raise ValueError("constant block must be square")
        if not np.array_equal(self.constant, self.constant.T):
            raise ValueError("constant block must be exactly symmetric")
        for name, k in self.coeffs.items():
            if k.ndim == 2:
                ok = k.shape == (d, d) and np.array_equal(k, k.T)
            else:
                ok = k.shape[1:] == (d, d) and all(
                    np.array_equal(km, km.T) for km in k)
            if not ok:
                raise ValueError(f"coefficient {name!r} not square-symmetric")

    @property
    def dim(self) -> int:
        return self.constant.shape[0]

    def evaluate(self, **values) -> np.ndarray:
        """Numeric block at the given variable values."""
        out = self.constant.copy()
        for name, k in self.coeffs.items():
            if name not in values:
                raise KeyError(f"missing value for variable {name!r}")
            v = values[name]
            if k.ndim == 2:
                out += float(v) * k
            else:
                out += np.einsum("m,mij->ij", np.asarray(v, dtype=float), k)
        return out


@dataclass(frozen=True)
class StageLmis:
    """What one linearization step hands the solver."""

    big: LmiBlock
    hidden: LmiBlock | None      # stage two only
    bound_lower: np.ndarray      # b − bound_lower ⪰ 0, elementwise
    bound_upper: np.ndarray      # bound_upper − b ⪰ 0, elementwise


def _big_block_parts(inputs: MtdInputs, bk: np.ndarray):
    """Constant and per-variable coefficients shared by both stages.

    Layout (D = 2N+1): scalar slot, ball slot (N), flow slot (N).  The
    bottom-right corner carries the Gram linearization around bk.
    """
    n, m = inputs.n, inputs.m
    d = 2 * n + 1
    s1, s2 = slice(1, 1 + n), slice(1 + n, d)
    u1 = inputs.attack_basis
    g0 = inputs.flow_const / inputs.scale        # constant part of scaled flow
    bk_block = inputs.susceptance_block(bk)

    constant = np.zeros((d, d))
    constant[s1, s1] = np.eye(n)
    top = u1.T @ g0
    constant[s1, s2] = top
    constant[s2, s1] = top.T
    cross0 = bk_block.T @ g0
    gram = bk_block.T @ bk_block
    constant[s2, s2] = cross0 + cross0.T - 0.5 * (gram + gram.T)

    nu_coeff = np.zeros((d, d))
    nu_coeff[0, 0] = inputs.unit_center_sq - 1.0
    nu_coeff[0, s1] = inputs.basis_center
    nu_coeff[s1, 0] = inputs.basis_center
    nu_coeff[s1, s1] = inputs.gram_inv

    # rank-one rows of the b-derivative of the scaled flow map
    slope_rows = -(inputs.flow_weight[:, None] * inputs.flow_slope) / inputs.scale
    b_coeffs = np.zeros((m, d, d))
    for j in range(m):
        top_j = np.outer(u1[j], slope_rows[j])
        b_coeffs[j][s1, s2] = top_j
        b_coeffs[j][s2, s1] = top_j.T
        low_j = np.outer(bk_block[j], slope_rows[j])
        b_coeffs[j][s2, s2] = low_j + low_j.T

    return constant, nu_coeff, b_coeffs


def build_stage_one_lmi(inputs: MtdInputs, bk: np.ndarray) -> StageLmis:
    """Worst-case-detectability step: affine in (b, ν, ω)."""
    constant, nu_coeff, b_coeffs = _big_block_parts(inputs, bk)
    om_coeff = np.zeros_like(constant)
    om_coeff[0, 0] = -1.0
    big = LmiBlock(constant, {"nu": nu_coeff, "omega": om_coeff, "b": b_coeffs})
    return StageLmis(big, None, inputs.b_lo.copy(), inputs.b_hi.copy())


def build_stage_two_lmis(inputs: MtdInputs, bk: np.ndarray,
                         omega_bar: float) -> StageLmis:
    """Hiddenness step: the detectability floor ω̄ is a constant here."""
    constant, nu_coeff, b_coeffs = _big_block_parts(inputs, bk)
    constant = constant.copy()
    constant[0, 0] -= omega_bar
    big = LmiBlock(constant, {"nu": nu_coeff, "b": b_coeffs})

    p = inputs.hide_map.shape[0]
    dh = p + 1
    h_const = np.zeros((dh, dh))
    h_const[1:, 1:] = np.eye(p)
    offset = -inputs.hide_map @ inputs.b0
    h_const[0, 1:] = offset
    h_const[1:, 0] = offset
    phi_coeff = np.zeros((dh, dh))
    phi_coeff[0, 0] = 1.0
    hb = np.zeros((inputs.m, dh, dh))
    for j in range(inputs.m):
        hb[j][0, 1:] = inputs.hide_map[:, j]
        hb[j][1:, 0] = inputs.hide_map[:, j]
    hidden = LmiBlock(h_const, {"phi": phi_coeff, "b": hb})
    return StageLmis(big, hidden, inputs.b_lo.copy(), inputs.b_hi.copy())


# ----------------------------------------------------------------------
# parameterized solvers (compiled once, re-solved per linearization)
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class IterateOutcome:
    solution: ConicSolution
    objective: float | None      # ω (stage one) or φ (stage two)
    b: np.ndarray | None
    nu: float | None


def _scaled_flow_expr(inputs: MtdInputs, bv: cp.Variable) -> cp.Expression:
    return (inputs.flow_const
            - cp.diag(cp.multiply(inputs.flow_weight, bv)) @ inputs.flow_slope
            ) / inputs.scale


def _symmetrize(mat: np.ndarray) -> np.ndarray:
    return 0.5 * (mat + mat.T)


class StageOneSolver:
    """max ω over the ball-robust detectability block at a linearization."""

    def __init__(self, inputs: MtdInputs, order: tuple[str, ...] = SOLVER_ORDER):
        n, m = inputs.n, inputs.m
        self.inputs = inputs
        self.order = order
        self._bk_block = cp.Parameter((m, n))
        self._bk_gram = cp.Parameter((n, n), symmetric=True)
        self._bv = cp.Variable(m)
        self._nu = cp.Variable(nonneg=True)
        self._om = cp.Variable()
        g = _scaled_flow_expr(inputs, self._bv)
        cross = self._bk_block.T @ g
        corner = cross + cross.T - self._bk_gram
        top = inputs.attack_basis.T @ g
        pc = inputs.basis_center
        self._block = cp.bmat([
            [cp.reshape(self._nu * (inputs.unit_center_sq - 1.0) - self._om,
                        (1, 1), order="C"),
             cp.reshape(self._nu * pc, (1, n), order="C"),
             np.zeros((1, n))],
            [cp.reshape(self._nu * pc, (n, 1), order="C"),
             self._nu * inputs.gram_inv + np.eye(n),
             top],
            [np.zeros((n, 1)), top.T, corner],
        ])
        self._problem = cp.Problem(
            cp.Maximize(self._om),
            [self._block >> 0,
             self._bv >= inputs.b_lo, self._bv <= inputs.b_hi])

    def solve(self, bk: np.ndarray) -> IterateOutcome:
        blk = self.inputs.susceptance_block(np.asarray(bk, dtype=float))
        self._bk_block.value = blk
        self._bk_gram.value = _symmetrize(blk.T @ blk)
        sol = solve_sdp(self._problem, [self._block],
                        {"b": self._bv, "nu": self._nu, "omega": self._om},
                        self.order)
        if not sol.ok:
            return IterateOutcome(sol, None, None, None)
        return IterateOutcome(sol, float(sol.primal["omega"]),
                              sol.primal["b"], float(sol.primal["nu"]))


class StageTwoSolver:
    """min φ subject to the detectability floor and the hiddenness Schur block."""

    def __init__(self, inputs: MtdInputs, order: tuple[str, ...] = SOLVER_ORDER):
        n, m = inputs.n, inputs.m
        p = inputs.hide_map.shape[0]
        self.inputs = inputs
        self.order = order
        self._bk_block = cp.Parameter((m, n))
        self._bk_gram = cp.Parameter((n, n), symmetric=True)
        self._omega_bar = cp.Parameter()
        self._bv = cp.Variable(m)
        self._nu = cp.Variable(nonneg=True)
        self._phi = cp.Variable()
        g = _scaled_flow_expr(inputs, self._bv)
        cross = self._bk_block.T @ g
        corner = cross + cross.T - self._bk_gram
        top = inputs.attack_basis.T @ g
        pc = inputs.basis_center
        self._block = cp.bmat([
            [cp.reshape(self._nu * (inputs.unit_center_sq - 1.0)
                        - self._omega_bar, (1, 1), order="C"),
             cp.reshape(self._nu * pc, (1, n), order="C"),
             np.zeros((1, n))],
            [cp.reshape(self._nu * pc, (n, 1), order="C"),
             self._nu * inputs.gram_inv + np.eye(n),
             top],
            [np.zeros((n, 1)), top.T, corner],
        ])
        dv = inputs.hide_map @ (self._bv - inputs.b0)
        self._hidden = cp.bmat([
            [cp.reshape(self._phi, (1, 1), order="C"),
             cp.reshape(dv, (1, p), order="C")],
            [cp.reshape(dv, (p, 1), order="C"), np.eye(p)],
        ])
        self._problem = cp.Problem(
            cp.Minimize(self._phi),
            [self._block >> 0, self._hidden >> 0,
             self._bv >= inputs.b_lo, self._bv <= inputs.b_hi])

    def solve(self, bk: np.ndarray, omega_bar: float) -> IterateOutcome:
        blk = self.inputs.susceptance_block(np.asarray(bk, dtype=float))
        self._bk_block.value = blk
        self._bk_gram.value = _symmetrize(blk.T @ blk)
        self._omega_bar.value = float(omega_bar)
        sol = solve_sdp(self._problem, [self._block, self._hidden],
                        {"b": self._bv, "nu": self._nu, "phi": self._phi},
                        self.order)
        if not sol.ok:
            return IterateOutcome(sol, None, None, None)
        return IterateOutcome(sol, float(sol.primal["phi"]),
                              sol.primal["b"], float(sol.primal["nu"]))


def frozen_ball_floor(inputs: MtdInputs, b: np.ndarray,
                      order: tuple[str, ...] = SOLVER_ORDER
                      ) -> tuple[float | None, ConicSolution]:
    """Certified floor of the inner problem at a FROZEN susceptance.

    No Gram linearization: the bottom-right corner carries the exact flow
    map, so by strong duality the optimum equals the inner oracle value
    (the consistency tests rely on this).  A congruence by the right
    singular factor of the frozen map turns that corner into the
    identity; without it the raw Gram spans ~10 orders of magnitude and
    interior-point accuracy drops to ~1e-4.
    """
    n = inputs.n
    g = inputs.whitened_flow(np.asarray(b, dtype=float))
    w, sv, _ = np.linalg.svd(g, full_matrices=False)
    rank = int(np.sum(sv > 1e-10 * sv[0]))
    w = w[:, :rank]
    nu = cp.Variable(nonneg=True)
    om = cp.Variable()
    pc = inputs.basis_center
    top = inputs.attack_basis.T @ w
    block = cp.bmat([
        [cp.reshape(nu * (inputs.unit_center_sq - 1.0) - om, (1, 1), order="C"),
         cp.reshape(nu * pc, (1, n), order="C"),
         np.zeros((1, rank))],
        [cp.reshape(nu * pc, (n, 1), order="C"),
         nu * inputs.gram_inv + np.eye(n),
         top],
        [np.zeros((rank, 1)), top.T, np.eye(rank)],
    ])
    problem = cp.Problem(cp.Maximize(om), [block >> 0])
    # blocks are verified on the repaired certificate below, not here:
    # solver feasibility slack amplifies into the objective through the
    # near-singular inner block, so the raw omega is not trustworthy
    sol = solve_sdp(problem, [], {"omega": om, "nu": nu}, order)
    if not sol.ok:
        return None, sol
    nu_val = float(sol.primal["nu"])
    # exact largest feasible omega at this multiplier (Schur complement)
    inner = np.zeros((n + rank, n + rank))
    inner[:n, :n] = nu_val * inputs.gram_inv + np.eye(n)
    inner[:n, n:] = top
    inner[n:, :n] = top.T
    inner[n:, n:] = np.eye(rank)
    t = np.concatenate([nu_val * pc, np.zeros(rank)])
    if np.linalg.eigvalsh(inner).min() <= 1e-12:
        return float(sol.primal["omega"]), sol
    omega = nu_val * (inputs.unit_center_sq - 1.0) - float(
        t @ np.linalg.solve(inner, t))
    repaired = ConicSolution(
        status=sol.status, objective=omega,
        primal={"omega": omega, "nu": nu_val}, solver=sol.solver,
        wall_ms=sol.wall_ms, min_eig=0.0, detail=sol.detail + " (repaired)")
    return omega, repaired
