"""Whitened problem data for the two-stage susceptance redesign.

Everything downstream (oracle, LMI blocks, stage loops) works on this
frozen bundle: the active-flow Jacobian split into its constant and
susceptance-linear parts with noise whitening absorbed, the full-space
hiddenness sensitivity, the D-FACTS box, the identified attack ball, and
the orthonormalized pieces that keep the semidefinite blocks
well-conditioned (unit-ball scaling of the attack, polar factor of the
attack-map Gram, spectral normalization of the flow map).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..estimation import projectors
from ..grid.jacobian import active_flow_jacobian, jacobians
from ..grid.model import GridModel, StateVector


class MtdError(RuntimeError):
    """Susceptance redesign could not produce a certified setpoint."""


@dataclass(frozen=True)
class MtdInputs:
    """Immutable whitened inputs; M branches, N angle states, P channels."""

    b0: np.ndarray              # (M,) susceptance the attacker modeled
    b_lo: np.ndarray            # (M,) box lower bound
    b_hi: np.ndarray            # (M,) box upper bound
    flow_const: np.ndarray      # (M, N) constant part of whitened flow Jacobian
    flow_slope: np.ndarray      # (M, N) angle-difference pattern (cos/tap scaled)
    flow_weight: np.ndarray     # (M,) voltage-product-over-sigma diagonal
    attack_map: np.ndarray      # (M, N) whitened flow Jacobian at b0
    hide_map: np.ndarray        # (P, M) whitened residual response to Δb
    center: np.ndarray          # (N,) identified attack, angle view
    radius: float               # uncertainty-ball radius
    lambda_target: float        # required worst-case noncentrality
    # conditioning blocks (derived, stored to avoid recomputation)
    scale: float                # spectral norm of attack_map
    unit_center: np.ndarray     # (N,) center / radius
    unit_center_sq: float
    gram_inv: np.ndarray        # (N, N) inverse of radius²·attack_mapᵀattack_map
    gram_inv_sqrt: np.ndarray   # (N, N) its principal square root
    attack_basis: np.ndarray    # (M, N) orthonormal columns spanning the flow range
    basis_center: np.ndarray    # (N,) gram_inv_sqrt @ unit_center

    def __post_init__(self):
        m, n = self.attack_map.shape
        if self.b0.shape != (m,) or self.b_lo.shape != (m,) or self.b_hi.shape != (m,):
            raise ValueError("susceptance vectors inconsistent with M branches")
        if self.flow_const.shape != (m, n) or self.flow_slope.shape != (m, n):
            raise ValueError("flow Jacobian parts inconsistent")
        if self.hide_map.shape[1] != m:
            raise ValueError("hiddenness map must have M columns")
        if self.center.shape != (n,):
            raise ValueError("attack center must live in angle space")
        if self.radius <= 0.0:
            raise ValueError(f"ball radius must be positive, got {self.radius}")
        if self.lambda_target <= 0.0:
            raise ValueError(
                f"effectiveness target must be positive, got {self.lambda_target}")
        if np.any(self.b_lo > self.b_hi):
            raise ValueError("empty susceptance box")

    @property
    def m(self) -> int:
        return self.attack_map.shape[0]

    @property
    def n(self) -> int:
        return self.attack_map.shape[1]

    def whitened_flow(self, b: np.ndarray) -> np.ndarray:
        """Whitened active-flow Jacobian at susceptance b, (M, N)."""
        return self.flow_const - (self.flow_weight * b)[:, None] * self.flow_slope

    def scaled_flow(self, b: np.ndarray) -> np.ndarray:
        return self.whitened_flow(b) / self.scale

    def susceptance_block(self, b: np.ndarray) -> np.ndarray:
        """The b-linear part of scaled_flow (what the Gram bound linearizes)."""
        return -(self.flow_weight * b)[:, None] * self.flow_slope / self.scale


def build_inputs(grid: GridModel, state0: StateVector, sigma: np.ndarray,
                 center: np.ndarray, radius: float,
                 lambda_target: float) -> MtdInputs:
    """Assemble the whitened bundle at an operating point.

    ``sigma`` is the full per-channel noise scale; the active from-side
    flow rows drive the effectiveness pieces, the full set drives the
    hiddenness map.
    """
    sigma = np.asarray(sigma, dtype=float)
    parts = active_flow_jacobian(grid, state0)
    flow_rows = slice(grid.n_bus, grid.n_bus + grid.m)
    inv_flow_sigma = 1.0 / sigma[flow_rows]

    flow_const = inv_flow_sigma[:, None] * parts.constant
    flow_weight = parts.v_products * inv_flow_sigma
    attack_map = flow_const - (flow_weight * grid.b)[:, None] * parts.a_cos

    _, h_b = jacobians(grid, state0)
    proj = projectors(grid, state0, sigma)
    hide_map = proj.s_whitened @ ((1.0 / sigma)[:, None] * h_b)

    center = np.asarray(center, dtype=float)
    scale = float(np.linalg.norm(attack_map, 2))
    unit_center = center / radius
    scaled_map = radius * attack_map
    gram = scaled_map.T @ scaled_map
    lam, u = np.linalg.eigh(gram)
    if lam.min() <= 0.0:
        raise MtdError(
            "attack-map Gram is rank deficient: angle states are not "
            "observable from the active flows at this operating point")
    gram_inv = (u / lam) @ u.T
    gram_inv = 0.5 * (gram_inv + gram_inv.T)
    gram_inv_sqrt = (u / np.sqrt(lam)) @ u.T
    gram_inv_sqrt = 0.5 * (gram_inv_sqrt + gram_inv_sqrt.T)
    attack_basis = scaled_map @ gram_inv_sqrt

    return MtdInputs(
        b0=grid.b.copy(), b_lo=grid.b_lo.copy(), b_hi=grid.b_hi.copy(),
        flow_const=flow_const, flow_slope=parts.a_cos.copy(),
        flow_weight=flow_weight, attack_map=attack_map, hide_map=hide_map,
        center=center.copy(), radius=float(radius),
        lambda_target=float(lambda_target),
        scale=scale, unit_center=unit_center,
        unit_center_sq=float(unit_center @ unit_center),
        gram_inv=gram_inv, gram_inv_sqrt=gram_inv_sqrt,
        attack_basis=attack_basis,
        basis_center=gram_inv_sqrt @ unit_center)
