"""Exact inner-problem oracle and the two noncentrality maps.

The inner problem — worst (least detectable) attack in the uncertainty
ball after a susceptance move — is a trust-region subproblem.  It is
solved exactly here by eigendecomposition plus a secular-equation
bisection; the semidefinite machinery is validated against this.
"""

from __future__ import annotations

import numpy as np

from .inputs import MtdInputs


def flow_complement_projector(inputs: MtdInputs, b: np.ndarray) -> np.ndarray:
    """Orthogonal projector onto the complement of the whitened flow range."""
    h = inputs.whitened_flow(b)
    u, s, _ = np.linalg.svd(h, full_matrices=True)
    rank = int(np.sum(s > 1e-10 * s[0]))
    ur = u[:, :rank]
    return np.eye(h.shape[0]) - ur @ ur.T


def effectiveness_lambda(inputs: MtdInputs, b: np.ndarray,
                         c: np.ndarray) -> float:
    """Noncentrality of the operator's flow residual under attack c.

    The attack is crafted against the pre-move Jacobian; the residual is
    formed with the post-move one, so only the component of the injected
    deviation leaving the new column space survives.
    """
    s = flow_complement_projector(inputs, b)
    d = s @ (inputs.attack_map @ np.asarray(c, dtype=float))
    return float(d @ d)


def hiddenness_lambda(inputs: MtdInputs, b: np.ndarray) -> float:
    """Noncentrality of the attacker's stale-model residual after the move."""
    d = inputs.hide_map @ (np.asarray(b, dtype=float) - inputs.b0)
    return float(d @ d)


def inner_oracle(inputs: MtdInputs, b: np.ndarray,
                 tol_iters: int = 300) -> tuple[np.ndarray, float]:
    """Exact minimum of effectiveness over the uncertainty ball.

    Returns (worst attack c*, value).  In the eigenbasis of the quadratic
    the constrained minimizer is c_i = μ d_i/(λ_i + μ); μ solves the
    secular equation ‖c − d‖ = radius by bisection.  When the ball
    reaches the kernel of the quadratic the value is exactly zero.
    """
    center = inputs.center
    radius = inputs.radius
    if float(np.linalg.norm(center)) <= radius:
        return np.zeros_like(center), 0.0

    s = flow_complement_projector(inputs, b)
    e = s @ inputs.attack_map
    q = e.T @ e
    lam, u = np.linalg.eigh(q)
    lam = np.maximum(lam, 0.0)
    d = u.T @ center
    pos = lam > 1e-12 * max(float(lam.max()), 1.0)

    # ball reaches the kernel: zero the detectable components outright
    dist = float(np.sqrt(np.sum(d[pos] ** 2)))
    if dist <= radius:
        y = np.where(pos, 0.0, d)
        return u @ y, 0.0

    def deviation_sq(mu: float) -> float:
        w = lam / (lam + mu)
        return float(np.sum((w * d) ** 2))

    lo, hi = 0.0, 1.0
    while deviation_sq(hi) > radius * radius:
        hi *= 4.0
    for _ in range(tol_iters):
        mid = 0.5 * (lo + hi)
        if deviation_sq(mid) > radius * radius:
            lo = mid
        else:
            hi = mid
    mu = 0.5 * (lo + hi)
    y = mu * d / (lam + mu)
    value = float(np.sum(lam * y * y))
    return u @ y, value
