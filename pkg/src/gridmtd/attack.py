"""Stealthy injection crafting and the vigilant-attacker integrity check.

The attacker hijacks the measurement stream, estimates the state with
their own (stale, pre-move) network model, overlays a state deviation c
on chosen non-reference buses, and replaces the measurements with
z + h(v̂+c) − h(v̂).  Against the model used for crafting this shifts the
estimate and leaves the residual untouched; after a susceptance move it
does not.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .estimation import bdd_alarm, wls_estimate
from .grid.measurement import MeasurementVector, evaluate_h
from .grid.model import GridModel, StateVector


@dataclass(frozen=True)
class AttackVector:
    """State deviation on non-reference buses, rectangular components."""

    c_r: np.ndarray             # (N,)
    c_i: np.ndarray             # (N,)
    buses: tuple                # attacked bus ids (grid numbering)
    band: tuple                 # (lo, hi) strength range tag

    def __post_init__(self):
        if self.c_r.shape != self.c_i.shape:
            raise ValueError("c_R and c_I must have matching shapes")

    @property
    def norm(self) -> float:
        return float(np.sqrt(np.sum(self.c_r**2) + np.sum(self.c_i**2)))

    def is_null(self) -> bool:
        return self.norm == 0.0


def apply_state_attack(grid: GridModel, state: StateVector,
                       c_r: np.ndarray, c_i: np.ndarray) -> StateVector:
    """State with the rectangular deviation added at non-reference buses."""
    v = state.v.copy()
    v[grid.nonref] = v[grid.nonref] + (np.asarray(c_r) + 1j * np.asarray(c_i))
    return StateVector(v)


def angle_injection(grid: GridModel, state: StateVector,
                    c_r: np.ndarray, c_i: np.ndarray) -> np.ndarray:
    """Angle-space view of the deviation: Δθ at non-reference buses."""
    attacked = apply_state_attack(grid, state, c_r, c_i)
    return attacked.va[grid.nonref] - state.va[grid.nonref]


def sample_attack(grid: GridModel, state: StateVector, rng: np.random.Generator,
                  k: int, band: tuple[float, float]) -> AttackVector:
    """Random attack: k distinct non-reference buses, strength in ±band.

    Strength scales the nominal state: the angle is moved by a factor
    drawn from ±[band] of itself, the magnitude by ±[band]/2 (keeping the
    state inside the normal operating envelope).  k = 0 gives the null
    attack used as a campaign control.
    """
    if k > grid.n:
        raise ValueError(f"cannot attack {k} of {grid.n} non-reference buses")
    lo, hi = band
    if not (0.0 <= lo <= hi):
        raise ValueError(f"invalid strength band {band!r}")
    c_r = np.zeros(grid.n)
    c_i = np.zeros(grid.n)
    if k == 0:
        return AttackVector(c_r, c_i, (), (lo, hi))
    picks = rng.choice(grid.n, size=k, replace=False)
    vm = state.vm
    va = state.va
    bus_ids = []
    for p in sorted(int(i) for i in picks):
        bus = grid.nonref[p]
        bus_ids.append(grid.buses[bus].id)
        ang_fac = rng.uniform(lo, hi) * rng.choice((-1.0, 1.0))
        mag_fac = rng.uniform(lo, hi) * 0.5 * rng.choice((-1.0, 1.0))
        new_v = vm[bus] * (1.0 + mag_fac) * np.exp(1j * va[bus] * (1.0 + ang_fac))
        dv = new_v - vm[bus] * np.exp(1j * va[bus])
        c_r[p] = dv.real
        c_i[p] = dv.imag
    return AttackVector(c_r, c_i, tuple(bus_ids), (lo, hi))


def craft_fdi(grid: GridModel, v_hat_a: StateVector, attack: AttackVector) -> np.ndarray:
    """Measurement delta a = h(v̂+c) − h(v̂) under the supplied model.

    The caller passes the attacker's model (the stale pre-move network);
    the construction is exact, no linearization anywhere.
    """
    attacked = apply_state_attack(grid, v_hat_a, attack.c_r, attack.c_i)
    return evaluate_h(grid, attacked) - evaluate_h(grid, v_hat_a)


def inject(grid_attacker: GridModel, z: MeasurementVector,
           attack: AttackVector,
           v_hat_a: StateVector | None = None) -> tuple[MeasurementVector, StateVector]:
    """Full hijack: estimate with the stale model, craft, overlay.

    Returns the tampered measurement and the attacker's estimate the
    crafting was based on.
    """
    if v_hat_a is None:
        v_hat_a = wls_estimate(grid_attacker, z).state
    a = craft_fdi(grid_attacker, v_hat_a, attack)
    return z.with_values(z.z + a), v_hat_a


def attacker_verify(grid_attacker: GridModel, z: MeasurementVector,
                    tau: float) -> tuple[bool, float]:
    """Integrity check with the attacker's stale model.

    Returns (mtd_detected, gamma): detected iff the stale-model residual
    trips the same BDD threshold the operator uses.
    """
    res = wls_estimate(grid_attacker, z)
    return bdd_alarm(res.gamma, tau), res.gamma
