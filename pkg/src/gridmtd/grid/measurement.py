"""Measurement function, noise model, and the measurement vector type.

Measurement ordering is fixed package-wide:
[P_bus (N+1), P_f (M), P_t (M), Q_bus (N+1), Q_f (M), Q_t (M)],
total P = 2N + 4M + 2.  Noise is zero-mean Gaussian with a diagonal
covariance; per-channel sigma is a fraction of the channel's reference
magnitude with a 0.01 p.u. floor so zero-flow lines keep positive
variance.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .admittance import AdmittanceSet, build_admittance
from .model import GridModel, StateVector

SIGMA_FLOOR = 0.01
DEFAULT_NOISE_SCALE = 0.02

KINDS = ("p_bus", "p_f", "p_t", "q_bus", "q_f", "q_t")


@dataclass(frozen=True)
class MeasurementVector:
    """Ordered sensor readings with their diagonal noise model."""

    z: np.ndarray
    sigma: np.ndarray
    descriptors: tuple  # (kind, element) per index; bus id or branch position

    def __post_init__(self):
        if len(self.z) != len(self.sigma) or len(self.z) != len(self.descriptors):
            raise ValueError("measurement/sigma/descriptor length mismatch")
        if np.any(self.sigma <= 0.0):
            raise ValueError("all measurement variances must be strictly positive")

    def __len__(self) -> int:
        return len(self.z)

    @property
    def r_diag(self) -> np.ndarray:
        return self.sigma**2

    def with_values(self, z_new: np.ndarray) -> "MeasurementVector":
        return MeasurementVector(np.asarray(z_new, dtype=float), self.sigma,
                                 self.descriptors)


def build_descriptors(grid: GridModel) -> tuple:
    bus_ids = [b.id for b in grid.buses]
    desc: list[tuple[str, int]] = []
    desc += [("p_bus", i) for i in bus_ids]
    desc += [("p_f", k) for k in range(grid.m)]
    desc += [("p_t", k) for k in range(grid.m)]
    desc += [("q_bus", i) for i in bus_ids]
    desc += [("q_f", k) for k in range(grid.m)]
    desc += [("q_t", k) for k in range(grid.m)]
    return tuple(desc)


def measurement_count(grid: GridModel) -> int:
    return 2 * grid.n_bus + 4 * grid.m


def evaluate_h(grid: GridModel, state: StateVector,
               adm: AdmittanceSet | None = None) -> np.ndarray:
    """Noiseless measurement values h(v) in package ordering."""
    adm = adm or grid.admittance()
    v = state.v
    s_bus = v * np.conj(adm.ybus @ v)
    s_f = (adm.cf @ v) * np.conj(adm.yf @ v)
    s_t = (adm.ct @ v) * np.conj(adm.yt @ v)
    return np.concatenate([s_bus.real, s_f.real, s_t.real,
                           s_bus.imag, s_f.imag, s_t.imag])


def sigma_rule(z_ref: np.ndarray, scale: float = DEFAULT_NOISE_SCALE,
               floor: float = SIGMA_FLOOR) -> np.ndarray:
    """Per-channel sigma: scale times max(|reference value|, floor)."""
    return scale * np.maximum(np.abs(z_ref), floor)


def measurement_fn(grid: GridModel, state: StateVector,
                   adm: AdmittanceSet | None = None,
                   sigma_scale: float = DEFAULT_NOISE_SCALE) -> MeasurementVector:
    """Noiseless measurement vector; sigma populated from the scale rule."""
    z = evaluate_h(grid, state, adm)
    return MeasurementVector(z, sigma_rule(z, sigma_scale), build_descriptors(grid))


def measure(grid: GridModel, state: StateVector,
            noise_scale: float = DEFAULT_NOISE_SCALE,
            seed=None, adm: AdmittanceSet | None = None) -> MeasurementVector:
    """Noisy measurement z = h(v) + e, e ~ N(0, diag(sigma²)).

    noise_scale = 0 returns the noiseless values but keeps the default-scale
    sigma so downstream weighting stays defined.
    """
    if noise_scale < 0:
        raise ValueError(f"noise scale must be nonnegative, got {noise_scale}")
    base = measurement_fn(grid, state, adm,
                          sigma_scale=noise_scale if noise_scale > 0 else DEFAULT_NOISE_SCALE)
    if noise_scale == 0:
        return base
    rng = np.random.default_rng(seed)
    z = base.z + rng.standard_normal(len(base)) * base.sigma
    return MeasurementVector(z, base.sigma, base.descriptors)


def branch_losses(grid: GridModel, state: StateVector) -> float:
    """Total resistive losses sum g_k |v_f/t_k - v_t|² (tap on from side)."""
    v = state.v
    vf = v[grid.f_idx] / grid.tap
    vt = v[grid.t_idx]
    return float(np.sum(grid.g * np.abs(vf - vt) ** 2))
