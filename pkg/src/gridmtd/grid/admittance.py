"""Incidence and admittance matrix assembly (series elements only).

Branch series admittance y = g + jb with an off-nominal tap t on the
from side gives the standard two-port blocks y_ff = y/t², y_ft = y_tf =
-y/t, y_tt = y; stacking those along the incidence matrices yields the
from/to flow matrices and the bus admittance matrix.  No shunt elements
anywhere, so Y_bus rows sum to zero for rows touching only nominal-tap
branches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import GridModel


@dataclass(frozen=True)
class AdmittanceSet:
    ybus: np.ndarray   # complex (N+1)x(N+1)
    yf: np.ndarray     # complex Mx(N+1), from-side flow currents I_f = yf @ v
    yt: np.ndarray     # complex Mx(N+1)
    cf: np.ndarray     # 0/1 Mx(N+1) from-bus selector
    ct: np.ndarray     # 0/1 Mx(N+1) to-bus selector
    a: np.ndarray      # signed incidence cf - ct
    a_r: np.ndarray    # reduced incidence, reference column removed


def branch_two_port(g: np.ndarray, b: np.ndarray, tap: np.ndarray):
    """Per-branch two-port admittance entries (y_ff, y_ft, y_tf, y_tt)."""
    y = g + 1j * b
    return y / tap**2, -y / tap, -y / tap, y


def build_admittance(grid: GridModel, b: np.ndarray | None = None) -> AdmittanceSet:
    """Assemble the admittance set, optionally at an alternative susceptance."""
    nb, m = grid.n_bus, grid.m
    bvec = grid.b if b is None else np.asarray(b, dtype=float)
    if bvec.shape != (m,):
        raise ValueError(f"expected {m} susceptances, got {bvec.shape}")

    cf = np.zeros((m, nb))
    ct = np.zeros((m, nb))
    cf[np.arange(m), grid.f_idx] = 1.0
    ct[np.arange(m), grid.t_idx] = 1.0

    yff, yft, ytf, ytt = branch_two_port(grid.g, bvec, grid.tap)
    yf = yff[:, None] * cf + yft[:, None] * ct
    yt = ytf[:, None] * cf + ytt[:, None] * ct
    ybus = cf.T @ yf + ct.T @ yt

    a = cf - ct
    a_r = a[:, grid.nonref]
    return AdmittanceSet(ybus=ybus, yf=yf, yt=yt, cf=cf, ct=ct, a=a, a_r=a_r)
