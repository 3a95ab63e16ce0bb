"""Conic-solver contract: normalized statuses and PSD verification.

Solves are attempted across the preferred solver order; a result only
counts as optimal when every semidefinite block is PSD at the solution
within tolerance.  Anything else cascades to the next solver and the
whole chain of raw statuses is kept for diagnostics.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

SOLVER_ORDER: tuple[str, ...] = ("CLARABEL", "SCS", "CVXOPT")
PSD_EIG_TOL = -1e-7

_OPTIMAL = {cp.OPTIMAL, cp.OPTIMAL_INACCURATE}
_INFEASIBLE = {cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE}


@dataclass(frozen=True)
class ConicSolution:
    """Normalized solver outcome: optimal | infeasible | numerical-failure."""

    status: str
    objective: float | None
    primal: dict = field(default_factory=dict)
    solver: str | None = None
    wall_ms: float = 0.0
    min_eig: float | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"


def available_solvers(order: tuple[str, ...] = SOLVER_ORDER) -> list[str]:
    installed = set(cp.installed_solvers())
    return [s for s in order if s in installed]


def solve_sdp(problem: cp.Problem, blocks: list,
              primal_vars: dict | None = None,
              order: tuple[str, ...] = SOLVER_ORDER) -> ConicSolution:
    """Solve a semidefinite problem under the contract above.

    ``blocks`` are the expressions constrained PSD; after a nominally
    optimal solve each is checked to have minimum eigenvalue above
    -1e-7, otherwise the solve is treated as a numerical failure.
    """
    chain: list[str] = []
    t0 = time.perf_counter()
    solvers = available_solvers(order)
    if not solvers:
        return ConicSolution("numerical-failure", None, {}, None, 0.0, None,
                             "no configured solver is installed")
    saw_infeasible = False
    for name in solvers:
        try:
            with warnings.catch_warnings():
                # accuracy is judged below by the PSD check, not by cvxpy
                warnings.simplefilter("ignore")
                problem.solve(solver=name)
        except Exception as exc:  # cvxpy raises a zoo of solver errors
            chain.append(f"{name}:{type(exc).__name__}")
            continue
        if problem.status in _INFEASIBLE:
            chain.append(f"{name}:{problem.status}")
            saw_infeasible = True
            continue
        if problem.status not in _OPTIMAL:
            chain.append(f"{name}:{problem.status}")
            continue
        min_eig = None
        if blocks:
            eigs = []
            for blk in blocks:
                val = np.asarray(blk.value, dtype=float)
                val = 0.5 * (val + val.T)
                eigs.append(float(np.linalg.eigvalsh(val).min()))
            min_eig = min(eigs)
            if min_eig < PSD_EIG_TOL:
                chain.append(f"{name}:psd-violation({min_eig:.2e})")
                continue
        chain.append(f"{name}:{problem.status}")
        wall = 1e3 * (time.perf_counter() - t0)
        primal = {}
        for key, var in (primal_vars or {}).items():
            v = var.value
            primal[key] = (np.array(v, dtype=float)
                           if np.ndim(v) else float(v))
        return ConicSolution("optimal", float(problem.value), primal, name,
                             wall, min_eig, " -> ".join(chain))
    wall = 1e3 * (time.perf_counter() - t0)
    status = "infeasible" if saw_infeasible else "numerical-failure"
    return ConicSolution(status, None, {}, None, wall, None,
                         " -> ".join(chain))
