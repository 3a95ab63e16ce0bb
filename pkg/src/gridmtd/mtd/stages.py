"""The two-stage setpoint search and its certificates.

Stage one runs the detectability maximization from several random
starting susceptances; each run iterates the linearized semidefinite
step until the certified floor stops improving.  Stage two re-seeds from
the qualifying runs and walks the hiddenness bound down while the floor
is pinned as a constant.  The returned setpoint always carries honestly
recomputed certificates: the exact inner-oracle value and the exact
hiddenness noncentrality at the final susceptance.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .inputs import MtdError, MtdInputs
from .lmi import StageOneSolver, StageTwoSolver
from .oracle import hiddenness_lambda, inner_oracle
from .sdp import SOLVER_ORDER

ORACLE_TOL = 1e-4


@dataclass
class MtdConfig:
    n_runs: int = 15
    ite_one: int = 100
    ite_two: int = 100
    tol_one: float = 0.1
    tol_two: float = 1.0
    seed: int = 0
    workers: int = 1
    solver_order: tuple = SOLVER_ORDER
    oracle_tol: float = ORACLE_TOL

    def __post_init__(self):
        if self.n_runs < 1 or self.ite_one < 1 or self.ite_two < 1:
            raise ValueError("run and iteration counts must be positive")
        if self.workers < 1:
            raise ValueError("workers must be positive")


@dataclass(frozen=True)
class StageOneRun:
    run: int
    b: np.ndarray | None
    omega: float | None
    iterations: int
    status: str

    @property
    def ok(self) -> bool:
        return self.b is not None and self.omega is not None


@dataclass(frozen=True)
class MtdSetpoint:
    b: np.ndarray
    omega_star: float            # best stage-one certified floor
    phi_star: float              # stage-two hiddenness certificate
    omega_floor: float           # floor enforced during stage two
    effectiveness: float         # inner-oracle value at b (exact)
    hiddenness: float            # hiddenness noncentrality at b (exact)
    worst_attack: np.ndarray     # the oracle's minimizer at b
    best_effort: bool            # stage one missed the target
    used_fallback: bool          # stage two failed entirely
    runs: tuple = ()
    provenance: tuple = ()       # JSONL-ready dict per solver iteration


def _trace_entry(stage: int, run: int, iteration: int, value: float | None,
                 outcome) -> dict:
    return {
        "stage": stage,
        "run": run,
        "iter": iteration,
        "omega_or_phi": None if value is None else float(value),
        "solver_status": outcome.solution.detail or outcome.solution.status,
        "wall_ms": round(outcome.solution.wall_ms, 3),
    }


def _stage_one_run(solver: StageOneSolver, b_start: np.ndarray, run: int,
                   config: MtdConfig) -> tuple[StageOneRun, list[dict]]:
    bk = np.asarray(b_start, dtype=float)
    trace: list[dict] = []
    omega_prev: float | None = None
    b_good: np.ndarray | None = None
    status = "optimal"
    iterations = 0
    for it in range(config.ite_one):
        outcome = solver.solve(bk)
        iterations = it + 1
        trace.append(_trace_entry(1, run, it, outcome.objective, outcome))
        if outcome.objective is None:
            status = outcome.solution.status
            break
        bk = outcome.b
        b_good = outcome.b
        if omega_prev is not None and outcome.objective - omega_prev <= config.tol_one:
            omega_prev = max(omega_prev, outcome.objective)
            break
        omega_prev = outcome.objective
    if b_good is None:
        return StageOneRun(run, None, None, iterations, status), trace
    return StageOneRun(run, b_good, omega_prev, iterations, status), trace


def stage_one(inputs: MtdInputs, config: MtdConfig,
              rng: np.random.Generator | None = None
              ) -> tuple[list[StageOneRun], list[dict]]:
    """Multi-start detectability maximization; returns every (b′, ω*) pair."""
    rng = rng or np.random.default_rng(config.seed)
    starts = [rng.uniform(inputs.b_lo, inputs.b_hi)
              for _ in range(config.n_runs)]
    if config.workers == 1:
        solver = StageOneSolver(inputs, config.solver_order)
        results = [_stage_one_run(solver, s, i, config)
                   for i, s in enumerate(starts)]
    else:
        def job(pair):
            i, s = pair
            # independent solver per run: compiled problems are not thread-safe
            return _stage_one_run(StageOneSolver(inputs, config.solver_order),
                                  s, i, config)
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(job, enumerate(starts)))
    runs = [r for r, _ in results]
    trace = [entry for _, t in results for entry in t]
    return runs, trace


def stage_two(inputs: MtdInputs, runs: list[StageOneRun], config: MtdConfig,
              trace: list[dict] | None = None) -> MtdSetpoint:
    """Hiddenness minimization seeded by the qualifying stage-one runs.

    Full mode pins the floor at the effectiveness target and seeds from
    every run that certified it; when no run reached the target the floor
    drops to the best achieved value and only that run seeds (best
    effort).  If every stage-two solve fails the best stage-one setpoint
    is returned unchanged, with a warning.
    """
    trace = list(trace) if trace is not None else []
    good = [r for r in runs if r.ok]
    if not good:
        raise MtdError("every stage-one run failed to produce a setpoint")
    best = max(good, key=lambda r: r.omega)
    if best.omega >= inputs.lambda_target:
        omega_floor = inputs.lambda_target
        seeds = [r for r in good if r.omega >= inputs.lambda_target]
        best_effort = False
    else:
        # the surrogate omega is optimistic at small iteration budgets; the
        # enforced floor must be a value the seed actually achieves, so pin
        # it to the exact inner minimum there
        _, eff_seed = inner_oracle(inputs, best.b)
        omega_floor = min(best.omega, eff_seed)
        seeds = [best]
        best_effort = True

    solver = StageTwoSolver(inputs, config.solver_order)
    candidates: list[tuple[float, np.ndarray]] = []
    for seed in seeds:
        bk = seed.b
        phi_prev: float | None = None
        seed_best: tuple[float, np.ndarray] | None = None
        for it in range(config.ite_two):
            outcome = solver.solve(bk, omega_floor)
            trace.append(_trace_entry(2, seed.run, it, outcome.objective, outcome))
            if outcome.objective is None:
                break
            bk = outcome.b
            phi = outcome.objective
            if seed_best is None or phi < seed_best[0]:
                seed_best = (phi, outcome.b)
            if phi_prev is not None and phi_prev - phi <= config.tol_two:
                break
            phi_prev = phi
        if seed_best is not None:
            candidates.append(seed_best)

    if candidates:
        phi_star, b_final = min(candidates, key=lambda c: c[0])
        used_fallback = False
    else:
        warnings.warn("all stage-two solves failed; falling back to the "
                      "best stage-one setpoint", RuntimeWarning)
        b_final = best.b
        phi_star = hiddenness_lambda(inputs, b_final)
        used_fallback = True
        # the fallback setpoint never passed through the floor-constrained
        # solve, so certify it at what it actually achieves
        _, eff_fb = inner_oracle(inputs, np.clip(b_final, inputs.b_lo, inputs.b_hi))
        omega_floor = min(omega_floor, eff_fb)
        best_effort = best_effort or omega_floor < inputs.lambda_target

    b_final = np.clip(b_final, inputs.b_lo, inputs.b_hi)
    worst_c, eff = inner_oracle(inputs, b_final)
    hid = hiddenness_lambda(inputs, b_final)
    if eff < omega_floor - config.oracle_tol:
        raise MtdError(
            f"certificate violated: inner oracle {eff:.6f} below the "
            f"enforced floor {omega_floor:.6f} at the returned setpoint")
    if not used_fallback and phi_star < hid - config.oracle_tol:
        raise MtdError(
            f"hiddenness certificate violated: phi* {phi_star:.6f} below "
            f"the exact noncentrality {hid:.6f}")

    return MtdSetpoint(
        b=b_final, omega_star=float(best.omega), phi_star=max(float(phi_star), 0.0),
        omega_floor=float(omega_floor), effectiveness=eff, hiddenness=hid,
        worst_attack=worst_c, best_effort=best_effort,
        used_fallback=used_fallback, runs=tuple(runs),
        provenance=tuple(trace))


def run_mtd(inputs: MtdInputs, config: MtdConfig | None = None,
            rng: np.random.Generator | None = None) -> MtdSetpoint:
    """Full redesign: stage one, certificate harvest, stage two."""
    config = config or MtdConfig()
    runs, trace = stage_one(inputs, config, rng)
    return stage_two(inputs, runs, config, trace)
