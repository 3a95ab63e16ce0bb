"""The event-triggered monitoring cycle.

Per step: score the sliding window; on alarm, identify the injection,
wrap it in an uncertainty ball, dispatch the certified susceptance move,
re-solve the physics at the moved setpoint, and let both sides re-check —
the operator's residual test with the updated model, the attacker's
integrity check with the stale one.  The setpoint reverts afterwards so
every episode starts from the nominal network.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import json

import numpy as np

from ..attack import attacker_verify, inject
from ..estimation import EstimationError, bdd_alarm, wls_estimate
from ..grid import (GridModel, PowerFlowError, SetpointViolation, StateVector,
                    apply_setpoint, solve_power_flow, measure)
from ..identifier import IdentificationError, identify, uncertainty_set
from ..mtd import MtdError, build_inputs, hiddenness_lambda, run_mtd
from ..stats import chi2_quantile, lambda_for_detection
from .config import ScenarioConfig
from .scenario import Stream

__all__ = [
    "IdentOutcome",
    "MtdOutcome",
    "PostOutcome",
    "EpisodeRecord",
    "run_cycle",
    "identify_step",
    "write_episodes",
    "read_episodes",
    "flow_lambda_target",
]

log = logging.getLogger("gridmtd.harness")


def flow_lambda_target(grid: GridModel, alpha: float, rho: float) -> float:
    """Residual shift needed so the flow-redundancy test fires w.p. rho."""
    dof = grid.m - grid.n
    if dof < 1:
        raise ValueError(
            f"grid has no flow redundancy ({grid.m} branches, {grid.n} free buses)")
    return lambda_for_detection(dof, chi2_quantile(dof, alpha), rho)


def _listify(a):
    return None if a is None else np.asarray(a).tolist()


def _arr(x):
    return None if x is None else np.asarray(x, dtype=float)


@dataclass(frozen=True)
class IdentOutcome:
    ok: bool
    error: str | None = None
    iterations: int = 0
    loss: float | None = None
    bypass_bdd: bool | None = None
    bypass_ae: bool | None = None
    c_r: np.ndarray | None = None
    c_i: np.ndarray | None = None
    c_angle: np.ndarray | None = None
    recovered_vm: np.ndarray | None = None
    recovered_va: np.ndarray | None = None
    contains_zero: bool | None = None

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("c_r", "c_i", "c_angle", "recovered_vm", "recovered_va"):
            d[k] = _listify(d[k])
        return d

    @staticmethod
    def from_dict(d: dict) -> "IdentOutcome":
        return IdentOutcome(**{**d, **{k: _arr(d.get(k)) for k in
                                       ("c_r", "c_i", "c_angle",
                                        "recovered_vm", "recovered_va")}})


@dataclass(frozen=True)
class MtdOutcome:
    ok: bool
    applied: bool                   # a setpoint other than the nominal one ran
    error: str | None = None
    degenerate: bool = False        # uncertainty ball swallowed the origin
    b: np.ndarray | None = None
    omega_star: float | None = None
    phi_star: float | None = None
    omega_floor: float | None = None
    effectiveness: float | None = None
    hiddenness: float | None = None
    best_effort: bool | None = None
    used_fallback: bool | None = None
    ratio_avg: float | None = None  # mean reactance move over D-FACTS branches
    ratio_max: float | None = None
    b_stage_one: np.ndarray | None = None        # best feasibility-stage setpoint
    hiddenness_stage_one: float | None = None    # its attacker-visibility value

    def to_dict(self) -> dict:
        d = asdict(self)
        d["b"] = _listify(d["b"])
        d["b_stage_one"] = _listify(d["b_stage_one"])
        return d

    @staticmethod
    def from_dict(d: dict) -> "MtdOutcome":
        return MtdOutcome(**{**d, "b": _arr(d.get("b")),
                             "b_stage_one": _arr(d.get("b_stage_one"))})


@dataclass(frozen=True)
class PostOutcome:
    ok: bool
    error: str | None = None
    alarm: bool | None = None           # operator residual test, realized draw
    gamma: float | None = None
    attacker_flagged: bool | None = None
    attacker_gamma: float | None = None
    detect_rate: float | None = None    # over fresh noise draws
    attacker_flag_rate: float | None = None
    draws: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @staticmethod
    def from_dict(d: dict) -> "PostOutcome":
        return PostOutcome(**d)


@dataclass(frozen=True)
class EpisodeRecord:
    """One decision step.  The triggered blocks exist iff the alarm fired."""

    step: int                   # position in the stream
    index: int                  # dataset row behind it
    attacked: bool
    score: float
    alarm: bool
    attack_buses: tuple = ()
    c_true_r: np.ndarray | None = None
    c_true_i: np.ndarray | None = None
    c_true_angle: np.ndarray | None = None
    identification: IdentOutcome | None = None
    mtd: MtdOutcome | None = None
    post: PostOutcome | None = None
    timings_ms: dict = field(default_factory=dict)

    def __post_init__(self):
        triggered = (self.identification, self.mtd, self.post)
        if self.alarm and any(x is None for x in triggered):
            raise ValueError(f"alarmed step {self.step} is missing triggered blocks")
        if not self.alarm and any(x is not None for x in triggered):
            raise ValueError(f"quiet step {self.step} carries triggered blocks")

    def to_dict(self) -> dict:
        return {
            "step": self.step, "index": self.index, "attacked": self.attacked,
            "score": self.score, "alarm": self.alarm,
            "attack_buses": list(self.attack_buses),
            "c_true_r": _listify(self.c_true_r),
            "c_true_i": _listify(self.c_true_i),
            "c_true_angle": _listify(self.c_true_angle),
            "identification": None if self.identification is None
            else self.identification.to_dict(),
            "mtd": None if self.mtd is None else self.mtd.to_dict(),
            "post": None if self.post is None else self.post.to_dict(),
            "timings_ms": dict(self.timings_ms),
        }

    @staticmethod
    def from_dict(d: dict) -> "EpisodeRecord":
        return EpisodeRecord(
            step=d["step"], index=d["index"], attacked=d["attacked"],
            score=d["score"], alarm=d["alarm"],
            attack_buses=tuple(d.get("attack_buses", ())),
            c_true_r=_arr(d.get("c_true_r")),
            c_true_i=_arr(d.get("c_true_i")),
            c_true_angle=_arr(d.get("c_true_angle")),
            identification=None if d.get("identification") is None
            else IdentOutcome.from_dict(d["identification"]),
            mtd=None if d.get("mtd") is None else MtdOutcome.from_dict(d["mtd"]),
            post=None if d.get("post") is None else PostOutcome.from_dict(d["post"]),
            timings_ms=dict(d.get("timings_ms", {})))


def write_episodes(records, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict()) + "\n")


def read_episodes(path) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(EpisodeRecord.from_dict(json.loads(line)))
    return out


def identify_step(model, window, grid, sigma, config: ScenarioConfig) -> IdentOutcome:
    id_cfg = config.identify
    if id_cfg.tau_bdd is None:
        tau_full = chi2_quantile(len(sigma) - 2 * grid.n, config.alpha)
        id_cfg = replace(id_cfg, tau_bdd=tau_full)
    try:
        res = identify(model, window, grid, sigma, id_cfg)
    except (IdentificationError, EstimationError) as exc:
        return IdentOutcome(ok=False, error=str(exc))
    ball = uncertainty_set(res.c_angle, config.radius)
    return IdentOutcome(
        ok=True, iterations=res.iterations, loss=res.final_loss,
        bypass_bdd=res.bypass_bdd, bypass_ae=res.bypass_ae,
        c_r=res.c_r, c_i=res.c_i, c_angle=res.c_angle,
        recovered_vm=res.recovered_state.vm, recovered_va=res.recovered_state.va,
        contains_zero=ball.contains_zero)


def _no_move_outcome(grid: GridModel, *, degenerate: bool, ok: bool = True,
                     error: str | None = None) -> MtdOutcome:
    return MtdOutcome(ok=ok, applied=False, error=error, degenerate=degenerate,
                      b=grid.b.copy(), omega_star=0.0, phi_star=0.0,
                      omega_floor=0.0, effectiveness=0.0, hiddenness=0.0,
                      best_effort=True, used_fallback=False,
                      ratio_avg=0.0, ratio_max=0.0)


def _mtd_step(grid, ident: IdentOutcome, sigma, lam_target,
              config: ScenarioConfig, rng) -> MtdOutcome:
    if not ident.ok:
        return _no_move_outcome(grid, degenerate=False, ok=False,
                                error="identification failed upstream")
    if ident.contains_zero:
        # Ball around the identified injection contains the origin: the
        # worst case over the ball is the null attack, so no setpoint can
        # certify a positive floor and the hiddenness-optimal move is no
        # move at all.  Short-circuit exactly instead of optimizing.
        return _no_move_outcome(grid, degenerate=True)
    try:
        state0 = StateVector(ident.recovered_vm * np.exp(1j * ident.recovered_va))
        inputs = build_inputs(grid, state0, sigma, ident.c_angle,
                              config.radius, lam_target)
        sp = run_mtd(inputs, config.mtd, rng=rng)
    except MtdError as exc:
        return _no_move_outcome(grid, degenerate=False, ok=False, error=str(exc))
    ratios = grid.reactance_ratios(sp.b)[grid.dfacts_mask]
    # best feasibility-stage setpoint, for before/after visibility comparisons
    good = [r for r in sp.runs if r.ok]
    b1 = hid1 = None
    if good:
        best = max(good, key=lambda r: r.omega)
        b1 = best.b
        hid1 = float(hiddenness_lambda(inputs, best.b))
    return MtdOutcome(ok=True, applied=True, b=sp.b,
                      omega_star=sp.omega_star, phi_star=sp.phi_star,
                      omega_floor=sp.omega_floor, effectiveness=sp.effectiveness,
                      hiddenness=sp.hiddenness, best_effort=sp.best_effort,
                      used_fallback=sp.used_fallback,
                      ratio_avg=float(ratios.mean()), ratio_max=float(ratios.max()),
                      b_stage_one=b1, hiddenness_stage_one=hid1)


def _post_step(grid0: GridModel, mtd: MtdOutcome, step, tau_full: float,
               config: ScenarioConfig, rng) -> PostOutcome:
    """Re-solve at the moved setpoint and let both sides re-check.

    The operator's test and the attacker's integrity check are estimated
    over fresh noise draws; draw 0 is the realized outcome.
    """
    try:
        grid_post = (apply_setpoint(grid0, mtd.b)
                     if mtd.applied and mtd.b is not None else grid0)
        state_post = solve_power_flow(grid_post, p_inj=step.p_inj, q_inj=step.q_inj)
    except (SetpointViolation, PowerFlowError) as exc:
        return PostOutcome(ok=False, error=str(exc))

    adm_post = grid_post.admittance()
    n_alarm = n_flag = 0
    alarm0 = gamma0 = flag0 = agamma0 = None
    draws = config.noise_draws
    try:
        for d in range(draws):
            mv = measure(grid_post, state_post, noise_scale=config.noise_scale,
                         seed=rng, adm=adm_post)
            if step.attacked:
                z_op, _ = inject(grid0, mv, step.attack)
            else:
                z_op = mv
            se = wls_estimate(grid_post, z_op, init=state_post, adm=adm_post)
            op_alarm = bdd_alarm(se.gamma, tau_full)
            # attacker sees the hijacked (clean) channel, checks stale model
            att_flag, att_gamma = attacker_verify(grid0, mv, tau_full)
            n_alarm += op_alarm
            n_flag += att_flag
            if d == 0:
                alarm0, gamma0 = op_alarm, se.gamma
                flag0, agamma0 = att_flag, att_gamma
    except EstimationError as exc:
        return PostOutcome(ok=False, error=str(exc))
    return PostOutcome(ok=True, alarm=bool(alarm0), gamma=float(gamma0),
                       attacker_flagged=bool(flag0), attacker_gamma=float(agamma0),
                       detect_rate=n_alarm / draws,
                       attacker_flag_rate=n_flag / draws, draws=draws)


def run_cycle(model, grid: GridModel, stream: Stream,
              config: ScenarioConfig) -> list:
    """Walk the stream, one EpisodeRecord per decision step.

    Component failures inside a triggered episode are recorded on the
    episode and the walk continues; only a malformed setup raises.
    """
    t_len = config.window
    if len(stream) < t_len:
        raise ValueError(f"stream of {len(stream)} steps cannot fill a window of {t_len}")
    p = stream[0].z.shape[0]
    tau_full = chi2_quantile(p - 2 * grid.n, config.alpha)
    lam_target = flow_lambda_target(grid, config.alpha, config.rho)

    records = []
    for t in range(t_len - 1, len(stream)):
        step = stream[t]
        timings: dict[str, float] = {}
        window = stream.window(t, t_len)

        t0 = time.perf_counter()
        alarm, score = model.detect(window)
        timings["detect"] = (time.perf_counter() - t0) * 1e3

        ident = mtd = post = None
        if alarm:
            t0 = time.perf_counter()
            ident = identify_step(model, window, grid, step.sigma, config)
            timings["identify"] = (time.perf_counter() - t0) * 1e3

            t0 = time.perf_counter()
            mtd = _mtd_step(grid, ident, step.sigma, lam_target, config,
                            rng=np.random.default_rng([config.seed, 3, t]))
            timings["mtd"] = (time.perf_counter() - t0) * 1e3

            t0 = time.perf_counter()
            post = _post_step(grid, mtd, step, tau_full, config,
                              rng=np.random.default_rng([config.seed, 4, t]))
            timings["post"] = (time.perf_counter() - t0) * 1e3
            if not (ident.ok and mtd.ok and post.ok):
                log.warning("step %d: partial episode (identify ok=%s, mtd ok=%s, post ok=%s)",
                            t, ident.ok, mtd.ok, post.ok)

        atk = step.attack
        records.append(EpisodeRecord(
            step=t, index=step.index, attacked=step.attacked,
            score=float(score), alarm=bool(alarm),
            attack_buses=() if atk is None else tuple(atk.buses),
            c_true_r=None if atk is None else atk.c_r,
            c_true_i=None if atk is None else atk.c_i,
            c_true_angle=step.c_angle,
            identification=ident, mtd=mtd, post=post,
            timings_ms=timings))
    return records
