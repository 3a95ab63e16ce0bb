"""Workflow implementations behind the service endpoints.

Each function loads its input artifacts from the run directory, does one
stage of the study, writes its output artifacts there, and returns a
JSON-able summary.  Raising ConfigError marks a caller mistake; the
component error types mark a pipeline stage that failed.
"""

from __future__ import annotations

import csv
import json
import time
from pathlib import Path

import numpy as np

from ..detector import LstmAeModel, TrainingError, calibrate_threshold, train
from ..estimation import EstimationError
from ..grid import CaseError, PowerFlowError, SetpointViolation, StateVector
from ..identifier import IdentificationError
from ..mtd import MtdError, build_inputs, run_mtd
from ..harness import (ConfigError, Dataset, ScenarioConfig, apply_campaign,
                       corner_setpoint, evaluate, flow_lambda_target,
                       generate_dataset, load_grid, plot_metric_bars, plot_roc,
                       read_episodes, roc_curve, run_cycle, sliding_windows,
                       split_indices, training_windows, write_episodes,
                       write_metrics_csv, write_roc_csv)
from ..harness.cycle import IdentOutcome, identify_step

__all__ = [
    "COMPONENT_ERRORS",
    "ComponentError",
    "gen_data",
    "train_model",
    "calibrate_model",
    "detect_stream",
    "identify_once",
    "mtd_dispatch",
    "cycle_run",
    "evaluate_records",
    "roc_sweep",
    "report_build",
]


class ComponentError(RuntimeError):
    """A pipeline stage failed on valid inputs."""


COMPONENT_ERRORS = (ComponentError, TrainingError, IdentificationError,
                    MtdError, EstimationError, PowerFlowError,
                    SetpointViolation, CaseError)


def _need(path: Path, hint: str) -> Path:
    if not Path(path).exists():
        raise ConfigError(f"{path} not found; {hint}")
    return Path(path)


def _load_dataset(cfg: ScenarioConfig, out_dir) -> Dataset:
    return Dataset.load(_need(cfg.artifact(out_dir, "dataset"),
                              "run gen-data first"))


def _load_model(cfg: ScenarioConfig, out_dir) -> LstmAeModel:
    return LstmAeModel.load(_need(cfg.artifact(out_dir, "model"),
                                  "run train first"))


def _segments(cfg: ScenarioConfig, ds: Dataset) -> dict:
    return split_indices(len(ds), cfg.split)


def _campaign_stream(cfg: ScenarioConfig, ds: Dataset, grid):
    idx = _segments(cfg, ds)["test"]
    if len(idx) < cfg.window:
        raise ConfigError(
            f"test segment of {len(idx)} rows cannot fill a window of {cfg.window}")
    return apply_campaign(grid, ds, idx, cfg)


def gen_data(cfg: ScenarioConfig, base_dir, out_dir) -> dict:
    ds = generate_dataset(cfg, base_dir)
    path = cfg.artifact(out_dir, "dataset")
    ds.save(path)
    return {"dataset": str(path), "n_steps": len(ds),
            "n_skipped": len(ds.skipped), "case": cfg.case}


def train_model(cfg: ScenarioConfig, base_dir, out_dir) -> dict:
    ds = _load_dataset(cfg, out_dir)
    idx = _segments(cfg, ds)
    tw = training_windows(ds.z[idx["train"]], cfg.window)
    vw = training_windows(ds.z[idx["val"]], cfg.window)
    model, hist = train(tw, cfg.training, val_windows=vw)

    model_path = cfg.artifact(out_dir, "model")
    Path(model_path).parent.mkdir(parents=True, exist_ok=True)
    model.save(model_path)
    hist_path = cfg.artifact(out_dir, "history")
    with open(hist_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_loss"])
        for i, (tl, vl) in enumerate(zip(hist.train_loss, hist.val_loss), start=1):
            w.writerow([i, f"{tl:.8f}", f"{vl:.8f}"])
    return {"model": str(model_path), "history": str(hist_path),
            "epochs_run": hist.stopped_epoch, "best_epoch": hist.best_epoch,
            "final_train_loss": hist.train_loss[-1],
            "final_val_loss": hist.val_loss[-1]}


def calibrate_model(cfg: ScenarioConfig, base_dir, out_dir) -> dict:
    ds = _load_dataset(cfg, out_dir)
    model = _load_model(cfg, out_dir)
    idx = _segments(cfg, ds)
    vw = sliding_windows(ds.z[idx["val"]], cfg.window)
    tau = calibrate_threshold(model, vw, target_fpr=cfg.target_fpr)
    achieved = float(np.mean([model.reconstruction_loss(w) > tau for w in vw]))

    model_path = cfg.artifact(out_dir, "model")
    model.save(model_path)
    cal_path = cfg.artifact(out_dir, "calibration")
    doc = {"tau": tau, "target_fpr": cfg.target_fpr, "achieved_fpr": achieved,
           "n_windows": int(vw.shape[0])}
    Path(cal_path).parent.mkdir(parents=True, exist_ok=True)
    Path(cal_path).write_text(json.dumps(doc, indent=2))
    return {"model": str(model_path), "calibration": str(cal_path), **doc}


def detect_stream(cfg: ScenarioConfig, base_dir, out_dir) -> dict:
    ds = _load_dataset(cfg, out_dir)
    model = _load_model(cfg, out_dir)
    grid = load_grid(cfg, base_dir)
    stream = _campaign_stream(cfg, ds, grid)

    rows = []
    n_alarms = 0
    for t in range(cfg.window - 1, len(stream)):
        alarm, score = model.detect(stream.window(t, cfg.window))
        n_alarms += alarm
        rows.append((t, stream[t].index, stream[t].attacked, score, alarm))
    path = cfg.artifact(out_dir, "detections")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "dataset_index", "attacked", "score", "alarm"])
        for t, di, atk, score, alarm in rows:
            w.writerow([t, di, int(atk), f"{score:.8f}", int(alarm)])
    return {"detections": str(path), "n_windows": len(rows),
            "n_alarms": n_alarms,
            "alarm_rate": n_alarms / len(rows) if rows else 0.0,
            "n_attacked": stream.n_attacked}


def identify_once(cfg: ScenarioConfig, base_dir, out_dir,
                  step: int | None = None) -> dict:
    """Identification at one alarmed stream step (default: first alarm)."""
    ds = _load_dataset(cfg, out_dir)
    model = _load_model(cfg, out_dir)
    grid = load_grid(cfg, base_dir)
    stream = _campaign_stream(cfg, ds, grid)

    if step is None:
        step = next((t for t in range(cfg.window - 1, len(stream))
                     if model.detect(stream.window(t, cfg.window))[0]), None)
        if step is None:
            raise ComponentError("no window in the stream trips the detector")
    elif not (cfg.window - 1 <= step < len(stream)):
        raise ConfigError(f"step must be in [{cfg.window - 1}, {len(stream) - 1}]")

    s = stream[step]
    outcome = identify_step(model, stream.window(step, cfg.window),
                            grid, s.sigma, cfg)
    doc = {
        "step": int(step), "dataset_index": s.index, "attacked": s.attacked,
        "c_true_angle": None if s.c_angle is None else s.c_angle.tolist(),
        "sigma": s.sigma.tolist(),
        "lambda_target": flow_lambda_target(grid, cfg.alpha, cfg.rho),
        "outcome": outcome.to_dict(),
    }
    path = cfg.artifact(out_dir, "identification")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(doc, indent=2))
    center = outcome.c_angle
    return {"identification": str(path), "step": int(step),
            "dataset_index": s.index, "attacked": s.attacked,
            "ok": outcome.ok, "iterations": outcome.iterations,
            "loss": outcome.loss, "bypass_bdd": outcome.bypass_bdd,
            "bypass_ae": outcome.bypass_ae,
            "contains_zero": outcome.contains_zero,
            "center_norm": None if center is None else float(np.linalg.norm(center)),
            "error": outcome.error}


def mtd_dispatch(cfg: ScenarioConfig, base_dir, out_dir) -> dict:
    """Certified susceptance dispatch for the identified injection."""
    grid = load_grid(cfg, base_dir)
    ident_path = _need(cfg.artifact(out_dir, "identification"), "run identify first")
    doc = json.loads(Path(ident_path).read_text())
    outcome = IdentOutcome.from_dict(doc["outcome"])
    if not outcome.ok:
        raise ComponentError(f"stored identification failed: {outcome.error}")

    path = cfg.artifact(out_dir, "mtd")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    if outcome.contains_zero:
        # ball swallowed the origin: certified floor is zero, stay at nominal
        out = {"degenerate": True, "applied": False, "b": grid.b.tolist(),
               "omega_star": 0.0, "phi_star": 0.0, "omega_floor": 0.0,
               "effectiveness": 0.0, "hiddenness": 0.0,
               "best_effort": True, "used_fallback": False,
               "ratio_avg": 0.0, "ratio_max": 0.0, "runs": [], "provenance": []}
        Path(path).write_text(json.dumps(out, indent=2))
        return {"mtd": str(path), **{k: out[k] for k in
                ("degenerate", "applied", "omega_star", "phi_star", "omega_floor",
                 "effectiveness", "hiddenness", "best_effort", "used_fallback",
                 "ratio_avg", "ratio_max")}}

    state0 = StateVector(outcome.recovered_vm * np.exp(1j * outcome.recovered_va))
    sigma = np.asarray(doc["sigma"], dtype=float)
    inputs = build_inputs(grid, state0, sigma, outcome.c_angle,
                          cfg.radius, doc["lambda_target"])
    sp = run_mtd(inputs, cfg.mtd,
                 rng=np.random.default_rng([cfg.seed, 3, int(doc["step"])]))
    ratios = grid.reactance_ratios(sp.b)[grid.dfacts_mask]
    out = {"degenerate": False, "applied": True, "b": sp.b.tolist(),
           "omega_star": sp.omega_star, "phi_star": sp.phi_star,
           "omega_floor": sp.omega_floor, "effectiveness": sp.effectiveness,
           "hiddenness": sp.hiddenness, "best_effort": sp.best_effort,
           "used_fallback": sp.used_fallback,
           "ratio_avg": float(ratios.mean()), "ratio_max": float(ratios.max()),
           "runs": [{"run": r.run, "omega": r.omega, "iterations": r.iterations,
                     "status": r.status} for r in sp.runs],
           "provenance": list(sp.provenance)}
    Path(path).write_text(json.dumps(out, indent=2))
    return {"mtd": str(path), **{k: out[k] for k in
            ("degenerate", "applied", "omega_star", "phi_star", "omega_floor",
             "effectiveness", "hiddenness", "best_effort", "used_fallback",
             "ratio_avg", "ratio_max")}}


def cycle_run(cfg: ScenarioConfig, base_dir, out_dir) -> dict:
    ds = _load_dataset(cfg, out_dir)
    model = _load_model(cfg, out_dir)
    grid = load_grid(cfg, base_dir)
    stream = _campaign_stream(cfg, ds, grid)

    t0 = time.perf_counter()
    records = run_cycle(model, grid, stream, cfg)
    wall = time.perf_counter() - t0
    path = cfg.artifact(out_dir, "episodes")
    write_episodes(records, path)
    n_fail = sum(1 for r in records if r.alarm and not (
        r.identification.ok and r.mtd.ok and r.post.ok))
    return {"episodes": str(path), "n_steps": len(records),
            "n_attacked": sum(1 for r in records if r.attacked),
            "n_triggers": sum(1 for r in records if r.alarm),
            "n_failures": n_fail, "wall_s": wall}


def evaluate_records(cfg: ScenarioConfig, base_dir, out_dir) -> dict:
    path = _need(cfg.artifact(out_dir, "episodes"), "run run-cycle first")
    records = read_episodes(path)
    if not records:
        raise ComponentError(f"episode log {path} is empty")
    grid = load_grid(cfg, base_dir)
    report = evaluate(records, grid)

    metrics_path = cfg.artifact(out_dir, "metrics")
    write_metrics_csv(report, metrics_path)
    plots = plot_metric_bars(report, Path(out_dir) / "metrics_bars")
    return {"metrics": str(metrics_path), "plots": [str(p) for p in plots],
            "n_steps": report.n_steps, "n_triggers": report.n_triggers,
            "trigger_rate": report.trigger_rate,
            "adp": report.adp, "dhp": report.dhp,
            "end_to_end_fpr": report.end_to_end_fpr,
            "detector_fpr": report.detector_fpr,
            "detector_tpr": report.detector_tpr,
            "ratio_avg": report.ratio_avg,
            "baseline_ratio": report.baseline_ratio}


def roc_sweep(cfg: ScenarioConfig, base_dir, out_dir) -> dict:
    ds = _load_dataset(cfg, out_dir)
    model = _load_model(cfg, out_dir)
    grid = load_grid(cfg, base_dir)
    stream = _campaign_stream(cfg, ds, grid)

    zs = np.stack([s.z for s in stream.steps])
    wins = sliding_windows(zs, cfg.window)
    labels = np.array([stream[i + cfg.window - 1].attacked
                       for i in range(wins.shape[0])])
    if not labels.any():
        raise ComponentError("campaign produced no attacked windows; "
                             "raise campaign.fraction")
    curve = roc_curve(model, wins, labels)
    roc_path = cfg.artifact(out_dir, "roc")
    write_roc_csv(curve, roc_path)
    plots = plot_roc(curve, Path(out_dir) / "roc")
    return {"roc": str(roc_path), "plots": [str(p) for p in plots],
            "auc": curve.auc, "n_windows": int(wins.shape[0]),
            "operating": curve.operating}


def report_build(cfg: ScenarioConfig, base_dir, out_dir) -> dict:
    """Single markdown page tying together whatever artifacts exist."""
    out_dir = Path(out_dir)
    sections = []
    lines = ["# Run report", "",
             f"- case: `{cfg.case}`",
             f"- seed: {cfg.seed}",
             f"- noise scale: {cfg.noise_scale}",
             f"- window: {cfg.window}",
             f"- residual false-alarm budget: {cfg.alpha}",
             f"- target detection probability: {cfg.rho}",
             f"- uncertainty radius: {cfg.radius}", ""]

    cal = cfg.artifact(out_dir, "calibration")
    if cal.exists():
        doc = json.loads(cal.read_text())
        sections.append("calibration")
        lines += ["## Detector calibration", "",
                  f"- threshold: {doc['tau']:.6f}",
                  f"- target FPR {doc['target_fpr']:.1%}, achieved "
                  f"{doc['achieved_fpr']:.1%} on {doc['n_windows']} windows", ""]

    metrics = cfg.artifact(out_dir, "metrics")
    if metrics.exists():
        sections.append("metrics")
        lines += ["## Outcome metrics", "",
                  "| metric | value | num | den |", "| --- | --- | --- | --- |"]
        with open(metrics) as fh:
            for row in list(csv.reader(fh))[1:]:
                lines.append("| " + " | ".join(str(c) for c in row) + " |")
        lines.append("")
        if (out_dir / "metrics_bars.svg").exists():
            lines += ["![metrics](metrics_bars.svg)", ""]

    roc = cfg.artifact(out_dir, "roc")
    if roc.exists():
        sections.append("roc")
        lines += ["## Detector ROC", ""]
        if (out_dir / "roc.svg").exists():
            lines += ["![roc](roc.svg)", ""]
        lines += [f"- sweep table: `{roc.name}`", ""]

    mtd = cfg.artifact(out_dir, "mtd")
    if mtd.exists():
        doc = json.loads(mtd.read_text())
        sections.append("mtd")
        lines += ["## Dispatch certificates", ""]
        if doc.get("degenerate"):
            lines += ["- uncertainty ball contains the origin: no move dispatched", ""]
        else:
            lines += [
                f"- certified worst-case detectability: {doc['omega_star']:.4f} "
                f"(floor {doc['omega_floor']:.4f})",
                f"- attacker-visibility objective: {doc['phi_star']:.6f}",
                f"- verified effectiveness {doc['effectiveness']:.4f}, "
                f"hiddenness {doc['hiddenness']:.6f}",
                f"- average reactance move: {doc['ratio_avg']:.2%}", ""]

    if not sections:
        raise ConfigError(f"no artifacts found under {out_dir}; "
                          "run the workflow commands first")
    path = cfg.artifact(out_dir, "report")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text("\n".join(lines))
    return {"report": str(path), "sections": sections}
