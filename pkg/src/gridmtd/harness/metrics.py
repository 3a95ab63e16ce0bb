"""Metric computation over episode records, ROC sweeps, CSV output.

Rates whose denominator is empty come back as None — undefined, never
conflated with zero.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..grid import GridModel

__all__ = [
    "RocCurve",
    "roc_curve",
    "MetricsReport",
    "evaluate",
    "corner_setpoint",
    "write_metrics_csv",
    "write_roc_csv",
]


@dataclass(frozen=True)
class RocCurve:
    thresholds: np.ndarray
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float
    operating: dict | None = None   # point at the model's calibrated threshold

    def __post_init__(self):
        if not (len(self.thresholds) == len(self.fpr) == len(self.tpr)):
            raise ValueError("curve arrays must align")


def roc_curve(model, windows: np.ndarray, labels, thresholds=None) -> RocCurve:
    """Threshold sweep of the window scorer.

    ``labels`` marks attacked windows.  The default grid sweeps every
    observed score plus open endpoints, so the staircase is exact.  The
    model's own calibrated threshold becomes the highlighted operating
    point when it is set.
    """
    labels = np.asarray(labels, dtype=bool)
    if windows.shape[0] != labels.shape[0]:
        raise ValueError(f"{windows.shape[0]} windows vs {labels.shape[0]} labels")
    if labels.all() or not labels.any():
        raise ValueError("ROC needs both attacked and clean windows")
    scores = np.array([model.reconstruction_loss(w) for w in windows])
    if thresholds is None:
        thresholds = np.concatenate(([-np.inf], np.unique(scores), [np.inf]))
    else:
        thresholds = np.sort(np.asarray(thresholds, dtype=float))

    n_pos = int(labels.sum())
    n_neg = int((~labels).sum())
    tpr = np.array([(scores[labels] > t).sum() / n_pos for t in thresholds])
    fpr = np.array([(scores[~labels] > t).sum() / n_neg for t in thresholds])
    order = np.argsort(fpr, kind="stable")
    auc = float(np.trapz(tpr[order], fpr[order]))

    operating = None
    if model.tau is not None:
        operating = {
            "threshold": float(model.tau),
            "fpr": float((scores[~labels] > model.tau).sum() / n_neg),
            "tpr": float((scores[labels] > model.tau).sum() / n_pos),
        }
    return RocCurve(thresholds=thresholds, fpr=fpr, tpr=tpr, auc=auc,
                    operating=operating)


def corner_setpoint(grid: GridModel) -> np.ndarray:
    """Always-on conservative baseline: every D-FACTS branch at a box corner,
    alternating sides so the moves do not cancel along paths."""
    b = grid.b.copy()
    take_lo = np.arange(grid.m) % 2 == 0
    b[grid.dfacts_mask & take_lo] = grid.b_lo[grid.dfacts_mask & take_lo]
    b[grid.dfacts_mask & ~take_lo] = grid.b_hi[grid.dfacts_mask & ~take_lo]
    return b


def _rate(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def _mean(vals) -> float | None:
    vals = [v for v in vals if v is not None]
    return None if not vals else float(np.mean(vals))


@dataclass(frozen=True)
class MetricsReport:
    """Aggregates over one episode log.  None = undefined (empty denominator)."""

    n_steps: int
    n_attacked: int
    n_triggers: int
    trigger_rate: float
    detector_tpr: float | None          # alarms among attacked steps
    detector_fpr: float | None          # alarms among clean steps
    adp: float | None                   # attacks caught end-to-end, realized draw
    adp_counts: tuple = (0, 0)
    adp_noise_rate: float | None = None  # same, averaged over noise resamples
    dhp: float | None = None            # triggers the attacker did not notice
    dhp_counts: tuple = (0, 0)
    dhp_noise_rate: float | None = None
    end_to_end_fpr: float | None = None  # post-gate alarm rate among clean triggers
    end_to_end_fpr_realized: float | None = None
    fpr_counts: tuple = (0, 0)
    ratio_avg: float | None = None      # mean D-FACTS reactance move when applied
    ratio_max: float | None = None
    baseline_ratio: float | None = None  # corner-scheme comparison point
    failures: dict = field(default_factory=dict)

    def rows(self):
        """(metric, value, numerator, denominator) rows for the CSV table."""
        def r(name, value, counts=None):
            num, den = counts if counts else ("", "")
            return (name, "" if value is None else f"{value:.6f}", num, den)
        return [
            r("n_steps", self.n_steps), r("n_attacked", self.n_attacked),
            r("n_triggers", self.n_triggers),
            r("trigger_rate", self.trigger_rate, (self.n_triggers, self.n_steps)),
            r("detector_tpr", self.detector_tpr),
            r("detector_fpr", self.detector_fpr),
            r("adp", self.adp, self.adp_counts),
            r("adp_noise_rate", self.adp_noise_rate),
            r("dhp", self.dhp, self.dhp_counts),
            r("dhp_noise_rate", self.dhp_noise_rate),
            r("end_to_end_fpr", self.end_to_end_fpr, self.fpr_counts),
            r("end_to_end_fpr_realized", self.end_to_end_fpr_realized),
            r("ratio_avg", self.ratio_avg),
            r("ratio_max", self.ratio_max),
            r("baseline_ratio", self.baseline_ratio),
        ]


def evaluate(records, grid: GridModel | None = None) -> MetricsReport:
    """Fold an episode log into the headline rates.

    ``grid`` adds the corner-baseline reactance ratio for the economy
    comparison; metrics that need no grid work without one.
    """
    records = list(records)
    if not records:
        raise ValueError("cannot evaluate an empty episode log")
    n = len(records)
    attacked = [r for r in records if r.attacked]
    clean = [r for r in records if not r.attacked]
    triggers = [r for r in records if r.alarm]

    # end-to-end detection: alarm fired AND the post-move residual test held
    def caught(r):
        return r.alarm and r.post is not None and r.post.ok and r.post.alarm

    adp_num = sum(1 for r in attacked if caught(r))
    dhp_num = sum(1 for r in triggers
                  if r.post is not None and r.post.ok and not r.post.attacker_flagged)
    dhp_den = sum(1 for r in triggers if r.post is not None and r.post.ok)

    clean_triggers = [r for r in clean
                      if r.alarm and r.post is not None and r.post.ok]
    e2e_num = sum(1 for r in clean_triggers if r.post.alarm)

    applied = [r.mtd for r in triggers
               if r.mtd is not None and r.mtd.ok and r.mtd.applied]

    failures = {
        "identify": sum(1 for r in triggers
                        if r.identification is not None and not r.identification.ok),
        "mtd": sum(1 for r in triggers if r.mtd is not None and not r.mtd.ok),
        "post": sum(1 for r in triggers if r.post is not None and not r.post.ok),
    }

    return MetricsReport(
        n_steps=n, n_attacked=len(attacked), n_triggers=len(triggers),
        trigger_rate=len(triggers) / n,
        detector_tpr=_rate(sum(1 for r in attacked if r.alarm), len(attacked)),
        detector_fpr=_rate(sum(1 for r in clean if r.alarm), len(clean)),
        adp=_rate(adp_num, len(attacked)), adp_counts=(adp_num, len(attacked)),
        adp_noise_rate=_mean([r.post.detect_rate for r in attacked
                              if r.post is not None and r.post.ok]),
        dhp=_rate(dhp_num, dhp_den), dhp_counts=(dhp_num, dhp_den),
        dhp_noise_rate=_mean([1.0 - r.post.attacker_flag_rate for r in triggers
                              if r.post is not None and r.post.ok]),
        end_to_end_fpr=_mean([r.post.detect_rate for r in clean_triggers]),
        end_to_end_fpr_realized=_rate(e2e_num, len(clean_triggers)),
        fpr_counts=(e2e_num, len(clean_triggers)),
        ratio_avg=_mean([m.ratio_avg for m in applied]),
        ratio_max=None if not applied else float(max(m.ratio_max for m in applied)),
        baseline_ratio=None if grid is None else float(
            grid.reactance_ratios(corner_setpoint(grid))[grid.dfacts_mask].mean()),
        failures=failures)


def write_metrics_csv(report: MetricsReport, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value", "numerator", "denominator"])
        w.writerows(report.rows())


def write_roc_csv(curve: RocCurve, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, tp in zip(curve.thresholds, curve.fpr, curve.tpr):
            w.writerow([f"{t:.8g}", f"{f:.6f}", f"{tp:.6f}"])
