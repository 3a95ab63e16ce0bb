"""Dataset synthesis and attack-campaign assembly.

A dataset is a chronological series of power-flow solutions under a load
profile, observed through noisy measurements.  A stream is a slice of the
dataset with an attack campaign overlaid, ready for the monitoring cycle.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..attack import AttackVector, angle_injection, inject, sample_attack
from ..grid import (GridModel, MeasurementVector, PowerFlowError, StateVector,
                    build_descriptors, case14, load_case, measure,
                    solve_power_flow, three_bus, two_bus)
from .config import ConfigError, ScenarioConfig

__all__ = [
    "Dataset",
    "Stream",
    "StreamStep",
    "load_grid",
    "synthetic_profile",
    "load_profile",
    "generate_dataset",
    "split_indices",
    "training_windows",
    "sliding_windows",
    "apply_campaign",
]

log = logging.getLogger("gridmtd.harness")

_BUNDLED = {"case14": case14, "two_bus": two_bus, "three_bus": three_bus}


def load_grid(config: ScenarioConfig, base_dir=None) -> GridModel:
    if config.case in _BUNDLED:
        return _BUNDLED[config.case]()
    return load_case(config.case_path(base_dir))


def synthetic_profile(cfg, rng: np.random.Generator) -> np.ndarray:
    """Daily sinusoid x weekly modulation + jitter, clipped at the floor."""
    t = np.arange(cfg.n_steps)
    day = cfg.day_amplitude * np.sin(2.0 * np.pi * t / cfg.day_period)
    week = cfg.week_amplitude * np.sin(2.0 * np.pi * t / (7.0 * cfg.day_period))
    jitter = cfg.jitter * rng.standard_normal(cfg.n_steps)
    return np.maximum(1.0 + day + week + jitter, cfg.floor)


def load_profile(path) -> np.ndarray:
    """One multiplier per line (or first CSV column)."""
    vals = np.loadtxt(path, delimiter=",", ndmin=2)[:, 0]
    if vals.size == 0 or np.any(vals <= 0):
        raise ConfigError(f"profile {path} must hold positive multipliers")
    return vals


@dataclass
class Dataset:
    """Measurement series with the ground truth behind it."""

    z: np.ndarray          # (n, P) noisy measurements
    sigma: np.ndarray      # (n, P) per-measurement noise scale
    vm: np.ndarray         # (n, B) true voltage magnitudes
    va: np.ndarray         # (n, B) true voltage angles
    p_inj: np.ndarray      # (n, B) active injections behind each step
    q_inj: np.ndarray      # (n, B)
    profile: np.ndarray    # (n,) load multipliers actually used
    skipped: list = field(default_factory=list)   # profile rows dropped (PF failure)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.z.shape[0]
        for name in ("sigma", "vm", "va", "p_inj", "q_inj", "profile"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} rows do not match z ({n})")

    def __len__(self) -> int:
        return self.z.shape[0]

    def state(self, i: int) -> StateVector:
        return StateVector(self.vm[i] * np.exp(1j * self.va[i]))

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        np.savez_compressed(
            path, z=self.z, sigma=self.sigma, vm=self.vm, va=self.va,
            p_inj=self.p_inj, q_inj=self.q_inj, profile=self.profile,
            skipped=np.asarray(self.skipped, dtype=int),
            meta=np.frombuffer(json.dumps(self.meta).encode(), dtype=np.uint8))

    @staticmethod
    def load(path) -> "Dataset":
        with np.load(path) as f:
            meta = json.loads(bytes(f["meta"].tobytes()).decode()) if "meta" in f else {}
            return Dataset(z=f["z"], sigma=f["sigma"], vm=f["vm"], va=f["va"],
                           p_inj=f["p_inj"], q_inj=f["q_inj"], profile=f["profile"],
                           skipped=f["skipped"].tolist(), meta=meta)


def generate_dataset(config: ScenarioConfig, base_dir=None) -> Dataset:
    """Scale base loads by the profile, solve, observe.  Deterministic per seed.

    Steps whose power flow fails to converge are skipped (logged, recorded
    in ``skipped``) rather than aborting the series.
    """
    grid = load_grid(config, base_dir)
    rng = np.random.default_rng([config.seed, 1])
    prof = config.profile
    if prof.path is not None:
        path = Path(prof.path)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        mult = load_profile(path)
    else:
        mult = synthetic_profile(prof, rng)

    p0, q0 = grid.base_injections()
    adm = grid.admittance()
    rows, sigmas, vms, vas, ps, qs, used = [], [], [], [], [], [], []
    skipped: list[int] = []
    state = None
    for i, s in enumerate(mult):
        p, q = p0 * s, q0 * s
        try:
            state = solve_power_flow(grid, p_inj=p, q_inj=q, init=state)
        except PowerFlowError as exc:
            log.warning("power flow failed at profile step %d (x%.3f): %s", i, s, exc)
            skipped.append(i)
            state = None    # cold-start the next attempt
            continue
        mv = measure(grid, state, noise_scale=config.noise_scale, seed=rng, adm=adm)
        rows.append(mv.z)
        sigmas.append(mv.sigma)
        vms.append(state.vm)
        vas.append(state.va)
        ps.append(p)
        qs.append(q)
        used.append(s)
    if not rows:
        raise ConfigError("every profile step failed to solve; check the case/profile")
    meta = {"case": config.case, "seed": config.seed,
            "noise_scale": config.noise_scale, "window": config.window,
            "n_source_steps": int(len(mult))}
    return Dataset(z=np.array(rows), sigma=np.array(sigmas),
                   vm=np.array(vms), va=np.array(vas),
                   p_inj=np.array(ps), q_inj=np.array(qs),
                   profile=np.array(used), skipped=skipped, meta=meta)


def split_indices(n: int, split) -> dict:
    """Chronological train/validation/test index ranges."""
    n_train = int(round(n * split[0]))
    n_val = int(round(n * split[1]))
    n_train = max(1, min(n_train, n - 2))
    n_val = max(1, min(n_val, n - n_train - 1))
    return {"train": np.arange(0, n_train),
            "val": np.arange(n_train, n_train + n_val),
            "test": np.arange(n_train + n_val, n)}


def training_windows(z: np.ndarray, window: int) -> np.ndarray:
    """Non-overlapping windows for model fitting."""
    n = (z.shape[0] // window) * window
    if n == 0:
        raise ValueError(f"{z.shape[0]} rows cannot fill a window of {window}")
    return z[:n].reshape(-1, window, z.shape[1])


def sliding_windows(z: np.ndarray, window: int) -> np.ndarray:
    """Stride-1 windows, one per decision step."""
    if z.shape[0] < window:
        raise ValueError(f"{z.shape[0]} rows cannot fill a window of {window}")
    return np.stack([z[i:i + window] for i in range(z.shape[0] - window + 1)])


@dataclass(frozen=True)
class StreamStep:
    """One observed timestep of the monitored stream, with its truth."""

    index: int                      # dataset row behind this step
    z: np.ndarray                   # what the operator receives (maybe tampered)
    sigma: np.ndarray
    p_inj: np.ndarray
    q_inj: np.ndarray
    attacked: bool
    attack: AttackVector | None = None
    c_angle: np.ndarray | None = None   # angle-space truth of the injection


@dataclass(frozen=True)
class Stream:
    steps: tuple

    def __len__(self) -> int:
        return len(self.steps)

    def __getitem__(self, i: int) -> StreamStep:
        return self.steps[i]

    @property
    def n_attacked(self) -> int:
        return sum(1 for s in self.steps if s.attacked)

    def window(self, t: int, length: int) -> np.ndarray:
        if t < length - 1:
            raise IndexError(f"step {t} has no full window of {length}")
        return np.stack([self.steps[i].z for i in range(t - length + 1, t + 1)])


def apply_campaign(grid: GridModel, dataset: Dataset, indices: np.ndarray,
                   config: ScenarioConfig,
                   rng: np.random.Generator | None = None) -> Stream:
    """Overlay the attack campaign on a dataset slice.

    Attacks are crafted against the pre-move model exactly as a stealthy
    adversary would: estimate the state from the hijacked measurement,
    overlay the state deviation, replace the measurement.  The first
    ``window`` steps stay clean so every attack faces a full history.
    """
    if rng is None:
        rng = np.random.default_rng([config.seed, 2])
    camp = config.campaign
    indices = np.asarray(indices, dtype=int)
    eligible = np.arange(config.window, len(indices))
    n_attack = int(round(camp.fraction * len(eligible)))
    if camp.fraction > 0 and len(eligible) == 0:
        log.warning("stream too short for any attack (window %d)", config.window)
    if n_attack > 0:
        if camp.block:
            chosen = set(eligible[len(eligible) - n_attack:].tolist())
        else:
            chosen = set(rng.choice(eligible, size=n_attack, replace=False).tolist())
    else:
        chosen = set()

    descriptors = build_descriptors(grid)
    steps = []
    for pos, idx in enumerate(indices):
        z = dataset.z[idx]
        sig = dataset.sigma[idx]
        if pos in chosen:
            k = int(rng.integers(camp.k_min, camp.k_max + 1))
            atk = sample_attack(grid, dataset.state(idx), rng, k, tuple(camp.band))
            mv = MeasurementVector(z.copy(), sig.copy(), descriptors)
            tampered, v_hat = inject(grid, mv, atk)
            steps.append(StreamStep(
                index=int(idx), z=tampered.z, sigma=sig,
                p_inj=dataset.p_inj[idx], q_inj=dataset.q_inj[idx],
                attacked=True, attack=atk,
                c_angle=angle_injection(grid, v_hat, atk.c_r, atk.c_i)))
        else:
            steps.append(StreamStep(
                index=int(idx), z=z, sigma=sig,
                p_inj=dataset.p_inj[idx], q_inj=dataset.q_inj[idx],
                attacked=False))
    return Stream(steps=tuple(steps))
