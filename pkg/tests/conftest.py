"""Shared fixtures: grids, solved states, a small trained detector, and
one full campaign pipeline reused by the acceptance criteria."""

from __future__ import annotations

import warnings

import numpy as np
import pytest

from gridmtd.detector import TrainingConfig, calibrate_threshold, train
from gridmtd.grid import case14, evaluate_h, measure, solve_power_flow, three_bus, two_bus
from gridmtd.grid.measurement import sigma_rule
from gridmtd.harness import (apply_campaign, generate_dataset, load_grid,
                             run_cycle, scenario_from_dict, sliding_windows,
                             split_indices, training_windows)

# one pass/fail line per acceptance criterion, emitted at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


def record_criterion(num: int, name: str, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES.append(
        f"criterion {num:2d} ({name}): {'PASS' if passed else 'FAIL'} — {detail}")


@pytest.fixture(scope="session")
def grid14():
    return case14()


@pytest.fixture(scope="session")
def state14(grid14):
    return solve_power_flow(grid14)


@pytest.fixture(scope="session")
def sigma14(grid14, state14):
    return sigma_rule(evaluate_h(grid14, state14))


@pytest.fixture(scope="session")
def grid2():
    return two_bus()


@pytest.fixture(scope="session")
def grid3():
    return three_bus()


def fd_gradient(f, x, h=1e-6):
    """Central-difference gradient of a scalar function of a flat array."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy(); xp.flat[i] += h
        xm = x.copy(); xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2 * h)
    return g


def fd_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian of a vector function of a flat array."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        xp = x.copy(); xp.flat[i] += h
        xm = x.copy(); xm.flat[i] -= h
        cols.append((f(xp) - f(xm)) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.fixture(scope="session")
def tiny_model(grid3):
    """Small trained detector on the three-bus system, for mechanics tests."""
    rng = np.random.default_rng(5)
    scales = 1.0 + 0.08 * np.sin(np.linspace(0, 6 * np.pi, 120)) \
        + 0.02 * rng.standard_normal(120)
    p0, q0 = grid3.base_injections()
    rows = []
    state = None
    for s in scales:
        state = solve_power_flow(grid3, p_inj=p0 * s, q_inj=q0 * s, init=state)
        rows.append(measure(grid3, state, noise_scale=0.02, seed=rng).z)
    rows = np.array(rows)
    windows = np.stack([rows[i:i + 4] for i in range(len(rows) - 3)])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        model, hist = train(windows[:80], TrainingConfig(epochs=60, batch_size=16, seed=2),
                            val_windows=windows[80:])
        calibrate_threshold(model, windows[80:], target_fpr=0.08)
    return model


def _pipeline_config(fraction: float, seed: int) -> dict:
    return {
        "scenario": {"seed": seed, "window": 5, "noise_draws": 150,
                     "target_fpr": 0.08, "alpha": 0.02, "rho": 0.98,
                     "radius": 0.01},
        "profile": {"n_steps": 240, "day_period": 96},
        "campaign": {"fraction": fraction, "k_min": 1, "k_max": 3,
                     "band": [0.1, 0.3]},
        "training": {"epochs": 60, "batch_size": 16},
        "identify": {"ite_max": 500},
        "mtd": {"n_runs": 2, "ite_one": 30, "ite_two": 30, "tol_one": 0.5,
                "tol_two": 2.0},
    }


@pytest.fixture(scope="session")
def pipeline():
    """Dataset -> trained detector -> attacked + clean campaign cycles.

    One shared end-to-end run; the acceptance criteria read different
    slices of it.  Kept desk-scale so the whole session stays tractable.
    """
    cfg = scenario_from_dict(_pipeline_config(fraction=0.3, seed=11))
    ds = generate_dataset(cfg)
    idx = split_indices(len(ds), cfg.split)
    model, _ = train(training_windows(ds.z[idx["train"]], cfg.window),
                     cfg.training,
                     val_windows=training_windows(ds.z[idx["val"]], cfg.window))
    calibrate_threshold(model, sliding_windows(ds.z[idx["val"]], cfg.window),
                        target_fpr=cfg.target_fpr)
    grid = load_grid(cfg)

    stream = apply_campaign(grid, ds, idx["test"], cfg)
    records = run_cycle(model, grid, stream, cfg)

    clean_cfg = scenario_from_dict(_pipeline_config(fraction=0.0, seed=11))
    clean_stream = apply_campaign(grid, ds, idx["test"], clean_cfg)
    clean_records = run_cycle(model, grid, clean_stream, clean_cfg)

    return {"config": cfg, "clean_config": clean_cfg, "dataset": ds,
            "splits": idx, "model": model, "grid": grid,
            "stream": stream, "records": records,
            "clean_stream": clean_stream, "clean_records": clean_records}
