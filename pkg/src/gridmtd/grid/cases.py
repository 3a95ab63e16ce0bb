"""Bundled test networks and the tabular-to-document converter.

The 14-bus network ships as both raw tables (the classic row format:
bus rows with net demand in MW/MVAr, branch rows with per-unit series
impedance and off-nominal taps) and a versioned JSON document generated
from them.  Generation is folded into negative net demand; shunt
elements and line charging are dropped (out of scope for this model).
Every branch carries a controllable-susceptance device with a 50%
reactance perturbation band.
"""

from __future__ import annotations

import json
from importlib import resources

from .model import GridModel, parse_case

DEFAULT_ETA = 0.5

# id, type, vm setpoint, net Pd [MW], net Qd [MVAr]
_CASE14_BUSES = [
    (1, "ref", 1.060, 0.0, 0.0),
    (2, "pv", 1.045, 21.7 - 40.0, 12.7),
    (3, "pv", 1.010, 94.2, 19.0),
    (4, "pq", 1.0, 47.8, -3.9),
    (5, "pq", 1.0, 7.6, 1.6),
    (6, "pv", 1.070, 11.2, 7.5),
    (7, "pq", 1.0, 0.0, 0.0),
    (8, "pv", 1.090, 0.0, 0.0),
    (9, "pq", 1.0, 29.5, 16.6),
    (10, "pq", 1.0, 9.0, 5.8),
    (11, "pq", 1.0, 3.5, 1.8),
    (12, "pq", 1.0, 6.1, 1.6),
    (13, "pq", 1.0, 13.5, 5.8),
    (14, "pq", 1.0, 14.9, 5.0),
]

# from, to, r [p.u.], x [p.u.], tap
_CASE14_BRANCHES = [
    (1, 2, 0.01938, 0.05917, 1.0),
    (1, 5, 0.05403, 0.22304, 1.0),
    (2, 3, 0.04699, 0.19797, 1.0),
    (2, 4, 0.05811, 0.17632, 1.0),
    (2, 5, 0.05695, 0.17388, 1.0),
    (3, 4, 0.06701, 0.17103, 1.0),
    (4, 5, 0.01335, 0.04211, 1.0),
    (4, 7, 0.0, 0.20912, 0.978),
    (4, 9, 0.0, 0.55618, 0.969),
    (5, 6, 0.0, 0.25202, 0.932),
    (6, 11, 0.09498, 0.19890, 1.0),
    (6, 12, 0.12291, 0.25581, 1.0),
    (6, 13, 0.06615, 0.13027, 1.0),
    (7, 8, 0.0, 0.17615, 1.0),
    (7, 9, 0.0, 0.11001, 1.0),
    (9, 10, 0.03181, 0.08450, 1.0),
    (9, 14, 0.12711, 0.27038, 1.0),
    (10, 11, 0.08205, 0.19207, 1.0),
    (12, 13, 0.22092, 0.19988, 1.0),
    (13, 14, 0.17093, 0.34802, 1.0),
]


def tables_to_document(bus_rows, branch_rows, base_mva: float = 100.0,
                       eta: float = DEFAULT_ETA) -> dict:
    """Convert classic tabular rows into the versioned case document."""
    return {
        "version": 1,
        "baseMVA": base_mva,
        "buses": [
            {"id": bid, "type": btype, "vm": vm, "va": 0.0, "pd": pd, "qd": qd}
            for bid, btype, vm, pd, qd in bus_rows
        ],
        "branches": [
            {"from": f, "to": t, "r": r, "x": x, "tap": tap,
             "dfacts": True, "eta": eta}
            for f, t, r, x, tap in branch_rows
        ],
    }


def case14_document(eta: float = DEFAULT_ETA) -> dict:
    return tables_to_document(_CASE14_BUSES, _CASE14_BRANCHES, 100.0, eta)


def case14(eta: float = DEFAULT_ETA) -> GridModel:
    """The bundled 14-bus network (13 + reference buses, 20 branches)."""
    return parse_case(case14_document(eta))


def two_bus() -> GridModel:
    """Smallest connected network: one branch, unit tap, no device."""
    doc = {
        "version": 1,
        "baseMVA": 100.0,
        "buses": [
            {"id": 1, "type": "ref", "vm": 1.0, "va": 0.0, "pd": 0.0, "qd": 0.0},
            {"id": 2, "type": "pq", "vm": 1.0, "va": 0.0, "pd": 20.0, "qd": 5.0},
        ],
        "branches": [
            {"from": 1, "to": 2, "r": 0.02, "x": 0.1, "tap": 1.0,
             "dfacts": False, "eta": 0.0},
        ],
    }
    return parse_case(doc)


def three_bus() -> GridModel:
    """Triangle network with one device branch; handy for hand checks."""
    doc = {
        "version": 1,
        "baseMVA": 100.0,
        "buses": [
            {"id": 1, "type": "ref", "vm": 1.02, "va": 0.0, "pd": 0.0, "qd": 0.0},
            {"id": 2, "type": "pq", "vm": 1.0, "va": 0.0, "pd": 30.0, "qd": 10.0},
            {"id": 3, "type": "pq", "vm": 1.0, "va": 0.0, "pd": 25.0, "qd": 8.0},
        ],
        "branches": [
            {"from": 1, "to": 2, "r": 0.01, "x": 0.06, "tap": 1.0,
             "dfacts": True, "eta": 0.5},
            {"from": 1, "to": 3, "r": 0.02, "x": 0.09, "tap": 1.0,
             "dfacts": False, "eta": 0.0},
            {"from": 2, "to": 3, "r": 0.015, "x": 0.08, "tap": 1.0,
             "dfacts": True, "eta": 0.5},
        ],
    }
    return parse_case(doc)


def bundled_case14() -> GridModel:
    """Load the shipped case-14 JSON document (identical to case14())."""
    text = resources.files("gridmtd.grid").joinpath("data/case14.json").read_text()
    return parse_case(text)


def write_case14_json(path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(case14_document(), fh, indent=1)
        fh.write("\n")
