"""Network model: buses, branches, controllable-susceptance bounds, states.

Susceptance is the moving quantity throughout the package: a branch is
described by its series conductance ``g`` (held fixed when a setpoint is
applied) and susceptance ``b``.  The original ``r``/``x`` values are kept
for deriving perturbation bounds and for reporting reactance ratios, but
after a setpoint change the (g, b) pair is the source of truth.

Everything here is treated as immutable after construction; setpoint
application returns a new model.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

CASE_SCHEMA_VERSION = 1


class CaseError(ValueError):
    """Raised for malformed case documents or invalid network structure."""


@dataclass(frozen=True)
class Bus:
    id: int
    btype: str      # "ref" | "pv" | "pq"
    vm_set: float   # voltage setpoint (ref/pv) or initial guess (pq), p.u.
    va_set: float   # radians
    pd: float       # net active demand (load minus local generation), p.u.
    qd: float       # net reactive demand, p.u.; ignored by power flow at pv buses


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    g: float        # series conductance, fixed under setpoint moves
    b: float        # series susceptance (controllable on dfacts branches)
    tap: float
    dfacts: bool
    eta: float      # reactance perturbation ratio backing the bounds
    b_lo: float
    b_hi: float


def susceptance_of_reactance(r: float, x: float) -> float:
    return -x / (r * r + x * x)


def reactance_of_susceptance(r: float, b: float, x_ref: float | None = None) -> float:
    """Invert b = -x/(r²+x²) for x > 0.

    For r = 0 this is x = -1/b.  For r > 0 the quadratic b·x² + x + b·r² = 0
    has two positive roots whose product is r²; both are physical.  With
    ``x_ref`` supplied the root nearer to it is returned (least actuation),
    otherwise the x >= r root.
    """
    if b >= 0.0:
        raise ValueError(f"series susceptance must be negative, got {b}")
    if r == 0.0:
        return -1.0 / b
    disc = 1.0 - 4.0 * b * b * r * r
    if disc < -1e-12:
        raise ValueError(f"susceptance {b} unreachable with r={r}")
    hi = (-1.0 - math.sqrt(max(disc, 0.0))) / (2.0 * b)
    if x_ref is None:
        return hi
    lo = r * r / hi
    return lo if abs(lo - x_ref) <= abs(hi - x_ref) else hi


def _dfacts_bounds(r: float, x: float, eta: float) -> tuple[float, float]:
    """Susceptance range swept by x ∈ [(1-η)x₀, (1+η)x₀] at fixed r.

    b(x) = -x/(r²+x²) is not monotone: its minimum sits at x = r, so the
    interior critical point must be considered alongside the endpoints.
    """
    x_lo, x_hi = (1.0 - eta) * x, (1.0 + eta) * x
    cands = [susceptance_of_reactance(r, x_lo), susceptance_of_reactance(r, x_hi)]
    if r > 0.0 and x_lo < r < x_hi:
        cands.append(susceptance_of_reactance(r, r))
    return min(cands), max(cands)


class GridModel:
    """Validated network with cached index arrays.

    Immutable by convention: no method mutates the instance, and
    ``with_susceptance`` returns a fresh model.
    """

    def __init__(self, buses: Sequence[Bus], branches: Sequence[Branch],
                 base_mva: float = 100.0):
        self.buses = tuple(buses)
        self.branches = tuple(branches)
        self.base_mva = float(base_mva)
        self._validate()

        self.bus_index = {b.id: i for i, b in enumerate(self.buses)}
        self.n_bus = len(self.buses)
        self.m = len(self.branches)
        self.ref = next(i for i, b in enumerate(self.buses) if b.btype == "ref")
        self.nonref = [i for i in range(self.n_bus) if i != self.ref]
        self.n = self.n_bus - 1          # angle (and magnitude) state count
        self.pv = [i for i, b in enumerate(self.buses) if b.btype == "pv"]
        self.pq = [i for i, b in enumerate(self.buses) if b.btype == "pq"]

        self.f_idx = np.array([self.bus_index[br.from_bus] for br in self.branches])
        self.t_idx = np.array([self.bus_index[br.to_bus] for br in self.branches])
        self.tap = np.array([br.tap for br in self.branches])
        self.g = np.array([br.g for br in self.branches])
        self.b = np.array([br.b for br in self.branches])
        self.r = np.array([br.r for br in self.branches])
        self.x = np.array([br.x for br in self.branches])
        self.b_lo = np.array([br.b_lo for br in self.branches])
        self.b_hi = np.array([br.b_hi for br in self.branches])
        self.dfacts_mask = np.array([br.dfacts for br in self.branches])
        self._adm = None

    # ------------------------------------------------------------------

    def _validate(self) -> None:
        refs = [b for b in self.buses if b.btype == "ref"]
        if len(refs) == 0:
            raise CaseError("missing reference bus")
        if len(refs) > 1:
            raise CaseError(f"multiple reference buses: {[b.id for b in refs]}")
        bad_type = [b.id for b in self.buses if b.btype not in ("ref", "pv", "pq")]
        if bad_type:
            raise CaseError(f"unknown bus types at buses {bad_type}")
        ids = [b.id for b in self.buses]
        if len(set(ids)) != len(ids):
            raise CaseError("duplicate bus ids")
        id_set = set(ids)
        seen = set()
        for br in self.branches:
            if br.from_bus not in id_set or br.to_bus not in id_set:
                raise CaseError(f"branch {br.from_bus}-{br.to_bus} references unknown bus")
            if br.tap <= 0.0:
                raise CaseError(f"nonpositive tap on branch {br.from_bus}-{br.to_bus}")
            key = (br.from_bus, br.to_bus)
            if key in seen:
                raise CaseError(f"duplicate branch {br.from_bus}-{br.to_bus}")
            seen.add(key)
            if not (br.b_lo <= br.b <= br.b_hi) and not (
                    abs(br.b_lo - br.b) < 1e-12 or abs(br.b_hi - br.b) < 1e-12):
                raise CaseError(
                    f"susceptance outside bounds on branch {br.from_bus}-{br.to_bus}")
        # connectivity via BFS over the undirected branch graph
        adj: dict[int, list[int]] = {b.id: [] for b in self.buses}
        for br in self.branches:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
        start = self.buses[0].id
        seen_ids = {start}
        stack = [start]
        while stack:
            u = stack.pop()
            for w in adj[u]:
                if w not in seen_ids:
                    seen_ids.add(w)
                    stack.append(w)
        if len(seen_ids) != len(self.buses):
            missing = sorted(id_set - seen_ids)
            raise CaseError(f"disconnected network; unreachable buses {missing}")

    # ------------------------------------------------------------------

    def __eq__(self, other: object) -> bool:
        return (isinstance(other, GridModel)
                and self.buses == other.buses
                and self.branches == other.branches
                and self.base_mva == other.base_mva)

    def __hash__(self) -> int:  # consistent with __eq__, rarely needed
        return hash((self.buses, self.branches, self.base_mva))

    def admittance(self):
        """Cached admittance set for the current susceptance vector."""
        if self._adm is None:
            from .admittance import build_admittance
            self._adm = build_admittance(self)
        return self._adm

    def base_injections(self) -> tuple[np.ndarray, np.ndarray]:
        """Specified net injections (p.u.): negative of net demand."""
        p = -np.array([b.pd for b in self.buses])
        q = -np.array([b.qd for b in self.buses])
        return p, q

    def vm_setpoints(self) -> np.ndarray:
        return np.array([b.vm_set for b in self.buses])

    def with_susceptance(self, b_new: np.ndarray) -> "GridModel":
        """New model with branch susceptances replaced, conductances kept."""
        b_new = np.asarray(b_new, dtype=float)
        if b_new.shape != (self.m,):
            raise ValueError(f"expected {self.m} susceptances, got {b_new.shape}")
        branches = tuple(
            Branch(br.from_bus, br.to_bus, br.r, br.x, br.g, float(bv),
                   br.tap, br.dfacts, br.eta, br.b_lo, br.b_hi)
            for br, bv in zip(self.branches, b_new))
        return GridModel(self.buses, branches, self.base_mva)

    def reactance_ratios(self, b_new: np.ndarray) -> np.ndarray:
        """|Δx|/x₀ per branch implied by moving susceptance at fixed r."""
        b_new = np.asarray(b_new, dtype=float)
        out = np.zeros(self.m)
        for k in range(self.m):
            xk = reactance_of_susceptance(self.r[k], b_new[k], x_ref=self.x[k])
            out[k] = abs(xk - self.x[k]) / self.x[k]
        return out


class SetpointViolation(ValueError):
    """Setpoint component(s) outside the allowed susceptance box."""

    def __init__(self, branches: list[str]):
        self.branches = branches
        super().__init__("susceptance out of bounds on branches: " + ", ".join(branches))


def apply_setpoint(grid: GridModel, b_new: np.ndarray, tol: float = 1e-9) -> GridModel:
    """Return a new model at susceptance ``b_new``; bounds are closed."""
    b_new = np.asarray(b_new, dtype=float)
    if b_new.shape != (grid.m,):
        raise ValueError(f"expected {grid.m} susceptances, got shape {b_new.shape}")
    bad = []
    for k, br in enumerate(grid.branches):
        if b_new[k] < br.b_lo - tol or b_new[k] > br.b_hi + tol:
            bad.append(f"{br.from_bus}-{br.to_bus}")
    if bad:
        raise SetpointViolation(bad)
    return grid.with_susceptance(np.clip(b_new, grid.b_lo, grid.b_hi))


# ----------------------------------------------------------------------
# state
# ----------------------------------------------------------------------

class StateVector:
    """Per-bus complex voltage with polar and rectangular accessors."""

    __slots__ = ("v",)

    def __init__(self, v: np.ndarray):
        self.v = np.asarray(v, dtype=complex)

    @classmethod
    def from_polar(cls, vm: np.ndarray, va: np.ndarray) -> "StateVector":
        return cls(np.asarray(vm, dtype=float) * np.exp(1j * np.asarray(va, dtype=float)))

    @classmethod
    def from_rect(cls, v_r: np.ndarray, v_i: np.ndarray) -> "StateVector":
        return cls(np.asarray(v_r, dtype=float) + 1j * np.asarray(v_i, dtype=float))

    @property
    def vm(self) -> np.ndarray:
        return np.abs(self.v)

    @property
    def va(self) -> np.ndarray:
        return np.angle(self.v)

    @property
    def v_r(self) -> np.ndarray:
        return self.v.real.copy()

    @property
    def v_i(self) -> np.ndarray:
        return self.v.imag.copy()

    def __len__(self) -> int:
        return len(self.v)

    def plausible(self, lo: float = 0.5, hi: float = 1.5) -> bool:
        vm = self.vm
        return bool(np.all(vm >= lo) and np.all(vm <= hi))


# ----------------------------------------------------------------------
# case documents
# ----------------------------------------------------------------------

def parse_case(doc) -> GridModel:
    """Build a GridModel from a case document (JSON text or parsed dict).

    Document units: pd/qd in MW/MVAr on baseMVA, va in degrees, vm/r/x in
    per-unit; internally everything is per-unit with angles in radians.
    """
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise CaseError(f"case document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CaseError(f"case document must be an object, got {type(doc).__name__}")
    version = doc.get("version")
    if version != CASE_SCHEMA_VERSION:
        raise CaseError(f"unsupported case schema version {version!r}")
    for key in ("baseMVA", "buses", "branches"):
        if key not in doc:
            raise CaseError(f"case document missing field {key!r}")
    base = float(doc["baseMVA"])
    if base <= 0:
        raise CaseError("baseMVA must be positive")

    buses = []
    for row in doc["buses"]:
        try:
            buses.append(Bus(
                id=int(row["id"]),
                btype=str(row["type"]),
                vm_set=float(row.get("vm", 1.0)),
                va_set=math.radians(float(row.get("va", 0.0))),
                pd=float(row.get("pd", 0.0)) / base,
                qd=float(row.get("qd", 0.0)) / base,
            ))
        except (KeyError, TypeError, ValueError) as exc:
            raise CaseError(f"malformed bus row {row!r}: {exc}") from exc

    branches = []
    for row in doc["branches"]:
        try:
            r = float(row["r"])
            x = float(row["x"])
            tap = float(row.get("tap", 1.0))
            dfacts = bool(row.get("dfacts", False))
            eta = float(row.get("eta", 0.0))
            if x <= 0:
                raise CaseError(f"branch {row['from']}-{row['to']}: reactance must be positive")
            if dfacts and not (0.0 < eta < 1.0):
                raise CaseError(f"branch {row['from']}-{row['to']}: eta must be in (0,1)")
            b0 = susceptance_of_reactance(r, x)
            g0 = r / (r * r + x * x)
            if dfacts:
                b_lo, b_hi = _dfacts_bounds(r, x, eta)
            else:
                b_lo = b_hi = b0
            branches.append(Branch(
                from_bus=int(row["from"]), to_bus=int(row["to"]),
                r=r, x=x, g=g0, b=b0, tap=tap,
                dfacts=dfacts, eta=eta, b_lo=b_lo, b_hi=b_hi,
            ))
        except CaseError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise CaseError(f"malformed branch row {row!r}: {exc}") from exc

    return GridModel(buses, branches, base)


def load_case(path) -> GridModel:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_case(fh.read())
