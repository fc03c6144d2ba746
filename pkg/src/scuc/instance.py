"""Power-system instance types, validation, synthesis, and the canonical JSON format.

The canonical instance document is a single JSON object with top-level keys
``name, horizon_T, period_hours, buses, lines, generators, demand``; ``demand``
maps bus id -> array of length ``horizon_T``. See docs/instance-format.md.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    ArgumentError,
    DisconnectedNetworkError,
    SchemaError,
    ValidationError,
)

_WIDTH_TOL = 1e-6  # MW slack allowed on segment-width sums


@dataclass(frozen=True)
class Generator:
    id: str
    bus: str
    p_min: float
    p_max: float
    ramp_up: float
    ramp_down: float
    startup_ramp: float
    shutdown_ramp: float
    min_up: int
    min_down: int
    no_load_cost: float
    startup_cost: float
    shutdown_cost: float
    segments: tuple  # of (width_MW, marginal_cost_per_MWh)
    init_on: bool
    init_power: float
    init_periods_in_state: int


@dataclass(frozen=True)
class Bus:
    id: str
    is_reference: bool = False


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: str
    to_bus: str
    susceptance: float  # MW per radian (flow = susceptance * angle difference)
    flow_limit: float   # MW


@dataclass(frozen=True)
class UcInstance:
    name: str
    horizon_T: int
    period_hours: float
    buses: tuple       # of Bus
    lines: tuple       # of Line
    generators: tuple  # of Generator
    demand: tuple      # tuple of per-bus tuples, aligned with buses, length horizon_T each

    def bus_index(self) -> dict:
        return {b.id: i for i, b in enumerate(self.buses)}

    def reference_bus(self) -> Optional[str]:
        for b in self.buses:
            if b.is_reference:
                return b.id
        return None


@dataclass(frozen=True)
class SolverOptions:
    rel_gap: float = 0.005
    time_limit: Optional[float] = None
    worker_count: int = 1
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.rel_gap < 1.0:
            raise ArgumentError(f"rel_gap must be in [0, 1), got {self.rel_gap}")
        if self.worker_count < 1:
            raise ArgumentError(f"worker_count must be >= 1, got {self.worker_count}")
        if self.time_limit is not None and self.time_limit <= 0:
            raise ArgumentError(f"time_limit must be positive, got {self.time_limit}")


# ---------------------------------------------------------------------------
# validation

def _network_connected(inst: UcInstance) -> bool:
    if len(inst.buses) <= 1:
        return True
    ref = inst.reference_bus()
    if ref is None:
        ref = inst.buses[0].id
    adj = {b.id: [] for b in inst.buses}
    for ln in inst.lines:
        if ln.from_bus in adj and ln.to_bus in adj:
            adj[ln.from_bus].append(ln.to_bus)
            adj[ln.to_bus].append(ln.from_bus)
    seen = {ref}
    work = deque([ref])
    while work:
        for nxt in adj[work.popleft()]:
            if nxt not in seen:
                seen.add(nxt)
                work.append(nxt)
    return len(seen) == len(adj)


def validate_instance(inst: UcInstance) -> list:
    """Return every violated invariant as a human-readable string; [] means valid."""
    v = []
    if inst.horizon_T < 1:
        v.append(f"horizon_T: must be >= 1, got {inst.horizon_T}")
    if not inst.period_hours > 0:
        v.append(f"period_hours: must be > 0, got {inst.period_hours}")

    bus_ids = [b.id for b in inst.buses]
    if len(set(bus_ids)) != len(bus_ids):
        v.append("buses: duplicate bus ids")
    n_ref = sum(1 for b in inst.buses if b.is_reference)
    if n_ref != 1:
        v.append(f"buses: exactly one reference bus required, found {n_ref}")

    bus_set = set(bus_ids)
    line_ids = [ln.id for ln in inst.lines]
    if len(set(line_ids)) != len(line_ids):
        v.append("lines: duplicate line ids")
    for ln in inst.lines:
        path = f"lines[{ln.id}]"
        if ln.from_bus == ln.to_bus:
            v.append(f"{path}.to_bus: must differ from from_bus")
        if ln.from_bus not in bus_set:
            v.append(f"{path}.from_bus: unknown bus {ln.from_bus!r}")
        if ln.to_bus not in bus_set:
            v.append(f"{path}.to_bus: unknown bus {ln.to_bus!r}")
        if not ln.susceptance > 0:
            v.append(f"{path}.susceptance: must be > 0, got {ln.susceptance}")
        if not ln.flow_limit > 0:
            v.append(f"{path}.flow_limit: must be > 0, got {ln.flow_limit}")

    gen_ids = [g.id for g in inst.generators]
    if len(set(gen_ids)) != len(gen_ids):
        v.append("generators: duplicate generator ids")
    for g in inst.generators:
        path = f"generators[{g.id}]"
        if g.bus not in bus_set:
            v.append(f"{path}.bus: unknown bus {g.bus!r}")
        if g.p_min < 0:
            v.append(f"{path}.p_min: must be >= 0, got {g.p_min}")
        if g.p_min > g.p_max:
            v.append(f"{path}.p_min: exceeds p_max ({g.p_min} > {g.p_max})")
        if g.min_up < 1:
            v.append(f"{path}.min_up: must be >= 1, got {g.min_up}")
        if g.min_down < 1:
            v.append(f"{path}.min_down: must be >= 1, got {g.min_down}")
        if g.init_periods_in_state < 1:
            v.append(f"{path}.init_periods_in_state: must be >= 1, got {g.init_periods_in_state}")
        width_sum = sum(w for w, _ in g.segments)
        if abs(width_sum - (g.p_max - g.p_min)) > _WIDTH_TOL:
            v.append(
                f"{path}.segments: widths sum to {width_sum}, expected "
                f"p_max - p_min = {g.p_max - g.p_min}"
            )
        if any(w < 0 for w, _ in g.segments):
            v.append(f"{path}.segments: negative segment width")
        costs = [c for _, c in g.segments]
        if any(costs[k + 1] < costs[k] for k in range(len(costs) - 1)):
            v.append(f"{path}.segments: marginal costs must be nondecreasing (convexity)")
        if g.init_on:
            if not (g.p_min <= g.init_power <= g.p_max):
                v.append(
                    f"{path}.init_power: {g.init_power} outside [p_min, p_max] while init_on"
                )
        elif g.init_power != 0:
            v.append(f"{path}.init_power: must be 0 when init_on is false, got {g.init_power}")

    if len(inst.demand) != len(inst.buses):
        v.append(
            f"demand: expected {len(inst.buses)} rows (one per bus), got {len(inst.demand)}"
        )
    else:
        for b, row in zip(inst.buses, inst.demand):
            if len(row) != inst.horizon_T:
                v.append(
                    f"demand[{b.id}]: expected {inst.horizon_T} periods, got {len(row)}"
                )
            elif any((not math.isfinite(x)) or x < 0 for x in row):
                v.append(f"demand[{b.id}]: entries must be finite and >= 0")

    if not _network_connected(inst):
        v.append("network: not all buses reachable from the reference bus")
    return v


# ---------------------------------------------------------------------------
# canonical document format

_TOP_KEYS = ("name", "horizon_T", "period_hours", "buses", "lines", "generators", "demand")


def _reject_constant(value):
    raise SchemaError(f"non-finite number {value!r} not permitted")


def _expect(obj, key, types, path):
    if key not in obj:
        raise SchemaError(f"{path}.{key}: missing")
    val = obj[key]
    tt = types if isinstance(types, tuple) else (types,)
    if isinstance(val, bool) and bool not in tt:
        raise SchemaError(f"{path}.{key}: wrong type bool")
    if not isinstance(val, tt):
        raise SchemaError(f"{path}.{key}: wrong type {type(val).__name__}")
    return val


_NUM = (int, float)


def parse_instance(text: str) -> UcInstance:
    """Parse and fully validate a canonical instance document.

    Raises SchemaError for malformed documents, ValidationError for invariant
    violations, and DisconnectedNetworkError when the only problem is network
    connectivity.
    """
    try:
        doc = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("top level must be a JSON object")
    for key in _TOP_KEYS:
        if key not in doc:
            raise SchemaError(f"missing top-level key {key!r}")

    name = _expect(doc, "name", str, "$")
    horizon = _expect(doc, "horizon_T", int, "$")
    period_hours = _expect(doc, "period_hours", _NUM, "$")

    buses = []
    raw_buses = _expect(doc, "buses", list, "$")
    for i, b in enumerate(raw_buses):
        if not isinstance(b, dict):
            raise SchemaError(f"$.buses[{i}]: must be an object")
        buses.append(
            Bus(
                id=_expect(b, "id", str, f"$.buses[{i}]"),
                is_reference=bool(b.get("is_reference", False)),
            )
        )

    lines = []
    raw_lines = _expect(doc, "lines", list, "$")
    for i, ln in enumerate(raw_lines):
        if not isinstance(ln, dict):
            raise SchemaError(f"$.lines[{i}]: must be an object")
        path = f"$.lines[{i}]"
        lines.append(
            Line(
                id=_expect(ln, "id", str, path),
                from_bus=_expect(ln, "from_bus", str, path),
                to_bus=_expect(ln, "to_bus", str, path),
                susceptance=float(_expect(ln, "susceptance", _NUM, path)),
                flow_limit=float(_expect(ln, "flow_limit", _NUM, path)),
            )
        )

    gens = []
    raw_gens = _expect(doc, "generators", list, "$")
    for i, g in enumerate(raw_gens):
        if not isinstance(g, dict):
            raise SchemaError(f"$.generators[{i}]: must be an object")
        path = f"$.generators[{i}]"
        raw_segs = _expect(g, "segments", list, path)
        segs = []
        for k, s in enumerate(raw_segs):
            if (
                not isinstance(s, list)
                or len(s) != 2
                or not all(isinstance(x, _NUM) for x in s)
            ):
                raise SchemaError(f"{path}.segments[{k}]: expected [width, marginal_cost]")
            segs.append((float(s[0]), float(s[1])))
        gens.append(
            Generator(
                id=_expect(g, "id", str, path),
                bus=_expect(g, "bus", str, path),
                p_min=float(_expect(g, "p_min", _NUM, path)),
                p_max=float(_expect(g, "p_max", _NUM, path)),
                ramp_up=float(_expect(g, "ramp_up", _NUM, path)),
                ramp_down=float(_expect(g, "ramp_down", _NUM, path)),
                startup_ramp=float(_expect(g, "startup_ramp", _NUM, path)),
                shutdown_ramp=float(_expect(g, "shutdown_ramp", _NUM, path)),
                min_up=_expect(g, "min_up", int, path),
                min_down=_expect(g, "min_down", int, path),
                no_load_cost=float(_expect(g, "no_load_cost", _NUM, path)),
                startup_cost=float(_expect(g, "startup_cost", _NUM, path)),
                shutdown_cost=float(_expect(g, "shutdown_cost", _NUM, path)),
                segments=tuple(segs),
                init_on=bool(_expect(g, "init_on", bool, path)),
                init_power=float(_expect(g, "init_power", _NUM, path)),
                init_periods_in_state=_expect(g, "init_periods_in_state", int, path),
            )
        )

    raw_demand = _expect(doc, "demand", dict, "$")
    bus_ids = [b.id for b in buses]
    extra = set(raw_demand) - set(bus_ids)
    if extra:
        raise SchemaError(f"$.demand: unknown bus ids {sorted(extra)}")
    demand_rows = []
    for bid in bus_ids:
        if bid not in raw_demand:
            raise SchemaError(f"$.demand: missing row for bus {bid!r}")
        row = raw_demand[bid]
        if not isinstance(row, list) or not all(isinstance(x, _NUM) for x in row):
            raise SchemaError(f"$.demand[{bid}]: must be an array of numbers")
        demand_rows.append(tuple(float(x) for x in row))

    inst = UcInstance(
        name=name,
        horizon_T=horizon,
        period_hours=float(period_hours),
        buses=tuple(buses),
        lines=tuple(lines),
        generators=tuple(gens),
        demand=tuple(demand_rows),
    )
    violations = validate_instance(inst)
    if violations:
        connectivity = [x for x in violations if x.startswith("network:")]
        others = [x for x in violations if not x.startswith("network:")]
        if others:
            raise ValidationError(violations)
        raise DisconnectedNetworkError(connectivity[0])
    return inst


def serialize_instance(inst: UcInstance) -> str:
    """Render the canonical JSON document; inverse of parse_instance on valid input."""
    doc = {
        "name": inst.name,
        "horizon_T": inst.horizon_T,
        "period_hours": inst.period_hours,
        "buses": [{"id": b.id, "is_reference": b.is_reference} for b in inst.buses],
        "lines": [
            {
                "id": ln.id,
                "from_bus": ln.from_bus,
                "to_bus": ln.to_bus,
                "susceptance": ln.susceptance,
                "flow_limit": ln.flow_limit,
            }
            for ln in inst.lines
        ],
        "generators": [
            {
                "id": g.id,
                "bus": g.bus,
                "p_min": g.p_min,
                "p_max": g.p_max,
                "ramp_up": g.ramp_up,
                "ramp_down": g.ramp_down,
                "startup_ramp": g.startup_ramp,
                "shutdown_ramp": g.shutdown_ramp,
                "min_up": g.min_up,
                "min_down": g.min_down,
                "no_load_cost": g.no_load_cost,
                "startup_cost": g.startup_cost,
                "shutdown_cost": g.shutdown_cost,
                "segments": [[w, c] for w, c in g.segments],
                "init_on": g.init_on,
                "init_power": g.init_power,
                "init_periods_in_state": g.init_periods_in_state,
            }
            for g in inst.generators
        ],
        "demand": {b.id: list(row) for b, row in zip(inst.buses, inst.demand)},
    }
    return json.dumps(doc, indent=2, allow_nan=False)


# ---------------------------------------------------------------------------
# synthetic instances

def synth_instance(
    generators: int,
    buses: int,
    lines: int,
    T: int = 24,
    seed: int = 0,
    name: Optional[str] = None,
) -> UcInstance:
    """Deterministically generate a valid, connected instance.

    The network is a random spanning tree plus random chords; demand is a
    smooth profile scaled well below 0.8 * total capacity so that keeping the
    initially-on fleet committed is always feasible.
    """
    if generators < 1 or buses < 1 or T < 1:
        raise ArgumentError("generators, buses, and T must all be >= 1")
    if lines < buses - 1:
        raise ArgumentError(f"need at least buses-1={buses - 1} lines, got {lines}")
    if buses == 1 and lines > 0:
        raise ArgumentError("a single-bus network admits no lines")
    rng = np.random.default_rng(seed)

    bus_objs = tuple(Bus(id=f"b{i}", is_reference=(i == 0)) for i in range(buses))

    line_objs = []
    for i in range(1, buses):
        parent = int(rng.integers(0, i))
        line_objs.append((parent, i))
    for _ in range(lines - (buses - 1)):
        a = int(rng.integers(0, buses))
        b = int(rng.integers(0, buses - 1))
        if b >= a:
            b += 1
        line_objs.append((a, b))

    gens = []
    p_mins = []
    p_maxs = []
    for i in range(generators):
        p_min = float(np.round(rng.uniform(10.0, 50.0), 3))
        span = float(np.round(rng.uniform(60.0, 250.0), 3))
        p_max = p_min + span
        # 4 nondecreasing-cost segments covering [p_min, p_max]
        cuts = np.sort(rng.uniform(0.05, 0.95, size=3)) * span
        widths = np.diff(np.concatenate([[0.0], cuts, [span]]))
        costs = np.sort(rng.uniform(15.0, 60.0, size=4))
        gens.append(
            dict(
                id=f"g{i}",
                bus=f"b{int(rng.integers(0, buses))}",
                p_min=p_min,
                p_max=p_max,
                ramp_up=float(np.round(rng.uniform(0.3, 0.8) * span, 3)),
                ramp_down=float(np.round(rng.uniform(0.3, 0.8) * span, 3)),
                startup_ramp=float(np.round(p_min + rng.uniform(0.0, 0.3) * span, 3)),
                shutdown_ramp=float(np.round(p_min + rng.uniform(0.0, 0.3) * span, 3)),
                min_up=int(rng.integers(1, 4)),
                min_down=int(rng.integers(1, 4)),
                no_load_cost=float(np.round(rng.uniform(100.0, 600.0), 2)),
                startup_cost=float(np.round(rng.uniform(500.0, 3000.0), 2)),
                shutdown_cost=float(np.round(rng.uniform(0.0, 500.0), 2)),
                segments=tuple((float(w), float(c)) for w, c in zip(widths, costs)),
                init_on=bool(rng.random() < 0.85),
                min_down_init=int(rng.integers(1, 5)),
            )
        )
        p_mins.append(p_min)
        p_maxs.append(p_max)

    total_pmax = sum(p_maxs)
    # guarantee the initially-on fleet can cover peak demand
    on_mask = [g["init_on"] for g in gens]
    order = sorted(range(generators), key=lambda i: -p_maxs[i])
    while sum(p_maxs[i] for i in range(generators) if on_mask[i]) < 0.65 * total_pmax:
        for i in order:
            if not on_mask[i]:
                on_mask[i] = True
                break
        else:
            break

    t_axis = np.arange(T)
    profile = 0.45 + 0.12 * np.sin(2 * np.pi * (t_axis + float(rng.uniform(0, T))) / max(T, 2))
    profile = profile + rng.uniform(-0.02, 0.02, size=T)
    demand_total = np.clip(profile, 0.30, 0.60) * total_pmax
    floor = 1.05 * sum(p_mins)
    demand_total = np.maximum(demand_total, min(floor, 0.6 * total_pmax))

    weights = rng.uniform(0.2, 1.0, size=buses)
    weights = weights / weights.sum()
    demand_rows = tuple(
        tuple(float(np.round(w * d, 4)) for d in demand_total) for w in weights
    )

    pmax_on = sum(p_maxs[i] for i in range(generators) if on_mask[i])
    pmin_on = sum(p_mins[i] for i in range(generators) if on_mask[i])
    d1 = float(demand_total[0])
    frac = 0.0
    if pmax_on > pmin_on:
        frac = min(max((d1 - pmin_on) / (pmax_on - pmin_on), 0.0), 1.0)

    gen_objs = []
    for i, g in enumerate(gens):
        on = on_mask[i]
        init_power = (
            float(np.round(g["p_min"] + frac * (g["p_max"] - g["p_min"]), 4)) if on else 0.0
        )
        gen_objs.append(
            Generator(
                id=g["id"],
                bus=g["bus"],
                p_min=g["p_min"],
                p_max=g["p_max"],
                ramp_up=g["ramp_up"],
                ramp_down=g["ramp_down"],
                startup_ramp=g["startup_ramp"],
                shutdown_ramp=g["shutdown_ramp"],
                min_up=g["min_up"],
                min_down=g["min_down"],
                no_load_cost=g["no_load_cost"],
                startup_cost=g["startup_cost"],
                shutdown_cost=g["shutdown_cost"],
                segments=g["segments"],
                init_on=on,
                init_power=init_power,
                init_periods_in_state=g["min_down_init"],
            )
        )

    flow_cap = float(np.round(max(total_pmax, 1.0), 3))
    lines_out = tuple(
        Line(
            id=f"l{i}",
            from_bus=f"b{a}",
            to_bus=f"b{b}",
            susceptance=float(np.round(rng.uniform(100.0, 1000.0), 3)),
            flow_limit=flow_cap,
        )
        for i, (a, b) in enumerate(line_objs)
    )

    return UcInstance(
        name=name or f"synth-g{generators}-b{buses}-l{lines}-t{T}-s{seed}",
        horizon_T=T,
        period_hours=1.0,
        buses=bus_objs,
        lines=lines_out,
        generators=tuple(gen_objs),
        demand=demand_rows,
    )
