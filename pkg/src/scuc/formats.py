"""Interchange formats: free-format MPS export/import and solution documents.

MPS notes: numbers carry 17 significant digits so doubles round-trip exactly;
equality rows are E rows; the integer block is wrapped in MARKER
INTORG/INTEND pairs; every column gets an explicit objective entry (possibly
0) so empty columns and column order survive a round trip; every column gets
explicit BOUNDS lines. Import defaults are lb=0, ub=+inf for columns whose
bounds are unstated (integer columns included).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .compiler import CompactModel
from .errors import MpsParseError, SchemaError, ValidationError
from .instance import UcInstance
from .lp import LpProblem
from .mip import MilpProblem, as_milp

INF = float("inf")


def _num(v: float) -> str:
    return format(v, ".17g")


def _row_names(milp: MilpProblem) -> list:
    return [f"R{i}" for i in range(milp.lp.n_rows)]


def _col_names(milp: MilpProblem, model: Optional[CompactModel]) -> list:
    if model is not None:
        return [model.vindex.name(j) for j in range(model.vindex.n)]
    return [f"C{j}" for j in range(milp.lp.n_cols)]


def export_mps(model, name: str = "SCUC") -> str:
    """Serialize a CompactModel or MilpProblem as free-format MPS text."""
    compact = model if isinstance(model, CompactModel) else None
    milp = as_milp(model)
    lp = milp.lp
    rows = _row_names(milp)
    cols = _col_names(milp, compact)
    A = lp.A.tocsc()

    out = [f"NAME          {name}", "ROWS", " N  COST"]
    for i, rn in enumerate(rows):
        out.append(f" {lp.senses[i]}  {rn}")

    out.append("COLUMNS")
    in_int = False
    marker = 0
    for j, cn in enumerate(cols):
        want_int = bool(milp.integer_mask[j])
        if want_int != in_int:
            kind = "'INTORG'" if want_int else "'INTEND'"
            out.append(f"    MARK{marker}  'MARKER'  {kind}")
            marker += 1
            in_int = want_int
        out.append(f"    {cn}  COST  {_num(lp.c[j])}")
        s, e = A.indptr[j], A.indptr[j + 1]
        for idx, val in zip(A.indices[s:e], A.data[s:e]):
            out.append(f"    {cn}  {rows[idx]}  {_num(val)}")
    if in_int:
        out.append(f"    MARK{marker}  'MARKER'  'INTEND'")

    out.append("RHS")
    for i, rn in enumerate(rows):
        if lp.rhs[i] != 0.0:
            out.append(f"    RHS  {rn}  {_num(lp.rhs[i])}")

    out.append("BOUNDS")
    for j, cn in enumerate(cols):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo == hi:
            out.append(f" FX BND  {cn}  {_num(lo)}")
            continue
        if np.isfinite(lo):
            out.append(f" LO BND  {cn}  {_num(lo)}")
        else:
            out.append(f" MI BND  {cn}")
        if np.isfinite(hi):
            out.append(f" UP BND  {cn}  {_num(hi)}")
        else:
            out.append(f" PL BND  {cn}")

    out.append("ENDATA")
    return "\n".join(out) + "\n"


_SECTIONS = {"NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "ENDATA", "OBJSENSE"}


def import_mps(text: str) -> MilpProblem:
    """Parse free-format MPS text into a MilpProblem."""
    section = None
    obj_name = None
    row_names: list = []
    row_sense: list = []
    row_pos: dict = {}
    col_pos: dict = {}
    col_order: list = []
    entries: list = []  # (row_idx, col_idx, val)
    obj_coefs: dict = {}
    rhs_vals: dict = {}
    ranges: dict = {}
    bounds: dict = {}  # col -> [lo, hi]
    integer_cols: set = set()
    in_int = False

    def col_index(name):
        if name not in col_pos:
            col_pos[name] = len(col_order)
            col_order.append(name)
            if in_int:
                integer_cols.add(col_pos[name])
        return col_pos[name]

    def parse_float(tok, ln):
        try:
            return float(tok)
        except ValueError:
            raise MpsParseError(f"bad number {tok!r}", ln) from None

    for ln, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip() or raw.lstrip().startswith("*"):
            continue
        if not raw[0].isspace():
            toks = raw.split()
            head = toks[0].upper()
            if head not in _SECTIONS:
                raise MpsParseError(f"unknown section header {toks[0]!r}", ln)
            section = head
            if section == "ENDATA":
                break
            continue
        toks = raw.split()
        if section == "ROWS":
            if len(toks) != 2:
                raise MpsParseError("ROWS line needs sense and name", ln)
            sense, rname = toks[0].upper(), toks[1]
            if sense == "N":
                if obj_name is None:
                    obj_name = rname
                continue
            if sense not in ("L", "G", "E"):
                raise MpsParseError(f"unknown row sense {toks[0]!r}", ln)
            if rname in row_pos:
                raise MpsParseError(f"duplicate row {rname!r}", ln)
            row_pos[rname] = len(row_names)
            row_names.append(rname)
            row_sense.append(sense)
        elif section == "COLUMNS":
            if "'MARKER'" in toks:
                if "'INTORG'" in toks:
                    in_int = True
                elif "'INTEND'" in toks:
                    in_int = False
                else:
                    raise MpsParseError("marker line without INTORG/INTEND", ln)
                continue
            if len(toks) not in (3, 5):
                raise MpsParseError("COLUMNS line needs name + row/value pairs", ln)
            j = col_index(toks[0])
            for rname, vtok in zip(toks[1::2], toks[2::2]):
                val = parse_float(vtok, ln)
                if rname == obj_name:
                    obj_coefs[j] = obj_coefs.get(j, 0.0) + val
                elif rname in row_pos:
                    if val != 0.0:
                        entries.append((row_pos[rname], j, val))
                else:
                    raise MpsParseError(f"unknown row {rname!r}", ln)
        elif section == "RHS":
            if len(toks) not in (3, 5):
                raise MpsParseError("RHS line needs set name + row/value pairs", ln)
            for rname, vtok in zip(toks[1::2], toks[2::2]):
                if rname == obj_name:
                    continue  # objective offset unsupported, ignored
                if rname not in row_pos:
                    raise MpsParseError(f"unknown row {rname!r}", ln)
                rhs_vals[row_pos[rname]] = parse_float(vtok, ln)
        elif section == "RANGES":
            if len(toks) not in (3, 5):
                raise MpsParseError("RANGES line needs set name + row/value pairs", ln)
            for rname, vtok in zip(toks[1::2], toks[2::2]):
                if rname not in row_pos:
                    raise MpsParseError(f"unknown row {rname!r}", ln)
                ranges[row_pos[rname]] = parse_float(vtok, ln)
        elif section == "BOUNDS":
            if len(toks) < 3:
                raise MpsParseError("BOUNDS line needs type, set, column", ln)
            btype = toks[0].upper()
            j = col_index(toks[2])
            bnd = bounds.setdefault(j, [0.0, INF])
            if btype in ("UP", "UI"):
                bnd[1] = parse_float(toks[3], ln)
                if btype == "UI":
                    integer_cols.add(j)
            elif btype in ("LO", "LI"):
                bnd[0] = parse_float(toks[3], ln)
                if btype == "LI":
                    integer_cols.add(j)
            elif btype == "FX":
                v = parse_float(toks[3], ln)
                bnd[0] = bnd[1] = v
            elif btype == "FR":
                bnd[0], bnd[1] = -INF, INF
            elif btype == "MI":
                bnd[0] = -INF
            elif btype == "PL":
                bnd[1] = INF
            elif btype == "BV":
                bnd[0], bnd[1] = 0.0, 1.0
                integer_cols.add(j)
            else:
                raise MpsParseError(f"unknown bound type {toks[0]!r}", ln)
        elif section in ("NAME", "OBJSENSE"):
            continue
        elif section is None:
            raise MpsParseError("data before any section header", ln)

    n = len(col_order)
    m = len(row_names)
    rhs = np.zeros(m)
    for i, v in rhs_vals.items():
        rhs[i] = v
    senses = np.array(row_sense) if m else np.zeros(0, dtype="<U1")
    ri = [e[0] for e in entries]
    ci = [e[1] for e in entries]
    vals = [e[2] for e in entries]

    # expand ranged rows into an extra opposite-sense row
    extra_rows = []
    for i, r in sorted(ranges.items()):
        s = row_sense[i]
        if s == "L":
            lo_rhs = rhs[i] - abs(r)
            new_sense = "G"
        elif s == "G":
            lo_rhs = rhs[i] + abs(r)
            new_sense = "L"
        else:
            lo_rhs = rhs[i] + (abs(r) if r >= 0 else -abs(r))
            new_sense = "L" if r >= 0 else "G"
        extra_rows.append((i, new_sense, lo_rhs))
    if extra_rows:
        base = m
        add_senses = []
        add_rhs = []
        for k, (i, new_sense, new_rhs) in enumerate(extra_rows):
            for rr, cc, vv in entries:
                if rr == i:
                    ri.append(base + k)
                    ci.append(cc)
                    vals.append(vv)
            add_senses.append(new_sense)
            add_rhs.append(new_rhs)
        senses = np.concatenate([senses, np.array(add_senses)])
        rhs = np.concatenate([rhs, np.array(add_rhs)])
        m += len(extra_rows)

    A = sp.coo_matrix((vals, (ri, ci)), shape=(m, n))
    A.sum_duplicates()
    c = np.zeros(n)
    for j, v in obj_coefs.items():
        c[j] = v
    lb = np.zeros(n)
    ub = np.full(n, INF)
    for j, (lo, hi) in bounds.items():
        lb[j], ub[j] = lo, hi
    mask = np.zeros(n, dtype=bool)
    for j in integer_cols:
        mask[j] = True
    prob = LpProblem(c=c, A=A.tocsr(), senses=senses, rhs=rhs, lb=lb, ub=ub)
    return MilpProblem(lp=prob, integer_mask=mask)


# ---------------------------------------------------------------------------
# solution documents

@dataclass
class SolutionDocument:
    """Commitment/dispatch schedule with objective, bounds, gap, and timings."""

    instance: str
    status: str
    objective: float
    best_bound: float
    rel_gap: float
    u: dict           # generator id -> list of 0/1 per period
    p: dict           # generator id -> list of MW per period
    nodes_explored: int = 0
    compile_seconds: float = 0.0
    solve_seconds: float = 0.0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "SolutionDocument":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"invalid JSON: {exc}") from exc
        required = {
            "instance", "status", "objective", "best_bound", "rel_gap", "u", "p",
        }
        missing = required - set(doc)
        if missing:
            raise SchemaError(f"solution document missing keys {sorted(missing)}")
        return cls(**doc)


def solution_from_result(model: CompactModel, result, compile_seconds: float = 0.0) -> SolutionDocument:
    """Project a MipResult onto the per-generator schedule document."""
    vx = model.vindex
    u = {}
    p = {}
    if result.z is not None:
        for gi, gid in enumerate(vx.gen_ids):
            u[gid] = [int(round(result.z[vx.u(gi, t)])) for t in range(vx.T)]
            p[gid] = [float(result.y[vx.p(gi, t) - vx.n_z]) for t in range(vx.T)]
    return SolutionDocument(
        instance=model.name,
        status=result.status,
        objective=result.objective,
        best_bound=result.best_bound,
        rel_gap=result.rel_gap_achieved,
        u=u,
        p=p,
        nodes_explored=result.nodes_explored,
        compile_seconds=compile_seconds,
        solve_seconds=result.solve_seconds,
    )


def replay_solution(doc: SolutionDocument, inst: UcInstance) -> dict:
    """Re-derive a full (z, y) point from a schedule document and check it.

    The commitment block is rebuilt from the document's u schedules (startups
    and shutdowns derived against the instance's initial state); the dispatch
    block is re-solved as an LP with the commitment fixed. Returns the point,
    its residuals, and the re-solved objective.
    """
    from . import compiler as comp
    from .lp import OPTIMAL, solve_lp_fixed
    from .mip import from_compact

    model = comp.compile(inst)
    vx = model.vindex
    z = np.zeros(vx.n_z)
    for gi, gen in enumerate(inst.generators):
        gid = gen.id
        if gid not in doc.u:
            raise ValidationError(f"u: missing schedule for generator {gid!r}")
        sched = doc.u[gid]
        if len(sched) != vx.T:
            raise ValidationError(f"u[{gid}]: expected {vx.T} periods, got {len(sched)}")
        prev = 1 if gen.init_on else 0
        for t, on in enumerate(sched):
            on = int(on)
            z[vx.u(gi, t)] = on
            if on > prev:
                z[vx.v(gi, t)] = 1.0
            elif on < prev:
                z[vx.w(gi, t)] = 1.0
            prev = on
    milp = from_compact(model)
    fixings = {j: float(z[j]) for j in range(vx.n_z)}
    sol = solve_lp_fixed(milp.lp, fixings)
    if sol.status != OPTIMAL:
        return {"feasible": False, "z": z, "y": None, "objective": None, "residuals": None}
    y = sol.x[vx.n_z:]
    ev = comp.evaluate(model, z, y)
    return {
        "feasible": True,
        "z": z,
        "y": y,
        "objective": ev["objective"],
        "residuals": ev["residuals"],
    }
