"""Lower a UcInstance into the compact MILP blocks.

Variable families, in column order: the binary commitment block z = (u, v, w)
followed by the continuous dispatch block y = (p, p_seg, theta). The reference
bus carries no angle column. Constraint blocks:

  F z (<=,=) f      commitment logic, min-up/down, initial-state forcing
  H y <= h          line flow limits (DC, flows are angle expressions)
  A z + B y (<=,=) g  capacity/segment linking and ramps
  I_u y = d         nodal power balance

All matrices are sparse; senses are stored per row ('L' for <=, 'E' for =).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, ValidationError
from .instance import UcInstance, validate_instance

INF = float("inf")


class VariableIndex:
    """Bijective map between named variables and column indices.

    z-block columns (u, v, w) precede y-block columns (p, p_seg, theta); each
    family is contiguous, laid out generator-major then period.
    """

    def __init__(self, inst: UcInstance):
        G = len(inst.generators)
        T = inst.horizon_T
        self.T = T
        self.n_gens = G
        self.gen_ids = [g.id for g in inst.generators]
        self.seg_counts = [len(g.segments) for g in inst.generators]
        self._u0 = 0
        self._v0 = G * T
        self._w0 = 2 * G * T
        self.n_z = 3 * G * T
        self._p0 = self.n_z
        self._pseg0 = self.n_z + G * T
        off = 0
        self._pseg_off = []
        for k in self.seg_counts:
            self._pseg_off.append(off)
            off += k * T
        self._theta0 = self._pseg0 + off
        ref = inst.reference_bus()
        self.bus_ids = [b.id for b in inst.buses]
        self.nonref_buses = [b.id for b in inst.buses if b.id != ref]
        self._theta_pos = {bid: i for i, bid in enumerate(self.nonref_buses)}
        self.n = self._theta0 + len(self.nonref_buses) * T
        self.n_y = self.n - self.n_z

    def u(self, g: int, t: int) -> int:
        return self._u0 + g * self.T + t

    def v(self, g: int, t: int) -> int:
        return self._v0 + g * self.T + t

    def w(self, g: int, t: int) -> int:
        return self._w0 + g * self.T + t

    def p(self, g: int, t: int) -> int:
        return self._p0 + g * self.T + t

    def p_seg(self, g: int, t: int, k: int) -> int:
        return self._pseg0 + self._pseg_off[g] + t * self.seg_counts[g] + k

    def theta(self, bus_id: str, t: int) -> int:
        return self._theta0 + self._theta_pos[bus_id] * self.T + t

    def name(self, col: int) -> str:
        """Inverse lookup: a stable human-readable name for a column."""
        T = self.T
        if col < self._v0:
            g, t = divmod(col - self._u0, T)
            return f"u_{g}_{t}"
        if col < self._w0:
            g, t = divmod(col - self._v0, T)
            return f"v_{g}_{t}"
        if col < self._p0:
            g, t = divmod(col - self._w0, T)
            return f"w_{g}_{t}"
        if col < self._pseg0:
            g, t = divmod(col - self._p0, T)
            return f"p_{g}_{t}"
        if col < self._theta0:
            rel = col - self._pseg0
            for g, off in enumerate(self._pseg_off):
                size = self.seg_counts[g] * T
                if rel < off + size:
                    t, k = divmod(rel - off, self.seg_counts[g])
                    return f"pseg_{g}_{t}_{k}"
        if col < self.n:
            b, t = divmod(col - self._theta0, T)
            return f"theta_{b}_{t}"
        raise DimensionError(f"column {col} out of range (n={self.n})")


class _RowBlock:
    """Accumulates sparse rows for one constraint block."""

    def __init__(self, ncols: int):
        self.ncols = ncols
        self.ri: list = []
        self.ci: list = []
        self.vals: list = []
        self.rhs: list = []
        self.sense: list = []

    def add(self, entries, sense: str, rhs: float):
        r = len(self.rhs)
        for col, val in entries:
            if val != 0.0:
                self.ri.append(r)
                self.ci.append(col)
                self.vals.append(val)
        self.rhs.append(rhs)
        self.sense.append(sense)

    def matrix(self) -> sp.csr_matrix:
        m = sp.coo_matrix(
            (self.vals, (self.ri, self.ci)), shape=(len(self.rhs), self.ncols)
        )
        m.sum_duplicates()
        return m.tocsr()


@dataclass(frozen=True)
class CompactModel:
    vindex: VariableIndex
    c: np.ndarray        # cost over z
    b: np.ndarray        # cost over y
    F: sp.csr_matrix     # m_F x n_z
    f: np.ndarray
    F_sense: np.ndarray  # 'L' or 'E' per row
    H: sp.csr_matrix     # m_H x n_y, all <=
    h: np.ndarray
    A: sp.csr_matrix     # coupling, z columns
    B: sp.csr_matrix     # coupling, y columns
    g: np.ndarray
    AB_sense: np.ndarray
    I_u: sp.csr_matrix   # balance, y columns, all =
    d: np.ndarray
    lb: np.ndarray       # over all n columns
    ub: np.ndarray
    integer_mask: np.ndarray  # bool, marks exactly the z block
    name: str = ""


@dataclass(frozen=True)
class ModelStats:
    n_vars: int
    n_binary: int
    n_continuous: int
    n_rows_by_block: dict
    nonzeros: int


def compile(inst: UcInstance) -> CompactModel:  # noqa: A001 - domain term
    """Compile a validated instance into the compact MILP blocks."""
    violations = validate_instance(inst)
    if violations:
        raise ValidationError(violations)

    vx = VariableIndex(inst)
    G, T = vx.n_gens, vx.T
    hours = inst.period_hours

    c = np.zeros(vx.n_z)
    b = np.zeros(vx.n_y)
    lb = np.zeros(vx.n)
    ub = np.ones(vx.n)  # z defaults; y overwritten below
    yoff = vx.n_z

    for gi, gen in enumerate(inst.generators):
        for t in range(T):
            c[vx.u(gi, t)] = gen.no_load_cost
            c[vx.v(gi, t)] = gen.startup_cost
            c[vx.w(gi, t)] = gen.shutdown_cost
            pc = vx.p(gi, t)
            lb[pc], ub[pc] = 0.0, gen.p_max
            for k, (width, mcost) in enumerate(gen.segments):
                col = vx.p_seg(gi, t, k)
                lb[col], ub[col] = 0.0, width
                b[col - yoff] = mcost * hours
    for bid in vx.nonref_buses:
        for t in range(T):
            col = vx.theta(bid, t)
            lb[col], ub[col] = -INF, INF

    # ---- F block: z-only logic ----
    F = _RowBlock(vx.n_z)
    for gi, gen in enumerate(inst.generators):
        init = 1.0 if gen.init_on else 0.0
        for t in range(T):
            if t == 0:
                F.add(
                    [(vx.u(gi, 0), 1.0), (vx.v(gi, 0), -1.0), (vx.w(gi, 0), 1.0)],
                    "E",
                    init,
                )
            else:
                F.add(
                    [
                        (vx.u(gi, t), 1.0),
                        (vx.u(gi, t - 1), -1.0),
                        (vx.v(gi, t), -1.0),
                        (vx.w(gi, t), 1.0),
                    ],
                    "E",
                    0.0,
                )
            F.add([(vx.v(gi, t), 1.0), (vx.w(gi, t), 1.0)], "L", 1.0)
        for t in range(T):
            ent = [(vx.v(gi, tau), 1.0) for tau in range(max(0, t - gen.min_up + 1), t + 1)]
            ent.append((vx.u(gi, t), -1.0))
            F.add(ent, "L", 0.0)
            ent = [(vx.w(gi, tau), 1.0) for tau in range(max(0, t - gen.min_down + 1), t + 1)]
            ent.append((vx.u(gi, t), 1.0))
            F.add(ent, "L", 1.0)
        # initial-state forcing
        if gen.init_on and gen.init_periods_in_state < gen.min_up:
            for t in range(min(gen.min_up - gen.init_periods_in_state, T)):
                F.add([(vx.u(gi, t), 1.0)], "E", 1.0)
        if not gen.init_on and gen.init_periods_in_state < gen.min_down:
            for t in range(min(gen.min_down - gen.init_periods_in_state, T)):
                F.add([(vx.u(gi, t), 1.0)], "E", 0.0)

    # ---- A/B block: capacity, segment caps, ramps ----
    Az = _RowBlock(vx.n_z)
    By = _RowBlock(vx.n_y)
    ab_sense: list = []
    ab_rhs: list = []

    def add_ab(z_ent, y_ent, sense, rhs):
        Az.add(z_ent, sense, rhs)
        By.add([(col - yoff, val) for col, val in y_ent], sense, rhs)
        ab_sense.append(sense)
        ab_rhs.append(rhs)

    for gi, gen in enumerate(inst.generators):
        K = len(gen.segments)
        init_u = 1.0 if gen.init_on else 0.0
        for t in range(T):
            y_ent = [(vx.p(gi, t), 1.0)] + [
                (vx.p_seg(gi, t, k), -1.0) for k in range(K)
            ]
            add_ab([(vx.u(gi, t), -gen.p_min)], y_ent, "E", 0.0)
            for k, (width, _) in enumerate(gen.segments):
                add_ab(
                    [(vx.u(gi, t), -width)], [(vx.p_seg(gi, t, k), 1.0)], "L", 0.0
                )
            if t == 0:
                add_ab(
                    [(vx.v(gi, 0), -gen.startup_ramp)],
                    [(vx.p(gi, 0), 1.0)],
                    "L",
                    gen.init_power + gen.ramp_up * init_u,
                )
                add_ab(
                    [
                        (vx.u(gi, 0), -gen.ramp_down),
                        (vx.w(gi, 0), -gen.shutdown_ramp),
                    ],
                    [(vx.p(gi, 0), -1.0)],
                    "L",
                    -gen.init_power,
                )
            else:
                add_ab(
                    [
                        (vx.u(gi, t - 1), -gen.ramp_up),
                        (vx.v(gi, t), -gen.startup_ramp),
                    ],
                    [(vx.p(gi, t), 1.0), (vx.p(gi, t - 1), -1.0)],
                    "L",
                    0.0,
                )
                add_ab(
                    [
                        (vx.u(gi, t), -gen.ramp_down),
                        (vx.w(gi, t), -gen.shutdown_ramp),
                    ],
                    [(vx.p(gi, t - 1), 1.0), (vx.p(gi, t), -1.0)],
                    "L",
                    0.0,
                )

    # ---- H block: line flow limits (y-only) ----
    ref = inst.reference_bus()
    H = _RowBlock(vx.n_y)
    for ln in inst.lines:
        for t in range(T):
            ent = []
            if ln.from_bus != ref:
                ent.append((vx.theta(ln.from_bus, t) - yoff, ln.susceptance))
            if ln.to_bus != ref:
                ent.append((vx.theta(ln.to_bus, t) - yoff, -ln.susceptance))
            H.add(ent, "L", ln.flow_limit)
            H.add([(col, -val) for col, val in ent], "L", ln.flow_limit)

    # ---- balance block: I_u y = d ----
    gens_at = {b.id: [] for b in inst.buses}
    for gi, gen in enumerate(inst.generators):
        gens_at[gen.bus].append(gi)
    incident = {b.id: [] for b in inst.buses}
    for ln in inst.lines:
        incident[ln.from_bus].append((ln, -1.0))  # flow leaves the from bus
        incident[ln.to_bus].append((ln, 1.0))
    Iu = _RowBlock(vx.n_y)
    bus_demand = {b.id: row for b, row in zip(inst.buses, inst.demand)}
    for bus in inst.buses:
        for t in range(T):
            acc: dict = {}
            for gi in gens_at[bus.id]:
                acc[vx.p(gi, t) - yoff] = acc.get(vx.p(gi, t) - yoff, 0.0) + 1.0
            for ln, sign in incident[bus.id]:
                # net injection from the line into this bus
                if ln.from_bus != ref:
                    col = vx.theta(ln.from_bus, t) - yoff
                    acc[col] = acc.get(col, 0.0) + sign * ln.susceptance
                if ln.to_bus != ref:
                    col = vx.theta(ln.to_bus, t) - yoff
                    acc[col] = acc.get(col, 0.0) - sign * ln.susceptance
            Iu.add(list(acc.items()), "E", bus_demand[bus.id][t])

    integer_mask = np.zeros(vx.n, dtype=bool)
    integer_mask[: vx.n_z] = True

    return CompactModel(
        vindex=vx,
        c=c,
        b=b,
        F=F.matrix(),
        f=np.asarray(F.rhs, dtype=float),
        F_sense=np.asarray(F.sense),
        H=H.matrix(),
        h=np.asarray(H.rhs, dtype=float),
        A=Az.matrix(),
        B=By.matrix(),
        g=np.asarray(ab_rhs, dtype=float),
        AB_sense=np.asarray(ab_sense),
        I_u=Iu.matrix(),
        d=np.asarray(Iu.rhs, dtype=float),
        lb=lb,
        ub=ub,
        integer_mask=integer_mask,
        name=inst.name,
    )


def model_stats(model: CompactModel) -> ModelStats:
    n_bin = int(model.integer_mask.sum())
    nnz = model.F.nnz + model.H.nnz + model.A.nnz + model.B.nnz + model.I_u.nnz
    return ModelStats(
        n_vars=model.vindex.n,
        n_binary=n_bin,
        n_continuous=model.vindex.n - n_bin,
        n_rows_by_block={
            "commitment": model.F.shape[0],
            "dispatch": model.H.shape[0],
            "coupling": model.A.shape[0],
            "balance": model.I_u.shape[0],
        },
        nonzeros=nnz,
    )


def _sensed_residual(lhs, rhs, sense):
    if len(rhs) == 0:
        return 0.0
    diff = lhs - rhs
    res = np.where(sense == "E", np.abs(diff), np.maximum(diff, 0.0))
    return float(res.max())


def evaluate(model: CompactModel, z, y) -> dict:
    """Objective and per-block constraint residuals at a candidate point."""
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if z.shape != (model.vindex.n_z,):
        raise DimensionError(f"z has shape {z.shape}, expected ({model.vindex.n_z},)")
    if y.shape != (model.vindex.n_y,):
        raise DimensionError(f"y has shape {y.shape}, expected ({model.vindex.n_y},)")
    res_h = 0.0
    if model.H.shape[0]:
        res_h = float(np.maximum(model.H @ y - model.h, 0.0).max())
    res_bal = 0.0
    if model.I_u.shape[0]:
        res_bal = float(np.abs(model.I_u @ y - model.d).max())
    return {
        "objective": float(model.c @ z + model.b @ y),
        "residuals": {
            "commitment": _sensed_residual(model.F @ z, model.f, model.F_sense),
            "dispatch": res_h,
            "coupling": _sensed_residual(
                model.A @ z + model.B @ y, model.g, model.AB_sense
            ),
            "balance": res_bal,
        },
    }


def max_residual(model: CompactModel, z, y) -> float:
    return max(evaluate(model, z, y)["residuals"].values())
