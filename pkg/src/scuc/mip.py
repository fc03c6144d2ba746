"""Branch-and-bound over the compact MILP with relative-gap termination.

Node selection is best-bound (FIFO among ties); branching picks the most
fractional integer column (lowest index among ties). At every node a rounding
heuristic fixes the integer block to the nearest integers and re-solves the
continuous dispatch LP, admitting the point as an incumbent when feasible.
Termination: (UB - LB) / max(|UB|, 1e-9) <= rel_gap.

The optional event sink receives one line per processed node:
``node=<k> depth=<d> status=<s> bound=<b> ub=<ub> lb=<lb> gap=<g>``.
"""

from __future__ import annotations

import heapq
import itertools
import math
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .compiler import CompactModel
from .errors import ModelError, SolveCancelled
from .instance import SolverOptions
from . import lp as lpmod
from .lp import DeadlineExpired, LpProblem, LpSolution, solve_lp, solve_lp_fixed

INF = float("inf")

OPTIMAL_WITHIN_GAP = "optimal_within_gap"
TIME_LIMIT = "time_limit"
INFEASIBLE = "infeasible"

INT_TOL = 1e-6
RESIDUAL_TOL = 1e-6


@dataclass
class MilpProblem:
    """A generic MILP: an LpProblem plus a mask of integer-constrained columns."""

    lp: LpProblem
    integer_mask: np.ndarray

    def __post_init__(self):
        self.integer_mask = np.asarray(self.integer_mask, dtype=bool)
        if self.integer_mask.shape != (self.lp.n_cols,):
            raise ModelError("integer mask length disagrees with the problem")


def as_milp(model) -> MilpProblem:
    """Accept either a CompactModel or a MilpProblem."""
    if isinstance(model, MilpProblem):
        return model
    if isinstance(model, CompactModel):
        return from_compact(model)
    raise ModelError(f"cannot solve object of type {type(model).__name__}")


def from_compact(model: CompactModel) -> MilpProblem:
    n_z, n_y = model.vindex.n_z, model.vindex.n_y
    blocks = []
    senses = []
    rhs = []
    if model.F.shape[0]:
        blocks.append(sp.hstack([model.F, sp.csr_matrix((model.F.shape[0], n_y))]))
        senses.append(model.F_sense)
        rhs.append(model.f)
    if model.H.shape[0]:
        blocks.append(sp.hstack([sp.csr_matrix((model.H.shape[0], n_z)), model.H]))
        senses.append(np.full(model.H.shape[0], "L"))
        rhs.append(model.h)
    if model.A.shape[0]:
        blocks.append(sp.hstack([model.A, model.B]))
        senses.append(model.AB_sense)
        rhs.append(model.g)
    if model.I_u.shape[0]:
        blocks.append(sp.hstack([sp.csr_matrix((model.I_u.shape[0], n_z)), model.I_u]))
        senses.append(np.full(model.I_u.shape[0], "E"))
        rhs.append(model.d)
    if blocks:
        A = sp.vstack(blocks).tocsr()
        senses = np.concatenate(senses)
        rhs = np.concatenate(rhs)
    else:
        A = sp.csr_matrix((0, n_z + n_y))
        senses = np.zeros(0, dtype="<U1")
        rhs = np.zeros(0)
    prob = LpProblem(
        c=np.concatenate([model.c, model.b]),
        A=A,
        senses=senses,
        rhs=rhs,
        lb=model.lb,
        ub=model.ub,
    )
    return MilpProblem(lp=prob, integer_mask=model.integer_mask.copy())


@dataclass(frozen=True)
class NodeRecord:
    depth: int
    branch_col: int       # -1 at the root
    direction: int        # 0 = down child, 1 = up child, -1 at the root
    bound: float          # parent LP bound at creation


@dataclass
class MipResult:
    status: str
    z: Optional[np.ndarray]
    y: Optional[np.ndarray]
    x: Optional[np.ndarray]
    objective: float           # incumbent upper bound
    best_bound: float          # proven lower bound
    rel_gap_achieved: float
    nodes_explored: int
    solve_seconds: float


def rel_gap(ub: float, lb: float) -> float:
    if ub == INF:
        return INF
    return (ub - lb) / max(abs(ub), 1e-9)


def box_lower_bound(prob: LpProblem) -> float:
    """A valid LB from minimizing the objective over the bound box alone."""
    with np.errstate(invalid="ignore"):
        terms = np.where(prob.c > 0, prob.c * prob.lb, prob.c * prob.ub)
    terms[prob.c == 0] = 0.0
    total = terms.sum()
    return float(total) if np.isfinite(total) else -INF


def root_relaxation(model) -> LpSolution:
    """LP relaxation of the model (integrality dropped); a valid global LB."""
    return solve_lp(as_milp(model).lp)


def _row_residual(prob: LpProblem, x: np.ndarray) -> float:
    res = 0.0
    if prob.n_rows:
        diff = prob.A @ x - prob.rhs
        per = np.where(
            prob.senses == "E",
            np.abs(diff),
            np.where(prob.senses == "L", np.maximum(diff, 0.0), np.maximum(-diff, 0.0)),
        )
        res = float(per.max())
    lo = np.maximum(prob.lb - x, 0.0)
    hi = np.maximum(x - prob.ub, 0.0)
    lo[~np.isfinite(prob.lb)] = 0.0
    hi[~np.isfinite(prob.ub)] = 0.0
    return max(res, float(lo.max(initial=0.0)), float(hi.max(initial=0.0)))


class _Node:
    __slots__ = ("bound", "seq", "depth", "overrides", "warm", "record")

    def __init__(self, bound, seq, depth, overrides, warm, record):
        self.bound = bound
        self.seq = seq
        self.depth = depth
        self.overrides = overrides  # {col: (lo, hi)}
        self.warm = warm
        self.record = record

    def __lt__(self, other):
        return (self.bound, self.seq) < (other.bound, other.seq)


def _emit(sink, line):
    if sink is None:
        return
    if callable(sink):
        sink(line)
    else:
        sink.write(line + "\n")


class _Search:
    def __init__(self, milp, options, event_sink, cancel_event, deadline):
        self.milp = milp
        self.options = options
        self.sink = event_sink
        self.cancel_event = cancel_event
        self.deadline = deadline
        self.int_cols = np.flatnonzero(milp.integer_mask)
        self.heap: list = []
        self.seq = itertools.count()
        self.ub = INF
        self.incumbent = None
        self.fathom_lb = INF
        self.root_lb = box_lower_bound(milp.lp)
        self.nodes = 0
        self.lb_reported = -INF

    # the LB proven so far: open nodes, in-flight bounds, gap-fathomed floors
    def global_lb(self, inflight_bounds=()):
        cands = [self.fathom_lb, self.ub]
        if self.heap:
            cands.append(self.heap[0].bound)
        cands.extend(inflight_bounds)
        lb = min(cands)
        if lb == INF and self.ub == INF:
            lb = self.root_lb
        self.lb_reported = max(self.lb_reported, min(lb, self.ub))
        return self.lb_reported

    def gap_met(self, lb):
        return self.ub < INF and rel_gap(self.ub, lb) <= self.options.rel_gap

    def prune(self, bound) -> bool:
        if self.ub == INF:
            return False
        return (self.ub - bound) <= self.options.rel_gap * max(abs(self.ub), 1e-9)

    def check_interrupts(self):
        if self.cancel_event is not None and self.cancel_event.is_set():
            raise SolveCancelled(
                "cancelled", objective=self.ub, best_bound=self.global_lb()
            )
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise DeadlineExpired

    def node_bounds(self, overrides):
        lb = self.milp.lp.lb.copy()
        ub = self.milp.lp.ub.copy()
        for col, (lo, hi) in overrides.items():
            lb[col] = max(lb[col], lo)
            ub[col] = min(ub[col], hi)
            if lb[col] > ub[col]:
                return None, None
        return lb, ub

    def eval_node(self, node):
        """Pure part of node processing: LP relaxation plus rounding heuristic."""
        lb, ub = self.node_bounds(node.overrides)
        if lb is None:
            return None, None
        prob = self.milp.lp.with_bounds(lb, ub)
        sol = solve_lp(prob, deadline=self.deadline, start=node.warm)
        heur = None
        if (
            sol.status == lpmod.OPTIMAL
            and len(self.int_cols)
            and not self._integral(sol.x)
        ):
            zr = np.rint(sol.x[self.int_cols])
            zr = np.clip(zr, self.milp.lp.lb[self.int_cols], self.milp.lp.ub[self.int_cols])
            fix = {int(c): float(v) for c, v in zip(self.int_cols, zr)}
            heur = solve_lp_fixed(
                self.milp.lp, fix, deadline=self.deadline, start=sol.basis_state
            )
        return sol, heur

    def _integral(self, x) -> bool:
        vals = x[self.int_cols]
        return bool(np.all(np.abs(vals - np.rint(vals)) <= INT_TOL))

    def try_incumbent(self, x, obj) -> bool:
        if obj >= self.ub - 1e-12:
            return False
        if not self._integral(x):
            return False
        if _row_residual(self.milp.lp, x) > RESIDUAL_TOL:
            return False
        self.ub = obj
        self.incumbent = x.copy()
        return True

    def process(self, node, sol, heur):
        """Fold a node's LP results into the global state; returns child nodes."""
        self.nodes += 1
        children = []
        if sol is None or sol.status == lpmod.INFEASIBLE:
            status = "infeasible"
        elif sol.status != lpmod.OPTIMAL:
            raise ModelError(f"node relaxation ended {sol.status}; model is unbounded")
        else:
            bound = max(sol.objective, node.bound)
            if heur is not None and heur.status == lpmod.OPTIMAL:
                self.try_incumbent(heur.x, heur.objective)
            if self._integral(sol.x):
                status = "integral"
                self.try_incumbent(sol.x, sol.objective)
            elif self.prune(bound):
                status = "fathomed"
                self.fathom_lb = min(self.fathom_lb, bound)
            else:
                status = "branched"
                vals = sol.x[self.int_cols]
                frac = vals - np.floor(vals)
                score = np.minimum(frac, 1.0 - frac)
                col = int(self.int_cols[int(np.argmax(score))])
                val = sol.x[col]
                down = dict(node.overrides)
                down[col] = (-INF, math.floor(val + INT_TOL))
                up = dict(node.overrides)
                up[col] = (math.ceil(val - INT_TOL), INF)
                for direction, ov in ((0, down), (1, up)):
                    children.append(
                        _Node(
                            bound=bound,
                            seq=next(self.seq),
                            depth=node.depth + 1,
                            overrides=ov,
                            warm=sol.basis_state,
                            record=NodeRecord(node.depth + 1, col, direction, bound),
                        )
                    )
        lb = self.global_lb()
        _emit(
            self.sink,
            f"node={self.nodes} depth={node.depth} status={status} "
            f"bound={(sol.objective if sol is not None and sol.status == lpmod.OPTIMAL else float('nan')):.10g} "
            f"ub={self.ub:.10g} lb={lb:.10g} gap={rel_gap(self.ub, lb):.6g}",
        )
        return children


def solve_mip(
    model,
    options: Optional[SolverOptions] = None,
    event_sink=None,
    cancel_event=None,
    require_binaries: bool = False,
) -> MipResult:
    """Branch-and-bound solve of a CompactModel or MilpProblem."""
    options = options or SolverOptions()
    milp = as_milp(model)
    t0 = time.monotonic()
    deadline = None if options.time_limit is None else t0 + options.time_limit

    if not milp.integer_mask.any():
        if require_binaries:
            raise ModelError("integrality mask is empty but MIP semantics were demanded")
        return _solve_pure_lp(milp, t0)

    search = _Search(milp, options, event_sink, cancel_event, deadline)
    root = _Node(
        bound=search.root_lb,
        seq=next(search.seq),
        depth=0,
        overrides={},
        warm=None,
        record=NodeRecord(0, -1, -1, search.root_lb),
    )
    heapq.heappush(search.heap, root)

    timed_out = False
    try:
        if options.worker_count <= 1:
            timed_out = _run_sequential(search)
        else:
            timed_out = _run_parallel(search, options.worker_count)
    except DeadlineExpired:
        timed_out = True

    lb = search.global_lb()
    elapsed = time.monotonic() - t0
    if search.incumbent is None:
        if timed_out:
            return MipResult(TIME_LIMIT, None, None, None, INF, lb, INF, search.nodes, elapsed)
        return MipResult(INFEASIBLE, None, None, None, INF, INF, 0.0, search.nodes, elapsed)
    x = search.incumbent
    z = x[milp.integer_mask]
    y = x[~milp.integer_mask]
    gap = rel_gap(search.ub, lb)
    status = TIME_LIMIT if (timed_out and gap > options.rel_gap) else OPTIMAL_WITHIN_GAP
    return MipResult(
        status=status,
        z=z,
        y=y,
        x=x,
        objective=search.ub,
        best_bound=min(lb, search.ub),
        rel_gap_achieved=gap,
        nodes_explored=search.nodes,
        solve_seconds=elapsed,
    )


def _run_sequential(search: _Search) -> bool:
    while search.heap:
        search.check_interrupts()
        lb = search.global_lb()
        if search.gap_met(lb):
            return False
        node = heapq.heappop(search.heap)
        if search.prune(node.bound):
            search.fathom_lb = min(search.fathom_lb, node.bound)
            continue
        sol, heur = search.eval_node(node)
        for child in search.process(node, sol, heur):
            heapq.heappush(search.heap, child)
    return False


def _run_parallel(search: _Search, workers: int) -> bool:
    with ThreadPoolExecutor(max_workers=workers) as pool:
        inflight = {}
        while search.heap or inflight:
            search.check_interrupts()
            lb = search.global_lb(b for _, b in inflight.values())
            if search.gap_met(lb) and not inflight:
                return False
            while search.heap and len(inflight) < workers:
                node = heapq.heappop(search.heap)
                if search.prune(node.bound):
                    search.fathom_lb = min(search.fathom_lb, node.bound)
                    continue
                fut = pool.submit(search.eval_node, node)
                inflight[fut] = (node, node.bound)
            if not inflight:
                continue
            done, _ = wait(list(inflight), return_when=FIRST_COMPLETED)
            for fut in sorted(done, key=lambda f: inflight[f][0].seq):
                node, _b = inflight.pop(fut)
                try:
                    sol, heur = fut.result()
                except DeadlineExpired:
                    for pending in inflight:
                        pending.cancel()
                    return True
                for child in search.process(node, sol, heur):
                    heapq.heappush(search.heap, child)
    return False


def _solve_pure_lp(milp: MilpProblem, t0: float) -> MipResult:
    sol = solve_lp(milp.lp)
    elapsed = time.monotonic() - t0
    if sol.status == lpmod.INFEASIBLE:
        return MipResult(INFEASIBLE, None, None, None, INF, INF, 0.0, 1, elapsed)
    if sol.status != lpmod.OPTIMAL:
        raise ModelError("relaxation is unbounded")
    return MipResult(
        status=OPTIMAL_WITHIN_GAP,
        z=np.zeros(0),
        y=sol.x,
        x=sol.x,
        objective=sol.objective,
        best_bound=sol.objective,
        rel_gap_achieved=0.0,
        nodes_explored=1,
        solve_seconds=elapsed,
    )
