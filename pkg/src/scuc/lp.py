"""Bounded-variable revised simplex kernel.

Rows are converted internally to equalities with one slack column each
(<= : slack in [0, inf), >= : slack in (-inf, 0], = : slack fixed at 0).
Phase 1 minimizes the total bound infeasibility of the basic variables with a
composite +/-1 cost (no artificial columns); phase 2 prices the true
objective. The basis is kept as a sparse LU factorization plus a product-form
eta file, refactorized periodically.

Pricing is Dantzig with a Bland's-rule fallback after a run of degenerate
pivots. Tolerances: pivot 1e-9, primal feasibility 1e-7.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import ArgumentError, NumericalError

INF = float("inf")

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
DEGENERATE_PIVOT_LIMIT = 1000
REFACTOR_EVERY = 100


class DeadlineExpired(Exception):
    """Internal: the caller-supplied wall-clock deadline passed mid-solve."""


class LpProblem:
    """minimize c'x subject to sensed sparse rows and column bounds."""

    def __init__(self, c, A, senses, rhs, lb, ub):
        self.c = np.asarray(c, dtype=float)
        self.A = sp.csr_matrix(A) if not sp.issparse(A) else A.tocsr()
        self.senses = np.asarray(senses)
        self.rhs = np.asarray(rhs, dtype=float)
        self.lb = np.asarray(lb, dtype=float)
        self.ub = np.asarray(ub, dtype=float)
        m, n = self.A.shape
        if self.c.shape != (n,) or self.lb.shape != (n,) or self.ub.shape != (n,):
            raise ArgumentError("column vector lengths disagree with A")
        if self.senses.shape != (m,) or self.rhs.shape != (m,):
            raise ArgumentError("row vector lengths disagree with A")
        if not np.all(np.isfinite(self.c)):
            raise ArgumentError("objective coefficients must be finite")
        if np.any(self.lb > self.ub):
            bad = int(np.argmax(self.lb > self.ub))
            raise ArgumentError(f"column {bad}: lower bound exceeds upper bound")
        bad_sense = set(self.senses.tolist()) - {"L", "G", "E"}
        if bad_sense:
            raise ArgumentError(f"unknown row senses {sorted(bad_sense)}")

    @property
    def n_rows(self):
        return self.A.shape[0]

    @property
    def n_cols(self):
        return self.A.shape[1]

    def with_bounds(self, lb, ub) -> "LpProblem":
        """Same rows/objective with replacement column bounds (shares A)."""
        out = object.__new__(LpProblem)
        out.c = self.c
        out.A = self.A
        out.senses = self.senses
        out.rhs = self.rhs
        out.lb = np.asarray(lb, dtype=float)
        out.ub = np.asarray(ub, dtype=float)
        if np.any(out.lb > out.ub):
            raise ArgumentError("lower bound exceeds upper bound")
        return out


@dataclass
class LpSolution:
    status: str
    x: Optional[np.ndarray]
    objective: Optional[float]
    duals: Optional[np.ndarray]
    iterations: int
    dual_objective: Optional[float] = None
    farkas: Optional[np.ndarray] = None
    farkas_certificate: Optional[float] = None
    basis_state: Optional[tuple] = None  # (basis, vstat) for warm starts


_AT_LOWER, _AT_UPPER, _BASIC, _FREE = 0, 1, 2, 3


class _Simplex:
    def __init__(self, prob: LpProblem, deadline=None, start=None):
        self.prob = prob
        self.deadline = deadline
        m, n = prob.A.shape
        self.m, self.n = m, n
        senses = prob.senses
        slack_lo = np.where(senses == "L", 0.0, np.where(senses == "G", -INF, 0.0))
        slack_hi = np.where(senses == "L", INF, np.where(senses == "G", 0.0, 0.0))
        self.W = sp.hstack([prob.A, sp.eye(m, format="csc")], format="csc")
        self.WT = self.W.T.tocsr()
        self.cost = np.concatenate([prob.c, np.zeros(m)])
        self.lo = np.concatenate([prob.lb, slack_lo])
        self.hi = np.concatenate([prob.ub, slack_hi])
        self.rhs = prob.rhs
        self.ncols = n + m
        self.dual_tol = 1e-8 * (1.0 + float(np.abs(self.cost).max(initial=0.0)))

        ok = False
        if start is not None:
            ok = self._load_start(*start)
        if not ok:
            self.vstat = np.where(
                np.isfinite(self.lo),
                _AT_LOWER,
                np.where(np.isfinite(self.hi), _AT_UPPER, _FREE),
            ).astype(np.int8)
            self.basis = np.arange(n, n + m)
            self.vstat[self.basis] = _BASIC
            self._set_xn()
            self._refactor()

        self.iterations = 0
        self.phase = 1

    # -- basis linear algebra -------------------------------------------------

    def _set_xn(self):
        self.xn = np.where(
            self.vstat == _AT_LOWER,
            self.lo,
            np.where(self.vstat == _AT_UPPER, self.hi, 0.0),
        )

    def _load_start(self, basis, vstat) -> bool:
        basis = np.asarray(basis, dtype=np.int64)
        vstat = np.asarray(vstat, dtype=np.int8).copy()
        if basis.shape != (self.m,) or vstat.shape != (self.ncols,):
            return False
        if np.count_nonzero(vstat == _BASIC) != self.m:
            return False
        # nonbasic statuses must point at finite bounds under the new bounds
        at_lo = vstat == _AT_LOWER
        at_up = vstat == _AT_UPPER
        vstat[at_lo & ~np.isfinite(self.lo)] = _FREE
        vstat[at_up & ~np.isfinite(self.hi)] = _FREE
        self.basis = basis.copy()
        self.vstat = vstat
        self._set_xn()
        try:
            self._refactor()
        except NumericalError:
            return False
        return True

    def _refactor(self):
        B = self.W[:, self.basis]
        try:
            self.lu = splu(B.tocsc())
        except RuntimeError as exc:
            raise NumericalError(f"singular basis: {exc}") from exc
        self.etas = []
        z = self.xn.copy()
        z[self.basis] = 0.0
        b_eff = self.rhs - self.W @ z
        self.xB = self.lu.solve(b_eff)
        if not np.all(np.isfinite(self.xB)):
            raise NumericalError("basis solve produced non-finite values")
        self._clean = True

    def _ftran(self, v):
        t = self.lu.solve(v)
        for r, eta in self.etas:
            tr = t[r]
            if tr != 0.0:
                t = t + eta * tr
                t[r] = eta[r] * tr
        return t

    def _btran(self, v):
        t = np.array(v, dtype=float)
        for r, eta in reversed(self.etas):
            t[r] = eta @ t
        return self.lu.solve(t, trans="T")

    def _col_dense(self, j):
        z = np.zeros(self.m)
        s, e = self.W.indptr[j], self.W.indptr[j + 1]
        z[self.W.indices[s:e]] = self.W.data[s:e]
        return z

    def _push_eta(self, r, alpha):
        ar = alpha[r]
        eta = -alpha / ar
        eta[r] = 1.0 / ar
        self.etas.append((r, eta))
        self._clean = False
        if len(self.etas) >= REFACTOR_EVERY:
            self._refactor()

    # -- main loop ------------------------------------------------------------

    def solve(self) -> LpSolution:
        cap = 50 * (self.m + self.n)
        degen_run = 0
        bland = False
        stalls = 0

        while True:
            if self.deadline is not None and time.monotonic() > self.deadline:
                raise DeadlineExpired
            self.iterations += 1
            if self.iterations > cap:
                raise NumericalError(
                    f"iteration cap {cap} exceeded (possible cycling)"
                )

            blo = self.lo[self.basis]
            bhi = self.hi[self.basis]
            below = self.xB < blo - FEAS_TOL
            above = self.xB > bhi + FEAS_TOL
            infeasible = bool(below.any() or above.any())

            if self.phase == 2 and infeasible:
                if not self._clean:
                    self._refactor()
                    continue
                self.phase = 1
            if self.phase == 1 and not infeasible:
                self.phase = 2
                continue

            if self.phase == 1:
                dB = above.astype(float) - below.astype(float)
                red = -(self.WT @ self._btran(dB))
                tol = FEAS_TOL
            else:
                dB = self.cost[self.basis]
                red = self.cost - self.WT @ self._btran(dB)
                tol = self.dual_tol

            viol = np.zeros(self.ncols)
            at_lo = self.vstat == _AT_LOWER
            at_up = self.vstat == _AT_UPPER
            fr = self.vstat == _FREE
            viol[at_lo] = -red[at_lo]
            viol[at_up] = red[at_up]
            viol[fr] = np.abs(red[fr])
            cand = viol > tol

            if not cand.any():
                if not self._clean:
                    self._refactor()
                    continue
                if self.phase == 1:
                    return self._finish_infeasible(dB)
                return self._finish_optimal(red)

            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                q = int(np.argmax(viol))
            sigma = 1.0 if (at_lo[q] or (fr[q] and red[q] < 0)) else -1.0

            alpha = self._ftran(self._col_dense(q))
            delta = -sigma * alpha  # rate of change of each basic value

            ratios = np.full(self.m, INF)
            feas = ~(below | above)
            mask = feas & (delta < -PIVOT_TOL) & np.isfinite(blo)
            ratios[mask] = (self.xB[mask] - blo[mask]) / (-delta[mask])
            mask = feas & (delta > PIVOT_TOL) & np.isfinite(bhi)
            ratios[mask] = (bhi[mask] - self.xB[mask]) / delta[mask]
            if self.phase == 1:
                mask = below & (delta > PIVOT_TOL)
                ratios[mask] = (blo[mask] - self.xB[mask]) / delta[mask]
                mask = above & (delta < -PIVOT_TOL)
                ratios[mask] = (self.xB[mask] - bhi[mask]) / (-delta[mask])
            np.maximum(ratios, 0.0, out=ratios)

            span = self.hi[q] - self.lo[q]
            tflip = span if np.isfinite(span) else INF
            rmin = ratios.min() if self.m else INF
            theta = min(rmin, tflip)

            if theta == INF:
                if self.phase == 2:
                    return self._finish_unbounded(q, sigma, alpha)
                raise NumericalError("phase-1 ratio test found no blocking bound")

            if tflip <= rmin:
                # bound flip, no basis change
                self.xB += delta * tflip
                self.vstat[q] = _AT_UPPER if self.vstat[q] == _AT_LOWER else _AT_LOWER
                self.xn[q] = self.hi[q] if self.vstat[q] == _AT_UPPER else self.lo[q]
                degen_run = 0 if tflip > 1e-12 else degen_run + 1
            else:
                # pick the blocking row; among ties prefer the largest pivot
                tie = ratios <= rmin + 1e-12
                tie_idx = np.flatnonzero(tie)
                pos = int(tie_idx[np.argmax(np.abs(delta[tie_idx]))])
                if abs(alpha[pos]) < PIVOT_TOL:
                    if not self._clean:
                        self._refactor()
                        stalls += 1
                        if stalls > 50:
                            raise NumericalError("persistent tiny pivots")
                        continue
                    raise NumericalError("pivot element below tolerance")
                stalls = 0
                lcol = int(self.basis[pos])
                if below[pos]:
                    leave_stat, leave_val = _AT_LOWER, blo[pos]
                elif above[pos]:
                    leave_stat, leave_val = _AT_UPPER, bhi[pos]
                elif delta[pos] < 0:
                    leave_stat, leave_val = _AT_LOWER, blo[pos]
                else:
                    leave_stat, leave_val = _AT_UPPER, bhi[pos]

                enter_val = self.xn[q] + sigma * theta
                self.xB += delta * theta
                self.vstat[lcol] = leave_stat
                self.xn[lcol] = leave_val
                self.basis[pos] = q
                self.vstat[q] = _BASIC
                self.xB[pos] = enter_val
                self._push_eta(pos, alpha)
                degen_run = 0 if theta > 1e-12 else degen_run + 1

            if degen_run > DEGENERATE_PIVOT_LIMIT:
                bland = True

    # -- terminal states --------------------------------------------------

    def _x_full(self):
        x = self.xn.copy()
        x[self.basis] = self.xB
        return x

    def _finish_optimal(self, red) -> LpSolution:
        x = self._x_full()
        y = self._btran(self.cost[self.basis])
        obj = float(self.cost @ x)
        nonbasic = self.vstat != _BASIC
        contrib = red[nonbasic] * x[nonbasic]
        dual_obj = float(y @ self.rhs + contrib.sum())
        return LpSolution(
            status=OPTIMAL,
            x=x[: self.n].copy(),
            objective=obj,
            duals=y,
            iterations=self.iterations,
            dual_objective=dual_obj,
            basis_state=(self.basis.copy(), self.vstat.copy()),
        )

    def _farkas_value(self, y):
        sigma = self.WT @ y
        with np.errstate(invalid="ignore"):
            terms = np.where(sigma > 0, sigma * self.hi, sigma * self.lo)
        terms[np.abs(sigma) < 1e-12] = 0.0
        return float(terms.sum() - y @ self.rhs)

    def _finish_infeasible(self, dB) -> LpSolution:
        y = self._btran(dB)
        best_y, best_val = None, INF
        for cand in (y, -y):
            val = self._farkas_value(cand)
            if val < best_val:
                best_y, best_val = cand, val
        farkas = best_y if best_val <= -FEAS_TOL else None
        cert = best_val if farkas is not None else None
        return LpSolution(
            status=INFEASIBLE,
            x=None,
            objective=None,
            duals=None,
            iterations=self.iterations,
            farkas=farkas,
            farkas_certificate=cert,
            basis_state=(self.basis.copy(), self.vstat.copy()),
        )

    def _finish_unbounded(self, q, sigma, alpha) -> LpSolution:
        return LpSolution(
            status=UNBOUNDED,
            x=None,
            objective=None,
            duals=None,
            iterations=self.iterations,
        )


def solve_lp(prob: LpProblem, deadline=None, start=None) -> LpSolution:
    """Solve an LP to proven optimality, infeasibility, or unboundedness.

    Deterministic for a fixed problem. ``deadline`` is an absolute
    time.monotonic() instant; crossing it raises DeadlineExpired. ``start``
    is an optional (basis, vstat) pair from a previous LpSolution for warm
    starting after bound changes.
    """
    if prob.n_rows == 0:
        return _solve_box_only(prob)
    return _Simplex(prob, deadline=deadline, start=start).solve()


def _solve_box_only(prob: LpProblem) -> LpSolution:
    x = np.where(prob.c >= 0, prob.lb, prob.ub)
    x[(prob.c == 0) & ~np.isfinite(x)] = 0.0
    if not np.all(np.isfinite(x)):
        return LpSolution(UNBOUNDED, None, None, None, 0)
    obj = float(prob.c @ x)
    return LpSolution(
        OPTIMAL, x, obj, np.zeros(0), 0, dual_objective=obj,
        basis_state=None,
    )


def solve_lp_fixed(prob: LpProblem, fixings: dict, deadline=None, start=None) -> LpSolution:
    """Solve with a partial assignment: bounds pinched to the fixed values.

    A fixing outside the variable's declared bounds makes the problem
    trivially infeasible.
    """
    lb = prob.lb.copy()
    ub = prob.ub.copy()
    for j, val in fixings.items():
        j = int(j)
        if j < 0 or j >= prob.n_cols:
            raise ArgumentError(f"fixing index {j} out of range")
        if val < prob.lb[j] - 1e-9 or val > prob.ub[j] + 1e-9:
            return LpSolution(INFEASIBLE, None, None, None, 0)
        lb[j] = ub[j] = val
    return solve_lp(prob.with_bounds(lb, ub), deadline=deadline, start=start)
