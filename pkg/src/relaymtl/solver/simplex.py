"""Dense bounded-variable simplex.

Rows ``a x (<=|=|>=) b`` get one slack each (``a x + s = b``) so that every
variable, slacks included, only carries simple bounds. The tableau
``B^-1 [A I]`` is kept explicitly and rebuilt from the basis every
``refactor_every`` pivots to stop round-off from accumulating.

Primal simplex (Dantzig pricing, Bland after a stall) finishes a primal
feasible basis; dual simplex repairs primal infeasibility from a dual
feasible basis, which is the warm start used by branch and bound after a
bound change. A fresh solve places nonbasic variables on the bound favoured
by their cost; if that basis is not dual feasible, a zero-cost dual pass
finds a feasible point first.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

AT_LOWER, AT_UPPER, FREE, BASIC = 0, 1, 2, 3

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


class SimplexBreakdown(RuntimeError):
    """Numerical failure; carries the basis for diagnosis."""

    def __init__(self, message, basis=None):
        super().__init__(message)
        self.basis = basis


@dataclass
class LPResult:
    status: str
    x: np.ndarray = field(default=None, repr=False)
    objective: float = math.nan
    iterations: int = 0


class BoundedSimplex:
    def __init__(self, c, A, senses, b, lower, upper, *, feas_tol=1e-8, opt_tol=1e-9,
                 pivot_tol=1e-9, max_iter=50000, refactor_every=60, stall_limit=40):
        A = np.asarray(A, float).reshape(len(b), -1) if len(b) else np.zeros((0, len(c)))
        self.m, self.n = A.shape
        m, n = self.m, self.n
        self.Af = np.hstack([A, np.eye(m)])
        self.b = np.asarray(b, float)
        self.c = np.concatenate([np.asarray(c, float), np.zeros(m)])
        lo = np.concatenate([np.asarray(lower, float), np.zeros(m)])
        hi = np.concatenate([np.asarray(upper, float), np.zeros(m)])
        for i, s in enumerate(senses):
            if s == "<=":
                hi[n + i] = math.inf
            elif s == ">=":
                lo[n + i] = -math.inf
            elif s != "=":
                raise ValueError(f"unknown sense {s!r}")
        self.lo, self.hi = lo, hi
        self.feas_tol, self.opt_tol, self.pivot_tol = feas_tol, opt_tol, pivot_tol
        self.max_iter, self.refactor_every, self.stall_limit = max_iter, refactor_every, stall_limit
        self.basis = None
        self.status = None
        self.x = None
        self.T = None
        self.d = None
        self.since_refactor = 0
        self.iterations = 0
        self._limit = max_iter

    # -- state ---------------------------------------------------------------

    def _nonbasic_value(self, j, st):
        if st == AT_LOWER:
            return self.lo[j]
        if st == AT_UPPER:
            return self.hi[j]
        return 0.0

    def _place(self, j, prefer_upper=False):
        lo, hi = self.lo[j], self.hi[j]
        if math.isfinite(lo) and (not prefer_upper or not math.isfinite(hi)):
            return AT_LOWER
        if math.isfinite(hi):
            return AT_UPPER
        return FREE

    def _cold_start(self):
        N = self.n + self.m
        self.basis = np.arange(self.n, N)
        self.status = np.empty(N, dtype=np.int8)
        for j in range(self.n):
            self.status[j] = self._place(j, prefer_upper=self.c[j] < 0)
        self.status[self.n:] = BASIC
        self.refactor()

    def refactor(self):
        N = self.n + self.m
        self.x = np.zeros(N)
        for j in range(N):
            if self.status[j] != BASIC:
                self.x[j] = self._nonbasic_value(j, self.status[j])
        if self.m:
            Bm = self.Af[:, self.basis]
            nb = np.ones(N, dtype=bool)
            nb[self.basis] = False
            rhs = self.b - self.Af @ self.x
            try:
                sol = np.linalg.solve(Bm, np.column_stack([self.Af[:, nb], rhs]))
            except np.linalg.LinAlgError as exc:
                raise SimplexBreakdown("singular basis", self.basis.copy()) from exc
            # basic columns of B^-1 [A I] are unit vectors
            self.T = np.zeros((self.m, N))
            self.T[:, nb] = sol[:, :-1]
            self.T[np.arange(self.m), self.basis] = 1.0
            self.x[self.basis] = sol[:, -1]
        else:
            self.T = np.zeros((0, N))
        self.d = self.c - self.c[self.basis] @ self.T if self.m else self.c.copy()
        self.since_refactor = 0

    def _certify(self, tol=1e-7) -> bool:
        """Check the current point against the original data instead of the tableau.

        Primal: ``[A I] x = b`` and bounds hold. Dual: the multipliers read
        from the slack block of the tableau price every basic column to zero
        and every nonbasic one with the right sign. Failing either means the
        tableau has drifted.
        """
        x = self.x
        scale = max(1.0, float(np.max(np.abs(self.b), initial=0.0)))
        if self.m and np.max(np.abs(self.Af @ x - self.b)) > tol * scale:
            return False
        if np.any(x < self.lo - tol * np.maximum(1.0, np.abs(self.lo))) or \
                np.any(x > self.hi + tol * np.maximum(1.0, np.abs(self.hi))):
            return False
        if self.m:
            y = self.c[self.basis] @ self.T[:, self.n:]
            d = self.c - y @ self.Af
            if np.max(np.abs(d[self.basis])) > tol * max(1.0, float(np.max(np.abs(self.c)))):
                return False
            self.d = d
            self.d[self.basis] = 0.0
        return self._dual_feasible(tol)

    def save_state(self):
        """Full copy of the working tableau (heavier than :meth:`snapshot`, but no refactor on load)."""
        return (self.basis.copy(), self.status.copy(), self.T.copy(), self.x.copy(), self.d.copy(),
                self.lo.copy(), self.hi.copy(), self.since_refactor)

    def load_state(self, state):
        basis, status, T, x, d, lo, hi, since = state
        self.basis, self.status = basis.copy(), status.copy()
        self.T, self.x, self.d = T.copy(), x.copy(), d.copy()
        self.lo, self.hi = lo.copy(), hi.copy()
        self.since_refactor = since

    def snapshot(self):
        return (self.basis.copy(), self.status.copy())

    def restore(self, snap):
        self.basis, self.status = snap[0].copy(), snap[1].copy()
        self._fix_statuses()
        self.refactor()

    def _fix_statuses(self):
        for j in range(self.n + self.m):
            st = self.status[j]
            if st == BASIC:
                continue
            if st == AT_LOWER and not math.isfinite(self.lo[j]) or st == AT_UPPER and not math.isfinite(self.hi[j]):
                self.status[j] = self._place(j)
            elif st == FREE and (math.isfinite(self.lo[j]) or math.isfinite(self.hi[j])):
                self.status[j] = self._place(j)

    def set_bounds(self, j, lo, hi):
        """Change the bounds of structural variable ``j`` keeping the basis."""
        self.lo[j], self.hi[j] = lo, hi
        if self.basis is None or self.status[j] == BASIC:
            return
        old = self.x[j]
        st = self.status[j]
        if st == AT_UPPER and math.isfinite(hi):
            new_st = AT_UPPER
        else:
            new_st = self._place(j, prefer_upper=(st == AT_UPPER))
        self.status[j] = new_st
        new = self._nonbasic_value(j, new_st)
        if new != old:
            self.x[j] = new
            if self.m:
                self.x[self.basis] -= self.T[:, j] * (new - old)

    # -- pivoting ------------------------------------------------------------

    def _pivot(self, r, q):
        T = self.T
        piv = T[r, q]
        T[r, :] /= piv
        col = T[:, q].copy()
        col[r] = 0.0
        T -= np.outer(col, T[r, :])
        T[:, q] = 0.0
        T[r, q] = 1.0
        self.d -= self.d[q] * T[r, :]
        self.d[q] = 0.0
        leaving = self.basis[r]
        self.basis[r] = q
        self.status[q] = BASIC
        self.since_refactor += 1
        self.iterations += 1
        return leaving

    def _maybe_refactor(self):
        if self.since_refactor >= self.refactor_every:
            self.refactor()

    def _movable(self):
        """Nonbasic, non-fixed variables."""
        st = self.status
        return (st != BASIC) & (self.hi > self.lo)

    def _dual_feasible(self, tol):
        mv = self._movable()
        st, d = self.status, self.d
        bad = mv & (((st == AT_LOWER) & (d < -tol)) | ((st == AT_UPPER) & (d > tol))
                    | ((st == FREE) & (np.abs(d) > tol)))
        return not bad.any()

    def _primal_infeasibility(self):
        if not self.m:
            return np.zeros(0)
        xb = self.x[self.basis]
        lo, hi = self.lo[self.basis], self.hi[self.basis]
        return np.maximum(lo - xb, 0.0) + np.maximum(xb - hi, 0.0)

    # -- dual simplex --------------------------------------------------------

    def _dual(self, bland=False):
        """Dual simplex; returns OPTIMAL (primal feasible), INFEASIBLE or ITERATION_LIMIT."""
        stall = 0
        last_infeas = math.inf
        while True:
            if self.iterations >= self._limit:
                return ITERATION_LIMIT
            self._maybe_refactor()
            infeas = self._primal_infeasibility()
            cand = np.nonzero(infeas > self.feas_tol)[0]
            if cand.size == 0:
                return OPTIMAL
            total = infeas.sum()
            if total < last_infeas - 1e-12:
                last_infeas, stall = total, 0
            else:
                stall += 1
            use_bland = bland or stall > self.stall_limit
            if use_bland:
                r = cand[np.argmin(self.basis[cand])]
            else:
                r = cand[np.argmax(infeas[cand])]
            xr = self.x[self.basis[r]]
            below = xr < self.lo[self.basis[r]]
            target = self.lo[self.basis[r]] if below else self.hi[self.basis[r]]
            alpha = self.T[r, :]
            mv = self._movable()
            st = self.status
            if below:
                ok = mv & ((((st == AT_LOWER) | (st == FREE)) & (alpha < -self.pivot_tol))
                           | (((st == AT_UPPER) | (st == FREE)) & (alpha > self.pivot_tol)))
            else:
                ok = mv & ((((st == AT_LOWER) | (st == FREE)) & (alpha > self.pivot_tol))
                           | (((st == AT_UPPER) | (st == FREE)) & (alpha < -self.pivot_tol)))
            js = np.nonzero(ok)[0]
            if js.size == 0:
                if self.since_refactor:
                    self.refactor()
                    continue
                return INFEASIBLE
            ratios = np.abs(self.d[js]) / np.abs(alpha[js])
            best = ratios.min()
            ties = js[ratios <= best + 1e-12]
            if use_bland:
                q = ties.min()
            else:
                q = ties[np.argmax(np.abs(alpha[ties]))]
            delta = (xr - target) / alpha[q]
            self.x[self.basis] -= self.T[:, q] * delta
            self.x[q] += delta
            leaving = self.basis[r]
            self.x[leaving] = target
            self._pivot(r, q)
            self.status[leaving] = AT_LOWER if below else AT_UPPER
            if self.lo[leaving] == self.hi[leaving]:
                self.status[leaving] = AT_LOWER

    # -- primal simplex ------------------------------------------------------

    def _primal(self):
        stall = 0
        last_obj = math.inf
        while True:
            if self.iterations >= self._limit:
                return ITERATION_LIMIT
            self._maybe_refactor()
            d, st = self.d, self.status
            mv = self._movable()
            inc = mv & ((st == AT_LOWER) | (st == FREE)) & (d < -self.opt_tol)
            dec = mv & ((st == AT_UPPER) | (st == FREE)) & (d > self.opt_tol)
            cand = np.nonzero(inc | dec)[0]
            if cand.size == 0:
                return OPTIMAL
            obj = float(self.c @ self.x)
            if obj < last_obj - 1e-12 * (1 + abs(obj)):
                last_obj, stall = obj, 0
            else:
                stall += 1
            use_bland = stall > self.stall_limit
            q = cand.min() if use_bland else cand[np.argmax(np.abs(d[cand]))]
            direction = 1.0 if d[q] < 0 else -1.0
            step = self.hi[q] - self.lo[q]
            r = -1
            if self.m:
                alpha = self.T[:, q]
                change = -alpha * direction  # basic change per unit step
                xb = self.x[self.basis]
                lo_b, hi_b = self.lo[self.basis], self.hi[self.basis]
                with np.errstate(divide="ignore", invalid="ignore"):
                    lim = np.full(self.m, math.inf)
                    neg = change < -self.pivot_tol
                    pos = change > self.pivot_tol
                    lim[neg] = (xb[neg] - lo_b[neg]) / -change[neg]
                    lim[pos] = (hi_b[pos] - xb[pos]) / change[pos]
                lim = np.maximum(lim, 0.0)
                best = lim.min()
                if best < step:
                    ties = np.nonzero(lim <= best + 1e-12)[0]
                    if use_bland:
                        r = ties[np.argmin(self.basis[ties])]
                    else:
                        r = ties[np.argmax(np.abs(alpha[ties]))]
                    step = lim[r]
            if not math.isfinite(step):
                return UNBOUNDED
            if self.m:
                self.x[self.basis] += -self.T[:, q] * direction * step
            self.x[q] += direction * step
            if r < 0:
                # bound flip
                self.status[q] = AT_UPPER if direction > 0 else AT_LOWER
                self.x[q] = self._nonbasic_value(q, self.status[q])
                continue
            leaving = self.basis[r]
            to_lower = (-self.T[r, q] * direction) < 0
            self._pivot(r, q)
            st_new = AT_LOWER if to_lower else AT_UPPER
            if not math.isfinite(self.lo[leaving] if st_new == AT_LOWER else self.hi[leaving]):
                st_new = self._place(leaving)
            self.status[leaving] = st_new
            self.x[leaving] = self._nonbasic_value(leaving, st_new)

    # -- driver --------------------------------------------------------------

    def solve(self) -> LPResult:
        """Solve from the current basis; on a numerical breakdown retry once from the slack basis."""
        if np.any(self.lo > self.hi + 1e-12):
            return LPResult(INFEASIBLE, iterations=0)
        start_iter = self.iterations
        self._limit = start_iter + self.max_iter  # per-solve budget; iterations accumulate across solves
        try:
            if self.basis is None:
                self._cold_start()
            return self._solve(start_iter)
        except SimplexBreakdown:
            self.basis = None
            self._cold_start()
            return self._solve(start_iter)

    def _solve(self, start_iter) -> LPResult:
        for attempt in range(3):
            if not self._dual_feasible(self.opt_tol * 10):
                saved = self.c
                self.c = np.zeros_like(saved)
                self.d = np.zeros_like(self.d)
                status = self._dual(bland=False)
                self.c = saved
                self.d = self.c - self.c[self.basis] @ self.T if self.m else self.c.copy()
            else:
                status = self._dual()
            if status == INFEASIBLE or status == ITERATION_LIMIT:
                return LPResult(status, iterations=self.iterations - start_iter)
            status = self._primal()
            if status in (UNBOUNDED, ITERATION_LIMIT):
                return LPResult(status, iterations=self.iterations - start_iter)
            if not self._certify():
                self.refactor()
                if not ((self._primal_infeasibility() <= 1e-7).all() and self._dual_feasible(1e-7)):
                    continue
            x = self.x[: self.n].copy()
            return LPResult(OPTIMAL, x, float(self.c[: self.n] @ x), self.iterations - start_iter)
        raise SimplexBreakdown("simplex did not settle after refactoring", self.basis.copy())


def lp_relax_solve(model, **kw) -> LPResult:
    """Solve the LP relaxation of a :class:`MilpModel` (binaries in ``[0,1]``)."""
    c, A, senses, b, lower, upper = model.arrays()
    return BoundedSimplex(c, A, senses, b, lower, upper, **kw).solve()
