"""Dense two-phase simplex with dual multipliers, and a cutting-plane driver
for linear programs with a continuum of constraints indexed by a box.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .measure import AtomicMeasure
from .payoff import Expr, evaluate_many, grid_max_violation, linear_combination
from .state_space import Grid, StateSpace, audit_grid, refine_around

log = logging.getLogger(__name__)

FEAS_TOL = 1e-8
GAP_TOL = 1e-8
CS_TOL = 1e-8
PIVOT_TOL = 1e-9
REFACTOR_EVERY = 40


class LpStatus(str, enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    STALLED = "stalled"
    NOT_CONVERGED = "not_converged"


def _matrix(a, ncols: int) -> np.ndarray:
    if a is None:
        return np.zeros((0, ncols))
    return np.array(a, dtype=float, ndmin=2).reshape(-1, ncols)


def _vector(v, n: int) -> np.ndarray:
    if v is None:
        return np.zeros(n)
    return np.array(v, dtype=float).reshape(n)


@dataclass(frozen=True, eq=False)
class LpProblem:
    """``min c.x`` subject to ``A x >= b``, ``E x = g``; each variable free or ``>= 0``."""

    c: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    E: np.ndarray | None = None
    g: np.ndarray | None = None
    nonneg: np.ndarray | None = None

    def __post_init__(self):
        c = np.array(self.c, dtype=float).ravel()
        n = c.shape[0]
        A = _matrix(self.A, n)
        E = _matrix(self.E, n)
        b = _vector(self.b, A.shape[0])
        g = _vector(self.g, E.shape[0])
        nonneg = np.zeros(n, bool) if self.nonneg is None else np.array(self.nonneg, bool).reshape(n)
        for name, arr in (("c", c), ("A", A), ("b", b), ("E", E), ("g", g)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"LP data {name} has non-finite entries")
        for name, val in (("c", c), ("A", A), ("b", b), ("E", E), ("g", g), ("nonneg", nonneg)):
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.c.shape[0]


@dataclass(frozen=True, eq=False)
class LpSolution:
    """Result of :func:`solve_lp`.

    Duals follow the Lagrangian convention for a minimisation: ``y_ineq >= 0``
    and ``A^T y_ineq + E^T y_eq = c`` on free variables (``<= c`` on
    nonnegative ones). When infeasible, ``farkas`` holds ``(u, v)`` with
    ``u >= 0``, ``A^T u + E^T v`` zero on free and ``<= 0`` on nonnegative
    variables, and ``b.u + g.v > 0``.
    """

    status: LpStatus
    x: np.ndarray | None = None
    value: float = float("nan")
    y_ineq: np.ndarray | None = None
    y_eq: np.ndarray | None = None
    farkas: tuple[np.ndarray, np.ndarray] | None = None
    ray: np.ndarray | None = None
    iterations: int = 0
    residuals: dict = field(default_factory=dict)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Stalled(Exception):
    pass


class _Tableau:
    """Dense tableau ``B^-1 [M | r]`` over a fixed column set, periodically refactored."""

    def __init__(self, M, r, basis, max_iter, burn_in):
        self.M, self.r = M, r
        self.basis = list(basis)
        self.max_iter, self.burn_in = max_iter, burn_in
        self.iterations = 0
        self.refactor()

    def refactor(self):
        B = self.M[:, self.basis]
        self.T = np.linalg.solve(B, np.column_stack([self.M, self.r]))
        self.T[:, -1] = np.maximum(self.T[:, -1], 0.0)
        self.since_refactor = 0

    def run(self, cost, allowed):
        """Pivot to optimality for ``cost``; returns the entering column on unboundedness."""
        rc_tol = 1e-11 * max(1.0, float(np.max(np.abs(cost))))
        fresh = True
        while True:
            d = cost - cost[self.basis] @ self.T[:, :-1]
            cand = np.flatnonzero((d < -rc_tol) & allowed)
            if cand.size == 0:
                if fresh:
                    return None
                self.refactor()
                fresh = True
                continue
            if self.iterations >= self.max_iter:
                raise _Stalled
            bland = self.iterations >= self.burn_in
            j = int(cand[0]) if bland else int(cand[np.argmin(d[cand])])
            col = self.T[:, j]
            pos = np.flatnonzero(col > PIVOT_TOL)
            if pos.size == 0:
                return j
            ratios = self.T[pos, -1] / col[pos]
            best = ratios.min()
            ties = pos[ratios <= best + 1e-12 * (1.0 + best)]
            if bland:
                i = int(ties[np.argmin(np.array(self.basis)[ties])])
            else:
                i = int(ties[np.argmax(col[ties])])
            self.pivot(i, j)
            fresh = False

    def pivot(self, i, j):
        T = self.T
        T[i] /= T[i, j]
        col = T[:, j].copy()
        col[i] = 0.0
        T -= np.outer(col, T[i])
        T[:, -1] = np.maximum(T[:, -1], 0.0)
        self.basis[i] = j
        self.iterations += 1
        self.since_refactor += 1
        if self.since_refactor >= REFACTOR_EVERY:
            self.refactor()


def solve_lp(p: LpProblem, max_iter: int | None = None) -> LpSolution:
    """Two-phase primal simplex: Dantzig pricing during a burn-in, then Bland's rule.

    The final point and multipliers are recomputed from the optimal basis by a
    direct solve, so their accuracy does not depend on the pivot history.
    """
    n = p.n
    m1, m2 = p.A.shape[0], p.E.shape[0]
    m = m1 + m2
    free = np.flatnonzero(~p.nonneg)
    # standard form columns: x (all), -x_free, slacks of the >= rows
    nstruct = n + free.size + m1
    M = np.zeros((m, nstruct))
    M[:m1, :n] = p.A
    M[m1:, :n] = p.E
    M[:m1, n:n + free.size] = -p.A[:, free]
    M[m1:, n:n + free.size] = -p.E[:, free]
    M[:m1, n + free.size:] = -np.eye(m1)
    r = np.concatenate([p.b, p.g])
    sign = np.where(r < 0, -1.0, 1.0)
    # rows with zero rhs: flip inequality rows so their slack enters the basis
    sign[:m1][r[:m1] == 0] = -1.0
    M *= sign[:, None]
    r = r * sign
    cost = np.concatenate([p.c, -p.c[free], np.zeros(m1)])

    basis = [-1] * m
    for i in range(m1):
        if sign[i] < 0:
            basis[i] = n + free.size + i
    need_art = [i for i in range(m) if basis[i] < 0]
    art = np.zeros((m, len(need_art)))
    for k, i in enumerate(need_art):
        art[i, k] = 1.0
        basis[i] = nstruct + k
    Mfull = np.hstack([M, art])
    ncol = Mfull.shape[1]
    is_art = np.arange(ncol) >= nstruct

    # hitting the built-in cap means cycling; a caller's cap is just a budget
    capped = LpStatus.NOT_CONVERGED if max_iter is not None else LpStatus.STALLED
    if max_iter is None:
        max_iter = 50 * (m + ncol) + 1000
    burn_in = 2 * (m + ncol)

    if m == 0:
        if np.any(p.c[free] != 0) or np.any(p.c[p.nonneg] < 0):
            ray = np.zeros(n)
            j = int(np.flatnonzero((p.c != 0) & ~p.nonneg)[0]) if np.any(p.c[free] != 0) else \
                int(np.flatnonzero(p.nonneg & (p.c < 0))[0])
            ray[j] = -np.sign(p.c[j]) if not p.nonneg[j] else 1.0
            return LpSolution(LpStatus.UNBOUNDED, ray=ray)
        x = np.zeros(n)
        return _finish(p, x, np.zeros(0), np.zeros(0), 0)

    tab = _Tableau(Mfull, r, basis, max_iter, burn_in)
    try:
        if need_art:
            tab.run(np.where(is_art, 1.0, 0.0), np.ones(ncol, bool))
            cost1 = np.where(is_art, 1.0, 0.0)
            B = Mfull[:, tab.basis]
            zB = np.linalg.solve(B, r)
            infeas = float(cost1[tab.basis] @ zB)
            if infeas > 1e-10 * (1.0 + float(np.max(np.abs(r)))):
                y = np.linalg.solve(B.T, cost1[tab.basis])
                y = y * sign
                scale = float(np.max(np.abs(y))) or 1.0
                y /= scale
                return LpSolution(LpStatus.INFEASIBLE, farkas=(y[:m1], y[m1:]),
                                  iterations=tab.iterations,
                                  residuals={"phase1": infeas})
            _drive_out_artificials(tab, is_art)
        cost2 = np.concatenate([cost, np.zeros(len(need_art))])
        enter = tab.run(cost2, ~is_art)
    except _Stalled:
        return LpSolution(capped, iterations=tab.iterations)

    if enter is not None:
        z = np.zeros(ncol)
        z[enter] = 1.0
        z[tab.basis] = -tab.T[:, enter]
        ray = z[:n].copy()
        ray[free] -= z[n:n + free.size]
        return LpSolution(LpStatus.UNBOUNDED, ray=ray, iterations=tab.iterations)

    B = Mfull[:, tab.basis]
    z = np.zeros(ncol)
    z[tab.basis] = np.linalg.solve(B, r)
    y = np.linalg.solve(B.T, cost2[tab.basis]) * sign
    x = z[:n].copy()
    x[free] -= z[n:n + free.size]
    return _finish(p, x, y[:m1], y[m1:], tab.iterations)


def _drive_out_artificials(tab: _Tableau, is_art: np.ndarray):
    for i, j in enumerate(list(tab.basis)):
        if not is_art[j]:
            continue
        row = tab.T[i, :-1]
        cand = np.flatnonzero(~is_art & (np.abs(row) > PIVOT_TOL))
        if cand.size:
            k = int(cand[np.argmax(np.abs(row[cand]))])
            tab.pivot(i, k)
        # otherwise the row is redundant; the artificial stays basic at zero


def _finish(p: LpProblem, x, u, v, iterations) -> LpSolution:
    x = np.where(p.nonneg, np.maximum(x, 0.0), x)
    value = float(p.c @ x)
    ineq = p.A @ x - p.b
    primal = max([0.0, float(np.max(-ineq, initial=0.0)),
                  float(np.max(np.abs(p.E @ x - p.g), initial=0.0)),
                  float(np.max(-x[p.nonneg], initial=0.0))])
    reduced = p.c - p.A.T @ u - p.E.T @ v
    dual = max(float(np.max(-u, initial=0.0)),
               float(np.max(np.abs(reduced[~p.nonneg]), initial=0.0)),
               float(np.max(-reduced[p.nonneg], initial=0.0)))
    cs = max(float(np.max(np.abs(u * ineq), initial=0.0)),
             float(np.max(np.abs((x * reduced)[p.nonneg]), initial=0.0)))
    gap = abs(value - float(p.b @ u + p.g @ v))
    return LpSolution(LpStatus.OPTIMAL, x=x, value=value, y_ineq=np.maximum(u, 0.0), y_eq=v,
                      iterations=iterations,
                      residuals={"primal": primal, "dual": dual, "cs": cs, "gap": gap})


# ---------------------------------------------------------------------------
# semi-infinite programs


@dataclass(frozen=True)
class SipOptions:
    feas_tol: float = FEAS_TOL
    gap_tol: float = GAP_TOL
    cs_tol: float = CS_TOL
    max_cuts: int = 500
    polish_rounds: int = 3
    guard: float = 1e6
    audit_per_dim: int = 2001
    audit_cap: int = 200_000


@dataclass(frozen=True, eq=False)
class SemiInfiniteProblem:
    """``min c.x`` over free ``x`` subject to ``sum_j x_j a_j(w) >= b(w)`` for all ``w`` in the box."""

    c: np.ndarray
    row_exprs: tuple[Expr, ...]
    rhs: Expr
    space: StateSpace
    grid: Grid
    initial_states: np.ndarray | None = None

    def __post_init__(self):
        c = np.array(self.c, dtype=float).ravel()
        if c.shape[0] != len(self.row_exprs):
            raise ValueError("objective length must match the number of row expressions")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "row_exprs", tuple(self.row_exprs))

    def rows(self, states) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(states, dtype=float).reshape(-1, self.space.dim)
        A = np.column_stack([evaluate_many(e, x) for e in self.row_exprs])
        return A, evaluate_many(self.rhs, x)

    def slack(self, x) -> Expr:
        """Expression ``a(w).x - b(w)``; negative values are violations."""
        return linear_combination(x, self.row_exprs) - self.rhs


@dataclass(frozen=True, eq=False)
class SipResult:
    status: LpStatus
    solution: LpSolution
    states: np.ndarray
    active: np.ndarray
    violation: float
    iterations: int
    guard_active: bool
    trace: tuple[dict, ...]

    @property
    def converged(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    @property
    def x(self) -> np.ndarray:
        return self.solution.x

    @property
    def value(self) -> float:
        return self.solution.value


def _polish(expr: Expr, grid: Grid, state, value, rounds: int):
    g = grid
    for _ in range(rounds):
        cand = refine_around(g, state, float(np.max(g.step)))
        g = g.refined()
        if cand.shape[0] == 0:
            continue
        vals = evaluate_many(expr, cand)
        i = int(np.argmin(vals))
        if vals[i] < value:
            state, value = cand[i], float(vals[i])
    return np.asarray(state, dtype=float), value


def _initial_states(p: SemiInfiniteProblem) -> np.ndarray:
    from .state_space import dense_sequence

    k = p.space.dim
    parts = [p.space.vertices(), dense_sequence(p.space, 2 * k + 1)]
    if p.initial_states is not None and len(p.initial_states):
        parts.append(np.asarray(p.initial_states, dtype=float).reshape(-1, k))
    return _unique_rows(np.vstack(parts))


def _unique_rows(x: np.ndarray) -> np.ndarray:
    _, idx = np.unique(x, axis=0, return_index=True)
    return x[np.sort(idx)]


def solve_semi_infinite(p: SemiInfiniteProblem, opts: SipOptions = SipOptions()) -> SipResult:
    """Exchange method: solve on a finite state set, add the most violated state, repeat.

    The separation oracle scans the whole working grid, polishes the best
    point with successively halved local lattices, and before declaring
    convergence repeats the scan on a finer audit lattice. A box guard
    ``|x_j| <= guard`` keeps every restricted problem bounded.
    """
    n = p.c.shape[0]
    guard_rows = np.vstack([np.eye(n), -np.eye(n)])
    guard_rhs = np.full(2 * n, -opts.guard)
    audit = audit_grid(p.space, opts.audit_per_dim, opts.audit_cap)
    states = _initial_states(p)
    trace = []
    status = LpStatus.NOT_CONVERGED
    violation = float("inf")
    sol = None
    for it in range(opts.max_cuts + 1):
        A, b = p.rows(states)
        sol = solve_lp(LpProblem(p.c, np.vstack([A, guard_rows]), np.concatenate([b, guard_rhs])))
        if sol.status is LpStatus.INFEASIBLE:
            raise RuntimeError("restricted semi-infinite LP is infeasible")
        if not sol.optimal:
            status = sol.status
            break
        slack = p.slack(sol.x)
        w, v = grid_max_violation(slack, p.grid)
        w, v = _polish(slack, p.grid, w, v, opts.polish_rounds)
        stage = "grid"
        if v >= -opts.feas_tol:
            aw, av = grid_max_violation(slack, audit)
            violation = max(0.0, -av)
            if av >= -opts.feas_tol:
                trace.append({"iteration": it, "value": sol.value, "violation": violation,
                              "cuts": int(states.shape[0]), "stage": "audit"})
                log.debug("sip converged", extra={"sip": trace[-1]})
                status = LpStatus.OPTIMAL
                break
            w, v = _polish(slack, audit, aw, av, opts.polish_rounds)
            stage = "audit"
        trace.append({"iteration": it, "value": sol.value, "violation": -v,
                      "cuts": int(states.shape[0]), "stage": stage, "state": w.tolist()})
        log.debug("sip cut", extra={"sip": trace[-1]})
        if it == opts.max_cuts:
            violation = max(violation, -v) if np.isfinite(violation) else -v
            break
        if np.any(np.all(states == w, axis=1)):
            log.warning("separation returned an existing cut; stopping at violation %.3g", -v)
            violation = -v
            break
        states = np.vstack([states, w])

    m = states.shape[0]
    duals = sol.y_ineq[:m] if sol is not None and sol.optimal else np.zeros(m)
    active = states[duals > 0]
    guard_active = bool(sol is not None and sol.optimal and (
        np.any(sol.y_ineq[m:] > opts.cs_tol) or np.any(np.abs(sol.x) >= opts.guard * (1 - 1e-9))))
    if status is LpStatus.OPTIMAL and guard_active:
        log.warning("guard box is active at the semi-infinite optimum")
    return SipResult(status, sol, states, active, violation, len(trace), guard_active, tuple(trace))


def extract_dual_measure(sol: LpSolution, states, cs_tol: float = CS_TOL) -> AtomicMeasure:
    """Atomic measure carried by the multipliers of the first ``len(states)`` inequality rows."""
    if not sol.optimal:
        raise ValueError(f"no dual measure for status {sol.status.value}")
    states = np.asarray(states, dtype=float)
    m = states.shape[0]
    y = np.asarray(sol.y_ineq[:m], dtype=float)
    if np.any(y < -cs_tol):
        raise AssertionError(f"negative multiplier {y.min():.3g} on a state row")
    keep = y > 0
    if not np.any(keep):
        raise ValueError("all state multipliers vanish")
    return AtomicMeasure(states[keep], y[keep])
