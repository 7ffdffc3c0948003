"""Expression trees for continuous payoffs on a box.

Only continuous node kinds are admitted, so every expression is a continuous
function with finite interval bounds on a compact box. Expressions serialise
to nested JSON arrays such as ``["posp", ["sub", ["coord", 0], ["const", 0.5]]]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from numbers import Real

import numpy as np

from .state_space import Grid, StateSpace, as_states

EXP_ARG_LIMIT = 700.0
CLAIM_AUDIT_STATES = 10**4
NONNEG_TOL = 1e-12


class ExprError(ValueError):
    """Malformed expression; ``path`` locates the offending node in the JSON tree."""

    def __init__(self, message: str, path: tuple = ()):
        super().__init__(message)
        self.path = tuple(path)


class Expr:
    """Base class for payoff expression nodes."""

    __slots__ = ()
    children: tuple = ()

    def values(self, states: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def interval(self, lo: np.ndarray, hi: np.ndarray) -> tuple[float, float]:
        raise NotImplementedError

    def to_json(self):
        raise NotImplementedError

    def max_coord(self) -> int:
        return max((c.max_coord() for c in self.children), default=-1)

    def __call__(self, states) -> np.ndarray:
        return self.values(np.asarray(states, dtype=float))

    def __add__(self, other):
        return Add((self, _lift(other)))

    def __radd__(self, other):
        return Add((_lift(other), self))

    def __sub__(self, other):
        return Sub(self, _lift(other))

    def __rsub__(self, other):
        return Sub(_lift(other), self)

    def __mul__(self, other):
        if isinstance(other, Real):
            return Scale(float(other), self)
        return Mul(self, _lift(other))

    def __rmul__(self, other):
        if isinstance(other, Real):
            return Scale(float(other), self)
        return Mul(_lift(other), self)

    def __neg__(self):
        return Scale(-1.0, self)


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, Real):
        return Const(float(x))
    raise TypeError(f"cannot use {type(x).__name__} in a payoff expression")


@dataclass(frozen=True)
class Const(Expr):
    value: float

    def values(self, states):
        return np.full(states.shape[0], self.value, dtype=float)

    def interval(self, lo, hi):
        return self.value, self.value

    def to_json(self):
        return ["const", self.value]


@dataclass(frozen=True)
class Coord(Expr):
    index: int

    def values(self, states):
        return states[:, self.index].astype(float, copy=True)

    def interval(self, lo, hi):
        return float(lo[self.index]), float(hi[self.index])

    def max_coord(self):
        return self.index

    def to_json(self):
        return ["coord", self.index]


@dataclass(frozen=True)
class Add(Expr):
    terms: tuple

    @property
    def children(self):
        return self.terms

    def values(self, states):
        out = self.terms[0].values(states)
        for t in self.terms[1:]:
            out = out + t.values(states)
        return out

    def interval(self, lo, hi):
        bounds = [t.interval(lo, hi) for t in self.terms]
        return sum(b[0] for b in bounds), sum(b[1] for b in bounds)

    def to_json(self):
        return ["add", *(t.to_json() for t in self.terms)]


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr

    @property
    def children(self):
        return (self.left, self.right)

    def values(self, states):
        return self.left.values(states) - self.right.values(states)

    def interval(self, lo, hi):
        a, b = self.left.interval(lo, hi)
        c, d = self.right.interval(lo, hi)
        return a - d, b - c

    def to_json(self):
        return ["sub", self.left.to_json(), self.right.to_json()]


@dataclass(frozen=True)
class Mul(Expr):
    left: Expr
    right: Expr

    @property
    def children(self):
        return (self.left, self.right)

    def values(self, states):
        return self.left.values(states) * self.right.values(states)

    def interval(self, lo, hi):
        a, b = self.left.interval(lo, hi)
        c, d = self.right.interval(lo, hi)
        products = (a * c, a * d, b * c, b * d)
        return min(products), max(products)

    def to_json(self):
        return ["mul", self.left.to_json(), self.right.to_json()]


@dataclass(frozen=True)
class Scale(Expr):
    factor: float
    arg: Expr

    @property
    def children(self):
        return (self.arg,)

    def values(self, states):
        return self.factor * self.arg.values(states)

    def interval(self, lo, hi):
        a, b = self.arg.interval(lo, hi)
        return min(self.factor * a, self.factor * b), max(self.factor * a, self.factor * b)

    def to_json(self):
        return ["scale", self.factor, self.arg.to_json()]


@dataclass(frozen=True)
class Min(Expr):
    args: tuple

    @property
    def children(self):
        return self.args

    def values(self, states):
        return np.min(np.stack([a.values(states) for a in self.args]), axis=0)

    def interval(self, lo, hi):
        bounds = [a.interval(lo, hi) for a in self.args]
        return min(b[0] for b in bounds), min(b[1] for b in bounds)

    def to_json(self):
        return ["min", *(a.to_json() for a in self.args)]


@dataclass(frozen=True)
class Max(Expr):
    args: tuple

    @property
    def children(self):
        return self.args

    def values(self, states):
        return np.max(np.stack([a.values(states) for a in self.args]), axis=0)

    def interval(self, lo, hi):
        bounds = [a.interval(lo, hi) for a in self.args]
        return max(b[0] for b in bounds), max(b[1] for b in bounds)

    def to_json(self):
        return ["max", *(a.to_json() for a in self.args)]


@dataclass(frozen=True)
class PosPart(Expr):
    arg: Expr

    @property
    def children(self):
        return (self.arg,)

    def values(self, states):
        return np.maximum(self.arg.values(states), 0.0)

    def interval(self, lo, hi):
        a, b = self.arg.interval(lo, hi)
        return max(a, 0.0), max(b, 0.0)

    def to_json(self):
        return ["posp", self.arg.to_json()]


@dataclass(frozen=True)
class Abs(Expr):
    arg: Expr

    @property
    def children(self):
        return (self.arg,)

    def values(self, states):
        return np.abs(self.arg.values(states))

    def interval(self, lo, hi):
        a, b = self.arg.interval(lo, hi)
        if a >= 0:
            return a, b
        if b <= 0:
            return -b, -a
        return 0.0, max(-a, b)

    def to_json(self):
        return ["abs", self.arg.to_json()]


@dataclass(frozen=True)
class Exp(Expr):
    arg: Expr

    @property
    def children(self):
        return (self.arg,)

    def values(self, states):
        return np.exp(self.arg.values(states))

    def interval(self, lo, hi):
        a, b = self.arg.interval(lo, hi)
        if b > EXP_ARG_LIMIT:
            raise ExprError(f"exp argument may reach {b:g} on this box (limit {EXP_ARG_LIMIT:g})")
        return math.exp(a), math.exp(b)

    def to_json(self):
        return ["exp", self.arg.to_json()]


_NARY = {"add": Add, "min": Min, "max": Max}
_UNARY = {"posp": PosPart, "abs": Abs, "exp": Exp}
_BINARY = {"sub": Sub, "mul": Mul}


def from_json(node, path: tuple = ()) -> Expr:
    """Parse the nested-array grammar. A bare number is shorthand for ``["const", x]``."""
    if isinstance(node, bool):
        raise ExprError("booleans are not expressions", path)
    if isinstance(node, (int, float)):
        return Const(float(node))
    if not isinstance(node, list) or not node or not isinstance(node[0], str):
        raise ExprError(f"expected [op, ...] array, got {node!r}", path)
    op, args = node[0], node[1:]

    def sub(i):
        return from_json(args[i], path + (i + 1,))

    def number(i):
        v = args[i]
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ExprError(f"'{op}' needs a finite number, got {v!r}", path + (i + 1,))
        return float(v)

    def arity(n):
        if len(args) != n:
            raise ExprError(f"'{op}' takes {n} argument(s), got {len(args)}", path)

    if op == "const":
        arity(1)
        return Const(number(0))
    if op == "coord":
        arity(1)
        v = args[0]
        if isinstance(v, bool) or not isinstance(v, int) or v < 0:
            raise ExprError(f"coord index must be a nonnegative integer, got {v!r}", path + (1,))
        return Coord(v)
    if op == "scale":
        arity(2)
        return Scale(number(0), sub(1))
    if op in _UNARY:
        arity(1)
        return _UNARY[op](sub(0))
    if op in _BINARY:
        arity(2)
        return _BINARY[op](sub(0), sub(1))
    if op in _NARY:
        if len(args) < 1:
            raise ExprError(f"'{op}' needs at least one argument", path)
        return _NARY[op](tuple(sub(i) for i in range(len(args))))
    raise ExprError(f"unknown operator {op!r}", path)


def validate(expr: Expr, space: StateSpace) -> None:
    """Check coordinate indices and that interval bounds are finite on ``space``."""
    if expr.max_coord() >= space.dim:
        raise ExprError(f"expression uses coord {expr.max_coord()} on a {space.dim}-dimensional space")
    lo, hi = expr.interval(space.lo_array, space.hi_array)
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ExprError(f"expression has unbounded interval [{lo}, {hi}] on the box")


def evaluate_many(expr: Expr, states, dim: int | None = None) -> np.ndarray:
    x = np.asarray(states, dtype=float)
    if dim is not None:
        x = as_states(x, dim)
    if x.ndim != 2:
        raise ValueError("states must be a 2-d array")
    if expr.max_coord() >= x.shape[1]:
        raise ExprError(f"expression uses coord {expr.max_coord()} but states have dimension {x.shape[1]}")
    v = expr.values(x)
    if not np.all(np.isfinite(v)):
        raise ValueError("expression evaluated to a non-finite value")
    return v


def evaluate(expr: Expr, state) -> float:
    x = np.atleast_1d(np.asarray(state, dtype=float))
    return float(evaluate_many(expr, x.reshape(1, -1))[0])


def inf_bound(expr: Expr, space: StateSpace) -> float:
    validate(expr, space)
    return expr.interval(space.lo_array, space.hi_array)[0]


def sup_bound(expr: Expr, space: StateSpace) -> float:
    validate(expr, space)
    return expr.interval(space.lo_array, space.hi_array)[1]


def grid_max_violation(expr: Expr, grid: Grid) -> tuple[np.ndarray, float]:
    """Grid state minimising ``expr`` and that minimum; ties go to the lowest index."""
    v = evaluate_many(expr, grid.points)
    i = int(np.argmin(v))
    return grid.points[i].copy(), float(v[i])


def linear_combination(coeffs, exprs) -> Expr:
    """``sum_d coeffs[d] * exprs[d]`` with zero terms dropped and unit scales elided."""
    terms = []
    for a, e in zip(coeffs, exprs):
        a = float(a)
        if a == 0.0:
            continue
        terms.append(e if a == 1.0 else Scale(a, e))
    if not terms:
        return Const(0.0)
    if len(terms) == 1:
        return terms[0]
    return Add(tuple(terms))


def claim_audit_grid(space: StateSpace, total: int = CLAIM_AUDIT_STATES) -> Grid:
    n = max(2, int(math.ceil(total ** (1.0 / space.dim) - 1e-9)))
    return Grid(space, (n,) * space.dim)


@dataclass(frozen=True)
class Claim:
    """A nonnegative continuous payoff ``H`` on ``space``.

    Nonnegativity is audited on a lattice of about 10^4 states when the claim
    is built, and re-asserted on every evaluation.
    """

    expr: Expr
    space: StateSpace
    name: str = "claim"

    def __post_init__(self):
        validate(self.expr, self.space)
        v = evaluate_many(self.expr, claim_audit_grid(self.space).points)
        i = int(np.argmin(v))
        if v[i] < -NONNEG_TOL:
            state = claim_audit_grid(self.space).points[i]
            raise ValueError(f"claim {self.name!r} is negative ({v[i]:.3g}) at state {state.tolist()}")

    def values(self, states) -> np.ndarray:
        v = evaluate_many(self.expr, states, self.space.dim)
        if np.any(v < -NONNEG_TOL):
            raise ValueError(f"claim {self.name!r} took a negative value {v.min():.3g}")
        return v

    def __call__(self, state) -> float:
        return float(self.values(np.atleast_1d(np.asarray(state, dtype=float)).reshape(1, -1))[0])
