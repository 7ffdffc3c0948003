"""Compact box state spaces, their dense sample sequence and lattice grids.

All distances use the max-metric ``d(x, y) = max_i |x_i - y_i|``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

AUDIT_POINTS_PER_DIM = 2001
AUDIT_TOTAL_CAP = 10**6


@dataclass(frozen=True)
class StateSpace:
    """Axis-aligned box ``[lo, hi]`` in ``R^k``."""

    lo: tuple[float, ...]
    hi: tuple[float, ...]

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        if len(lo) == 0 or len(lo) != len(hi):
            raise ValueError(f"lo/hi must be nonempty and of equal length, got {lo}, {hi}")
        if not all(np.isfinite(lo)) or not all(np.isfinite(hi)):
            raise ValueError("box bounds must be finite")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError(f"need lo < hi component-wise, got lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def box(cls, *intervals: tuple[float, float]) -> StateSpace:
        return cls(tuple(a for a, _ in intervals), tuple(b for _, b in intervals))

    @property
    def dim(self) -> int:
        return len(self.lo)

    @property
    def lo_array(self) -> np.ndarray:
        return np.array(self.lo)

    @property
    def hi_array(self) -> np.ndarray:
        return np.array(self.hi)

    @property
    def widths(self) -> np.ndarray:
        return self.hi_array - self.lo_array

    def contains(self, states, tol: float = 0.0) -> np.ndarray:
        x = as_states(states, self.dim)
        return np.all((x >= self.lo_array - tol) & (x <= self.hi_array + tol), axis=1)

    def clip(self, states) -> np.ndarray:
        return np.clip(as_states(states, self.dim), self.lo_array, self.hi_array)

    def vertices(self) -> np.ndarray:
        """The ``2^k`` box corners, row-major with dimension 0 slowest."""
        return np.array(list(itertools.product(*zip(self.lo, self.hi))), dtype=float)

    def to_dict(self) -> dict:
        return {"dim": self.dim, "lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_dict(cls, data: dict) -> StateSpace:
        space = cls(tuple(data["lo"]), tuple(data["hi"]))
        if "dim" in data and int(data["dim"]) != space.dim:
            raise ValueError(f"dim={data['dim']} does not match bounds of length {space.dim}")
        return space


def as_states(states, dim: int) -> np.ndarray:
    """Coerce a state or a list of states to a float array of shape (N, dim)."""
    x = np.asarray(states, dtype=float)
    if x.ndim == 0:
        x = x.reshape(1, 1)
    elif x.ndim == 1:
        x = x.reshape(1, -1) if x.shape[0] == dim else x.reshape(-1, 1)
    if x.ndim != 2 or x.shape[1] != dim:
        raise ValueError(f"expected states of dimension {dim}, got array of shape {np.shape(states)}")
    return x


@dataclass(frozen=True)
class Grid:
    """Finite lattice ``lo[i] + j (hi[i] - lo[i]) / (n_i - 1)`` on a state space.

    Points are enumerated row-major with dimension 0 varying slowest, i.e. in
    ``itertools.product`` order over the per-dimension ticks.
    """

    space: StateSpace
    resolution: tuple[int, ...]

    def __post_init__(self):
        res = tuple(int(n) for n in np.atleast_1d(self.resolution))
        if len(res) == 1 and self.space.dim > 1:
            res = res * self.space.dim
        if len(res) != self.space.dim:
            raise ValueError(f"resolution {res} does not match dimension {self.space.dim}")
        if any(n < 2 for n in res):
            raise ValueError(f"every resolution must be >= 2, got {res}")
        object.__setattr__(self, "resolution", res)

    @property
    def size(self) -> int:
        return int(np.prod(self.resolution))

    @property
    def step(self) -> np.ndarray:
        return self.space.widths / (np.array(self.resolution) - 1)

    def ticks(self, axis: int) -> np.ndarray:
        n = self.resolution[axis]
        lo, hi = self.space.lo[axis], self.space.hi[axis]
        t = lo + np.arange(n) * ((hi - lo) / (n - 1))
        t[-1] = hi
        return t

    @cached_property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*(self.ticks(i) for i in range(self.space.dim)), indexing="ij")
        pts = np.stack([m.ravel() for m in mesh], axis=1)
        pts.setflags(write=False)
        return pts

    def refined(self) -> Grid:
        """Same box with every cell halved: ``n -> 2 (n - 1) + 1``."""
        return Grid(self.space, tuple(2 * (n - 1) + 1 for n in self.resolution))


def audit_grid(space: StateSpace, per_dim: int = AUDIT_POINTS_PER_DIM,
               cap: int = AUDIT_TOTAL_CAP) -> Grid:
    """Fine lattice used for certification, capped at ``cap`` points in total."""
    n = min(per_dim, int(np.floor(cap ** (1.0 / space.dim) + 1e-9)))
    return Grid(space, (max(n, 2),) * space.dim)


def default_grid(space: StateSpace) -> Grid:
    """Default working lattice: ``2^floor(12/k) + 1`` ticks per dimension."""
    return Grid(space, (2 ** max(1, 12 // space.dim) + 1,) * space.dim)


def _midpoint_fraction(i: int) -> float:
    # 1 -> 1/2, 2 -> 1/4, 3 -> 3/4, 4 -> 1/8, ...
    level = i.bit_length() - 1
    return (2 * (i - (1 << level)) + 1) / float(1 << (level + 1))


def _deinterleave(t: int, k: int) -> list[int]:
    out = [0] * k
    bit = 0
    while t:
        if t & 1:
            out[bit % k] |= 1 << (bit // k)
        t >>= 1
        bit += 1
    return out


def dense_sequence(space: StateSpace, n: int) -> np.ndarray:
    """First ``n`` points of a deterministic sequence dense in the box.

    Per dimension the sequence visits midpoints of successively halved
    intervals (1/2, 1/4, 3/4, 1/8, ...); the k-dimensional index is split
    across dimensions by bit de-interleaving, so that the first ``2^(kL)``
    points form the full product of the first ``2^L`` midpoints per axis.
    The first point is the box centre.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k = space.dim
    u = np.array([[_midpoint_fraction(a + 1) for a in _deinterleave(t, k)] for t in range(n)])
    return space.clip(space.lo_array + u * space.widths)


def fill_distance(space: StateSpace, points, audit: Grid | None = None) -> float:
    """Largest max-metric distance from an audit lattice point to the sample."""
    pts = as_states(points, space.dim)
    if pts.shape[0] == 0:
        raise ValueError("fill_distance needs at least one point")
    audit = audit or audit_grid(space)
    dist, _ = cKDTree(pts).query(audit.points, k=1, p=np.inf)
    return float(np.max(dist))


def refine_around(grid: Grid, center, radius: float) -> np.ndarray:
    """Lattice points at twice the grid resolution inside the ball ``B(center, radius)``.

    The ball is intersected with the box; the result may be empty when
    ``radius`` is below a quarter of the grid step.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    space = grid.space
    c = as_states(center, space.dim)[0]
    if not space.contains(c[None, :])[0]:
        raise ValueError(f"center {c} lies outside the box")
    half = grid.step / 2.0
    lo = space.lo_array
    axes = []
    for i in range(space.dim):
        top = 2 * (grid.resolution[i] - 1)
        j0 = max(0, int(np.ceil((c[i] - radius - lo[i]) / half[i] - 1e-9)))
        j1 = min(top, int(np.floor((c[i] + radius - lo[i]) / half[i] + 1e-9)))
        ticks = lo[i] + np.arange(j0, j1 + 1) * half[i]
        ticks = np.clip(ticks, space.lo[i], space.hi[i])
        slack = 1e-12 * max(1.0, abs(c[i]), radius)
        axes.append(ticks[np.abs(ticks - c[i]) <= radius + slack])
    if any(a.size == 0 for a in axes):
        return np.empty((0, space.dim))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
