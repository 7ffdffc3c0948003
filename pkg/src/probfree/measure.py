"""Finite atomic measures: the computational stand-in for positive Borel measures."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .payoff import Expr, evaluate_many


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Atoms ``states[i]`` carrying nonnegative ``weights[i]``."""

    states: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        states = np.array(self.states, dtype=float, ndmin=2)
        weights = np.array(self.weights, dtype=float).ravel()
        if states.shape[0] != weights.shape[0]:
            raise ValueError(f"{states.shape[0]} atoms but {weights.shape[0]} weights")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("atom weights must be finite and nonnegative")
        states.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return self.weights.shape[0]

    @property
    def mass(self) -> float:
        return float(np.sum(self.weights))

    @property
    def min_weight(self) -> float:
        return float(np.min(self.weights)) if len(self) else 0.0

    def integrate(self, f) -> float:
        """``int f dmu`` for an expression, or for precomputed values at the atoms."""
        v = evaluate_many(f, self.states) if isinstance(f, Expr) else np.asarray(f, dtype=float)
        return float(v @ self.weights)

    def normalized(self) -> AtomicMeasure:
        return AtomicMeasure(self.states, self.weights / self.mass)

    def to_dict(self) -> dict:
        return {"atoms": [{"state": s.tolist(), "weight": float(w)}
                          for s, w in zip(self.states, self.weights)]}

    @classmethod
    def from_dict(cls, data: dict) -> AtomicMeasure:
        atoms = data["atoms"]
        if not atoms:
            raise ValueError("measure has no atoms")
        return cls(np.array([a["state"] for a in atoms], dtype=float),
                   np.array([a["weight"] for a in atoms], dtype=float))
