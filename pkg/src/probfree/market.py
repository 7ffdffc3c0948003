"""One-period markets: assets ``S_0..S_D`` with time-0 prices ``f_0..f_D``."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .payoff import Const, Expr, evaluate_many, from_json, linear_combination, validate
from .state_space import Grid, StateSpace

RANK_RTOL = 1e-10
PRICE_TOL = 1e-8


@dataclass(frozen=True)
class Market:
    """Market ``(f, S)`` with the riskless asset ``S_0 = 1``, ``f_0 = 1`` at index 0."""

    space: StateSpace
    payoffs: tuple[Expr, ...]
    prices: tuple[float, ...]
    names: tuple[str, ...] = field(default=())

    def __post_init__(self):
        payoffs = tuple(self.payoffs)
        prices = tuple(float(p) for p in self.prices)
        if len(payoffs) != len(prices) or not payoffs:
            raise ValueError("need one price per payoff and at least the riskless asset")
        if payoffs[0] != Const(1.0) or prices[0] != 1.0:
            raise ValueError("asset 0 must be riskless: payoff Const(1) at price 1")
        for d, (s, f) in enumerate(zip(payoffs, prices)):
            if not np.isfinite(f) or f < 0:
                raise ValueError(f"price of asset {d} must be finite and >= 0, got {f}")
            validate(s, self.space)
        names = tuple(self.names) or ("riskless",) + tuple(f"S{d}" for d in range(1, len(payoffs)))
        if len(names) != len(payoffs):
            raise ValueError("names must match the number of assets")
        object.__setattr__(self, "payoffs", payoffs)
        object.__setattr__(self, "prices", prices)
        object.__setattr__(self, "names", names)

    @classmethod
    def create(cls, space: StateSpace, risky_payoffs, risky_prices, names=None) -> Market:
        """Build a market, prepending the riskless asset."""
        risky_payoffs = list(risky_payoffs)
        names = ("riskless", *names) if names is not None else ()
        return cls(space, (Const(1.0), *risky_payoffs), (1.0, *risky_prices), names)

    @property
    def n_assets(self) -> int:
        return len(self.payoffs)

    @property
    def price_vector(self) -> np.ndarray:
        return np.array(self.prices)

    def payoff_matrix(self, states) -> np.ndarray:
        """``(N, D+1)`` array of asset payoffs at the given states."""
        x = np.asarray(states, dtype=float).reshape(-1, self.space.dim)
        return np.column_stack([evaluate_many(s, x) for s in self.payoffs])

    def with_asset(self, payoff: Expr, price: float, name: str = "claim") -> Market:
        return Market(self.space, self.payoffs + (payoff,), self.prices + (float(price),),
                      self.names + (name,))

    def to_dict(self) -> dict:
        return {
            "space": self.space.to_dict(),
            "assets": [{"name": n, "payoff": s.to_json(), "price": f}
                       for n, s, f in zip(self.names[1:], self.payoffs[1:], self.prices[1:])],
        }

    @classmethod
    def from_dict(cls, data: dict) -> Market:
        space = StateSpace.from_dict(data["space"])
        assets = data.get("assets", [])
        return cls.create(space, [from_json(a["payoff"]) for a in assets],
                          [a["price"] for a in assets],
                          [a.get("name", f"S{i + 1}") for i, a in enumerate(assets)])

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _check_portfolio(m: Market, pi) -> np.ndarray:
    pi = np.asarray(pi, dtype=float).ravel()
    if pi.shape[0] != m.n_assets:
        raise ValueError(f"portfolio has {pi.shape[0]} holdings, market has {m.n_assets} assets")
    return pi


def portfolio_cost(m: Market, pi) -> float:
    return float(_check_portfolio(m, pi) @ m.price_vector)


def portfolio_payoff(m: Market, pi) -> Expr:
    return linear_combination(_check_portfolio(m, pi), m.payoffs)


def returns(m: Market) -> list[Expr]:
    """Price-normalised excess payoffs ``R_d = S_d - f_d`` for ``d = 1..D``.

    For a probability measure, ``int R_d = 0`` for all d is exactly the
    martingale condition ``int S_d = f_d``.
    """
    return [s - f for s, f in zip(m.payoffs[1:], m.prices[1:])]


@dataclass(frozen=True)
class Redundancy:
    asset: int
    weights: dict[int, float]
    replication_cost: float
    price_gap: float

    @property
    def consistent(self) -> bool:
        return self.price_gap <= PRICE_TOL * (1.0 + abs(self.replication_cost))


@dataclass(frozen=True)
class SubbasisReport:
    basis: tuple[int, ...]
    redundant: tuple[Redundancy, ...]

    @property
    def price_consistent(self) -> bool:
        return all(r.consistent for r in self.redundant)


def _rank(matrix: np.ndarray) -> int:
    if matrix.size == 0:
        return 0
    sv = np.linalg.svd(matrix, compute_uv=False)
    return int(np.sum(sv > RANK_RTOL * sv[0])) if sv[0] > 0 else 0


def independent_subbasis(m: Market, grid: Grid) -> SubbasisReport:
    """Greedy maximal set of assets, starting from the riskless one, independent on ``grid``.

    Each dropped asset is replicated by least squares on the kept ones and its
    price compared with the replication cost; a gap means arbitrage.
    """
    if grid.size < m.n_assets:
        raise ValueError(f"grid has {grid.size} points, need at least {m.n_assets}")
    P = m.payoff_matrix(grid.points)
    basis = [0]
    for d in range(1, m.n_assets):
        if _rank(P[:, basis + [d]]) > len(basis):
            basis.append(d)
    redundant = []
    for d in range(1, m.n_assets):
        if d in basis:
            continue
        w, *_ = np.linalg.lstsq(P[:, basis], P[:, d], rcond=None)
        cost = float(w @ m.price_vector[basis])
        redundant.append(Redundancy(d, {b: float(x) for b, x in zip(basis, w)}, cost,
                                    abs(m.prices[d] - cost)))
    return SubbasisReport(tuple(basis), tuple(redundant))
