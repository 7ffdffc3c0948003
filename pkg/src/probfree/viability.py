"""Price functional on the marketed subspace and its strictly positive extension.

A market is viable exactly when its price functional extends to a strictly
positive linear functional on all continuous payoffs; the extension built
here integrates against a martingale measure with full grid support.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .ftap import FtapVerdict, Verdict, check_arbitrage
from .lp import FEAS_TOL
from .market import Market, portfolio_payoff
from .measure import AtomicMeasure
from .payoff import Abs, Coord, Expr, Max, PosPart, evaluate_many
from .state_space import Grid

MARKETED_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class MarketedFit:
    marketed: bool
    portfolio: np.ndarray
    residual: float


def marketed_coordinates(m: Market, X: Expr, grid: Grid) -> MarketedFit:
    """Least-squares replication of ``X`` by the assets on ``grid``.

    ``X`` counts as marketed when the residual is at most ``1e-8`` times the
    norm of its samples.
    """
    if grid.size <= m.n_assets:
        raise ValueError("grid needs more points than there are assets")
    P = m.payoff_matrix(grid.points)
    x = evaluate_many(X, grid.points)
    pi, *_ = np.linalg.lstsq(P, x, rcond=None)
    residual = float(np.linalg.norm(P @ pi - x))
    marketed = residual <= MARKETED_RTOL * max(float(np.linalg.norm(x)), 1e-300)
    if not np.any(x):
        marketed = True
    return MarketedFit(marketed, pi, residual)


@dataclass(frozen=True)
class PriceFunctional:
    """``phi(pi.S) = pi.f`` on the span of the asset payoffs."""

    market: Market

    def __call__(self, portfolio) -> float:
        return float(np.asarray(portfolio, dtype=float) @ self.market.price_vector)

    def of_payoff(self, X: Expr, grid: Grid) -> float:
        fit = marketed_coordinates(self.market, X, grid)
        if not fit.marketed:
            raise ValueError(f"payoff is not marketed (residual {fit.residual:.3g})")
        return self(fit.portfolio)


@dataclass(frozen=True, eq=False)
class ExtensionFunctional:
    """``Phi(X) = int X dmu``."""

    measure: AtomicMeasure

    def __call__(self, X: Expr) -> float:
        return self.measure.integrate(X)


class Viability(str, enum.Enum):
    VIABLE = "viable"
    INVIABLE = "inviable"
    UNDECIDED = "undecided"


@dataclass(frozen=True, eq=False)
class ExtensionResult:
    viability: Viability
    extension: ExtensionFunctional | None
    ftap: FtapVerdict


def build_extension(m: Market, grid: Grid) -> ExtensionResult:
    """Extension from the arbitrage check's measure; an arbitrage means no extension exists."""
    verdict = check_arbitrage(m, grid)
    if verdict.verdict is Verdict.ARBITRAGE_FREE:
        return ExtensionResult(Viability.VIABLE, ExtensionFunctional(verdict.measure), verdict)
    if verdict.verdict is Verdict.ARBITRAGE:
        return ExtensionResult(Viability.INVIABLE, None, verdict)
    return ExtensionResult(Viability.UNDECIDED, None, verdict)


def cell_bump(center, radius: float) -> Expr:
    """Tent ``(radius - max_i |x_i - c_i|)^+`` supported on the max-metric ball."""
    c = np.atleast_1d(np.asarray(center, dtype=float))
    dist = [Abs(Coord(i) - float(ci)) for i, ci in enumerate(c)]
    d = dist[0] if len(dist) == 1 else Max(tuple(dist))
    return PosPart(float(radius) - d)


@dataclass(frozen=True)
class ExtensionReport:
    max_deviation: float
    min_bump_value: float
    trials: int
    bumps: int

    def ok(self, tol: float = FEAS_TOL) -> bool:
        return self.max_deviation <= tol and self.min_bump_value > 0

    def to_dict(self) -> dict:
        return {"max_deviation": self.max_deviation, "min_bump_value": self.min_bump_value,
                "trials": self.trials, "bumps": self.bumps}


def verify_extension(ext: ExtensionFunctional, m: Market, trials: int = 50, bumps: int = 20,
                     grid: Grid | None = None, rng: np.random.Generator | None = None) -> ExtensionReport:
    """Check ``|Phi(pi.S) - pi.f|`` on random portfolios and ``Phi(B) > 0`` on grid-cell bumps."""
    rng = rng or np.random.default_rng(0)
    dev = 0.0
    for _ in range(trials):
        pi = rng.standard_normal(m.n_assets)
        dev = max(dev, abs(ext(portfolio_payoff(m, pi)) - float(pi @ m.price_vector)))
    atoms = ext.measure.states
    if grid is not None:
        centers, radius = grid.points, float(np.max(grid.step))
    else:
        centers, radius = atoms, float(np.max(m.space.widths)) / max(len(atoms), 1)
    picks = rng.choice(centers.shape[0], size=min(bumps, centers.shape[0]), replace=False)
    low = min((ext(cell_bump(centers[i], radius)) for i in picks), default=float("inf"))
    return ExtensionReport(dev, float(low), trials, len(picks))
