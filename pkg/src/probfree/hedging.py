"""Super- and subhedging, no-arbitrage price intervals and the duality report."""

from __future__ import annotations

import enum
import logging
import threading
from dataclasses import dataclass, field, replace

import numpy as np

from .ftap import FtapVerdict, Verdict, _moment_lp, check_arbitrage
from .lp import LpStatus, SemiInfiniteProblem, SipOptions, extract_dual_measure, solve_lp, solve_semi_infinite
from .market import Market
from .measure import AtomicMeasure
from .payoff import Claim, Scale
from .state_space import Grid, default_grid

log = logging.getLogger(__name__)


class ArbitrageError(RuntimeError):
    def __init__(self, verdict: FtapVerdict):
        super().__init__("market admits arbitrage")
        self.verdict = verdict


class Side(str, enum.Enum):
    SUPER = "super"
    SUB = "sub"


@dataclass(frozen=True)
class HedgeOptions:
    grid: int | tuple[int, ...] | None = None
    sip: SipOptions = field(default_factory=SipOptions)
    check_market: bool = True

    def grid_for(self, m: Market) -> Grid:
        return default_grid(m.space) if self.grid is None else Grid(m.space, self.grid)

    @property
    def gap_tol(self) -> float:
        return self.sip.gap_tol


@dataclass(frozen=True, eq=False)
class HedgeResult:
    side: Side
    status: LpStatus
    portfolio: np.ndarray
    price: float
    measure: AtomicMeasure
    gap: float
    violation: float
    iterations: int
    guard_active: bool
    trace: tuple = ()

    @property
    def converged(self) -> bool:
        return self.status is LpStatus.OPTIMAL

    def to_dict(self) -> dict:
        return {"status": self.status.value, "portfolio": self.portfolio.tolist(),
                "price": self.price, "gap": self.gap, "violation": self.violation,
                "iterations": self.iterations, "guard_active": self.guard_active,
                "measure": self.measure.to_dict()}


@dataclass(frozen=True, eq=False)
class PriceInterval:
    lower: float
    upper: float
    replicable: bool
    sub: HedgeResult
    super: HedgeResult

    def to_dict(self) -> dict:
        return {"interval": [self.lower, self.upper], "replicable": self.replicable,
                "gap": max(self.sub.gap, self.super.gap),
                "iterations": self.sub.iterations + self.super.iterations,
                "sub": self.sub.to_dict(), "super": self.super.to_dict()}


_cache: dict = {}
_cache_lock = threading.Lock()


def market_check(m: Market, grid: Grid) -> tuple[FtapVerdict, np.ndarray]:
    """Cached arbitrage check plus the support of a basic martingale measure on ``grid``.

    The support seeds the cutting-plane runs: restricted to those states the
    superhedging LP is already bounded.
    """
    key = (m.fingerprint(), grid.resolution)
    with _cache_lock:
        hit = _cache.get(key)
    if hit is not None:
        return hit
    verdict = check_arbitrage(m, grid)
    sol = solve_lp(_moment_lp(m.payoff_matrix(grid.points), m.price_vector, 0.0))
    seeds = grid.points[sol.x > 0] if sol.optimal else np.empty((0, m.space.dim))
    with _cache_lock:
        _cache[key] = (verdict, seeds)
    return verdict, seeds


def clear_cache() -> None:
    with _cache_lock:
        _cache.clear()


def _hedge(m: Market, H: Claim, side: Side, opts: HedgeOptions) -> HedgeResult:
    if H.space != m.space:
        raise ValueError("claim and market live on different state spaces")
    grid = opts.grid_for(m)
    verdict, seeds = market_check(m, grid)
    if opts.check_market:
        if verdict.verdict is Verdict.ARBITRAGE:
            raise ArbitrageError(verdict)
        if verdict.verdict is Verdict.NEEDS_REFINEMENT:
            log.warning("arbitrage check inconclusive on grid %s; hedging anyway", grid.resolution)
    f = m.price_vector
    if side is Side.SUPER:
        prob = SemiInfiniteProblem(f, m.payoffs, H.expr, m.space, grid, seeds)
    else:
        prob = SemiInfiniteProblem(-f, tuple(Scale(-1.0, s) for s in m.payoffs),
                                   Scale(-1.0, H.expr), m.space, grid, seeds)
    res = solve_semi_infinite(prob, opts.sip)
    if res.solution is None or not res.solution.optimal:
        raise RuntimeError(f"{side.value}hedge LP ended with status {res.status.value}")
    pi = res.x
    price = float(pi @ f)
    mu = extract_dual_measure(res.solution, res.states, opts.sip.cs_tol)
    gap = abs(price - mu.integrate(H.values(mu.states)))
    if res.converged and gap > opts.gap_tol * (1.0 + abs(price)):
        log.warning("%shedge duality gap %.3g exceeds tolerance", side.value, gap)
    return HedgeResult(side, res.status, pi, price, mu, gap, res.violation, res.iterations,
                       res.guard_active, res.trace)


def superhedge(m: Market, H: Claim, opts: HedgeOptions = HedgeOptions()) -> HedgeResult:
    """Cheapest portfolio ``pi`` with ``pi.S(w) >= H(w)`` on the whole box."""
    return _hedge(m, H, Side.SUPER, opts)


def subhedge(m: Market, H: Claim, opts: HedgeOptions = HedgeOptions()) -> HedgeResult:
    """Most expensive portfolio ``pi`` with ``pi.S(w) <= H(w)`` on the whole box."""
    return _hedge(m, H, Side.SUB, opts)


def price_interval(m: Market, H: Claim, opts: HedgeOptions = HedgeOptions()) -> PriceInterval:
    sub = subhedge(m, H, opts)
    sup = superhedge(m, H, opts)
    replicable = abs(sup.price - sub.price) <= 10 * opts.gap_tol * (1.0 + abs(sup.price))
    return PriceInterval(sub.price, sup.price, replicable, sub, sup)


class PriceVerdict(str, enum.Enum):
    NO_ARBITRAGE = "no_arbitrage_price"
    ARBITRAGE = "arbitrage"
    BOUNDARY_INCONCLUSIVE = "boundary_inconclusive"


@dataclass(frozen=True, eq=False)
class PriceCheck:
    verdict: PriceVerdict
    price: float
    ftap: FtapVerdict
    interval: PriceInterval
    consistent: bool

    def to_dict(self) -> dict:
        return {"verdict": self.verdict.value, "price": self.price,
                "interval": [self.interval.lower, self.interval.upper],
                "consistent": self.consistent, "extended_market": self.ftap.to_dict()}


def is_no_arbitrage_price(m: Market, H: Claim, h: float, opts: HedgeOptions = HedgeOptions(),
                          interval: PriceInterval | None = None) -> PriceCheck:
    """Decide whether ``h`` is a no-arbitrage price for ``H``.

    The market extended by ``H`` at price ``h`` is run through the arbitrage
    check; the answer is compared with membership of ``h`` in the open
    interval between the sub- and superhedging prices. Prices within a band
    of ``100 * gap_tol`` around an endpoint are reported as inconclusive,
    except for replicable claims, whose single price is attained.
    """
    if h < 0:
        raise ValueError("no-arbitrage prices are nonnegative")
    interval = interval or price_interval(m, H, opts)
    ext = m.with_asset(H.expr, h, H.name)
    grid = opts.grid_for(m)
    ftap = check_arbitrage(ext, Grid(ext.space, grid.resolution))
    band = 100 * opts.gap_tol * (1.0 + abs(h))
    lo, hi = interval.lower, interval.upper
    if interval.replicable:
        inside = abs(h - lo) <= band
        near = False
    else:
        inside = lo + band < h < hi - band
        near = not inside and lo - band <= h <= hi + band
    if ftap.verdict is Verdict.NEEDS_REFINEMENT or near:
        return PriceCheck(PriceVerdict.BOUNDARY_INCONCLUSIVE, h, ftap, interval, True)
    free = ftap.verdict is Verdict.ARBITRAGE_FREE
    kind = PriceVerdict.NO_ARBITRAGE if free else PriceVerdict.ARBITRAGE
    if free != inside:
        log.warning("extended-market check disagrees with the price interval at h=%g", h)
    return PriceCheck(kind, h, ftap, interval, free == inside)
