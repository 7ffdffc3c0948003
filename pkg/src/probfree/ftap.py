"""Arbitrage detection with two-sided certificates.

:func:`check_arbitrage` decides, at grid resolution, between a martingale
measure with strictly positive weight on every grid atom and an arbitrage
portfolio certified on a fine audit lattice. The portfolio is read off the
Farkas multipliers of the infeasible moment system.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from .lp import FEAS_TOL, LpProblem, LpStatus, solve_lp
from .market import Market, portfolio_payoff
from .measure import AtomicMeasure
from .payoff import evaluate_many, grid_max_violation
from .state_space import Grid, StateSpace, audit_grid, dense_sequence, fill_distance

log = logging.getLogger(__name__)

EPS_POS = 1e-9
STRICT_TOL = 1e-6
REFINE_ROUNDS = 4
VERIFY_AUDIT_CAP = 200_000

__all__ = [
    "AtomicMeasure", "ArbitrageCertificate", "FtapVerdict", "MeasureReport", "Verdict",
    "check_arbitrage", "integrability_reweight", "reference_measure",
    "sample_martingale_measure", "verify_certificate", "verify_measure", "zero_weight_regions",
]


class Verdict(str, enum.Enum):
    ARBITRAGE_FREE = "arbitrage_free"
    ARBITRAGE = "arbitrage"
    NEEDS_REFINEMENT = "needs_refinement"


def reference_measure(space: StateSpace, n: int) -> AtomicMeasure:
    """Weights ``2^-i`` on the first ``n`` dense-sequence points, renormalised to mass 1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > 1000:
        raise ValueError("weights 2^-n underflow beyond n = 1000")
    w = np.ldexp(1.0, -np.arange(1, n + 1))
    return AtomicMeasure(dense_sequence(space, n), w / (1.0 - np.ldexp(1.0, -n)))


def integrability_reweight(mu: AtomicMeasure, m: Market) -> AtomicMeasure:
    """Reweight by the density ``c / (1 + M)`` with ``M = max_d S_d`` over risky assets.

    ``M`` is floored at 0 so the density stays positive for payoffs that dip
    below zero.
    """
    if m.n_assets > 1:
        big = np.max(m.payoff_matrix(mu.states)[:, 1:], axis=1)
    else:
        big = np.zeros(len(mu))
    w = mu.weights / (1.0 + np.maximum(big, 0.0))
    return AtomicMeasure(mu.states, w / w.sum())


@dataclass(frozen=True)
class MeasureReport:
    mass_error: float
    moment_errors: tuple[float, ...]
    min_weight: float
    n_atoms: int
    fill_distance: float

    @property
    def max_moment_error(self) -> float:
        return max(self.moment_errors, default=0.0)

    def ok(self, tol: float = FEAS_TOL) -> bool:
        return self.mass_error <= tol and self.max_moment_error <= tol and self.min_weight > 0

    def to_dict(self) -> dict:
        return {"mass_error": self.mass_error, "moment_errors": list(self.moment_errors),
                "min_weight": self.min_weight, "n_atoms": self.n_atoms,
                "fill_distance": self.fill_distance}


def verify_measure(m: Market, mu: AtomicMeasure) -> MeasureReport:
    """Mass error, per-asset moment errors ``|int S_d - f_d|``, smallest weight, fill distance."""
    P = m.payoff_matrix(mu.states)
    moments = mu.weights @ P
    errors = np.abs(moments - m.price_vector)
    fd = fill_distance(m.space, mu.states, audit_grid(m.space, cap=VERIFY_AUDIT_CAP))
    return MeasureReport(float(errors[0]), tuple(float(e) for e in errors[1:]),
                         mu.min_weight, len(mu), fd)


@dataclass(frozen=True, eq=False)
class ArbitrageCertificate:
    portfolio: np.ndarray
    cost: float
    witness: np.ndarray
    witness_payoff: float
    lattice_min: float

    def ok(self, feas_tol: float = FEAS_TOL, strict_tol: float = STRICT_TOL) -> bool:
        return (self.cost <= feas_tol and self.lattice_min >= -feas_tol
                and self.witness_payoff >= strict_tol)

    def to_dict(self) -> dict:
        return {"portfolio": self.portfolio.tolist(), "cost": self.cost,
                "witness": self.witness.tolist(), "witness_payoff": self.witness_payoff,
                "lattice_min": self.lattice_min}


def verify_certificate(m: Market, portfolio, witness, audit: Grid | None = None) -> ArbitrageCertificate:
    """Recompute cost, witness payoff and audit-lattice minimum of a portfolio from scratch."""
    pi = np.asarray(portfolio, dtype=float)
    audit = audit or audit_grid(m.space, cap=VERIFY_AUDIT_CAP)
    payoff = portfolio_payoff(m, pi)
    _, lattice_min = grid_max_violation(payoff, audit)
    witness = np.asarray(witness, dtype=float).ravel()
    wp = float(evaluate_many(payoff, witness[None, :])[0])
    return ArbitrageCertificate(pi, float(pi @ m.price_vector), witness, wp, lattice_min)


@dataclass(frozen=True, eq=False)
class FtapVerdict:
    verdict: Verdict
    grid: Grid
    fill_distance: float
    measure: AtomicMeasure | None = None
    certificate: ArbitrageCertificate | None = None
    offending_state: np.ndarray | None = None
    supported_not_full: bool = False
    zero_weight_regions: np.ndarray | None = None
    extra_states: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))
    rounds: int = 0

    @property
    def arbitrage_free(self) -> bool:
        return self.verdict is Verdict.ARBITRAGE_FREE

    def to_dict(self) -> dict:
        out = {"verdict": self.verdict.value, "grid": list(self.grid.resolution),
               "fill_distance": self.fill_distance, "refinement_rounds": self.rounds}
        if self.measure is not None:
            out["measure"] = self.measure.to_dict()
        if self.certificate is not None:
            out["certificate"] = self.certificate.to_dict()
        if self.offending_state is not None:
            out["offending_state"] = self.offending_state.tolist()
        if self.supported_not_full:
            out["supported_not_full"] = True
            out["zero_weight_regions"] = self.zero_weight_regions.tolist()
        return out


def _moment_lp(P: np.ndarray, prices: np.ndarray, floor: float, c=None) -> LpProblem:
    # w = floor + x, x >= 0, sum_i x_i S(w_i) = f - floor * sum_i S(w_i)
    n = P.shape[0]
    g = prices - floor * P.sum(axis=0)
    return LpProblem(np.zeros(n) if c is None else c, E=P.T, g=g, nonneg=np.ones(n, bool))


def zero_weight_regions(mu: AtomicMeasure, grid: Grid, tol: float = 0.0) -> np.ndarray:
    """Grid points with no atom of weight ``> tol`` within half a grid step (max-metric)."""
    heavy = mu.states[mu.weights > tol]
    if heavy.shape[0] == 0:
        return grid.points.copy()
    from scipy.spatial import cKDTree

    scaled = (grid.points - grid.space.lo_array) / grid.step
    dist, _ = cKDTree((heavy - grid.space.lo_array) / grid.step).query(scaled, p=np.inf)
    return grid.points[dist > 0.5 + 1e-9]


def _single_check(m: Market, grid: Grid, states: np.ndarray, audit: Grid, eps_pos: float,
                  feas_tol: float, strict_tol: float, fd: float):
    P = m.payoff_matrix(states)
    f = m.price_vector
    floor = eps_pos / states.shape[0]
    sol = solve_lp(_moment_lp(P, f, floor))
    if sol.status is LpStatus.OPTIMAL:
        mu = AtomicMeasure(states, floor + sol.x)
        moments = mu.weights @ P
        if np.max(np.abs(moments - f)) <= feas_tol:
            return FtapVerdict(Verdict.ARBITRAGE_FREE, grid, fd, measure=mu)
        log.warning("moment LP solution misses prices by %.3g", np.max(np.abs(moments - f)))
        return FtapVerdict(Verdict.NEEDS_REFINEMENT, grid, fd)
    if sol.status is not LpStatus.INFEASIBLE:
        return FtapVerdict(Verdict.NEEDS_REFINEMENT, grid, fd)

    _, v = sol.farkas
    pi = -v
    pi[0] -= pi @ f
    atom_payoff = P @ pi
    top = float(np.max(atom_payoff))
    if top <= 0:
        return FtapVerdict(Verdict.NEEDS_REFINEMENT, grid, fd)
    pi /= top
    witness = states[int(np.argmax(atom_payoff))]
    cert = verify_certificate(m, pi, witness, audit)

    supported = False
    regions = None
    loose = solve_lp(_moment_lp(P, f, 0.0))
    if loose.optimal:
        supported = True
        regions = zero_weight_regions(AtomicMeasure(states, loose.x), grid)
    if cert.ok(feas_tol, strict_tol):
        return FtapVerdict(Verdict.ARBITRAGE, grid, fd, certificate=cert,
                           supported_not_full=supported, zero_weight_regions=regions)
    worst, _ = grid_max_violation(portfolio_payoff(m, pi), audit)
    return FtapVerdict(Verdict.NEEDS_REFINEMENT, grid, fd, certificate=cert, offending_state=worst,
                       supported_not_full=supported, zero_weight_regions=regions)


def check_arbitrage(m: Market, grid: Grid, *, eps_pos: float = EPS_POS, feas_tol: float = FEAS_TOL,
                    strict_tol: float = STRICT_TOL, refine_rounds: int = REFINE_ROUNDS,
                    audit: Grid | None = None) -> FtapVerdict:
    """Martingale measure with full grid support, or a verified arbitrage portfolio.

    Each grid atom gets a weight floor ``eps_pos / N``. If the floored moment
    system is infeasible its Farkas multipliers become a zero-cost portfolio
    that is checked on the audit lattice. When the portfolio dips below
    ``-feas_tol`` between atoms, the offending state is added as an atom and
    the check repeats, up to ``refine_rounds`` times, before reporting
    ``NEEDS_REFINEMENT``.
    """
    if m.space != grid.space:
        raise ValueError("grid and market live on different state spaces")
    audit = audit or audit_grid(m.space, cap=VERIFY_AUDIT_CAP)
    states = grid.points
    fd = fill_distance(m.space, states, audit)
    extra = []
    for rnd in range(refine_rounds + 1):
        pts = np.vstack([states, *extra]) if extra else states
        out = _single_check(m, grid, pts, audit, eps_pos, feas_tol, strict_tol, fd)
        if out.verdict is not Verdict.NEEDS_REFINEMENT or out.offending_state is None:
            break
        if any(np.array_equal(out.offending_state, e[0]) for e in extra):
            break
        log.debug("refining arbitrage check at %s", out.offending_state.tolist())
        extra.append(out.offending_state[None, :])
    added = np.vstack(extra) if extra else np.empty((0, m.space.dim))
    return FtapVerdict(out.verdict, grid, fd, out.measure, out.certificate, out.offending_state,
                       out.supported_not_full, out.zero_weight_regions, added, rnd)


def sample_martingale_measure(m: Market, grid: Grid, rng: np.random.Generator,
                              n_vertices: int = 3, eps_pos: float = EPS_POS) -> AtomicMeasure:
    """Random martingale measure with positive weight on every grid atom.

    Mixes ``n_vertices`` vertices of the floored moment polytope, each the
    optimum for a random linear objective, with Dirichlet weights.
    """
    states = grid.points
    P = m.payoff_matrix(states)
    floor = eps_pos / states.shape[0]
    parts = []
    for _ in range(n_vertices):
        sol = solve_lp(_moment_lp(P, m.price_vector, floor, c=rng.standard_normal(states.shape[0])))
        if not sol.optimal:
            raise ValueError(f"no floored martingale measure on this grid ({sol.status.value})")
        parts.append(floor + sol.x)
    lam = rng.dirichlet(np.ones(n_vertices))
    return AtomicMeasure(states, lam @ np.array(parts))
