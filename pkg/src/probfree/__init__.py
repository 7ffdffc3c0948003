"""Probability-free one-period asset pricing.

Arbitrage checks with certificates, full-support martingale measures,
superhedging and subhedging by semi-infinite linear programming, and the
strictly positive extension of the price functional.
"""

from .ftap import (ArbitrageCertificate, FtapVerdict, Verdict, check_arbitrage,
                   integrability_reweight, reference_measure, sample_martingale_measure,
                   verify_certificate, verify_measure)
from .hedging import (ArbitrageError, HedgeOptions, HedgeResult, PriceInterval, PriceVerdict,
                      is_no_arbitrage_price, price_interval, subhedge, superhedge)
from .lp import (LpProblem, LpSolution, LpStatus, SemiInfiniteProblem, SipOptions,
                 extract_dual_measure, solve_lp, solve_semi_infinite)
from .market import (Market, independent_subbasis, portfolio_cost, portfolio_payoff, returns)
from .measure import AtomicMeasure
from .payoff import (Abs, Add, Claim, Const, Coord, Exp, Expr, Max, Min, Mul, PosPart, Scale, Sub,
                     evaluate, from_json, grid_max_violation, inf_bound, sup_bound)
from .state_space import Grid, StateSpace, dense_sequence, fill_distance, refine_around
from .viability import build_extension, marketed_coordinates, verify_extension

__version__ = "0.1.0"
