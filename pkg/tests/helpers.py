"""Random markets and claims, and brute-force oracles that share no code with the solver."""

from __future__ import annotations

import itertools

import numpy as np

from probfree.market import Market
from probfree.payoff import Abs, Add, Claim, Const, Coord, Max, PosPart, Scale, inf_bound
from probfree.state_space import StateSpace

# ---------------------------------------------------------------------------
# random instances


def random_space(rng, k):
    lo = rng.uniform(-1.0, 1.0, k).round(3)
    hi = lo + rng.uniform(0.5, 2.0, k).round(3)
    return StateSpace(tuple(lo), tuple(hi))


def _affine(rng, k, scale=1.0):
    terms = [Const(float(rng.uniform(-1, 1) * scale))]
    for i in range(k):
        terms.append(Scale(float(rng.uniform(-1, 1) * scale), Coord(i)))
    return Add(tuple(terms))


def random_payoff(rng, space):
    k = space.dim
    kind = rng.integers(3)
    if kind == 0:
        e = _affine(rng, k)
    elif kind == 1:
        e = Add((PosPart(_affine(rng, k)), Scale(float(rng.uniform(-0.5, 0.5)), Coord(int(rng.integers(k))))))
    else:
        e = Max((_affine(rng, k), _affine(rng, k)))
    # shift to a nonnegative payoff, as assets in the model pay S_d >= 0
    return Add((e, Const(max(0.0, -inf_bound(e, space)) + float(rng.uniform(0, 0.5)))))


def random_claim(rng, space):
    k = space.dim
    kind = rng.integers(4)
    if kind == 0:
        e = PosPart(_affine(rng, k))
    elif kind == 1:
        e = Abs(_affine(rng, k))
    elif kind == 2:
        e = Max((PosPart(_affine(rng, k)), PosPart(_affine(rng, k))))
    else:
        e = Add((PosPart(_affine(rng, k)), Const(float(rng.uniform(0, 1)))))
    return Claim(e, space)


def interior_prices(rng, space, payoffs, n_atoms=40):
    """Prices ``f_d = int S_d dmu`` for a random measure with many atoms: arbitrage-free."""
    pts = space.lo_array + rng.random((n_atoms, space.dim)) * space.widths
    pts = np.vstack([pts, space.vertices()])
    w = rng.random(pts.shape[0]) + 0.05
    w /= w.sum()
    from probfree.payoff import evaluate_many
    return [float(w @ evaluate_many(s, pts)) for s in payoffs]


def random_market(rng, arbitrage_free=True, k=None, D=None):
    k = k or int(rng.integers(1, 3))
    D = D or int(rng.integers(1, 5))
    space = random_space(rng, k)
    payoffs = [random_payoff(rng, space) for _ in range(D)]
    if arbitrage_free:
        prices = interior_prices(rng, space, payoffs)
    else:
        from probfree.payoff import sup_bound
        prices = [float(rng.uniform(0, 1.3) * sup_bound(s, space)) for s in payoffs]
    return Market.create(space, payoffs, prices)


def call_market():
    space = StateSpace((0.0,), (1.0,))
    m = Market.create(space, [Const(1.0) + Coord(0)], [1.5])
    H = Claim(PosPart(m.payoffs[1] - 1.5), space, "call")
    return m, H


# ---------------------------------------------------------------------------
# brute-force LP oracle


def brute_force_lp(c, A, b, E, g, nonneg, tol=1e-9):
    """Status and value of ``min c.x, Ax >= b, Ex = g, x_j >= 0 (nonneg)`` by enumeration.

    Needs a pointed feasible region, ``[A; E; I_nonneg]`` of full column
    rank, and ``E`` of full row rank.
    Vertices come from every nonsingular choice of ``n`` active rows that
    includes all equalities; unboundedness from the extreme rays of the
    recession cone (``n - 1`` independent active homogeneous rows).
    Returns ("optimal", value), ("infeasible", None) or ("unbounded", None).
    """
    c = np.asarray(c, float)
    n = c.size
    ineq = np.vstack([np.asarray(A, float).reshape(-1, n), np.eye(n)[np.asarray(nonneg, bool)]])
    rhs = np.concatenate([np.asarray(b, float).ravel(), np.zeros(ineq.shape[0] - len(b))])
    E = np.asarray(E, float).reshape(-1, n)
    g = np.asarray(g, float).ravel()
    m_eq = E.shape[0]

    def feasible(x):
        return (np.all(ineq @ x >= rhs - tol * (1 + np.abs(rhs)))
                and np.all(np.abs(E @ x - g) <= tol * (1 + np.abs(g))))

    values = []
    for comb in itertools.combinations(range(ineq.shape[0]), n - m_eq):
        M = np.vstack([E, ineq[list(comb)]])
        if abs(np.linalg.det(M)) < 1e-9:
            continue
        x = np.linalg.solve(M, np.concatenate([g, rhs[list(comb)]]))
        if feasible(x):
            values.append(float(c @ x))
    if not values:
        return "infeasible", None

    if m_eq == n:
        return "optimal", min(values)
    for comb in itertools.combinations(range(ineq.shape[0]), n - 1 - m_eq):
        R = np.vstack([E, ineq[list(comb)]])
        if R.shape[0] == 0:
            nulls = np.eye(n)
        else:
            _, sv, vt = np.linalg.svd(R)
            if int(np.sum(sv > 1e-9)) != n - 1:
                continue
            nulls = vt[-1:]
        for d in nulls:
            for r in (d, -d):
                if (np.all(ineq @ r >= -tol) and np.all(np.abs(E @ r) <= tol)
                        and c @ r < -1e-9):
                    return "unbounded", None
    return "optimal", min(values)


def random_lp(rng):
    """Random LP with ``n <= 6`` variables and ``m <= 10`` rows and a pointed feasible region."""
    while True:
        n = int(rng.integers(1, 7))
        m_eq = int(rng.integers(0, min(3, n + 1)))
        m_in = int(rng.integers(1, 11 - m_eq))
        A = rng.integers(-5, 6, (m_in, n)).astype(float)
        b = rng.integers(-5, 6, m_in).astype(float)
        E = rng.integers(-5, 6, (m_eq, n)).astype(float)
        g = rng.integers(-5, 6, m_eq).astype(float)
        c = rng.integers(-5, 6, n).astype(float)
        nonneg = rng.random(n) < 0.5
        if rng.random() < 0.5:
            # plant an integer feasible point
            x0 = rng.integers(-3, 4, n).astype(float)
            x0[nonneg] = np.abs(x0[nonneg])
            b = A @ x0 - rng.integers(0, 3, m_in)
            g = E @ x0
        full = np.vstack([A, E, np.eye(n)[nonneg]])
        if np.linalg.matrix_rank(full) == n and (m_eq == 0 or np.linalg.matrix_rank(E) == m_eq):
            return c, A, b, E, g, nonneg


def superhedge_2var_by_vertices(s, H, f):
    """Cheapest ``(p0, p1)`` with ``p0 + p1 s_i >= H_i`` by intersecting all pairs of constraint lines."""
    s = np.asarray(s, float)
    H = np.asarray(H, float)
    n = s.size
    best = np.inf
    i_all, j_all = np.triu_indices(n, k=1)
    for lo in range(0, i_all.size, 20000):
        i = i_all[lo:lo + 20000]
        j = j_all[lo:lo + 20000]
        den = s[j] - s[i]
        ok = np.abs(den) > 1e-12
        i, j, den = i[ok], j[ok], den[ok]
        p1 = (H[j] - H[i]) / den
        p0 = H[i] - p1 * s[i]
        # many pairs meet at the same vertex; check each vertex once
        _, keep = np.unique(np.round(np.column_stack([p0, p1]), 12), axis=0, return_index=True)
        p0, p1 = p0[keep], p1[keep]
        feas = np.all(p0[:, None] + p1[:, None] * s[None, :] >= H[None, :] - 1e-12, axis=1)
        if np.any(feas):
            best = min(best, float(np.min(p0[feas] * f[0] + p1[feas] * f[1])))
    return best
