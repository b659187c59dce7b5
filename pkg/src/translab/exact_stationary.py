"""Exact stationary analysis of the finite transposition chain.

For a strictly positive pmf on 1..N the chain on permutations is reversible
with stationary weights prod_j pi_j ** (-X_j), X_j being the position of
item j.  This module evaluates that product form by enumeration (N <= 8)
and independently solves the chain's balance equations (N <= 6).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as splinalg
from scipy.special import logsumexp

from .errors import CapacityError, InvalidParameter, StationarySolveError

PRODUCT_FORM_CAP = 8
BRUTE_FORCE_CAP = 6


@lru_cache(maxsize=None)
def permutations(n):
    """All orders of 1..n as an (n!, n) array, row = item at each position."""
    return np.array(list(itertools.permutations(range(1, n + 1))), dtype=np.int64)


@lru_cache(maxsize=None)
def _positions(n):
    # positions[r, j-1] = position of item j in order r
    orders = permutations(n)
    pos = np.empty_like(orders)
    rows = np.arange(len(orders))[:, None]
    pos[rows, orders - 1] = np.arange(1, n + 1)
    return pos


def _as_pmf(pi):
    p = np.asarray(pi, dtype=float).ravel()
    if p.size == 0 or np.any(~(p > 0)):
        raise InvalidParameter("pmf entries must be strictly positive")
    if abs(p.sum() - 1.0) > 1e-9:
        raise InvalidParameter(f"pmf sums to {p.sum()!r}")
    return p


@dataclass
class StationaryLaw:
    orders: np.ndarray  # (states, N), item at each position
    probs: np.ndarray
    method: str

    def as_dict(self):
        return {tuple(int(v) for v in o): float(p) for o, p in zip(self.orders, self.probs)}

    def prob(self, order):
        return self.as_dict()[tuple(order)]


@lru_cache(maxsize=256)
def _product_form_cached(key):
    p = np.array(key)
    n = len(p)
    # log-space with a max shift: pi_j**(-N) overflows for small pi_j
    logw = -(_positions(n) * np.log(p)).sum(axis=1)
    probs = np.exp(logw - logsumexp(logw))
    probs.setflags(write=False)
    return probs


def product_form_law(pi):
    p = _as_pmf(pi)
    n = len(p)
    if n > PRODUCT_FORM_CAP:
        raise CapacityError(f"product-form enumeration is capped at N={PRODUCT_FORM_CAP}, got {n}")
    return StationaryLaw(permutations(n), _product_form_cached(tuple(p.tolist())), "product_form")


def product_form_prob(pi, assignment):
    """Stationary Pr[X_1 = i_1, ..., X_N = i_N] with ``assignment = (i_1, ..., i_N)``."""
    p = _as_pmf(pi)
    a = tuple(int(v) for v in assignment)
    n = len(p)
    if sorted(a) != list(range(1, n + 1)):
        raise InvalidParameter(f"{a} is not an assignment of positions 1..{n}")
    law = product_form_law(p)
    order = [0] * n
    for item, pos in enumerate(a, start=1):
        order[pos - 1] = item
    hit = np.nonzero((law.orders == np.array(order)).all(axis=1))[0]
    return float(law.probs[hit[0]])


def transposition_matrix(pi):
    """(orders, P): the transposition chain on all N! orders, dense."""
    p = _as_pmf(pi)
    n = len(p)
    orders = permutations(n)
    index = {tuple(o): r for r, o in enumerate(orders.tolist())}
    m = len(orders)
    P = np.zeros((m, m))
    for r, o in enumerate(orders.tolist()):
        for pos in range(n):
            item = o[pos]
            if pos == 0:
                P[r, r] += p[item - 1]
            else:
                t = list(o)
                t[pos - 1], t[pos] = t[pos], t[pos - 1]
                P[r, index[tuple(t)]] += p[item - 1]
    return orders, P


def is_irreducible(P):
    ncomp, _ = csgraph.connected_components(sparse.csr_matrix(P), directed=True, connection="strong")
    return ncomp == 1


def solve_stationary(P, tol=1e-12):
    """Stationary row vector of a finite stochastic matrix (dense or sparse).

    Dense: solves (P^T - I) x = 0 with one equation replaced by
    sum(x) = 1.  Sparse: pins x_0 = 1 and solves the reduced system, which
    keeps the LU factors sparse, then normalises.  Both check the residual
    ||x P - x||_inf <= tol.
    """
    is_sparse = sparse.issparse(P)
    m = P.shape[0]
    rowsum = np.asarray(P.sum(axis=1)).ravel()
    if np.max(np.abs(rowsum - 1.0)) > 1e-12:
        raise StationarySolveError(f"rows do not sum to 1 (worst {np.max(np.abs(rowsum - 1))})")
    if is_sparse:
        Q = (sparse.identity(m, format="csc") - P.T.tocsc()).tocsc()
        x = np.ones(m)
        if m > 1:
            rhs = -Q[1:, 0].toarray().ravel()
            x[1:] = splinalg.spsolve(Q[1:, 1:].tocsc(), rhs)
        x /= x.sum()
        resid = np.max(np.abs(P.T @ x - x))
    else:
        A = P.T - np.eye(m)
        A[-1, :] = 1.0
        b = np.zeros(m)
        b[-1] = 1.0
        try:
            x = np.linalg.solve(A, b)
        except np.linalg.LinAlgError as exc:
            raise StationarySolveError(f"singular balance system: {exc}") from None
        resid = np.max(np.abs(x @ P - x))
    if not np.all(np.isfinite(x)):
        raise StationarySolveError("non-finite stationary solution")
    if resid > tol:
        raise StationarySolveError(f"stationary residual {resid:.3e} exceeds {tol:.1e}")
    if np.min(x) < -tol:
        irreducible = is_irreducible(P)
        raise StationarySolveError(
            f"negative stationary mass {np.min(x):.3e} (irreducible={irreducible})")
    return x


def brute_force_stationary(pi):
    p = _as_pmf(pi)
    if len(p) > BRUTE_FORCE_CAP:
        raise CapacityError(f"brute-force solve is capped at N={BRUTE_FORCE_CAP}, got {len(p)}")
    orders, P = transposition_matrix(p)
    return StationaryLaw(orders, solve_stationary(P), "brute_force")


def _static_tails(pi, orders):
    # tails[r, x] = sum of pi over items sitting beyond position x in order r
    n = len(pi)
    at = pi[orders - 1]
    rev = np.cumsum(at[:, ::-1], axis=1)[:, ::-1]
    return np.concatenate([rev, np.zeros((len(orders), 1))], axis=1)[:, : n + 1]


def stationary_cost_tail(pi, x, law=None):
    """Pr[C_N > x] under the stationary law (product form unless ``law`` given)."""
    p = _as_pmf(pi)
    n = len(p)
    x = int(x)
    if not 0 <= x <= n:
        raise InvalidParameter(f"x must lie in 0..{n}, got {x}")
    law = law if law is not None else product_form_law(p)
    return float(law.probs @ _static_tails(p, law.orders)[:, x])


def prefix_max_tail(pi, i, x, law=None):
    """Stationary Pr[max_{j <= i} X_j > x]."""
    p = _as_pmf(pi)
    law = law if law is not None else product_form_law(p)
    n = len(p)
    pos = np.empty_like(law.orders)
    pos[np.arange(len(law.orders))[:, None], law.orders - 1] = np.arange(1, n + 1)
    hit = pos[:, :i].max(axis=1) > x
    return float(law.probs[hit].sum())


def detailed_balance_error(pi):
    """max |Pr[s] P(s, t) - Pr[t] P(t, s)| under the product form."""
    _, P = transposition_matrix(pi)
    w = product_form_law(pi).probs
    flow = w[:, None] * P
    return float(np.max(np.abs(flow - flow.T)))


def distance_tv(a, b):
    return 0.5 * float(np.sum(np.abs(np.asarray(a) - np.asarray(b))))


def expected_cost(pi):
    p = _as_pmf(pi)
    return float(sum(stationary_cost_tail(p, x) for x in range(len(p))))
