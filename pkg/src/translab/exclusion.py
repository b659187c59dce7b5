"""Constrained asymmetric exclusion process on the half-line.

n particles sit on slots 1, 2, ...; each carries a unit-rate clock and on a
tick tries to step left with probability p or right with probability q.  A
move happens only into an empty slot, and never left of slot 1.  With
``beta = q / p < 1`` the stationary law is proportional to
``beta ** sum(positions)``, and everything below is a closed form of it.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from . import _kernels
from .errors import InvalidParameter

LEFT = -1
RIGHT = 1


@dataclass(frozen=True)
class ExclusionState:
    positions: tuple

    def __post_init__(self):
        pos = tuple(int(v) for v in self.positions)
        if not pos:
            raise InvalidParameter("need at least one particle")
        if pos[0] < 1 or any(b <= a for a, b in zip(pos, pos[1:])):
            raise InvalidParameter(f"positions {pos} are not strictly increasing from slot 1")
        object.__setattr__(self, "positions", pos)

    @property
    def n(self):
        return len(self.positions)

    @property
    def kappa(self):
        return self.positions[-1] - self.n

    @classmethod
    def packed(cls, n):
        """The minimal configuration (1, ..., n)."""
        return cls(tuple(range(1, n + 1)))


@dataclass(frozen=True)
class CaepRates:
    """Left/right step probabilities, normalised so that p + q = 1."""

    p: float
    q: float

    def __post_init__(self):
        p, q = float(self.p), float(self.q)
        if p < 0 or q < 0 or p + q <= 0:
            raise InvalidParameter(f"rates must be non-negative and not both zero: p={p}, q={q}")
        object.__setattr__(self, "p", p / (p + q))
        object.__setattr__(self, "q", q / (p + q))

    @property
    def beta(self):
        return self.q / self.p if self.p > 0 else math.inf

    @classmethod
    def from_beta(cls, beta):
        beta = float(beta)
        if beta < 0:
            raise InvalidParameter(f"beta must be non-negative, got {beta}")
        return cls(1.0, beta)


def attempt_move(state, j, direction):
    """Try to move particle ``j`` (1-based) one slot; blocked moves are no-ops."""
    if not 1 <= j <= state.n:
        raise InvalidParameter(f"particle index {j} outside 1..{state.n}")
    if direction not in (LEFT, RIGHT):
        raise InvalidParameter(f"direction must be LEFT or RIGHT, got {direction!r}")
    z = state.positions
    target = z[j - 1] + direction
    if target < 1:
        return state
    if direction == LEFT and j > 1 and z[j - 2] == target:
        return state
    if direction == RIGHT and j < state.n and z[j] == target:
        return state
    return ExclusionState(z[: j - 1] + (target,) + z[j:])


@dataclass
class CaepRun:
    state: ExclusionState
    kappa_hist: np.ndarray
    config_counts: dict = field(default_factory=dict)
    moves: int = 0
    blocked: int = 0
    recorded: int = 0

    def kappa_freq(self):
        return self.kappa_hist / self.recorded


_CHUNK = 1 << 20


def simulate(state, rates, events, rng, *, record_every=1, burn_in=0, kappa_cap=256,
             track_configs=False, chunk=_CHUNK):
    """Run ``events`` uniformised clock ticks from ``state``.

    Every tick picks a particle uniformly and a direction (left w.p. p).
    Because all clocks share one rate this jump chain has the same
    stationary occupancy as the continuous-time process.  After burn-in,
    every ``record_every``-th post-tick configuration is recorded.
    """
    events = int(events)
    if events < 1:
        raise InvalidParameter("events must be at least 1")
    if record_every < 1:
        raise InvalidParameter("record_every must be at least 1")
    n = state.n
    z = np.array((0,) + state.positions, dtype=np.int64)
    hist = np.zeros(kappa_cap + 1, dtype=np.int64)
    codes = _kernels.new_far()
    base = 0
    if track_configs:
        base = 1 << max(1, 62 // n)
    moves = blocked = 0
    done = 0
    while done < events:
        m = min(chunk, events - done)
        choice = rng.integers(1, n + 1, m)
        u = rng.random(m)
        mv, bl = _kernels.caep_run(z, choice, u, rates.p, int(record_every), done,
                                   int(burn_in), hist, codes, base)
        moves += mv
        blocked += bl
        done += m
    configs = {}
    if track_configs:
        for code, count in codes.items():
            if code < 0:
                configs[None] = configs.get(None, 0) + int(count)
                continue
            pos = []
            for _ in range(n):
                pos.append(int(code % base))
                code //= base
            configs[tuple(pos)] = int(count)
    recorded = int(hist.sum())
    return CaepRun(ExclusionState(tuple(int(v) for v in z[1:])), hist, configs,
                   int(moves), int(blocked), recorded)


# --- exact stationary quantities -------------------------------------------------


def _check_beta(beta, allow_zero=False):
    beta = float(beta)
    lo_ok = beta >= 0 if allow_zero else beta > 0
    if not (lo_ok and beta < 1):
        rng = "[0, 1)" if allow_zero else "(0, 1)"
        raise InvalidParameter(f"stationary formulas need beta in {rng}, got {beta}")
    return beta


def eta_nk(n, k, beta):
    """Sum of beta**sum(i_j) over configurations with all particles in 1..n+k."""
    beta = _check_beta(beta)
    if n < 1 or k < 0:
        raise InvalidParameter(f"need n >= 1 and k >= 0, got n={n}, k={k}")
    val = beta ** (n * (n + 1) // 2)
    for i in range(1, k + 1):
        val *= (1.0 - beta ** (n + i)) / (1.0 - beta**i)
    return val


def eta_table(n, k, beta):
    """eta_{m,l} for 0 <= m <= n, 0 <= l <= k by the last-particle recursion.

    Row m = 0 is the empty configuration (value 1).
    """
    beta = _check_beta(beta)
    t = np.empty((n + 1, k + 1))
    t[0, :] = 1.0
    for m in range(1, n + 1):
        t[m, 0] = beta ** (m * (m + 1) // 2)
        for l in range(1, k + 1):
            t[m, l] = t[m, l - 1] + beta ** (m + l) * t[m - 1, l]
    return t


def eta_n(n, beta):
    beta = _check_beta(beta)
    if n < 1:
        raise InvalidParameter(f"need n >= 1, got {n}")
    val = beta ** (n * (n + 1) // 2)
    for i in range(1, n + 1):
        val /= 1.0 - beta**i
    return val


def config_prob(positions, beta):
    """Stationary probability of the configuration ``positions``."""
    beta = _check_beta(beta)
    st = ExclusionState(positions)
    n = st.n
    excess = sum(st.positions) - n * (n + 1) // 2
    log_norm = sum(math.log1p(-beta**i) for i in range(1, n + 1))
    return math.exp(excess * math.log(beta) + log_norm)


def _log1m_pow(beta, lo, hi):
    """sum_{l=lo}^{hi} log(1 - beta**l), for 1 <= lo (empty when hi < lo)."""
    if hi < lo:
        return 0.0
    ls = np.arange(lo, hi + 1, dtype=float)
    return float(np.sum(np.log1p(-(beta**ls))))


def kappa_log_deficit(n, beta, i):
    """log(Pr[kappa_n = i] / beta**i), which is negative for every n >= 1."""
    beta = _check_beta(beta, allow_zero=True)
    return math.log1p(-(beta**n)) + _log1m_pow(beta, i + 1, i + n - 1)


def kappa_pmf(n, beta, i):
    """Pr[kappa_n = i] for the rightmost particle's offset kappa_n = Z_n - n."""
    beta = _check_beta(beta, allow_zero=True)
    if n < 1:
        raise InvalidParameter(f"need n >= 1, got {n}")
    if i < 0:
        return 0.0
    return beta**i * math.exp(kappa_log_deficit(n, beta, i))


def kappa_tail(n, beta, i):
    """Pr[kappa_n >= i].

    ``{kappa_n < i}`` is the event that all particles fit in 1..n+i-1, whose
    mass is eta_{n,i-1} / eta_n = prod_{l=i}^{i+n-1} (1 - beta**l).
    """
    beta = _check_beta(beta, allow_zero=True)
    if n < 1:
        raise InvalidParameter(f"need n >= 1, got {n}")
    if i <= 0:
        return 1.0
    return -math.expm1(_log1m_pow(beta, i, i + n - 1))


def kappa_tail_sum(n, beta, i, tol=1e-15):
    """Pr[kappa_n >= i] by summing the pmf upward (remainder < beta**m / (1 - beta))."""
    beta = _check_beta(beta, allow_zero=True)
    if i <= 0:
        return 1.0
    total = 0.0
    m = i
    while True:
        total += kappa_pmf(n, beta, m)
        m += 1
        if beta**m / (1.0 - beta) <= tol * max(total, 1e-300):
            return total


def kappa_bound(beta, i):
    """The geometric envelope beta**i / (1 - beta) on Pr[kappa_n >= i]."""
    beta = _check_beta(beta, allow_zero=True)
    return beta**i / (1.0 - beta)


def kappa_limit_pmf(beta, i, tol=1e-12):
    """Pr[kappa = i] for the n -> infinity limit, with relative error <= tol.

    The infinite product is cut at the first J with
    beta**(i+J+1) / ((1-beta)(1-beta**(i+J+1))) <= tol, which bounds the
    dropped part of the log-product.
    """
    beta = _check_beta(beta, allow_zero=True)
    if tol <= 0:
        raise InvalidParameter("tol must be positive")
    if i < 0:
        return 0.0
    if beta == 0.0:
        return 1.0 if i == 0 else 0.0
    j = 1
    while True:
        b = beta ** (i + j + 1)
        if b / ((1.0 - beta) * (1.0 - b)) <= tol:
            break
        j += 1
    return beta**i * math.exp(_log1m_pow(beta, i + 1, i + j))


# --- slot-capped chain for oracle checks ---------------------------------------------


def capped_states(n, cap):
    return list(itertools.combinations(range(1, cap + 1), n))


def capped_chain(n, k, rates):
    """Jump chain of the CAEP restricted to slots 1..n+k.

    Right moves out of slot n+k are forbidden, which keeps the restricted
    product form reversible.  Returns (states, P) with P a CSR matrix.
    """
    cap = n + k
    states = capped_states(n, cap)
    index = {s: r for r, s in enumerate(states)}
    rows, cols, vals = [], [], []
    for r, s in enumerate(states):
        stay = 0.0
        occupied = set(s)
        for j in range(n):
            for step, w in ((-1, rates.p), (1, rates.q)):
                if w == 0:
                    continue
                target = s[j] + step
                if 1 <= target <= cap and target not in occupied:
                    t = s[:j] + (target,) + s[j + 1:]
                    rows.append(r)
                    cols.append(index[t])
                    vals.append(w / n)
                else:
                    stay += w / n
        if stay:
            rows.append(r)
            cols.append(r)
            vals.append(stay)
    m = len(states)
    P = sparse.csr_matrix((vals, (rows, cols)), shape=(m, m))
    return states, P


def cap_for_tail(beta, tol):
    """Smallest k with the envelope beta**(k+1)/(1-beta) below ``tol``."""
    beta = _check_beta(beta)
    k = 0
    while kappa_bound(beta, k + 1) >= tol:
        k += 1
    return k
