"""Linear list under the transposition rule and two baselines.

A list starts in identity order.  Only positions that have ever been touched
are stored; everything else implicitly holds ``item == position``, which
lets the same type represent a finite list ``1..N`` or the infinite list.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import InvalidParameter


class Policy(enum.IntEnum):
    TRANSPOSITION = _kernels.TRANSPOSITION
    MOVE_TO_FRONT = _kernels.MOVE_TO_FRONT
    STATIC = _kernels.STATIC

    @classmethod
    def parse(cls, name):
        key = str(name).strip().lower().replace("-", "_")
        aliases = {"transposition": cls.TRANSPOSITION, "mtf": cls.MOVE_TO_FRONT,
                   "move_to_front": cls.MOVE_TO_FRONT, "static": cls.STATIC}
        try:
            return aliases[key]
        except KeyError:
            raise InvalidParameter(f"unknown policy {name!r}") from None


class ListState:
    """Permutation of the items together with its inverse.

    ``size`` is ``None`` for the infinite list.
    """

    __slots__ = ("_order", "_pos", "frontier", "time", "size")

    def __init__(self, size=None):
        self._order = {}  # position -> item, touched positions only
        self._pos = {}  # item -> position
        self.frontier = 0
        self.time = 0
        self.size = size

    def position(self, item):
        """X_item(t): the 1-based position of ``item``."""
        return self._pos.get(item, item)

    def item_at(self, pos):
        return self._order.get(pos, pos)

    def prefix(self, n):
        return tuple(self.item_at(p) for p in range(1, n + 1))

    def touched(self):
        """Touched positions in increasing order."""
        return sorted(self._order)

    def _place(self, item, pos):
        self._order[pos] = item
        self._pos[item] = pos
        if pos > self.frontier:
            self.frontier = pos

    def swap_positions(self, p, q):
        a, b = self.item_at(p), self.item_at(q)
        self._place(b, p)
        self._place(a, q)

    def copy(self):
        new = ListState(self.size)
        new._order = dict(self._order)
        new._pos = dict(self._pos)
        new.frontier = self.frontier
        new.time = self.time
        return new

    def check(self):
        """Raise AssertionError unless order and position_of are inverse."""
        assert self._order.keys() == self._pos.keys(), "touched items != touched positions"
        for p, j in self._order.items():
            assert self._pos[j] == p, f"item {j} at {p} but position_of says {self._pos[j]}"
            if self.size is not None:
                assert 1 <= p <= self.size

    def __eq__(self, other):
        if not isinstance(other, ListState):
            return NotImplemented
        return self.size == other.size and self.displaced() == other.displaced()

    def displaced(self):
        """{position: item} for every position not holding its own index."""
        return {p: j for p, j in self._order.items() if p != j}

    def __repr__(self):
        n = max(self.frontier, 1)
        return f"ListState(prefix={self.prefix(min(n, 12))}, time={self.time})"

    @classmethod
    def from_order(cls, order, size=None):
        """Build a state whose first ``len(order)`` positions hold ``order``."""
        order = [int(v) for v in order]
        if sorted(order) != list(range(1, len(order) + 1)):
            raise InvalidParameter(f"{order} is not a permutation of 1..{len(order)}")
        st = cls(size)
        for p, j in enumerate(order, start=1):
            st._place(j, p)
        return st


def init_list(size=None):
    return ListState(size)


def search_cost(state, item):
    if item < 1:
        raise InvalidParameter(f"items are numbered from 1, got {item}")
    return state.position(item)


def apply_request(state, item, policy=Policy.TRANSPOSITION):
    """Serve a request for ``item`` and reorganise ``state`` in place."""
    if item < 1:
        raise InvalidParameter(f"items are numbered from 1, got {item}")
    p = state.position(item)
    if policy == Policy.TRANSPOSITION:
        if p > 1:
            state.swap_positions(p - 1, p)
    elif policy == Policy.MOVE_TO_FRONT:
        for q in range(p, 1, -1):
            state.swap_positions(q - 1, q)
    state.time += 1
    return state


def static_cost_tail(sigma, dist, x):
    """Pr[C^sigma > x] for the fixed arrangement ``sigma``.

    ``sigma`` is a ListState or a sequence giving the item at each position;
    items past its end stay in identity order.
    """
    state = sigma if isinstance(sigma, ListState) else ListState.from_order(sigma)
    if x < 0:
        raise InvalidParameter("x must be non-negative")
    touched = state.frontier
    if dist.support is not None:
        touched = max(touched, dist.support)
    n = max(touched, x)
    # items inside the touched prefix, plus the untouched identity tail beyond it
    items = np.arange(1, n + 1)
    positions = np.fromiter((state.position(j) for j in items), dtype=np.int64, count=n)
    beyond = dist.pmf(items[positions > x])
    return float(np.sum(beyond) + dist.tail(n))


# --- long runs -------------------------------------------------------------------


@dataclass
class CostRecorder:
    """Histograms of C(t) (and optionally of max_{j<=i} X_j(t)) in batches.

    ``hcap`` is the overflow bin index.  When ``rb_every`` is set (finite
    support only) the recorder also accumulates the conditional tail
    ``Pr[C > x | arrangement]`` every ``rb_every`` recorded steps.
    """

    hcap: int = 64
    batches: int = 20
    prefix: int = 0
    rb_every: int = 0
    cost_hist: np.ndarray = field(default=None, repr=False)
    prefix_hist: np.ndarray = field(default=None, repr=False)
    rb_acc: np.ndarray = field(default=None, repr=False)
    rb_count: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.batches < 1:
            raise InvalidParameter("need at least one batch")
        b, h = self.batches, self.hcap + 1
        if self.cost_hist is None:
            self.cost_hist = np.zeros((b, h), dtype=np.int64)
        if self.prefix_hist is None:
            self.prefix_hist = np.zeros((b, h), dtype=np.int64)
        if self.rb_acc is None:
            self.rb_acc = np.zeros((b, h), dtype=np.float64)
        if self.rb_count is None:
            self.rb_count = np.zeros(b, dtype=np.int64)

    @property
    def samples(self):
        return int(self.cost_hist.sum())

    def _tails(self, hist, xs):
        # counts of values strictly greater than x
        rev = np.cumsum(hist[..., ::-1], axis=-1)[..., ::-1]
        xs = np.asarray(xs)
        if np.any(xs >= self.hcap):
            raise InvalidParameter(f"x must be below the histogram cap {self.hcap}")
        return rev[..., xs + 1]

    def tail_counts(self, xs):
        return self._tails(self.cost_hist.sum(axis=0), xs)

    def tail(self, xs):
        return self.tail_counts(xs) / self.samples

    def prefix_tail(self, xs):
        h = self.prefix_hist.sum(axis=0)
        return self._tails(h, xs) / h.sum()

    def rb_tail(self, xs):
        return self.rb_acc.sum(axis=0)[np.asarray(xs)] / self.rb_count.sum()

    def batch_means(self, what, xs):
        """Per-batch estimates, shape (batches, len(xs)); empty batches dropped."""
        xs = np.asarray(xs)
        if what == "cost":
            n = self.cost_hist.sum(axis=1)
            vals = self._tails(self.cost_hist, xs)
        elif what == "prefix":
            n = self.prefix_hist.sum(axis=1)
            vals = self._tails(self.prefix_hist, xs)
        elif what == "rb":
            n = self.rb_count
            vals = self.rb_acc[:, xs]
        else:
            raise InvalidParameter(what)
        keep = n > 0
        return vals[keep] / n[keep, None]

    def merge(self, other):
        self.cost_hist = self.cost_hist + other.cost_hist
        self.prefix_hist = self.prefix_hist + other.prefix_hist
        self.rb_acc = self.rb_acc + other.rb_acc
        self.rb_count = self.rb_count + other.rb_count
        return self


@dataclass
class TraceResult:
    recorder: CostRecorder
    state: ListState
    horizon: int
    burn: int


_DENSE_INFINITE = 1 << 16
_CHUNK = 1 << 20


class _KernelList:
    """Dense-plus-sparse list storage shared with the compiled kernels."""

    def __init__(self, size):
        self.size = size
        m = size if size is not None else _DENSE_INFINITE
        self.item_at = np.arange(m + 1, dtype=np.int64)
        self.pos_of = np.arange(m + 1, dtype=np.int64)
        self.far_item = _kernels.new_far()
        self.far_pos = _kernels.new_far()
        self.frontier = 0

    def to_state(self, time=0):
        # only displaced positions are stored; the frontier is carried over
        st = ListState(self.size)
        moved = np.nonzero(self.item_at != np.arange(len(self.item_at)))[0]
        for p, j in zip(moved.tolist(), self.item_at[moved].tolist()):
            st._place(j, p)
        for p, j in self.far_item.items():
            if p != j:
                st._place(int(j), int(p))
        st.frontier = max(st.frontier, self.frontier)
        st.time = time
        return st


def run_trace(dist, policy, horizon, rng, recorder=None, *, burn_in=0.0, chunk=_CHUNK):
    """Sample ``horizon`` requests from ``dist`` and serve them under ``policy``.

    The first ``floor(burn_in * horizon)`` requests are served but not
    recorded.  Requests are drawn in chunks of ``chunk`` with
    ``dist.sample(rng, chunk)``, so the same generator state reproduces the
    same trace.
    """
    policy = Policy(policy) if not isinstance(policy, str) else Policy.parse(policy)
    horizon = int(horizon)
    if horizon < 1:
        raise InvalidParameter("horizon must be at least 1")
    if not 0.0 <= burn_in < 1.0:
        raise InvalidParameter("burn-in fraction must lie in [0, 1)")
    if policy == Policy.MOVE_TO_FRONT and dist.support is None:
        raise InvalidParameter("move-to-front traces need a finite support")
    rec = recorder if recorder is not None else CostRecorder()
    if rec.rb_every and dist.support is None:
        raise InvalidParameter("conditional-tail recording needs a finite support")
    burn = int(burn_in * horizon)
    rec_steps = horizon - burn
    batch_len = max(1, -(-rec_steps // rec.batches))
    lst = _KernelList(dist.support)
    if dist.support is not None:
        pi_dense = np.concatenate([[0.0], dist.pmf_vector(dist.support)])
    else:
        pi_dense = np.zeros(1)
    done = 0
    while done < horizon:
        n = min(chunk, horizon - done)
        items = dist.sample(rng, n)
        lst.frontier = _kernels.list_trace(
            items, int(policy), lst.item_at, lst.pos_of, lst.far_item, lst.far_pos,
            done, burn, batch_len, rec.cost_hist, int(rec.prefix), rec.prefix_hist,
            pi_dense, int(rec.rb_every), rec.rb_acc, rec.rb_count, lst.frontier,
        )
        done += n
    return TraceResult(rec, lst.to_state(horizon), horizon, burn)


def run_trace_reference(dist, policy, horizon, rng, *, chunk=_CHUNK):
    """Pure-Python twin of :func:`run_trace`; returns (costs, final state)."""
    policy = Policy(policy) if not isinstance(policy, str) else Policy.parse(policy)
    state = ListState(dist.support)
    costs = np.empty(horizon, dtype=np.int64)
    done = 0
    while done < horizon:
        n = min(chunk, horizon - done)
        for k, j in enumerate(dist.sample(rng, n)):
            costs[done + k] = state.position(int(j))
            apply_request(state, int(j), policy)
        done += n
    return costs, state
