"""Coupling of the transposition list with a constrained exclusion process.

Two lists evolve together from the same order: the original list L, driven
by the request streams Lambda_j (rate pi_j), and a modified list Lhat whose
streams are

    Lhat_j = Lambda_j thinned with probability pi_i / pi_j      (j <= i)
    Lhat_j = Lambda_j  union  Lambda_j^+ (rate pi_{i+1} - pi_j)  (j > i)

A request from Lhat_j is served to Lhat only while phi_j holds (item j is
preceded by an item of the other sublist), and after every change the
reordering R_i makes the relative order inside {1..i} and inside {i+1, ...}
of Lhat agree with L.  The positions of items 1..i in Lhat then move like
the particles of the exclusion process with beta = pi_{i+1} / pi_i, and
X_j(t) <= Xhat_j(t) for all j <= i.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .distributions import Geometric, PowerLaw, is_monotone
from .errors import DominationError, InvalidParameter
from .exclusion import kappa_tail
from .list_dynamics import ListState, _KernelList

ORIGINAL = 0
MODIFIED = 1
BOTH = 2
TARGET_NAMES = {ORIGINAL: "original", MODIFIED: "modified", BOTH: "both"}

LOG_HEADER = ("time", "item", "applied_to_original", "applied_to_modified", "phi", "max_X", "Z_i")


def thin(times, p, rng):
    """Keep each time independently with probability ``p``."""
    if not 0.0 <= p <= 1.0:
        raise InvalidParameter(f"thinning probability must lie in [0, 1], got {p}")
    times = np.asarray(times)
    return times[rng.random(times.shape[0]) < p]


def _check_monotone(dist, upto):
    if not is_monotone(dist, upto):
        raise InvalidParameter("coupling needs a non-increasing pmf")


@dataclass
class EventStream:
    """Time-ordered events; ``targets`` says which list's stream each belongs to.

    ORIGINAL: in Lambda_j only (thinned out of Lhat_j, j <= i)
    BOTH:     in Lambda_j and Lhat_j
    MODIFIED: in Lambda_j^+ only (j > i)
    """

    times: np.ndarray
    items: np.ndarray
    targets: np.ndarray
    threshold: int
    horizon: float
    max_item: int

    def __len__(self):
        return len(self.times)

    def original(self, j):
        """Lambda_j as an array of times."""
        sel = (self.items == j) & (self.targets != MODIFIED)
        return self.times[sel]

    def modified(self, j):
        """Lhat_j as an array of times."""
        sel = (self.items == j) & (self.targets != ORIGINAL)
        return self.times[sel]


def build_event_streams(dist, i, horizon, rng, max_item=None):
    """Materialise Lambda_j and Lhat_j on [0, horizon] for items 1..max_item.

    ``max_item`` defaults to the support size, or for an infinite support to
    the largest item requested in the window.  Augmentation streams beyond
    ``max_item`` are not generated; :func:`run_coupled_streams` refuses a
    stream whose items past ``max_item`` would ever be served to Lhat.
    Simultaneous times are ordered by item index.
    """
    i = int(i)
    if i < 1:
        raise InvalidParameter("threshold i must be at least 1")
    if dist.support is not None and i > dist.support:
        raise InvalidParameter(f"threshold {i} exceeds the support size {dist.support}")
    if horizon <= 0:
        raise InvalidParameter("horizon must be positive")
    _check_monotone(dist, max(max_item or 10_000, i + 1))
    n_orig = rng.poisson(horizon)
    t_orig = rng.uniform(0.0, horizon, n_orig)
    j_orig = dist.sample(rng, n_orig) if n_orig else np.zeros(0, dtype=np.int64)
    if max_item is None:
        max_item = dist.support if dist.support is not None else int(max(j_orig.max(initial=0), i + 1))
    _check_monotone(dist, max(max_item, i + 1))
    pi_i = dist.pmf(i)
    pi_next = dist.pmf(i + 1)
    keep = np.ones(n_orig, dtype=bool)
    low = j_orig <= i
    if low.any():
        keep[low] = rng.random(int(low.sum())) < pi_i / dist.pmf(j_orig[low])
    tgt_orig = np.where(keep, BOTH, ORIGINAL)

    t_aug, j_aug = [], []
    for j in range(i + 1, max_item + 1):
        rate = pi_next - dist.pmf(j)
        if rate <= 0:
            continue
        m = rng.poisson(rate * horizon)
        if m:
            t_aug.append(rng.uniform(0.0, horizon, m))
            j_aug.append(np.full(m, j, dtype=np.int64))
    t_aug = np.concatenate(t_aug) if t_aug else np.zeros(0)
    j_aug = np.concatenate(j_aug) if j_aug else np.zeros(0, dtype=np.int64)

    times = np.concatenate([t_orig, t_aug])
    items = np.concatenate([j_orig.astype(np.int64), j_aug])
    targets = np.concatenate([tgt_orig, np.full(len(t_aug), MODIFIED)])
    order = np.lexsort((items, times))
    return EventStream(times[order], items[order], targets[order].astype(np.int8), i,
                       float(horizon), int(max_item))


def phi(modified, j, i):
    """True iff item ``j`` is preceded in ``modified`` by an item of the other sublist."""
    if j < 1:
        raise InvalidParameter(f"items are numbered from 1, got {j}")
    p = modified.position(j)
    if p == 1:
        return False
    pred = modified.item_at(p - 1)
    return (pred > i) if j <= i else (pred <= i)


def reorder(modified, reference, i):
    """R_i: sort each sublist of ``modified`` into ``reference``'s relative order.

    Items of {1..i} keep the set of positions they occupy in ``modified``, and
    likewise for {i+1, ...}.  Positions untouched in both lists hold the
    same item in both and are left alone.
    """
    out = modified.copy()
    _reorder_into(out, reference, i)
    return out


def _reorder_into(modified, reference, i):
    positions = sorted(set(modified._order) | set(reference._order))
    if not positions:
        return 0
    items = [modified.item_at(p) for p in positions]
    changed = 0
    for low in (True, False):
        slots = [p for p, j in zip(positions, items) if (j <= i) == low]
        group = [j for j in items if (j <= i) == low]
        group.sort(key=reference.position)
        for p, j in zip(slots, group):
            if modified.item_at(p) != j:
                modified._place(j, p)
                changed += 1
    return changed


@dataclass
class CoupledTrajectory:
    threshold: int
    horizon: int
    original: ListState
    modified: ListState
    clock: float
    stats: dict
    max_x_hist: np.ndarray
    z_hist: np.ndarray
    log: list = field(default_factory=list)

    @property
    def violations(self):
        return self.stats.get("violations", 0)

    def expected_z_moves(self, dist):
        """Expected counts of left / right Z moves given the phi exposure."""
        rate = self.stats["uniform_rate"]
        return (self.stats["left_exposure"] * dist.pmf(self.threshold) / rate,
                self.stats["right_exposure"] * dist.pmf(self.threshold + 1) / rate)

    def log_csv(self):
        buf = io.StringIO()
        write_log_csv(buf, self.log)
        return buf.getvalue()


def write_log_csv(fh, rows):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(LOG_HEADER)
    for r in rows:
        w.writerow([format(float(r[0]), ".17g")] + [int(v) for v in r[1:]])


class CoupledState:
    """Pure-Python coupled pair (L, Lhat) with threshold ``i``."""

    def __init__(self, i, size=None, start=None):
        self.i = int(i)
        self.original = start.copy() if start is not None else ListState(size)
        self.modified = self.original.copy()
        self.clock = 0.0

    def phi_count(self):
        i = self.i
        n_left = n_right = 0
        for k in range(1, i + 1):
            q = self.modified.position(k)
            if q > 1 and self.modified.item_at(q - 1) > i:
                n_left += 1
            size = self.modified.size
            if (size is None or q < size) and self.modified.item_at(q + 1) > i:
                n_right += 1
        return n_left, n_right

    def z(self):
        return sorted(self.modified.position(k) for k in range(1, self.i + 1))

    def step(self, item, to_original, in_modified_stream):
        """Apply one event.  phi is read from the pre-event Lhat.

        Returns (applied_to_modified, phi_value).
        """
        i = self.i
        ph = phi(self.modified, item, i)
        to_modified = bool(in_modified_stream and ph)
        if to_original:
            p = self.original.position(item)
            if p > 1:
                self.original.swap_positions(p - 1, p)
        if to_modified:
            p = self.modified.position(item)
            self.modified.swap_positions(p - 1, p)
        if to_original or to_modified:
            _reorder_into(self.modified, self.original, i)
        return to_modified, ph

    def dominated(self):
        return all(self.original.position(k) <= self.modified.position(k) for k in range(1, self.i + 1))

    def max_x(self):
        return max(self.original.position(k) for k in range(1, self.i + 1))


def _z_move_ok(before, after):
    """Z changes by at most one particle stepping into a free neighbouring slot."""
    gone = set(before) - set(after)
    new = set(after) - set(before)
    if not gone and not new:
        return True
    if len(gone) != 1 or len(new) != 1:
        return False
    return abs(gone.pop() - new.pop()) == 1


def run_coupled_streams(stream, dist, *, log=True):
    """Drive a :class:`CoupledState` with an explicit :class:`EventStream`."""
    i = stream.threshold
    st = CoupledState(i, dist.support)
    rows = []
    stats = {"events": 0, "to_original": 0, "to_modified": 0, "bad_z_moves": 0, "max_phi": 0}
    hcap = 256
    mx_hist = np.zeros(hcap + 1, dtype=np.int64)
    z_hist = np.zeros(hcap + 1, dtype=np.int64)
    for n, (t, j, tgt) in enumerate(zip(stream.times, stream.items, stream.targets)):
        j = int(j)
        nl, nr = st.phi_count()
        stats["max_phi"] = max(stats["max_phi"], nl + nr)
        if j > stream.max_item and phi(st.modified, j, i) and dist.pmf(i + 1) > dist.pmf(j):
            raise InvalidParameter(
                f"item {j} became phi-active but its augmentation stream was not generated; "
                "raise max_item")
        z0 = st.z()
        to_mod, ph = st.step(j, tgt != MODIFIED, tgt != ORIGINAL)
        st.clock = float(t)
        stats["events"] += 1
        stats["to_original"] += int(tgt != MODIFIED)
        stats["to_modified"] += int(to_mod)
        if not _z_move_ok(z0, st.z()):
            stats["bad_z_moves"] += 1
        mx = st.max_x()
        zi = st.z()[-1]
        mx_hist[min(mx, hcap)] += 1
        z_hist[min(zi, hcap)] += 1
        if log:
            rows.append((float(t), j, int(tgt != MODIFIED), int(to_mod), int(ph), mx, zi))
        if not st.dominated():
            raise DominationError(f"domination violated at event {n} (t={t}, item={j})", n, rows)
    return CoupledTrajectory(i, stats["events"], st.original, st.modified, st.clock, stats,
                             mx_hist, z_hist, rows)


# --- lazily generated coupling (uniformised) ----------------------------------------


def uniform_rate(dist, i):
    """Total rate of the uniformised event stream: requests plus augmentation candidates."""
    return 1.0 + i * float(dist.pmf(i + 1))


def draw_events(dist, i, m, rng):
    """One chunk of uniformised events: (is_ghost, draw, mark, dt).

    A ghost row attaches to the Lhat-successor of sublist item ``draw`` and
    is accepted with probability (pi_{i+1} - pi_succ) / pi_{i+1}; with i
    slots at rate pi_{i+1} each, every phi-active j > i receives augmentation
    events at exactly rate pi_{i+1} - pi_j.
    """
    lam = uniform_rate(dist, i)
    is_ghost = (rng.random(m) < (lam - 1.0) / lam).astype(np.int8)
    items = dist.sample(rng, m)
    slots = rng.integers(1, i + 1, m)
    draw = np.where(is_ghost == 1, slots, items).astype(np.int64)
    mark = rng.random(m)
    dt = rng.exponential(1.0 / lam, m)
    return is_ghost, draw, mark, dt


def _far_params(dist):
    if isinstance(dist, PowerLaw):
        return 1, dist.c, dist.alpha
    if isinstance(dist, Geometric):
        return 2, 1.0 - dist.nu, dist.nu
    return 0, 0.0, 0.0


_STAT_NAMES = {
    _kernels.ST_EVENTS: "uniform_events",
    _kernels.ST_REAL: "events",
    _kernels.ST_TO_L: "to_original",
    _kernels.ST_TO_H: "to_modified",
    _kernels.ST_AUGMENT: "augment_accepted",
    _kernels.ST_REORDER: "reorder_swaps",
    _kernels.ST_MAX_PHI: "max_phi",
    _kernels.ST_Z_LEFT: "z_left_moves",
    _kernels.ST_Z_RIGHT: "z_right_moves",
    _kernels.ST_LEFT_EXPOSURE: "left_exposure",
    _kernels.ST_RIGHT_EXPOSURE: "right_exposure",
}


def _chunks(dist, i, horizon, rng, chunk):
    """Yield event chunks until exactly ``horizon`` original requests are drawn."""
    left = horizon
    while left > 0:
        m = max(chunk, 16)
        is_ghost, draw, mark, dt = draw_events(dist, i, m, rng)
        n_orig = np.cumsum(is_ghost == 0)
        if n_orig[-1] >= left:
            cut = int(np.searchsorted(n_orig, left)) + 1
            is_ghost, draw, mark, dt = is_ghost[:cut], draw[:cut], mark[:cut], dt[:cut]
        left -= int(np.sum(is_ghost == 0))
        yield is_ghost, draw, mark, dt


def run_coupled(dist, i, horizon, rng, *, log=0, engine="kernel", chunk=1 << 18, hcap=256):
    """Evolve (L, Lhat) from the identity until ``horizon`` requests reach L.

    Augmentation streams are generated on demand by uniformisation (see
    :func:`draw_events`).  ``log`` keeps the first ``log`` event rows.
    Domination is checked after every event; a violation raises
    :class:`DominationError`.
    """
    i = int(i)
    if i < 1:
        raise InvalidParameter("threshold i must be at least 1")
    horizon = int(horizon)
    if horizon < 1:
        raise InvalidParameter("horizon must be at least 1")
    if dist.support is not None and i > dist.support:
        raise InvalidParameter(f"threshold {i} exceeds the support size {dist.support}")
    _check_monotone(dist, 10_000)
    if engine == "python":
        return _run_coupled_python(dist, i, horizon, rng, log, chunk, hcap)
    if engine != "kernel":
        raise InvalidParameter(f"unknown engine {engine!r}")

    L = _KernelList(dist.support)
    H = _KernelList(dist.support)
    dense = len(L.item_at)
    pi_dense = np.concatenate([[0.0], dist.pmf_vector(dense - 1)])
    far_kind, far_a, far_b = _far_params(dist)
    support = dist.support or 0
    clock = np.zeros(1)
    stats = np.zeros(_kernels.N_STATS, dtype=np.int64)
    log_rows = np.zeros((int(log), 6), dtype=np.int64)
    log_time = np.zeros(int(log))
    mx_hist = np.zeros(hcap + 1, dtype=np.int64)
    z_hist = np.zeros(hcap + 1, dtype=np.int64)
    for is_ghost, draw, mark, dt in _chunks(dist, i, horizon, rng, chunk):
        bad = _kernels.coupled_run(
            is_ghost, draw, mark, dt, i, pi_dense, far_kind, far_a, far_b, support,
            L.item_at, L.pos_of, L.far_item, L.far_pos,
            H.item_at, H.pos_of, H.far_item, H.far_pos,
            clock, stats, log_rows, log_time, 0, mx_hist, z_hist,
        )
        if bad >= 0:
            n_logged = min(int(stats[_kernels.ST_REAL]), int(log))
            rows = _rows(log_time, log_rows, n_logged)
            raise DominationError(
                f"domination violated at event {int(stats[_kernels.ST_REAL]) - 1} "
                f"(threshold {i}, {dist.describe()})",
                int(stats[_kernels.ST_REAL]) - 1, rows)
    st = {name: int(stats[k]) for k, name in _STAT_NAMES.items()}
    st["violations"] = 0
    st["uniform_rate"] = uniform_rate(dist, i)
    n_logged = min(st["events"], int(log))
    return CoupledTrajectory(i, horizon, L.to_state(horizon), H.to_state(horizon), float(clock[0]),
                             st, mx_hist, z_hist, _rows(log_time, log_rows, n_logged))


def _rows(log_time, log_rows, n):
    return [(float(log_time[r]),) + tuple(int(v) for v in log_rows[r]) for r in range(n)]


def _run_coupled_python(dist, i, horizon, rng, log, chunk, hcap):
    """Reference engine: same random inputs as the kernel, general R_i."""
    st = CoupledState(i, dist.support)
    pi_i = float(dist.pmf(i))
    pi_next = float(dist.pmf(i + 1))
    size = dist.support
    names = list(_STAT_NAMES.values())
    stats = dict.fromkeys(names, 0)
    stats["bad_z_moves"] = 0
    mx_hist = np.zeros(hcap + 1, dtype=np.int64)
    z_hist = np.zeros(hcap + 1, dtype=np.int64)
    rows = []
    for is_ghost, draw, mark, dt in _chunks(dist, i, horizon, rng, chunk):
        for g, d, u, h in zip(is_ghost, draw, mark, dt):
            st.clock += float(h)
            stats["uniform_events"] += 1
            nl, nr = st.phi_count()
            stats["max_phi"] = max(stats["max_phi"], nl + nr)
            stats["left_exposure"] += nl
            stats["right_exposure"] += nr
            d = int(d)
            if g == 0:
                j, to_L = d, True
                in_hat = u * float(dist.pmf(j)) < pi_i if j <= i else True
            else:
                to_L, in_hat, j = False, False, 0
                q = st.modified.position(d)
                if size is None or q < size:
                    succ = st.modified.item_at(q + 1)
                    if succ > i and u * pi_next < pi_next - float(dist.pmf(succ)):
                        j, in_hat = succ, True
                        stats["augment_accepted"] += 1
            if j:
                z0 = st.z()
                to_H, ph = st.step(j, to_L, in_hat)
                if not _z_move_ok(z0, st.z()):
                    stats["bad_z_moves"] += 1
                if to_H:
                    stats["z_left_moves" if j <= i else "z_right_moves"] += 1
            else:
                to_H, ph = False, False
            stats["to_original"] += int(to_L)
            stats["to_modified"] += int(to_H)
            mx = st.max_x()
            zi = max(st.modified.position(k) for k in range(1, i + 1))
            mx_hist[min(mx, hcap)] += 1
            z_hist[min(zi, hcap)] += 1
            if to_L or to_H:
                if len(rows) < log:
                    rows.append((st.clock, j, int(to_L), int(to_H), int(ph), mx, zi))
                stats["events"] += 1
            if not st.dominated():
                raise DominationError(f"domination violated at event {stats['events'] - 1}",
                                      stats["events"] - 1, rows)
    stats["violations"] = 0
    stats["uniform_rate"] = uniform_rate(dist, i)
    return CoupledTrajectory(i, horizon, st.original, st.modified, st.clock, stats,
                             mx_hist, z_hist, rows)


def proposition1_bound(dist, i, x):
    """Pr[kappa_i(beta) + i > x] with beta = pi_{i+1} / pi_i."""
    i, x = int(i), int(x)
    if not x >= i >= 1:
        raise InvalidParameter(f"need x >= i >= 1, got i={i}, x={x}")
    beta = float(dist.ratio(i))
    if beta >= 1.0:
        raise InvalidParameter(
            f"pi_{i + 1} / pi_{i} = {beta} >= 1: the bound needs pi_{i + 1} < pi_{i}; "
            "choose a threshold where the pmf strictly decreases")
    return kappa_tail(i, beta, x - i + 1)
