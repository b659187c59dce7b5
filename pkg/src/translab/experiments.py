"""Tail estimates, optimality ratios and the conditioning upper bound.

Everything here works on a :class:`RunConfig`; the CLI builds one from
flags or a key=value file and hands results to :func:`emit_outputs`.
"""

from __future__ import annotations

import csv
import json
import math
import os
import subprocess
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from . import exact_stationary
from .distributions import format_distribution, parse_distribution
from .errors import InvalidParameter
from .exclusion import kappa_tail
from .list_dynamics import CostRecorder, ListState, Policy, run_trace, static_cost_tail

EXACT = "exact"
MONTE_CARLO = "monte_carlo"
MIN_HITS = 30
DEFAULT_EPS = 0.25


@dataclass
class RunConfig:
    experiment: str = "ratio"
    distribution: str = "kind=geometric nu=0.5 truncate_at=40"
    policy: str = "transposition"
    horizon: int = 10**6
    burn_in: float = 0.5
    xs: tuple = (0, 1, 2, 3, 4, 5)
    replications: int = 4
    seed: int | None = None
    out: str = "out"
    mode: str = "auto"  # auto | exact | mc
    eps: float = DEFAULT_EPS
    y_rule: str = "eps"  # eps | min | fixed
    y: int = 1
    batches: int = 20

    def __post_init__(self):
        self.xs = tuple(int(v) for v in self.xs)
        if not 0.0 <= self.burn_in < 1.0:
            raise InvalidParameter(f"burn-in fraction must lie in [0, 1), got {self.burn_in}")
        if self.replications < 1:
            raise InvalidParameter("replication count must be at least 1")
        if not self.xs:
            raise InvalidParameter("x-grid is empty")
        if any(b <= a for a, b in zip(self.xs, self.xs[1:])):
            raise InvalidParameter(f"x-grid must be strictly increasing: {self.xs}")
        if self.xs[0] < 0:
            raise InvalidParameter("x-grid must be non-negative")
        if self.mode not in ("auto", "exact", "mc"):
            raise InvalidParameter(f"mode must be auto, exact or mc, got {self.mode!r}")
        if self.y_rule not in ("eps", "min", "fixed"):
            raise InvalidParameter(f"y rule must be eps, min or fixed, got {self.y_rule!r}")
        if self.horizon < 1:
            raise InvalidParameter("horizon must be at least 1")
        Policy.parse(self.policy)

    @property
    def dist(self):
        return parse_distribution(self.distribution)

    def manifest(self):
        d = asdict(self)
        d["xs"] = list(self.xs)
        if self.distribution is not None:
            d["distribution"] = format_distribution(self.dist)
        return d

    @property
    def title(self):
        return format_distribution(self.dist) if self.distribution is not None else self.experiment


@dataclass
class TailEstimate:
    x: int
    value: float
    method: str
    half_width: float = 0.0
    sample_count: int = 0
    hits: int = 0
    unreliable: bool = False
    stationary: bool | None = None

    def __post_init__(self):
        if not -1e-12 <= self.value <= 1 + 1e-12:
            raise InvalidParameter(f"tail value {self.value} outside [0, 1]")
        if self.half_width < 0:
            raise InvalidParameter("half-width must be non-negative")


# --- Pr[C > x] ------------------------------------------------------------------


def _exact_tail(dist, policy, xs):
    n = dist.support
    pi = dist.pmf_vector(n)
    if policy == Policy.STATIC:
        return [TailEstimate(x, static_cost_tail(ListState(n), dist, x), EXACT) for x in xs]
    if policy != Policy.TRANSPOSITION:
        raise InvalidParameter("exact mode covers the transposition and static policies")
    law = exact_stationary.product_form_law(pi)
    return [TailEstimate(x, min(1.0, exact_stationary.stationary_cost_tail(pi, min(x, n), law)), EXACT)
            for x in xs]


def _half_width(samples, level=0.95):
    """t-interval half-width for the mean of ``samples`` (rows = replicates)."""
    k = samples.shape[0]
    if k < 2:
        return np.zeros(samples.shape[1:])
    q = stats.t.ppf(0.5 + level / 2, k - 1)
    return q * samples.std(axis=0, ddof=1) / math.sqrt(k)


def _rb_spacing(n, retained):
    # about 2e5 snapshots per run, each costing O(n)
    return max(1, retained // 200_000, n // 16)


def estimate_cost_tail(config, *, engine=run_trace):
    """Pr[C > x] on ``config.xs`` with provenance.

    Exact (product form) for a support of at most 8 items unless mode is
    "mc".  Otherwise every replication is a long trace whose retained window
    is cut into batches; with a finite support the per-replication value is
    the time-average of Pr[C > x | arrangement], else the raw hit frequency.
    Half-widths come from the spread across replications, or from the batch
    means when only one replication is run.
    """
    dist = config.dist
    policy = Policy.parse(config.policy)
    xs = np.asarray(config.xs)
    n = dist.support
    want_exact = config.mode == "exact" or (
        config.mode == "auto" and n is not None and n <= exact_stationary.PRODUCT_FORM_CAP)
    if want_exact:
        if n is None or n > exact_stationary.PRODUCT_FORM_CAP:
            raise InvalidParameter(
                f"exact mode needs a support of at most {exact_stationary.PRODUCT_FORM_CAP} items")
        return _exact_tail(dist, policy, xs)
    if config.seed is None:
        raise InvalidParameter("Monte Carlo estimates need a seed")
    hcap = int(xs.max()) + 2
    retained = config.horizon - int(config.burn_in * config.horizon)
    rb_every = _rb_spacing(n, retained) if n is not None else 0
    children = np.random.SeedSequence(int(config.seed)).spawn(config.replications)
    per_rep, batch_vals, hits, samples = [], [], 0, 0
    for child in children:
        rec = CostRecorder(hcap=hcap, batches=config.batches, rb_every=rb_every)
        engine(dist, policy, config.horizon, np.random.default_rng(child), rec, burn_in=config.burn_in)
        what = "rb" if rb_every else "cost"
        bm = rec.batch_means(what, xs)
        batch_vals.append(bm)
        per_rep.append(rec.rb_tail(xs) if rb_every else rec.tail(xs))
        hits = hits + rec.tail_counts(xs)
        samples += rec.samples
    per_rep = np.asarray(per_rep)
    value = per_rep.mean(axis=0)
    if config.replications > 1:
        hw = _half_width(per_rep)
    else:
        hw = _half_width(batch_vals[0])
    halves = [np.concatenate([b[: len(b) // 2] for b in batch_vals]),
              np.concatenate([b[len(b) // 2:] for b in batch_vals])]
    drift = np.abs(halves[0].mean(axis=0) - halves[1].mean(axis=0))
    hw_half = np.maximum(_half_width(halves[0]), _half_width(halves[1]))
    out = []
    for k, x in enumerate(xs):
        out.append(TailEstimate(
            int(x), float(np.clip(value[k], 0.0, 1.0)), MONTE_CARLO, float(hw[k]), int(samples),
            int(hits[k]), bool(hits[k] < MIN_HITS), bool(drift[k] <= 2 * hw_half[k] or drift[k] == 0)))
    return out


# --- ratio ----------------------------------------------------------------------


@dataclass
class RatioRow:
    x: int
    pr_c: float
    half_width: float
    pr_r: float
    ratio: float
    ratio_lo: float
    ratio_hi: float
    lemma1_ok: bool
    status: str
    method: str
    unreliable: bool


def _log_ratio(c, r):
    if not 0 < c < 1:
        return math.nan
    return math.log(c) / math.log(r)


def optimality_ratio(config, estimates=None):
    """log Pr[C > x] / log Pr[R > x] per x.

    ``lemma1_ok`` checks Pr[C > x] >= Pr[R > x] (within the half-width), i.e.
    ratio <= 1 since both logarithms are negative.  Rows where the log is
    undefined are kept with a reason in ``status``.
    """
    dist = config.dist
    ests = estimates if estimates is not None else estimate_cost_tail(config)
    rows = []
    for e in ests:
        pr_r = float(dist.tail(e.x))
        lemma1 = e.value + e.half_width >= pr_r * (1 - 1e-12)
        if pr_r >= 1.0:
            status = "excluded: Pr[R>x] = 1"
        elif pr_r <= 0.0:
            status = "excluded: Pr[R>x] = 0"
        elif e.value <= 0.0:
            status = "excluded: estimate = 0"
        elif e.value >= 1.0:
            status = "excluded: estimate = 1"
        else:
            status = "ok"
        if status == "ok":
            ratio = _log_ratio(e.value, pr_r)
            lo = _log_ratio(min(e.value + e.half_width, 1.0 - 1e-300), pr_r)
            hi = _log_ratio(max(e.value - e.half_width, 1e-300), pr_r)
        else:
            ratio = lo = hi = math.nan
        rows.append(RatioRow(e.x, e.value, e.half_width, pr_r, ratio, lo, hi, bool(lemma1),
                             status, e.method, e.unreliable))
    return rows


def spearman_trend(rows):
    """Spearman rank correlation of the ratio against x over usable rows."""
    pts = [(r.x, r.ratio) for r in rows if r.status == "ok"]
    if len(pts) < 3:
        return math.nan
    xs, vals = zip(*pts)
    return float(stats.spearmanr(xs, vals).statistic)


# --- conditioning bound ---------------------------------------------------------


def _beta(dist, j):
    b = float(dist.ratio(j))
    if b >= 1.0:
        raise InvalidParameter(
            f"pi_{j + 1} / pi_{j} = {b}: the bound needs strictly decreasing probabilities")
    return b


def lemma4_terms(dist, x, y):
    """(first, second) terms of the bound for Pr[C > x] at split point ``y``.

    first  = Pr[kappa_y(beta_y) > x - y]
    second = sum_{y < r <= x} pi_r Pr[kappa_r(beta_r) > x - r] + Pr[R > x]

    Requests for r > x always cost more than x, so they enter with weight
    pi_r; the sum is finite and needs no truncation.
    """
    x, y = int(x), int(y)
    if not 1 <= y <= x:
        raise InvalidParameter(f"need 1 <= y <= x, got y={y}, x={x}")
    n = dist.support
    first = kappa_tail(y, _beta(dist, y), x - y + 1)
    second = float(dist.tail(x))
    top = x if n is None else min(x, n)
    for r in range(y + 1, top + 1):
        second += float(dist.pmf(r)) * kappa_tail(r, _beta(dist, r), x - r + 1)
    return first, second


def lemma4_bound(dist, x, y):
    first, second = lemma4_terms(dist, x, y)
    return min(1.0, first + second)


def y_from_eps(x, eps):
    """ceil(eps x / log x), clipped to 1..x (x <= e uses log e = 1)."""
    x = int(x)
    if eps <= 0:
        raise InvalidParameter("eps must be positive")
    y = math.ceil(eps * x / math.log(max(x, math.e)))
    return max(1, min(x, y))


def choose_y(dist, x, rule="eps", eps=DEFAULT_EPS, y=1):
    if rule == "eps":
        return y_from_eps(x, eps)
    if rule == "fixed":
        return max(1, min(int(x), int(y)))
    if rule == "min":
        top = int(x) if dist.support is None else min(int(x), dist.support)
        best = min(range(1, top + 1), key=lambda v: (lemma4_bound(dist, x, v), v))
        return best
    raise InvalidParameter(f"unknown y rule {rule!r}")


def bound_table(config):
    """Rows (x, y, first, second, bound, pr_r) for x >= 1 on the grid."""
    dist = config.dist
    rows = []
    for x in config.xs:
        if x < 1:
            continue
        y = choose_y(dist, x, config.y_rule, config.eps, config.y)
        first, second = lemma4_terms(dist, x, y)
        rows.append({"x": x, "y": y, "first_term": first, "second_term": second,
                     "bound": min(1.0, first + second), "pr_r": float(dist.tail(x))})
    return rows


# --- output ---------------------------------------------------------------------


def fmt(v):
    """Cell formatting: ints as-is, floats with 17 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, rows, columns=None):
    rows = [r if isinstance(r, dict) else asdict(r) for r in rows]
    if not rows:
        raise InvalidParameter("nothing to write")
    columns = columns or list(rows[0])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r[c]) for c in columns])
    return path


def read_csv(path):
    """Inverse of :func:`write_csv`: numbers come back as int or float."""
    def parse(s):
        for conv in (int, float):
            try:
                return conv(s)
            except ValueError:
                pass
        return s

    with open(path, encoding="utf-8", newline="") as fh:
        return [{k: parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def git_describe(path=None):
    path = path or os.path.dirname(os.path.abspath(__file__))
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=path,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() or "unknown"


PLOT_SCRIPT = '''"""Render {name}.csv as log-tail curves.  Usage: python3 {name}_plot.py"""
import csv
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = os.path.dirname(os.path.abspath(__file__))
with open(os.path.join(here, "{name}.csv"), newline="") as fh:
    rows = list(csv.DictReader(fh))
curves = {curves!r}
fig, ax = plt.subplots(figsize=(6, 4))
for col, label in curves:
    pts = [(float(r["x"]), float(r[col])) for r in rows if r.get(col) not in (None, "", "nan")]
    pts = [(x, v) for x, v in pts if v > 0 and math.isfinite(v)]
    if pts:
        ax.semilogy(*zip(*pts), marker=".", label=label)
ax.set_xlabel("x")
ax.set_ylabel("tail probability")
ax.set_title({title!r})
ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(here, "{name}_plot.png"), metadata={{"Software": None}})
'''

CURVE_LABELS = {
    "pr_c": "Pr[C>x]",
    "value": "Pr[C>x]",
    "pr_r": "Pr[R>x]",
    "lemma4_bound": "conditioning bound",
    "bound": "conditioning bound",
    "prop1_bound": "max-position bound",
    "empirical": "empirical",
    "exact": "exact",
}


def emit_outputs(results, config, *, name=None, columns=None, render=True, extra=None):
    """Write ``name``.csv, a plot script, optionally its PNG, and manifest.json.

    The output directory is created and probed before anything is written,
    so an unwritable location fails fast with OSError.
    """
    if not results:
        raise InvalidParameter("no results to emit")
    name = name or config.experiment
    out = config.out
    os.makedirs(out, exist_ok=True)
    probe = os.path.join(out, ".write_probe")
    with open(probe, "w"):
        pass
    os.remove(probe)
    rows = [r if isinstance(r, dict) else asdict(r) for r in results]
    csv_path = write_csv(os.path.join(out, f"{name}.csv"), rows, columns)
    cols = columns or list(rows[0])
    curves = [(c, CURVE_LABELS[c]) for c in cols if c in CURVE_LABELS]
    script = os.path.join(out, f"{name}_plot.py")
    with open(script, "w", encoding="utf-8") as fh:
        fh.write(PLOT_SCRIPT.format(name=name, curves=curves, title=config.title))
    manifest = {"config": config.manifest(), "seed": config.seed, "git": git_describe(),
                "outputs": [os.path.basename(csv_path), os.path.basename(script)]}
    if extra:
        manifest["extra"] = extra
    if render and curves:
        from .plotting import plot_tails

        png = plot_tails(rows, curves, os.path.join(out, f"{name}_plot.png"),
                         title=config.title)
        manifest["outputs"].append(os.path.basename(png))
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True, default=fmt)
        fh.write("\n")
    return manifest


@dataclass
class RatioReport:
    rows: list
    bounds: list = field(default_factory=list)

    def table(self):
        out = []
        for r, b in zip(self.rows, self.bounds):
            d = asdict(r)
            d.update({"y": b["y"] if b else 0, "lemma4_bound": b["bound"] if b else math.nan})
            out.append(d)
        return out


def ratio_report(config, estimates=None):
    """Ratios plus the conditioning bound at the chosen y for every grid x."""
    rows = optimality_ratio(config, estimates)
    dist = config.dist
    bounds = []
    for r in rows:
        if r.x < 1:
            bounds.append(None)
            continue
        y = choose_y(dist, r.x, config.y_rule, config.eps, config.y)
        bounds.append({"y": y, "bound": lemma4_bound(dist, r.x, y)})
    return RatioReport(rows, bounds)
