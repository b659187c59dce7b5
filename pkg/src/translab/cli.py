"""Command line entry point: ``translab <subcommand> [flags]``.

Subcommands: simulate, exact, caep, couple, ratio, bound.  ``--config FILE``
reads ``key = value`` lines (``#`` comments) whose values override the
flags given on the command line.  Exit codes: 0 success, 2 invalid
configuration, 3 assertion or invariant failure, 4 I/O error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import coupling, exact_stationary, exclusion, experiments
from .distributions import format_distribution, from_fields, parse_distribution
from .errors import CapacityError, DominationError, InvalidParameter, StationarySolveError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INVARIANT = 3
EXIT_IO = 4


def parse_grid(text):
    """``1..20``, ``2:101:7`` (start:stop:step, stop exclusive) or ``1,2,5``."""
    text = str(text).strip()
    try:
        if ".." in text:
            lo, hi = text.split("..")
            return tuple(range(int(lo), int(hi) + 1))
        if ":" in text:
            parts = [int(v) for v in text.split(":")]
            return tuple(range(*parts))
        return tuple(int(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise InvalidParameter(f"cannot parse x-grid {text!r}") from None


def read_config(path):
    """Parse a key = value file into a dict of strings."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise InvalidParameter(f"{path}:{n}: expected key = value")
            key, val = line.split("=", 1)
            out[key.strip().replace("-", "_")] = val.strip().strip('"').strip("'")
    return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise InvalidParameter(message)


def _dist_flags(p):
    g = p.add_argument_group("distribution")
    g.add_argument("--dist", help='e.g. "kind=power_law alpha=2 truncate_at=200"')
    g.add_argument("--kind", choices=["power_law", "geometric", "explicit"])
    g.add_argument("--alpha", type=float)
    g.add_argument("--nu", type=float)
    g.add_argument("--pmf", help="comma-separated explicit pmf")
    g.add_argument("--truncate-at", type=int, dest="truncate_at")


def _seed_flag(p):
    p.add_argument("--seed", type=int, required=True, help="required: RNG seed")


def _common(p, grid=True):
    p.add_argument("--config", help="key = value file; its values override flags")
    p.add_argument("--out", default="out", help="output directory")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG, keep the plot script")
    if grid:
        p.add_argument("--xs", type=parse_grid, default=None, help="x-grid: 1..20, 0:41:2 or 1,2,5")


def build_parser():
    parser = _Parser(prog="translab", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="Monte Carlo Pr[C > x] from long list traces")
    _dist_flags(p)
    _common(p)
    _seed_flag(p)
    p.add_argument("--policy", default="transposition", help="transposition, mtf or static")
    p.add_argument("--horizon", type=int, default=10**6)
    p.add_argument("--burn-in", type=float, default=0.5, dest="burn_in")
    p.add_argument("--replications", type=int, default=4)
    p.add_argument("--batches", type=int, default=20)

    p = sub.add_parser("exact", help="stationary Pr[C > x] from the product form (N <= 8)")
    _dist_flags(p)
    _common(p)
    p.add_argument("--policy", default="transposition")
    p.add_argument("--check", action="store_true", help="also solve the chain directly (N <= 6)")

    p = sub.add_parser("caep", help="simulate the exclusion process and compare with the exact law")
    _common(p, grid=False)
    _seed_flag(p)
    p.add_argument("--n", type=int, default=3, help="number of particles")
    p.add_argument("--beta", type=float, default=0.5)
    p.add_argument("--events", type=int, default=10**6)
    p.add_argument("--record-every", type=int, default=1, dest="record_every")
    p.add_argument("--burn-in", type=int, default=10**4, dest="burn_in", help="events (not a fraction)")
    p.add_argument("--kmax", type=int, default=40, help="largest kappa bin in the table")

    p = sub.add_parser("couple", help="run the coupled original/modified lists")
    _dist_flags(p)
    _common(p)
    _seed_flag(p)
    p.add_argument("--threshold", "-i", type=int, default=3, dest="threshold")
    p.add_argument("--horizon", type=int, default=10**5, help="requests served to the original list")
    p.add_argument("--log", type=int, default=10**4, help="event rows kept in the log CSV")
    p.add_argument("--engine", choices=["kernel", "python"], default="kernel")
    p.add_argument("--replications", type=int, default=1)

    p = sub.add_parser("ratio", help="log Pr[C > x] / log Pr[R > x] with bounds and figure")
    _dist_flags(p)
    _common(p)
    _seed_flag(p)
    p.add_argument("--policy", default="transposition")
    p.add_argument("--mode", choices=["auto", "exact", "mc"], default="auto")
    p.add_argument("--horizon", type=int, default=10**6)
    p.add_argument("--burn-in", type=float, default=0.5, dest="burn_in")
    p.add_argument("--replications", type=int, default=4)
    p.add_argument("--batches", type=int, default=20)
    _y_flags(p)

    p = sub.add_parser("bound", help="evaluate the conditioning upper bound on Pr[C > x]")
    _dist_flags(p)
    _common(p)
    _y_flags(p)
    return parser


def _y_flags(p):
    p.add_argument("--y-rule", choices=["eps", "min", "fixed"], default="eps", dest="y_rule")
    p.add_argument("--eps", type=float, default=experiments.DEFAULT_EPS,
                   help="y = ceil(eps x / log x) under --y-rule eps")
    p.add_argument("--y", type=int, default=1, help="split point under --y-rule fixed")


_SWITCHES = {"check", "no_figure"}


def parse_args(argv=None):
    """Parse flags with the config file's values appended, so the file wins."""
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    tokens = []
    if known.config:
        try:
            extra = read_config(known.config)
        except OSError as exc:
            raise InvalidParameter(f"cannot read config {known.config}: {exc}") from None
        for key, val in extra.items():
            if key in ("command", "config"):
                continue
            flag = "--" + key.replace("_", "-")
            if key in _SWITCHES:
                if val.lower() in ("1", "true", "yes"):
                    tokens.append(flag)
                continue
            tokens += [flag, val]
    return parser.parse_args(argv + tokens)


def _distribution(args):
    fields = {}
    if args.dist:
        fields.update(parse_distribution(args.dist).describe())
    for key in ("kind", "alpha", "nu", "truncate_at"):
        val = getattr(args, key, None)
        if val is not None:
            fields[key] = val
    if args.pmf:
        fields["kind"] = "explicit"
        fields["explicit"] = [float(v) for v in args.pmf.split(",")]
    if not fields:
        raise InvalidParameter("no distribution given (use --dist or --kind ...)")
    if "explicit" in fields and not isinstance(fields["explicit"], str):
        fields["explicit"] = "[" + ",".join(repr(float(v)) for v in fields["explicit"]) + "]"
    return format_distribution(from_fields({k: str(v) for k, v in fields.items()}))


def _default_xs(dist, args):
    if args.xs is not None:
        return args.xs
    n = dist.support
    top = min(n - 1, 20) if n is not None else 20
    return tuple(range(0, top + 1))


def _config(args, experiment, **kw):
    dist_text = _distribution(args) if hasattr(args, "dist") else None
    xs = kw.pop("xs", None)
    if xs is None:
        xs = _default_xs(parse_distribution(dist_text), args) if dist_text else (0,)
    fields = dict(experiment=experiment, distribution=dist_text, xs=xs, out=args.out,
                  seed=getattr(args, "seed", None))
    for name in ("policy", "horizon", "burn_in", "replications", "mode", "eps", "y_rule", "y", "batches"):
        if hasattr(args, name) and name not in kw:
            fields[name] = getattr(args, name)
    fields.update(kw)
    return experiments.RunConfig(**fields)


# --- subcommands ------------------------------------------------------------------


def cmd_simulate(args):
    cfg = _config(args, "simulate", mode="mc")
    dist = cfg.dist
    rows = []
    for e in experiments.estimate_cost_tail(cfg):
        d = vars(e).copy()
        d["pr_r"] = float(dist.tail(e.x))
        rows.append(d)
    cols = ["x", "value", "half_width", "pr_r", "method", "sample_count", "hits", "unreliable", "stationary"]
    experiments.emit_outputs(rows, cfg, columns=cols, render=not args.no_figure)
    return rows


def cmd_exact(args):
    cfg = _config(args, "exact", mode="exact", horizon=1)
    dist = cfg.dist
    rows = []
    brute = None
    if args.check:
        if dist.support is None or dist.support > exact_stationary.BRUTE_FORCE_CAP:
            raise CapacityError(f"--check needs N <= {exact_stationary.BRUTE_FORCE_CAP}")
        brute = exact_stationary.brute_force_stationary(dist.pmf_vector(dist.support))
    pi = dist.pmf_vector(dist.support)
    for e in experiments.estimate_cost_tail(cfg):
        pr_r = float(dist.tail(e.x))
        d = {"x": e.x, "pr_c": e.value, "pr_r": pr_r,
             "ratio": experiments._log_ratio(e.value, pr_r) if 0 < pr_r < 1 else math.nan}
        if brute is not None:
            d["pr_c_brute_force"] = exact_stationary.stationary_cost_tail(pi, min(e.x, len(pi)), brute)
        rows.append(d)
    extra = {}
    if brute is not None:
        pf = exact_stationary.product_form_law(pi)
        extra["max_abs_error"] = float(np.max(np.abs(pf.probs - brute.probs)))
        extra["detailed_balance_error"] = exact_stationary.detailed_balance_error(pi)
    experiments.emit_outputs(rows, cfg, render=not args.no_figure, extra=extra or None)
    return rows


def cmd_caep(args):
    rates = exclusion.CaepRates.from_beta(args.beta)
    cfg = experiments.RunConfig(experiment="caep", distribution=None, xs=(0,), out=args.out,
                                seed=args.seed, horizon=args.events)
    rng = np.random.default_rng(args.seed)
    run = exclusion.simulate(exclusion.ExclusionState.packed(args.n), rates, args.events, rng,
                             record_every=args.record_every, burn_in=args.burn_in,
                             kappa_cap=max(256, args.kmax + 1))
    m = run.recorded
    rows = []
    for i in range(args.kmax + 1):
        p = exclusion.kappa_pmf(args.n, args.beta, i)
        count = int(run.kappa_hist[i])
        sigma = math.sqrt(m * p * (1 - p))
        rows.append({"x": i, "count": count, "empirical": count / m, "exact": p,
                     "expected_count": m * p, "z": (count - m * p) / sigma if sigma > 0 else 0.0})
    extra = {"n": args.n, "beta": args.beta, "recorded": m, "moves": run.moves, "blocked": run.blocked}
    experiments.emit_outputs(rows, cfg, render=not args.no_figure, extra=extra)
    return rows


def cmd_couple(args):
    cfg = _config(args, "couple", horizon=args.horizon, replications=args.replications)
    dist = cfg.dist
    i = args.threshold
    children = np.random.SeedSequence(args.seed).spawn(args.replications)
    hist = None
    z_hist = None
    summary = {"violations": 0, "events": 0, "max_phi": 0}
    os.makedirs(cfg.out, exist_ok=True)
    for r, child in enumerate(children):
        try:
            traj = coupling.run_coupled(dist, i, args.horizon, np.random.default_rng(child),
                                        log=args.log if r == 0 else 0, engine=args.engine)
        except DominationError as exc:
            with open(os.path.join(cfg.out, "couple_log.csv"), "w", encoding="utf-8", newline="") as fh:
                coupling.write_log_csv(fh, exc.log or [])
            raise
        if r == 0:
            with open(os.path.join(cfg.out, "couple_log.csv"), "w", encoding="utf-8", newline="") as fh:
                coupling.write_log_csv(fh, traj.log)
        hist = traj.max_x_hist if hist is None else hist + traj.max_x_hist
        z_hist = traj.z_hist if z_hist is None else z_hist + traj.z_hist
        summary["events"] += traj.stats["events"]
        summary["max_phi"] = max(summary["max_phi"], traj.stats["max_phi"])
    total = hist.sum()
    rows = []
    for x in cfg.xs:
        if x < i or x >= len(hist) - 1:
            continue
        try:
            prop = coupling.proposition1_bound(dist, i, x)
        except InvalidParameter:
            prop = math.nan
        rows.append({"x": x, "empirical": hist[x + 1:].sum() / total,
                     "z_tail": z_hist[x + 1:].sum() / total, "prop1_bound": prop})
    if not rows:
        raise InvalidParameter(f"x-grid has no point in {i}..{len(hist) - 2}")
    experiments.emit_outputs(rows, cfg, render=not args.no_figure,
                             extra={"threshold": i, **summary, "log": "couple_log.csv"})
    return rows


def cmd_ratio(args):
    cfg = _config(args, "ratio")
    report = experiments.ratio_report(cfg)
    rows = report.table()
    cols = ["x", "pr_c", "half_width", "pr_r", "ratio", "ratio_lo", "ratio_hi", "lemma1_ok",
            "y", "lemma4_bound", "method", "unreliable", "status"]
    extra = {"spearman": experiments.spearman_trend(report.rows)}
    experiments.emit_outputs(rows, cfg, columns=cols, render=not args.no_figure, extra=extra)
    return rows


def cmd_bound(args):
    cfg = _config(args, "bound", horizon=1)
    rows = experiments.bound_table(cfg)
    experiments.emit_outputs(rows, cfg, render=not args.no_figure)
    return rows


COMMANDS = {"simulate": cmd_simulate, "exact": cmd_exact, "caep": cmd_caep, "couple": cmd_couple,
            "ratio": cmd_ratio, "bound": cmd_bound}


def main(argv=None):
    try:
        args = parse_args(argv)
        COMMANDS[args.command](args)
    except (InvalidParameter, CapacityError) as exc:
        print(f"invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DominationError, StationarySolveError, AssertionError) as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
