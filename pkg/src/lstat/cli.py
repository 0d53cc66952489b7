"""``lstat`` command line: ``test``, ``simulate`` and ``portfolio``.

Exit codes: 0 the command ran (whatever the test decisions), 2 usage or
input-data error, 3 numerical failure.

``--config FILE`` reads ``key = value`` lines (``#`` comments allowed; keys
are flag names without the leading dashes) or the JSON manifest of an earlier
run; explicit flags override the file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .battery import Battery
from .bootstrap import DEFAULT_B, CalibrationError
from .core import KGrid, SampleMatrix
from .experiments import (
    run_power_sweep,
    run_size_study,
    simulate_pvalues,
    thresholds_from_null,
    write_csv,
    write_manifest,
)
from .numstat import RngStream
from .realdata import (
    DEFAULT_LAG,
    TABLE2_TESTS,
    DataFormatError,
    load_returns,
    run_pipeline,
    synthetic_panel,
)
from .simgen import INNOVATIONS, SimConfig

log = logging.getLogger("lstat")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
SIM_TESTS = "T5,T0.125p,T0.25p,T0.5p,TC,MAX,SUM,COM,adaQ"


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    """``"1,2,5"`` or ``"start:stop:step"`` (stop inclusive) or a mix."""
    out: list[int] = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ":" in part:
            bits = [int(b) for b in part.split(":")]
            if len(bits) not in (2, 3) or (len(bits) == 3 and bits[2] <= 0):
                raise argparse.ArgumentTypeError(f"bad range {part!r}")
            start, stop, step = bits[0], bits[1], bits[2] if len(bits) == 3 else 1
            out.extend(range(start, stop + 1, step))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _names(text: str) -> list[str]:
    names = [t.strip() for t in str(text).split(",") if t.strip()]
    if not names:
        raise argparse.ArgumentTypeError("empty test list")
    return names


def _prob(text: str) -> float:
    v = float(text)
    if not 0 < v <= 1:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1]")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="FILE", help="key=value file or earlier manifest.json")
    p.add_argument("--seed", type=_seed, default=0, help="master seed (default 0)")
    p.add_argument("--B", type=int, default=DEFAULT_B, help="bootstrap replicates (default 500)")
    p.add_argument("--alpha", type=_prob, default=0.05, help="nominal level (default 0.05)")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: all cores); results do not depend on it")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lstat", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"lstat {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test H0: mu = 0 on an n x p CSV")
    t.add_argument("input", help="CSV with a header row; rows are observations")
    t.add_argument("--tests", type=_names, default=["TC"],
                   help="comma list: TC, MAX, SUM, COM, adaQ, T<k>, T<g>p, Tp/<m> (default TC)")
    t.add_argument("--k-grid", type=_int_list, default=None,
                   help="explicit k-grid for TC, e.g. 5,10,20 (needed when p < 40)")
    t.add_argument("--json", metavar="OUT", help="write reports and manifest as JSON")
    t.add_argument("--manifest", metavar="OUT", help="write the run manifest here")
    _common(t)

    s = sub.add_parser("simulate", help="Monte-Carlo size and size-corrected power study")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--p", type=int, required=True)
    s.add_argument("--innovation", choices=INNOVATIONS, default="normal")
    s.add_argument("--rho", type=float, default=0.5)
    s.add_argument("--sparsity-grid", type=_int_list, default=[0],
                   help="e.g. 0 (size only), 1,2,5 or 1:100:5")
    s.add_argument("--kappa", type=float, default=None,
                   help="signal size (default 3 sqrt(log p / (n s)))")
    s.add_argument("--tests", type=_names, default=_names(SIM_TESTS))
    s.add_argument("--M", type=int, default=1000, help="Monte-Carlo replications (default 1000)")
    s.add_argument("--M0", type=int, default=None, help="null runs for size correction (default M)")
    s.add_argument("--out", required=True, help="output directory")
    _common(s)

    p = sub.add_parser("portfolio", help="excess-return pipeline on real or synthetic data")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--returns", help="wide returns CSV: date,TICKER1,...")
    src.add_argument("--synthetic", action="store_true",
                     help="use the built-in look-alike panel (T=501, p=424)")
    p.add_argument("--riskfree", help="risk-free CSV: date,rate")
    p.add_argument("--lag", type=int, default=DEFAULT_LAG, help="Ljung-Box lag (default 10)")
    p.add_argument("--screen-level", type=float, default=0.05)
    p.add_argument("--fdr", type=_prob, default=0.01, help="BH false discovery rate (default 0.01)")
    p.add_argument("--n-list", type=_int_list, default=[100, 150, 200, 250, 300])
    p.add_argument("--tests", type=_names, default=list(TABLE2_TESTS))
    p.add_argument("--M", type=int, default=1000, help="subsamples per n (default 1000)")
    p.add_argument("--out", required=True, help="output directory")
    _common(p)
    return ap


def _load_config(path: str) -> dict[str, str]:
    text = Path(path).read_text(encoding="utf-8")
    if text.lstrip().startswith("{"):
        cfg = json.loads(text).get("config", {})
        return {k: v for k, v in cfg.items() if v is not None}
    out = {}
    for i, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{i}: expected key = value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.lstrip("-").replace("-", "_")] = v
    return out


def parse_args(argv: Sequence[str] | None) -> argparse.Namespace:
    ap = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("command", nargs="?")
    pre.add_argument("--config")
    args, _ = pre.parse_known_args(argv)
    choices = ap._subparsers._group_actions[0].choices  # noqa: SLF001
    if not args.config or args.command not in choices:
        return ap.parse_args(argv)
    sub = choices[args.command]
    actions = {a.dest: a for a in sub._actions}  # noqa: SLF001
    defaults = {}
    for k, v in _load_config(args.config).items():
        if k in ("config", "command", "help"):
            continue
        act = actions.get(k)
        if act is None:
            raise UsageError(f"unknown key {k!r} in {args.config}")
        text = ",".join(map(str, v)) if isinstance(v, list) else str(v)
        if isinstance(act, argparse._StoreTrueAction):  # noqa: SLF001
            defaults[k] = text.lower() in ("1", "true", "yes")
            continue
        try:
            defaults[k] = act.type(text) if act.type else text
        except (argparse.ArgumentTypeError, ValueError) as e:
            raise UsageError(f"{args.config}: bad value for {k!r}: {e}") from None
    sub.set_defaults(**defaults)
    # positional arguments given in the file are no longer required
    for a in sub._actions:  # noqa: SLF001
        if a.dest in defaults and not a.option_strings:
            a.nargs = "?"
        if a.dest in defaults:
            a.required = False
    return ap.parse_args(argv)


def _config_echo(args: argparse.Namespace) -> dict:
    # thread count never changes results, so it stays out of the replayable echo
    return {k: v for k, v in vars(args).items() if k not in ("config", "verbose", "threads")}


def _read_matrix(path: str) -> np.ndarray:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}:1: empty file") from None
        for line, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataFormatError(f"{path}:{line}: expected {len(header)} fields, got {len(rec)}")
            try:
                rows.append([float(c) for c in rec])
            except ValueError:
                raise DataFormatError(f"{path}:{line}: non-numeric field") from None
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return np.array(rows)


def _progress(label: str):
    def cb(done: int, total: int) -> None:
        if done == total or done % max(1, total // 10) == 0:
            print(f"[{label}] {done}/{total}", file=sys.stderr, flush=True)
    return cb


def cmd_test(args: argparse.Namespace) -> int:
    t0 = time.time()
    x = SampleMatrix(_read_matrix(args.input))
    tc_grid = KGrid.from_values(args.k_grid) if args.k_grid else None
    battery = Battery(args.tests, tc_grid)
    grid = battery.grid(x.p)
    dist = battery.bootstrap(x, args.B, RngStream(args.seed), workers=args.threads)
    reports = battery.reports(x, dist, args.alpha)
    print(f"data: n={x.n} p={x.p}  B={args.B}  seed={args.seed}  alpha={args.alpha}")
    for r in reports:
        decision = "reject H0" if r.reject else "do not reject H0"
        print(f"{r.name:>8}  statistic={r.statistic: .6g}  p-value={r.p_value:.6g}  {decision}")
    manifest = {
        "command": "test", "master_seed": args.seed, "B": args.B, "M": None,
        "alpha": args.alpha, "grid": list(grid.ks), "config": _config_echo(args),
        "tool_version": __version__, "threads": args.threads,
        "wall_time_s": round(time.time() - t0, 3),
    }
    if args.json:
        stable = {k: v for k, v in manifest.items() if k not in ("wall_time_s", "threads")}
        stable["config"] = {k: v for k, v in stable["config"].items() if k not in ("json", "manifest")}
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"reports": [r.as_dict() for r in reports], "manifest": stable},
                      fh, indent=2, sort_keys=True)
            fh.write("\n")
    if args.manifest:
        write_manifest(args.manifest, **manifest)
    elif not args.json:
        print(f"# manifest: {json.dumps(manifest, sort_keys=True)}", file=sys.stderr)
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    t0 = time.time()
    if args.M < 1 or (args.M0 is not None and args.M0 < 1):
        raise UsageError("--M and --M0 must be positive")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    master = RngStream(args.seed)
    template = SimConfig(n=args.n, p=args.p, rho=args.rho, innovation=args.innovation,
                         kappa=args.kappa)
    for s in args.sparsity_grid:
        template.with_sparsity(s)  # validates 0 <= s <= p
    battery = Battery(args.tests)
    grid = battery.grid(args.p)
    M0 = args.M0 or args.M
    null = simulate_pvalues(template, battery, M0, master.derive(0), B=args.B,
                            workers=args.threads, progress=_progress("null"))
    size = run_size_study(template, args.tests, M0, args.alpha, master, pvalues=null)
    write_csv(size.rows, out / "size.csv")
    for r in size.rows:
        print(f"size {r['test']:>8}: {r['rate']:.3f} (se {r['se']:.3f})")
    thresholds = None
    powered = [s for s in args.sparsity_grid if s > 0]
    if powered:
        thresholds = thresholds_from_null(null, args.tests, args.alpha)
        curve = run_power_sweep(template, args.tests, powered, args.M, thresholds, master.derive(1),
                                B=args.B, workers=args.threads, progress=_progress("power"))
        write_csv(curve.rows(), out / "power.csv")
        print("s     " + " ".join(f"{t:>8}" for t in curve.tests))
        for j, s in enumerate(curve.sparsity_grid):
            print(f"{s:<5} " + " ".join(f"{curve.estimates[i, j]:8.3f}" for i in range(len(curve.tests))))
    write_manifest(out / "manifest.json", command="simulate", master_seed=args.seed, B=args.B,
                   M=args.M, M0=M0, alpha=args.alpha, grid=list(grid.ks), thresholds=thresholds,
                   config=_config_echo(args), tool_version=__version__, threads=args.threads,
                   wall_time_s=round(time.time() - t0, 3))
    return EXIT_OK


def cmd_portfolio(args: argparse.Namespace) -> int:
    t0 = time.time()
    if args.synthetic:
        panel, _ = synthetic_panel(seed=args.seed)
    else:
        if not (args.returns and args.riskfree):
            raise UsageError("give --returns and --riskfree, or --synthetic")
        panel = load_returns(args.returns, args.riskfree)
    if args.M < 0:
        raise UsageError("--M must be non-negative")
    res = run_pipeline(panel, lag=args.lag, screen_level=args.screen_level, fdr=args.fdr,
                       tests=args.tests, n_list=args.n_list, M=args.M, alpha=args.alpha, B=args.B,
                       stream=RngStream(args.seed), outdir=args.out, workers=args.threads)
    print(f"panel: T={panel.T} p={panel.p} (dropped rows: {panel.dropped_rows})")
    print(f"screening: kept {len(res.screening.kept)} of {panel.p} at Ljung-Box lag {args.lag}")
    print(f"BH discoveries at FDR {args.fdr}: {len(res.discoveries)}")
    for r in res.reports:
        print(f"{r.name:>8}  statistic={r.statistic: .6g}  p-value={r.p_value:.6g}  "
              f"{'reject' if r.reject else 'accept'}")
    write_manifest(Path(args.out) / "manifest.json", command="portfolio", master_seed=args.seed,
                   B=args.B, M=args.M, alpha=args.alpha, lag=args.lag, fdr=args.fdr,
                   kept=len(res.screening.kept), discoveries=len(res.discoveries),
                   config=_config_echo(args), tool_version=__version__, threads=args.threads,
                   wall_time_s=round(time.time() - t0, 3))
    return EXIT_OK


COMMANDS = {"test": cmd_test, "simulate": cmd_simulate, "portfolio": cmd_portfolio}


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except UsageError as e:
        print(f"lstat: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as e:  # argparse usage errors and --help
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (CalibrationError, np.linalg.LinAlgError, FloatingPointError) as e:
        print(f"lstat: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, DataFormatError, ValueError, KeyError, OSError) as e:
        print(f"lstat: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
