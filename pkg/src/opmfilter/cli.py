"""Command-line entry point: ``opmfilter run|table|curve|selftest``."""

from __future__ import annotations

import argparse
import ast
import configparser
import sys
from pathlib import Path

from . import harness
from .scenarios import SCENARIOS

RUN_KEYS = ("scenario", "filters", "n", "runs", "seed", "out", "workers", "error_coords")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _literal(text: str):
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def read_config(path) -> dict:
    """Flat ``key = value`` file; keys other than run options are scenario overrides."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    text = Path(path).read_text()
    parser.read_string("[config]\n" + text)
    return dict(parser["config"])


def _override_pair(text: str):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    k, v = text.split("=", 1)
    return k.strip(), v.strip()


def build_experiment(args) -> harness.ExperimentConfig:
    values: dict = {}
    overrides: dict = {}
    if args.config:
        for k, v in read_config(args.config).items():
            if k in RUN_KEYS:
                values[k] = v
            else:
                overrides[k] = _literal(v)
    for k in RUN_KEYS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    for k, v in args.set or []:
        overrides[k] = _literal(v)
    if "n" in values and isinstance(values["n"], str):
        values["n"] = _int_list(values["n"])
    for k in ("runs", "seed", "workers"):
        if k in values:
            values[k] = int(values[k])
    return harness.ExperimentConfig(overrides=overrides, **values)


def cmd_run(args) -> int:
    cfg = build_experiment(args)
    if cfg.out is None:
        raise SystemExit("an output directory is required (--out or 'out' in the config file)")

    def progress(done, total):
        if not args.quiet and (done == total or done % max(1, total // 20) == 0):
            print(f"\r{done}/{total} runs", end="\n" if done == total else "", file=sys.stderr)

    aggregates, _ = harness.run_experiment(cfg, progress)
    if not args.quiet:
        text, _ = harness.format_table(harness.load_aggregates(cfg.out))
        print(text)
    return 0


def cmd_table(args) -> int:
    text, rows = harness.format_table(harness.load_aggregates(args.input))
    harness.write_rows(Path(args.input) / "table.csv", rows)
    print(text)
    return 0


def cmd_curve(args) -> int:
    rows = harness.curve_table(args.input)
    target = Path(args.input) / "curve_wide.csv"
    harness.write_rows(target, rows)
    if args.print:
        for r in rows:
            print(",".join(r))
    else:
        print(target)
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest(verbose=True) else 1


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="opmfilter", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte Carlo experiment and write CSV files")
    r.add_argument("--scenario", choices=sorted(SCENARIOS))
    r.add_argument("--filters", help="comma-separated names, 'all' (table rows) or 'catalog'")
    r.add_argument("--n", type=_int_list, help="comma-separated sample budgets")
    r.add_argument("--runs", type=int)
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--workers", type=int)
    r.add_argument("--error-coords", dest="error_coords", choices=harness.ERROR_COORDS)
    r.add_argument("--config", help="key = value file; command-line flags take precedence")
    r.add_argument(
        "--set", action="append", type=_override_pair, metavar="KEY=VALUE",
        help="scenario parameter override, e.g. --set sigma=0.5",
    )
    r.add_argument("--quiet", action="store_true")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("table", help="print the filter x budget grid and write table.csv")
    t.add_argument("--in", dest="input", required=True)
    t.set_defaults(func=cmd_table)

    c = sub.add_parser("curve", help="write per-step RMSE in wide form (curve_wide.csv)")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--print", action="store_true", help="print the CSV instead of its path")
    c.set_defaults(func=cmd_curve)

    s = sub.add_parser("selftest", help="quick numerical property checks")
    s.set_defaults(func=cmd_selftest)

    sub.add_parser("filters", help="list filter names").set_defaults(
        func=lambda a: print("\n".join(harness.CATALOG)) or 0
    )
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except (KeyError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
