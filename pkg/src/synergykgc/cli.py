"""Command-line entry point: ``stats``, ``train``, ``eval``, ``sweep``, ``export-curves``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numeric failure (non-finite loss or gradient).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import math
import os
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, TrainConfig, load_config, parse_phi, read_config_file
from .evaluator import MODES, evaluate_split
from .kg_store import DataError, degree_profile, load_dataset
from .numerics import NumericError
from .runs import DIRECTION_CURVES, load_model, load_store, run_training
from .sweep import AXES, activation_grid, sweep, write_grid_csv, write_sweep_csv
from .trainer import moving_average, read_curves

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
SEED_ENV = "SYNERGYKGC_SEED"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_overrides(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("config overrides")
    g.add_argument("--seed", type=int)
    g.add_argument("--epochs", dest="total_epochs", type=int)
    g.add_argument("--t-start", dest="t_start", type=int)
    g.add_argument("--phi", type=parse_phi, help="anchor degree threshold: integer or 'inf'")
    g.add_argument("--hops", type=int, choices=range(1, 6))
    g.add_argument("--pool-cap", dest="pool_cap", type=int)
    g.add_argument("--d", type=int)
    g.add_argument("--heads", type=int)
    g.add_argument("--batch-size", dest="batch_size", type=int)
    g.add_argument("--lr", dest="learning_rate", type=float)
    g.add_argument("--no-anchor", dest="enable_anchor", action="store_false", default=None)
    g.add_argument("--no-cross", dest="enable_cross", action="store_false", default=None)
    g.add_argument("--no-gate", dest="enable_gate", action="store_false", default=None)
    g.add_argument("--no-align", dest="enable_align", action="store_false", default=None)
    g.add_argument("--train", dest="train_path", help="train triples (overrides the config's data.train)")
    g.add_argument("--valid", dest="valid_path")
    g.add_argument("--test", dest="test_path")


OVERRIDE_KEYS = ("seed", "total_epochs", "t_start", "phi", "hops", "pool_cap", "d", "heads", "batch_size",
                 "learning_rate", "enable_anchor", "enable_cross", "enable_gate", "enable_align")


def resolve_config(args) -> TrainConfig:
    """Config file (TOML, JSON or a run manifest), then CLI flags, then the seed env fallback."""
    raw = read_config_file(args.config) if args.config else {}
    overrides = {k: v for k in OVERRIDE_KEYS if (v := getattr(args, k, None)) is not None}
    if "seed" not in overrides and "seed" not in raw.get("config", raw) and os.environ.get(SEED_ENV):
        overrides["seed"] = int(os.environ[SEED_ENV])
    if "tool" in raw and "config" in raw:
        cfg = TrainConfig.from_dict({**raw["config"], **overrides})
    else:
        cfg = load_config(args.config, **overrides)
    data_changes = {k: str(Path(getattr(args, f"{k}_path")).resolve())
                    for k in ("train", "valid", "test") if getattr(args, f"{k}_path", None)}
    if data_changes:
        cfg.data = dataclasses.replace(cfg.data, **data_changes)
    return cfg


# ---------------------------------------------------------------------------

def cmd_stats(args) -> int:
    if args.train_path:
        _, store = load_dataset(args.train_path, args.valid_path, args.test_path)
    else:
        store = load_store(resolve_config(args).data)
    prof = degree_profile(store)
    table = prof.as_table()
    table["Malformed"] = store.malformed
    text = json.dumps(table, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    print(text)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    result = run_training(cfg, args.out)
    last = result.records[-1] if result.records else None
    if last is not None:
        print(f"trained {len(result.records)} epochs; final loss {last.loss_total:.5f}; outputs in {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model, cfg, store = load_model(args.checkpoint)
    triples = store.splits.get(args.split)
    if triples is None or len(triples) == 0:
        raise DataError(f"split {args.split!r} is empty for this dataset")
    report = evaluate_split(store, triples, model, args.mode, coords={"split": args.split})
    out = Path(args.out) if args.out else Path(args.checkpoint).parent / "metrics.json"
    report.write_json(out)
    print(report.summary())
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = resolve_config(args)
    store = load_store(cfg.data)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if args.axis in ("hops", "t_start"):
        values = [int(v) for v in values]
    out = Path(args.out) if args.out else Path(f"sweep_{args.axis}.csv")
    if args.axis == "t_start" and args.grid_epochs:
        budgets = [int(v) for v in args.grid_epochs.split(",")]
        write_grid_csv(out, activation_grid(values, budgets, cfg, store, args.split, args.mode))
        print(f"wrote {out}")
        return EXIT_OK
    points = sweep(args.axis, values, cfg, store, split=args.split, mode=args.mode, jobs=args.jobs)
    write_sweep_csv(out, points)
    for p in points:
        status = p.report.summary() if p.report else f"FAILED: {p.error}"
        print(f"{p.axis}={p.value}: {status}")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_export_curves(args) -> int:
    run = Path(args.run)
    rows = read_curves(run / "curves.csv")
    ma = moving_average([r["loss_total"] for r in rows], args.window)
    for r, m in zip(rows, ma):
        r[f"loss_total_ma{args.window}"] = float(m)
    # JSON has no NaN; undefined entries (e.g. phase-I alignment terms) become null
    clean = [{k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in r.items()} for r in rows]
    directions = []
    if (run / DIRECTION_CURVES).exists():
        with open(run / DIRECTION_CURVES, newline="", encoding="utf-8") as fh:
            directions = list(csv.DictReader(fh))
    out = Path(args.out)
    if out.suffix.lower() == ".json":
        out.write_text(json.dumps({"curves": clean, "direction_curves": directions}, indent=2) + "\n",
                       encoding="utf-8")
    else:
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]))
            w.writeheader()
            w.writerows(rows)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="synergykgc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("stats", help="dataset size and degree percentiles as JSON")
    p.add_argument("--config")
    p.add_argument("--train", dest="train_path")
    p.add_argument("--valid", dest="valid_path")
    p.add_argument("--test", dest="test_path")
    p.add_argument("--out")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="two-phase training into a run directory")
    p.add_argument("--config", help="TOML or JSON config (a run manifest also works)")
    p.add_argument("--out", required=True, help="run directory")
    _add_overrides(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="filtered ranking metrics for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--mode", choices=MODES, default="synergy")
    p.add_argument("--out", help="metrics JSON (default: metrics.json next to the checkpoint)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="train + evaluate along one axis, long-format CSV")
    p.add_argument("--axis", choices=AXES, required=True)
    p.add_argument("--values", required=True, help="comma-separated; phi accepts 'none' (no anchor) and 'inf'")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--split", default="test")
    p.add_argument("--mode", choices=MODES, default="synergy")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--grid-epochs", help="t_start axis only: comma-separated training budgets")
    _add_overrides(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("export-curves", help="loss and direction curves of a run as CSV/JSON plot data")
    p.add_argument("--run", required=True)
    p.add_argument("--out", required=True, help=".json or .csv")
    p.add_argument("--window", type=int, default=5)
    p.set_defaults(func=cmd_export_curves)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, FileNotFoundError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, ValueError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
