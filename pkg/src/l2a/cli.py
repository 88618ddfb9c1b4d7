"""Command-line front end.

Subcommands: ``gen`` renders a synthetic world to disk, ``run`` executes
one experiment, ``sweep`` scans augmentation budgets, ``compare`` races
the selection strategies at one budget, and ``report`` collects run
results into a CSV.  Every command exits 0 on success and 1 with a
message on stderr otherwise.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import pipeline
from .synthworld import generate_world, world_spec_from_dict
from .tensorstore import SETTINGS, ConfigError, ManifestError, load_run_config


def _cmd_gen(args: argparse.Namespace) -> int:
    with open(args.spec, encoding="utf-8") as fh:
        spec = world_spec_from_dict(json.load(fh))
    manifest = generate_world(spec, args.out)
    print(
        f"wrote {len(manifest.samples)} clips over {len(manifest.classes)} classes to {args.out}"
    )
    return 0


def _summary(res: pipeline.ExperimentResult) -> str:
    return (
        f"{res.setting}/{res.variant} seed={res.seed} "
        f"acc={res.test_accuracy:.4f} augmented={res.n_augmented} "
        f"toxic={res.toxic_fraction:.4f} {res.seconds:.1f}s"
    )


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    if args.setting is not None:
        cfg.setting = args.setting
    res = pipeline.run(cfg, out_dir=args.out)
    print(_summary(res))
    return 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    budgets = [int(b) for b in args.budgets.split(",") if b.strip() != ""]
    if not budgets:
        raise ValueError("no budgets given")
    results = pipeline.sweep_budget(cfg, budgets, out_dir=args.out)
    for res in results:
        print(f"budget={int(res.extras['budget'])} {_summary(res)}")
    return 0


def _cmd_compare(args: argparse.Namespace) -> int:
    cfg = load_run_config(args.config)
    results = pipeline.compare_baselines(cfg, out_dir=args.out)
    for res in results:
        print(_summary(res))
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    rows = []
    for root in args.runs:
        for path in sorted(Path(root).rglob("result.json")):
            with open(path, encoding="utf-8") as fh:
                rows.append(pipeline.ExperimentResult(**json.load(fh)))
    if not rows:
        raise ValueError("no result.json files found under the given directories")
    rows.sort(key=lambda r: (r.setting, r.variant, r.seed, r.config_hash))
    pipeline.write_results_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="l2a", description="learning-to-augment experiment runner"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="render a synthetic world")
    p.add_argument("--spec", required=True, help="world spec JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--setting", choices=SETTINGS, default=None)
    p.add_argument("--out", default=None, help="artifact directory")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("sweep", help="scan augmentation budgets")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--budgets", required=True, help="comma-separated budgets")
    p.add_argument("--out", default=None, help="artifact directory")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("compare", help="race selection strategies at one budget")
    p.add_argument("--config", required=True, help="run config JSON")
    p.add_argument("--out", default=None, help="artifact directory")
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("report", help="collect results into a CSV")
    p.add_argument("--runs", nargs="+", required=True, help="run directories to scan")
    p.add_argument("--out", required=True, help="CSV path to write")
    p.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ManifestError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
