"""``somgen`` command line: generate, evaluate, compare, calibrate."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, report

log = logging.getLogger("somgen")


def _int_list(text: str) -> list:
    return [int(t) for t in text.split(",") if t.strip()]


def _float_list(text: str) -> list:
    return [float(t) for t in text.split(",") if t.strip()]


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON run configuration; command-line flags override it")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: $SOMGEN_JOBS or 1)")
    p.add_argument("--cache-dir", default=None, help="calibration cache directory")


def _add_eval_settings(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tolerance-percentile", type=float, default=None)
    p.add_argument("--per-tile-alpha", type=float, default=None)
    p.add_argument("--max-violations", type=int, default=None)
    p.add_argument("--no-bonferroni", dest="bonferroni", action="store_const", const=False, default=None,
                   help="test every Moran tile at --per-tile-alpha instead of sharing it across tiles")
    p.add_argument("--calibration-size", type=int, default=None)
    p.add_argument("--calibration-seed", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="somgen", description=__doc__)
    parser.add_argument("--version", action="version", version=f"somgen {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write an ensemble of realizations plus manifest.json")
    g.add_argument("--som", choices=report.GENERATORS, default=None)
    g.add_argument("--classes", type=_int_list, default=None, help="comma-separated class ids, e.g. 1,8")
    g.add_argument("--weights", type=_float_list, default=None, help="prevalence weights matching --classes")
    g.add_argument("--n", type=int, default=None)
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", default=None)
    g.add_argument("--clb-params", default=None, help="clb_params.json (default: shipped parameters)")
    g.add_argument("--save-region-maps", action="store_const", const=True, default=None)
    _add_common(g)

    e = sub.add_parser("evaluate", help="validate an ensemble against a SOM's rules")
    e.add_argument("--som", choices=tuple(report.SUMMARY_FUNCS), required=True)
    e.add_argument("--input", required=True, help="manifest.json or a directory of PNG files")
    e.add_argument("--calib", default=None, help="calibration JSON (default: cached, built on demand)")
    e.add_argument("--report", default=None, help="report JSON path (default: stdout)")
    e.add_argument("--plots", default=None, help="directory for tidy CSV plot data")
    _add_common(e)
    _add_eval_settings(e)

    c = sub.add_parser("compare", help="QQ, density overlap and Frechet distance of two ensembles")
    c.add_argument("a")
    c.add_argument("b")
    c.add_argument("--features-a", default=None)
    c.add_argument("--features-b", default=None)
    c.add_argument("--block-features", action="store_true", help="use 64 block means per image as features")
    c.add_argument("--report", default=None)
    c.add_argument("--plots", default=None)

    k = sub.add_parser("calibrate", help="build calibration artifacts from a true ensemble")
    k.add_argument("--som", choices=tuple(report.SUMMARY_FUNCS), required=True)
    k.add_argument("--out", default=None, help="write calibration JSON here as well as to the cache")
    k.add_argument("--reference-size", type=int, default=None)
    _add_common(k)
    _add_eval_settings(k)
    return parser


def _config(args, **extra) -> report.RunConfig:
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "som", "classes", "weights", "n", "seed", "out", "jobs", "cache_dir", "clb_params", "save_region_maps",
            "tolerance_percentile", "per_tile_alpha", "max_violations", "bonferroni", "calibration_size",
            "calibration_seed", "reference_size",
        )
    }
    overrides.update(extra)
    return report.RunConfig.from_sources(getattr(args, "config", None), **overrides)


def _emit(doc: dict, path) -> None:
    if path:
        report.write_report(doc, path)
    else:
        sys.stdout.write(report.dumps_report(doc))


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "generate":
            cfg = _config(args)
            manifest = report.cmd_generate(cfg)
            log.info("wrote %d realizations to %s", len(manifest.entries), cfg.out)
            print(Path(cfg.out) / "manifest.json")
        elif args.command == "evaluate":
            cfg = _config(args, out=None)
            doc = report.cmd_evaluate(args.input, args.som, cfg, args.calib)
            _emit(doc, args.report)
            if args.plots:
                report.write_plot_data(doc, args.plots)
        elif args.command == "compare":
            doc = report.cmd_compare(args.a, args.b, args.features_a, args.features_b, args.block_features)
            _emit(doc, args.report)
            if args.plots:
                report.write_plot_data(doc, args.plots)
        elif args.command == "calibrate":
            cfg = _config(args, out=None)
            doc = report.load_or_build_calibration(args.som, cfg)
            if args.out:
                with open(args.out, "w") as fh:
                    json.dump(doc, fh, sort_keys=True, indent=1)
                    fh.write("\n")
            else:
                print(json.dumps(doc, sort_keys=True))
    except (report.ConfigError, ValueError, OSError) as exc:
        print(f"somgen: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
