"""Command-line front end.

Verbs:
  run     one experiment from a config file
  preset  a named multi-seed study
  dump    re-render an archive dump as an SVG heatmap
  check   the gradient / container / determinism self-test battery

Exit codes: 0 success, 1 config error, 2 runtime numeric fault (or failed
self-check), 3 partial preset failure. GACQD_THREADS caps intra-run rollout
parallelism.
"""

import argparse
import os
import sys

from . import __version__, backend_name
from .archive import load_archive
from .config import echo_lines, parse_config
from .errors import ConfigError, NumericFault
from .heatmap import render_svg
from .loop import run_gac, run_single_policy
from .presets import PRESET_NAMES, build_preset, run_preset


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gacqd",
        description="Grid-archive quality-diversity search with actor-critic "
                    "gradient variations")
    parser.add_argument("--version", action="version",
                        version=f"gacqd {__version__} (backend: {backend_name})")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="run a single experiment")
    p_run.add_argument("--config", required=True, help="key=value config file")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--single-policy", action="store_true",
                       help="run the stepwise single-policy harness instead "
                            "of the generation loop")

    p_preset = sub.add_parser("preset", help="run a named study")
    p_preset.add_argument("--preset", required=True, choices=PRESET_NAMES)
    p_preset.add_argument("--out", required=True)
    p_preset.add_argument("--seeds", default=None,
                          help="comma-separated seed list (default 0-4)")
    p_preset.add_argument("--paper-scale", action="store_true",
                          help="use full-scale episode length, batch size, "
                               "buffer, and G values")
    p_preset.add_argument("--config", default=None,
                          help="optional config file applied to every run")
    p_preset.add_argument("--progress", action="store_true")

    p_dump = sub.add_parser("dump", help="render an archive dump")
    p_dump.add_argument("--run", required=True,
                        help="run directory holding archive.csv/genotypes.bin")
    p_dump.add_argument("--out", default=None,
                        help="output directory (default: the run directory)")

    sub.add_parser("check", help="run the self-test battery")
    return parser


def _cmd_run(args) -> int:
    cfg = parse_config(args.config)
    for line in echo_lines(cfg):
        print(line)
    if args.single_policy:
        out_path = None
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            out_path = os.path.join(args.out, "single_policy.csv")
        _, evals = run_single_policy(cfg, out_path)
        if evals:
            print(f"final eval return: {evals[-1][1]!r}")
        return 0
    result = run_gac(cfg, out_dir=args.out, progress=True)
    if result.reports:
        last = result.reports[-1]
        print(f"final qd_score={last.qd_score!r} coverage={last.coverage!r} "
              f"max_fitness={last.max_fitness!r}")
    return 0


def _cmd_preset(args) -> int:
    seeds = None
    if args.seeds:
        try:
            seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
        except ValueError as err:
            raise ConfigError(f"--seeds must be a comma-separated integer "
                              f"list, got {args.seeds!r}") from err
    base_pairs = {}
    if args.config:
        text = open(args.config).read() if os.path.exists(args.config) else None
        if text is None:
            raise ConfigError(f"cannot read config file {args.config}")
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{args.config}:{lineno}: expected key=value")
            key, raw = line.split("=", 1)
            base_pairs[key.strip()] = raw
    preset = build_preset(args.preset, seeds, args.paper_scale)
    return run_preset(preset, args.out, base_pairs, progress=args.progress)


def _cmd_dump(args) -> int:
    csv_path = os.path.join(args.run, "archive.csv")
    bin_path = os.path.join(args.run, "genotypes.bin")
    if not (os.path.exists(csv_path) and os.path.exists(bin_path)):
        raise ConfigError(f"{args.run} does not contain archive.csv and "
                          "genotypes.bin")
    archive = load_archive(csv_path, bin_path)
    out_dir = args.out or args.run
    os.makedirs(out_dir, exist_ok=True)
    if len(archive.spec.dims) == 2:
        path = os.path.join(out_dir, "archive.svg")
        render_svg(archive, path)
        print(f"wrote {path}")
    else:
        print("archive grid is not 2-D; CSV dump is the only rendering")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            return _cmd_run(args)
        if args.verb == "preset":
            return _cmd_preset(args)
        if args.verb == "dump":
            return _cmd_dump(args)
        from .selfcheck import run_all
        return 0 if run_all() else 2
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    except NumericFault as err:
        print(f"numeric fault: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
