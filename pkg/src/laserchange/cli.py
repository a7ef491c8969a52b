"""Command-line front end.

Five subcommands cover the workflow: ``simulate`` writes a synthetic
benchmark directory, ``detect`` runs the change-detection pipeline over it,
``bench`` scores the detection methods against ground truth, ``render``
dumps one frame's debug images, and ``eval`` scores externally produced
masks. Exit status is 0 on success, 1 for runtime failures (missing files,
failed pipeline stages), and 2 for configuration or usage errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from typing import List, Optional

from .config import (
    SEGMENTER_BRIDGE,
    SEGMENTER_REFERENCE,
    ConfigError,
    PipelineConfig,
    apply_overrides,
    load_config,
)
from .pipeline import (
    BENCH_METHODS,
    PipelineError,
    run_bench,
    run_detect,
    run_eval,
    run_render,
    run_simulate,
)

__all__ = ["main", "ENDPOINT_ENV"]

ENDPOINT_ENV = "LASERCHANGE_ENDPOINT"

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    """Assemble the effective config: file, then --set, then dedicated flags.

    The dedicated --segmenter/--endpoint flags ride the override mechanism so
    precedence is uniform; the endpoint environment variable fills in only
    when the bridge is selected and nothing else named an endpoint.
    """
    config = load_config(args.config) if getattr(args, "config", None) else PipelineConfig()
    overrides: List[str] = list(getattr(args, "set", None) or [])
    if getattr(args, "segmenter", None):
        overrides.append(f"segmenter.kind={args.segmenter}")
    if getattr(args, "endpoint", None):
        overrides.append(f"segmenter.endpoint={args.endpoint}")
    config = apply_overrides(config, overrides)
    if config.segmenter.kind == SEGMENTER_BRIDGE and not config.segmenter.endpoint:
        env = os.environ.get(ENDPOINT_ENV, "")
        if not env:
            raise ConfigError(
                f"bridge segmenter needs --endpoint, segmenter.endpoint, or ${ENDPOINT_ENV}"
            )
        config = apply_overrides(config, [f"segmenter.endpoint={env}"])
    return config


def _cmd_simulate(args: argparse.Namespace) -> int:
    bench = run_simulate(args.scene, args.trajectory, args.seed, args.out)
    print(
        f"wrote {bench.n_frames}-frame benchmark "
        f"({len(bench.teach_poses)} teach poses, seed {args.seed}) to {args.out}"
    )
    return EXIT_OK


def _cmd_detect(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    out = args.out or os.path.join(args.dataset, "detect")
    report = run_detect(args.dataset, config, out_dir=out, save_images=args.save_images)
    n_cand = sum(
        1 for f in report["frames"] for c in f["candidates"] if c["verified"]
    )
    print(f"{report['n_frames']} frames, {n_cand} verified change candidates -> {out}")
    return EXIT_OK


def _cmd_bench(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    methods: Optional[List[str]] = None
    if args.methods:
        methods = [m.strip() for m in args.methods.split(",") if m.strip()]
        unknown = [m for m in methods if m not in BENCH_METHODS]
        if unknown:
            raise ConfigError(
                f"unknown methods {unknown}; choose from {list(BENCH_METHODS)}"
            )
    text, _ = run_bench(args.dataset, methods=methods, config=config, out_dir=args.out)
    print(text, end="")
    return EXIT_OK


def _cmd_render(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    out = args.out or os.path.join(args.dataset, "render")
    doc = run_render(args.dataset, args.frame, config, out_dir=out)
    print(f"frame {doc['frame']}: {len(doc['prompts'])} prompts -> {out}")
    return EXIT_OK


def _cmd_eval(args: argparse.Namespace) -> int:
    config = _config_from_args(args)
    text, _ = run_eval(
        args.dataset, args.masks, config, out_dir=args.out, method_name=args.name
    )
    print(text, end="")
    return EXIT_OK


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="TOML configuration file")
    p.add_argument(
        "--set",
        action="append",
        metavar="SECTION.KEY=VALUE",
        help="override one configuration value (repeatable)",
    )
    p.add_argument(
        "--segmenter",
        choices=(SEGMENTER_REFERENCE, SEGMENTER_BRIDGE),
        help="which segmenter backs the pipeline",
    )
    p.add_argument(
        "--endpoint",
        metavar="URL",
        help=f"bridge segmenter URL (falls back to ${ENDPOINT_ENV})",
    )


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="laserchange",
        description="Change detection for path-repeating robots from LiDAR virtual camera views.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a synthetic benchmark directory")
    p.add_argument("--scene", default="standard", metavar="SPEC",
                   help="scene spec JSON path, or 'standard' (default)")
    p.add_argument("--trajectory", default="standard", metavar="SPEC",
                   help="trajectory spec JSON path, or 'standard' (default)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, metavar="DIR")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("detect", help="run change detection over a benchmark")
    p.add_argument("dataset", metavar="DATASET_DIR")
    p.add_argument("--out", metavar="DIR", help="report directory (default DATASET_DIR/detect)")
    p.add_argument("--save-images", action="store_true",
                   help="write per-frame live/map/mask PNGs")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("bench", help="score detection methods against ground truth")
    p.add_argument("dataset", metavar="DATASET_DIR")
    p.add_argument("--methods", metavar="LIST",
                   help=f"comma-separated subset of {','.join(BENCH_METHODS)}")
    p.add_argument("--out", metavar="DIR", help="write report.txt / report.json here")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("render", help="write one frame's debug images")
    p.add_argument("dataset", metavar="DATASET_DIR")
    p.add_argument("--frame", type=int, required=True)
    p.add_argument("--out", metavar="DIR", help="image directory (default DATASET_DIR/render)")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("eval", help="score externally produced masks")
    p.add_argument("dataset", metavar="DATASET_DIR")
    p.add_argument("masks", metavar="MASKS_DIR",
                   help="directory of live_XXX.png masks (nonzero = changed)")
    p.add_argument("--name", default="external", help="method label in the report")
    p.add_argument("--out", metavar="DIR", help="write report.txt / report.json here")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_eval)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PipelineError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
