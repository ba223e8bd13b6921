"""Command-line entry point: ``truckends <subcommand> --config cfg.yaml``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import yaml

from .pipeline import STAGES, Params, PipelineConfig, PipelineError, Pipeline
from .synth import InfeasiblePlan, SynthScenario, generate_scenario

logger = logging.getLogger("truckends")

SUBCOMMANDS = {
    "ingest": "clean and clip GPS fixes",
    "stops": "derive the speed threshold and detect stops",
    "thresholds": "derive the dwell-time threshold ladder",
    "calibrate": "calibrate the circuity path order",
    "identify": "identify trip ends",
    "filter": "filter ends on roads or without freight POIs",
    "trips": "extract trips between kept ends",
    "chains": "cluster ends and split trip chains",
    "grid": "count kept ends per square zone",
    "odmatrix": "count trips per zone pair",
    "score": "score kept ends against ground truth",
    "run": "run the full pipeline",
    "synth": "generate a synthetic scenario",
}


def _coerce(value: str):
    return yaml.safe_load(value)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="pipeline config (YAML/JSON), or scenario file for synth")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, help="random seed (synth)")
    common.add_argument("--threads", type=int, help="per-truck worker threads")
    common.add_argument("--set", action="append", default=[], metavar="PARAM=VALUE", help="override a config parameter")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="truckends", description="Freight trip-end identification from truck GPS traces.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in SUBCOMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text)
    return parser


def _load_config(args) -> PipelineConfig:
    if args.config is None:
        raise ValueError("--config is required")
    cfg = PipelineConfig.from_file(args.config)
    if args.out is not None:
        cfg.out = str(args.out)
    if args.threads is not None:
        cfg.threads = args.threads
    if args.seed is not None:
        cfg.seed = args.seed
    known = set(Params.__dataclass_fields__)
    for item in args.set:
        key, _, value = item.partition("=")
        if key not in known:
            raise ValueError(f"unknown parameter {key!r}")
        setattr(cfg.params, key, _coerce(value))
    return cfg


def _synth(args) -> int:
    spec = {}
    if args.config is not None:
        with open(args.config) as f:
            spec = yaml.safe_load(f) or {}
    for item in args.set:
        key, _, value = item.partition("=")
        spec[key] = _coerce(value)
    if args.seed is not None:
        spec["seed"] = args.seed
    scenario = SynthScenario.from_dict(spec)
    out = args.out or Path("synth")
    paths = generate_scenario(scenario).write(out)
    print(json.dumps({k: str(v) for k, v in paths.items()}, indent=2))
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "synth":
            return _synth(args)
        cfg = _load_config(args)
    except (OSError, ValueError, TypeError, InfeasiblePlan, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    until = {"run": "odmatrix"}.get(args.command, args.command)
    if until not in STAGES:
        print(f"error: unknown stage {until!r}", file=sys.stderr)
        return 1
    try:
        summary = Pipeline(cfg).run(until)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    print(json.dumps({k: v for k, v in summary.items() if k != "config"}, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
