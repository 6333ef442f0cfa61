"""Command-line front end.

Exit codes: 0 success, 1 configuration error or infeasible design,
2 simulation diverged.
"""

from __future__ import annotations

import argparse
import sys

import yaml

from . import config as C
from .sim import compare, run_scenario

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


def _load(args) -> dict:
    return C.load(args.config, args.preset)


def _dump(doc: dict, path: str | None) -> None:
    text = yaml.safe_dump(doc, sort_keys=False, default_flow_style=None, width=100)
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _envelope(cfg: dict, body: dict) -> dict:
    return {"config_sha256": C.config_hash(cfg), **body, "config": cfg}


def cmd_design(args) -> int:
    cfg = _load(args)
    *_, report = C.run_design(cfg)
    print(report.summary(), file=sys.stderr)
    _dump(_envelope(cfg, {"design": report.to_dict()}), args.out or cfg["output"]["report"])
    if not report.feasible:
        print(f"design infeasible at step {report.failed_step}: {report.message}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


def cmd_simulate(args) -> int:
    cfg = _load(args)
    scenario = C.build_scenario(cfg, allocator=args.allocator)
    trace, metrics = run_scenario(scenario)
    trace_path = args.trace or cfg["output"]["trace"]
    if trace_path:
        trace.to_csv(trace_path, cfg)
    body = {"scenario": scenario.name, "allocator": scenario.allocator,
            "metrics": metrics.to_dict()}
    _dump(_envelope(cfg, body), args.metrics)
    if metrics.diverged:
        print(f"diverged at t={metrics.diverged_at:.3f} s", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load(args)
    design = C.run_design(cfg)
    a = C.build_scenario(cfg, design, args.a)
    b = C.build_scenario(cfg, design, args.b)
    result = compare(a, b)
    _dump(_envelope(cfg, {"comparison": result}), args.out)
    return EXIT_DIVERGED if result["any_divergence"] else EXIT_OK


def cmd_preset(args) -> int:
    _dump(C.resolve(preset=args.name), None)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="adalloc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, default_preset):
        p.add_argument("--config", help="YAML configuration document")
        p.add_argument("--preset", default=None,
                       help=f"start from a preset (choices: {', '.join(C.PRESETS)}; "
                            f"default {default_preset} when --config is absent)")
        p.set_defaults(default_preset=default_preset)

    p = sub.add_parser("design", help="run the offline design pipeline")
    common(p, "admire")
    p.add_argument("--out", help="write the design report here (default stdout)")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", help="run one closed-loop scenario")
    common(p, "admire-lambda2")
    p.add_argument("--allocator", choices=["adaptive", "pseudo", "pseudo_inverse"])
    p.add_argument("--trace", help="write the CSV trace here")
    p.add_argument("--metrics", help="write metrics here (default stdout)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run the same scenario with two allocators")
    common(p, "admire-lambda2")
    p.add_argument("--a", default="adaptive", choices=["adaptive", "pseudo", "pseudo_inverse"])
    p.add_argument("--b", default="pseudo", choices=["adaptive", "pseudo", "pseudo_inverse"])
    p.add_argument("--out", help="write the comparison report here (default stdout)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("preset", help="print a preset's resolved configuration")
    p.add_argument("name", choices=list(C.PRESETS))
    p.set_defaults(func=cmd_preset)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if hasattr(args, "default_preset") and args.preset is None and args.config is None:
        args.preset = args.default_preset
    try:
        return args.func(args)
    except C.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
