"""Command-line entry point: one subcommand per pipeline stage plus the
local service and a fixture generator for demos."""

from __future__ import annotations

import argparse
import sys

from . import pipeline
from .pipeline import ConfigInvalid, MissingUpstream, StageDirLocked


def _parse_seed_overrides(items):
    overrides = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigInvalid(f"--seed-override expects stage=int, got {item!r}")
        stage, _, value = item.partition("=")
        try:
            overrides[stage.strip()] = int(value)
        except ValueError:
            raise ConfigInvalid(f"--seed-override {item!r}: seed must be an integer")
    return overrides


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lacuna",
        description="Detect lacunae in a molecular dataset via persistent "
                    "homology and Mapper, and repair them by scaffold-"
                    "constrained generation.")
    sub = parser.add_subparsers(dest="command", required=True)

    stage_names = pipeline.STAGES
    for name in stage_names:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", required=True)
        p.add_argument("--stage-dir", required=True)
        p.add_argument("--seed-override", action="append", metavar="STAGE=INT")

    serve = sub.add_parser("serve", help="start the local HTTP service")
    serve.add_argument("--config", required=True)
    serve.add_argument("--stage-dir", required=True)
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8765)
    serve.add_argument("--ui-dir", default=None,
                       help="directory with the built web UI bundle")

    fixture = sub.add_parser("make-fixture",
                             help="write the synthetic square-lacuna dataset "
                                  "and a tuned config")
    fixture.add_argument("--out", required=True, help="dataset file to write")
    fixture.add_argument("--config-out", default=None)
    fixture.add_argument("--seed", type=int, default=0)
    fixture.add_argument("--n-per-family", type=int, default=300)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "make-fixture":
            from .fixtures import square_lacuna_config_text, \
                write_square_lacuna_dataset

            count = write_square_lacuna_dataset(args.out, seed=args.seed,
                                                n_per_family=args.n_per_family)
            print(f"wrote {count} records to {args.out}")
            if args.config_out:
                with open(args.config_out, "w") as handle:
                    handle.write(square_lacuna_config_text(
                        args.out, fixture_seed=args.seed))
                print(f"wrote config to {args.config_out}")
            return 0
        if args.command == "serve":
            from .service import run_server

            config = pipeline.validate_config(args.config)
            run_server(config, args.stage_dir, host=args.host,
                       port=args.port, ui_dir=args.ui_dir)
            return 0
        config = pipeline.validate_config(args.config)
        pipeline.apply_seed_overrides(
            config, _parse_seed_overrides(args.seed_override))
        with pipeline.stage_lock(args.stage_dir):
            artifact = pipeline.run_stage(config, args.command, args.stage_dir)
        print(f"{artifact.stage}: digest {artifact.digest}")
        for path in artifact.paths:
            print(f"  {path}")
        return 0
    except (ConfigInvalid, MissingUpstream, StageDirLocked) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
