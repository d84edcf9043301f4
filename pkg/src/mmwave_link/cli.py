"""Command-line entry point for parameter sweeps."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .harness import ConfigError, PRESETS, emit_results, load_config, preset_config, run_sweep


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mmwave-link",
        description="Monte Carlo sweeps of mmWave MIMO link spectral and energy efficiency.",
    )
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--config", help="YAML sweep configuration")
    source.add_argument("--preset", choices=sorted(PRESETS), help="named reference scenario")
    parser.add_argument("--out", required=True, help="output file")
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--workers", type=int, help="worker processes, 0 = all cores")
    parser.add_argument("--realizations", type=int, help="override the realization count of every scenario")
    parser.add_argument("--quiet", action="store_true", help="suppress the progress line")
    return parser


def _error(kind: str, message: str, **extra) -> int:
    print(json.dumps({"error": kind, "message": message, **extra}, sort_keys=True), file=sys.stderr)
    return 2


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.seed is not None and not 0 <= args.seed < 2**64:
            raise ConfigError("seed", "must be an unsigned 64-bit integer")
        if args.preset:
            config = preset_config(args.preset, args.seed or 0)
        else:
            config = load_config(args.config)
            if args.seed is not None:
                config = dataclasses.replace(config, seed=args.seed)
        if args.realizations is not None:
            if args.realizations < 1:
                raise ConfigError("realizations", "must be >= 1")
            config = dataclasses.replace(config, scenarios=tuple(
                dataclasses.replace(s, realizations=args.realizations) for s in config.scenarios))

        def progress(done, total):
            if not args.quiet:
                print(f"\r{done}/{total} tasks", end="" if done < total else "\n", file=sys.stderr, flush=True)

        manifest = run_sweep(config, args.workers, progress)
        emit_results(manifest, args.out, args.format)
    except ConfigError as exc:
        return _error("config", str(exc), field=exc.field)
    except OSError as exc:
        return _error("io", str(exc))
    except Exception as exc:  # noqa: BLE001 - report anything as a structured line
        return _error(type(exc).__name__, str(exc))
    return 0


if __name__ == "__main__":
    sys.exit(main())
