"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import logging
import sys
from pathlib import Path

from .algorithm import LCBOConfig
from .harness import ConfigError, ExperimentConfig, aggregate_directory, plot_aggregate, run_experiment
from .kernels import KernelSpec

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

_EXPERIMENT_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig) if f.name != "lcbo"}
_LCBO_SCALARS = {"kernel", "priors", "max_oracle_calls", "max_iterations"}


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_optional(text: str, cast):
    return None if text.strip().lower() in ("", "none") else cast(text)


def _experiment_value(name: str, text: str):
    if name in ("dim",):
        return _parse_optional(text, int)
    if name == "noise_sd":
        return _parse_optional(text, float)
    if name in ("budget", "repetitions", "base_seed", "jobs"):
        return int(text)
    if name == "plots":
        return _parse_bool(text)
    return text.strip()


def _lcbo_value(name: str, text: str):
    if name == "fixed_batch":
        parts = [int(p) for p in text.replace(" ", "").split(",")]
        if len(parts) != 2:
            raise ConfigError("fixed_batch needs two comma-separated integers")
        return tuple(parts)
    if name in ("window",):
        return _parse_optional(text, int)
    if name == "ground_truth":
        return _parse_optional(text, _parse_bool)
    if name in ("refit_period", "acq_restarts", "acq_steps"):
        return int(text)
    if name in ("step_mode", "batch_schedule", "constraint_sense"):
        return _parse_optional(text, str.strip)
    return float(text)


def load_config(path: str | Path) -> ExperimentConfig:
    """Read an INI file with ``[experiment]`` and optional ``[lcbo]`` / ``[kernel]`` sections."""
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    unknown_sections = set(parser.sections()) - {"experiment", "lcbo", "kernel"}
    if unknown_sections:
        raise ConfigError(f"unknown sections: {', '.join(sorted(unknown_sections))}")

    values = {}
    if parser.has_section("experiment"):
        for key, text in parser.items("experiment"):
            if key not in _EXPERIMENT_FIELDS:
                raise ConfigError(f"unknown [experiment] key {key!r}")
            try:
                values[key] = _experiment_value(key, text)
            except ValueError as exc:
                raise ConfigError(f"[experiment] {key}: {exc}") from exc

    lcbo = {}
    lcbo_fields = {f.name for f in dataclasses.fields(LCBOConfig)} - _LCBO_SCALARS
    if parser.has_section("lcbo"):
        for key, text in parser.items("lcbo"):
            if key not in lcbo_fields:
                raise ConfigError(f"unknown [lcbo] key {key!r}")
            try:
                lcbo[key] = _lcbo_value(key, text)
            except ValueError as exc:
                raise ConfigError(f"[lcbo] {key}: {exc}") from exc
    if parser.has_section("kernel"):
        section = parser["kernel"]
        extra = set(section) - {"family", "lengthscale", "outputscale"}
        if extra:
            raise ConfigError(f"unknown [kernel] keys: {', '.join(sorted(extra))}")
        try:
            lcbo["kernel"] = KernelSpec(
                section.get("family", "rbf"),
                section.getfloat("lengthscale", 0.5),
                section.getfloat("outputscale", 1.0),
            )
        except ValueError as exc:
            raise ConfigError(f"[kernel]: {exc}") from exc
    return ExperimentConfig(**values, lcbo=lcbo)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lcbo", description="Local constrained Bayesian optimization experiments.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run repeated experiments and write traces")
    run_p.add_argument("--config", type=Path, help="INI file; flags given here override it")
    run_p.add_argument("--problem", help="toy_circle, synthetic, truss or beam")
    run_p.add_argument("--dim", type=int, help="input dimension (synthetic only)")
    run_p.add_argument("--method", help="lcbo or random_search")
    run_p.add_argument("--budget", type=int, help="function evaluations per repetition, cold start included")
    run_p.add_argument("--reps", type=int, dest="repetitions", help="number of repetitions")
    run_p.add_argument("--seed", type=int, dest="base_seed", help="base seed; repetition r uses seed + r")
    run_p.add_argument("--out", dest="output_dir", help="output directory")
    run_p.add_argument("--noise-sd", type=float, dest="noise_sd", help="observation noise standard deviation")
    run_p.add_argument("--judge", choices=("truth", "noisy"), help="feasibility used for best-so-far reporting")
    run_p.add_argument("--jobs", type=int, help="parallel worker processes")
    run_p.add_argument("--plots", action="store_true", default=None, help="also write convergence.svg")

    agg_p = sub.add_parser("aggregate", help="recompute aggregate.csv from per-seed traces")
    agg_p.add_argument("directory", type=Path)
    agg_p.add_argument("--out", type=Path)
    agg_p.add_argument("--plots", action="store_true")

    val_p = sub.add_parser("validate-config", help="check an INI config file and print the resolved settings")
    val_p.add_argument("config", type=Path)
    return parser


def _resolve(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    overrides = {
        name: getattr(args, name)
        for name in _EXPERIMENT_FIELDS
        if getattr(args, name, None) is not None
    }
    return dataclasses.replace(config, **overrides).validate()


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "validate-config":
            config = load_config(args.config).validate()
            print(config)
            return EXIT_OK
        if args.command == "run":
            config = _resolve(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "run":
            files = run_experiment(config)
            for path in files.values():
                print(path)
        else:
            out = aggregate_directory(args.directory, args.out)
            print(out)
            if args.plots:
                print(plot_aggregate(out, out.with_suffix(".svg")))
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime exit code
        logging.getLogger(__name__).debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
