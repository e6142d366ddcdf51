"""Subcommand handlers for the ``lplab`` command line.

Handlers only parse arguments and print; every behavior is a library call
(``runner.run_experiment``, ``experiment.load_config``) with the same results.
"""

import argparse
import json
import logging
import sys

from config import EXIT_CONFIG_ERROR, EXIT_HARD_FAILURE, EXIT_OK
from equivalence_lab import CORPUS_FAMILIES
from errors import ConfigInvalid, IoFailure, LabError
from experiment import SUITES, load_config
from geometry import GRID_KINDS
from multipliers import BUILTIN_PROFILES
from runner import run_experiment
from spectral_models import MODEL_TAGS, ORIGIN_CONDITIONS
from utils import REPORT_FORMATS, parse_formats, parse_p_list, parse_seed, parse_threads
from weights import WEIGHT_KINDS

logger = logging.getLogger(__name__)


def _json_print(payload) -> None:
    print(json.dumps(payload, indent=2, sort_keys=True, ensure_ascii=False))


def _config_error(exc: ConfigInvalid) -> int:
    print(f"❌ {exc}", file=sys.stderr)
    for path, message in exc.diagnostics:
        print(f"   {path}: {message}", file=sys.stderr)
    return EXIT_CONFIG_ERROR


def _cli_overrides(args) -> dict | None:
    """Validated --seed/--threads/--format/--p values, or None after printing the problem."""
    overrides = {"out_dir": args.out}
    for name, flag, parser in (("seed", "--seed", parse_seed), ("threads", "--threads", parse_threads),
                               ("formats", "--format", parse_formats), ("p", "--p", parse_p_list)):
        raw = getattr(args, name)
        if raw is None:
            overrides[name] = None
            continue
        value = parser(raw)
        if value is None:
            print(f"❌ Invalid {flag} value: {raw!r}", file=sys.stderr)
            return None
        overrides[name] = value
    return overrides


def run_command(args) -> int:
    overrides = _cli_overrides(args)
    if overrides is None:
        return EXIT_CONFIG_ERROR
    try:
        report, paths = run_experiment(args.config, **overrides)
    except ConfigInvalid as exc:
        return _config_error(exc)
    except IoFailure as exc:
        logger.error("Could not write report: %s", exc)
        return EXIT_HARD_FAILURE
    except LabError:
        logger.exception("Experiment %s aborted", args.config)
        return EXIT_HARD_FAILURE

    for name, suite in report.suites.items():
        marker = {"pass": "✅", "flag": "⚠️", "skip": "⏭️"}.get(suite.status, "❌")
        print(f"{marker} {name}: {suite.status} ({len(suite.checks)} checks)")
    for path in paths:
        print(f"📄 {path}")
    if report.hard_failures:
        print(f"❌ Hard failures: {', '.join(report.hard_failures)}", file=sys.stderr)
        return EXIT_HARD_FAILURE
    return EXIT_OK


def validate_command(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigInvalid as exc:
        return _config_error(exc)
    print(f"✅ {args.config} is valid")
    _json_print({
        "models": [axis.model for axis in cfg.axes],
        "sizes": [axis.size for axis in cfg.axes],
        "profiles": [p.tag for p in cfg.profiles],
        "suites": list(cfg.checks),
        "seed": cfg.corpus.seed,
    })
    return EXIT_OK


def list_builtins_command(args) -> int:
    _json_print({
        "profiles": BUILTIN_PROFILES,
        "models": list(MODEL_TAGS),
        "grids": list(GRID_KINDS),
        "origin_conditions": list(ORIGIN_CONDITIONS),
        "weights": list(WEIGHT_KINDS),
        "corpus_families": list(CORPUS_FAMILIES),
        "suites": list(SUITES),
        "report_formats": list(REPORT_FORMATS),
    })
    return EXIT_OK


def register_handlers(subparsers: argparse._SubParsersAction) -> None:
    """Attach every subcommand to the parser."""
    run = subparsers.add_parser("run", help="Run the suites enabled in an experiment config")
    run.add_argument("--config", required=True, help="Path to the JSON experiment config")
    run.add_argument("--out", default=None, help="Output directory (overrides output.dir)")
    run.add_argument("--format", dest="formats", default=None,
                     help=f"Comma-separated subset of {','.join(REPORT_FORMATS)}")
    run.add_argument("--threads", default=None, help="Worker threads for entry and slab parallelism")
    run.add_argument("--seed", default=None, help="Corpus seed (overrides corpus.seed)")
    run.add_argument("--p", default=None, help="Comma-separated exponents p (overrides exponents.p)")
    run.set_defaults(handler=run_command)

    validate = subparsers.add_parser("validate", help="Check an experiment config without running it")
    validate.add_argument("--config", required=True, help="Path to the JSON experiment config")
    validate.set_defaults(handler=validate_command)

    builtins = subparsers.add_parser("list-builtins", help="List built-in profiles, models, weights and suites")
    builtins.set_defaults(handler=list_builtins_command)
