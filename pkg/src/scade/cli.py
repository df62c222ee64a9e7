"""Command-line entry point.

Every run option can come from, in increasing precedence: built-in defaults,
an INI config file (``--config``), ``SCADE_<OPTION>`` environment variables,
and command-line flags.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

from . import __version__, pipeline
from .errors import ConfigError, ScadeError
from .pipeline import RunConfig
from .synth import AttackTemplate, WorkloadSpec, default_scenario, drill_attacks, evaluate, read_jsonl, simulate, write_jsonl

logger = logging.getLogger("scade")

ENV_PREFIX = "SCADE_"

HELP = {
    "input": "event log to analyse",
    "input_format": "jsonl or csv",
    "output_dir": "directory for stage artifacts",
    "attribute_order": "comma-separated payload attributes",
    "gram_modes": "comma-separated subset of unigram,bigram",
    "k": "BM25 term-frequency saturation",
    "b": "BM25 length normalisation",
    "window_days": "days of scores used for the corpus and thresholds",
    "history_days": "days of execution history for the local check",
    "n_trees": "isolation trees",
    "subsample": "rows per isolation tree",
    "contamination": "fraction of training units treated as outliers",
    "seed": "isolation forest seed",
    "local_training": "flagged or baseline",
    "feature_transform": "log1p or raw",
    "cross_field_pairs": "add bigrams spanning adjacent attributes",
    "include_bp": "keep BenignPositive verdicts in the report",
    "run_date": "YYYY-MM-DD; defaults to the last day in the log",
    "score_store": "score history from earlier runs (JSONL)",
    "truth": "ground truth for metrics (JSONL)",
    "threads": "worker threads",
    "figures": "render PNG figures in the report stage",
}

STAGE_COMMANDS = ("ingest", "score", "threshold", "localize", "report", "detect")


def _field_types() -> dict[str, type]:
    defaults = RunConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(RunConfig)}


def _coerce(name: str, value):
    """Turn a string from a file, env var or flag into the RunConfig field type."""
    kind = _field_types()[name]
    if not isinstance(value, str):
        return value
    try:
        if kind is bool:
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if kind is tuple:
            return tuple(v.strip() for v in value.split(",") if v.strip())
        return kind(value.strip()) if kind is not str else value
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {value!r}") from exc


def read_config_file(path: str | Path) -> dict:
    """Flatten every section of an INI file into one option dict."""
    if not Path(path).is_file():
        raise ConfigError(f"config file {path} does not exist")
    parser = configparser.ConfigParser()
    try:
        parser.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    known = set(_field_types())
    out = {}
    for section in parser.sections():
        for key, value in parser.items(section):
            name = key.replace("-", "_")
            if name not in known:
                raise ConfigError(f"unknown option {key!r} in [{section}] of {path}")
            out[name] = _coerce(name, value)
    return out


def read_env(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name in _field_types():
        key = ENV_PREFIX + name.upper()
        if key in environ:
            out[name] = _coerce(name, environ[key])
    return out


def resolve_config(flags: dict, config_path: str | None = None, environ=None) -> RunConfig:
    values = {}
    if config_path:
        values.update(read_config_file(config_path))
    values.update(read_env(environ))
    values.update({k: _coerce(k, v) for k, v in flags.items() if v is not None})
    return RunConfig(**values)


def _add_run_options(p: argparse.ArgumentParser) -> None:
    for name, kind in _field_types().items():
        flag = "--" + name.replace("_", "-")
        if kind is bool:
            p.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction, default=None, help=HELP[name])
        else:
            p.add_argument(flag, dest=name, default=None, help=HELP[name])
    p.add_argument("--dry-run", action="store_true", help="validate and print the resolved configuration, then exit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scade", description="Command-line anomaly detection over process-creation logs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="INI config file")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    descriptions = {
        "ingest": "parse the log and build payloads",
        "score": "BM25 and Log Entropy scores over the scoring window",
        "threshold": "calibrate dynamic thresholds and label severities",
        "localize": "execution statistics and the local isolation check",
        "report": "final verdicts, summary, metrics and figures",
        "detect": "run every stage in order",
    }
    for name in STAGE_COMMANDS:
        _add_run_options(sub.add_parser(name, help=descriptions[name], description=descriptions[name]))

    sim = sub.add_parser("simulate", help="generate a synthetic log with injected attacks")
    sim.add_argument("--spec", help="workload spec (JSON); defaults to the bundled scenario")
    sim.add_argument("--seed", type=int, help="override the workload seed")
    sim.add_argument("--no-attacks", action="store_true", help="baseline only")
    sim.add_argument("--out", default="events.jsonl", help="event log to write")
    sim.add_argument("--truth", default="truth.jsonl", help="ground truth to write")

    ev = sub.add_parser("evaluate", help="precision, recall and SNR of a verdict file")
    ev.add_argument("--verdicts", required=True)
    ev.add_argument("--truth", required=True)
    ev.add_argument("--out", help="write metrics JSON here as well as to stdout")
    return parser


def load_workload_spec(path: str) -> tuple[WorkloadSpec, list[AttackTemplate] | None]:
    """A JSON object with WorkloadSpec fields and an optional ``attacks`` list."""
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"workload spec file {path} does not exist") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"workload spec file {path} is not valid JSON: {exc}") from exc
    attacks = data.pop("attacks", None)
    try:
        spec = WorkloadSpec.from_dict(data)
        templates = None if attacks is None else [AttackTemplate(**a) for a in attacks]
    except TypeError as exc:
        raise ConfigError(f"bad workload spec file {path}: {exc}") from exc
    return spec, templates


def cmd_simulate(args) -> int:
    if args.spec:
        spec, attacks = load_workload_spec(args.spec)
    else:
        spec, attacks = default_scenario()
    if args.seed is not None:
        spec = WorkloadSpec.from_dict(dict(spec.to_dict(), seed=args.seed))
    if attacks is None:
        attacks = drill_attacks(spec)
    if args.no_attacks:
        attacks = []
    log, truth = simulate(spec, attacks)
    write_jsonl(log, args.out)
    write_jsonl(truth, args.truth)
    print(json.dumps({"events": len(log), "attacks": len(truth), "log": args.out, "truth": args.truth}))
    return 0


def cmd_evaluate(args) -> int:
    for path in (args.verdicts, args.truth):
        if not Path(path).is_file():
            raise ConfigError(f"{path} does not exist")
    metrics = evaluate(read_jsonl(args.verdicts), read_jsonl(args.truth)).to_dict()
    text = json.dumps(metrics, indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return 0


def cmd_stage(args) -> int:
    flags = {name: getattr(args, name) for name in _field_types()}
    cfg = resolve_config(flags, args.config)
    # only stages that read the raw log need it to exist
    cfg.validate(need_input=args.command in ("ingest", "detect"))
    if args.dry_run:
        print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
        return 0
    if args.command == "detect":
        result = pipeline.run_detect(cfg)
    else:
        Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
        result = pipeline.STAGES[args.command](cfg)
    print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "evaluate":
            return cmd_evaluate(args)
        return cmd_stage(args)
    except ScadeError as exc:
        print(f"scade: {exc.stage} error: {exc}", file=sys.stderr)
        return exc.exit_code
    except Exception as exc:  # pragma: no cover - last-resort mapping
        logger.debug("internal error", exc_info=True)
        print(f"scade: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":
    sys.exit(main())
