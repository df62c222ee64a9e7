"""Stage-by-stage pipeline; every stage reads and writes artifacts in the output directory."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import date, timedelta
from pathlib import Path

from . import local as local_mod
from .errors import CalibrationError, ConfigError, DataError
from .ingest import DEFAULT_ATTRIBUTE_ORDER, PayloadItem, ProcessEvent, event_from_record, ingest, validate_attribute_order
from .scoring import ScoringParams, score_corpus
from .synth import evaluate, read_jsonl, write_jsonl
from .thresholding import GRAM_KINDS, MODEL_TAGS, ScoreStore, ThresholdModel, classify, recalibrate, severity_counts
from .tokenizer import CorpusModel, build_corpus_model, tokenize
from .verdicts import SeverityRecord, class_counts, finalize

logger = logging.getLogger(__name__)

EVENTS = "events.jsonl"
PAYLOADS = "payloads.jsonl"
INGEST_SUMMARY = "ingest.json"
SCORES = "scores.jsonl"
THRESHOLDS = "thresholds.json"
SEVERITIES = "severities.jsonl"
SCORE_STORE = "score_store.jsonl"
STATS = "stats.csv"
LOCAL = "local.jsonl"
VERDICTS = "verdicts.jsonl"
SUMMARY = "summary.json"
METRICS = "metrics.json"
FIGURES = "figures"


@dataclass
class RunConfig:
    input: str = ""
    input_format: str = "jsonl"
    output_dir: str = "scade-out"
    attribute_order: tuple[str, ...] = DEFAULT_ATTRIBUTE_ORDER
    gram_modes: tuple[str, ...] = GRAM_KINDS
    k: float = 1.5
    b: float = 0.75
    window_days: int = 2
    history_days: int = 5
    n_trees: int = 100
    subsample: int = 256
    contamination: float = 0.0175
    seed: int = 0
    local_training: str = "baseline"
    feature_transform: str = "log1p"
    cross_field_pairs: bool = False
    include_bp: bool = True
    run_date: str = ""
    score_store: str = ""
    truth: str = ""
    threads: int = 1
    figures: bool = True

    def validate(self, need_input: bool = True) -> "RunConfig":
        if need_input:
            if not self.input:
                raise ConfigError("no input log given")
            if not Path(self.input).is_file():
                raise ConfigError(f"input log {self.input} does not exist")
        if self.input_format not in ("jsonl", "csv"):
            raise ConfigError(f"input_format must be jsonl or csv, got {self.input_format!r}")
        try:
            validate_attribute_order(self.attribute_order)
        except DataError as exc:
            raise ConfigError(str(exc)) from exc
        if not self.gram_modes or any(g not in GRAM_KINDS for g in self.gram_modes):
            raise ConfigError(f"gram_modes must be a non-empty subset of {GRAM_KINDS}")
        self.scoring_params()
        if self.window_days < 1 or self.history_days < 1:
            raise ConfigError("window_days and history_days must be >= 1")
        if self.n_trees < 1 or self.subsample < 2:
            raise ConfigError("n_trees must be >= 1 and subsample >= 2")
        if not 0 < self.contamination < 0.5:
            raise ConfigError("contamination must lie in (0, 0.5)")
        if self.local_training not in ("flagged", "baseline"):
            raise ConfigError("local_training must be 'flagged' or 'baseline'")
        if self.feature_transform not in ("log1p", "raw"):
            raise ConfigError("feature_transform must be 'log1p' or 'raw'")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.run_date:
            try:
                date.fromisoformat(self.run_date)
            except ValueError as exc:
                raise ConfigError(f"run_date {self.run_date!r} is not YYYY-MM-DD") from exc
        for name in ("score_store", "truth"):
            path = getattr(self, name)
            if path and not Path(path).is_file():
                raise ConfigError(f"{name} file {path} does not exist")
        return self

    def scoring_params(self) -> ScoringParams:
        return ScoringParams(self.k, self.b)

    def local_params(self) -> local_mod.LocalParams:
        return local_mod.LocalParams(
            history_days=self.history_days,
            n_trees=self.n_trees,
            subsample=self.subsample,
            contamination=self.contamination,
            seed=self.seed,
            transform=self.feature_transform,
            training=self.local_training,
            threads=self.threads,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["attribute_order"] = list(self.attribute_order)
        d["gram_modes"] = list(self.gram_modes)
        return d

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def _out(cfg: RunConfig, name: str) -> Path:
    return Path(cfg.output_dir) / name


def _dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_json(path: Path):
    if not path.is_file():
        raise DataError(f"missing artifact {path}; run the earlier stage first")
    return json.loads(path.read_text())


def _read_artifact(path: Path) -> list[dict]:
    if not path.is_file():
        raise DataError(f"missing artifact {path}; run the earlier stage first")
    return read_jsonl(path)


def run_ingest(cfg: RunConfig) -> dict:
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    events, payloads, skipped = ingest(cfg.input, cfg.input_format, cfg.attribute_order, threads=cfg.threads)
    if not events:
        raise DataError("no process-creation events in the input", stage="ingest")
    refs = [ev.ref for ev in events]
    if len(set(refs)) != len(refs):
        raise DataError("duplicate record ids in the input", stage="ingest")
    write_jsonl((ev.to_record() for ev in events), _out(cfg, EVENTS))
    write_jsonl(
        ({"event_ref": p.event_ref, "day": p.day.isoformat(), "text": p.text, "parts": list(p.parts)} for p in payloads),
        _out(cfg, PAYLOADS),
    )
    run_date = date.fromisoformat(cfg.run_date) if cfg.run_date else max(p.day for p in payloads)
    summary = {
        "events": len(events),
        "skipped_records": skipped,
        "first_day": min(p.day for p in payloads).isoformat(),
        "last_day": max(p.day for p in payloads).isoformat(),
        "run_date": run_date.isoformat(),
    }
    _dump_json(summary, _out(cfg, INGEST_SUMMARY))
    logger.info("ingest: %d process-creation events, %d skipped records", len(events), skipped)
    return summary


def load_payloads(cfg: RunConfig) -> list[PayloadItem]:
    return [
        PayloadItem(r["event_ref"], r["text"], date.fromisoformat(r["day"]), tuple(r["parts"]))
        for r in _read_artifact(_out(cfg, PAYLOADS))
    ]


def load_events(cfg: RunConfig) -> list[ProcessEvent]:
    return [event_from_record(r, r["record_id"]) for r in _read_artifact(_out(cfg, EVENTS))]


def _run_date(cfg: RunConfig) -> date:
    return date.fromisoformat(_load_json(_out(cfg, INGEST_SUMMARY))["run_date"])


def window_start(run_date: date, days: int) -> date:
    return run_date - timedelta(days=days - 1)


def run_score(cfg: RunConfig) -> dict:
    """Score the payloads of the trailing ``window_days`` window, one corpus model per gram mode."""
    run_date = _run_date(cfg)
    start = window_start(run_date, cfg.window_days)
    window = [p for p in load_payloads(cfg) if start <= p.day <= run_date]
    if not window:
        raise DataError(f"no payloads between {start} and {run_date}", stage="score")
    models_dir = _out(cfg, "models")
    models_dir.mkdir(exist_ok=True)
    params = cfg.scoring_params()
    rows = []
    for mode in cfg.gram_modes:
        docs = [tokenize(p, mode, cfg.cross_field_pairs) for p in window]
        model = build_corpus_model(docs)
        model.save(models_dir / f"corpus_{mode}.json")
        for rec in score_corpus(docs, model, params, mode, days=[p.day for p in window]):
            rows.append(
                {
                    "event_ref": rec.event_ref,
                    "day": rec.day.isoformat(),
                    "gram_mode": mode,
                    "bm25_score": rec.bm25_score,
                    "log_entropy_score": rec.log_entropy_score,
                    "top_attributions": [list(a) for a in rec.top_attributions(10)],
                }
            )
        logger.info("score[%s]: %d docs, vocabulary %d", mode, model.doc_count, len(model))
    write_jsonl(rows, _out(cfg, SCORES))
    return {"scored": len(window), "window_start": start.isoformat(), "run_date": run_date.isoformat()}


def run_threshold(cfg: RunConfig) -> dict:
    run_date = _run_date(cfg)
    scores = _read_artifact(_out(cfg, SCORES))
    store = ScoreStore.load(cfg.score_store) if cfg.score_store else ScoreStore()
    current = ScoreStore()
    per_payload: dict[str, dict] = {}
    for r in scores:
        d = date.fromisoformat(r["day"])
        entry = per_payload.setdefault(r["event_ref"], {"day": d, "scores": {}, "attr": []})
        for kind, key in (("bm25", "bm25_score"), ("log_entropy", "log_entropy_score")):
            tag = f"{kind}:{r['gram_mode']}"
            current.add(d, tag, r["event_ref"], r[key])
            entry["scores"][tag] = r[key]
        entry["attr"].extend((a[0], a[1], a[2]) for a in r["top_attributions"])
    store.extend(current)

    tags = [t for t in MODEL_TAGS if t.split(":")[1] in cfg.gram_modes]
    models: dict[str, ThresholdModel] = {}
    for tag in tags:
        try:
            models[tag] = recalibrate(store, run_date, cfg.window_days, tag)
        except CalibrationError as exc:
            raise CalibrationError(str(exc), stage="threshold") from exc

    records = []
    for ref, entry in per_payload.items():
        sev = {t: classify(entry["scores"][t], models[t]) for t in tags}
        attr = sorted(entry["attr"], key=lambda a: (-(a[1] + a[2]), a[0]))[:10]
        records.append(
            SeverityRecord(
                ref,
                sev,
                scores={t: entry["scores"][t] for t in tags},
                z={t: models[t].z(entry["scores"][t]) for t in tags},
                top_attributions=attr,
                day=entry["day"],
            )
        )
    write_jsonl((r.to_dict() for r in records), _out(cfg, SEVERITIES))
    store.save(_out(cfg, SCORE_STORE))
    report = {
        "run_date": run_date.isoformat(),
        "window_days": cfg.window_days,
        "models": {
            tag: dict(m.to_dict(), counts=severity_counts(current.window(tag, run_date, cfg.window_days), m))
            for tag, m in models.items()
        },
    }
    _dump_json(report, _out(cfg, THRESHOLDS))
    return report


def load_severities(cfg: RunConfig) -> list[SeverityRecord]:
    return [SeverityRecord.from_dict(r) for r in _read_artifact(_out(cfg, SEVERITIES))]


def run_localize(cfg: RunConfig) -> dict:
    run_date = _run_date(cfg)
    records = load_severities(cfg)
    flagged = [r.event_ref for r in records if r.flagged]
    store = local_mod.EventStore(load_events(cfg))
    results, rows, model = local_mod.analyze(flagged, store, run_date, cfg.local_params())
    local_mod.write_stats_csv(rows, _out(cfg, STATS))
    write_jsonl((results[ref].to_dict() for ref in flagged), _out(cfg, LOCAL))
    info = {
        "flagged": len(flagged),
        "abstained": model is None and bool(flagged),
        "cutoff": None if model is None else model.cutoff_,
        "training_rows": 0 if model is None else len(model.training_scores_),
    }
    _dump_json(info, _out(cfg, "local.json"))
    logger.info("localize: %d flagged payloads", len(flagged))
    return info


def run_report(cfg: RunConfig) -> dict:
    """Final verdicts, run summary and (optionally) figures and metrics."""
    records = load_severities(cfg)
    local_results = local_mod.results_from_records(_read_artifact(_out(cfg, LOCAL)))
    verdicts = finalize(records, local_results, include_bp=cfg.include_bp)
    write_jsonl((v.to_record() for v in verdicts), _out(cfg, VERDICTS))
    thresholds = _load_json(_out(cfg, THRESHOLDS))
    local_info = _load_json(_out(cfg, "local.json"))
    summary = {
        "run_date": thresholds["run_date"],
        "payloads": len(records),
        "flagged": sum(r.flagged for r in records),
        "classes": class_counts(verdicts),
        "low_confidence": sum(v.confidence == "low" for v in verdicts),
        "thresholds": {
            tag: {k: m[k] for k in ("mean", "std", "n", "degenerate", "counts")} for tag, m in thresholds["models"].items()
        },
        "local": local_info,
    }
    if cfg.truth:
        metrics = evaluate([v.to_record() for v in verdicts], read_jsonl(cfg.truth))
        summary["metrics"] = metrics.to_dict()
        _dump_json(metrics.to_dict(), _out(cfg, METRICS))
    _dump_json(summary, _out(cfg, SUMMARY))
    if cfg.figures:
        from .plotting import render_report

        render_report(cfg.output_dir, records, verdicts, thresholds, local_results, local_info)
    return summary


STAGES = {
    "ingest": run_ingest,
    "score": run_score,
    "threshold": run_threshold,
    "localize": run_localize,
    "report": run_report,
}


def run_detect(cfg: RunConfig) -> dict:
    out = {}
    for name, stage in STAGES.items():
        t0 = time.perf_counter()
        try:
            out[name] = stage(cfg)
        except (DataError, CalibrationError) as exc:
            if exc.stage in ("data", "threshold", "internal"):
                exc.stage = name
            raise
        logger.info("stage %s done in %.2fs", name, time.perf_counter() - t0)
    return out["report"]
