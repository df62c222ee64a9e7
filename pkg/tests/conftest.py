import json
from datetime import datetime, timezone

import pytest

from scade.ingest import ProcessEvent


def make_event(ref="e1", ts="2026-03-02T10:00:00Z", event_id=4688, **kw):
    fields = dict(
        account_name="admin",
        account_domain="corp",
        device_id="ws-001",
        parent_process_name="cmd.exe",
        process_name="c:\\windows\\system32\\whoami.exe",
        command_line="whoami.exe",
        file_path="c:\\windows\\system32\\whoami.exe",
    )
    fields.update(kw)
    when = datetime.fromisoformat(ts.replace("Z", "+00:00")).astimezone(timezone.utc)
    return ProcessEvent(timestamp=when, event_id=event_id, ref=ref, **fields)


def record(**kw):
    rec = {
        "timestamp": "2026-03-02T10:00:00Z",
        "event_id": 4688,
        "account_name": "admin",
        "account_domain": "corp",
        "device_id": "ws-001",
        "parent_process_name": "cmd.exe",
        "process_name": "whoami.exe",
        "command_line": "whoami.exe",
        "file_path": "c:\\windows\\system32\\whoami.exe",
    }
    rec.update(kw)
    return rec


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


@pytest.fixture
def event_factory():
    return make_event


def small_scenario():
    """An 8-asset week with two drill attacks; small enough for per-test runs."""
    from scade.synth import AttackTemplate, DEFAULT_SCHEDULED, WorkloadSpec

    spec = WorkloadSpec(
        n_assets=8,
        n_users=6,
        cmds_per_asset_day=60,
        scheduled_commands=[s for s in DEFAULT_SCHEDULED if s.asset < 8 and s.user < 6],
        noise_fraction=0.01,
        seed=3,
    )
    attacks = [AttackTemplate("rare-binary", 6, 2), AttackTemplate("unexpected-parent", 5, 7, variant=1)]
    return spec, attacks


@pytest.fixture(scope="session")
def small_log(tmp_path_factory):
    from scade.synth import simulate, write_jsonl

    root = tmp_path_factory.mktemp("small")
    spec, attacks = small_scenario()
    log, truth = simulate(spec, attacks)
    write_jsonl(log, root / "events.jsonl")
    write_jsonl(truth, root / "truth.jsonl")
    return root / "events.jsonl", root / "truth.jsonl"


def pytest_configure(config):
    from pathlib import Path

    pytest.golden_dir = Path(__file__).parent / "golden"


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
