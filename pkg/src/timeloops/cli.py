"""Operator-facing command line: sessions, diffs, exports, claim checks.

Exit codes are a stable contract: 0 success, 1 usage or configuration
problem, 2 malformed input data. ``verify-paper`` additionally exits 1
when any claim fails, so CI can gate on it.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from pathlib import Path

from . import analysis, catalog, workload
from .controller import ControllerConfig, run_session
from .errors import (
    AttemptsExhausted,
    ConfigError,
    DeniedSyscall,
    EmptyMix,
    EmptyRecords,
    ExploitInPretrainSet,
    ExploitInTrainingSet,
    MissingCategory,
    ParseError,
    ReplayError,
    ScenarioError,
    UnknownColumn,
)
from .policy import SyscallPolicy, export_seccomp, save_log
from .simruntime import ServiceSpec, exploit_category, load_scenario, pick_service

# DeniedSyscall surfaces here only when a pretrain set collides with the
# deny-list, which is an operator configuration problem.
_USAGE_ERRORS = (ConfigError, DeniedSyscall, EmptyMix, ExploitInPretrainSet, ExploitInTrainingSet)
_DATA_ERRORS = (
    ParseError,
    ScenarioError,
    UnknownColumn,
    ReplayError,
    MissingCategory,
    EmptyRecords,
    FileNotFoundError,
    IsADirectoryError,
)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Usage problems are exit code 1 in this tool, not argparse's default 2.
    def error(self, message):
        raise _UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="timeloops", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run one session and write its artifacts")
    sim.add_argument("--scenario", required=True, help="scenario JSON file")
    sim.add_argument("--service", default=None, help="service name (default: first)")
    sim.add_argument("--n", type=int, default=100, help="number of logical requests")
    sim.add_argument("--seed", type=int, default=0, help="workload sampling seed")
    sim.add_argument("--mix", default=None, help="key=weight[,key=weight...] request mix")
    sim.add_argument("--mode", choices=("timeloops", "unhardened", "hardened"), default="timeloops")
    sim.add_argument("--oracle-mode", choices=("single", "watchdog"), default="single")
    sim.add_argument("--watchdog-ms", type=float, default=10_000.0)
    sim.add_argument("--deny-preset", choices=("none", "podman"), default="none")
    sim.add_argument("--pretrain", default=None, help="key[,key...] pretraining requests")
    sim.add_argument("--out", default="./out", help="output directory")
    sim.add_argument("--fixture", default=None, help="comparison-table CSV for the podman preset")

    dif = sub.add_parser("diff", help="compare two policy files")
    dif.add_argument("policy_a")
    dif.add_argument("policy_b")
    dif.add_argument("--fixture", default=None, help="comparison-table CSV for CVE annotations")

    exp = sub.add_parser("export-seccomp", help="print the seccomp profile of a policy file")
    exp.add_argument("policy")

    ver = sub.add_parser("verify-paper", help="check reference figures against the comparison table")
    ver.add_argument("--fixture", default=None, help="comparison-table CSV (default: bundled)")

    atk = sub.add_parser("attack-scenarios", help="run the four canonical attack categories")
    atk.add_argument("--scenario", required=True, help="scenario JSON with exploit handlers")
    atk.add_argument("--seed", type=int, default=0, help="warmup workload seed")
    atk.add_argument("--service", default=None, help="service name (default: first)")
    return parser


def _load_table(fixture: str | None) -> catalog.PolicyComparisonTable:
    if fixture is None:
        return catalog.load_default_fixture()
    return catalog.load_fixture(fixture)


def _parse_mix(text: str) -> dict[str, float]:
    mix: dict[str, float] = {}
    for item in text.split(","):
        if not item:
            continue
        key, sep, weight = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"malformed mix entry: {item!r} (want key=weight)")
        try:
            mix[key] = float(weight)
        except ValueError:
            raise ConfigError(f"malformed mix weight in {item!r}") from None
    if not mix:
        raise ConfigError("empty mix")
    return mix


def _default_mix(spec: ServiceSpec) -> dict[str, float]:
    benign = spec.benign_handlers()
    if not benign:
        raise ConfigError(f"service {spec.name!r} has no benign handlers")
    return {key: 1.0 for key in benign}


def _load_policy_file(path: str) -> SyscallPolicy:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    if isinstance(obj, dict) and "final_policy" in obj:
        obj = obj["final_policy"]
    if not isinstance(obj, dict) or "allow" not in obj:
        raise ParseError(f"{path}: expected an object with an 'allow' list")
    try:
        allow = frozenset(catalog.validate_syscall_name(s) for s in obj["allow"])
        deny = frozenset(catalog.validate_syscall_name(s) for s in obj.get("deny", ()))
        return SyscallPolicy(epoch=int(obj.get("epoch", 0)), allow=allow, deny=deny)
    except (TypeError, ValueError) as exc:
        raise ParseError(f"{path}: {exc}") from exc


def cmd_simulate(args) -> int:
    specs = load_scenario(args.scenario)
    spec = pick_service(specs, args.service)
    deny = frozenset()
    if args.deny_preset == "podman":
        deny = catalog.podman_default_deny(_load_table(args.fixture))
    pretrain_keys = tuple(k for k in args.pretrain.split(",") if k) if args.pretrain else ()
    config = ControllerConfig(
        oracle_mode="until_watchdog" if args.oracle_mode == "watchdog" else "single_request",
        watchdog_ms=args.watchdog_ms,
        deny=deny,
        pretrain_requests=pretrain_keys,
    )
    mix = _parse_mix(args.mix) if args.mix else _default_mix(spec)
    requests = workload.generate_workload(spec, args.n, args.seed, mix)
    result = run_session(spec, requests, config, mode=args.mode)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    workload.write_latency_csv(result.latency_records, out / "latency.csv")
    workload.write_cumulative_csv(result.latency_records, out / "cumulative.csv")
    (out / "session.json").write_text(result.to_json() + "\n", encoding="utf-8")
    save_log(result.policy_log, out / "policy.log")
    (out / "profile.json").write_bytes(export_seccomp(result.final_policy))

    served = [r for r in result.latency_records if r.outcome == "served"]
    print(f"mode={args.mode} service={spec.name} requests={len(requests)} "
          f"consultations={result.consultations} alerts={len(result.alerts)} "
          f"policy_size={result.final_policy.size()} epoch={result.final_policy.epoch}")
    if served:
        stats = workload.summarize(served)
        print(f"served={len(served)} mean={stats.mean:.3f}ms p50={stats.p50:.3f}ms "
              f"p99={stats.p99:.3f}ms max={stats.max:.3f}ms")
    print(f"artifacts written to {out}")
    return 0


def cmd_diff(args) -> int:
    a = _load_policy_file(args.policy_a)
    b = _load_policy_file(args.policy_b)
    table = _load_table(args.fixture)
    report = analysis.compare([("A", a), ("B", b)], table=table)
    sys.stdout.write(report.to_text())
    return 0


def cmd_export_seccomp(args) -> int:
    policy = _load_policy_file(args.policy)
    sys.stdout.buffer.write(export_seccomp(policy))
    sys.stdout.buffer.flush()
    return 0


def cmd_verify_paper(args) -> int:
    table = _load_table(args.fixture)
    report = analysis.verify_paper_claims(table)
    sys.stdout.write(report.to_text())
    return 0 if report.all_pass else 1


# --- attack-scenario harness ---------------------------------------------------

@dataclass(frozen=True)
class CategoryVerdict:
    category: int
    key: str
    deny: tuple[str, ...]
    probe_outcome: str
    alerts: int
    exploit_syscalls_learned: tuple[str, ...]
    exploit_sourced_entries: int
    confined: bool
    as_expected: bool


def _pick_exploits(spec: ServiceSpec) -> dict[int, str]:
    by_category: dict[int, str] = {}
    for key in sorted(spec.handlers):
        if spec.handlers[key].exploit is None:
            continue
        cat = exploit_category(spec, key)
        by_category.setdefault(cat, key)
    missing = [c for c in (1, 2, 3, 4) if c not in by_category]
    if missing:
        raise MissingCategory(
            "scenario lacks exploits for categories: " + ", ".join(str(c) for c in missing)
        )
    return by_category


def _run_probe(spec: ServiceSpec, seed: int, key: str, deny: frozenset[str]) -> CategoryVerdict:
    warmup = workload.generate_workload(spec, 8, seed, _default_mix(spec))
    probe = workload.Request(logical_id=len(warmup), key=key)
    config = ControllerConfig(deny=deny)
    # Control run without the probe isolates what the exploit itself taught
    # the policy; injected syscalls alone cannot tell for categories 2 and 3,
    # whose injections deliberately stay inside the benign set.
    control = run_session(spec, warmup, config)
    result = run_session(spec, warmup + [probe], config)

    injected = set(spec.handlers[key].exploit.injected)
    learned = tuple(sorted(injected & (result.final_policy.allow - control.final_policy.allow)))
    probe_entries = len(result.policy_log) - len(control.policy_log)
    record = result.latency_records[-1]
    effective = set(spec.handlers[key].effective_trace())
    confined = effective <= result.final_policy.allow
    category = exploit_category(spec, key)

    if category == 1 or (deny and category == 4):
        expected = (record.outcome == "rejected_malicious" and len(result.alerts) == 1
                    and probe_entries == 0 and not learned)
    elif category in (2, 3):
        expected = (record.outcome == "served" and not result.alerts
                    and probe_entries == 0 and confined
                    and result.final_policy.allow == control.final_policy.allow)
    else:  # category 4 without a deny-list: the documented weakness
        expected = (record.outcome == "served" and not result.alerts and probe_entries >= 1
                    and injected <= result.final_policy.allow)
    return CategoryVerdict(
        category=category,
        key=key,
        deny=tuple(sorted(deny)),
        probe_outcome=record.outcome,
        alerts=len(result.alerts),
        exploit_syscalls_learned=learned,
        exploit_sourced_entries=probe_entries,
        confined=confined,
        as_expected=expected,
    )


def run_attack_scenarios(spec: ServiceSpec, seed: int = 0) -> list[CategoryVerdict]:
    """Run one probe per attack category, plus the deny-list variant of
    category 4, each against a fresh session warmed up with benign traffic."""
    by_category = _pick_exploits(spec)
    verdicts = []
    for category in (1, 2, 3):
        verdicts.append(_run_probe(spec, seed, by_category[category], frozenset()))
    cat4_key = by_category[4]
    verdicts.append(_run_probe(spec, seed, cat4_key, frozenset()))
    cat4_deny = frozenset(spec.handlers[cat4_key].exploit.injected)
    verdicts.append(_run_probe(spec, seed, cat4_key, cat4_deny))
    return verdicts


def _verdict_line(v: CategoryVerdict) -> str:
    label = f"cat{v.category}"
    if v.category == 4:
        label += " (deny-list)" if v.deny else " (no deny-list)"
    if v.category == 1 or (v.category == 4 and v.deny):
        body = f"blocked, {v.alerts} alert(s), {v.exploit_sourced_entries} policy updates from exploit"
    elif v.category in (2, 3):
        body = f"confined, {v.alerts} alert(s), 0 policy growth, injected syscalls within allow-set"
    else:
        body = (f"WEAKNESS: policy grew, learned exploit syscalls "
                f"{', '.join(v.exploit_syscalls_learned) or '(none)'}")
    status = "ok" if v.as_expected else "UNEXPECTED"
    return f"{label} [{v.key}]: {body} [{status}]"


def cmd_attack_scenarios(args) -> int:
    specs = load_scenario(args.scenario)
    spec = pick_service(specs, args.service)
    verdicts = run_attack_scenarios(spec, args.seed)
    for v in verdicts:
        print(_verdict_line(v))
    return 0 if all(v.as_expected for v in verdicts) else 1


_COMMANDS = {
    "simulate": cmd_simulate,
    "diff": cmd_diff,
    "export-seccomp": cmd_export_seccomp,
    "verify-paper": cmd_verify_paper,
    "attack-scenarios": cmd_attack_scenarios,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except _USAGE_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except _DATA_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 2
    except AttemptsExhausted as exc:
        print(f"session did not converge: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
