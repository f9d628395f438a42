"""Syscall allow-list policies: monotone growth, deny-list, export, logging.

A policy value is immutable; :func:`extend` returns a new value with the
epoch bumped by one. This mirrors the enforcement reality that an installed
seccomp filter cannot change while a container instance runs, so every
policy change implies a container restart.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .catalog import validate_syscall_name
from .errors import DeniedSyscall, ParseError, ReplayError

LOG_SOURCES = ("oracle", "pretrain")

#: defaultAction values accepted by export_seccomp.
SECCOMP_ACTIONS = {
    "kill_process": "SCMP_ACT_KILL_PROCESS",
    "errno": "SCMP_ACT_ERRNO",
}


@dataclass(frozen=True)
class SyscallPolicy:
    epoch: int = 0
    allow: frozenset[str] = field(default_factory=frozenset)
    deny: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if self.epoch < 0:
            raise ValueError("epoch must be non-negative")
        overlap = self.allow & self.deny
        if overlap:
            raise ValueError("allow and deny overlap: " + ", ".join(sorted(overlap)))

    def allows(self, syscall: str) -> bool:
        return syscall in self.allow

    def size(self) -> int:
        """Policy size metric: number of allowed syscalls (deny not counted)."""
        return len(self.allow)


@dataclass(frozen=True)
class PolicyLogEntry:
    """One learned extension: which syscalls entered the policy, and when."""

    epoch: int
    added: tuple[str, ...]
    source: str
    timestamp_ms: float = 0.0

    def __post_init__(self):
        if not self.added:
            raise ValueError("log entry must add at least one syscall")
        if tuple(sorted(self.added)) != self.added:
            raise ValueError("added syscalls must be sorted")
        if self.source not in LOG_SOURCES:
            raise ValueError(f"unknown log source: {self.source!r}")


@dataclass(frozen=True)
class PolicyDiff:
    only_a: frozenset[str]
    only_b: frozenset[str]
    both: frozenset[str]


def new_policy(deny: Iterable[str] = ()) -> SyscallPolicy:
    """Fresh policy: empty allow-list, epoch 0, permanent deny-list as given."""
    deny = frozenset(validate_syscall_name(s) for s in deny)
    return SyscallPolicy(epoch=0, allow=frozenset(), deny=deny)


def allows(policy: SyscallPolicy, syscall: str) -> bool:
    return policy.allows(syscall)


def extend(
    policy: SyscallPolicy,
    new: Iterable[str],
    source: str = "oracle",
    timestamp_ms: float = 0.0,
) -> tuple[SyscallPolicy, PolicyLogEntry | None]:
    """Grow the allow-list by the genuinely new syscalls in ``new``.

    Idempotent: if every syscall is already allowed the policy is returned
    unchanged with no log entry. Raises :class:`DeniedSyscall` (leaving the
    policy untouched) if any requested syscall is on the deny-list.
    """
    new = frozenset(validate_syscall_name(s) for s in new)
    denied = new & policy.deny
    if denied:
        raise DeniedSyscall(denied)
    fresh = new - policy.allow
    if not fresh:
        return policy, None
    grown = SyscallPolicy(
        epoch=policy.epoch + 1,
        allow=policy.allow | fresh,
        deny=policy.deny,
    )
    entry = PolicyLogEntry(
        epoch=grown.epoch,
        added=tuple(sorted(fresh)),
        source=source,
        timestamp_ms=timestamp_ms,
    )
    return grown, entry


def diff(a: SyscallPolicy, b: SyscallPolicy) -> PolicyDiff:
    """Partition the two allow-lists into only-a, only-b and shared."""
    return PolicyDiff(
        only_a=a.allow - b.allow,
        only_b=b.allow - a.allow,
        both=a.allow & b.allow,
    )


def export_seccomp(policy: SyscallPolicy, default_action: str = "kill_process") -> bytes:
    """Render the policy as an OCI-style seccomp profile.

    The output is bit-exact for a given policy: names sorted, fixed key
    order, compact separators, single line, no trailing newline.
    """
    try:
        action = SECCOMP_ACTIONS[default_action]
    except KeyError:
        raise ValueError(f"unknown default action: {default_action!r}") from None
    profile = {
        "defaultAction": action,
        "architectures": ["SCMP_ARCH_X86_64"],
        "syscalls": (
            [{"names": sorted(policy.allow), "action": "SCMP_ACT_ALLOW"}]
            if policy.allow
            else []
        ),
    }
    return json.dumps(profile, separators=(",", ":")).encode("utf-8")


def log_entry_to_json(entry: PolicyLogEntry) -> str:
    obj = {
        "epoch": entry.epoch,
        "added": list(entry.added),
        "source": entry.source,
        "timestamp_ms": entry.timestamp_ms,
    }
    return json.dumps(obj, separators=(",", ":"))


def save_log(entries: Iterable[PolicyLogEntry], path: str | Path) -> None:
    """Write a policy log as JSON-lines; kept outside any runtime state."""
    lines = [log_entry_to_json(e) for e in entries]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")


def load_log(path: str | Path) -> list[PolicyLogEntry]:
    entries: list[PolicyLogEntry] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            entry = PolicyLogEntry(
                epoch=int(obj["epoch"]),
                added=tuple(obj["added"]),
                source=obj["source"],
                timestamp_ms=float(obj["timestamp_ms"]),
            )
        except (ValueError, KeyError, TypeError) as exc:
            raise ParseError(f"policy log line {lineno}: {exc}") from exc
        entries.append(entry)
    epochs = [e.epoch for e in entries]
    if any(b <= a for a, b in zip(epochs, epochs[1:])):
        raise ReplayError(f"log epochs not strictly increasing: {epochs}")
    return entries


def replay_log(entries: Iterable[PolicyLogEntry], deny: Iterable[str] = ()) -> SyscallPolicy:
    """Reconstruct the final policy by folding a log over a fresh policy."""
    policy = new_policy(deny)
    for entry in entries:
        readded = set(entry.added) & policy.allow
        if readded:
            raise ReplayError(
                f"epoch {entry.epoch} re-adds allowed syscalls: " + ", ".join(sorted(readded))
            )
        try:
            policy, produced = extend(policy, entry.added, entry.source, entry.timestamp_ms)
        except DeniedSyscall as exc:
            raise ReplayError(f"epoch {entry.epoch} adds denied syscalls: {exc}") from exc
        if produced is None or produced.epoch != entry.epoch:
            raise ReplayError(
                f"epoch mismatch during replay: log says {entry.epoch}, "
                f"replay produced {produced.epoch if produced else policy.epoch}"
            )
    return policy
