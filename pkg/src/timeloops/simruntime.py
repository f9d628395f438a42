"""Deterministic stand-in for containers, seccomp enforcement and the oracle.

A service is declared, not executed: each request key maps to an ordered
syscall trace, optionally annotated with an exploit. Running a request
walks that trace against a policy and reports how the simulated container
exits. All time is virtual milliseconds derived from the cost model, so
identical inputs give identical outcomes and timings.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .catalog import SYSCALL_NAME_RE
from .errors import ParseError, ScenarioError
from .policy import SyscallPolicy

EXPLOIT_KINDS = ("oracle_detectable", "oracle_undetectable")

#: Response token returned for request keys with no declared handler.
UNKNOWN_REQUEST_RESPONSE = "error:unknown-request"


def _check_names(names, what: str) -> tuple[str, ...]:
    out = []
    for name in names:
        if not isinstance(name, str) or not SYSCALL_NAME_RE.match(name):
            raise ScenarioError(f"{what}: invalid syscall name {name!r}")
        out.append(name)
    return tuple(out)


@dataclass(frozen=True)
class CostModel:
    """Virtual-time parameters for a simulated service.

    Oracle runs multiply the whole request cost by the slowdown factor,
    so oracle cost per syscall is production cost times the factor.
    """

    base_request_ms: float = 1.0
    production_per_syscall_ms: float = 1.0
    oracle_slowdown_factor: float = 3.0
    restart_ms: float = 50.0

    def __post_init__(self):
        if self.base_request_ms < 0:
            raise ScenarioError("base_request_ms must be non-negative")
        if self.production_per_syscall_ms <= 0:
            raise ScenarioError("production_per_syscall_ms must be positive")
        if self.oracle_slowdown_factor <= 1:
            raise ScenarioError("oracle_slowdown_factor must exceed 1")
        if self.restart_ms <= 0:
            raise ScenarioError("restart_ms must be positive")

    def production_elapsed(self, executed: int) -> float:
        return self.base_request_ms + self.production_per_syscall_ms * executed

    def oracle_elapsed(self, executed: int) -> float:
        return self.production_elapsed(executed) * self.oracle_slowdown_factor


@dataclass(frozen=True)
class ExploitSpec:
    """Exploit annotation on a handler.

    The corruption happens at ``corruption_index`` within the benign trace;
    from that point on control flow is hijacked and the ``injected``
    syscalls execute instead of the remainder of the trace.
    """

    kind: str
    corruption_index: int
    injected: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in EXPLOIT_KINDS:
            raise ScenarioError(f"unknown exploit kind: {self.kind!r}")
        if self.corruption_index < 0:
            raise ScenarioError("corruption_index must be non-negative")
        object.__setattr__(self, "injected", _check_names(self.injected, "exploit injection"))


@dataclass(frozen=True)
class RequestBehavior:
    trace: tuple[str, ...] = ()
    response: str = "ok"
    exploit: ExploitSpec | None = None

    def __post_init__(self):
        object.__setattr__(self, "trace", _check_names(self.trace, "handler trace"))
        if self.exploit is not None and self.exploit.corruption_index > len(self.trace):
            raise ScenarioError(
                f"corruption_index {self.exploit.corruption_index} exceeds trace length {len(self.trace)}"
            )

    def effective_trace(self) -> tuple[str, ...]:
        """The syscalls a run of this handler would actually issue."""
        if self.exploit is None:
            return self.trace
        return self.trace[: self.exploit.corruption_index] + self.exploit.injected


@dataclass(frozen=True)
class ServiceSpec:
    """A declared service: handlers, reachable-code universe, oracle extras."""

    name: str
    handlers: Mapping[str, RequestBehavior]
    static_universe: frozenset[str] = field(default_factory=frozenset)
    oracle_extra: frozenset[str] = field(default_factory=frozenset)
    cost_model: CostModel = field(default_factory=CostModel)

    def __post_init__(self):
        object.__setattr__(self, "static_universe", frozenset(_check_names(self.static_universe, "static universe")))
        object.__setattr__(self, "oracle_extra", frozenset(_check_names(self.oracle_extra, "oracle extra")))
        for key, behavior in self.handlers.items():
            injected = set(behavior.exploit.injected) if behavior.exploit else set()
            stray = set(behavior.trace) - self.static_universe - injected
            if stray:
                raise ScenarioError(
                    f"handler {key!r} uses syscalls outside the static universe: "
                    + ", ".join(sorted(stray))
                )

    def benign_handlers(self) -> dict[str, RequestBehavior]:
        return {k: b for k, b in self.handlers.items() if b.exploit is None}


# --- container exit encodings -------------------------------------------------

@dataclass(frozen=True)
class Completed:
    response: str


@dataclass(frozen=True)
class PolicyViolation:
    syscall: str
    at_index: int


@dataclass(frozen=True)
class ExploitDetected:
    report: str


@dataclass(frozen=True)
class WatchdogTimeout:
    """Oracle lifetime expired mid-run; carries syscalls observed so far."""

    observed: frozenset[str] = field(default_factory=frozenset)


@dataclass(frozen=True)
class DeniedSyscallHit:
    syscall: str


ExitReason = Completed | PolicyViolation | ExploitDetected | WatchdogTimeout | DeniedSyscallHit


@dataclass(frozen=True)
class Benign:
    observed: frozenset[str]


@dataclass(frozen=True)
class Malicious:
    report: str


OracleOutcome = Benign | Malicious | WatchdogTimeout


def run_production(
    spec: ServiceSpec, policy: SyscallPolicy, request: str
) -> tuple[ExitReason, float]:
    """Execute a request in the fast, uninstrumented service.

    The walk stops at the first syscall outside the allow-list; nothing
    past that point executes. Production performs no exploit detection,
    so a hijacked run that stays within the allow-list completes normally.
    """
    cost = spec.cost_model
    behavior = spec.handlers.get(request)
    if behavior is None:
        return Completed(UNKNOWN_REQUEST_RESPONSE), cost.production_elapsed(0)
    trace = behavior.effective_trace()
    for index, syscall in enumerate(trace):
        if not policy.allows(syscall):
            return PolicyViolation(syscall, index), cost.production_elapsed(index)
    return Completed(behavior.response), cost.production_elapsed(len(trace))


def run_oracle(
    spec: ServiceSpec,
    policy: SyscallPolicy,
    request: str,
    watchdog_ms: float = math.inf,
) -> tuple[OracleOutcome, float]:
    """Execute a request in the hardened replica.

    The oracle observes in logging mode: syscalls outside the allow-list do
    not kill the run, they are recorded, so a benign verdict reports every
    syscall the request needed plus the instrumentation's own extras. A
    detectable corruption aborts the run at the corruption point, before
    any injected syscall executes. The watchdog budget is checked between
    syscalls.
    """
    cost = spec.cost_model
    behavior = spec.handlers.get(request)
    if behavior is None:
        return Benign(frozenset(spec.oracle_extra)), cost.oracle_elapsed(0)
    exploit = behavior.exploit
    trace = behavior.effective_trace()
    detectable_at = (
        exploit.corruption_index
        if exploit is not None and exploit.kind == "oracle_detectable"
        else None
    )
    elapsed = cost.base_request_ms * cost.oracle_slowdown_factor
    per = cost.production_per_syscall_ms * cost.oracle_slowdown_factor
    observed: set[str] = set()
    for index, syscall in enumerate(trace):
        if detectable_at is not None and index == detectable_at:
            return Malicious(_corruption_report(request, detectable_at)), elapsed
        if elapsed + per > watchdog_ms:
            return WatchdogTimeout(frozenset(observed)), elapsed
        observed.add(syscall)
        elapsed += per
    if detectable_at is not None:
        # Corruption sits at the very end of the benign trace; still caught
        # before the run exits.
        return Malicious(_corruption_report(request, detectable_at)), elapsed
    return Benign(frozenset(observed) | spec.oracle_extra), elapsed


def run_unrestricted(spec: ServiceSpec, request: str) -> tuple[Completed, float]:
    """Execute a request with no filter and no instrumentation (baseline cost)."""
    cost = spec.cost_model
    behavior = spec.handlers.get(request)
    if behavior is None:
        return Completed(UNKNOWN_REQUEST_RESPONSE), cost.production_elapsed(0)
    trace = behavior.effective_trace()
    return Completed(behavior.response), cost.production_elapsed(len(trace))


def _corruption_report(request: str, index: int) -> str:
    return f"memory corruption detected in handler {request!r} at trace position {index}"


def static_universe_of(spec: ServiceSpec) -> frozenset[str]:
    """Every syscall reachable in the service's code, exercised or not."""
    return spec.static_universe


def benign_closure(spec: ServiceSpec) -> frozenset[str]:
    """Syscalls a fully exercised benign workload would teach the policy."""
    union: set[str] = set()
    for behavior in spec.benign_handlers().values():
        union.update(behavior.trace)
    return frozenset(union) | spec.oracle_extra


def exploit_category(spec: ServiceSpec, request: str) -> int:
    """Attack category 1-4 of an exploit-annotated handler.

    Categories cross detectability with whether the injection would step
    outside a fully learned benign policy: 1 = detectable and violating,
    2 = detectable within policy, 3 = undetectable within policy,
    4 = undetectable and violating.
    """
    behavior = spec.handlers.get(request)
    if behavior is None or behavior.exploit is None:
        raise ScenarioError(f"handler {request!r} carries no exploit annotation")
    closure = benign_closure(spec)
    violating = bool(set(behavior.exploit.injected) - closure)
    if behavior.exploit.kind == "oracle_detectable":
        return 1 if violating else 2
    return 4 if violating else 3


# --- scenario files -----------------------------------------------------------

def _name_array(obj, field_name: str, what: str) -> tuple:
    value = obj.get(field_name, ())
    # a bare string would be iterated character by character
    if isinstance(value, str) or not isinstance(value, (list, tuple)):
        raise ScenarioError(f"{what}: {field_name} must be an array of syscall names")
    return tuple(value)


def parse_service(obj: dict) -> ServiceSpec:
    try:
        name = obj["name"]
        handlers_obj = obj["handlers"]
    except (KeyError, TypeError) as exc:
        raise ScenarioError(f"service definition missing field: {exc}") from exc
    if not isinstance(name, str) or not name:
        raise ScenarioError("service name must be a non-empty string")
    cost_obj = obj.get("cost_model", {})
    if not isinstance(cost_obj, dict):
        raise ScenarioError("cost_model must be an object")
    cost_fields = ("base_request_ms", "production_per_syscall_ms",
                   "oracle_slowdown_factor", "restart_ms")
    unknown_cost = set(cost_obj) - set(cost_fields)
    if unknown_cost:
        raise ScenarioError("unknown cost_model fields: " + ", ".join(sorted(unknown_cost)))
    try:
        cost = CostModel(**{k: float(v) for k, v in cost_obj.items()})
    except (TypeError, ValueError) as exc:
        raise ScenarioError(f"malformed cost_model: {exc}") from exc
    handlers: dict[str, RequestBehavior] = {}
    if not isinstance(handlers_obj, dict):
        raise ScenarioError("handlers must be a map of request key to behavior")
    for key, h in handlers_obj.items():
        if not isinstance(h, dict):
            raise ScenarioError(f"handler {key!r} must be an object")
        exploit = None
        if h.get("exploit") is not None:
            e = h["exploit"]
            try:
                exploit = ExploitSpec(
                    kind=e["kind"],
                    corruption_index=int(e["corruption_index"]),
                    injected=_name_array(e, "injected", f"handler {key!r} exploit"),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ScenarioError(f"handler {key!r}: malformed exploit: {exc}") from exc
        handlers[key] = RequestBehavior(
            trace=_name_array(h, "trace", f"handler {key!r}"),
            response=str(h.get("response", "ok")),
            exploit=exploit,
        )
    return ServiceSpec(
        name=name,
        handlers=handlers,
        static_universe=frozenset(_name_array(obj, "static_universe", f"service {name!r}")),
        oracle_extra=frozenset(_name_array(obj, "oracle_extra", f"service {name!r}")),
        cost_model=cost,
    )


def load_scenario(path: str | Path) -> list[ServiceSpec]:
    """Load and validate a scenario file (one or more service definitions)."""
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"scenario {path}: {exc}") from exc
    if not isinstance(obj, dict) or "services" not in obj:
        raise ScenarioError(f"scenario {path}: top-level object must contain 'services'")
    services = obj["services"]
    if not isinstance(services, list) or not services:
        raise ScenarioError(f"scenario {path}: 'services' must be a non-empty array")
    specs = [parse_service(s) for s in services]
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ScenarioError(f"scenario {path}: duplicate service names")
    return specs


def pick_service(specs: list[ServiceSpec], name: str | None) -> ServiceSpec:
    if name is None:
        return specs[0]
    for spec in specs:
        if spec.name == name:
            return spec
    raise ScenarioError(f"no service named {name!r} in scenario")
