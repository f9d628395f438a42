"""Controller state machine and session driver.

The controller alternates two replicas of one service: a fast production
container enforcing the current allow-list, and a hardened oracle replica
consulted whenever production dies on a policy violation. A benign oracle
verdict grows the policy and restarts production; a malicious verdict
raises an alert and never touches the policy. ``step`` is the pure
transition function; ``run_session`` drives it against a workload on a
shared virtual clock.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

from . import workload as workload_mod
from .errors import (
    ConfigError,
    DeniedSyscall,
    ExploitInPretrainSet,
    IllegalTransition,
)
from .policy import PolicyLogEntry, SyscallPolicy, extend, new_policy
from .simruntime import (
    Benign,
    Completed,
    DeniedSyscallHit,
    ExitReason,
    ExploitDetected,
    Malicious,
    OracleOutcome,
    PolicyViolation,
    ServiceSpec,
    WatchdogTimeout,
    run_oracle,
    run_production,
    run_unrestricted,
)

ORACLE_MODES = ("single_request", "until_watchdog")
SESSION_MODES = ("timeloops", "unhardened", "hardened")


# --- states, events, actions --------------------------------------------------

@dataclass(frozen=True)
class ProductionRunning:
    epoch: int = 0


@dataclass(frozen=True)
class OracleRunning:
    epoch: int = 0
    # Stamped by the driver when the oracle container actually starts.
    oracle_started_ms: float = 0.0
    requests_served: int = 0


@dataclass(frozen=True)
class Halted:
    reason: str = "shutdown"


ControllerState = ProductionRunning | OracleRunning | Halted


@dataclass(frozen=True)
class ProdExited:
    reason: ExitReason


@dataclass(frozen=True)
class OracleFinished:
    outcome: OracleOutcome


@dataclass(frozen=True)
class WatchdogFired:
    pass


@dataclass(frozen=True)
class Shutdown:
    pass


ControllerEvent = ProdExited | OracleFinished | WatchdogFired | Shutdown


@dataclass(frozen=True)
class StartProduction:
    pass


@dataclass(frozen=True)
class StartOracle:
    watchdog_ms: float


@dataclass(frozen=True)
class UpdatePolicy:
    """Ensure the observed syscalls are allowed; extend() skips known ones."""

    new_syscalls: frozenset[str]


@dataclass(frozen=True)
class RaiseAlert:
    report: str


@dataclass(frozen=True)
class LogEvent:
    text: str


ControllerAction = StartProduction | StartOracle | UpdatePolicy | RaiseAlert | LogEvent


@dataclass(frozen=True)
class ControllerConfig:
    oracle_mode: str = "single_request"
    watchdog_ms: float = 10_000.0
    deny: frozenset[str] = field(default_factory=frozenset)
    pretrain_requests: tuple[str, ...] = ()

    def __post_init__(self):
        if self.oracle_mode not in ORACLE_MODES:
            raise ConfigError(f"unknown oracle mode: {self.oracle_mode!r}")
        if not self.watchdog_ms > 0:
            raise ConfigError("watchdog_ms must be positive")


def step(
    state: ControllerState, event: ControllerEvent, config: ControllerConfig
) -> tuple[ControllerState, tuple[ControllerAction, ...]]:
    """Pure transition function; raises IllegalTransition on state/event mismatch."""
    if isinstance(event, Shutdown):
        return Halted("shutdown"), (LogEvent("controller shut down"),)

    if isinstance(state, ProductionRunning) and isinstance(event, ProdExited):
        reason = event.reason
        if isinstance(reason, Completed):
            return state, (LogEvent("production served request"),)
        if isinstance(reason, PolicyViolation):
            return (
                OracleRunning(epoch=state.epoch),
                (StartOracle(watchdog_ms=config.watchdog_ms),),
            )
        if isinstance(reason, DeniedSyscallHit):
            return state, (
                RaiseAlert(f"deny-listed syscall {reason.syscall!r} requested"),
                StartProduction(),
            )
        if isinstance(reason, ExploitDetected):
            return state, (RaiseAlert(reason.report), StartProduction())
        # WatchdogTimeout: production containers carry no watchdog.
        raise IllegalTransition(f"production exit reason not handled: {reason!r}")

    if isinstance(state, OracleRunning) and isinstance(event, OracleFinished):
        outcome = event.outcome
        if isinstance(outcome, Benign):
            if config.oracle_mode == "until_watchdog":
                return (
                    replace(state, requests_served=state.requests_served + 1),
                    (UpdatePolicy(outcome.observed),),
                )
            return (
                ProductionRunning(epoch=state.epoch),
                (UpdatePolicy(outcome.observed), StartProduction()),
            )
        if isinstance(outcome, Malicious):
            return (
                ProductionRunning(epoch=state.epoch),
                (RaiseAlert(outcome.report), StartProduction()),
            )
        if isinstance(outcome, WatchdogTimeout):
            return (
                ProductionRunning(epoch=state.epoch),
                (LogEvent("oracle watchdog expired mid-request"), StartProduction()),
            )
        raise IllegalTransition(f"oracle outcome not handled: {outcome!r}")

    if isinstance(state, OracleRunning) and isinstance(event, WatchdogFired):
        return ProductionRunning(epoch=state.epoch), (StartProduction(),)

    raise IllegalTransition(f"event {type(event).__name__} not legal in state {type(state).__name__}")


# --- session results ----------------------------------------------------------

@dataclass(frozen=True)
class Alert:
    request: int
    report: str
    at_ms: float


@dataclass(frozen=True)
class Transition:
    at_ms: float
    from_state: str
    event: str
    to_state: str
    actions: tuple[str, ...]
    epoch: int


@dataclass
class SessionResult:
    final_policy: SyscallPolicy
    policy_log: list[PolicyLogEntry]
    latency_records: list["workload_mod.LatencyRecord"]
    alerts: list[Alert]
    transition_trace: list[Transition]
    consultations: int
    mode: str = "timeloops"

    def to_json_dict(self) -> dict:
        return {
            "final_policy": {
                "allow": sorted(self.final_policy.allow),
                "deny": sorted(self.final_policy.deny),
                "epoch": self.final_policy.epoch,
            },
            "alerts": [
                {"request": a.request, "report": a.report, "at_ms": a.at_ms}
                for a in self.alerts
            ],
            "transitions": [
                {
                    "at_ms": t.at_ms,
                    "from": t.from_state,
                    "event": t.event,
                    "to": t.to_state,
                    "actions": list(t.actions),
                    "epoch": t.epoch,
                }
                for t in self.transition_trace
            ],
            "consultations": self.consultations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def _state_label(state: ControllerState) -> str:
    if isinstance(state, ProductionRunning):
        return "production_running"
    if isinstance(state, OracleRunning):
        return "oracle_running"
    return "halted"


def _event_label(event: ControllerEvent) -> str:
    if isinstance(event, ProdExited):
        reason = event.reason
        if isinstance(reason, Completed):
            return "prod_exited:completed"
        if isinstance(reason, PolicyViolation):
            return f"prod_exited:policy_violation:{reason.syscall}"
        if isinstance(reason, DeniedSyscallHit):
            return f"prod_exited:denied_syscall:{reason.syscall}"
        if isinstance(reason, ExploitDetected):
            return "prod_exited:exploit_detected"
        return "prod_exited:watchdog_timeout"
    if isinstance(event, OracleFinished):
        outcome = event.outcome
        if isinstance(outcome, Benign):
            return "oracle_finished:benign"
        if isinstance(outcome, Malicious):
            return "oracle_finished:malicious"
        return "oracle_finished:watchdog_timeout"
    if isinstance(event, WatchdogFired):
        return "watchdog_fired"
    return "shutdown"


def _action_label(action: ControllerAction) -> str:
    if isinstance(action, StartProduction):
        return "start_production"
    if isinstance(action, StartOracle):
        return "start_oracle"
    if isinstance(action, UpdatePolicy):
        return "update_policy"
    if isinstance(action, RaiseAlert):
        return "raise_alert"
    return "log_event"


class SessionDriver:
    """Single-threaded event loop binding client, controller and containers.

    The driver owns the policy, the controller state and the virtual clock.
    ``attempt`` processes one client attempt, advancing the clock by run
    costs, restart costs and any queueing delay while a container starts.
    """

    def __init__(
        self,
        spec: ServiceSpec,
        config: ControllerConfig,
        mode: str = "timeloops",
        initial_policy: SyscallPolicy | None = None,
        initial_log: Sequence[PolicyLogEntry] = (),
    ):
        if mode not in SESSION_MODES:
            raise ConfigError(f"unknown session mode: {mode!r}")
        self.spec = spec
        self.config = config
        self.mode = mode
        self.policy = initial_policy if initial_policy is not None else new_policy(config.deny)
        self.state: ControllerState = ProductionRunning(epoch=self.policy.epoch)
        self.now = 0.0
        # Initial start is free; restart cost applies only to violation- and
        # oracle-triggered starts.
        self.ready_at = 0.0
        self.policy_log: list[PolicyLogEntry] = list(initial_log)
        self.alerts: list[Alert] = []
        self.transition_trace: list[Transition] = []
        self.consultations = 0
        self._current_request_id: int | None = None

    # -- plumbing

    def _alert(self, report: str) -> None:
        request = self._current_request_id if self._current_request_id is not None else -1
        self.alerts.append(Alert(request=request, report=report, at_ms=self.now))

    def _transition(self, event: ControllerEvent) -> bool:
        """Apply one event; returns True if the attempt was rejected by an alert."""
        before = self.state
        after, actions = step(before, event, self.config)
        self.state = after
        rejected = False
        restart = self.spec.cost_model.restart_ms
        for action in actions:
            if isinstance(action, StartOracle):
                started = self.now + restart
                self.ready_at = started
                self.state = replace(self.state, oracle_started_ms=started)
            elif isinstance(action, StartProduction):
                self.ready_at = self.now + restart
            elif isinstance(action, UpdatePolicy):
                try:
                    grown, entry = extend(
                        self.policy, action.new_syscalls, "oracle", timestamp_ms=self.now
                    )
                except DeniedSyscall as exc:
                    # Category-4 mitigation: the oracle observed a deny-listed
                    # syscall, so the request is rejected and nothing is learned.
                    self._alert(str(exc))
                    rejected = True
                else:
                    self.policy = grown
                    if entry is not None:
                        self.policy_log.append(entry)
            elif isinstance(action, RaiseAlert):
                self._alert(action.report)
                rejected = True
        if isinstance(self.state, (ProductionRunning, OracleRunning)):
            if self.state.epoch != self.policy.epoch:
                self.state = replace(self.state, epoch=self.policy.epoch)
        self.transition_trace.append(
            Transition(
                at_ms=self.now,
                from_state=_state_label(before),
                event=_event_label(event),
                to_state=_state_label(self.state),
                actions=tuple(_action_label(a) for a in actions),
                epoch=self.policy.epoch,
            )
        )
        return rejected

    def _wait_until_ready(self) -> None:
        if self.now < self.ready_at:
            self.now = self.ready_at

    # -- one client attempt

    def attempt(self, request: "workload_mod.Request") -> str:
        """Process one attempt; returns 'served', 'failed' or 'rejected'."""
        self._current_request_id = request.logical_id
        if self.mode == "unhardened":
            _, elapsed = run_unrestricted(self.spec, request.key)
            self.now += elapsed
            return "served"
        if self.mode == "hardened":
            return self._attempt_hardened(request)
        return self._attempt_timeloops(request)

    def _attempt_hardened(self, request: "workload_mod.Request") -> str:
        # Permanently instrumented deployment: every request pays the oracle
        # cost, detectable exploits abort, and no syscall filter exists.
        outcome, elapsed = run_oracle(self.spec, self.policy, request.key)
        self.now += elapsed
        if isinstance(outcome, Malicious):
            self._alert(outcome.report)
            return "rejected"
        return "served"

    def _attempt_timeloops(self, request: "workload_mod.Request") -> str:
        self._wait_until_ready()
        if isinstance(self.state, OracleRunning):
            tenure = self.now - self.state.oracle_started_ms
            if tenure >= self.config.watchdog_ms:
                self._transition(WatchdogFired())
                self._wait_until_ready()

        if isinstance(self.state, ProductionRunning):
            reason, elapsed = run_production(self.spec, self.policy, request.key)
            self.now += elapsed
            if isinstance(reason, Completed):
                self._transition(ProdExited(reason))
                return "served"
            # The audit log names the blocked syscall, so the controller can
            # spot a deny-list hit without consulting the oracle.
            if reason.syscall in self.policy.deny:
                self._transition(ProdExited(DeniedSyscallHit(reason.syscall)))
                return "rejected"
            self._transition(ProdExited(reason))
            return "failed"

        if isinstance(self.state, OracleRunning):
            remaining = self.config.watchdog_ms - (self.now - self.state.oracle_started_ms)
            outcome, elapsed = run_oracle(self.spec, self.policy, request.key, remaining)
            self.now += elapsed
            self.consultations += 1
            rejected = self._transition(OracleFinished(outcome))
            if isinstance(outcome, Benign):
                return "rejected" if rejected else "served"
            if isinstance(outcome, Malicious):
                return "rejected"
            return "failed"

        raise IllegalTransition("session driver reached a halted controller")

    def shutdown(self) -> None:
        if self.mode == "timeloops":
            self._transition(Shutdown())


def _pretrain(
    spec: ServiceSpec, requests: Iterable[str], config: ControllerConfig
) -> tuple[SyscallPolicy, list[PolicyLogEntry]]:
    policy = new_policy(config.deny)
    entries: list[PolicyLogEntry] = []
    for key in requests:
        behavior = spec.handlers.get(key)
        if behavior is None:
            raise ConfigError(f"pretrain request {key!r} has no handler")
        if behavior.exploit is not None:
            raise ExploitInPretrainSet(f"pretrain request {key!r} is exploit-annotated")
        policy, entry = extend(
            policy,
            frozenset(behavior.trace) | spec.oracle_extra,
            source="pretrain",
            timestamp_ms=0.0,
        )
        if entry is not None:
            entries.append(entry)
    return policy, entries


def pretrain(
    spec: ServiceSpec, requests: Iterable[str], config: ControllerConfig
) -> SyscallPolicy:
    """Learn a starting policy offline from known-safe requests.

    Produces exactly the policy a fresh session would learn from the same
    requests; log entries are tagged with source "pretrain". Pretraining
    does not need to be exhaustive: the session keeps learning afterwards.
    """
    policy, _ = _pretrain(spec, requests, config)
    return policy


def run_session(
    spec: ServiceSpec,
    workload: Sequence["workload_mod.Request"],
    config: ControllerConfig | None = None,
    mode: str = "timeloops",
    max_attempts: int = 16,
) -> SessionResult:
    """Drive a workload to completion under retry semantics.

    Every logical request is retried until served, rejected by an alert, or
    the attempt budget is exhausted. Fully deterministic for a given
    (spec, workload, config, mode).
    """
    config = config if config is not None else ControllerConfig()
    if not workload:
        raise ConfigError("workload must not be empty")
    conflict = spec.oracle_extra & config.deny
    if conflict:
        raise ConfigError(
            "oracle instrumentation syscalls are deny-listed: " + ", ".join(sorted(conflict))
        )
    initial_policy = None
    initial_log: list[PolicyLogEntry] = []
    if config.pretrain_requests:
        initial_policy, initial_log = _pretrain(spec, config.pretrain_requests, config)
    driver = SessionDriver(
        spec, config, mode=mode, initial_policy=initial_policy, initial_log=initial_log
    )
    records = [
        workload_mod.send_with_retry(request, driver, max_attempts=max_attempts)
        for request in workload
    ]
    driver.shutdown()
    return SessionResult(
        final_policy=driver.policy,
        policy_log=driver.policy_log,
        latency_records=records,
        alerts=driver.alerts,
        transition_trace=driver.transition_trace,
        consultations=driver.consultations,
        mode=mode,
    )
