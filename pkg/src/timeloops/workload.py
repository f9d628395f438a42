"""Retry-semantics client, workload generation and latency accounting.

Latency of a logical request is the elapsed virtual time between the
client first sending it and the client receiving a response, regardless
of how many retries that took. Requests rejected after an alert still get
a record, with a distinct outcome, so exploit traffic shows up in reports
without skewing the served statistics.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import AttemptsExhausted, ConfigError, EmptyMix, EmptyRecords
from .simruntime import ServiceSpec

OUTCOMES = ("served", "rejected_malicious")

LATENCY_CSV_HEADER = "logical_id,key,attempts,first_attempt_ms,completion_ms,latency_ms,outcome"


@dataclass(frozen=True)
class Request:
    logical_id: int
    key: str


@dataclass(frozen=True)
class LatencyRecord:
    logical_id: int
    key: str
    attempts: int
    first_attempt_ms: float
    completion_ms: float
    outcome: str

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("attempts must be >= 1")
        if self.completion_ms < self.first_attempt_ms:
            raise ValueError("completion precedes first attempt")
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome: {self.outcome!r}")

    @property
    def latency_ms(self) -> float:
        return self.completion_ms - self.first_attempt_ms


@dataclass(frozen=True)
class LatencyStats:
    mean: float
    p50: float
    p99: float
    max: float
    cumulative: tuple[float, ...]


def send_with_retry(request: Request, driver, max_attempts: int = 16) -> LatencyRecord:
    """Reissue an identical request until served or rejected.

    The driver advances the shared virtual clock; a failed attempt (policy
    violation, oracle timeout) is retried immediately. An alert ends the
    request as rejected_malicious rather than retrying forever.
    """
    if max_attempts < 1:
        raise ConfigError("max_attempts must be >= 1")
    first_attempt_ms: float | None = None
    for attempt in range(1, max_attempts + 1):
        if first_attempt_ms is None:
            first_attempt_ms = driver.now
        status = driver.attempt(request)
        if status == "served":
            return LatencyRecord(
                logical_id=request.logical_id,
                key=request.key,
                attempts=attempt,
                first_attempt_ms=first_attempt_ms,
                completion_ms=driver.now,
                outcome="served",
            )
        if status == "rejected":
            return LatencyRecord(
                logical_id=request.logical_id,
                key=request.key,
                attempts=attempt,
                first_attempt_ms=first_attempt_ms,
                completion_ms=driver.now,
                outcome="rejected_malicious",
            )
    raise AttemptsExhausted(
        f"request {request.logical_id} ({request.key!r}) failed {max_attempts} attempts"
    )


def generate_workload(
    spec: ServiceSpec, n: int, seed: int, mix: Mapping[str, float]
) -> list[Request]:
    """Seeded weighted sampling of request keys; ids run 0..n-1."""
    if not mix:
        raise EmptyMix("workload mix is empty")
    keys = sorted(mix)
    weights = [float(mix[k]) for k in keys]
    if any(w < 0 for w in weights):
        raise ConfigError("mix weights must be non-negative")
    if not any(w > 0 for w in weights):
        raise EmptyMix("workload mix has no positive weight")
    unknown = [k for k in keys if k not in spec.handlers]
    if unknown:
        raise ConfigError("mix keys without handlers: " + ", ".join(unknown))
    rng = random.Random(seed)
    chosen = rng.choices(keys, weights=weights, k=n) if n > 0 else []
    return [Request(logical_id=i, key=k) for i, k in enumerate(chosen)]


def summarize(records: Sequence[LatencyRecord]) -> LatencyStats:
    """Latency statistics; percentiles use linear interpolation between
    order statistics, so e.g. the p50 of [1, 2, 3, 4] is 2.5."""
    if not records:
        raise EmptyRecords("no latency records to summarize")
    latencies = [r.latency_ms for r in records]
    cumulative = []
    total = 0.0
    for value in latencies:
        total += value
        cumulative.append(total)
    return LatencyStats(
        mean=float(np.mean(latencies)),
        p50=float(np.percentile(latencies, 50)),
        p99=float(np.percentile(latencies, 99)),
        max=float(np.max(latencies)),
        cumulative=tuple(cumulative),
    )


def render_latency_csv(records: Sequence[LatencyRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(LATENCY_CSV_HEADER.split(","))
    for r in sorted(records, key=lambda r: r.logical_id):
        writer.writerow(
            [r.logical_id, r.key, r.attempts, r.first_attempt_ms, r.completion_ms,
             r.latency_ms, r.outcome]
        )
    return out.getvalue()


def write_latency_csv(records: Sequence[LatencyRecord], path: str | Path) -> None:
    Path(path).write_text(render_latency_csv(records), encoding="utf-8")


def render_cumulative_csv(records: Sequence[LatencyRecord]) -> str:
    """Running latency sum by request order: the convergence-plot series."""
    ordered = sorted(records, key=lambda r: r.logical_id)
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["logical_id", "cumulative_latency_ms"])
    total = 0.0
    for r in ordered:
        total += r.latency_ms
        writer.writerow([r.logical_id, total])
    return out.getvalue()


def write_cumulative_csv(records: Sequence[LatencyRecord], path: str | Path) -> None:
    Path(path).write_text(render_cumulative_csv(records), encoding="utf-8")
