"""Latency decomposition and aggregate statistics over request traces.

Every request satisfies an exact integer identity: total time equals the
sum of stage durations plus the sum of per-resource queue waits. Reports
offer both views: waits broken out separately, or folded into the stage
that follows them (the way stacked per-stage bar charts are usually read).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from .errors import (
    DegenerateScenarioError,
    EmptySampleError,
    IncompleteTraceError,
)
from .simcore import RequestTrace, TraceSet
from .transport import Mechanism, ParamSet, Stage, cpu_cost
from .units import ns_to_ms

METRIC_STAGES = (
    Stage.REQUEST_XFER,
    Stage.H2D,
    Stage.PREPROCESS,
    Stage.INFERENCE,
    Stage.D2H,
    Stage.RESPONSE_XFER,
)

_STAGE_TO_METRIC = {
    Stage.REQUEST_XFER: "request_time",
    Stage.H2D: "copy_time",
    Stage.D2H: "copy_time",
    Stage.PREPROCESS: "preprocessing_time",
    Stage.INFERENCE: "inference_time",
    Stage.RESPONSE_XFER: "response_time",
}

METRIC_NAMES = (
    "total_time",
    "request_time",
    "response_time",
    "copy_time",
    "preprocessing_time",
    "inference_time",
    "queue_wait",
)


@dataclass
class LatencyBreakdown:
    """Per-request metric decomposition, durations in ns."""

    client_id: int
    request_index: int
    priority: str
    total_time: int
    request_time: int
    response_time: int
    copy_time: int
    preprocessing_time: int
    inference_time: int
    queue_wait: dict[str, int] = field(default_factory=dict)
    cpu_usage: int = 0

    @property
    def queue_wait_total(self) -> int:
        return sum(self.queue_wait.values())

    @property
    def processing_time(self) -> int:
        return self.preprocessing_time + self.inference_time

    def folded(self) -> dict[str, int]:
        """Stage times with each queue wait folded into its following stage."""
        return {
            "request_time": self.request_time + self.queue_wait.get("request_xfer", 0),
            "copy_time": self.copy_time
            + self.queue_wait.get("h2d", 0)
            + self.queue_wait.get("d2h", 0),
            "preprocessing_time": self.preprocessing_time + self.queue_wait.get("preprocess", 0),
            "inference_time": self.inference_time + self.queue_wait.get("inference", 0),
            "response_time": self.response_time + self.queue_wait.get("response_xfer", 0),
        }

    def value(self, metric: str) -> int:
        if metric == "queue_wait":
            return self.queue_wait_total
        return getattr(self, metric)


def breakdown(trace: RequestTrace, params: ParamSet | None = None,
              server_mech: Mechanism | None = None,
              req_bytes: int = 0, resp_bytes: int = 0) -> LatencyBreakdown:
    """Decompose one completed request; the conservation identity is exact."""
    if not trace.completed:
        raise IncompleteTraceError(
            f"client {trace.client_id} request {trace.request_index} has no response"
        )
    sums = {name: 0 for name in ("request_time", "response_time", "copy_time",
                                 "preprocessing_time", "inference_time")}
    waits: dict[str, int] = {}
    for s in trace.stages:
        sums[_STAGE_TO_METRIC[s.stage]] += s.duration_ns
        if s.wait_ns:
            waits[s.stage.value] = waits.get(s.stage.value, 0) + s.wait_ns
    cpu = 0
    if params is not None and server_mech is not None:
        cpu = cpu_cost(server_mech, req_bytes, params) + cpu_cost(server_mech, resp_bytes, params)
        if server_mech is Mechanism.RDMA:
            # copy-issuance control cost, one driver call per direction
            n_copies = sum(1 for s in trace.stages if s.stage in (Stage.H2D, Stage.D2H))
            cpu += n_copies * params.beta_copy_ns
    bd = LatencyBreakdown(
        client_id=trace.client_id,
        request_index=trace.request_index,
        priority=trace.priority,
        total_time=trace.total_ns,
        request_time=sums["request_time"],
        response_time=sums["response_time"],
        copy_time=sums["copy_time"],
        preprocessing_time=sums["preprocessing_time"],
        inference_time=sums["inference_time"],
        queue_wait=waits,
        cpu_usage=cpu,
    )
    components = (
        bd.request_time + bd.response_time + bd.copy_time
        + bd.preprocessing_time + bd.inference_time + bd.queue_wait_total
    )
    assert components == bd.total_time, (
        f"conservation violated: stages+waits={components} != total={bd.total_time}"
    )
    return bd


def breakdown_set(ts: TraceSet, params: ParamSet | None = None,
                  req_bytes: int = 0, resp_bytes: int = 0,
                  include_warmup: bool = False) -> list[LatencyBreakdown]:
    mech = ts.plan.server_mech
    return [
        breakdown(t, params, mech, req_bytes, resp_bytes)
        for t in ts.completed(include_warmup=include_warmup)
    ]


def nearest_rank(sorted_values: list[int], pct: float) -> int:
    """Nearest-rank percentile (1-indexed ceil), no interpolation."""
    if not sorted_values:
        raise EmptySampleError("percentile of empty sample")
    rank = max(1, math.ceil(pct / 100.0 * len(sorted_values)))
    return sorted_values[rank - 1]


@dataclass
class MetricStats:
    count: int
    mean: float
    p50: int
    p95: int
    p99: int
    stddev: float
    cov: float


@dataclass
class AggregateStats:
    """Per-metric statistics for one client class ('all', 'normal', 'high')."""

    group: str
    metrics: dict[str, MetricStats]

    def mean_ms(self, metric: str) -> float:
        return ns_to_ms(self.metrics[metric].mean)


def _stats(values: list[int]) -> MetricStats:
    n = len(values)
    ordered = sorted(values)  # fixed summation order: permutation invariant
    mean = sum(ordered) / n
    var = sum((v - mean) ** 2 for v in ordered) / n  # population variance
    std = math.sqrt(var)
    cov = std / mean if mean else 0.0
    return MetricStats(
        count=n,
        mean=mean,
        p50=nearest_rank(ordered, 50),
        p95=nearest_rank(ordered, 95),
        p99=nearest_rank(ordered, 99),
        stddev=std,
        cov=cov,
    )


def aggregate(breakdowns: list[LatencyBreakdown],
              extra_metrics: dict | None = None) -> dict[str, AggregateStats]:
    """Aggregate per client class and overall. Raises on empty input."""
    if not breakdowns:
        raise EmptySampleError("no completed requests after warmup exclusion")
    groups: dict[str, list[LatencyBreakdown]] = {"all": breakdowns}
    for bd in breakdowns:
        groups.setdefault(bd.priority, []).append(bd)
    out: dict[str, AggregateStats] = {}
    for name, rows in groups.items():
        metrics: dict[str, MetricStats] = {}
        for metric in METRIC_NAMES:
            metrics[metric] = _stats([bd.value(metric) for bd in rows])
        metrics["processing_time"] = _stats([bd.processing_time for bd in rows])
        metrics["cpu_usage"] = _stats([bd.cpu_usage for bd in rows])
        for metric, fn in (extra_metrics or {}).items():
            metrics[metric] = _stats([fn(bd) for bd in rows])
        out[name] = AggregateStats(name, metrics)
    return out


FRACTION_ROWS = (
    "request_time",
    "copy_time",
    "preprocessing_time",
    "inference_time",
    "response_time",
)


def fraction_report(breakdowns: list[LatencyBreakdown], folded: bool = True) -> dict[str, float]:
    """Fraction of mean total spent per stage; rows sum to 1 within 1e-9.

    folded=True assigns each queue wait to the stage that follows it,
    matching how stacked breakdown charts are read; folded=False reports
    the waits as their own row.
    """
    if not breakdowns:
        raise EmptySampleError("no breakdowns to report")
    mean_total = sum(bd.total_time for bd in breakdowns) / len(breakdowns)
    if mean_total == 0:
        raise DegenerateScenarioError("zero mean total time")
    n = len(breakdowns)
    rows: dict[str, float] = {}
    if folded:
        acc = {k: 0 for k in FRACTION_ROWS}
        for bd in breakdowns:
            for k, v in bd.folded().items():
                acc[k] += v
        for k in FRACTION_ROWS:
            rows[k] = acc[k] / n / mean_total
    else:
        for k in FRACTION_ROWS:
            rows[k] = sum(bd.value(k) for bd in breakdowns) / n / mean_total
        rows["queue_wait"] = sum(bd.queue_wait_total for bd in breakdowns) / n / mean_total
    return rows


def data_movement_fraction(breakdowns: list[LatencyBreakdown], folded: bool = True) -> float:
    """Share of total spent moving data: request + copies + response."""
    rows = fraction_report(breakdowns, folded=folded)
    return rows["request_time"] + rows["copy_time"] + rows["response_time"]


def residual_request_time(bd: LatencyBreakdown) -> int:
    """Request time measured the indirect way: total minus everything else.

    Mirrors harnesses that cannot timestamp request arrival server-side and
    attribute all otherwise-unaccounted time to the request leg.
    """
    other = (
        bd.copy_time + bd.preprocessing_time + bd.inference_time + bd.response_time
        + sum(v for k, v in bd.queue_wait.items() if k != "request_xfer")
    )
    return bd.total_time - other


def report_text(ts: TraceSet, stats: dict[str, AggregateStats],
                fractions: dict[str, float]) -> str:
    lines = [
        f"scenario: {ts.scenario_label}  sharing={ts.sharing}  clients={ts.n_clients}",
        f"requests: {len(ts.completed())} measured (warmup {ts.warmup_requests}/client excluded)",
        "",
        f"{'metric':<20}{'mean ms':>10}{'p50 ms':>10}{'p95 ms':>10}{'p99 ms':>10}{'cov':>8}",
    ]
    overall = stats["all"]
    for metric in (*METRIC_NAMES, "processing_time"):
        m = overall.metrics[metric]
        lines.append(
            f"{metric:<20}{ns_to_ms(m.mean):>10.4f}{ns_to_ms(m.p50):>10.4f}"
            f"{ns_to_ms(m.p95):>10.4f}{ns_to_ms(m.p99):>10.4f}{m.cov:>8.3f}"
        )
    lines.append("")
    lines.append("stage fractions of mean total (waits folded into following stage):")
    for k, v in fractions.items():
        lines.append(f"  {k:<20}{v:>8.2%}")
    if ts.rdma_setup_ns:
        lines.append("")
        lines.append(
            f"one-time connection setup (excluded from per-request totals): "
            f"{ns_to_ms(ts.rdma_setup_ns):.3f} ms"
        )
    return "\n".join(lines) + "\n"


def breakdown_json(ts: TraceSet, stats: dict[str, AggregateStats],
                   fractions: dict[str, float]) -> str:
    doc = {
        "schema_version": 1,
        "scenario": ts.scenario_label,
        "sharing": ts.sharing,
        "clients": ts.n_clients,
        "groups": {
            name: {
                metric: {
                    "count": m.count,
                    "mean_ns": m.mean,
                    "p50_ns": m.p50,
                    "p95_ns": m.p95,
                    "p99_ns": m.p99,
                    "stddev_ns": m.stddev,
                    "cov": m.cov,
                }
                for metric, m in ag.metrics.items()
            }
            for name, ag in stats.items()
        },
        "stage_fractions_folded": fractions,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
