"""Deterministic discrete-event engine executing serving scenarios.

The clock is integer nanoseconds. Events are processed in strict
(time, seq) order with seq assigned at post time, so identical inputs give
bit-identical traces. All mutable state (clients, links, GPU) is owned by
the event loop on one thread; independent scenarios can run in parallel
processes with no shared state.
"""

from __future__ import annotations

import heapq
import itertools
import random
from dataclasses import dataclass, field

from .errors import ValidationError
from .units import round_ns
from .gpu import (
    GpuConfig,
    GpuJob,
    GpuState,
    KernelPlan,
    SharingMode,
    StreamLayout,
    apply_sharing_mode,
    build_kernel_plan,
)
from .transport import (
    Hop,
    Mechanism,
    ParamSet,
    PipelinePlan,
    Stage,
    pipeline_events,
    proxied_plan_for_mode,
    transfer_time,
    translate_time,
    wire_time,
)
from .workload import (
    ClientSpec,
    ClientState,
    DataMode,
    DEFAULT_CATALOG,
    DEFAULT_RAW_BYTES,
    ModelCatalog,
    payload_bytes,
)

TRACE_SCHEMA_VERSION = 1

# Event kinds, processed in (time, seq) order.
ISSUE = "issue"
XFER_DONE = "xfer_done"
FORWARD = "forward"
COPY_DONE = "copy_done"
BLOCK_DONE = "block_done"
QUANTUM_TICK = "quantum_tick"
RESPONSE_DONE = "response_done"
ENGINE_WAKE = "engine_wake"


@dataclass(order=True)
class Event:
    time: int
    seq: int
    kind: str = field(compare=False)
    payload: tuple = field(compare=False, default=())


class FcfsQueue:
    """A FCFS resource with fixed capacity; grants never overlap beyond it."""

    def __init__(self, capacity: int = 1):
        assert capacity >= 1
        self.free_at = [0] * capacity

    def occupy(self, now: int, demand: int) -> tuple[int, int]:
        """Grant `demand` ns of exclusive occupancy; returns (start, end)."""
        assert demand >= 0
        idx = min(range(len(self.free_at)), key=lambda i: (self.free_at[i], i))
        start = max(now, self.free_at[idx])
        end = start + demand
        self.free_at[idx] = end
        return start, end


def occupy(resource: FcfsQueue, now: int, demand: int) -> tuple[int, int]:
    return resource.occupy(now, demand)


@dataclass(frozen=True)
class Connection:
    """direct(mechanism) or proxied(hop1, hop2)."""

    mode: str  # "direct" | "proxied"
    mech: Mechanism | None = None
    hop1: Mechanism | None = None
    hop2: Mechanism | None = None

    @classmethod
    def direct(cls, mech: Mechanism) -> "Connection":
        return cls("direct", mech=mech)

    @classmethod
    def proxied(cls, hop1: Mechanism, hop2: Mechanism) -> "Connection":
        return cls("proxied", hop1=hop1, hop2=hop2)

    @property
    def server_mech(self) -> Mechanism:
        return self.mech if self.mode == "direct" else self.hop2

    def label(self) -> str:
        if self.mode == "direct":
            return self.mech.value
        return f"{self.hop1.value}/{self.hop2.value}"


@dataclass
class Scenario:
    """Full experiment description."""

    model: str
    data_mode: DataMode
    connection: Connection
    clients: list[ClientSpec]
    sharing: SharingMode = field(default_factory=SharingMode)
    gpu: GpuConfig = field(default_factory=GpuConfig)
    params: ParamSet = field(default_factory=ParamSet)
    seed: int = 0
    warmup_requests: int = 10
    raw_bytes: int = DEFAULT_RAW_BYTES
    noise_sigma: float = 0.0
    catalog: ModelCatalog = field(default_factory=lambda: DEFAULT_CATALOG)

    def validate(self) -> list[str]:
        problems: list[str] = []
        if self.model not in self.catalog:
            problems.append(f"model: unknown model {self.model!r}")
        if not self.clients:
            problems.append("clients: need at least one client")
        ids = [c.id for c in self.clients]
        if len(set(ids)) != len(ids):
            problems.append("clients: duplicate client ids")
        if self.connection.mode == "direct":
            if self.connection.mech is None:
                problems.append("connection: direct requires a mechanism")
        elif self.connection.mode == "proxied":
            if self.connection.hop1 in (None, Mechanism.LOCAL):
                problems.append("connection: hop1 must be tcp/rdma/gdr")
            if self.connection.hop2 in (None, Mechanism.LOCAL):
                problems.append("connection: hop2 must be tcp/rdma/gdr")
            if self.connection.hop1 is Mechanism.GDR:
                problems.append("connection: hop1 gdr lands in gateway memory; use rdma")
        else:
            problems.append(f"connection: unknown mode {self.connection.mode!r}")
        if self.raw_bytes <= 0:
            problems.append("raw_bytes: must be positive")
        if self.warmup_requests < 0:
            problems.append("warmup_requests: must be >= 0")
        if self.noise_sigma < 0:
            problems.append("noise_sigma: must be >= 0")
        if not problems and self.connection.server_mech is Mechanism.GDR:
            model = self.catalog.get(self.model)
            pinned = (
                payload_bytes(model, self.data_mode, "request", self.raw_bytes)
                + payload_bytes(model, self.data_mode, "response", self.raw_bytes)
            )
            if pinned * len(self.clients) > self.gpu.memory_bytes:
                problems.append(
                    "clients: pinned device buffers exceed GPU memory "
                    f"({pinned * len(self.clients)} > {self.gpu.memory_bytes} bytes)"
                )
        return problems


@dataclass
class StageRecord:
    stage: Stage
    resource: str
    ready_ns: int
    start_ns: int
    end_ns: int = -1

    @property
    def duration_ns(self) -> int:
        return self.end_ns - self.start_ns

    @property
    def wait_ns(self) -> int:
        return self.start_ns - self.ready_ns


@dataclass
class RequestTrace:
    client_id: int
    request_index: int
    priority: str
    issue_ns: int
    done_ns: int = -1
    stages: list[StageRecord] = field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.done_ns >= 0

    @property
    def total_ns(self) -> int:
        return self.done_ns - self.issue_ns


@dataclass
class TraceSet:
    scenario_label: str
    model: str
    data_mode: str
    connection: str
    sharing: str
    n_clients: int
    warmup_requests: int
    plan: PipelinePlan
    traces: list[RequestTrace]
    rdma_setup_ns: int
    copy_issues: int

    def completed(self, include_warmup: bool = False) -> list[RequestTrace]:
        out = [t for t in self.traces if t.completed]
        if not include_warmup:
            out = [t for t in out if t.request_index >= self.warmup_requests]
        return out

    def csv_lines(self) -> list[str]:
        lines = ["client_id,request_index,priority,stage,resource,ready_ns,start_ns,end_ns"]
        for t in self.traces:
            for s in t.stages:
                lines.append(
                    f"{t.client_id},{t.request_index},{t.priority},"
                    f"{s.stage.value},{s.resource},{s.ready_ns},{s.start_ns},{s.end_ns}"
                )
        return lines

    def to_json_obj(self) -> dict:
        return {
            "schema_version": TRACE_SCHEMA_VERSION,
            "scenario": {
                "label": self.scenario_label,
                "model": self.model,
                "data_mode": self.data_mode,
                "connection": self.connection,
                "sharing": self.sharing,
                "clients": self.n_clients,
                "warmup_requests": self.warmup_requests,
            },
            "rdma_setup_ns": self.rdma_setup_ns,
            "requests": [
                {
                    "client_id": t.client_id,
                    "request_index": t.request_index,
                    "priority": t.priority,
                    "issue_ns": t.issue_ns,
                    "done_ns": t.done_ns,
                    "stages": [
                        {
                            "stage": s.stage.value,
                            "resource": s.resource,
                            "ready_ns": s.ready_ns,
                            "start_ns": s.start_ns,
                            "end_ns": s.end_ns,
                        }
                        for s in t.stages
                    ],
                }
                for t in self.traces
            ],
        }


@dataclass
class _RequestRun:
    """Runtime context of one in-flight request."""

    trace: RequestTrace
    client: ClientState
    hop_idx: int = 0
    group_ready_ns: int = 0
    open_stage: StageRecord | None = None


class _Simulator:
    def __init__(self, scenario: Scenario, seed: int | None):
        problems = scenario.validate()
        if problems:
            raise ValidationError(problems)
        self.sc = scenario
        self.model = scenario.catalog.get(scenario.model)
        self.raw = scenario.data_mode is DataMode.RAW
        if scenario.connection.mode == "direct":
            self.plan_t = pipeline_events(scenario.connection.mech, self.raw)
        else:
            self.plan_t = proxied_plan_for_mode(
                scenario.connection.hop1, scenario.connection.hop2, self.raw, scenario.params
            )
        self.req_bytes = payload_bytes(self.model, scenario.data_mode, "request", scenario.raw_bytes)
        self.resp_bytes = payload_bytes(self.model, scenario.data_mode, "response", scenario.raw_bytes)
        self.layout: StreamLayout = apply_sharing_mode(
            scenario.sharing, [c.id for c in scenario.clients]
        )
        self.gpu = GpuState(scenario.gpu, scenario.params, self.layout)
        self.kernel_plan: KernelPlan = build_kernel_plan(
            self.model, scenario.data_mode, scenario.gpu, scenario.params
        )
        self.suppress_eps = self.layout.per_process and scenario.gpu.context_copy_overlap
        self.clients = {c.id: ClientState(c) for c in scenario.clients}
        self.links: dict[tuple[str, str], FcfsQueue] = {}
        self.heap: list[Event] = []
        self.seq = itertools.count()
        self.clock = 0
        self.traces: list[RequestTrace] = []
        self._next_wake: int | None = None
        self._quantum_gen = 0
        self._tick_pending = False
        actual_seed = scenario.seed if seed is None else seed
        self._rng = random.Random(actual_seed) if scenario.noise_sigma > 0 else None
        self._sigma = scenario.noise_sigma

    # -- plumbing ---------------------------------------------------------

    def _post(self, time: int, kind: str, payload: tuple = ()) -> None:
        assert time >= self.clock, "event scheduled in the past"
        heapq.heappush(self.heap, Event(time, next(self.seq), kind, payload))

    def _noise(self) -> float:
        if self._rng is None:
            return 1.0
        return self._rng.lognormvariate(-self._sigma * self._sigma / 2, self._sigma)

    def _link(self, src: str, dst: str) -> FcfsQueue:
        key = (src, dst)
        if key not in self.links:
            self.links[key] = FcfsQueue(1)
        return self.links[key]

    # -- request lifecycle --------------------------------------------------

    def run(self) -> TraceSet:
        for cid in sorted(self.clients):
            state = self.clients[cid]
            t = state.next_request_time(0)
            if t is not None:
                self._post(t, ISSUE, (cid,))
        while self.heap:
            ev = heapq.heappop(self.heap)
            assert ev.time >= self.clock, "clock went backwards"
            self.clock = ev.time
            self._handle(ev)
        sc = self.sc
        uses_rdma = any(
            h.mech in (Mechanism.RDMA, Mechanism.GDR)
            for h in self.plan_t.request_hops + self.plan_t.response_hops
        )
        return TraceSet(
            scenario_label=f"{sc.model}/{sc.data_mode.value}/{sc.connection.label()}",
            model=sc.model,
            data_mode=sc.data_mode.value,
            connection=sc.connection.label(),
            sharing=sc.sharing.kind.value,
            n_clients=len(sc.clients),
            warmup_requests=sc.warmup_requests,
            plan=self.plan_t,
            traces=self.traces,
            rdma_setup_ns=sc.params.rdma_setup_ns if uses_rdma else 0,
            copy_issues=self.gpu.copy_issues,
        )

    def _handle(self, ev: Event) -> None:
        kind = ev.kind
        if kind == ISSUE:
            self._on_issue(*ev.payload)
        elif kind == XFER_DONE:
            self._on_xfer_done(*ev.payload)
        elif kind == FORWARD:
            self._send(*ev.payload)
        elif kind == COPY_DONE:
            self._on_copy_done(*ev.payload)
        elif kind == BLOCK_DONE:
            self._on_block_done(*ev.payload)
        elif kind == QUANTUM_TICK:
            self._on_quantum_tick(*ev.payload)
        elif kind == RESPONSE_DONE:
            self._on_response_done(*ev.payload)
        elif kind == ENGINE_WAKE:
            if self._next_wake == ev.time:
                self._next_wake = None
            self._dispatch()
        else:  # pragma: no cover - internal bug guard
            raise AssertionError(f"unknown event kind {kind}")

    def _on_issue(self, client_id: int) -> None:
        state = self.clients[client_id]
        idx = state.on_issue()
        trace = RequestTrace(
            client_id=client_id,
            request_index=idx,
            priority=state.spec.priority.value,
            issue_ns=self.clock,
        )
        self.traces.append(trace)
        run = _RequestRun(trace=trace, client=state)
        if self.sc.connection.mode == "direct" and self.sc.connection.mech is Mechanism.LOCAL:
            self._enqueue_gpu_job(run, self.clock)
        else:
            self._send(run, request=True)

    def _send(self, run: _RequestRun, request: bool) -> None:
        """Put the current hop's message on its directional link (FCFS)."""
        hops = self.plan_t.request_hops if request else self.plan_t.response_hops
        hop: Hop = hops[run.hop_idx]
        bytes_ = self.req_bytes if request else self.resp_bytes
        wire = wire_time(hop.mech, bytes_, self.sc.params)
        latency = transfer_time(hop.mech, bytes_, self.sc.params)
        if self._rng is not None:
            factor = self._noise()
            wire = round_ns(wire * factor)
            latency = round_ns(latency * factor)
        grant, _release = self._link(hop.src, hop.dst).occupy(self.clock, wire)
        delivered = grant + latency
        stage = Stage.REQUEST_XFER if request else Stage.RESPONSE_XFER
        run.trace.stages.append(
            StageRecord(stage, f"link:{hop.src}->{hop.dst}", self.clock, grant, delivered)
        )
        self._post(delivered, XFER_DONE, (run, request))

    def _on_xfer_done(self, run: _RequestRun, request: bool) -> None:
        hops = self.plan_t.request_hops if request else self.plan_t.response_hops
        at_gateway = run.hop_idx < len(hops) - 1
        if at_gateway:
            translate = (
                self.plan_t.translate_request if request else self.plan_t.translate_response
            )
            ready = self.clock
            if translate:
                bytes_ = self.req_bytes if request else self.resp_bytes
                dur = translate_time(bytes_, self.sc.params)
                stage = Stage.REQUEST_XFER if request else Stage.RESPONSE_XFER
                run.trace.stages.append(
                    StageRecord(stage, "gateway:translate", ready, ready, ready + dur)
                )
                ready = ready + dur
            run.hop_idx += 1
            if ready == self.clock:
                self._send(run, request)
            else:
                self._post(ready, FORWARD, (run, request))
            return
        # Final hop delivered.
        run.hop_idx = 0
        if request:
            self._arrive_at_server(run)
        else:
            self._post(self.clock, RESPONSE_DONE, (run,))

    def _on_copy_done(self, run: _RequestRun, direction: str) -> None:
        if direction == "h2d":
            self._enqueue_gpu_job(run, self.clock)
        else:
            self._start_response(run)

    def _arrive_at_server(self, run: _RequestRun) -> None:
        if self.plan_t.has_copies:
            grant = self.gpu.enqueue_copy(self.clock, self.req_bytes, self.suppress_eps)
            run.trace.stages.append(
                StageRecord(
                    Stage.H2D, f"copy:{grant.engine}", self.clock, grant.start_ns, grant.end_ns
                )
            )
            self._post(grant.end_ns, COPY_DONE, (run, "h2d"))
            self._maybe_wake()
        else:
            self._enqueue_gpu_job(run, self.clock)

    def _enqueue_gpu_job(self, run: _RequestRun, ready: int) -> None:
        job = GpuJob(key=run, priority=run.client.spec.priority, plan=self.kernel_plan)
        stream_id = self.layout.client_to_stream[run.trace.client_id]
        run.group_ready_ns = ready
        self.gpu.enqueue_job(stream_id, job)
        if self.layout.time_sliced:
            self._after_context_work_arrived(stream_id)
        self._dispatch()

    def _start_response(self, run: _RequestRun) -> None:
        self._send(run, request=False)

    def _on_response_done(self, run: _RequestRun) -> None:
        trace = run.trace
        trace.done_ns = self.clock
        run.client.on_response(self.clock)
        nxt = run.client.next_request_time(self.clock)
        if nxt is not None:
            self._post(nxt, ISSUE, (run.client.spec.id,))

    # -- GPU dispatch -----------------------------------------------------

    def _dispatch(self) -> None:
        while True:
            launch = self.gpu.schedule_next_block(self.clock)
            if launch is None:
                break
            run: _RequestRun = launch.job.key
            if launch.first_of_group:
                run.open_stage = StageRecord(
                    Stage.PREPROCESS if launch.group_tag == "preprocess" else Stage.INFERENCE,
                    "exec",
                    run.group_ready_ns,
                    self.clock,
                )
                run.trace.stages.append(run.open_stage)
            dur = launch.block_ns
            if self._rng is not None:
                dur = round_ns(launch.block_ns * self._noise())
                # noise stretches/shrinks the engine hold as well
                self.gpu.engine_avail[launch.engine] = self.clock + dur
            self._post(self.clock + dur, BLOCK_DONE, (launch.stream_id, launch.job))
        self._maybe_wake()

    def _maybe_wake(self) -> None:
        if not self.gpu.has_ready_block():
            return
        if self.gpu.free_engine(self.clock) is not None:
            return
        wake = self.gpu.next_engine_avail()
        if wake <= self.clock:
            return
        if self._next_wake is None or wake < self._next_wake:
            self._post(wake, ENGINE_WAKE)
            self._next_wake = wake

    def _on_block_done(self, stream_id: int, job: GpuJob) -> None:
        res = self.gpu.on_block_done(stream_id, job)
        run: _RequestRun = job.key
        if res.group_completed:
            run.open_stage.end_ns = self.clock
            run.open_stage = None
            run.group_ready_ns = self.clock
        if res.job_completed:
            if self.layout.time_sliced:
                self._after_context_maybe_idle(stream_id)
            if self.plan_t.has_copies:
                grant = self.gpu.enqueue_copy(self.clock, self.resp_bytes, self.suppress_eps)
                run.trace.stages.append(
                    StageRecord(
                        Stage.D2H, f"copy:{grant.engine}", self.clock, grant.start_ns, grant.end_ns
                    )
                )
                self._post(grant.end_ns, COPY_DONE, (run, "d2h"))
            elif self.sc.connection.mode == "direct" and self.sc.connection.mech is Mechanism.LOCAL:
                self._post(self.clock, RESPONSE_DONE, (run,))
            else:
                self._start_response(run)
        self._dispatch()

    # -- multi-context time slicing ------------------------------------------

    def _post_tick(self) -> None:
        self._post(
            self.clock + self.sc.gpu.context_quantum_ns, QUANTUM_TICK, (self._quantum_gen,)
        )
        self._tick_pending = True

    def _activate_context(self, ctx: int | None) -> None:
        self._quantum_gen += 1
        self._tick_pending = False
        if ctx is None:
            return
        if len(self.gpu.contexts_with_work()) >= 2:
            self._post_tick()

    def _after_context_work_arrived(self, ctx: int) -> None:
        gpu = self.gpu
        if gpu.active_context is None:
            gpu.active_context = ctx
            self._activate_context(ctx)
        elif gpu.active_context != ctx and not self._tick_pending:
            # The running context was alone until now; start its eviction timer.
            self._post_tick()

    def _after_context_maybe_idle(self, ctx: int) -> None:
        gpu = self.gpu
        if gpu.active_context == ctx and not gpu.context_has_work(ctx):
            nxt = gpu.rotate_context()
            self._activate_context(nxt)

    def _on_quantum_tick(self, gen: int) -> None:
        if not self.layout.time_sliced or gen != self._quantum_gen:
            return  # stale tick from a superseded quantum
        self._tick_pending = False
        gpu = self.gpu
        others = [c for c in gpu.contexts_with_work() if c != gpu.active_context]
        if others:
            nxt = gpu.rotate_context()
            self._activate_context(nxt)
            self._dispatch()
        elif gpu.active_context is not None and gpu.context_has_work(gpu.active_context):
            self._quantum_gen += 1  # lone context keeps the GPU; fresh quantum on next arrival


def run(scenario: Scenario, seed: int | None = None) -> TraceSet:
    """Execute a scenario; identical (scenario, seed) yields identical traces."""
    return _Simulator(scenario, seed).run()
