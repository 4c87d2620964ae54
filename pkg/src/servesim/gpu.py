"""GPU simulation substrate: execution engines, copy engines, scheduling.

Work arrives as kernel plans (kernels split into equal fixed-duration
blocks) queued on streams. Engines launch blocks from stream heads in a
priority-accommodating round-robin: every high-priority stream with a ready
block is served before any normal one, selection inside a class rotates
from a cursor, and a launched block always runs to completion.

Copies go through a single FCFS queue feeding all copy engines regardless
of priority, mirroring the request-granularity interleaving of real copy
engines. Issuing a copy pushes every execution engine's next availability
back by a fixed interference penalty.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field

from .errors import ConfigError
from .units import NS_PER_MS, round_ns
from .transport import ParamSet
from .workload import DataMode, ModelProfile, Priority

GIB = 1024**3


class SharingKind(enum.Enum):
    MULTI_STREAM = "multi_stream"
    MULTI_CONTEXT = "multi_context"
    MPS = "mps"


@dataclass(frozen=True)
class SharingMode:
    kind: SharingKind = SharingKind.MULTI_STREAM
    max_streams: int | None = None  # multi_stream only; None means one per client

    def __post_init__(self):
        if self.kind is SharingKind.MULTI_STREAM:
            if self.max_streams is not None and self.max_streams < 1:
                raise ConfigError("max_streams must be >= 1")
        elif self.max_streams is not None:
            raise ConfigError(f"max_streams only applies to multi_stream, not {self.kind.value}")


@dataclass
class GpuConfig:
    """Hardware and decomposition constants. Defaults mirror a small
    inference accelerator: 10 execution engines, 2 copy engines, 16 GB."""

    exec_engines: int = 10
    copy_engines: int = 2
    blocks_per_kernel: int = 16
    kernels_per_model: int = 8
    context_quantum_ns: int = 2 * NS_PER_MS
    memory_bytes: int = 16 * GIB
    # Whether process-based sharing (multi-context, MPS) hides the
    # copy-issuance interference with execution.
    context_copy_overlap: bool = True
    # None means: take the value from the scenario ParamSet.
    engine_rate_gflops_per_ms: float | None = None
    interference_ns: int | None = None

    def __post_init__(self):
        if self.exec_engines < 1:
            raise ConfigError("exec_engines must be >= 1")
        if self.copy_engines < 1:
            raise ConfigError("copy_engines must be >= 1")
        if self.blocks_per_kernel < 1 or self.kernels_per_model < 1:
            raise ConfigError("kernel decomposition counts must be >= 1")
        if self.context_quantum_ns <= 0:
            raise ConfigError("context_quantum must be > 0")

    def resolved_rate(self, params: ParamSet) -> float:
        rate = self.engine_rate_gflops_per_ms
        if rate is None:
            rate = params.engine_rate_gflops_per_ms
        if rate <= 0:
            raise ConfigError("engine rate must be > 0")
        return rate

    def resolved_interference(self, params: ParamSet) -> int:
        eps = self.interference_ns
        if eps is None:
            eps = params.interference_ns
        if eps < 0:
            raise ConfigError("interference penalty must be >= 0")
        return eps


@dataclass(frozen=True)
class Kernel:
    blocks: int
    block_ns: int


@dataclass(frozen=True)
class KernelGroup:
    tag: str  # "preprocess" or "inference"
    kernels: tuple[Kernel, ...]

    @property
    def total_ns(self) -> int:
        return sum(k.blocks * k.block_ns for k in self.kernels)


@dataclass(frozen=True)
class KernelPlan:
    groups: tuple[KernelGroup, ...]

    @property
    def total_single_engine_ns(self) -> int:
        return sum(g.total_ns for g in self.groups)


def build_kernel_plan(
    model: ModelProfile, mode: DataMode, cfg: GpuConfig, params: ParamSet
) -> KernelPlan:
    """Partition a model's compute into equal blocks.

    Inference becomes kernels_per_model kernels of blocks_per_kernel blocks;
    raw mode adds a leading single-kernel preprocess group. Total
    single-engine time equals compute GFLOPS over the engine rate, up to
    1 ns quantization per block.
    """
    rate = cfg.resolved_rate(params)
    groups: list[KernelGroup] = []
    if mode is DataMode.RAW and model.preprocess_gflops > 0:
        pre_total = model.preprocess_gflops / rate * NS_PER_MS
        block = round_ns(pre_total / cfg.blocks_per_kernel)
        groups.append(KernelGroup("preprocess", (Kernel(cfg.blocks_per_kernel, block),)))
    inf_total = model.gflops / rate * NS_PER_MS
    per_block = round_ns(inf_total / (cfg.kernels_per_model * cfg.blocks_per_kernel))
    kernels = tuple(
        Kernel(cfg.blocks_per_kernel, per_block) for _ in range(cfg.kernels_per_model)
    )
    groups.append(KernelGroup("inference", kernels))
    return KernelPlan(tuple(groups))


def copy_duration(bytes_: int, params: ParamSet) -> int:
    """H2D/D2H copy service time: fixed setup plus size over PCIe bandwidth."""
    if bytes_ < 0:
        raise ConfigError("bytes must be >= 0")
    return params.beta_copy_ns + round_ns(bytes_ * NS_PER_MS / params.b_pcie)


@dataclass(frozen=True)
class StreamLayout:
    """How clients map onto streams/contexts under a sharing mode."""

    mode: SharingMode
    client_to_stream: dict[int, int]
    n_streams: int
    per_process: bool  # multi-context and MPS run clients in separate processes
    time_sliced: bool  # multi-context only


def apply_sharing_mode(mode: SharingMode, client_ids: list[int]) -> StreamLayout:
    """Map clients onto streams.

    multi_stream packs clients onto max_streams stream FIFOs; MPS behaves
    like one stream per client at the engine level; multi_context gives one
    time-sliced context (with its own stream) per client.
    """
    n = len(client_ids)
    if n < 1:
        raise ConfigError("need at least one client")
    if mode.kind is SharingKind.MULTI_STREAM:
        limit = mode.max_streams if mode.max_streams is not None else n
        mapping = {cid: idx % limit for idx, cid in enumerate(sorted(client_ids))}
        return StreamLayout(mode, mapping, min(limit, n), False, False)
    mapping = {cid: idx for idx, cid in enumerate(sorted(client_ids))}
    if mode.kind is SharingKind.MPS:
        return StreamLayout(mode, mapping, n, True, False)
    return StreamLayout(mode, mapping, n, True, True)


@dataclass
class GpuJob:
    """One request's kernel work, queued FIFO on a stream."""

    key: object  # opaque simulation handle (client id, request index)
    priority: Priority
    plan: KernelPlan
    group_idx: int = 0
    kernel_idx: int = 0
    launched: int = 0  # blocks launched in current kernel
    done: int = 0  # blocks completed in current kernel

    def current_kernel(self) -> Kernel | None:
        if self.group_idx >= len(self.plan.groups):
            return None
        group = self.plan.groups[self.group_idx]
        if self.kernel_idx >= len(group.kernels):
            return None
        return group.kernels[self.kernel_idx]

    @property
    def finished(self) -> bool:
        return self.group_idx >= len(self.plan.groups)


@dataclass
class StreamState:
    id: int
    queue: deque[GpuJob] = field(default_factory=deque)

    def head(self) -> GpuJob | None:
        return self.queue[0] if self.queue else None

    def has_work(self) -> bool:
        return bool(self.queue)


@dataclass(frozen=True)
class Launch:
    engine: int
    stream_id: int
    job: GpuJob
    group_tag: str
    group_idx: int
    block_ns: int
    first_of_group: bool


@dataclass(frozen=True)
class BlockDone:
    kernel_completed: bool
    group_completed: bool
    group_tag: str
    job_completed: bool


@dataclass(frozen=True)
class CopyGrant:
    engine: int
    start_ns: int
    end_ns: int


class GpuState:
    """Engine and stream occupancy. Owned and mutated by the simulation core
    on a single thread; snapshots may be taken for reporting."""

    def __init__(self, cfg: GpuConfig, params: ParamSet, layout: StreamLayout):
        self.cfg = cfg
        self.params = params
        self.layout = layout
        self.engine_avail: list[int] = [0] * cfg.exec_engines
        self.copy_free: list[int] = [0] * cfg.copy_engines
        self.streams: dict[int, StreamState] = {
            sid: StreamState(sid) for sid in range(layout.n_streams)
        }
        self._stream_ids = sorted(self.streams)
        self._cursor: dict[Priority, int] = {Priority.HIGH: 0, Priority.NORMAL: 0}
        self.interference_ns = cfg.resolved_interference(params)
        self.copy_issues = 0
        # Multi-context time slicing.
        self.active_context: int | None = 0 if layout.time_sliced else None
        self.quantum_expires_ns: int | None = None

    # -- stream/context bookkeeping -------------------------------------

    def enqueue_job(self, stream_id: int, job: GpuJob) -> None:
        self.streams[stream_id].queue.append(job)

    def _eligible(self, stream: StreamState) -> bool:
        if self.layout.time_sliced and stream.id != self.active_context:
            return False
        job = stream.head()
        if job is None:
            return False
        kernel = job.current_kernel()
        return kernel is not None and job.launched < kernel.blocks

    def _ready_by_class(self) -> dict[Priority, list[int]]:
        ready: dict[Priority, list[int]] = {Priority.HIGH: [], Priority.NORMAL: []}
        for sid in self._stream_ids:
            stream = self.streams[sid]
            if self._eligible(stream):
                ready[stream.head().priority].append(sid)
        return ready

    def has_ready_block(self) -> bool:
        ready = self._ready_by_class()
        return bool(ready[Priority.HIGH] or ready[Priority.NORMAL])

    def free_engine(self, now: int) -> int | None:
        for idx, avail in enumerate(self.engine_avail):
            if avail <= now:
                return idx
        return None

    def next_engine_avail(self) -> int:
        return min(self.engine_avail)

    # -- block scheduling -------------------------------------------------

    def schedule_next_block(self, now: int) -> Launch | None:
        """Pick and launch one ready block, or return None.

        High-priority streams always win over normal ones; inside a class
        the pick rotates round-robin from the class cursor. The chosen
        engine is the lowest-indexed free one.
        """
        engine = self.free_engine(now)
        if engine is None:
            return None
        ready = self._ready_by_class()
        n = len(self._stream_ids)
        for prio in (Priority.HIGH, Priority.NORMAL):
            candidates = ready[prio]
            if not candidates:
                continue
            cursor = self._cursor[prio]
            pick = min(candidates, key=lambda sid: (sid - cursor) % n)
            job = self.streams[pick].head()
            kernel = job.current_kernel()
            first = job.kernel_idx == 0 and job.launched == 0
            job.launched += 1
            self.engine_avail[engine] = now + kernel.block_ns
            self._cursor[prio] = (pick + 1) % n
            return Launch(
                engine=engine,
                stream_id=pick,
                job=job,
                group_tag=job.plan.groups[job.group_idx].tag,
                group_idx=job.group_idx,
                block_ns=kernel.block_ns,
                first_of_group=first,
            )
        return None

    def on_block_done(self, stream_id: int, job: GpuJob) -> BlockDone:
        """Account one completed block; advance kernel/group/job pointers."""
        group = job.plan.groups[job.group_idx]
        kernel = group.kernels[job.kernel_idx]
        job.done += 1
        kernel_completed = job.done == kernel.blocks
        group_completed = False
        job_completed = False
        tag = group.tag
        if kernel_completed:
            job.kernel_idx += 1
            job.launched = 0
            job.done = 0
            if job.kernel_idx >= len(group.kernels):
                group_completed = True
                job.group_idx += 1
                job.kernel_idx = 0
                if job.group_idx >= len(job.plan.groups):
                    job_completed = True
                    stream = self.streams[stream_id]
                    assert stream.queue[0] is job
                    stream.queue.popleft()
        return BlockDone(kernel_completed, group_completed, tag, job_completed)

    # -- copy engines -------------------------------------------------------

    def enqueue_copy(self, now: int, bytes_: int, suppress_interference: bool = False) -> CopyGrant:
        """FCFS copy admission onto the earliest-free copy engine.

        Priority labels are ignored: copies interleave at whole-request
        granularity. Each issuance delays every execution engine's next
        availability by the interference penalty unless suppressed
        (process-based sharing with copy overlap enabled).
        """
        dur = copy_duration(bytes_, self.params)
        engine = min(range(len(self.copy_free)), key=lambda i: (self.copy_free[i], i))
        start = max(now, self.copy_free[engine])
        end = start + dur
        self.copy_free[engine] = end
        self.copy_issues += 1
        if not suppress_interference and self.interference_ns > 0:
            eps = self.interference_ns
            self.engine_avail = [max(a, now) + eps for a in self.engine_avail]
        return CopyGrant(engine=engine, start_ns=start, end_ns=end)

    # -- multi-context rotation ----------------------------------------------

    def context_has_work(self, ctx: int) -> bool:
        return self.streams[ctx].has_work()

    def contexts_with_work(self) -> list[int]:
        return [sid for sid in self._stream_ids if self.streams[sid].has_work()]

    def rotate_context(self) -> int | None:
        """Advance to the next context with pending work (round-robin)."""
        if not self.layout.time_sliced:
            return None
        busy = self.contexts_with_work()
        if not busy:
            self.active_context = None
            return None
        start = 0 if self.active_context is None else self.active_context + 1
        n = max(self._stream_ids) + 1
        for off in range(n):
            cand = (start + off) % n
            if cand in self.streams and self.streams[cand].has_work():
                self.active_context = cand
                return cand
        return None
