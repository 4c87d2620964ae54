"""Brute-force reference executor for small scenarios.

A deliberately naive re-implementation of the simulation semantics used to
cross-check the event engine: explicit per-request phase machines, flat
action lists scanned for the minimum (time, seq), engine and queue state
recomputed by scanning on every step. No code is shared with the event
engine beyond the parameter container; every cost formula is recomputed
here from first principles.

Ordering contract (same as the engine's documented one): actions run in
strict (time, seq) order with seq assigned when the action is scheduled;
clients are started in id order; link and copy admissions are FCFS in
action order; block launches pick high-priority streams first and rotate
round-robin inside a class.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .transport import Mechanism, ParamSet


def _rnd(x: float) -> int:
    return int(x + 0.5)


@dataclass
class OracleModel:
    gflops: float
    preprocess_gflops: float
    req_bytes: int
    resp_bytes: int


@dataclass
class OracleClient:
    id: int
    high: bool = False
    requests: int = 1
    think_ns: int = 0


@dataclass
class OracleSetup:
    mech: Mechanism
    raw: bool
    model: OracleModel
    clients: list[OracleClient]
    engines: int = 10
    copy_engines: int = 2
    blocks: int = 4
    kernels: int = 2
    eps_ns: int = 0
    max_streams: int | None = None
    params: ParamSet = field(default_factory=ParamSet)


class _Job:
    def __init__(self, key, high, groups):
        self.key = key
        self.high = high
        self.groups = groups  # list of (tag, [(blocks, block_ns), ...])
        self.gi = 0
        self.ki = 0
        self.launched = 0
        self.done = 0

    def kernel(self):
        if self.gi >= len(self.groups):
            return None
        kernels = self.groups[self.gi][1]
        if self.ki >= len(kernels):
            return None
        return kernels[self.ki]


def simulate_oracle(setup: OracleSetup) -> dict[tuple[int, int], int]:
    """Returns completion time (ns) per (client id, request index)."""
    p = setup.params
    mech = setup.mech
    E, C = setup.engines, setup.copy_engines

    def transfer_ns(bytes_: int) -> int:
        if mech is Mechanism.TCP:
            return p.alpha_tcp_ns + _rnd(bytes_ * 1e6 / p.b_tcp)
        return p.alpha_rdma_ns + _rnd(bytes_ * 1e6 / p.b_rdma)

    def wire_ns(bytes_: int) -> int:
        bw = p.b_tcp if mech is Mechanism.TCP else p.b_rdma
        return _rnd(bytes_ * 1e6 / bw)

    def copy_ns(bytes_: int) -> int:
        return p.beta_copy_ns + _rnd(bytes_ * 1e6 / p.b_pcie)

    def group_list() -> list:
        rate = p.engine_rate_gflops_per_ms
        out = []
        if setup.raw:
            pre_block = _rnd(setup.model.preprocess_gflops / rate * 1e6 / setup.blocks)
            out.append(("preprocess", [(setup.blocks, pre_block)]))
        blk = _rnd(setup.model.gflops / rate * 1e6 / (setup.kernels * setup.blocks))
        out.append(("inference", [(setup.blocks, blk) for _ in range(setup.kernels)]))
        return out

    # state
    n_streams = setup.max_streams or len(setup.clients)
    stream_of = {c.id: i % n_streams for i, c in enumerate(sorted(setup.clients, key=lambda c: c.id))}
    queues: dict[int, list[_Job]] = {s: [] for s in range(n_streams)}
    link_free = {"req": 0, "resp": 0}
    copy_free = [0] * C
    eng_free = [0] * E
    cursor = {"high": 0, "normal": 0}
    issued = {c.id: 0 for c in setup.clients}
    done_at: dict[tuple[int, int], int] = {}
    actions: list[tuple[int, int, str, tuple]] = []
    seq = [0]
    wakes = set()

    def sched(t: int, what: str, args: tuple) -> None:
        actions.append((t, seq[0], what, args))
        seq[0] += 1

    def launch_all(t: int) -> None:
        while True:
            free = [e for e in range(E) if eng_free[e] <= t]
            if not free:
                break
            ready_high, ready_norm = [], []
            for s in range(n_streams):
                q = queues[s]
                if not q:
                    continue
                job = q[0]
                k = job.kernel()
                if k is not None and job.launched < k[0]:
                    (ready_high if job.high else ready_norm).append(s)
            if ready_high:
                pool, cls = ready_high, "high"
            elif ready_norm:
                pool, cls = ready_norm, "normal"
            else:
                break
            cur = cursor[cls]
            pick = min(pool, key=lambda s: (s - cur) % n_streams)
            job = queues[pick][0]
            k = job.kernel()
            job.launched += 1
            e = free[0]
            eng_free[e] = t + k[1]
            cursor[cls] = (pick + 1) % n_streams
            sched(t + k[1], "block_done", (pick,))
        # if work remains and engines are all busy, wake at next availability
        any_ready = any(
            q and q[0].kernel() is not None and q[0].launched < q[0].kernel()[0]
            for q in queues.values()
        )
        if any_ready:
            nxt = min(eng_free)
            if nxt > t and nxt not in wakes:
                wakes.add(nxt)
                sched(nxt, "wake", ())

    def start_copy(t: int, bytes_: int, tag: str, args: tuple) -> None:
        dur = copy_ns(bytes_)
        e = min(range(C), key=lambda i: (copy_free[i], i))
        start = max(t, copy_free[e])
        copy_free[e] = start + dur
        if setup.eps_ns:
            for i in range(E):
                eng_free[i] = max(eng_free[i], t) + setup.eps_ns
        sched(start + dur, tag, args)

    def send(t: int, direction: str, bytes_: int, tag: str, args: tuple) -> None:
        w = wire_ns(bytes_)
        grant = max(t, link_free[direction])
        link_free[direction] = grant + w
        sched(grant + transfer_ns(bytes_), tag, args)

    def issue(t: int, cid: int) -> None:
        idx = issued[cid]
        issued[cid] += 1
        if mech is Mechanism.LOCAL:
            enqueue_job(t, cid, idx)
        else:
            send(t, "req", setup.model.req_bytes, "req_arrived", (cid, idx))

    def enqueue_job(t: int, cid: int, idx: int) -> None:
        client = next(c for c in setup.clients if c.id == cid)
        queues[stream_of[cid]].append(_Job((cid, idx), client.high, group_list()))
        launch_all(t)

    def req_arrived(t: int, cid: int, idx: int) -> None:
        if mech in (Mechanism.TCP, Mechanism.RDMA):
            start_copy(t, setup.model.req_bytes, "h2d_done", (cid, idx))
            launch_all(t)
        else:
            enqueue_job(t, cid, idx)

    def finish(t: int, cid: int, idx: int) -> None:
        done_at[(cid, idx)] = t
        client = next(c for c in setup.clients if c.id == cid)
        if issued[cid] < client.requests:
            sched(max(t, t + client.think_ns), "issue", (cid,))

    def job_done(t: int, cid: int, idx: int) -> None:
        if mech in (Mechanism.TCP, Mechanism.RDMA):
            start_copy(t, setup.model.resp_bytes, "d2h_done", (cid, idx))
            launch_all(t)
        elif mech is Mechanism.GDR:
            send(t, "resp", setup.model.resp_bytes, "resp_arrived", (cid, idx))
        else:
            finish(t, cid, idx)

    def block_done(t: int, s: int) -> None:
        job = queues[s][0]
        job.done += 1
        k = job.kernel()
        if job.done == k[0]:
            job.ki += 1
            job.launched = 0
            job.done = 0
            if job.ki >= len(job.groups[job.gi][1]):
                job.gi += 1
                job.ki = 0
                if job.gi >= len(job.groups):
                    queues[s].pop(0)
                    cid, idx = job.key
                    job_done(t, cid, idx)
        launch_all(t)

    handlers = {
        "issue": issue,
        "req_arrived": req_arrived,
        "h2d_done": lambda t, cid, idx: enqueue_job(t, cid, idx),
        "d2h_done": lambda t, cid, idx: send(t, "resp", setup.model.resp_bytes, "resp_arrived", (cid, idx)),
        "resp_arrived": finish,
        "block_done": block_done,
        "wake": lambda t: (wakes.discard(t), launch_all(t)),
    }

    for c in sorted(setup.clients, key=lambda c: c.id):
        sched(0, "issue", (c.id,))
    while actions:
        i = min(range(len(actions)), key=lambda j: (actions[j][0], actions[j][1]))
        t, _, what, args = actions.pop(i)
        handlers[what](t, *args)
    return done_at
