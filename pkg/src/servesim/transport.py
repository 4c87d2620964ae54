"""Transport mechanisms: stage sequences and wire/CPU cost models.

Each mechanism defines which pipeline stages a request passes through and an
affine per-message cost (setup latency plus size over bandwidth). RDMA and
GDR share one wire model; they differ only in whether the payload lands in
host or device memory, which is what removes the H2D/D2H stages for GDR.

A message occupies its directional link for the size-proportional part of
the transfer only; the setup latency is endpoint work that pipelines across
concurrent messages.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, asdict

from .errors import ConfigError
from .units import NS_PER_MS, round_ns


class Mechanism(enum.Enum):
    TCP = "tcp"
    RDMA = "rdma"
    GDR = "gdr"
    LOCAL = "local"


class Stage(enum.Enum):
    REQUEST_XFER = "request_xfer"
    H2D = "h2d"
    PREPROCESS = "preprocess"
    INFERENCE = "inference"
    D2H = "d2h"
    RESPONSE_XFER = "response_xfer"


def memory_family(mech: Mechanism) -> str:
    """Memory semantics family; crossing families at a gateway costs a translation."""
    if mech is Mechanism.TCP:
        return "tcp"
    if mech in (Mechanism.RDMA, Mechanism.GDR):
        return "rdma"
    raise ConfigError("local has no wire family")


@dataclass
class ParamSet:
    """Calibratable latency-model constants.

    Durations are integer ns; bandwidths are bytes per millisecond. The
    defaults reproduce the single-client reference measurements shipped in
    the targets file (see calibrate.default_params for the derivation).
    """

    alpha_tcp_ns: int = 393_846
    alpha_rdma_ns: int = 10_000
    b_tcp: float = 1_437_605.8333621316  # bytes/ms
    b_rdma: float = 3_125_000.0  # bytes/ms, 25 GbE wire rate
    gamma_tcp_ns_per_byte: float = 0.2
    c_ctrl_ns: int = 20_000
    beta_copy_ns: int = 5_143
    b_pcie: float = 3_194_880.000000001  # bytes/ms
    gateway_translate_ns_per_byte: float = 0.19217601555747614
    engine_rate_gflops_per_ms: float = 0.11930710790623317
    interference_ns: int = 150_000
    # One-time RDMA connection setup (queue pairs, registration, metadata
    # exchange). Reported as a scalar, never part of per-request latency.
    rdma_setup_ns: int = 2_000_000

    def __post_init__(self):
        for name in ("b_tcp", "b_rdma", "b_pcie"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")
        for name in (
            "alpha_tcp_ns",
            "alpha_rdma_ns",
            "gamma_tcp_ns_per_byte",
            "c_ctrl_ns",
            "beta_copy_ns",
            "gateway_translate_ns_per_byte",
            "interference_ns",
        ):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.engine_rate_gflops_per_ms <= 0:
            raise ConfigError("engine_rate_gflops_per_ms must be > 0")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ParamSet":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown ParamSet fields: {sorted(unknown)}")
        return cls(**data)


def transfer_time(mech: Mechanism, bytes_: int, p: ParamSet) -> int:
    """Per-message transfer latency in ns (setup plus size over bandwidth)."""
    if bytes_ < 0:
        raise ConfigError("bytes must be >= 0")
    if mech is Mechanism.LOCAL:
        raise ConfigError("local processing has no transfer")
    if mech is Mechanism.TCP:
        return p.alpha_tcp_ns + round_ns(bytes_ * NS_PER_MS / p.b_tcp)
    return p.alpha_rdma_ns + round_ns(bytes_ * NS_PER_MS / p.b_rdma)


def wire_time(mech: Mechanism, bytes_: int, p: ParamSet) -> int:
    """Exclusive link occupancy of one message (the size-proportional part)."""
    if mech is Mechanism.LOCAL:
        raise ConfigError("local processing has no wire")
    bw = p.b_tcp if mech is Mechanism.TCP else p.b_rdma
    return round_ns(bytes_ * NS_PER_MS / bw)


def cpu_cost(mech: Mechanism, bytes_: int, p: ParamSet) -> int:
    """Server CPU time in ns attributable to moving one message.

    TCP charges per byte (stack traversal and copies); RDMA/GDR charge a
    fixed control cost since the NIC moves the data. Copy issuance control
    for RDMA is charged separately by the GPU model.
    """
    if bytes_ < 0:
        raise ConfigError("bytes must be >= 0")
    if mech is Mechanism.TCP:
        return round_ns(bytes_ * p.gamma_tcp_ns_per_byte)
    if mech in (Mechanism.RDMA, Mechanism.GDR):
        return p.c_ctrl_ns
    return 0


def translate_time(bytes_: int, p: ParamSet) -> int:
    return round_ns(bytes_ * p.gateway_translate_ns_per_byte)


@dataclass(frozen=True)
class Hop:
    """One transfer leg of a pipeline: which link it crosses and its mechanism."""

    mech: Mechanism
    src: str
    dst: str


@dataclass(frozen=True)
class PipelinePlan:
    """Ordered stage structure of a request under one connection setup.

    request_hops/response_hops list the transfer legs in order; translate_*
    flag a gateway memory-semantics translation between the legs.
    """

    server_mech: Mechanism
    stages: tuple[Stage, ...]
    request_hops: tuple[Hop, ...]
    response_hops: tuple[Hop, ...]
    translate_request: bool = False
    translate_response: bool = False

    @property
    def has_copies(self) -> bool:
        return Stage.H2D in self.stages


def _server_stages(mech: Mechanism, raw: bool) -> tuple[Stage, ...]:
    stages: list[Stage] = []
    if mech is not Mechanism.LOCAL:
        stages.append(Stage.REQUEST_XFER)
    if mech in (Mechanism.TCP, Mechanism.RDMA):
        stages.append(Stage.H2D)
    if raw:
        stages.append(Stage.PREPROCESS)
    stages.append(Stage.INFERENCE)
    if mech in (Mechanism.TCP, Mechanism.RDMA):
        stages.append(Stage.D2H)
    if mech is not Mechanism.LOCAL:
        stages.append(Stage.RESPONSE_XFER)
    return tuple(stages)


def pipeline_events(mech: Mechanism, raw: bool) -> PipelinePlan:
    """Stage sequence for a direct connection."""
    stages = _server_stages(mech, raw)
    if mech is Mechanism.LOCAL:
        return PipelinePlan(mech, stages, (), ())
    return PipelinePlan(
        server_mech=mech,
        stages=stages,
        request_hops=(Hop(mech, "client", "server"),),
        response_hops=(Hop(mech, "server", "client"),),
    )


def proxy_compose(hop1: Mechanism, hop2: Mechanism, p: ParamSet) -> PipelinePlan:
    """Store-and-forward gateway: full receive on hop1, then forward on hop2.

    Translation cost applies only when the hops differ in memory semantics
    (tcp vs rdma family); a same-family relay just forwards.
    """
    if hop1 is Mechanism.LOCAL:
        raise ConfigError("hop1 cannot be local")
    if hop2 is Mechanism.LOCAL:
        raise ConfigError("hop2 cannot be local")
    del p  # costs are resolved at simulation time; composition is structural
    translate = memory_family(hop1) != memory_family(hop2)
    stages = _server_stages(hop2, raw=False)
    return PipelinePlan(
        server_mech=hop2,
        stages=stages,
        request_hops=(Hop(hop1, "client", "gateway"), Hop(hop2, "gateway", "server")),
        response_hops=(Hop(hop2, "server", "gateway"), Hop(hop1, "gateway", "client")),
        translate_request=translate,
        translate_response=translate,
    )


def proxied_plan_for_mode(hop1: Mechanism, hop2: Mechanism, raw: bool, p: ParamSet) -> PipelinePlan:
    """proxy_compose with the data-mode stages applied to the server side."""
    plan = proxy_compose(hop1, hop2, p)
    return PipelinePlan(
        server_mech=plan.server_mech,
        stages=_server_stages(hop2, raw),
        request_hops=plan.request_hops,
        response_hops=plan.response_hops,
        translate_request=plan.translate_request,
        translate_response=plan.translate_response,
    )


PROXY_CONFIGS: tuple[tuple[Mechanism, Mechanism], ...] = (
    (Mechanism.RDMA, Mechanism.GDR),
    (Mechanism.RDMA, Mechanism.RDMA),
    (Mechanism.TCP, Mechanism.GDR),
    (Mechanism.TCP, Mechanism.RDMA),
    (Mechanism.TCP, Mechanism.TCP),
)
