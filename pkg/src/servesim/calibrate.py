"""Fits latency-model constants from reference measurements.

Two layers:

* fit_linear: ordinary least squares on (bytes, duration) samples, used with
  wirebench output to estimate a link's setup cost and bandwidth.
* fit_scenario_params: solves a ParamSet from a TargetSet of single-client
  reference numbers. Paired byte-size deltas give closed-form solutions for
  the wire and copy constants; the engine rate and gateway translation cost
  start from analytic guesses and are polished by coordinate grid refinement
  against actual single-client simulations. Multi-client behavior is never
  fit; it has to emerge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from .errors import ConfigError, DegenerateDesignError
from .gpu import GpuConfig
from .simcore import Connection, Scenario, run
from .transport import Mechanism, ParamSet
from .units import NS_PER_MS
from .workload import (
    DEFAULT_CATALOG,
    DEFAULT_RAW_BYTES,
    DataMode,
    ModelCatalog,
    make_clients,
    payload_bytes,
)


@dataclass(frozen=True)
class Sample:
    bytes_: int
    duration_ns: int

    def __post_init__(self):
        if self.bytes_ < 0:
            raise ConfigError("sample bytes must be >= 0")
        if self.duration_ns <= 0:
            raise ConfigError("sample duration must be > 0")


@dataclass(frozen=True)
class LinearFit:
    intercept_ns: float
    slope_ns_per_byte: float
    r2: float

    @property
    def bandwidth_bytes_per_ms(self) -> float:
        if self.slope_ns_per_byte <= 0:
            return math.inf
        return NS_PER_MS / self.slope_ns_per_byte


def reduce_samples(samples: list[Sample], how: str = "median") -> list[Sample]:
    """Collapse repeated measurements per size to a robust point.

    Loopback latency has heavy outliers (scheduling, page faults); the wire
    model is fit to per-size medians by default. how="none" keeps raw
    samples.
    """
    if how == "none":
        return list(samples)
    if how != "median":
        raise ConfigError(f"unknown reduction {how!r}; use median or none")
    by_size: dict[int, list[int]] = {}
    for s in samples:
        by_size.setdefault(s.bytes_, []).append(s.duration_ns)
    out = []
    for size in sorted(by_size):
        xs = sorted(by_size[size])
        n = len(xs)
        med = xs[n // 2] if n % 2 else (xs[n // 2 - 1] + xs[n // 2]) // 2
        out.append(Sample(size, med))
    return out


def fit_linear(samples: list[Sample]) -> LinearFit:
    """OLS fit duration = intercept + slope * bytes; reports r squared."""
    if len(samples) < 2:
        raise DegenerateDesignError("need at least 2 samples")
    x = np.array([s.bytes_ for s in samples], dtype=float)
    y = np.array([s.duration_ns for s in samples], dtype=float)
    if np.all(x == x[0]):
        raise DegenerateDesignError("all sample sizes are equal; slope is unidentifiable")
    xm, ym = x.mean(), y.mean()
    sxx = float(((x - xm) ** 2).sum())
    sxy = float(((x - xm) * (y - ym)).sum())
    slope = sxy / sxx
    intercept = ym - slope * xm
    resid = y - (intercept + slope * x)
    sst = float(((y - ym) ** 2).sum())
    r2 = 1.0 - float((resid**2).sum()) / sst if sst > 0 else 1.0
    return LinearFit(intercept, slope, r2)


@dataclass(frozen=True)
class Target:
    name: str
    value: float
    tolerance: float  # same unit as value (ms targets: relative; pct: points)
    relative: bool
    kind: str = "hard"  # hard | soft
    note: str = ""

    def within(self, measured: float) -> bool:
        if self.relative:
            return abs(measured - self.value) <= self.tolerance * abs(self.value)
        return abs(measured - self.value) <= self.tolerance

    def scaled_residual(self, measured: float) -> float:
        scale = self.tolerance * abs(self.value) if self.relative else self.tolerance
        return (measured - self.value) / scale if scale else math.inf


class TargetSet:
    def __init__(self, targets: list[Target]):
        self._targets = {t.name: t for t in targets}

    def __getitem__(self, name: str) -> Target:
        return self._targets[name]

    def __contains__(self, name: str) -> bool:
        return name in self._targets

    def names(self) -> list[str]:
        return list(self._targets)

    def values(self) -> list[Target]:
        return list(self._targets.values())

    @classmethod
    def from_yaml(cls, text: str) -> "TargetSet":
        doc = yaml.safe_load(text)
        targets = []
        for rec in doc["targets"]:
            if "value_ms" in rec:
                value, relative = float(rec["value_ms"]), True
                tol = float(rec.get("tolerance", 0.05))
            elif "value_pct" in rec:
                value, relative = float(rec["value_pct"]), False
                tol = float(rec.get("tolerance_pp", 3.0))
            else:
                raise ConfigError(f"target {rec.get('name')}: needs value_ms or value_pct")
            targets.append(
                Target(
                    name=rec["name"],
                    value=value,
                    tolerance=tol,
                    relative=relative,
                    kind=rec.get("kind", "hard"),
                    note=rec.get("note", ""),
                )
            )
        return cls(targets)


# Names used by the shipped target set.
T_REQ_RAW = "tcp_minus_rdma_request_raw_resnet50_ms"
T_REQ_PRE = "tcp_minus_rdma_request_pre_resnet50_ms"
T_COPY_RAW = "gdr_copy_saving_raw_resnet50_ms"
T_COPY_PRE = "gdr_copy_saving_pre_resnet50_ms"
T_SAV_GDR_RAW = "gdr_total_saving_raw_resnet50_pct"
T_SAV_RDMA_RAW = "rdma_total_saving_raw_resnet50_pct"
T_SAV_GDR_PRE = "gdr_total_saving_pre_resnet50_pct"
T_SAV_RDMA_PRE = "rdma_total_saving_pre_resnet50_pct"
T_PROXY_RDMA = "proxied_tcp_rdma_saving_mnet_raw_pct"
T_PROXY_GDR = "proxied_tcp_gdr_saving_mnet_raw_pct"
T_DM_TCP = "datamov_fraction_mnet_raw_tcp_pct"
T_DM_RDMA = "datamov_fraction_mnet_raw_rdma_pct"
T_DM_GDR = "datamov_fraction_mnet_raw_gdr_pct"
T_CPU_RATIO = "cpu_ratio_deeplab_tcp_over_gdr_min"


DEFAULT_TARGETS_YAML = """\
# Reference single-client measurement targets used to fit the latency model.
# Values come from the hardware study this harness reproduces at desk scale;
# multi-client behavior is never fit against, it has to emerge.
targets:
  - name: tcp_minus_rdma_request_raw_resnet50_ms
    value_ms: 0.73
    tolerance: 0.05
    kind: hard
    note: request-time gap, raw 640x480x3 image, single client
  - name: tcp_minus_rdma_request_pre_resnet50_ms
    value_ms: 0.61
    tolerance: 0.05
    kind: hard
    note: request-time gap, preprocessed 3x224x224 tensor, single client
  - name: gdr_copy_saving_raw_resnet50_ms
    value_ms: 0.3
    tolerance: 0.05
    kind: hard
    note: total saved by skipping H2D+D2H, raw mode
  - name: gdr_copy_saving_pre_resnet50_ms
    value_ms: 0.2
    tolerance: 0.05
    kind: hard
    note: total saved by skipping H2D+D2H, preprocessed mode
  - name: gdr_total_saving_raw_resnet50_pct
    value_pct: 20.3
    tolerance_pp: 3
    kind: hard
    note: single-client end-to-end saving vs TCP, with server preprocessing
  - name: rdma_total_saving_raw_resnet50_pct
    value_pct: 11.4
    tolerance_pp: 3
    kind: hard
    note: single-client end-to-end saving vs TCP, with server preprocessing
  - name: gdr_total_saving_pre_resnet50_pct
    value_pct: 23.2
    tolerance_pp: 3
    kind: hard
    note: single-client end-to-end saving vs TCP, preprocessed inputs
  - name: rdma_total_saving_pre_resnet50_pct
    value_pct: 15.2
    tolerance_pp: 3
    kind: hard
    note: single-client end-to-end saving vs TCP, preprocessed inputs
  - name: proxied_tcp_rdma_saving_mnet_raw_pct
    value_pct: 23.0
    tolerance_pp: 5
    kind: hard
    note: gateway last-hop RDMA vs end-to-end TCP, single client
  - name: proxied_tcp_gdr_saving_mnet_raw_pct
    value_pct: 57.0
    tolerance_pp: 8
    kind: soft
    note: >
      gateway last-hop GDR vs end-to-end TCP, single client. Not jointly
      attainable with the copy-saving targets above (the implied copy cost
      differs by ~1 ms between the two measurement sets); the fit favors the
      copy-saving targets and this one is reported as residual.
  - name: datamov_fraction_mnet_raw_tcp_pct
    value_pct: 62.0
    tolerance_pp: 12
    kind: soft
    note: single-client share of time in request+copies+response
  - name: datamov_fraction_mnet_raw_rdma_pct
    value_pct: 42.0
    tolerance_pp: 12
    kind: soft
    note: single-client share of time in request+copies+response
  - name: datamov_fraction_mnet_raw_gdr_pct
    value_pct: 30.0
    tolerance_pp: 12
    kind: soft
    note: single-client share of time in request+copies+response
"""


def default_targets() -> TargetSet:
    return TargetSet.from_yaml(DEFAULT_TARGETS_YAML)


@dataclass
class FitReport:
    params: ParamSet
    residuals: dict[str, tuple[float, float, bool]] = field(default_factory=dict)
    # name -> (target value, measured value, within tolerance)
    warnings: list[str] = field(default_factory=list)
    derived_preprocess_gflops_resnet50: float = 0.0

    def table(self) -> str:
        lines = [f"{'target':<44}{'want':>10}{'got':>10}  ok"]
        for name, (want, got, ok) in self.residuals.items():
            lines.append(f"{name:<44}{want:>10.3f}{got:>10.3f}  {'yes' if ok else 'NO'}")
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines)


def _wave_factor(cfg: GpuConfig) -> float:
    """single-engine time over lone-request wall time for one kernel group."""
    b = cfg.blocks_per_kernel
    return b / math.ceil(b / cfg.exec_engines)


def solve_wire_and_copy(targets: TargetSet, raw_bytes: int = DEFAULT_RAW_BYTES,
                        catalog: ModelCatalog = DEFAULT_CATALOG) -> dict:
    """Closed-form solves for the wire and copy constants from paired deltas."""
    resnet = catalog.get("ResNet50")
    pre_bytes = resnet.input_bytes
    resp_bytes = resnet.output_bytes
    if raw_bytes == pre_bytes:
        raise DegenerateDesignError("raw and preprocessed request sizes are equal")
    b_rdma = 3_125_000.0  # 25 GbE wire rate
    alpha_rdma_ns = 10_000
    dreq_raw = targets[T_REQ_RAW].value
    dreq_pre = targets[T_REQ_PRE].value
    dslope = (dreq_raw - dreq_pre) / (raw_bytes - pre_bytes)  # ms per byte
    if dslope <= -1.0 / b_rdma:
        raise ConfigError("request-delta targets imply non-positive TCP bandwidth")
    b_tcp = 1.0 / (dslope + 1.0 / b_rdma)
    dalpha_ms = dreq_raw - raw_bytes * dslope
    alpha_tcp_ns = alpha_rdma_ns + round(dalpha_ms * NS_PER_MS)
    copy_raw = targets[T_COPY_RAW].value
    copy_pre = targets[T_COPY_PRE].value
    b_pcie = (raw_bytes - pre_bytes) / (copy_raw - copy_pre)
    beta_ms = (copy_pre - (pre_bytes + resp_bytes) / b_pcie) / 2.0
    if beta_ms < 0:
        raise ConfigError("copy-saving targets imply negative copy setup cost")
    return {
        "alpha_tcp_ns": alpha_tcp_ns,
        "alpha_rdma_ns": alpha_rdma_ns,
        "b_tcp": b_tcp,
        "b_rdma": b_rdma,
        "beta_copy_ns": round(beta_ms * NS_PER_MS),
        "b_pcie": b_pcie,
    }


def solve_engine_rate(targets: TargetSet, wire: dict, cfg: GpuConfig | None = None,
                      raw_bytes: int = DEFAULT_RAW_BYTES,
                      catalog: ModelCatalog = DEFAULT_CATALOG) -> tuple[float, float]:
    """Engine rate and ResNet50 preprocess cost from the total-saving targets.

    Balances the GDR and RDMA percentage targets: the absolute savings are
    fixed by the wire/copy constants, so the TCP total that splits the error
    evenly between the paired targets is their analytic optimum.
    """
    cfg = cfg or GpuConfig()
    resnet = catalog.get("ResNet50")
    pre_bytes = resnet.input_bytes
    resp_bytes = resnet.output_bytes
    dslope = (targets[T_REQ_RAW].value - targets[T_REQ_PRE].value) / (raw_bytes - pre_bytes)
    dalpha = targets[T_REQ_RAW].value - raw_bytes * dslope
    dresp = dalpha + resp_bytes * dslope
    s_gdr_raw = targets[T_REQ_RAW].value + dresp + targets[T_COPY_RAW].value
    s_rdma_raw = s_gdr_raw - targets[T_COPY_RAW].value
    s_gdr_pre = targets[T_REQ_PRE].value + dresp + targets[T_COPY_PRE].value
    s_rdma_pre = s_gdr_pre - targets[T_COPY_PRE].value
    t_raw = (s_gdr_raw + s_rdma_raw) / ((targets[T_SAV_GDR_RAW].value + targets[T_SAV_RDMA_RAW].value) / 100.0)
    t_pre = (s_gdr_pre + s_rdma_pre) / ((targets[T_SAV_GDR_PRE].value + targets[T_SAV_RDMA_PRE].value) / 100.0)
    # TCP single-client stage costs in ms from the solved wire constants.
    req_pre = wire["alpha_tcp_ns"] / NS_PER_MS + pre_bytes / wire["b_tcp"]
    resp = wire["alpha_tcp_ns"] / NS_PER_MS + resp_bytes / wire["b_tcp"]
    h2d_pre = wire["beta_copy_ns"] / NS_PER_MS + pre_bytes / wire["b_pcie"]
    d2h = wire["beta_copy_ns"] / NS_PER_MS + resp_bytes / wire["b_pcie"]
    inf_wall = t_pre - (req_pre + h2d_pre + d2h + resp)
    if inf_wall <= 0:
        raise ConfigError("saving targets leave no room for inference time")
    wf = _wave_factor(cfg)
    rate = resnet.gflops / (inf_wall * wf)
    pre_wall = (t_raw - t_pre) - (raw_bytes - pre_bytes) / wire["b_tcp"] - (raw_bytes - pre_bytes) / wire["b_pcie"]
    if pre_wall <= 0:
        raise ConfigError("saving targets leave no room for preprocessing time")
    pg_resnet = pre_wall * rate * wf
    return rate, pg_resnet


def solve_gateway_translate(target_pct: float, params: ParamSet,
                            catalog: ModelCatalog = DEFAULT_CATALOG,
                            raw_bytes: int = DEFAULT_RAW_BYTES) -> float:
    """Translation cost per byte from the proxied TCP/RDMA saving target.

    The TCP/TCP total does not depend on the translation cost, so the target
    percentage gives one linear equation in it.
    """
    zero = replace(params, gateway_translate_ns_per_byte=0.0)
    tt = _measure_total("MobileNetV3", DataMode.RAW, Connection.proxied(Mechanism.TCP, Mechanism.TCP), zero, raw_bytes, catalog)
    tr = _measure_total("MobileNetV3", DataMode.RAW, Connection.proxied(Mechanism.TCP, Mechanism.RDMA), zero, raw_bytes, catalog)
    model = catalog.get("MobileNetV3")
    bytes_total = payload_bytes(model, DataMode.RAW, "request", raw_bytes) + model.output_bytes
    want_ms = tt * (1.0 - target_pct / 100.0)
    g_ns_per_byte = (want_ms - tr) * NS_PER_MS / bytes_total
    return max(0.0, g_ns_per_byte)


def gamma_for_cpu_ratio(ratio: float, model_name: str, params: ParamSet,
                        catalog: ModelCatalog = DEFAULT_CATALOG,
                        raw_bytes: int = DEFAULT_RAW_BYTES) -> float:
    """Per-byte TCP CPU cost that puts CPU(tcp)/CPU(gdr) at `ratio` for a model."""
    model = catalog.get(model_name)
    total_bytes = payload_bytes(model, DataMode.RAW, "request", raw_bytes) + model.output_bytes
    gdr_cpu = 2 * params.c_ctrl_ns
    return ratio * gdr_cpu / total_bytes


def _single_scenario(model: str, mode: DataMode, conn: Connection, params: ParamSet,
                     raw_bytes: int, catalog: ModelCatalog, requests: int = 12) -> Scenario:
    return Scenario(
        model=model,
        data_mode=mode,
        connection=conn,
        clients=make_clients(1, request_count=requests),
        params=params,
        warmup_requests=2,
        raw_bytes=raw_bytes,
        catalog=catalog,
    )


def _measure_total(model: str, mode: DataMode, conn: Connection, params: ParamSet,
                   raw_bytes: int, catalog: ModelCatalog) -> float:
    """Mean single-client total in ms (simulated)."""
    ts = run(_single_scenario(model, mode, conn, params, raw_bytes, catalog))
    tot = [t.total_ns for t in ts.completed()]
    return sum(tot) / len(tot) / NS_PER_MS


def _measure_request_time(model: str, mode: DataMode, mech: Mechanism, params: ParamSet,
                          raw_bytes: int, catalog: ModelCatalog) -> float:
    ts = run(_single_scenario(model, mode, Connection.direct(mech), params, raw_bytes, catalog))
    from .transport import Stage  # local import to avoid cycle noise

    vals = []
    for t in ts.completed():
        vals.append(sum(s.duration_ns for s in t.stages if s.stage is Stage.REQUEST_XFER))
    return sum(vals) / len(vals) / NS_PER_MS


def measure_targets(params: ParamSet, catalog: ModelCatalog = DEFAULT_CATALOG,
                    raw_bytes: int = DEFAULT_RAW_BYTES) -> dict[str, float]:
    """Simulate the single-client reference quantities under `params`."""
    from .metrics import breakdown_set, data_movement_fraction

    out: dict[str, float] = {}
    req = {}
    totals = {}
    for mode in (DataMode.RAW, DataMode.PREPROCESSED):
        for mech in (Mechanism.TCP, Mechanism.RDMA, Mechanism.GDR):
            totals[(mode, mech)] = _measure_total(
                "ResNet50", mode, Connection.direct(mech), params, raw_bytes, catalog
            )
            req[(mode, mech)] = _measure_request_time("ResNet50", mode, mech, params, raw_bytes, catalog)
    out[T_REQ_RAW] = req[(DataMode.RAW, Mechanism.TCP)] - req[(DataMode.RAW, Mechanism.RDMA)]
    out[T_REQ_PRE] = req[(DataMode.PREPROCESSED, Mechanism.TCP)] - req[(DataMode.PREPROCESSED, Mechanism.RDMA)]
    out[T_COPY_RAW] = totals[(DataMode.RAW, Mechanism.RDMA)] - totals[(DataMode.RAW, Mechanism.GDR)]
    out[T_COPY_PRE] = totals[(DataMode.PREPROCESSED, Mechanism.RDMA)] - totals[(DataMode.PREPROCESSED, Mechanism.GDR)]
    out[T_SAV_GDR_RAW] = 100.0 * (1 - totals[(DataMode.RAW, Mechanism.GDR)] / totals[(DataMode.RAW, Mechanism.TCP)])
    out[T_SAV_RDMA_RAW] = 100.0 * (1 - totals[(DataMode.RAW, Mechanism.RDMA)] / totals[(DataMode.RAW, Mechanism.TCP)])
    out[T_SAV_GDR_PRE] = 100.0 * (1 - totals[(DataMode.PREPROCESSED, Mechanism.GDR)] / totals[(DataMode.PREPROCESSED, Mechanism.TCP)])
    out[T_SAV_RDMA_PRE] = 100.0 * (1 - totals[(DataMode.PREPROCESSED, Mechanism.RDMA)] / totals[(DataMode.PREPROCESSED, Mechanism.TCP)])
    tt = _measure_total("MobileNetV3", DataMode.RAW, Connection.proxied(Mechanism.TCP, Mechanism.TCP), params, raw_bytes, catalog)
    tr = _measure_total("MobileNetV3", DataMode.RAW, Connection.proxied(Mechanism.TCP, Mechanism.RDMA), params, raw_bytes, catalog)
    tg = _measure_total("MobileNetV3", DataMode.RAW, Connection.proxied(Mechanism.TCP, Mechanism.GDR), params, raw_bytes, catalog)
    out[T_PROXY_RDMA] = 100.0 * (1 - tr / tt)
    out[T_PROXY_GDR] = 100.0 * (1 - tg / tt)
    model = catalog.get("MobileNetV3")
    rb = payload_bytes(model, DataMode.RAW, "request", raw_bytes)
    for mech, name in ((Mechanism.TCP, T_DM_TCP), (Mechanism.RDMA, T_DM_RDMA), (Mechanism.GDR, T_DM_GDR)):
        ts = run(_single_scenario("MobileNetV3", DataMode.RAW, Connection.direct(mech), params, raw_bytes, catalog))
        bds = breakdown_set(ts, params, rb, model.output_bytes)
        out[name] = 100.0 * data_movement_fraction(bds)
    return out


def _objective(measured: dict[str, float], targets: TargetSet) -> float:
    total = 0.0
    for t in targets.values():
        if t.name in measured:
            total += t.scaled_residual(measured[t.name]) ** 2
    return total


def fit_scenario_params(
    targets: TargetSet,
    catalog: ModelCatalog = DEFAULT_CATALOG,
    raw_bytes: int = DEFAULT_RAW_BYTES,
    refine: bool = True,
    residual_warn_threshold: float = 1.0,
) -> FitReport:
    """Solve a ParamSet from single-client targets.

    Deterministic: analytic seeds followed by fixed coordinate-grid passes on
    the engine rate and gateway translation cost. Hard targets left outside
    tolerance are reported as warnings; the params are still returned.
    """
    wire = solve_wire_and_copy(targets, raw_bytes, catalog)
    rate, pg_resnet = solve_engine_rate(targets, wire, None, raw_bytes, catalog)
    cat = _catalog_with_resnet_pre(catalog, pg_resnet)
    params = ParamSet(
        alpha_tcp_ns=wire["alpha_tcp_ns"],
        alpha_rdma_ns=wire["alpha_rdma_ns"],
        b_tcp=wire["b_tcp"],
        b_rdma=wire["b_rdma"],
        beta_copy_ns=wire["beta_copy_ns"],
        b_pcie=wire["b_pcie"],
        engine_rate_gflops_per_ms=rate,
    )
    if T_PROXY_RDMA in targets:
        g = solve_gateway_translate(targets[T_PROXY_RDMA].value, params, cat, raw_bytes)
        params = replace(params, gateway_translate_ns_per_byte=g)
    if refine:
        params = _grid_refine(params, targets, cat, raw_bytes)
    measured = measure_targets(params, cat, raw_bytes)
    report = FitReport(params=params)
    for t in targets.values():
        if t.name not in measured:
            continue
        ok = t.within(measured[t.name])
        report.residuals[t.name] = (t.value, measured[t.name], ok)
        if not ok and t.kind == "hard" and abs(t.scaled_residual(measured[t.name])) > residual_warn_threshold:
            report.warnings.append(
                f"hard target {t.name} missed: want {t.value:.4g}, got {measured[t.name]:.4g}"
            )
    report.derived_preprocess_gflops_resnet50 = pg_resnet
    return report


def _catalog_with_resnet_pre(catalog: ModelCatalog, pg: float) -> ModelCatalog:
    from .workload import replace_preprocess

    cat = ModelCatalog(tuple(catalog.get(n) for n in catalog.names()))
    cat.add(replace_preprocess(catalog.get("ResNet50"), pg))
    return cat


def _grid_refine(params: ParamSet, targets: TargetSet, catalog: ModelCatalog,
                 raw_bytes: int) -> ParamSet:
    """Two shrinking coordinate-grid passes over the simulated objective."""
    fields = [
        ("engine_rate_gflops_per_ms", 0.04),
        ("gateway_translate_ns_per_byte", 0.2),
    ]
    best = params
    best_score = _objective(measure_targets(best, catalog, raw_bytes), targets)
    for name, span in fields:
        for pass_ in range(2):
            width = span * (0.25**pass_)
            center = getattr(best, name)
            candidates = [center * (1 + width * k / 3) for k in (-3, -2, -1, 1, 2, 3)]
            for cand in candidates:
                if cand <= 0:
                    continue
                trial = replace(best, **{name: cand})
                score = _objective(measure_targets(trial, catalog, raw_bytes), targets)
                if score < best_score - 1e-12:
                    best, best_score = trial, score
    return best


def default_params() -> ParamSet:
    """The shipped ParamSet: analytic fit to the default targets, no grid."""
    targets = default_targets()
    wire = solve_wire_and_copy(targets)
    rate, pg = solve_engine_rate(targets, wire)
    params = ParamSet(
        alpha_tcp_ns=wire["alpha_tcp_ns"],
        alpha_rdma_ns=wire["alpha_rdma_ns"],
        b_tcp=wire["b_tcp"],
        b_rdma=wire["b_rdma"],
        beta_copy_ns=wire["beta_copy_ns"],
        b_pcie=wire["b_pcie"],
        engine_rate_gflops_per_ms=rate,
    )
    g = solve_gateway_translate(targets[T_PROXY_RDMA].value, params,
                                _catalog_with_resnet_pre(DEFAULT_CATALOG, pg))
    return replace(params, gateway_translate_ns_per_byte=g)


def params_to_yaml(params: ParamSet) -> str:
    head = (
        "# Latency-model constants fitted from the shipped single-client targets.\n"
        "# Durations are ns; bandwidths are bytes per millisecond.\n"
    )
    return head + yaml.safe_dump(params.to_dict(), sort_keys=True)


def params_from_yaml(text: str) -> ParamSet:
    return ParamSet.from_dict(yaml.safe_load(text))
