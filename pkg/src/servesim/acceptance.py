"""Acceptance suite: one check per criterion, shared by CLI and tests.

Each criterion evaluates real simulator output against the tolerances
shipped in the figure packs. Three sub-checks are structurally out of reach
of this model family (see the pack files' known_gap notes); they run
anyway and report honest FAILs.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path

from .calibrate import Sample, fit_linear, reduce_samples
from .gpu import GpuConfig, SharingKind, SharingMode
from .metrics import breakdown_set
from .oracle import OracleClient, OracleModel, OracleSetup, simulate_oracle
from .reproduce import FigureResult, run_figure
from .simcore import Connection, Scenario, TraceSet, run
from .transport import Mechanism, ParamSet, Stage
from .workload import (
    ClientSpec,
    DataMode,
    ModelCatalog,
    ModelProfile,
    Priority,
    make_clients,
    payload_bytes,
)


@dataclass
class CriterionResult:
    cid: str
    name: str
    passed: bool
    details: list[str] = field(default_factory=list)
    known_gap: str = ""


class FigureCache:
    def __init__(self):
        self._results: dict[str, FigureResult] = {}

    def get(self, figure: str) -> FigureResult:
        if figure not in self._results:
            self._results[figure] = run_figure(figure)
        return self._results[figure]


def _from_checks(cid: str, name: str, fig: FigureResult,
                 check_names: list[str] | None = None) -> CriterionResult:
    checks = fig.checks if check_names is None else [
        c for c in fig.checks if c.name in check_names
    ]
    details = [f"[{'PASS' if c.passed else 'FAIL'}] {c.name}: {c.detail}" for c in checks]
    gap = "; ".join(c.known_gap.strip() for c in checks if not c.passed and c.known_gap)
    return CriterionResult(cid, name, all(c.passed for c in checks), details, gap)


# -- criterion 1: conservation and pipeline shape ---------------------------

_BATTERY_SHARINGS = (
    SharingMode(),
    SharingMode(SharingKind.MULTI_STREAM, 1),
    SharingMode(SharingKind.MPS),
    SharingMode(SharingKind.MULTI_CONTEXT),
)


def _battery() -> list[Scenario]:
    scenarios = []
    for mech in (Mechanism.LOCAL, Mechanism.TCP, Mechanism.RDMA, Mechanism.GDR):
        for mode in (DataMode.RAW, DataMode.PREPROCESSED):
            scenarios.append(
                Scenario(
                    model="MobileNetV3",
                    data_mode=mode,
                    connection=Connection.direct(mech),
                    clients=make_clients(3, high_priority=1, request_count=8),
                    warmup_requests=2,
                )
            )
    for hop1, hop2 in ((Mechanism.TCP, Mechanism.TCP), (Mechanism.TCP, Mechanism.RDMA),
                       (Mechanism.TCP, Mechanism.GDR), (Mechanism.RDMA, Mechanism.RDMA),
                       (Mechanism.RDMA, Mechanism.GDR)):
        scenarios.append(
            Scenario(
                model="ResNet50",
                data_mode=DataMode.RAW,
                connection=Connection.proxied(hop1, hop2),
                clients=make_clients(2, request_count=6),
                warmup_requests=1,
            )
        )
    for sharing in _BATTERY_SHARINGS[1:]:
        scenarios.append(
            Scenario(
                model="EfficientNetB0",
                data_mode=DataMode.RAW,
                connection=Connection.direct(Mechanism.RDMA),
                clients=make_clients(4, request_count=6),
                sharing=sharing,
                warmup_requests=1,
            )
        )
    scenarios.append(
        Scenario(
            model="DeepLabV3_ResNet50",
            data_mode=DataMode.RAW,
            connection=Connection.direct(Mechanism.TCP),
            clients=make_clients(2, request_count=5),
            warmup_requests=1,
        )
    )
    return scenarios


def _collapse(kinds: list[Stage]) -> list[Stage]:
    out: list[Stage] = []
    for k in kinds:
        if not out or out[-1] is not k:
            out.append(k)
    return out


def check_conservation_and_shape() -> CriterionResult:
    problems: list[str] = []
    n_requests = 0
    for scenario in _battery():
        ts = run(scenario)
        model = scenario.catalog.get(scenario.model)
        rb = payload_bytes(model, scenario.data_mode, "request", scenario.raw_bytes)
        pb = payload_bytes(model, scenario.data_mode, "response", scenario.raw_bytes)
        # breakdown() asserts the exact conservation identity per request
        breakdown_set(ts, scenario.params, rb, pb, include_warmup=True)
        plan_stages = list(ts.plan.stages)
        for t in ts.traces:
            n_requests += 1
            if not t.completed:
                problems.append(f"{ts.scenario_label}: request {t.client_id}/{t.request_index} incomplete")
                continue
            kinds = [s.stage for s in t.stages]
            if _collapse(kinds) != plan_stages:
                problems.append(
                    f"{ts.scenario_label}: stage sequence {kinds} != plan {plan_stages}"
                )
            if ts.plan.server_mech in (Mechanism.GDR, Mechanism.LOCAL):
                if any(s.stage in (Stage.H2D, Stage.D2H) for s in t.stages):
                    problems.append(f"{ts.scenario_label}: copy stage in a copy-free pipeline")
            if ts.plan.server_mech is Mechanism.LOCAL:
                if any(s.stage in (Stage.REQUEST_XFER, Stage.RESPONSE_XFER) for s in t.stages):
                    problems.append(f"{ts.scenario_label}: transfer stage in local pipeline")
            prev_end = t.issue_ns
            for s in t.stages:
                if not (s.ready_ns == prev_end and s.ready_ns <= s.start_ns <= s.end_ns):
                    problems.append(
                        f"{ts.scenario_label}: non-contiguous stage chain at {s.stage.value}"
                    )
                    break
                prev_end = s.end_ns
            else:
                if prev_end != t.done_ns:
                    problems.append(f"{ts.scenario_label}: last stage does not end at completion")
    details = [f"checked {n_requests} requests across {len(_battery())} scenarios"]
    details += problems[:10]
    return CriterionResult("C1", "conservation and pipeline shape", not problems, details)


# -- criterion 2: oracle equivalence ----------------------------------------


def _oracle_cases() -> list[OracleSetup]:
    cases = []
    model = OracleModel(gflops=0.5, preprocess_gflops=0.1, req_bytes=40_000, resp_bytes=2_000)
    for mech, n_clients, n_req, blocks in itertools.product(
        (Mechanism.LOCAL, Mechanism.TCP, Mechanism.RDMA, Mechanism.GDR),
        (1, 2, 3),
        (1, 2),
        (1, 2, 4),
    ):
        clients = [
            OracleClient(id=i, high=(i == 0 and n_clients > 1), requests=n_req)
            for i in range(n_clients)
        ]
        cases.append(
            OracleSetup(
                mech=mech, raw=True, model=model, clients=clients,
                engines=2, copy_engines=1, blocks=blocks, kernels=2, eps_ns=50_000,
            )
        )
        clients2 = [OracleClient(id=i, requests=n_req, think_ns=1_000_000) for i in range(n_clients)]
        cases.append(
            OracleSetup(
                mech=mech, raw=False, model=model, clients=clients2,
                engines=2, copy_engines=1, blocks=blocks, kernels=1, eps_ns=0,
            )
        )
    return cases


def _scenario_for_oracle(setup: OracleSetup) -> Scenario:
    profile = ModelProfile(
        name="oracle-model",
        gflops=setup.model.gflops,
        input_shape=(1, setup.model.req_bytes // 4),
        output_shapes=((1, setup.model.resp_bytes // 4),),
        preprocess_gflops=setup.model.preprocess_gflops,
    )
    catalog = ModelCatalog((profile,))
    clients = [
        ClientSpec(
            id=c.id,
            priority=Priority.HIGH if c.high else Priority.NORMAL,
            request_count=c.requests,
            think_time_ns=c.think_ns,
        )
        for c in setup.clients
    ]
    return Scenario(
        model="oracle-model",
        data_mode=DataMode.RAW if setup.raw else DataMode.PREPROCESSED,
        connection=Connection.direct(setup.mech),
        clients=clients,
        gpu=GpuConfig(
            exec_engines=setup.engines,
            copy_engines=setup.copy_engines,
            blocks_per_kernel=setup.blocks,
            kernels_per_model=setup.kernels,
            interference_ns=setup.eps_ns,
        ),
        params=setup.params,
        warmup_requests=0,
        raw_bytes=setup.model.req_bytes,
        catalog=catalog,
    )


def check_oracle_equivalence() -> CriterionResult:
    mismatches = []
    cases = _oracle_cases()
    for i, setup in enumerate(cases):
        expected = simulate_oracle(setup)
        ts = run(_scenario_for_oracle(setup))
        got = {(t.client_id, t.request_index): t.done_ns for t in ts.traces}
        if got != expected:
            diffs = {
                k: (expected.get(k), got.get(k))
                for k in set(expected) | set(got)
                if expected.get(k) != got.get(k)
            }
            mismatches.append(f"case {i} ({setup.mech.value}, n={len(setup.clients)}): {diffs}")
    details = [f"{len(cases)} enumerated scenarios compared exactly"]
    details += mismatches[:5]
    return CriterionResult("C2", "brute-force oracle equivalence", not mismatches, details)


# -- criteria mapped onto figure packs ---------------------------------------


def check_calibration_deltas(cache: FigureCache) -> CriterionResult:
    return _from_checks(
        "C3", "calibration fidelity (request/copy deltas)", cache.get("fig5"),
        ["request-delta-raw", "request-delta-preprocessed", "copy-saving-raw", "copy-saving-preprocessed"],
    )


def check_single_client_savings(cache: FigureCache) -> CriterionResult:
    return _from_checks(
        "C4", "single-client savings vs TCP", cache.get("fig5"),
        ["gdr-saving-raw", "rdma-saving-raw", "gdr-saving-preprocessed", "rdma-saving-preprocessed"],
    )


def check_emergent_scalability(cache: FigureCache) -> CriterionResult:
    return _from_checks("C5", "emergent scalability (held-out sweep)", cache.get("fig9"))


def check_concurrency_limiting(cache: FigureCache) -> CriterionResult:
    return _from_checks("C6", "concurrency limiting via stream count", cache.get("fig11"))


def check_priority(cache: FigureCache) -> CriterionResult:
    return _from_checks("C7", "priority client behavior", cache.get("fig12"))


def check_cov_ordering(cache: FigureCache) -> CriterionResult:
    return _from_checks("C8", "processing-time CoV ordering", cache.get("fig11c"))


def check_proxied(cache: FigureCache) -> CriterionResult:
    return _from_checks("C9", "proxied connections", cache.get("fig10"))


def check_sharing_modes(cache: FigureCache) -> CriterionResult:
    return _from_checks("C10", "GPU sharing mode comparison", cache.get("fig13"))


def check_cpu_model(cache: FigureCache) -> CriterionResult:
    return _from_checks("C11", "CPU usage model", cache.get("fig7"))


# -- criterion 12: wirebench + calibrate integration --------------------------


def check_wirebench(count: int = 200) -> CriterionResult:
    from . import wirebench as wb

    details = []
    server = wb.EchoServer()
    server.start()
    try:
        result = wb.measure(server.address, [0, 4096, 65536, 1048576], count=count, warmup=20)
        ok = not result.failures
        if result.failures:
            details.append(f"failures: {result.failures}")
        fit = fit_linear(reduce_samples(result.samples))
        details.append(
            f"per-size medians fit: r2={fit.r2:.4f} slope={fit.slope_ns_per_byte:.4f} ns/B "
            f"setup={fit.intercept_ns / 1000:.1f} us"
        )
        ok = ok and fit.r2 > 0.9 and fit.slope_ns_per_byte > 0
        reports = wb.concurrent_clients(server.address, 8, 64, 100)
        crosstalk = sum(r.mismatches for r in reports)
        incomplete = [r.client_id for r in reports if r.round_trips != 100]
        details.append(f"8 concurrent clients: crosstalk={crosstalk} incomplete={incomplete}")
        ok = ok and crosstalk == 0 and not incomplete
    finally:
        server.stop()
    return CriterionResult("C12", "wirebench + linear fit integration", ok, details)


# -- criterion 13: determinism ------------------------------------------------


def check_determinism(out_dir: Path | None = None, seed: int = 0) -> CriterionResult:
    scenario = Scenario(
        model="ResNet50",
        data_mode=DataMode.RAW,
        connection=Connection.direct(Mechanism.RDMA),
        clients=make_clients(4, high_priority=1, request_count=30),
        warmup_requests=5,
        seed=seed,
        noise_sigma=0.05,  # exercise the seeded noise path as well
    )
    first = run(scenario, seed).csv_lines()
    second = run(scenario, seed).csv_lines()
    identical = first == second
    other_seed = run(scenario, seed + 1).csv_lines()
    differs = other_seed != first
    if out_dir is not None:
        (out_dir / "determinism_trace.csv").write_text("\n".join(first) + "\n")
    details = [
        f"same seed: {'bit-identical' if identical else 'MISMATCH'} ({len(first)} rows)",
        f"different seed with noise: {'differs as expected' if differs else 'unexpectedly identical'}",
    ]
    return CriterionResult("C13", "deterministic replay", identical and differs, details)


def run_all(out_dir: Path | None = None, seed: int = 0,
            skip_wirebench: bool = False) -> list[CriterionResult]:
    cache = FigureCache()
    results = [
        check_conservation_and_shape(),
        check_oracle_equivalence(),
        check_calibration_deltas(cache),
        check_single_client_savings(cache),
        check_emergent_scalability(cache),
        check_concurrency_limiting(cache),
        check_priority(cache),
        check_cov_ordering(cache),
        check_proxied(cache),
        check_sharing_modes(cache),
        check_cpu_model(cache),
    ]
    if not skip_wirebench:
        results.append(check_wirebench())
    results.append(check_determinism(out_dir, seed))
    if out_dir is not None:
        for fig in ("fig5", "fig9"):
            result = cache.get(fig)
            (out_dir / f"{fig}.csv").write_text("\n".join(result.csv_lines) + "\n")
    return sorted(results, key=lambda r: int(r.cid[1:]))
