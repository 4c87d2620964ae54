import pytest

from servesim.errors import ConfigError
from servesim.metrics import breakdown_set, aggregate
from servesim.simcore import Connection, Scenario, run
from servesim.transport import (
    Mechanism,
    ParamSet,
    PROXY_CONFIGS,
    Stage,
    cpu_cost,
    pipeline_events,
    proxy_compose,
    proxied_plan_for_mode,
    transfer_time,
    wire_time,
)
from servesim.workload import DEFAULT_CATALOG, DataMode, make_clients


def test_pipeline_gdr_preprocessed():
    plan = pipeline_events(Mechanism.GDR, raw=False)
    assert plan.stages == (Stage.REQUEST_XFER, Stage.INFERENCE, Stage.RESPONSE_XFER)


def test_pipeline_rdma_raw():
    plan = pipeline_events(Mechanism.RDMA, raw=True)
    assert plan.stages == (
        Stage.REQUEST_XFER, Stage.H2D, Stage.PREPROCESS,
        Stage.INFERENCE, Stage.D2H, Stage.RESPONSE_XFER,
    )


def test_pipeline_local():
    assert pipeline_events(Mechanism.LOCAL, raw=False).stages == (Stage.INFERENCE,)
    assert pipeline_events(Mechanism.LOCAL, raw=True).stages == (Stage.PREPROCESS, Stage.INFERENCE)


def test_pipeline_tcp_matches_rdma_shape():
    assert pipeline_events(Mechanism.TCP, True).stages == pipeline_events(Mechanism.RDMA, True).stages


def test_transfer_time_zero_bytes_is_setup():
    p = ParamSet()
    assert transfer_time(Mechanism.TCP, 0, p) == p.alpha_tcp_ns
    assert transfer_time(Mechanism.RDMA, 0, p) == p.alpha_rdma_ns


def test_transfer_time_rdma_equals_gdr():
    p = ParamSet()
    for size in (0, 1024, 602_112, 45_427_200):
        assert transfer_time(Mechanism.RDMA, size, p) == transfer_time(Mechanism.GDR, size, p)


def test_transfer_time_affine_increasing():
    p = ParamSet()
    for mech in (Mechanism.TCP, Mechanism.RDMA):
        prev = -1
        base = transfer_time(mech, 0, p)
        for size in (0, 1000, 10_000, 1_000_000, 50_000_000):
            t = transfer_time(mech, size, p)
            assert t > prev
            prev = t
        # affine: doubling the size doubles the size-dependent part
        t1 = transfer_time(mech, 1_000_000, p) - base
        t2 = transfer_time(mech, 2_000_000, p) - base
        assert t2 == pytest.approx(2 * t1, abs=2)


def test_transfer_time_local_invalid():
    with pytest.raises(ConfigError):
        transfer_time(Mechanism.LOCAL, 10, ParamSet())
    with pytest.raises(ConfigError):
        wire_time(Mechanism.LOCAL, 10, ParamSet())


def test_cpu_cost_examples():
    p = ParamSet()
    assert cpu_cost(Mechanism.TCP, 0, p) == 0
    assert cpu_cost(Mechanism.GDR, 10, p) == cpu_cost(Mechanism.GDR, 10_000_000, p) == p.c_ctrl_ns
    assert cpu_cost(Mechanism.LOCAL, 1_000_000, p) == 0
    assert cpu_cost(Mechanism.TCP, 1_000_000, p) > cpu_cost(Mechanism.RDMA, 1_000_000, p)


def test_proxy_compose_translation_on_family_crossing():
    p = ParamSet()
    plan = proxy_compose(Mechanism.TCP, Mechanism.GDR, p)
    assert plan.translate_request and plan.translate_response
    assert [h.mech for h in plan.request_hops] == [Mechanism.TCP, Mechanism.GDR]
    assert plan.stages[1] is Stage.INFERENCE  # no copies at the gdr server
    same = proxy_compose(Mechanism.RDMA, Mechanism.RDMA, p)
    assert not same.translate_request
    rdma_gdr = proxy_compose(Mechanism.RDMA, Mechanism.GDR, p)
    assert not rdma_gdr.translate_request  # same memory-semantics family


def test_proxy_compose_rejects_local_hops():
    with pytest.raises(ConfigError):
        proxy_compose(Mechanism.LOCAL, Mechanism.RDMA, ParamSet())
    with pytest.raises(ConfigError):
        proxy_compose(Mechanism.TCP, Mechanism.LOCAL, ParamSet())


def test_all_five_proxy_configurations_run():
    for hop1, hop2 in PROXY_CONFIGS:
        sc = Scenario(
            model="MobileNetV3",
            data_mode=DataMode.RAW,
            connection=Connection.proxied(hop1, hop2),
            clients=make_clients(1, request_count=4),
            warmup_requests=1,
        )
        ts = run(sc)
        assert len(ts.completed()) == 3


def _mean_total(model: str, mode: DataMode, conn: Connection, requests: int = 8) -> float:
    sc = Scenario(
        model=model, data_mode=mode, connection=conn,
        clients=make_clients(1, request_count=requests), warmup_requests=2,
    )
    ts = run(sc)
    totals = [t.total_ns for t in ts.completed()]
    return sum(totals) / len(totals)


def test_proxied_never_beats_direct_same_final_hop():
    for hop2 in (Mechanism.RDMA, Mechanism.GDR, Mechanism.TCP):
        direct = _mean_total("MobileNetV3", DataMode.RAW, Connection.direct(hop2))
        proxied = _mean_total("MobileNetV3", DataMode.RAW, Connection.proxied(Mechanism.TCP, hop2))
        assert proxied >= direct


def test_mechanism_monotonicity_over_catalog():
    # single-client totals: gdr <= rdma <= tcp for every model and mode
    for name in DEFAULT_CATALOG.names():
        for mode in (DataMode.RAW, DataMode.PREPROCESSED):
            totals = {
                mech: _mean_total(name, mode, Connection.direct(mech), requests=5)
                for mech in (Mechanism.GDR, Mechanism.RDMA, Mechanism.TCP)
            }
            assert totals[Mechanism.GDR] <= totals[Mechanism.RDMA] <= totals[Mechanism.TCP], name


def test_proxied_plan_for_mode_adds_preprocess():
    plan = proxied_plan_for_mode(Mechanism.TCP, Mechanism.GDR, True, ParamSet())
    assert Stage.PREPROCESS in plan.stages
    assert Stage.H2D not in plan.stages
