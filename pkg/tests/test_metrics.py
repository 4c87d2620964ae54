import random

import pytest

from servesim.errors import (
    DegenerateScenarioError,
    EmptySampleError,
    IncompleteTraceError,
)
from servesim.metrics import (
    LatencyBreakdown,
    aggregate,
    breakdown,
    breakdown_set,
    data_movement_fraction,
    fraction_report,
    nearest_rank,
    residual_request_time,
)
from servesim.simcore import Connection, RequestTrace, Scenario, StageRecord, run
from servesim.transport import Mechanism, ParamSet, Stage
from servesim.workload import DEFAULT_CATALOG, DataMode, make_clients, payload_bytes

from test_simcore import hand_scenario

MS = 1_000_000


def _bd(total, **kw):
    fields = dict(
        client_id=0, request_index=0, priority="normal", total_time=total,
        request_time=0, response_time=0, copy_time=0,
        preprocessing_time=0, inference_time=total,
    )
    fields.update(kw)
    return LatencyBreakdown(**fields)


def test_breakdown_local_inference_only():
    trace = RequestTrace(client_id=0, request_index=0, priority="normal", issue_ns=0, done_ns=10 * MS)
    trace.stages.append(StageRecord(Stage.INFERENCE, "exec", 0, 0, 10 * MS))
    bd = breakdown(trace)
    assert bd.total_time == 10 * MS
    assert bd.inference_time == 10 * MS
    assert bd.request_time == bd.response_time == bd.copy_time == bd.preprocessing_time == 0


def test_breakdown_requires_completion():
    trace = RequestTrace(client_id=0, request_index=0, priority="normal", issue_ns=0)
    with pytest.raises(IncompleteTraceError):
        breakdown(trace)


def test_breakdown_hand_scenario_waits():
    ts = run(hand_scenario())
    bds = breakdown_set(ts, include_warmup=True)
    by_client = {bd.client_id: bd for bd in bds}
    b = by_client[1]
    assert b.total_time == 22 * MS
    # 1 ms behind A on the shared link, 9 ms for the single engine
    assert b.queue_wait == {"request_xfer": 1 * MS, "inference": 9 * MS}
    assert b.copy_time == 0  # gdr
    # conservation identity, exactly
    assert (
        b.request_time + b.copy_time + b.preprocessing_time
        + b.inference_time + b.response_time + b.queue_wait_total
    ) == b.total_time


def test_gdr_traces_have_zero_copy_time():
    sc = Scenario(
        model="ResNet50", data_mode=DataMode.RAW,
        connection=Connection.direct(Mechanism.GDR),
        clients=make_clients(2, request_count=3), warmup_requests=0,
    )
    for bd in breakdown_set(run(sc), include_warmup=True):
        assert bd.copy_time == 0


def test_aggregate_trivial_examples():
    stats = aggregate([_bd(2), _bd(2), _bd(2)])["all"].metrics["total_time"]
    assert stats.mean == 2 and stats.cov == 0
    stats = aggregate([_bd(1), _bd(3)])["all"].metrics["total_time"]
    assert stats.mean == 2 and stats.stddev == 1 and stats.cov == 0.5


def test_nearest_rank_percentile():
    values = sorted(range(1, 101))
    assert nearest_rank(values, 50) == 50
    assert nearest_rank(values, 95) == 95
    assert nearest_rank(values, 99) == 99
    assert nearest_rank([7], 50) == 7


def test_aggregate_empty_rejected():
    with pytest.raises(EmptySampleError):
        aggregate([])


def test_aggregate_permutation_invariant():
    rng = random.Random(4)
    rows = [_bd(rng.randrange(1, 1000)) for _ in range(40)]
    before = aggregate(rows)["all"].metrics["total_time"]
    rng.shuffle(rows)
    after = aggregate(rows)["all"].metrics["total_time"]
    assert (before.mean, before.p50, before.stddev) == (after.mean, after.p50, after.stddev)


def test_aggregate_groups_by_priority():
    rows = [_bd(10), _bd(20, priority="high", client_id=1)]
    stats = aggregate(rows)
    assert stats["all"].metrics["total_time"].count == 2
    assert stats["high"].metrics["total_time"].mean == 20
    assert stats["normal"].metrics["total_time"].mean == 10


def test_fraction_report_sums_to_one():
    sc = Scenario(
        model="MobileNetV3", data_mode=DataMode.RAW,
        connection=Connection.direct(Mechanism.TCP),
        clients=make_clients(3, request_count=5), warmup_requests=1,
    )
    ts = run(sc)
    bds = breakdown_set(ts)
    for folded in (True, False):
        rows = fraction_report(bds, folded=folded)
        assert sum(rows.values()) == pytest.approx(1.0, abs=1e-9)


def test_fraction_report_local_is_pure_inference():
    trace = RequestTrace(client_id=0, request_index=0, priority="normal", issue_ns=0, done_ns=10 * MS)
    trace.stages.append(StageRecord(Stage.INFERENCE, "exec", 0, 0, 10 * MS))
    rows = fraction_report([breakdown(trace)])
    assert rows["inference_time"] == pytest.approx(1.0)


def test_fraction_report_degenerate_zero_total():
    with pytest.raises(DegenerateScenarioError):
        fraction_report([_bd(0, inference_time=0)])
    with pytest.raises(EmptySampleError):
        fraction_report([])


def test_folded_assigns_waits_to_following_stage():
    ts = run(hand_scenario())
    bds = breakdown_set(ts, include_warmup=True)
    b = next(bd for bd in bds if bd.client_id == 1)
    folded = b.folded()
    assert folded["inference_time"] == b.inference_time + 9 * MS
    assert sum(folded.values()) == b.total_time


def test_residual_request_time_mimics_indirect_measurement():
    ts = run(hand_scenario())
    bds = breakdown_set(ts, include_warmup=True)
    b = next(bd for bd in bds if bd.client_id == 0)
    # lone client: no waits, so the residual equals the direct measurement
    assert residual_request_time(b) == b.request_time + b.queue_wait.get("request_xfer", 0)


def test_cpu_accounting_tcp_above_gdr():
    model = DEFAULT_CATALOG.get("DeepLabV3_ResNet50")
    rb = payload_bytes(model, DataMode.RAW, "request")
    pb = payload_bytes(model, DataMode.RAW, "response")
    totals = {}
    for mech in (Mechanism.TCP, Mechanism.GDR):
        sc = Scenario(
            model="DeepLabV3_ResNet50", data_mode=DataMode.RAW,
            connection=Connection.direct(mech),
            clients=make_clients(1, request_count=3), warmup_requests=0,
        )
        bds = breakdown_set(run(sc), ParamSet(), rb, pb, include_warmup=True)
        totals[mech] = sum(bd.cpu_usage for bd in bds)
    assert totals[Mechanism.TCP] > totals[Mechanism.GDR]


def test_data_movement_fraction_ordering_single_client_mobilenet():
    fractions = {}
    model = DEFAULT_CATALOG.get("MobileNetV3")
    rb = payload_bytes(model, DataMode.RAW, "request")
    for mech in (Mechanism.TCP, Mechanism.RDMA, Mechanism.GDR):
        sc = Scenario(
            model="MobileNetV3", data_mode=DataMode.RAW,
            connection=Connection.direct(mech),
            clients=make_clients(1, request_count=8), warmup_requests=2,
        )
        bds = breakdown_set(run(sc), ParamSet(), rb, model.output_bytes)
        fractions[mech] = data_movement_fraction(bds)
    assert fractions[Mechanism.TCP] > fractions[Mechanism.RDMA] > fractions[Mechanism.GDR]
    # reference study ballpark (wide tolerance): 62/42/30 percent
    assert abs(fractions[Mechanism.TCP] - 0.62) < 0.12
    assert abs(fractions[Mechanism.RDMA] - 0.42) < 0.12
    assert abs(fractions[Mechanism.GDR] - 0.30) < 0.12
