from pathlib import Path

import pytest

from servesim.errors import ValidationError
from servesim.gpu import SharingKind
from servesim.scenariofile import load_scenario, load_strict_yaml, scenario_from_doc
from servesim.transport import Mechanism
from servesim.units import parse_duration
from servesim.workload import DataMode

MINIMAL = """\
model: ResNet50
data_mode: preprocessed
connection: {mode: direct, mechanism: local}
clients: {count: 1, request_count: 5}
"""


def test_minimal_scenario_loads(tmp_path: Path):
    path = tmp_path / "s.yaml"
    path.write_text(MINIMAL)
    sc = load_scenario(path)
    assert sc.model == "ResNet50"
    assert sc.connection.mech is Mechanism.LOCAL
    assert len(sc.clients) == 1


def test_duplicate_key_rejected(tmp_path: Path):
    path = tmp_path / "dup.yaml"
    path.write_text("model: ResNet50\nmodel: MobileNetV3\n")
    with pytest.raises(ValidationError, match="duplicate key"):
        load_scenario(path)


def test_unknown_keys_listed_with_location(tmp_path: Path):
    path = tmp_path / "bad.yaml"
    path.write_text(
        MINIMAL + "bogus_key: 1\ngpu: {exec_engines: 10, warp_count: 3}\n"
    )
    with pytest.raises(ValidationError) as exc:
        load_scenario(path)
    text = str(exc.value)
    assert "bogus_key" in text and "warp_count" in text


def test_every_problem_reported_not_just_first(tmp_path: Path):
    path = tmp_path / "multi.yaml"
    path.write_text(
        "model: NoSuchNet\n"
        "data_mode: sideways\n"
        "connection: {mode: proxied, hop1: local, hop2: carrier_pigeon}\n"
        "clients: {count: 0}\n"
    )
    with pytest.raises(ValidationError) as exc:
        load_scenario(path)
    text = str(exc.value)
    for frag in ("data_mode", "hop1", "hop2", "client"):
        assert frag in text


def test_durations_require_units(tmp_path: Path):
    path = tmp_path / "units.yaml"
    path.write_text(MINIMAL.replace("request_count: 5", "request_count: 5, think_time: 3"))
    with pytest.raises(ValidationError, match="unit"):
        load_scenario(path)
    ok = tmp_path / "units_ok.yaml"
    ok.write_text(MINIMAL.replace("request_count: 5", "request_count: 5, think_time: 3 ms"))
    sc = load_scenario(ok)
    assert sc.clients[0].think_time_ns == 3_000_000


def test_parse_duration_units():
    assert parse_duration("2 ms") == 2_000_000
    assert parse_duration("150us") == 150_000
    assert parse_duration("1 s") == 1_000_000_000
    assert parse_duration("7 ns") == 7
    assert parse_duration(0) == 0
    with pytest.raises(ValueError):
        parse_duration("5")
    with pytest.raises(ValueError):
        parse_duration("-1 ms")


def test_extends_layers_base_file(tmp_path: Path):
    (tmp_path / "base.yaml").write_text(MINIMAL + "gpu: {exec_engines: 10}\nseed: 3\n")
    (tmp_path / "child.yaml").write_text(
        "extends: base.yaml\n"
        "connection: {mode: direct, mechanism: gdr}\n"
        "gpu: {copy_engines: 4}\n"
    )
    sc = load_scenario(tmp_path / "child.yaml")
    assert sc.connection.mech is Mechanism.GDR  # overridden
    assert sc.model == "ResNet50"  # inherited
    assert sc.seed == 3  # inherited scalar
    assert sc.gpu.exec_engines == 10 and sc.gpu.copy_engines == 4  # merged mapping


def test_sharing_and_gpu_fields(tmp_path: Path):
    path = tmp_path / "full.yaml"
    path.write_text(
        MINIMAL
        + "sharing: {mode: multi_context}\n"
        + "gpu: {context_quantum: 4 ms, context_copy_overlap: false}\n"
        + "warmup_requests: 2\n"
        + "raw_request_bytes: 1000\n"
    )
    sc = load_scenario(path)
    assert sc.sharing.kind is SharingKind.MULTI_CONTEXT
    assert sc.gpu.context_quantum_ns == 4_000_000
    assert sc.gpu.context_copy_overlap is False
    assert sc.warmup_requests == 2
    assert sc.raw_bytes == 1000


def test_params_inline_override(tmp_path: Path):
    path = tmp_path / "p.yaml"
    path.write_text(MINIMAL + "params: {alpha_tcp_ns: 111, engine_rate_gflops_per_ms: 0.5}\n")
    sc = load_scenario(path)
    assert sc.params.alpha_tcp_ns == 111
    assert sc.params.engine_rate_gflops_per_ms == 0.5
    bad = tmp_path / "pbad.yaml"
    bad.write_text(MINIMAL + "params: {no_such_constant: 1}\n")
    with pytest.raises(ValidationError, match="no_such_constant"):
        load_scenario(bad)


def test_params_file_reference(tmp_path: Path):
    (tmp_path / "params.yaml").write_text("alpha_rdma_ns: 777\n")
    path = tmp_path / "withfile.yaml"
    path.write_text(MINIMAL + "params_file: params.yaml\n")
    sc = load_scenario(path)
    assert sc.params.alpha_rdma_ns == 777


def test_data_mode_values():
    doc = load_strict_yaml(MINIMAL)
    doc["data_mode"] = "raw"
    sc = scenario_from_doc(doc)
    assert sc.data_mode is DataMode.RAW
