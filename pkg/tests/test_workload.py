import pytest

from servesim.errors import CatalogMissError, ConfigError
from servesim.workload import (
    BUILTIN_MODELS,
    ClientSpec,
    ClientState,
    DataMode,
    DEFAULT_CATALOG,
    DEFAULT_RAW_BYTES,
    ModelCatalog,
    ModelProfile,
    make_clients,
    payload_bytes,
)

MS = 1_000_000


def test_catalog_has_exactly_six_models():
    assert len(BUILTIN_MODELS) == 6
    expected = {
        "MobileNetV3": 0.06,
        "ResNet50": 4.1,
        "EfficientNetB0": 0.39,
        "WideResNet101": 22.81,
        "YoloV4": 128.46,
        "DeepLabV3_ResNet50": 178.72,
    }
    for name, gflops in expected.items():
        assert DEFAULT_CATALOG.get(name).gflops == gflops


def test_catalog_shapes():
    assert DEFAULT_CATALOG.get("ResNet50").input_shape == (3, 224, 224)
    assert DEFAULT_CATALOG.get("ResNet50").output_shapes == ((1, 1000),)
    assert DEFAULT_CATALOG.get("YoloV4").input_shape == (3, 416, 416)
    assert DEFAULT_CATALOG.get("DeepLabV3_ResNet50").output_shapes == ((2, 21, 520, 520),)


def test_payload_bytes_preprocessed_request():
    resnet = DEFAULT_CATALOG.get("ResNet50")
    assert payload_bytes(resnet, DataMode.PREPROCESSED, "request") == 3 * 224 * 224 * 4 == 602_112


def test_payload_bytes_response_sizes():
    assert payload_bytes(DEFAULT_CATALOG.get("ResNet50"), DataMode.RAW, "response") == 4_000
    assert (
        payload_bytes(DEFAULT_CATALOG.get("DeepLabV3_ResNet50"), DataMode.PREPROCESSED, "response")
        == 2 * 21 * 520 * 520 * 4
        == 45_427_200
    )
    assert (
        payload_bytes(DEFAULT_CATALOG.get("YoloV4"), DataMode.RAW, "response")
        == (13**2 + 26**2 + 52**2) * 3 * 85 * 4
        == 3_619_980
    )


def test_payload_bytes_raw_request_uses_configured_image():
    model = DEFAULT_CATALOG.get("MobileNetV3")
    assert payload_bytes(model, DataMode.RAW, "request") == DEFAULT_RAW_BYTES == 921_600
    assert payload_bytes(model, DataMode.RAW, "request", raw_bytes=640 * 480 * 3) == 921_600


def test_payload_bytes_deterministic():
    model = DEFAULT_CATALOG.get("YoloV4")
    a = payload_bytes(model, DataMode.PREPROCESSED, "request")
    b = payload_bytes(model, DataMode.PREPROCESSED, "request")
    assert a == b


def test_unknown_model_is_catalog_miss():
    with pytest.raises(CatalogMissError):
        DEFAULT_CATALOG.get("NoSuchNet")


def test_bad_direction_rejected():
    with pytest.raises(ConfigError):
        payload_bytes(DEFAULT_CATALOG.get("ResNet50"), DataMode.RAW, "sideways")


def test_catalog_round_trip():
    text = DEFAULT_CATALOG.to_yaml()
    again = ModelCatalog.from_yaml(text)
    for name in DEFAULT_CATALOG.names():
        assert again.get(name) == DEFAULT_CATALOG.get(name)


def test_user_model_defaults_preprocess_to_5pct():
    m = ModelProfile("custom", 10.0, (3, 64, 64), ((1, 10),))
    assert m.preprocess_gflops == pytest.approx(0.5)


def test_invalid_profiles_rejected():
    with pytest.raises(ConfigError):
        ModelProfile("bad", -1.0, (3, 4), ((1,),))
    with pytest.raises(ConfigError):
        ModelProfile("bad", 1.0, (0, 4), ((1,),))
    with pytest.raises(ConfigError):
        ModelProfile("bad", 1.0, (3, 4), ())


def test_closed_loop_next_request_after_response():
    state = ClientState(ClientSpec(id=0, request_count=2))
    assert state.next_request_time(0) == 0
    state.on_issue()
    state.on_response(12 * MS)
    assert state.next_request_time(12 * MS) == 12 * MS


def test_closed_loop_done_after_count():
    state = ClientState(ClientSpec(id=0, request_count=1))
    state.on_issue()
    state.on_response(5)
    assert state.next_request_time(5) is None


def test_think_time_delays_next_request():
    state = ClientState(ClientSpec(id=0, request_count=5, think_time_ns=5 * MS))
    state.on_issue()
    state.on_response(10 * MS)
    assert state.next_request_time(10 * MS) == 15 * MS


def test_make_clients_priorities():
    clients = make_clients(4, high_priority=2, request_count=7)
    assert [c.priority.value for c in clients] == ["high", "high", "normal", "normal"]
    assert all(c.request_count == 7 for c in clients)
    with pytest.raises(ConfigError):
        make_clients(0)
    with pytest.raises(ConfigError):
        make_clients(2, high_priority=3)
