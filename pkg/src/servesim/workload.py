"""Served-model catalog, payload sizing and closed-loop client behavior.

Models are represented purely by compute cost (GFLOPS) and tensor shapes;
there is no real inference. Payload sizes derive from the shapes at 4 bytes
per element (fp32). Raw-mode requests carry a configurable raw image instead
of the input tensor.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace

import yaml

from .errors import CatalogMissError, ConfigError

BYTES_PER_ELEMENT = 4  # fp32 tensors
DEFAULT_RAW_BYTES = 640 * 480 * 3  # uint8 camera frame, overridable per scenario
DEFAULT_REQUEST_COUNT = 1000
DEFAULT_PREPROCESS_FRACTION = 0.05  # fallback for user-defined models


class DataMode(enum.Enum):
    RAW = "raw"
    PREPROCESSED = "preprocessed"


class Priority(enum.Enum):
    NORMAL = "normal"
    HIGH = "high"


@dataclass(frozen=True)
class ModelProfile:
    """A served DNN: compute cost plus I/O tensor shapes.

    preprocess_gflops is the on-GPU preprocessing cost charged only in raw
    mode. Catalog entries carry calibrated values; user-defined models
    default to 5% of the inference cost.
    """

    name: str
    gflops: float
    input_shape: tuple[int, ...]
    output_shapes: tuple[tuple[int, ...], ...]
    preprocess_gflops: float = -1.0  # sentinel: derive from gflops

    def __post_init__(self):
        if self.gflops < 0:
            raise ConfigError(f"{self.name}: gflops must be >= 0")
        if not self.output_shapes:
            raise ConfigError(f"{self.name}: output_shapes must be non-empty")
        for dim in self.input_shape:
            if dim < 1:
                raise ConfigError(f"{self.name}: input dims must be >= 1")
        for shape in self.output_shapes:
            for dim in shape:
                if dim < 1:
                    raise ConfigError(f"{self.name}: output dims must be >= 1")
        if self.preprocess_gflops < 0:
            object.__setattr__(
                self, "preprocess_gflops", self.gflops * DEFAULT_PREPROCESS_FRACTION
            )

    @property
    def input_elements(self) -> int:
        return math.prod(self.input_shape)

    @property
    def output_bytes(self) -> int:
        return sum(math.prod(s) for s in self.output_shapes) * BYTES_PER_ELEMENT

    @property
    def input_bytes(self) -> int:
        return self.input_elements * BYTES_PER_ELEMENT


def _scaled_preprocess(input_shape: tuple[int, ...], per_element: float) -> float:
    return math.prod(input_shape) * per_element


# Preprocessing cost scales with the model's input tensor size (resize +
# normalize + layout conversion per output pixel). The per-element constant
# and the ResNet50 override come from single-client latency calibration.
_PRE_PER_ELEMENT = 0.8113 / 150528  # GFLOPS per input element
_CLASSIFIER_IN = (3, 224, 224)
_CLASSIFIER_OUT = ((1, 1000),)

BUILTIN_MODELS: tuple[ModelProfile, ...] = (
    ModelProfile("MobileNetV3", 0.06, _CLASSIFIER_IN, _CLASSIFIER_OUT, 0.8113),
    ModelProfile("ResNet50", 4.1, _CLASSIFIER_IN, _CLASSIFIER_OUT, 1.8670083864133902),
    ModelProfile("EfficientNetB0", 0.39, _CLASSIFIER_IN, _CLASSIFIER_OUT, 0.8113),
    ModelProfile("WideResNet101", 22.81, _CLASSIFIER_IN, _CLASSIFIER_OUT, 0.8113),
    ModelProfile(
        "YoloV4",
        128.46,
        (3, 416, 416),
        tuple((s, s, 3, 85) for s in (13, 26, 52)),
        _scaled_preprocess((3, 416, 416), _PRE_PER_ELEMENT),
    ),
    ModelProfile(
        "DeepLabV3_ResNet50",
        178.72,
        (3, 520, 520),
        ((2, 21, 520, 520),),
        _scaled_preprocess((3, 520, 520), _PRE_PER_ELEMENT),
    ),
)


class ModelCatalog:
    """Name -> profile lookup with file round-trip support."""

    def __init__(self, models: tuple[ModelProfile, ...] = BUILTIN_MODELS):
        self._models: dict[str, ModelProfile] = {m.name: m for m in models}

    def get(self, name: str) -> ModelProfile:
        try:
            return self._models[name]
        except KeyError:
            known = ", ".join(sorted(self._models))
            raise CatalogMissError(f"unknown model {name!r}; catalog has: {known}") from None

    def names(self) -> list[str]:
        return list(self._models)

    def add(self, profile: ModelProfile) -> None:
        self._models[profile.name] = profile

    def __contains__(self, name: str) -> bool:
        return name in self._models

    def to_yaml(self) -> str:
        records = [
            {
                "name": m.name,
                "gflops": m.gflops,
                "input_shape": list(m.input_shape),
                "output_shapes": [list(s) for s in m.output_shapes],
                "preprocess_gflops": m.preprocess_gflops,
            }
            for m in self._models.values()
        ]
        return yaml.safe_dump(records, sort_keys=False)

    @classmethod
    def from_yaml(cls, text: str) -> "ModelCatalog":
        records = yaml.safe_load(text)
        models = tuple(
            ModelProfile(
                name=r["name"],
                gflops=float(r["gflops"]),
                input_shape=tuple(int(d) for d in r["input_shape"]),
                output_shapes=tuple(tuple(int(d) for d in s) for s in r["output_shapes"]),
                preprocess_gflops=float(r.get("preprocess_gflops", -1.0)),
            )
            for r in records
        )
        return cls(models)


DEFAULT_CATALOG = ModelCatalog()


def payload_bytes(
    model: ModelProfile,
    mode: DataMode,
    direction: str,
    raw_bytes: int = DEFAULT_RAW_BYTES,
) -> int:
    """Size of a request or response payload in bytes.

    Requests carry the raw image (raw mode) or the packed input tensor
    (preprocessed mode); responses always carry the packed output tensors.
    """
    if direction == "request":
        if mode is DataMode.RAW:
            return raw_bytes
        return model.input_bytes
    if direction == "response":
        return model.output_bytes
    raise ConfigError(f"direction must be 'request' or 'response', got {direction!r}")


@dataclass
class ClientSpec:
    """One closed-loop client: at most one outstanding request at any time."""

    id: int
    priority: Priority = Priority.NORMAL
    request_count: int = DEFAULT_REQUEST_COUNT
    think_time_ns: int = 0

    def __post_init__(self):
        if self.request_count < 1:
            raise ConfigError(f"client {self.id}: request_count must be positive")
        if self.think_time_ns < 0:
            raise ConfigError(f"client {self.id}: think_time must be >= 0")


@dataclass
class ClientState:
    """Closed-loop progress for one client, owned by the simulation core."""

    spec: ClientSpec
    issued: int = 0
    in_flight: bool = False
    last_response_at: int | None = None

    def next_request_time(self, now: int) -> int | None:
        """Issue time of the next request, or None when the client is done.

        pre: no request in flight (closed loop).
        """
        assert not self.in_flight, "closed-loop violation: request already outstanding"
        if self.issued >= self.spec.request_count:
            return None
        if self.last_response_at is None:
            return now
        return max(now, self.last_response_at + self.spec.think_time_ns)

    def on_issue(self) -> int:
        index = self.issued
        self.issued += 1
        self.in_flight = True
        return index

    def on_response(self, now: int) -> None:
        self.in_flight = False
        self.last_response_at = now


def make_clients(
    count: int,
    high_priority: int = 0,
    request_count: int = DEFAULT_REQUEST_COUNT,
    think_time_ns: int = 0,
) -> list[ClientSpec]:
    """Build a client list with the first `high_priority` clients marked high."""
    if count < 1:
        raise ConfigError("need at least one client")
    if high_priority > count:
        raise ConfigError("more priority clients than clients")
    return [
        ClientSpec(
            id=i,
            priority=Priority.HIGH if i < high_priority else Priority.NORMAL,
            request_count=request_count,
            think_time_ns=think_time_ns,
        )
        for i in range(count)
    ]


def replace_preprocess(model: ModelProfile, preprocess_gflops: float) -> ModelProfile:
    return replace(model, preprocess_gflops=preprocess_gflops)
