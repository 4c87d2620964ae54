"""servesim: discrete-event simulator for model-serving offload latency."""

from .gpu import GpuConfig, SharingKind, SharingMode
from .simcore import Connection, Scenario, TraceSet, run
from .transport import Mechanism, ParamSet
from .workload import ClientSpec, DataMode, DEFAULT_CATALOG, ModelProfile, Priority

__version__ = "0.1.0"

__all__ = [
    "ClientSpec",
    "Connection",
    "DataMode",
    "DEFAULT_CATALOG",
    "GpuConfig",
    "Mechanism",
    "ModelProfile",
    "ParamSet",
    "Priority",
    "Scenario",
    "SharingKind",
    "SharingMode",
    "TraceSet",
    "run",
    "__version__",
]
