"""Scenario files: strict YAML with explicit units and base-file layering.

Unknown keys are rejected at every level and duplicate mapping keys are an
error (plain yaml.safe_load silently keeps the last one). Durations must
carry units (ns/us/ms/s). A file may `extends` a base file; scalar keys
override, mappings merge one level deep.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .errors import ValidationError
from .gpu import GpuConfig, SharingKind, SharingMode
from .simcore import Connection, Scenario
from .transport import Mechanism, ParamSet
from .units import parse_duration
from .workload import DEFAULT_RAW_BYTES, DataMode, DEFAULT_CATALOG, ModelCatalog, make_clients


class _StrictLoader(yaml.SafeLoader):
    pass


def _no_duplicates(loader: _StrictLoader, node: yaml.MappingNode, deep=False):
    seen = set()
    for key_node, _ in node.value:
        key = loader.construct_object(key_node, deep=deep)
        if key in seen:
            raise ValidationError([f"duplicate key {key!r} at line {key_node.start_mark.line + 1}"])
        seen.add(key)
    return yaml.constructor.SafeConstructor.construct_mapping(loader, node, deep)


_StrictLoader.add_constructor(
    yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _no_duplicates
)


def load_strict_yaml(text: str) -> dict:
    doc = yaml.load(text, Loader=_StrictLoader)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ValidationError(["top level must be a mapping"])
    return doc


_TOP_KEYS = {
    "extends", "label", "model", "data_mode", "connection", "clients",
    "sharing", "gpu", "params", "params_file", "seed", "warmup_requests",
    "raw_request_bytes", "noise_sigma",
}
_CONNECTION_KEYS = {"mode", "mechanism", "hop1", "hop2"}
_CLIENT_KEYS = {"count", "high_priority", "request_count", "think_time"}
_SHARING_KEYS = {"mode", "max_streams"}
_GPU_KEYS = {
    "exec_engines", "copy_engines", "blocks_per_kernel", "kernels_per_model",
    "context_quantum", "memory_bytes", "context_copy_overlap",
    "engine_rate_gflops_per_ms", "interference",
}


def _check_keys(mapping: dict, allowed: set[str], where: str, problems: list[str]) -> None:
    for key in mapping:
        if key not in allowed:
            problems.append(f"{where}: unknown key {key!r} (allowed: {sorted(allowed)})")


def _merge(base: dict, over: dict) -> dict:
    out = dict(base)
    for k, v in over.items():
        if k in out and isinstance(out[k], dict) and isinstance(v, dict):
            merged = dict(out[k])
            merged.update(v)
            out[k] = merged
        else:
            out[k] = v
    return out


def load_scenario_doc(path: Path, _depth: int = 0) -> dict:
    if _depth > 8:
        raise ValidationError([f"{path}: extends chain too deep"])
    doc = load_strict_yaml(path.read_text())
    base_ref = doc.pop("extends", None)
    if base_ref is not None:
        base = load_scenario_doc((path.parent / base_ref).resolve(), _depth + 1)
        doc = _merge(base, doc)
    return doc


def _parse_mechanism(value, where: str, problems: list[str]) -> Mechanism | None:
    try:
        return Mechanism(str(value))
    except ValueError:
        problems.append(f"{where}: unknown mechanism {value!r}")
        return None


def scenario_from_doc(doc: dict, catalog: ModelCatalog | None = None,
                      base_dir: Path | None = None) -> Scenario:
    """Build and validate a Scenario; raises ValidationError listing every problem."""
    problems: list[str] = []
    _check_keys(doc, _TOP_KEYS, "scenario", problems)

    model = doc.get("model")
    if not isinstance(model, str):
        problems.append("model: required string")
        model = ""

    mode_text = doc.get("data_mode", "preprocessed")
    try:
        data_mode = DataMode(str(mode_text))
    except ValueError:
        problems.append(f"data_mode: must be raw or preprocessed, got {mode_text!r}")
        data_mode = DataMode.PREPROCESSED

    conn_doc = doc.get("connection", {})
    connection = Connection.direct(Mechanism.LOCAL)
    if not isinstance(conn_doc, dict):
        problems.append("connection: must be a mapping")
    else:
        _check_keys(conn_doc, _CONNECTION_KEYS, "connection", problems)
        cmode = conn_doc.get("mode", "direct")
        if cmode == "direct":
            mech = _parse_mechanism(conn_doc.get("mechanism", "local"), "connection.mechanism", problems)
            if mech is not None:
                connection = Connection.direct(mech)
        elif cmode == "proxied":
            h1 = _parse_mechanism(conn_doc.get("hop1"), "connection.hop1", problems)
            h2 = _parse_mechanism(conn_doc.get("hop2"), "connection.hop2", problems)
            if h1 is Mechanism.LOCAL:
                problems.append("connection.hop1: must be a wire mechanism, not local")
                h1 = None
            if h2 is Mechanism.LOCAL:
                problems.append("connection.hop2: must be a wire mechanism, not local")
                h2 = None
            if h1 is not None and h2 is not None:
                connection = Connection.proxied(h1, h2)
        else:
            problems.append(f"connection.mode: must be direct or proxied, got {cmode!r}")

    cl_doc = doc.get("clients", {})
    clients = []
    if not isinstance(cl_doc, dict):
        problems.append("clients: must be a mapping")
    else:
        _check_keys(cl_doc, _CLIENT_KEYS, "clients", problems)
        try:
            think = parse_duration(cl_doc.get("think_time", 0))
        except ValueError as exc:
            problems.append(f"clients.think_time: {exc}")
            think = 0
        try:
            clients = make_clients(
                count=int(cl_doc.get("count", 1)),
                high_priority=int(cl_doc.get("high_priority", 0)),
                request_count=int(cl_doc.get("request_count", 1000)),
                think_time_ns=think,
            )
        except Exception as exc:
            problems.append(f"clients: {exc}")

    sh_doc = doc.get("sharing", {})
    sharing = SharingMode()
    if not isinstance(sh_doc, dict):
        problems.append("sharing: must be a mapping")
    else:
        _check_keys(sh_doc, _SHARING_KEYS, "sharing", problems)
        kind_text = sh_doc.get("mode", "multi_stream")
        try:
            kind = SharingKind(str(kind_text))
            max_streams = sh_doc.get("max_streams")
            sharing = SharingMode(kind, None if max_streams is None else int(max_streams))
        except Exception as exc:
            problems.append(f"sharing: {exc}")

    gpu_doc = doc.get("gpu", {})
    gpu = GpuConfig()
    if not isinstance(gpu_doc, dict):
        problems.append("gpu: must be a mapping")
    else:
        _check_keys(gpu_doc, _GPU_KEYS, "gpu", problems)
        kwargs = {}
        for key in ("exec_engines", "copy_engines", "blocks_per_kernel",
                    "kernels_per_model", "memory_bytes"):
            if key in gpu_doc:
                kwargs[key] = int(gpu_doc[key])
        if "context_quantum" in gpu_doc:
            try:
                kwargs["context_quantum_ns"] = parse_duration(gpu_doc["context_quantum"])
            except ValueError as exc:
                problems.append(f"gpu.context_quantum: {exc}")
        if "interference" in gpu_doc:
            try:
                kwargs["interference_ns"] = parse_duration(gpu_doc["interference"])
            except ValueError as exc:
                problems.append(f"gpu.interference: {exc}")
        if "context_copy_overlap" in gpu_doc:
            kwargs["context_copy_overlap"] = bool(gpu_doc["context_copy_overlap"])
        if "engine_rate_gflops_per_ms" in gpu_doc:
            kwargs["engine_rate_gflops_per_ms"] = float(gpu_doc["engine_rate_gflops_per_ms"])
        try:
            gpu = GpuConfig(**kwargs)
        except Exception as exc:
            problems.append(f"gpu: {exc}")

    params = ParamSet()
    params_file = doc.get("params_file")
    if params_file is not None:
        ppath = Path(params_file)
        if base_dir is not None and not ppath.is_absolute():
            ppath = base_dir / ppath
        try:
            params = ParamSet.from_dict(load_strict_yaml(ppath.read_text()))
        except FileNotFoundError:
            problems.append(f"params_file: {ppath} not found")
        except Exception as exc:
            problems.append(f"params_file: {exc}")
    p_doc = doc.get("params", {})
    if not isinstance(p_doc, dict):
        problems.append("params: must be a mapping")
    else:
        merged = params.to_dict()
        merged.update(p_doc)
        try:
            params = ParamSet.from_dict(merged)
        except Exception as exc:
            problems.append(f"params: {exc}")

    scenario = None
    if not problems:
        scenario = Scenario(
            model=model,
            data_mode=data_mode,
            connection=connection,
            clients=clients,
            sharing=sharing,
            gpu=gpu,
            params=params,
            seed=int(doc.get("seed", 0)),
            warmup_requests=int(doc.get("warmup_requests", 10)),
            raw_bytes=int(doc.get("raw_request_bytes", DEFAULT_RAW_BYTES)),
            noise_sigma=float(doc.get("noise_sigma", 0.0)),
            catalog=catalog or DEFAULT_CATALOG,
        )
        problems = scenario.validate()
    if problems:
        raise ValidationError(problems)
    return scenario


def load_scenario(path: Path, catalog: ModelCatalog | None = None) -> Scenario:
    doc = load_scenario_doc(path)
    return scenario_from_doc(doc, catalog, base_dir=path.parent)
