"""Figure-pack runner: expands a base scenario over axes, evaluates checks.

Each pack file describes one reproduction experiment: a base scenario, the
axes to sweep (mechanism, data mode, client count, stream count, sharing
mode, proxied pair, model), per-figure plot-data columns, and a list of
checks with their tolerances. Check tolerances live in the pack files, not
in code; the runner only implements the check kinds.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .errors import ValidationError
from .gpu import SharingKind, SharingMode
from .metrics import breakdown_set, aggregate, fraction_report
from .scenariofile import load_strict_yaml, scenario_from_doc
from .simcore import Connection, Scenario, TraceSet, run
from .transport import Mechanism
from .units import ns_to_ms
from .workload import DEFAULT_CATALOG, make_clients, payload_bytes

_AXIS_ORDER = ("model", "data_mode", "pair", "mechanism", "sharing", "clients", "streams")


@dataclass
class CellResult:
    key: dict
    mean_total_ms: float
    mean_request_ms: float
    p95_total_ms: float
    cov_processing: float
    mean_total_high_ms: float | None
    mean_total_normal_ms: float | None
    fractions: dict[str, float]
    mean_cpu_ms: float
    copy_issues: int

    @property
    def datamov_pct(self) -> float:
        return 100.0 * (
            self.fractions["request_time"]
            + self.fractions["copy_time"]
            + self.fractions["response_time"]
        )


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    known_gap: str = ""


@dataclass
class FigureResult:
    figure: str
    title: str
    cells: list[CellResult]
    checks: list[CheckResult]
    csv_lines: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def pack_dir() -> Path:
    return Path(str(resources.files("servesim").joinpath("data/scenarios")))


def available_figures() -> list[str]:
    return sorted(p.stem for p in pack_dir().glob("fig*.yaml"))


def load_pack(figure: str) -> dict:
    path = pack_dir() / f"{figure}.yaml"
    if not path.exists():
        raise ValidationError(
            [f"unknown figure id {figure!r}; available: {', '.join(available_figures())}"]
        )
    return load_strict_yaml(path.read_text())


def _apply_axis(doc: dict, axis: str, value) -> dict:
    doc = {**doc}
    if axis == "mechanism":
        doc["connection"] = {"mode": "direct", "mechanism": value}
    elif axis == "pair":
        h1, h2 = str(value).split("/")
        doc["connection"] = {"mode": "proxied", "hop1": h1, "hop2": h2}
    elif axis == "data_mode":
        doc["data_mode"] = value
    elif axis == "model":
        doc["model"] = value
    elif axis == "clients":
        clients = {**doc.get("clients", {})}
        clients["count"] = int(value)
        doc["clients"] = clients
    elif axis == "streams":
        doc["sharing"] = {"mode": "multi_stream", "max_streams": int(value)}
    elif axis == "sharing":
        doc["sharing"] = {"mode": str(value)}
    else:
        raise ValidationError([f"unknown axis {axis!r}"])
    return doc


def run_cell(doc: dict, catalog=None) -> tuple[Scenario, TraceSet]:
    scenario = scenario_from_doc(doc, catalog)
    return scenario, run(scenario)


def _cell_result(key: dict, scenario: Scenario, ts: TraceSet) -> CellResult:
    model = scenario.catalog.get(scenario.model)
    rb = payload_bytes(model, scenario.data_mode, "request", scenario.raw_bytes)
    pb = payload_bytes(model, scenario.data_mode, "response", scenario.raw_bytes)
    bds = breakdown_set(ts, scenario.params, rb, pb)
    stats = aggregate(bds)
    fr = fraction_report(bds, folded=True)
    overall = stats["all"].metrics
    return CellResult(
        key=key,
        mean_total_ms=ns_to_ms(overall["total_time"].mean),
        mean_request_ms=ns_to_ms(overall["request_time"].mean),
        p95_total_ms=ns_to_ms(overall["total_time"].p95),
        cov_processing=overall["processing_time"].cov,
        mean_total_high_ms=(
            ns_to_ms(stats["high"].metrics["total_time"].mean) if "high" in stats else None
        ),
        mean_total_normal_ms=(
            ns_to_ms(stats["normal"].metrics["total_time"].mean) if "normal" in stats else None
        ),
        fractions=fr,
        mean_cpu_ms=ns_to_ms(overall["cpu_usage"].mean),
        copy_issues=ts.copy_issues,
    )


def run_figure(figure: str, catalog=None) -> FigureResult:
    pack = load_pack(figure)
    base = pack["base"]
    axes: dict = pack.get("axes", {})
    axis_names = [a for a in _AXIS_ORDER if a in axes]
    for name in axes:
        if name not in _AXIS_ORDER:
            raise ValidationError([f"{figure}: unknown axis {name!r}"])
    cells: list[CellResult] = []
    combos = itertools.product(*(axes[a] for a in axis_names)) if axis_names else [()]
    for combo in combos:
        doc = dict(base)
        key = {}
        for axis, value in zip(axis_names, combo):
            doc = _apply_axis(doc, axis, value)
            key[axis] = value
        scenario, ts = run_cell(doc, catalog)
        cells.append(_cell_result(key, scenario, ts))
    checks = [_eval_check(c, cells) for c in pack.get("checks", [])]
    return FigureResult(
        figure=figure,
        title=pack.get("title", figure),
        cells=cells,
        checks=checks,
        csv_lines=_plot_data(axis_names, cells),
    )


def _plot_data(axis_names: list[str], cells: list[CellResult]) -> list[str]:
    frac_cols = ("request_time", "copy_time", "preprocessing_time", "inference_time", "response_time")
    header = axis_names + [
        "mean_total_ms", "mean_request_ms", "p95_total_ms", "cov_processing",
        "mean_total_high_ms", "mean_total_normal_ms", "mean_cpu_ms",
    ] + [f"frac_{c}" for c in frac_cols]
    lines = [",".join(header)]
    for cell in cells:
        row = [str(cell.key.get(a, "")) for a in axis_names]
        row += [
            f"{cell.mean_total_ms:.6f}",
            f"{cell.mean_request_ms:.6f}",
            f"{cell.p95_total_ms:.6f}",
            f"{cell.cov_processing:.6f}",
            "" if cell.mean_total_high_ms is None else f"{cell.mean_total_high_ms:.6f}",
            "" if cell.mean_total_normal_ms is None else f"{cell.mean_total_normal_ms:.6f}",
            f"{cell.mean_cpu_ms:.6f}",
        ]
        row += [f"{cell.fractions[c]:.6f}" for c in frac_cols]
        lines.append(",".join(row))
    return lines


def _select(cells: list[CellResult], sel: dict) -> CellResult:
    matches = [c for c in cells if all(c.key.get(k) == v for k, v in sel.items())]
    if len(matches) != 1:
        raise ValidationError([f"selector {sel} matched {len(matches)} cells"])
    return matches[0]


def _metric(cell: CellResult, name: str) -> float:
    if name == "mean_total":
        return cell.mean_total_ms
    if name == "mean_request":
        return cell.mean_request_ms
    if name == "mean_total_high":
        if cell.mean_total_high_ms is None:
            raise ValidationError(["cell has no high-priority clients"])
        return cell.mean_total_high_ms
    if name == "cov_processing":
        return cell.cov_processing
    if name == "copy_fraction_pct":
        return 100.0 * cell.fractions["copy_time"]
    if name == "datamov_pct":
        return cell.datamov_pct
    if name == "mean_cpu":
        return cell.mean_cpu_ms
    if name == "copy_issues":
        return float(cell.copy_issues)
    raise ValidationError([f"unknown check metric {name!r}"])


def _eval_check(spec: dict, cells: list[CellResult]) -> CheckResult:
    kind = spec["kind"]
    name = spec["name"]
    gap = spec.get("known_gap", "")
    if kind == "saving_pct":
        a = _metric(_select(cells, spec["a"]), spec.get("metric", "mean_total"))
        b = _metric(_select(cells, spec["b"]), spec.get("metric", "mean_total"))
        got = 100.0 * (1.0 - a / b)
        if "target" in spec:
            ok = abs(got - spec["target"]) <= spec["tol_pp"]
            detail = f"saving {got:.2f}% vs target {spec['target']}±{spec['tol_pp']}pp"
        else:
            ok = got >= spec["min"]
            detail = f"saving {got:.2f}% vs min {spec['min']}%"
        return CheckResult(name, ok, detail, gap)
    if kind == "delta_ms":
        a = _metric(_select(cells, spec["a"]), spec.get("metric", "mean_total"))
        b = _metric(_select(cells, spec["b"]), spec.get("metric", "mean_total"))
        got = b - a
        ok = abs(got - spec["target"]) <= spec["rel_tol"] * abs(spec["target"])
        return CheckResult(name, ok, f"delta {got:.4f} ms vs {spec['target']}±{spec['rel_tol']:.0%}", gap)
    if kind == "metric_bound":
        got = _metric(_select(cells, spec["cell"]), spec["metric"])
        lo, hi = spec.get("min"), spec.get("max")
        ok = (lo is None or got >= lo) and (hi is None or got <= hi)
        return CheckResult(name, ok, f"{spec['metric']}={got:.3f} bounds [{lo}, {hi}]", gap)
    if kind == "within_pct":
        a = _metric(_select(cells, spec["a"]), spec.get("metric", "mean_total"))
        b = _metric(_select(cells, spec["b"]), spec.get("metric", "mean_total"))
        got = 100.0 * abs(a - b) / b
        ok = got <= spec["max_pct"]
        return CheckResult(name, ok, f"|a-b|/b = {got:.2f}% vs max {spec['max_pct']}%", gap)
    if kind == "ratio_bound":
        a = _metric(_select(cells, spec["a"]), spec.get("metric", "mean_total"))
        b = _metric(_select(cells, spec["b"]), spec.get("metric", "mean_total"))
        got = a / b
        lo, hi = spec.get("min"), spec.get("max")
        ok = (lo is None or got >= lo) and (hi is None or got <= hi)
        return CheckResult(name, ok, f"ratio {got:.4f} bounds [{lo}, {hi}]", gap)
    if kind == "order":
        vals = [
            _metric(_select(cells, sel), spec.get("metric", "mean_total"))
            for sel in spec["cells"]
        ]
        decreasing = spec.get("direction", "desc") == "desc"
        slack = 1.0 + spec.get("slack", 0.0)
        ok = all(
            (vals[i] * slack >= vals[i + 1]) if decreasing else (vals[i] <= vals[i + 1] * slack)
            for i in range(len(vals) - 1)
        )
        return CheckResult(name, ok, f"values {['%.3f' % v for v in vals]} ({spec.get('direction','desc')})", gap)
    if kind == "less_than":
        a = _metric(_select(cells, spec["a"]), spec["metric"])
        b = _metric(_select(cells, spec["b"]), spec["metric"])
        return CheckResult(name, a < b, f"{a:.4f} < {b:.4f}", gap)
    if kind == "flat_ratio":
        base = _metric(_select(cells, spec["base"]), spec.get("metric", "mean_total_high"))
        worst = 0.0
        for sel in spec["cells"]:
            worst = max(worst, _metric(_select(cells, sel), spec.get("metric", "mean_total_high")) / base)
        ok = worst <= spec["max_ratio"] + 1e-12
        return CheckResult(name, ok, f"worst ratio {worst:.4f} vs max {spec['max_ratio']}", gap)
    raise ValidationError([f"unknown check kind {kind!r}"])
