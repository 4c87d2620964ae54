"""Command-line entry point.

Exit codes: 0 success, 1 acceptance/reproduction check failure, 2 input
validation error, 3 internal error.
"""

from __future__ import annotations

import json
import os
import sys
from pathlib import Path

import click

from . import acceptance
from .calibrate import (
    Sample,
    TargetSet,
    default_targets,
    fit_linear,
    fit_scenario_params,
    params_to_yaml,
    reduce_samples,
)
from .errors import ServesimError, ValidationError
from .metrics import aggregate, breakdown_set, breakdown_json, fraction_report, report_text
from .reproduce import available_figures, run_figure
from .scenariofile import load_scenario, load_scenario_doc, scenario_from_doc
from .simcore import run as run_scenario
from . import wirebench as wb
from .workload import payload_bytes

EXIT_CHECK_FAILED = 1
EXIT_VALIDATION = 2
EXIT_INTERNAL = 3


def _out_dir(option: str | None) -> Path:
    out = Path(option or os.environ.get("SERVESIM_OUT", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _fail_validation(exc: ValidationError) -> None:
    click.echo("validation failed:", err=True)
    for p in exc.problems:
        click.echo(f"  - {p}", err=True)
    sys.exit(EXIT_VALIDATION)


@click.group()
def main() -> None:
    """Model-serving offload latency simulator and benchmark harness."""


@main.command(name="run")
@click.argument("scenario_file", type=click.Path(exists=True, path_type=Path))
@click.option("--seed", type=int, default=None, help="Override the scenario seed.")
@click.option("--out", type=click.Path(path_type=Path), default=None, help="Output directory.")
def cmd_run(scenario_file: Path, seed: int | None, out: Path | None) -> None:
    """Run one scenario file; writes traces.csv, breakdown.json, report.txt."""
    try:
        scenario = load_scenario(scenario_file)
        ts = run_scenario(scenario, seed)
    except ValidationError as exc:
        _fail_validation(exc)
    except ServesimError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)
    out_dir = _out_dir(str(out) if out else None)
    model = scenario.catalog.get(scenario.model)
    rb = payload_bytes(model, scenario.data_mode, "request", scenario.raw_bytes)
    pb = payload_bytes(model, scenario.data_mode, "response", scenario.raw_bytes)
    bds = breakdown_set(ts, scenario.params, rb, pb)
    stats = aggregate(bds)
    fractions = fraction_report(bds, folded=True)
    (out_dir / "traces.csv").write_text("\n".join(ts.csv_lines()) + "\n")
    (out_dir / "breakdown.json").write_text(breakdown_json(ts, stats, fractions))
    report = report_text(ts, stats, fractions)
    (out_dir / "report.txt").write_text(report)
    click.echo(report)
    click.echo(f"wrote {out_dir}/traces.csv, breakdown.json, report.txt")


@main.command(name="sweep")
@click.argument("scenario_file", type=click.Path(exists=True, path_type=Path))
@click.option("--clients", default="1,2,4,8,16", help="Comma-separated client counts.")
@click.option("--mechanisms", default="tcp,rdma,gdr", help="Comma-separated mechanisms.")
@click.option("--seed", type=int, default=None)
@click.option("--out", type=click.Path(path_type=Path), default=None)
def cmd_sweep(scenario_file: Path, clients: str, mechanisms: str, seed: int | None,
              out: Path | None) -> None:
    """Run a (clients x mechanism) matrix over a base scenario."""
    try:
        base_doc = load_scenario_doc(scenario_file)
        client_list = [int(x) for x in clients.split(",") if x.strip()]
        mech_list = [m.strip() for m in mechanisms.split(",") if m.strip()]
        if not client_list or not mech_list:
            raise ValidationError(["sweep: empty clients or mechanisms list"])
    except ValidationError as exc:
        _fail_validation(exc)
    out_dir = _out_dir(str(out) if out else None)
    rows = ["mechanism,clients,mean_total_ms,p95_total_ms"]
    failures = []
    from .units import ns_to_ms

    for mech in mech_list:
        for n in client_list:
            doc = dict(base_doc)
            doc["connection"] = {"mode": "direct", "mechanism": mech}
            cl = dict(doc.get("clients", {}))
            cl["count"] = n
            doc["clients"] = cl
            try:
                scenario = scenario_from_doc(doc)
                ts = run_scenario(scenario, seed)
                model = scenario.catalog.get(scenario.model)
                rb = payload_bytes(model, scenario.data_mode, "request", scenario.raw_bytes)
                pb = payload_bytes(model, scenario.data_mode, "response", scenario.raw_bytes)
                stats = aggregate(breakdown_set(ts, scenario.params, rb, pb))["all"]
                rows.append(
                    f"{mech},{n},{ns_to_ms(stats.metrics['total_time'].mean):.6f},"
                    f"{ns_to_ms(stats.metrics['total_time'].p95):.6f}"
                )
            except ServesimError as exc:
                failures.append(f"{mech}/{n}: {exc}")
                click.echo(f"cell {mech}/{n} failed: {exc}", err=True)
    (out_dir / "sweep.csv").write_text("\n".join(rows) + "\n")
    click.echo("\n".join(rows))
    if failures:
        sys.exit(EXIT_CHECK_FAILED)


@main.command(name="reproduce")
@click.argument("figure")
@click.option("--out", type=click.Path(path_type=Path), default=None)
def cmd_reproduce(figure: str, out: Path | None) -> None:
    """Run a shipped reproduction pack (fig5..fig13, or 'all')."""
    figures = available_figures() if figure == "all" else [figure]
    out_dir = _out_dir(str(out) if out else None)
    any_fail = False
    for fig in figures:
        try:
            result = run_figure(fig)
        except ValidationError as exc:
            _fail_validation(exc)
        (out_dir / f"{fig}.csv").write_text("\n".join(result.csv_lines) + "\n")
        click.echo(f"{fig}: {result.title}")
        for check in result.checks:
            status = "PASS" if check.passed else "FAIL"
            click.echo(f"  [{status}] {check.name}: {check.detail}")
            if not check.passed and check.known_gap:
                click.echo(f"         known model gap: {check.known_gap.strip()}")
            any_fail |= not check.passed
        click.echo(f"  data -> {out_dir}/{fig}.csv")
    sys.exit(EXIT_CHECK_FAILED if any_fail else 0)


@main.command(name="calibrate")
@click.option("--targets", "targets_file", type=click.Path(exists=True, path_type=Path),
              default=None, help="Targets file (defaults to the shipped set).")
@click.option("--wire-csv", type=click.Path(exists=True, path_type=Path), default=None,
              help="wirebench samples to fit the TCP wire model from.")
@click.option("--no-refine", is_flag=True, help="Skip grid refinement (analytic only).")
@click.option("--out", type=click.Path(path_type=Path), default=None,
              help="Where to write the fitted ParamSet YAML.")
def cmd_calibrate(targets_file: Path | None, wire_csv: Path | None, no_refine: bool,
                  out: Path | None) -> None:
    """Fit a ParamSet from reference targets; report per-target residuals."""
    targets = (
        TargetSet.from_yaml(targets_file.read_text()) if targets_file else default_targets()
    )
    if wire_csv is not None:
        samples = []
        for line in wire_csv.read_text().splitlines()[1:]:
            size, _seq, dur = line.split(",")
            samples.append(Sample(int(size), int(dur)))
        fit = fit_linear(reduce_samples(samples))
        click.echo(
            f"wire fit: setup {fit.intercept_ns / 1000:.1f} us, "
            f"bandwidth {fit.bandwidth_bytes_per_ms / 1000:.0f} KB/ms, r2 {fit.r2:.4f}"
        )
    report = fit_scenario_params(targets, refine=not no_refine)
    click.echo(report.table())
    text = params_to_yaml(report.params)
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text)


@main.group(name="wirebench")
def cmd_wirebench() -> None:
    """Real framed-TCP echo server and closed-loop measurement client."""


@cmd_wirebench.command(name="serve")
@click.option("--listen", default="127.0.0.1:0", help="host:port to bind (port 0 = ephemeral).")
@click.option("--response", default="echo", help="echo or fixed:<bytes>.")
def wirebench_serve(listen: str, response: str) -> None:
    """Serve until interrupted; prints the bound address."""
    host, port = listen.rsplit(":", 1)
    try:
        rule = wb.ResponseRule.parse(response)
        server = wb.EchoServer(host, int(port), rule)
    except (OSError, ValueError) as exc:
        click.echo(f"startup error: {exc}", err=True)
        sys.exit(EXIT_VALIDATION)
    click.echo(f"listening on {server.address[0]}:{server.address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        server.stop()


@cmd_wirebench.command(name="measure")
@click.option("--connect", required=True, help="host:port of the server.")
@click.option("--sizes", default="0,1024,65536,1048576", help="Comma-separated payload sizes.")
@click.option("--count", default=1000, type=int, help="Measured round trips per size.")
@click.option("--warmup", default=10, type=int, help="Unmeasured round trips per size.")
@click.option("--out", type=click.Path(path_type=Path), default=Path("samples.csv"))
def wirebench_measure(connect: str, sizes: str, count: int, warmup: int, out: Path) -> None:
    """Closed-loop latency samples; writes size_bytes,seq,duration_ns CSV."""
    host, port = connect.rsplit(":", 1)
    size_list = [int(s) for s in sizes.split(",") if s.strip()]
    result = wb.measure((host, int(port)), size_list, count=count, warmup=warmup)
    out.write_text("\n".join(result.csv_lines()) + "\n")
    click.echo(f"wrote {len(result.samples)} samples to {out}")
    for size, why in result.failures.items():
        click.echo(f"size {size} failed: {why}", err=True)
    if result.failures and not result.samples:
        sys.exit(EXIT_CHECK_FAILED)


@main.command(name="validate")
@click.option("--out", type=click.Path(path_type=Path), default=None)
@click.option("--seed", type=int, default=0)
@click.option("--skip-wirebench", is_flag=True,
              help="Skip the real-socket criterion (for sandboxes without loopback).")
def cmd_validate(out: Path | None, seed: int, skip_wirebench: bool) -> None:
    """Run the full acceptance suite; one PASS/FAIL line per criterion."""
    out_dir = _out_dir(str(out) if out else None)
    try:
        results = acceptance.run_all(out_dir=out_dir, seed=seed, skip_wirebench=skip_wirebench)
    except ServesimError as exc:
        click.echo(f"internal error: {exc}", err=True)
        sys.exit(EXIT_INTERNAL)
    failed = 0
    for res in results:
        status = "PASS" if res.passed else "FAIL"
        click.echo(f"[{status}] {res.cid}: {res.name}")
        for line in res.details:
            click.echo(f"    {line}")
        if not res.passed:
            failed += 1
            if res.known_gap:
                click.echo(f"    known model gap: {res.known_gap}")
    summary = {"passed": len(results) - failed, "failed": failed}
    (out_dir / "acceptance.json").write_text(json.dumps(
        {
            "summary": summary,
            "criteria": [
                {"id": r.cid, "name": r.name, "passed": r.passed, "details": r.details}
                for r in results
            ],
        },
        indent=2,
    ) + "\n")
    click.echo(f"{summary['passed']} passed, {summary['failed']} failed -> {out_dir}/acceptance.json")
    sys.exit(EXIT_CHECK_FAILED if failed else 0)


if __name__ == "__main__":
    main()
