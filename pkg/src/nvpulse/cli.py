"""Command-line entry points: thin shells over the library operations.

Every command builds a CommandResult through a ``run_*`` function that
does no printing and no process exit, so the same code paths back the
HTTP service and tests can assert on results directly.  Artifacts are
written with the same serializers the service uses, which is what makes
CLI and HTTP outputs byte-identical for identical inputs.

Exit codes: 0 success, 2 bad input (flags, config files, malformed
CSV), 1 runtime failure (a simulation point failed, corrupt store, no
matching records).
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field
from pathlib import Path

import click
import numpy as np

from . import ENGINE_VERSION
from .analysis import (
    PROTOCOLS,
    SweepPointError,
    TraceFormatError,
    read_trace,
    run_sweep,
    write_trace,
)
from .dataset import (
    GridSpecError,
    FamilyTableError,
    MatchError,
    MissingIndexError,
    QueryError,
    RecordFormatError,
    best_match,
    build_dataset,
    load_family_table,
    nominal_pi_time,
    query as query_store,
    ranking_to_csv,
    read_grid,
    reindex as reindex_store,
)
from .evolution import TIMEDEP_METHODS, PropagationSettings
from .fitting import (
    TRANSITIONS,
    HyperfineSearchSpec,
    MeasurementFormatError,
    grid_search,
    read_measurements,
    result_to_config,
    zero_field_seed,
)
from .hamiltonian import (
    ConfigurationError,
    DegeneracyError,
    SignalSpec,
    load_system,
    resonant_drive,
)

USAGE_EXIT = 2
RUNTIME_EXIT = 1


@dataclass(frozen=True)
class CommandResult:
    """Outcome of one command: exit code, written files, summary text."""

    exit_code: int
    artifacts: list = field(default_factory=list)
    summary: str = ""

    def __post_init__(self):
        object.__setattr__(self, "artifacts", [str(p) for p in self.artifacts])


def _usage(message: str) -> CommandResult:
    return CommandResult(USAGE_EXIT, [], f"error: {message}")


def _failure(message: str) -> CommandResult:
    return CommandResult(RUNTIME_EXIT, [], f"error: {message}")


def _finish(result: CommandResult) -> None:
    if result.summary:
        click.echo(result.summary, err=result.exit_code != 0)
    if result.exit_code != 0:
        sys.exit(result.exit_code)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def parse_range(text: str) -> np.ndarray:
    """Parse a sweep grid 'start:stop:points' into a linspace (us)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"range must be start:stop:points, got {text!r}")
    try:
        start, stop, points = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise ValueError(f"range must be numeric start:stop:points, got {text!r}") from None
    if not 0 < start < stop:
        raise ValueError(f"range needs 0 < start < stop, got {text!r}")
    if points < 8:
        raise ValueError(f"range needs at least 8 points, got {points}")
    return np.linspace(start, stop, points)


def _parse_signal(text: str) -> SignalSpec:
    parts = text.split(":")
    if len(parts) not in (2, 3):
        raise ValueError(
            f"signal must be amp_MHz:freq_MHz[:phase_rad], got {text!r}"
        )
    amp, freq = float(parts[0]), float(parts[1])
    phase = float(parts[2]) if len(parts) == 3 else 0.0
    return SignalSpec.along_z(amp, freq, phase=phase)


def run_simulate(system_path, protocol, tau, out, *, transition="minus_one",
                 rabi=40.0, t_pi=None, order=1, seed=None, group=None,
                 detuning=0.0, duration_scale=1.0, signal=None, spp=64,
                 method=TIMEDEP_METHODS[0], workers=None) -> CommandResult:
    """Simulate one sweep and write the trace CSV plus metadata sidecar."""
    try:
        grid = parse_range(tau)
        if protocol in ("rxy8", "rxy8c") and seed is None:
            raise ValueError(f"protocol {protocol!r} needs --seed for reproducibility")
        system = load_system(system_path)
        drive = resonant_drive(
            system, transition, rabi_mhz=rabi, detuning=detuning,
            duration_scale=duration_scale,
        )
        signal_spec = _parse_signal(signal) if signal else None
        settings = PropagationSettings(
            samples_per_drive_period=spp, timedep_method=method,
        )
        if protocol != "rabi" and t_pi is None:
            t_pi = nominal_pi_time(rabi)
    except (ConfigurationError, DegeneracyError, ValueError) as exc:
        return _usage(str(exc))
    try:
        trace = run_sweep(
            system, protocol, grid, drive, t_pi=t_pi, m=order, seed=seed,
            g=group, signal=signal_spec, settings=settings, workers=workers,
        )
    except SweepPointError as exc:
        return _failure(str(exc))
    except ValueError as exc:
        return _usage(str(exc))
    artifacts = write_trace(out, trace)
    summary = (
        f"{protocol} sweep: {len(grid)} points, "
        f"{grid[0]:g}..{grid[-1]:g} us, drive {drive.frequency:.4f} MHz -> {out}"
    )
    return CommandResult(0, artifacts, summary)


# ---------------------------------------------------------------------------
# fit-hyperfine
# ---------------------------------------------------------------------------


def run_fit_hyperfine(measurements_path, out, *, coarse_range=4.0,
                      coarse_step=0.5, fine_step=0.01, fine_halfwidth=0.5,
                      zero_field=None, top_k=16, shards=1, refine_basins=4):
    """Invert ESEEM measurements to a hyperfine matrix config file.

    Returns:
        (CommandResult, warnings): warnings are identifiability and
        degeneracy notes the caller should surface on stderr; they do
        not fail the command, and they also land in the report file.
    """
    try:
        measurements = read_measurements(measurements_path)
        spec = HyperfineSearchSpec(
            coarse_range=coarse_range, coarse_step=coarse_step,
            fine_step=fine_step, fine_halfwidth=fine_halfwidth,
        )
    except (MeasurementFormatError, ValueError) as exc:
        return _usage(str(exc)), ()
    constraint = None
    if zero_field is not None:
        constraint = zero_field_seed(zero_field, coarse_step=coarse_step)
    result = grid_search(
        measurements, spec, zero_field=constraint, top_k=top_k,
        shards=shards, refine_basins=refine_basins,
    )
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(result_to_config(result))
    rows = "; ".join(
        " ".join(f"{v:+.4f}" for v in row) for row in result.a
    )
    summary = (
        f"hyperfine fit: objective {result.objective:.3e} MHz^2 over "
        f"{result.evaluations} evaluations -> {out}\nA (MHz): {rows}"
    )
    return CommandResult(0, [out], summary), tuple(result.warnings)


# ---------------------------------------------------------------------------
# dataset build / query / reindex, compare
# ---------------------------------------------------------------------------


def run_dataset_build(grid_path, out_dir, *, families_path=None, workers=None,
                      progress=None) -> CommandResult:
    try:
        grid = read_grid(grid_path)
        families = None
        if any(fid is not None for fid in grid.family_ids) or families_path:
            families = load_family_table(families_path)
    except (GridSpecError, FamilyTableError, OSError) as exc:
        return _usage(str(exc))
    report = build_dataset(
        out_dir, grid, families=families, workers=workers, progress=progress,
    )
    summary = (
        f"dataset build: {report.written} written, {report.skipped} skipped, "
        f"{report.failed} failed -> {out_dir}"
    )
    if report.failed:
        return CommandResult(RUNTIME_EXIT, [], summary + " (see quarantine.log)")
    index_path = Path(out_dir) / "index.json"
    artifacts = [index_path] if index_path.exists() else []
    return CommandResult(0, artifacts, summary)


def _record_row(record) -> str:
    p = record.params
    return (
        f"{record.record_id[:16]}  {p.isotope:>3}  {1e3 * p.b0_T:6.1f}  "
        f"{p.theta_deg:5.1f}  {p.m:2d}  {p.transition:>9}  "
        f"{p.family_id or '-':>6}  {len(record.trace.x):4d}"
    )


_RECORD_HEADER = (
    "record_id         iso   b0_mT  theta   M  transition  family  points"
)


def run_dataset_query(root, filters: dict) -> CommandResult:
    try:
        records = query_store(root, filters)
    except (QueryError, MissingIndexError) as exc:
        return _usage(str(exc))
    except RecordFormatError as exc:
        return _failure(str(exc))
    lines = [_RECORD_HEADER] + [_record_row(r) for r in records]
    lines.append(f"{len(records)} record(s)")
    return CommandResult(0, [], "\n".join(lines))


def run_dataset_reindex(root) -> CommandResult:
    try:
        count = reindex_store(root)
    except RecordFormatError as exc:
        return _failure(str(exc))
    return CommandResult(
        0, [str(root) + "/index.json"], f"indexed {count} record(s) -> {root}"
    )


def run_compare(exp_path, root, filters: dict, *, top_k=5, out=None,
                lenient=False) -> CommandResult:
    try:
        experimental, skipped_rows = read_trace(exp_path, strict=not lenient)
    except TraceFormatError as exc:
        return _usage(str(exc))
    try:
        ranking = best_match(root, experimental, filters, top_k=top_k)
    except (QueryError, MissingIndexError) as exc:
        return _usage(str(exc))
    except MatchError as exc:
        return _failure(str(exc))
    lines = []
    if skipped_rows:
        lines.append(f"skipped malformed rows: {skipped_rows}")
    lines.append("rank      r       slope      intercept  record")
    for rank, (record, rep) in enumerate(ranking.ranked, start=1):
        p = record.params
        lines.append(
            f"{rank:4d}  {rep.r:+.4f}  {rep.slope:10.4f}  {rep.intercept:10.4f}  "
            f"{record.record_id[:16]} {p.isotope} {1e3 * p.b0_T:g}mT "
            f"theta={p.theta_deg:g} M={p.m} {p.transition}"
        )
    for rid, reason in ranking.skipped:
        lines.append(f"unranked {rid[:16]}: {reason}")
    artifacts = []
    if out is not None:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(ranking_to_csv(ranking))
        artifacts.append(out)
        lines.append(f"ranking -> {out}")
    return CommandResult(0, artifacts, "\n".join(lines))


# ---------------------------------------------------------------------------
# click wiring
# ---------------------------------------------------------------------------


@click.group()
@click.version_option(version=ENGINE_VERSION, prog_name="nvpulse")
def main():
    """Lab-frame NV multipulse sensing: simulate, fit, store, compare."""


@main.command()
@click.option("--system", "system_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Spin system config file.")
@click.option("--protocol", required=True, type=click.Choice(PROTOCOLS))
@click.option("--tau", required=True,
              help="Sweep grid start:stop:points in us (pulse spacing; total "
                   "drive time for rabi).")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output trace CSV (metadata sidecar written next to it).")
@click.option("--transition", default="minus_one", show_default=True,
              type=click.Choice(TRANSITIONS), help="Driven electron transition.")
@click.option("--rabi", default=40.0, show_default=True,
              help="Drive amplitude gamma_e*B1 in MHz.")
@click.option("--t-pi", type=float, default=None,
              help="Pi time in us  [default: nominal for --rabi].")
@click.option("--order", "-m", default=1, show_default=True,
              help="XY8 block repeat count M.")
@click.option("--seed", type=int, default=None,
              help="Phase randomization seed (required for rxy8/rxy8c).")
@click.option("--group", "-g", type=int, default=None,
              help="Correlated phase group size (rxy8c).")
@click.option("--detuning", default=0.0, show_default=True,
              help="Carrier detuning in MHz.")
@click.option("--duration-scale", default=1.0, show_default=True,
              help="Pulse length error T_p/t_pi.")
@click.option("--signal", default=None,
              help="Classical z signal amp_MHz:freq_MHz[:phase_rad].")
@click.option("--spp", default=64, show_default=True,
              help="Integrator samples per drive period.")
@click.option("--method", default=TIMEDEP_METHODS[0], show_default=True,
              type=click.Choice(TIMEDEP_METHODS))
@click.option("--workers", type=int, default=None,
              help="Sweep worker processes  [default: NVPULSE_WORKERS or 1].")
def simulate(system_path, protocol, tau, out, transition, rabi, t_pi, order,
             seed, group, detuning, duration_scale, signal, spp, method, workers):
    """Simulate a pulse-sequence sweep to a trace CSV."""
    _finish(run_simulate(
        system_path, protocol, tau, out, transition=transition, rabi=rabi,
        t_pi=t_pi, order=order, seed=seed, group=group, detuning=detuning,
        duration_scale=duration_scale, signal=signal, spp=spp, method=method,
        workers=workers,
    ))


@main.command("fit-hyperfine")
@click.option("--measurements", "measurements_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="ESEEM measurement CSV.")
@click.option("--out", required=True, type=click.Path(dir_okay=False),
              help="Output hyperfine config with runner-up report.")
@click.option("--coarse-range", default=4.0, show_default=True)
@click.option("--coarse-step", default=0.5, show_default=True)
@click.option("--fine-step", default=0.01, show_default=True)
@click.option("--fine-halfwidth", default=0.5, show_default=True)
@click.option("--zero-field", type=float, default=None,
              help="Zero-field modulation frequency in MHz to prune against.")
@click.option("--top-k", default=16, show_default=True)
@click.option("--shards", default=1, show_default=True,
              help="Coarse scan shards (all run here, merged).")
@click.option("--refine-basins", default=4, show_default=True)
def fit_hyperfine(measurements_path, out, coarse_range, coarse_step, fine_step,
                  fine_halfwidth, zero_field, top_k, shards, refine_basins):
    """Grid-search hyperfine components from ESEEM frequencies."""
    result, warnings = run_fit_hyperfine(
        measurements_path, out, coarse_range=coarse_range,
        coarse_step=coarse_step, fine_step=fine_step,
        fine_halfwidth=fine_halfwidth, zero_field=zero_field, top_k=top_k,
        shards=shards, refine_basins=refine_basins,
    )
    for note in warnings:
        click.echo(f"warning: {note}", err=True)
    _finish(result)


@main.group("dataset")
def dataset_group():
    """Build, query, and maintain a simulation record store."""


@dataset_group.command("build")
@click.option("--grid", "grid_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Grid spec (INI).")
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False),
              help="Store directory.")
@click.option("--families", "families_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="13C family table CSV  [default: packaged example table].")
@click.option("--workers", type=int, default=None)
@click.option("--quiet", is_flag=True, help="Suppress per-record progress.")
def dataset_build(grid_path, out_dir, families_path, workers, quiet):
    """Simulate every grid point into the store (resumable)."""

    def progress(status, i, total, rid):
        if not quiet:
            click.echo(f"[{i + 1}/{total}] {status} {rid[:16]}", err=True)

    _finish(run_dataset_build(
        grid_path, out_dir, families_path=families_path, workers=workers,
        progress=progress,
    ))


def _filter_options(fn):
    options = [
        click.option("--isotope", default=None, type=click.Choice(["n14", "n15"])),
        click.option("--b0", type=float, default=None, help="Exact B0 in T."),
        click.option("--b0-min", type=float, default=None,
                     help="Inclusive B0 lower bound, T."),
        click.option("--b0-max", type=float, default=None,
                     help="Exclusive B0 upper bound, T."),
        click.option("--theta", type=float, default=None, help="Exact theta, deg."),
        click.option("--order", "-m", "order", type=int, default=None),
        click.option("--transition", default=None, type=click.Choice(TRANSITIONS)),
        click.option("--family", default=None,
                     help="Family id; 'none' selects bare records."),
        click.option("--seed", type=int, default=None),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _collect_filters(isotope, b0, b0_min, b0_max, theta, order, transition,
                     family, seed) -> dict:
    filters = {}
    if isotope is not None:
        filters["isotope"] = isotope
    if b0 is not None:
        filters["b0_T"] = b0
    if b0_min is not None:
        filters["b0_min_T"] = b0_min
    if b0_max is not None:
        filters["b0_max_T"] = b0_max
    if theta is not None:
        filters["theta_deg"] = theta
    if order is not None:
        filters["m"] = order
    if transition is not None:
        filters["transition"] = transition
    if family is not None:
        filters["family_id"] = None if family.lower() == "none" else family
    if seed is not None:
        filters["seed"] = seed
    return filters


@dataset_group.command("query")
@click.option("--data", "root", required=True, type=click.Path(exists=True, file_okay=False))
@_filter_options
def dataset_query(root, isotope, b0, b0_min, b0_max, theta, order, transition,
                  family, seed):
    """List records matching the filter, ordered by (isotope, B0, theta, M)."""
    filters = _collect_filters(isotope, b0, b0_min, b0_max, theta, order,
                               transition, family, seed)
    _finish(run_dataset_query(root, filters))


@dataset_group.command("reindex")
@click.argument("root", type=click.Path(exists=True, file_okay=False))
def dataset_reindex(root):
    """Rebuild (and integrity-check) the store index from record files."""
    _finish(run_dataset_reindex(root))


@main.command()
@click.option("--exp", "exp_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Experimental trace CSV.")
@click.option("--data", "root", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Store directory.")
@click.option("--top", "top_k", default=5, show_default=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False),
              help="Also write the ranking as CSV.")
@click.option("--lenient", is_flag=True,
              help="Skip malformed CSV rows instead of failing.")
@_filter_options
def compare(exp_path, root, top_k, out, lenient, isotope, b0, b0_min, b0_max,
            theta, order, transition, family, seed):
    """Rank stored simulations against an experimental trace by Pearson r."""
    filters = _collect_filters(isotope, b0, b0_min, b0_max, theta, order,
                               transition, family, seed)
    _finish(run_compare(exp_path, root, filters, top_k=top_k, out=out,
                        lenient=lenient))


@main.command()
@click.option("--data", "root", required=True,
              type=click.Path(exists=True, file_okay=False),
              help="Store directory to serve.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--allow-build", is_flag=True,
              help="Enable the dataset build endpoint (off: read-only).")
def serve(root, host, port, allow_build):
    """Serve the /v1 HTTP JSON API for the browser UI."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(root, allow_build=allow_build), host=host, port=port)


if __name__ == "__main__":
    main()
