"""Batch generation, storage, and querying of XY8-M simulation records.

A dataset is a plain directory: one self-describing record file per
simulated sweep plus a rebuildable ``index.json``.  Records are
content-addressed; the id is a SHA-256 over the generation parameters
and the engine version, so regenerating any record is a no-op and two
stores built from the same grid are interchangeable file by file.

Record file format (external interface)::

    # record_id = '...'
    # engine_version = '0.1.0'
    # created_at = '2026-08-14T09:00:00+00:00'
    # a_c = None
    # b0_T = 0.017
    ...                          (one line per parameter, sorted by name)
    tau_us,p
    0.1,0.4999...

Grid spec format (INI): a ``[grid]`` section lists the axes (``isotope``,
``b0_mT``, ``theta_deg``, ``m``, ``transition``, and optional
``family_id`` and ``seed``) as comma-separated values; optional ``[tau]``
(``start_us``/``stop_us``/``points``) and ``[settings]`` (``rabi_MHz``,
``samples_per_drive_period``, ``method``) sections override the
defaults.  One record is generated per point of the cartesian product.

Concurrency: record files are written atomically (temp + rename) and the
index has a single writer, the generation loop; parallelism lives inside
each sweep (the worker pool fans out over tau points).  Queries only
read.
"""

from __future__ import annotations

import ast
import configparser
import hashlib
import itertools
import json
import os
from dataclasses import dataclass, fields
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import ENGINE_VERSION
from .analysis import (
    CorrelationReport,
    SweepTrace,
    UndefinedCorrelationError,
    fit_linear_map,
    parse_trace_csv,
    run_sweep,
    trace_to_csv,
)
from .evolution import TIMEDEP_METHODS, PropagationSettings
from .fitting import TRANSITIONS, components_to_matrix
from .hamiltonian import SpinSystem, TargetSpin, resonant_drive

ISOTOPES = ("n14", "n15")
RECORD_SUFFIX = ".rec"
INDEX_NAME = "index.json"
QUARANTINE_NAME = "quarantine.log"

# default desk-scale sweep grid; the paper-scale ranges are figure-only,
# so grids declare their own and these are just a starting point
DEFAULT_TAU_US = (0.1, 2.0)
DEFAULT_TAU_POINTS = 256
DEFAULT_RABI_MHZ = 40.0
DEFAULT_SPP = 16
DEFAULT_METHOD = "piecewise_constant_midpoint"

# index entry fields a query may filter on (plus the b0 range forms)
FILTER_FIELDS = ("isotope", "b0_T", "theta_deg", "m", "transition", "family_id", "seed")
RANGE_FIELDS = ("b0_min_T", "b0_max_T")
_FLOAT_TOL = 1e-12


class GridSpecError(ValueError):
    """Raised for an invalid or inconsistent grid specification."""


class FamilyTableError(ValueError):
    """Raised for an invalid family table or an unknown family id."""


class RecordFormatError(ValueError):
    """Raised for a corrupt or tampered record file."""


class QueryError(ValueError):
    """Raised for an unknown field in a query predicate."""


class MissingIndexError(RuntimeError):
    """Raised when a query runs against a store with no index."""


class MatchError(LookupError):
    """Raised when best_match finds no records for its filter."""


# ---------------------------------------------------------------------------
# Record parameters and identity
# ---------------------------------------------------------------------------


def nominal_pi_time(rabi_mhz: float) -> float:
    """Nominal resonant pi-pulse duration in us for a given gamma_e*B1.

    The m_s = 0 <-> +-1 matrix element of S_x is 1/sqrt(2), so the
    rotating-frame pi condition is t = sqrt(2) / (2 * gamma_e * B1).
    """
    if rabi_mhz <= 0:
        raise ValueError("rabi_mhz must be > 0")
    return float(np.sqrt(2.0) / (2.0 * rabi_mhz))


@dataclass(frozen=True)
class RecordParams:
    """Everything that determines a record's trace, hence its id.

    Attributes:
        isotope: Intrinsic nitrogen, "n14" or "n15".
        b0_T: Static field magnitude in Tesla.
        theta_deg: Polar misalignment of B0, degrees.
        m: XY8 block repeat count.
        transition: Driven electron transition, "minus_one"/"plus_one".
        rabi_MHz: Drive amplitude as gamma_e*B1.
        t_pi_ns: Nominal pi time implied by rabi_MHz, nanoseconds.
        family_id: Optional 13C family label; a_c holds its hyperfine
            matrix (MHz, nested tuples) when set.
        a_c: Hyperfine matrix of the 13C target, or None for none.
        seed: Phase-randomization seed (unused by plain XY8 but kept so
            the schema covers randomized protocols).
        tau_start_us / tau_stop_us / tau_points: The swept pulse-spacing
            grid, linspace semantics.
        spp: Integrator samples per drive period.
        method: Time-dependent stepper name.
    """

    isotope: str
    b0_T: float
    theta_deg: float
    m: int
    transition: str
    rabi_MHz: float = DEFAULT_RABI_MHZ
    t_pi_ns: float = 0.0
    family_id: str | None = None
    a_c: tuple | None = None
    seed: int | None = None
    tau_start_us: float = DEFAULT_TAU_US[0]
    tau_stop_us: float = DEFAULT_TAU_US[1]
    tau_points: int = DEFAULT_TAU_POINTS
    spp: int = DEFAULT_SPP
    method: str = DEFAULT_METHOD

    def __post_init__(self):
        if self.isotope not in ISOTOPES:
            raise ValueError(f"isotope must be one of {ISOTOPES}, got {self.isotope!r}")
        if not self.b0_T > 0:
            raise ValueError("b0_T must be > 0")
        if not isinstance(self.m, int) or self.m < 1:
            raise ValueError("m must be an integer >= 1")
        if self.transition not in TRANSITIONS:
            raise ValueError(f"transition must be one of {TRANSITIONS}")
        if self.rabi_MHz <= 0:
            raise ValueError("rabi_MHz must be > 0")
        if self.t_pi_ns == 0.0:
            object.__setattr__(self, "t_pi_ns", 1e3 * nominal_pi_time(self.rabi_MHz))
        if self.t_pi_ns <= 0:
            raise ValueError("t_pi_ns must be > 0")
        if (self.family_id is None) != (self.a_c is None):
            raise ValueError("family_id and a_c must be set together")
        if self.a_c is not None:
            a = np.asarray(self.a_c, dtype=float)
            if a.shape != (3, 3) or np.max(np.abs(a - a.T)) > 1e-12:
                raise ValueError("a_c must be a symmetric 3x3 matrix")
            object.__setattr__(
                self, "a_c", tuple(tuple(float(x) for x in row) for row in a)
            )
        if self.seed is not None and not isinstance(self.seed, int):
            raise ValueError("seed must be an integer or None")
        if not 0 < self.tau_start_us < self.tau_stop_us:
            raise ValueError("need 0 < tau_start_us < tau_stop_us")
        if self.tau_points < 64:
            raise ValueError("tau_points must be >= 64")
        if self.method not in TIMEDEP_METHODS:
            raise ValueError(f"method must be one of {TIMEDEP_METHODS}")

    @property
    def t_pi_us(self) -> float:
        return self.t_pi_ns * 1e-3

    def tau_grid(self) -> np.ndarray:
        return np.linspace(self.tau_start_us, self.tau_stop_us, self.tau_points)


def _params_lines(params: RecordParams) -> list:
    names = sorted(f.name for f in fields(RecordParams))
    return [f"{name} = {getattr(params, name)!r}" for name in names]


def record_id(params: RecordParams, engine_version: str = ENGINE_VERSION) -> str:
    """Deterministic content hash of the parameters plus engine version."""
    text = "\n".join(_params_lines(params)) + f"\nengine_version = {engine_version!r}\n"
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class DatasetRecord:
    """One stored simulation: identity, parameters, and the trace."""

    record_id: str
    params: RecordParams
    trace: SweepTrace
    engine_version: str = ENGINE_VERSION
    created_at: str = ""

    def __post_init__(self):
        if len(self.trace.x) < 64:
            raise ValueError("record traces need >= 64 tau points")
        if self.trace.x_column != "tau_us":
            raise ValueError("record traces sweep tau_us")
        if not self.created_at:
            object.__setattr__(
                self,
                "created_at",
                datetime.now(timezone.utc).isoformat(timespec="seconds"),
            )

    @property
    def file_name(self) -> str:
        return self.record_id + RECORD_SUFFIX


# ---------------------------------------------------------------------------
# 13C family table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilyTable:
    """family_id -> symmetric 3x3 hyperfine matrix (MHz), from a CSV file."""

    entries: tuple

    def __post_init__(self):
        seen = {}
        for fid, a in self.entries:
            if fid in seen:
                raise FamilyTableError(f"duplicate family_id {fid!r}")
            seen[fid] = a
        object.__setattr__(self, "entries", tuple(self.entries))

    @property
    def ids(self) -> tuple:
        return tuple(fid for fid, _ in self.entries)

    def matrix(self, family_id: str) -> tuple:
        for fid, a in self.entries:
            if fid == family_id:
                return a
        raise FamilyTableError(f"unknown family_id {family_id!r}")


_FAMILY_HEADER = "family_id,a_xx_MHz,a_xy_MHz,a_xz_MHz,a_yy_MHz,a_yz_MHz,a_zz_MHz"


def parse_family_table(text: str) -> FamilyTable:
    """Parse a family CSV; header then one row of six components per id."""
    rows = []
    header_seen = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if not header_seen:
            if line != _FAMILY_HEADER:
                raise FamilyTableError(
                    f"line {lineno}: header must be {_FAMILY_HEADER!r}"
                )
            header_seen = True
            continue
        cells = [c.strip() for c in line.split(",")]
        if len(cells) != 7:
            raise FamilyTableError(f"line {lineno}: expected 7 columns")
        fid = cells[0]
        if not fid:
            raise FamilyTableError(f"line {lineno}: empty family_id")
        try:
            comps = tuple(float(c) for c in cells[1:])
        except ValueError as exc:
            raise FamilyTableError(f"line {lineno}: {exc}") from None
        a = components_to_matrix(comps)
        rows.append((fid, tuple(tuple(float(x) for x in row) for row in a)))
    if not header_seen:
        raise FamilyTableError("no header line found")
    if not rows:
        raise FamilyTableError("family table has no entries")
    return FamilyTable(entries=tuple(rows))


def load_family_table(path=None) -> FamilyTable:
    """Load a family table; defaults to the packaged example values.

    The packaged table is a demonstration stand-in, not authoritative
    coupling data; point ``path`` at a real table for actual analyses.
    """
    if path is None:
        text = (
            resources.files("nvpulse")
            .joinpath("data/c13_families_example.csv")
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_family_table(text)


# ---------------------------------------------------------------------------
# Grid specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """A finite cartesian product of record parameters."""

    isotopes: tuple
    b0s_T: tuple
    thetas_deg: tuple
    ms: tuple
    transitions: tuple
    family_ids: tuple = (None,)
    seeds: tuple = (None,)
    tau_start_us: float = DEFAULT_TAU_US[0]
    tau_stop_us: float = DEFAULT_TAU_US[1]
    tau_points: int = DEFAULT_TAU_POINTS
    rabi_MHz: float = DEFAULT_RABI_MHZ
    spp: int = DEFAULT_SPP
    method: str = DEFAULT_METHOD

    def __post_init__(self):
        for name in ("isotopes", "b0s_T", "thetas_deg", "ms", "transitions",
                     "family_ids", "seeds"):
            values = tuple(getattr(self, name))
            if not values:
                raise GridSpecError(f"axis {name} has no values")
            if len(set(values)) != len(values):
                raise GridSpecError(f"axis {name} has duplicate values")
            object.__setattr__(self, name, values)

    @property
    def size(self) -> int:
        return (
            len(self.isotopes) * len(self.b0s_T) * len(self.thetas_deg)
            * len(self.ms) * len(self.transitions) * len(self.family_ids)
            * len(self.seeds)
        )


def expand_grid(grid: GridSpec, families: FamilyTable | None = None) -> tuple:
    """All RecordParams of a grid, in axis-nesting order.

    The product nests in declaration order (isotope outermost, seed
    innermost), so generation and progress reporting are deterministic.
    """
    if any(fid is not None for fid in grid.family_ids) and families is None:
        raise GridSpecError("grid lists family_id values but no family table given")
    out = []
    for isotope, b0, theta, m, transition, fid, seed in itertools.product(
        grid.isotopes, grid.b0s_T, grid.thetas_deg, grid.ms,
        grid.transitions, grid.family_ids, grid.seeds,
    ):
        a_c = families.matrix(fid) if fid is not None else None
        out.append(
            RecordParams(
                isotope=isotope, b0_T=b0, theta_deg=theta, m=m,
                transition=transition, rabi_MHz=grid.rabi_MHz,
                family_id=fid, a_c=a_c, seed=seed,
                tau_start_us=grid.tau_start_us, tau_stop_us=grid.tau_stop_us,
                tau_points=grid.tau_points, spp=grid.spp, method=grid.method,
            )
        )
    return tuple(out)


def _split_values(raw: str) -> list:
    values = [v.strip() for v in raw.split(",") if v.strip()]
    if not values:
        raise GridSpecError("empty value list")
    return values


_GRID_KEYS = ("isotope", "b0_mT", "theta_deg", "m", "transition", "family_id", "seed")
_TAU_KEYS = ("start_us", "stop_us", "points")
_SETTINGS_KEYS = ("rabi_MHz", "samples_per_drive_period", "method")


def parse_grid(text: str) -> GridSpec:
    """Parse the INI grid format (see module docstring).

    Raises:
        GridSpecError: On syntax errors, unknown keys, missing axes, or
            values the axes reject.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise GridSpecError(f"grid parse error: {exc}") from exc
    if "grid" not in parser:
        raise GridSpecError("grid spec is missing the [grid] section")
    for section in parser.sections():
        if section not in ("grid", "tau", "settings"):
            raise GridSpecError(f"unknown section [{section}]")
    grid_sec = parser["grid"]
    for key in grid_sec:
        if key not in [k.lower() for k in _GRID_KEYS]:
            raise GridSpecError(f"unknown [grid] key {key!r}")
    for key in ("isotope", "b0_mt", "theta_deg", "m", "transition"):
        if key not in grid_sec:
            raise GridSpecError(f"[grid] is missing required axis {key!r}")
    try:
        kwargs = {
            "isotopes": tuple(_split_values(grid_sec["isotope"])),
            "b0s_T": tuple(float(v) / 1000.0 for v in _split_values(grid_sec["b0_mt"])),
            "thetas_deg": tuple(float(v) for v in _split_values(grid_sec["theta_deg"])),
            "ms": tuple(int(v) for v in _split_values(grid_sec["m"])),
            "transitions": tuple(_split_values(grid_sec["transition"])),
        }
        if "family_id" in grid_sec:
            kwargs["family_ids"] = tuple(
                None if v.lower() == "none" else v
                for v in _split_values(grid_sec["family_id"])
            )
        if "seed" in grid_sec:
            kwargs["seeds"] = tuple(int(v) for v in _split_values(grid_sec["seed"]))
        if "tau" in parser:
            tau = parser["tau"]
            for key in tau:
                if key not in _TAU_KEYS:
                    raise GridSpecError(f"unknown [tau] key {key!r}")
            kwargs["tau_start_us"] = tau.getfloat("start_us", DEFAULT_TAU_US[0])
            kwargs["tau_stop_us"] = tau.getfloat("stop_us", DEFAULT_TAU_US[1])
            kwargs["tau_points"] = tau.getint("points", DEFAULT_TAU_POINTS)
        if "settings" in parser:
            sec = parser["settings"]
            for key in sec:
                if key not in [k.lower() for k in _SETTINGS_KEYS]:
                    raise GridSpecError(f"unknown [settings] key {key!r}")
            kwargs["rabi_MHz"] = sec.getfloat("rabi_mhz", DEFAULT_RABI_MHZ)
            kwargs["spp"] = sec.getint("samples_per_drive_period", DEFAULT_SPP)
            kwargs["method"] = sec.get("method", DEFAULT_METHOD)
    except GridSpecError:
        raise
    except ValueError as exc:
        raise GridSpecError(f"bad grid value: {exc}") from None
    spec = GridSpec(**kwargs)
    try:
        # fail fast on axis values RecordParams would reject per point
        expand_grid(GridSpec(**{**kwargs, "family_ids": (None,)}))
    except GridSpecError:
        raise
    except ValueError as exc:
        raise GridSpecError(f"bad grid value: {exc}") from None
    return spec


def read_grid(path) -> GridSpec:
    return parse_grid(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Simulation of one record
# ---------------------------------------------------------------------------


def _params_system(params: RecordParams) -> SpinSystem:
    target = None
    if params.a_c is not None:
        target = TargetSpin.carbon13(a=params.a_c)
    return SpinSystem(
        nitrogen=params.isotope, target=target,
        b0=params.b0_T, theta=params.theta_deg,
    )


def simulate_record(params: RecordParams, *, workers=None) -> DatasetRecord:
    """Run the XY8-M sweep for one grid point and wrap it as a record."""
    system = _params_system(params)
    drive = resonant_drive(system, params.transition, rabi_mhz=params.rabi_MHz)
    settings = PropagationSettings(
        samples_per_drive_period=params.spp, timedep_method=params.method,
    )
    trace = run_sweep(
        system, "xy8", params.tau_grid(), drive,
        t_pi=params.t_pi_us, m=params.m, seed=params.seed,
        settings=settings, workers=workers,
    )
    return DatasetRecord(record_id=record_id(params), params=params, trace=trace)


# ---------------------------------------------------------------------------
# Record files
# ---------------------------------------------------------------------------

_IDENTITY_KEYS = ("record_id", "engine_version", "created_at")


def record_text(record: DatasetRecord) -> str:
    """Serialize a record to its file format (header comments + CSV)."""
    lines = [f"# {key} = {getattr(record, key)!r}" for key in _IDENTITY_KEYS]
    lines += [f"# {line}" for line in _params_lines(record.params)]
    return "\n".join(lines) + "\n" + trace_to_csv(record.trace)


def parse_record(text: str) -> DatasetRecord:
    """Parse and validate a record file.

    Raises:
        RecordFormatError: On missing/unknown header keys, unparsable
            values, or a record_id that does not match the recomputed
            content hash (tamper/corruption check).
    """
    header = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line.startswith("#"):
            break
        body = line[1:].strip()
        if "=" not in body:
            raise RecordFormatError(f"line {lineno}: expected 'key = value'")
        key, _, value = body.partition("=")
        try:
            header[key.strip()] = ast.literal_eval(value.strip())
        except (ValueError, SyntaxError) as exc:
            raise RecordFormatError(f"line {lineno}: {exc}") from None
    param_names = sorted(f.name for f in fields(RecordParams))
    expected = set(_IDENTITY_KEYS) | set(param_names)
    if set(header) != expected:
        missing = sorted(expected - set(header))
        extra = sorted(set(header) - expected)
        raise RecordFormatError(f"header keys: missing {missing}, unexpected {extra}")
    try:
        params = RecordParams(**{name: header[name] for name in param_names})
    except ValueError as exc:
        raise RecordFormatError(str(exc)) from None
    expected_id = record_id(params, header["engine_version"])
    if header["record_id"] != expected_id:
        raise RecordFormatError(
            f"record_id {header['record_id']!r} does not match content hash"
        )
    try:
        trace, _ = parse_trace_csv(text, strict=True)
    except ValueError as exc:
        raise RecordFormatError(str(exc)) from None
    return DatasetRecord(
        record_id=header["record_id"], params=params, trace=trace,
        engine_version=header["engine_version"], created_at=header["created_at"],
    )


def read_record(path) -> DatasetRecord:
    return parse_record(Path(path).read_text(encoding="utf-8"))


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(f".tmp-{os.getpid()}-{path.name}")
    tmp.write_text(text, encoding="utf-8", newline="\n")
    os.replace(tmp, path)


def write_record(root, record: DatasetRecord) -> Path:
    """Atomically write a record file; the store is append-only."""
    root = Path(root)
    path = root / record.file_name
    if path.exists():
        raise FileExistsError(f"record already stored: {path}")
    _atomic_write(path, record_text(record))
    return path


# ---------------------------------------------------------------------------
# Index
# ---------------------------------------------------------------------------


def _index_entry(record: DatasetRecord) -> dict:
    p = record.params
    return {
        "file": record.file_name,
        "isotope": p.isotope,
        "b0_T": p.b0_T,
        "theta_deg": p.theta_deg,
        "m": p.m,
        "transition": p.transition,
        "family_id": p.family_id,
        "seed": p.seed,
    }


def _write_index(root: Path, records: dict) -> None:
    payload = {"engine_version": ENGINE_VERSION, "records": records}
    _atomic_write(root / INDEX_NAME, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_index(root) -> dict:
    """Read the index; raises MissingIndexError if it was never built."""
    path = Path(root) / INDEX_NAME
    if not path.exists():
        raise MissingIndexError(f"no {INDEX_NAME} in {root}; run reindex")
    return json.loads(path.read_text(encoding="utf-8"))


def reindex(root) -> int:
    """Rebuild the index from the record files; returns the record count.

    Every record file is re-parsed, which re-verifies its content hash,
    so a reindex doubles as an integrity check of the store.
    """
    root = Path(root)
    records = {}
    for path in sorted(root.glob("*" + RECORD_SUFFIX)):
        record = read_record(path)
        if record.file_name != path.name:
            raise RecordFormatError(
                f"{path.name}: file name does not match record_id"
            )
        records[record.record_id] = _index_entry(record)
    _write_index(root, records)
    return len(records)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _quarantine(root: Path, rid: str, params: RecordParams, exc: Exception) -> None:
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    summary = (
        f"{params.isotope} b0={params.b0_T} theta={params.theta_deg} "
        f"m={params.m} {params.transition}"
    )
    with open(root / QUARANTINE_NAME, "a", encoding="utf-8") as fh:
        fh.write(f"{stamp}\t{rid}\t{summary}\t{type(exc).__name__}: {exc}\n")


def generate(root, grid: GridSpec, *, families: FamilyTable | None = None,
             workers=None, progress=None):
    """Simulate a grid into a store; yields each newly written record.

    Resumable: points whose record id already exists on disk are
    skipped, so re-running the same grid writes nothing.  A failing
    point is appended to ``quarantine.log`` and generation continues.
    The optional ``progress`` callable receives
    ``(status, index, total, record_id)`` with status one of
    "written"/"skipped"/"failed".

    Yields:
        DatasetRecord: For every record simulated in this run.
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    params_list = expand_grid(grid, families)
    try:
        index_records = load_index(root)["records"]
    except MissingIndexError:
        index_records = {}
    total = len(params_list)
    for i, params in enumerate(params_list):
        rid = record_id(params)
        if (root / (rid + RECORD_SUFFIX)).exists():
            if progress:
                progress("skipped", i, total, rid)
            continue
        try:
            record = simulate_record(params, workers=workers)
        except Exception as exc:  # quarantine-and-continue is the contract
            _quarantine(root, rid, params, exc)
            if progress:
                progress("failed", i, total, rid)
            continue
        write_record(root, record)
        index_records[rid] = _index_entry(record)
        _write_index(root, index_records)
        if progress:
            progress("written", i, total, rid)
        yield record


@dataclass(frozen=True)
class BuildReport:
    written: int
    skipped: int
    failed: int


def build_dataset(root, grid: GridSpec, *, families: FamilyTable | None = None,
                  workers=None, progress=None) -> BuildReport:
    """Drain ``generate`` and tally the outcome per grid point."""
    counts = {"written": 0, "skipped": 0, "failed": 0}

    def tally(status, i, total, rid):
        counts[status] += 1
        if progress:
            progress(status, i, total, rid)

    for _ in generate(root, grid, families=families, workers=workers, progress=tally):
        pass
    return BuildReport(**counts)


# ---------------------------------------------------------------------------
# Queries and matching
# ---------------------------------------------------------------------------


def _matches(entry: dict, filters: dict) -> bool:
    for key, wanted in filters.items():
        if key == "b0_min_T":
            if not entry["b0_T"] >= wanted:
                return False
        elif key == "b0_max_T":
            # half-open range: min inclusive, max exclusive
            if not entry["b0_T"] < wanted:
                return False
        elif key in ("b0_T", "theta_deg"):
            if abs(entry[key] - wanted) > _FLOAT_TOL:
                return False
        elif entry[key] != wanted:
            return False
    return True


def _order_key(entry: dict, rid: str):
    seed = entry["seed"]
    return (
        entry["isotope"], entry["b0_T"], entry["theta_deg"], entry["m"],
        entry["transition"], entry["family_id"] or "",
        -1 if seed is None else seed, rid,
    )


def query(root, filters: dict | None = None) -> list:
    """Records matching a predicate, ordered by (isotope, B0, theta, M).

    Filter keys: exact-match ``isotope``, ``b0_T``, ``theta_deg``, ``m``,
    ``transition``, ``family_id``, ``seed``; half-open field range
    ``b0_min_T`` <= B0 < ``b0_max_T``.  Float equality uses a 1e-12
    absolute tolerance.

    Raises:
        QueryError: For an unknown filter key.
        MissingIndexError: If the store has no index.
    """
    filters = dict(filters or {})
    unknown = sorted(set(filters) - set(FILTER_FIELDS) - set(RANGE_FIELDS))
    if unknown:
        raise QueryError(f"unknown filter fields {unknown}; "
                         f"known: {sorted(FILTER_FIELDS + RANGE_FIELDS)}")
    root = Path(root)
    entries = load_index(root)["records"]
    hits = [
        (rid, entry) for rid, entry in entries.items() if _matches(entry, filters)
    ]
    hits.sort(key=lambda pair: _order_key(pair[1], pair[0]))
    return [read_record(root / entry["file"]) for _, entry in hits]


@dataclass(frozen=True)
class MatchRanking:
    """best_match outcome: ranked hits plus records ranking had to skip."""

    ranked: tuple  # of (DatasetRecord, CorrelationReport), r descending
    skipped: tuple  # of (record_id, reason)


def ranking_to_csv(ranking: MatchRanking) -> str:
    """Serialize a ranking to CSV (repr floats, lossless round-trip)."""
    lines = ["rank,record_id,r,slope,intercept"]
    lines.extend(
        f"{rank},{record.record_id},{float(rep.r)!r},"
        f"{float(rep.slope)!r},{float(rep.intercept)!r}"
        for rank, (record, rep) in enumerate(ranking.ranked, start=1)
    )
    return "\n".join(lines) + "\n"


def best_match(root, experimental: SweepTrace, filters: dict | None = None,
               *, top_k: int | None = None) -> MatchRanking:
    """Rank matching records against an experimental trace by Pearson r.

    Records whose trace gives an undefined correlation (constant data)
    are skipped and reported rather than failing the whole ranking.

    Raises:
        MatchError: If the filter matches no records at all.
    """
    records = query(root, filters)
    if not records:
        raise MatchError("no records match the filter")
    ranked, skipped = [], []
    for record in records:
        try:
            report = fit_linear_map(experimental, record.trace)
        except UndefinedCorrelationError as exc:
            skipped.append((record.record_id, str(exc)))
            continue
        ranked.append((record, report))
    ranked.sort(key=lambda pair: (-pair[1].r, pair[0].record_id))
    if top_k is not None:
        ranked = ranked[:top_k]
    return MatchRanking(ranked=tuple(ranked), skipped=tuple(skipped))
