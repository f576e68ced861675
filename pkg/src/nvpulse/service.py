"""HTTP JSON API under /v1: records, traces, on-demand simulation, compare.

The service is a read-only view of a record store plus small bounded
simulation jobs for the browser UI.  Every handler calls the same
library functions as the CLI and serializes artifacts with the same
functions (``trace_to_csv``, ``ranking_to_csv``), so a response body is
byte-identical to the file the CLI would write for the same inputs.
Every response carries the engine version (JSON field and
``X-Engine-Version`` header).

Endpoints:
    GET  /v1/health                    liveness + version
    GET  /v1/records?…                 filtered record listing
    GET  /v1/records/{id}/trace        stored trace as text/csv
    POST /v1/simulate                  bounded sweep (tau points <= 512, M <= 16)
    POST /v1/compare                   multipart CSV + filter -> ranked r table
    POST /v1/dataset/build             disabled unless created with allow_build

Error mapping: 400 malformed filter/CSV, 404 unknown id or empty match,
422 parameter out of bounds, 503 simulation slot busy or index missing.
Simulation jobs take a single slot (no queue): a second concurrent
request gets 503 immediately rather than piling up behind a long sweep.
"""

from __future__ import annotations

import threading
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import PlainTextResponse
from pydantic import BaseModel, Field, field_validator, model_validator

from . import ENGINE_VERSION
from .analysis import (
    PROTOCOLS,
    SweepPointError,
    TraceFormatError,
    parse_trace_csv,
    run_sweep,
    trace_to_csv,
)
from .dataset import (
    FamilyTableError,
    GridSpecError,
    MatchError,
    MissingIndexError,
    QueryError,
    best_match,
    build_dataset,
    load_index,
    parse_family_table,
    parse_grid,
    query as query_store,
    ranking_to_csv,
    read_record,
)
from .evolution import TIMEDEP_METHODS, PropagationSettings
from .fitting import TRANSITIONS
from .hamiltonian import (
    ConfigurationError,
    DegeneracyError,
    SignalSpec,
    SpinSystem,
    TargetSpin,
    resonant_drive,
)

MAX_TAU_POINTS = 512
MAX_ORDER = 16


class TargetModel(BaseModel):
    gamma_MHzT: float
    a_MHz: list[list[float]]


class SystemModel(BaseModel):
    nitrogen: str | None = None
    b0_T: float = Field(ge=0.0)
    theta_deg: float = Field(default=0.0, ge=0.0, le=180.0)
    azimuth_deg: float = 0.0
    target: TargetModel | None = None

    @field_validator("nitrogen", mode="before")
    @classmethod
    def _none_spelling(cls, v):
        # accept the config-file spelling of "no nitrogen" alongside null
        if isinstance(v, str) and v.strip().lower() in ("", "none"):
            return None
        return v


class TauModel(BaseModel):
    start_us: float = Field(gt=0.0)
    stop_us: float
    points: int = Field(
        ge=8, le=MAX_TAU_POINTS,
        description=f"bounded to {MAX_TAU_POINTS} points; larger jobs go "
                    "through the CLI",
    )

    @model_validator(mode="after")
    def _ordered(self):
        if not self.stop_us > self.start_us:
            raise ValueError("tau needs stop_us > start_us")
        return self


class SignalModel(BaseModel):
    amp_MHz: float
    freq_MHz: float = Field(gt=0.0)
    phase_rad: float = 0.0


class SimulateRequest(BaseModel):
    system: SystemModel
    protocol: str
    tau: TauModel
    transition: str = "minus_one"
    rabi_MHz: float = Field(default=40.0, gt=0.0)
    t_pi_us: float | None = Field(default=None, gt=0.0)
    m: int = Field(
        default=1, ge=1, le=MAX_ORDER,
        description=f"bounded to M <= {MAX_ORDER}; larger jobs go through the CLI",
    )
    seed: int | None = None
    g: int | None = None
    detuning_MHz: float = 0.0
    duration_scale: float = Field(default=1.0, gt=0.0)
    signal: SignalModel | None = None
    spp: int = Field(default=64, ge=16, le=512)
    method: str = TIMEDEP_METHODS[0]

    @field_validator("protocol")
    @classmethod
    def _known_protocol(cls, v):
        if v not in PROTOCOLS:
            raise ValueError(f"protocol must be one of {PROTOCOLS}")
        return v

    @field_validator("transition")
    @classmethod
    def _known_transition(cls, v):
        if v not in TRANSITIONS:
            raise ValueError(f"transition must be one of {TRANSITIONS}")
        return v

    @field_validator("method")
    @classmethod
    def _known_method(cls, v):
        if v not in TIMEDEP_METHODS:
            raise ValueError(f"method must be one of {TIMEDEP_METHODS}")
        return v

    @model_validator(mode="after")
    def _randomized_needs_seed(self):
        if self.protocol in ("rxy8", "rxy8c") and self.seed is None:
            raise ValueError(f"protocol {self.protocol!r} needs a seed")
        return self


class BuildRequest(BaseModel):
    grid: str
    families_csv: str | None = None


def _system_from_model(model: SystemModel) -> SpinSystem:
    target = None
    if model.target is not None:
        target = TargetSpin(
            gamma=model.target.gamma_MHzT,
            a=tuple(tuple(row) for row in model.target.a_MHz),
        )
    return SpinSystem(
        nitrogen=model.nitrogen, target=target, b0=model.b0_T,
        theta=model.theta_deg, azimuth=model.azimuth_deg,
    )


def _record_payload(record) -> dict:
    p = record.params
    return {
        "record_id": record.record_id,
        "engine_version": record.engine_version,
        "created_at": record.created_at,
        "isotope": p.isotope,
        "b0_T": p.b0_T,
        "theta_deg": p.theta_deg,
        "m": p.m,
        "transition": p.transition,
        "rabi_MHz": p.rabi_MHz,
        "t_pi_ns": p.t_pi_ns,
        "family_id": p.family_id,
        "seed": p.seed,
        "tau_start_us": p.tau_start_us,
        "tau_stop_us": p.tau_stop_us,
        "tau_points": p.tau_points,
        "trace_url": f"/v1/records/{record.record_id}/trace",
    }


def _collect_filters(isotope, b0_T, b0_min_T, b0_max_T, theta_deg, m,
                     transition, family_id, seed) -> dict:
    filters = {}
    if isotope is not None:
        filters["isotope"] = isotope
    if b0_T is not None:
        filters["b0_T"] = b0_T
    if b0_min_T is not None:
        filters["b0_min_T"] = b0_min_T
    if b0_max_T is not None:
        filters["b0_max_T"] = b0_max_T
    if theta_deg is not None:
        filters["theta_deg"] = theta_deg
    if m is not None:
        filters["m"] = m
    if transition is not None:
        filters["transition"] = transition
    if family_id is not None:
        filters["family_id"] = None if family_id.lower() == "none" else family_id
    if seed is not None:
        filters["seed"] = seed
    return filters


def create_app(root, *, allow_build: bool = False) -> FastAPI:
    """Build the FastAPI app serving the record store at ``root``."""
    root = Path(root)
    app = FastAPI(title="nvpulse", version=ENGINE_VERSION)
    # one simulation slot, no queue: a busy slot answers 503 immediately
    app.state.simulate_slot = threading.Semaphore(1)

    @app.middleware("http")
    async def version_header(request, call_next):
        response = await call_next(request)
        response.headers["X-Engine-Version"] = ENGINE_VERSION
        return response

    @app.get("/v1/health")
    def health():
        return {"status": "ok", "engine_version": ENGINE_VERSION}

    @app.get("/v1/records")
    def records(isotope: str | None = None, b0_T: float | None = None,
                b0_min_T: float | None = None, b0_max_T: float | None = None,
                theta_deg: float | None = None, m: int | None = None,
                transition: str | None = None, family_id: str | None = None,
                seed: int | None = None):
        filters = _collect_filters(isotope, b0_T, b0_min_T, b0_max_T,
                                   theta_deg, m, transition, family_id, seed)
        try:
            matched = query_store(root, filters)
        except QueryError as exc:
            raise HTTPException(400, str(exc)) from None
        except MissingIndexError as exc:
            raise HTTPException(503, str(exc)) from None
        return {
            "engine_version": ENGINE_VERSION,
            "count": len(matched),
            "records": [_record_payload(r) for r in matched],
        }

    @app.get("/v1/records/{record_id}/trace")
    def record_trace(record_id: str):
        try:
            entries = load_index(root)["records"]
        except MissingIndexError as exc:
            raise HTTPException(503, str(exc)) from None
        if record_id not in entries:
            raise HTTPException(404, f"unknown record id {record_id!r}")
        record = read_record(root / entries[record_id]["file"])
        return PlainTextResponse(trace_to_csv(record.trace), media_type="text/csv")

    @app.post("/v1/simulate")
    def simulate(req: SimulateRequest):
        if not app.state.simulate_slot.acquire(blocking=False):
            raise HTTPException(503, "simulation slot busy; retry shortly")
        try:
            try:
                system = _system_from_model(req.system)
                drive = resonant_drive(
                    system, req.transition, rabi_mhz=req.rabi_MHz,
                    detuning=req.detuning_MHz, duration_scale=req.duration_scale,
                )
                signal = None
                if req.signal is not None:
                    signal = SignalSpec.along_z(
                        req.signal.amp_MHz, req.signal.freq_MHz,
                        phase=req.signal.phase_rad,
                    )
                settings = PropagationSettings(
                    samples_per_drive_period=req.spp, timedep_method=req.method,
                )
            except (ConfigurationError, DegeneracyError, ValueError) as exc:
                raise HTTPException(422, str(exc)) from None
            grid = np.linspace(req.tau.start_us, req.tau.stop_us, req.tau.points)
            t_pi = req.t_pi_us
            if req.protocol != "rabi" and t_pi is None:
                t_pi = float(np.sqrt(2.0) / (2.0 * req.rabi_MHz))
            try:
                trace = run_sweep(
                    system, req.protocol, grid, drive, t_pi=t_pi, m=req.m,
                    seed=req.seed, g=req.g, signal=signal, settings=settings,
                )
            except SweepPointError as exc:
                raise HTTPException(500, str(exc)) from None
        finally:
            app.state.simulate_slot.release()
        return {
            "engine_version": ENGINE_VERSION,
            "metadata": trace.metadata,
            "trace_csv": trace_to_csv(trace),
        }

    @app.post("/v1/compare")
    def compare(file: UploadFile = File(...), isotope: str | None = Form(None),
                b0_T: float | None = Form(None),
                b0_min_T: float | None = Form(None),
                b0_max_T: float | None = Form(None),
                theta_deg: float | None = Form(None),
                m: int | None = Form(None),
                transition: str | None = Form(None),
                family_id: str | None = Form(None),
                seed: int | None = Form(None),
                top_k: int = Form(5), strict: bool = Form(False)):
        raw = file.file.read()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise HTTPException(400, f"trace CSV is not UTF-8: {exc}") from None
        try:
            experimental, skipped_rows = parse_trace_csv(text, strict=strict)
        except TraceFormatError as exc:
            raise HTTPException(400, str(exc)) from None
        filters = _collect_filters(isotope, b0_T, b0_min_T, b0_max_T,
                                   theta_deg, m, transition, family_id, seed)
        try:
            ranking = best_match(root, experimental, filters, top_k=top_k)
        except QueryError as exc:
            raise HTTPException(400, str(exc)) from None
        except MissingIndexError as exc:
            raise HTTPException(503, str(exc)) from None
        except MatchError as exc:
            raise HTTPException(404, str(exc)) from None
        return {
            "engine_version": ENGINE_VERSION,
            "skipped_rows": list(skipped_rows),
            "ranking": [
                {
                    "rank": rank,
                    "r": rep.r,
                    "slope": rep.slope,
                    "intercept": rep.intercept,
                    "record": _record_payload(record),
                }
                for rank, (record, rep) in enumerate(ranking.ranked, start=1)
            ],
            "unranked": [
                {"record_id": rid, "reason": reason}
                for rid, reason in ranking.skipped
            ],
            "ranking_csv": ranking_to_csv(ranking),
        }

    @app.post("/v1/dataset/build")
    def dataset_build(req: BuildRequest):
        # read-only posture: building over HTTP is opt-in at startup
        if not allow_build:
            raise HTTPException(403, "dataset build over HTTP is disabled")
        try:
            grid = parse_grid(req.grid)
            families = None
            if req.families_csv is not None:
                families = parse_family_table(req.families_csv)
        except (GridSpecError, FamilyTableError) as exc:
            raise HTTPException(400, str(exc)) from None
        report = build_dataset(root, grid, families=families)
        return {
            "engine_version": ENGINE_VERSION,
            "written": report.written,
            "skipped": report.skipped,
            "failed": report.failed,
        }

    return app
