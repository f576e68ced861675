"""Sweeps, spectra, and trace comparison.

run_sweep drives the propagation engine over a grid of the protocol's
swept variable (tau for echo/decoupling protocols, pulse duration for
Rabi) and returns a SweepTrace.  The rest of the module turns traces
into numbers: windowed FFT peaks with quadratic interpolation, stretched
-exponential envelope fits, the two-frequency echo-modulation fit, and
the Pearson / linear-map comparison used to rank simulations against
experimental fluorescence.

Trace CSV conventions: column 1 is the swept variable (``tau_us``, or
``t_us`` for Rabi and experimental time axes), column 2 is ``p`` for
simulated probability or ``counts`` for experimental fluorescence;
``#`` lines are comments.  Floats serialize via repr for lossless
round-trips, which is what makes regenerated artifacts byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from multiprocessing import get_context

import numpy as np
from scipy.optimize import curve_fit

from . import ENGINE_VERSION
from .evolution import PropagationSettings, timeline_probability
from .hamiltonian import DriveSpec, SignalSpec, SpinSystem
from .sequences import (
    hahn_timeline,
    rabi_timeline,
    rxy8_correlated_timeline,
    rxy8_timeline,
    xy8_timeline,
)

WORKERS_ENV = "NVPULSE_WORKERS"

PROTOCOLS = ("rabi", "hahn", "xy8", "rxy8", "rxy8c")

TRACE_KINDS = ("simulated", "experimental")

X_COLUMNS = ("tau_us", "t_us")
Y_COLUMNS = ("p", "counts")


class GridError(ValueError):
    """The trace grid violates a sampling requirement (e.g. non-uniform)."""


class TraceFormatError(ValueError):
    """A trace file could not be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class UndefinedCorrelationError(ValueError):
    """Pearson correlation is undefined (constant input)."""


class EnvelopeFitError(RuntimeError):
    """Envelope fit failed to converge or left the physical range."""


class EseemExtractionError(RuntimeError):
    """Echo-modulation frequencies could not be extracted."""


class SweepPointError(RuntimeError):
    """Propagation failed at one sweep point.

    Attributes:
        index: Zero-based grid index.
        x: The swept value at that index.
    """

    def __init__(self, index: int, x: float, cause: str):
        super().__init__(f"sweep point {index} (x = {x!r}) failed: {cause}")
        self.index = index
        self.x = x


@dataclass(frozen=True, eq=False)
class SweepTrace:
    """One sweep: swept variable, response, provenance.

    Attributes:
        x: Strictly increasing swept values (us).
        p: Probability (simulated) or counts (experimental).
        kind: "simulated" or "experimental".
        metadata: Full parameter record of how the trace was produced.
    """

    x: np.ndarray
    p: np.ndarray
    kind: str = "simulated"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        p = np.asarray(self.p, dtype=float)
        if x.ndim != 1 or p.ndim != 1 or len(x) != len(p):
            raise ValueError("x and p must be 1-d arrays of equal length")
        if len(x) < 8:
            raise ValueError(f"traces need >= 8 points, got {len(x)}")
        if np.any(np.diff(x) <= 0):
            raise ValueError("x must be strictly increasing")
        if self.kind not in TRACE_KINDS:
            raise ValueError(f"kind must be one of {TRACE_KINDS}")
        x.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def x_column(self) -> str:
        return self.metadata.get("x_column", "tau_us")

    @property
    def y_column(self) -> str:
        return "p" if self.kind == "simulated" else "counts"


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------


def compile_protocol(protocol, x, drive, *, t_pi=None, m=1, seed=None, g=None):
    """Timeline for one sweep point of the named protocol.

    ``x`` is the swept variable: pulse duration (us) for rabi, tau (us)
    for everything else.  ``t_pi`` is required for echo/decoupling
    protocols, in us.
    """
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}, expected one of {PROTOCOLS}")
    if protocol == "rabi":
        return rabi_timeline(x, drive)
    if t_pi is None:
        raise ValueError(f"protocol {protocol!r} needs t_pi")
    if protocol == "hahn":
        return hahn_timeline(x, drive, t_pi)
    if protocol == "xy8":
        return xy8_timeline(m, x, drive, t_pi)
    if protocol == "rxy8":
        return rxy8_timeline(m, x, drive, t_pi, seed)
    return rxy8_correlated_timeline(m, x, drive, t_pi, g, seed)


def _sweep_point(args):
    i, system, protocol, x, drive, t_pi, m, seed, g, signal, settings = args
    try:
        timeline = compile_protocol(
            protocol, x, drive, t_pi=t_pi, m=m, seed=seed, g=g
        )
        return i, timeline_probability(
            system, timeline, signal=signal, settings=settings
        )
    except Exception as exc:  # surfaced with the point index by the caller
        return i, SweepPointError(i, x, f"{type(exc).__name__}: {exc}")


def worker_count(workers: int | None = None) -> int:
    """Resolve the sweep worker count (argument, else env, else serial)."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ValueError("worker count must be >= 1")
    return workers


def run_sweep(
    system: SpinSystem,
    protocol: str,
    x_grid,
    drive: DriveSpec,
    *,
    t_pi: float | None = None,
    m: int = 1,
    seed: int | None = None,
    g: int | None = None,
    signal: SignalSpec | None = None,
    settings: PropagationSettings | None = None,
    workers: int | None = None,
) -> SweepTrace:
    """Simulate a protocol over a grid of the swept variable.

    Each grid point is an independent propagation (same seed, so RXY8
    phase patterns are common across the sweep); points fan out to a
    process pool when ``workers`` (or the NVPULSE_WORKERS environment
    variable) exceeds one.  Results are deterministic and ordered by x
    regardless of the worker count.

    Raises:
        SweepPointError: If any point fails, identifying the index.
    """
    settings = settings or PropagationSettings()
    x_grid = np.asarray(x_grid, dtype=float)
    n_workers = worker_count(workers)
    if protocol not in PROTOCOLS:
        raise ValueError(f"unknown protocol {protocol!r}, expected one of {PROTOCOLS}")
    if protocol != "rabi" and t_pi is None:
        raise ValueError(f"protocol {protocol!r} needs t_pi")
    jobs = [
        (i, system, protocol, float(x), drive, t_pi, m, seed, g, signal, settings)
        for i, x in enumerate(x_grid)
    ]
    if n_workers == 1:
        results = map(_sweep_point, jobs)
    else:
        with get_context("fork").Pool(n_workers) as pool:
            results = pool.map(_sweep_point, jobs, chunksize=max(1, len(jobs) // (4 * n_workers)))
    p = np.empty(len(jobs))
    for i, value in results:
        if isinstance(value, SweepPointError):
            raise value
        p[i] = value
    metadata = sweep_metadata(
        system, protocol, drive, t_pi=t_pi, m=m, seed=seed, g=g,
        signal=signal, settings=settings,
    )
    return SweepTrace(x=x_grid, p=p, kind="simulated", metadata=metadata)


def sweep_metadata(system, protocol, drive, *, t_pi=None, m=1, seed=None, g=None,
                   signal=None, settings=None) -> dict:
    """Flat, serializable record of every parameter behind a sweep."""
    settings = settings or PropagationSettings()
    meta = {
        "engine_version": ENGINE_VERSION,
        "protocol": protocol,
        "x_column": "t_us" if protocol == "rabi" else "tau_us",
        "nitrogen": system.nitrogen or "none",
        "b0_T": system.b0,
        "theta_deg": system.theta,
        "azimuth_deg": system.azimuth,
        "drive_b1_T": drive.b1_vector,
        "drive_frequency_MHz": drive.frequency,
        "drive_phase_rad": drive.phase,
        "drive_detuning_MHz": drive.detuning,
        "duration_scale": drive.duration_scale,
        "samples_per_drive_period": settings.samples_per_drive_period,
        "timedep_method": settings.timedep_method,
        "tolerance": settings.tolerance,
    }
    if system.target is not None:
        meta["target_gamma_MHzT"] = system.target.gamma
        meta["target_a_MHz"] = system.target.a
    if t_pi is not None:
        meta["t_pi_us"] = t_pi
    if protocol in ("xy8", "rxy8", "rxy8c"):
        meta["m"] = m
    if seed is not None:
        meta["rng_seed"] = seed
    if g is not None:
        meta["g"] = g
    if signal is not None:
        meta["signal_b2_T"] = signal.b2_vector
        meta["signal_frequency_MHz"] = signal.frequency
        meta["signal_phase_rad"] = signal.phase
    return meta


# ---------------------------------------------------------------------------
# Spectra and fits
# ---------------------------------------------------------------------------


def _uniform_spacing(x: np.ndarray) -> float:
    steps = np.diff(x)
    dx = steps[0]
    if np.max(np.abs(steps - dx)) > 1e-9 * max(abs(dx), 1e-30):
        raise GridError("x grid must be uniform for spectral analysis")
    return float(dx)


def fft_spectrum(trace: SweepTrace, *, floor: float = 4.0):
    """Interpolated spectral peaks of a trace, strongest first.

    Mean-subtracts, applies a Hann window, and picks local maxima of the
    rFFT magnitude above ``floor`` times the median magnitude; each peak
    frequency and magnitude is refined by a parabola through the log
    magnitude of the bin and its neighbors (worst position error is a
    few hundredths of a bin for an off-bin tone).

    Returns:
        List of (frequency MHz, magnitude) tuples, magnitude-descending.

    Raises:
        GridError: If the grid is not uniform.
    """
    dx = _uniform_spacing(trace.x)
    y = trace.p - np.mean(trace.p)
    window = np.hanning(len(y))
    mags = np.abs(np.fft.rfft(y * window))
    freqs = np.fft.rfftfreq(len(y), dx)
    interior = mags[1:-1]
    threshold = floor * np.median(mags[1:])
    peaks = []
    tiny = np.finfo(float).tiny
    for k in 1 + np.nonzero(
        (interior >= mags[:-2]) & (interior > mags[2:]) & (interior > threshold)
    )[0]:
        alpha, beta, gamma = np.log(np.maximum(mags[k - 1 : k + 2], tiny))
        denom = alpha - 2 * beta + gamma
        delta = 0.5 * (alpha - gamma) / denom if denom != 0 else 0.0
        freq = (k + delta) * (freqs[1] - freqs[0])
        magnitude = np.exp(beta - 0.25 * (alpha - gamma) * delta)
        peaks.append((float(freq), float(magnitude)))
    peaks.sort(key=lambda fm: -fm[1])
    return peaks


@dataclass(frozen=True)
class EnvelopeFit:
    """Stretched-exponential coherence envelope A exp[-(t/tau_c)^4] + C."""

    tau_c: float
    uncertainty: float
    amplitude: float
    baseline: float


def _envelope_points(x, p):
    """Upper-envelope samples: local maxima at their own x positions.

    A trace with no interior maxima (pure decay) is its own envelope.
    """
    # strict on both sides so constant plateaus contribute no points
    interior = (p[1:-1] > p[:-2]) & (p[1:-1] > p[2:])
    idx = 1 + np.nonzero(interior)[0]
    if len(idx) < 5:
        return x, p
    if p[0] > p[idx[0]]:
        idx = np.concatenate(([0], idx))
    return x[idx], p[idx]


def fit_envelope(trace: SweepTrace) -> EnvelopeFit:
    """Fit the coherence envelope A exp[-(t/tau_c)^4] + C to a trace.

    The fit runs on the upper envelope (local maxima) so that modulation
    does not bias the decay constant; pure decays fit directly.

    Raises:
        EnvelopeFitError: On non-convergence, a constant trace, or a
            decay constant outside (0, 10x span].
    """
    x, p = _envelope_points(trace.x, trace.p)
    span = trace.x[-1] - trace.x[0]
    if np.ptp(p) < 1e-12:
        raise EnvelopeFitError("constant trace: decay constant is unbounded")

    def model(t, a, tau_c, c):
        return a * np.exp(-((t / tau_c) ** 4)) + c

    a0 = float(np.ptp(p))
    c0 = float(np.min(p))
    # crude scale seed: where the signal first drops below 1/e of its range
    below = np.nonzero(p - c0 < a0 * np.exp(-1))[0]
    tau0 = float(x[below[0]]) if len(below) else float(span)
    tau0 = max(tau0, span * 1e-3)
    try:
        params, cov = curve_fit(
            model, x, p, p0=(a0, tau0, c0), maxfev=20000,
            bounds=([0, span * 1e-4, -np.inf], [np.inf, np.inf, np.inf]),
        )
    except RuntimeError as exc:
        raise EnvelopeFitError(f"envelope fit did not converge: {exc}") from exc
    a, tau_c, c = params
    if not np.isfinite(tau_c) or tau_c > 10 * span:
        raise EnvelopeFitError(
            f"decay constant {tau_c:.3g} us out of range for span {span:.3g} us"
        )
    err = float(np.sqrt(cov[1, 1])) if np.all(np.isfinite(cov)) else np.inf
    return EnvelopeFit(
        tau_c=float(tau_c), uncertainty=err, amplitude=float(a), baseline=float(c)
    )


@dataclass(frozen=True)
class EseemFit:
    """Two-frequency echo-modulation fit.

    Model: p(t) = 1 - k sin^2(pi w_a t) sin^2(pi w_b t) + baseline, the
    product form whose spectrum carries the two effective Larmor lines
    plus their half-amplitude sum/difference sidebands.
    """

    omega_slow: float
    omega_fast: float
    amplitude: float
    baseline: float
    residual: float

    def __post_init__(self):
        if not 0 < self.omega_slow < self.omega_fast:
            raise ValueError("need omega_fast > omega_slow > 0")


def extract_eseem(trace: SweepTrace) -> EseemFit:
    """Extract the two modulation frequencies from an echo trace.

    FFT peaks seed a nonlinear refinement of the product-sin^2 model.

    Raises:
        EseemExtractionError: If fewer than two significant spectral
            peaks exist or the refinement collapses.
    """
    peaks = fft_spectrum(trace, floor=3.0)
    if len(peaks) < 2:
        raise EseemExtractionError(
            f"need two significant spectral peaks, found {len(peaks)}"
        )
    seeds = sorted(f for f, _ in peaks[:2])

    def model(t, k, w_a, w_b, baseline):
        return (
            1
            - k * np.sin(np.pi * w_a * t) ** 2 * np.sin(np.pi * w_b * t) ** 2
            + baseline
        )

    k0 = float(np.ptp(trace.p))
    b0 = float(np.max(trace.p)) - 1.0
    try:
        params, _ = curve_fit(
            model, trace.x, trace.p, p0=(k0, seeds[0], seeds[1], b0),
            maxfev=20000,
        )
    except RuntimeError as exc:
        raise EseemExtractionError(f"refinement did not converge: {exc}") from exc
    k, w_a, w_b, baseline = params
    w_slow, w_fast = sorted((abs(w_a), abs(w_b)))
    residual = float(
        np.sqrt(np.mean((model(trace.x, *params) - trace.p) ** 2))
    )
    try:
        return EseemFit(
            omega_slow=float(w_slow), omega_fast=float(w_fast),
            amplitude=float(k), baseline=float(baseline), residual=residual,
        )
    except ValueError as exc:
        raise EseemExtractionError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationReport:
    """Linear map counts = slope * p + intercept and its Pearson r."""

    slope: float
    intercept: float
    r: float

    def __post_init__(self):
        if not -1 - 1e-12 <= self.r <= 1 + 1e-12:
            raise ValueError("r must lie in [-1, 1]")


def pearson(a, b) -> float:
    """Pearson correlation coefficient of two equal-length arrays.

    Raises:
        UndefinedCorrelationError: If either input is constant.
        ValueError: On length mismatch or fewer than 3 points.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("inputs must be 1-d arrays of equal length")
    if len(a) < 3:
        raise ValueError("need at least 3 points")
    sa, sb = np.std(a), np.std(b)
    if sa == 0 or sb == 0:
        raise UndefinedCorrelationError("correlation undefined for constant input")
    r = float(np.mean((a - np.mean(a)) * (b - np.mean(b))) / (sa * sb))
    return max(-1.0, min(1.0, r))


def fit_linear_map(
    experimental: SweepTrace, simulated: SweepTrace
) -> CorrelationReport:
    """Least-squares linear map from simulated p to experimental counts.

    The simulation is resampled onto the experimental grid by linear
    interpolation when grids differ (experimental data is never moved).
    Negative slopes are legal: fluorescence contrast may invert.

    Raises:
        UndefinedCorrelationError: If the simulated trace is constant.
    """
    x_exp = experimental.x
    p_sim = simulated.p
    if len(simulated.x) != len(x_exp) or not np.array_equal(simulated.x, x_exp):
        p_sim = np.interp(x_exp, simulated.x, simulated.p)
    if np.std(p_sim) == 0:
        raise UndefinedCorrelationError("simulated trace is constant on this grid")
    design = np.column_stack([p_sim, np.ones_like(p_sim)])
    (slope, intercept), *_ = np.linalg.lstsq(design, experimental.p, rcond=None)
    r = pearson(experimental.p, p_sim)
    return CorrelationReport(slope=float(slope), intercept=float(intercept), r=r)


# ---------------------------------------------------------------------------
# Trace I/O
# ---------------------------------------------------------------------------


def trace_to_csv(trace: SweepTrace) -> str:
    """Serialize a trace to CSV text (repr floats, lossless round-trip)."""
    lines = [f"{trace.x_column},{trace.y_column}"]
    lines.extend(f"{float(x)!r},{float(p)!r}" for x, p in zip(trace.x, trace.p))
    return "\n".join(lines) + "\n"


def metadata_text(metadata: dict) -> str:
    """Sidecar key-value serialization, sorted by key."""
    return "".join(f"{k} = {metadata[k]!r}\n" for k in sorted(metadata))


def write_trace(path, trace: SweepTrace, *, sidecar: bool = True) -> list:
    """Write a trace CSV (and metadata sidecar); returns written paths."""
    path = os.fspath(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(trace_to_csv(trace))
    written = [path]
    if sidecar:
        meta_path = path + ".meta"
        with open(meta_path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(metadata_text(trace.metadata))
        written.append(meta_path)
    return written


def parse_trace_csv(text: str, *, strict: bool = True):
    """Parse trace CSV text into (SweepTrace, skipped-line numbers).

    Header names the columns: x is ``tau_us`` or ``t_us``, y is ``p``
    (simulated) or ``counts`` (experimental).  ``#`` lines are comments.
    In strict mode any malformed row raises with its 1-based line
    number; otherwise malformed rows are skipped and reported.
    """
    header = None
    xs, ps = [], []
    skipped = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if header is None:
            header = [c.strip() for c in line.split(",")]
            if len(header) != 2 or header[0] not in X_COLUMNS or header[1] not in Y_COLUMNS:
                raise TraceFormatError(
                    f"header must be one of {X_COLUMNS} then one of {Y_COLUMNS}, "
                    f"got {line!r}",
                    lineno,
                )
            continue
        cells = line.split(",")
        try:
            if len(cells) != 2:
                raise ValueError(f"expected 2 columns, got {len(cells)}")
            x_val, p_val = float(cells[0]), float(cells[1])
            xs.append(x_val)
            ps.append(p_val)
        except ValueError as exc:
            if strict:
                raise TraceFormatError(str(exc), lineno) from None
            skipped.append(lineno)
    if header is None:
        raise TraceFormatError("no header line found")
    if len(xs) < 8:
        raise TraceFormatError(f"too few data rows ({len(xs)}); need >= 8")
    bad = np.nonzero(np.diff(xs) <= 0)[0]
    if len(bad):
        raise TraceFormatError(
            f"x values must increase strictly; violation at data row {int(bad[0]) + 2}"
        )
    kind = "simulated" if header[1] == "p" else "experimental"
    trace = SweepTrace(
        x=np.array(xs), p=np.array(ps), kind=kind,
        metadata={"x_column": header[0]},
    )
    return trace, skipped


def read_trace(path, *, strict: bool = True):
    """Read a trace CSV file; returns (SweepTrace, skipped-line numbers)."""
    with open(path, "r", encoding="utf-8") as fh:
        return parse_trace_csv(fh.read(), strict=strict)
