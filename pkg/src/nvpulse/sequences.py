"""Pulse-protocol compilers: Rabi, Hahn echo, XY8-M and randomized variants.

A protocol compiles to a flat SequenceTimeline of free and pulse segments
with explicit durations and phases; propagation happens elsewhere.  Pulse
spacing tau is defined center-to-center between pi pulses, with tau/2 from
the pi/2-pulse center to the first pi-pulse center, so the delta-pulse
limit is exact.  The pi/2 duration is half the pi duration, and the
drive's duration_scale knob stretches every pulse (pulse-length error).

Phase conventions: the base XY8 block pattern is X Y X Y Y X Y X; the
leading pi/2 is +x.  An ideal XY8 block composes to the identity on the
driven transition, so the closing pi/2 is -x to return the bright state
and make resonances appear as dips; the Hahn echo composes to a net 2 pi
x-rotation and closes with +x.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evolution import PropagationSettings, bright_state_probability, harmonic_step_unitaries
from .hamiltonian import DriveSpec, SpinSystem, build_static, drive_operator
from .spincore import initial_state

XY8_BLOCK_PHASES = (0.0, np.pi / 2, 0.0, np.pi / 2, np.pi / 2, 0.0, np.pi / 2, 0.0)

SEGMENT_KINDS = ("free", "pulse")


class GeometryError(ValueError):
    """Pulses do not fit into the requested spacing."""


class CalibrationRangeError(RuntimeError):
    """No pulse-flip minimum found within the calibration sweep range."""


@dataclass(frozen=True)
class Segment:
    """One contiguous stretch of a timeline.

    Attributes:
        kind: "free" or "pulse".
        duration: Length in us, > 0.
        phase: Pulse phase in radians, added to the drive carrier phase.
        drive: The microwave field driving a pulse segment.
    """

    kind: str
    duration: float
    phase: float = 0.0
    drive: DriveSpec | None = None

    def __post_init__(self):
        if self.kind not in SEGMENT_KINDS:
            raise ValueError(f"segment kind must be one of {SEGMENT_KINDS}")
        if not self.duration > 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration}")
        if self.kind == "pulse" and self.drive is None:
            raise ValueError("pulse segments need a drive")


@dataclass(frozen=True)
class SequenceTimeline:
    """A compiled protocol: ordered segments plus descriptive metadata."""

    segments: tuple[Segment, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def total_duration(self) -> float:
        return sum(s.duration for s in self.segments)

    @property
    def pulse_phases(self) -> tuple[float, ...]:
        return tuple(s.phase for s in self.segments if s.kind == "pulse")

    def pulse_centers(self) -> list[float]:
        """Absolute center time of every pulse, in segment order."""
        centers = []
        t = 0.0
        for s in self.segments:
            if s.kind == "pulse":
                centers.append(t + s.duration / 2)
            t += s.duration
        return centers


def phase_table(m: int, offsets=None) -> tuple[float, ...]:
    """Phases of the 8m pi pulses: the XY8 pattern plus a per-block offset."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if offsets is None:
        offsets = np.zeros(m)
    offsets = np.asarray(offsets, dtype=float)
    if offsets.shape != (m,):
        raise ValueError(f"need one phase offset per block, got shape {offsets.shape}")
    return tuple(
        base + offsets[block] for block in range(m) for base in XY8_BLOCK_PHASES
    )


def _pulse_durations(drive: DriveSpec, t_pi: float) -> tuple[float, float]:
    """Scaled (pi, pi/2) durations in us."""
    if t_pi <= 0:
        raise GeometryError(f"t_pi must be > 0, got {t_pi}")
    return t_pi * drive.duration_scale, (t_pi / 2) * drive.duration_scale


def _append(segments: list, kind: str, duration: float, phase=0.0, drive=None):
    # zero-length stretches (pulses exactly touching) are legal but carry
    # no evolution; drop them rather than store zero durations
    if duration <= 1e-15:
        if duration < -1e-12:
            raise GeometryError(f"negative segment duration {duration:.3e} us")
        return
    segments.append(Segment(kind=kind, duration=duration, phase=phase, drive=drive))


def rabi_timeline(duration: float, drive: DriveSpec) -> SequenceTimeline:
    """A single continuous drive pulse; sweep the duration for a Rabi curve."""
    if duration <= 0:
        raise GeometryError("rabi pulse duration must be > 0")
    seg = Segment(
        kind="pulse", duration=duration * drive.duration_scale, phase=0.0, drive=drive
    )
    return SequenceTimeline(
        segments=(seg,),
        metadata={"protocol": "rabi", "t_us": duration},
    )


def hahn_timeline(tau: float, drive: DriveSpec, t_pi: float) -> SequenceTimeline:
    """pi/2 -- tau -- pi -- tau -- pi/2, spacing center-to-center (us)."""
    tp, tp2 = _pulse_durations(drive, t_pi)
    gap = tau - tp2 / 2 - tp / 2
    if gap <= 0:
        raise GeometryError(
            f"tau = {tau} us cannot fit pi/2 ({tp2} us) and pi ({tp} us) pulses"
        )
    segments: list[Segment] = []
    _append(segments, "pulse", tp2, 0.0, drive)
    _append(segments, "free", gap)
    _append(segments, "pulse", tp, 0.0, drive)
    _append(segments, "free", gap)
    _append(segments, "pulse", tp2, 0.0, drive)
    timeline = SequenceTimeline(
        segments=tuple(segments),
        metadata={"protocol": "hahn", "tau_us": tau, "t_pi_us": t_pi},
    )
    assert abs(timeline.total_duration - (2 * tau + tp2)) < 1e-9
    return timeline


def _xy8_family(protocol, m, tau, drive, t_pi, offsets, seed, g=None):
    tp, tp2 = _pulse_durations(drive, t_pi)
    lead = tau / 2 - tp2 / 2 - tp / 2
    inner = tau - tp
    if lead < -1e-12 or inner <= 0:
        raise GeometryError(
            f"tau = {tau} us cannot fit the pulse train (t_pi = {t_pi} us, "
            f"scale {drive.duration_scale})"
        )
    phases = phase_table(m, offsets)
    segments: list[Segment] = []
    _append(segments, "pulse", tp2, 0.0, drive)
    _append(segments, "free", lead)
    for k, phase in enumerate(phases):
        _append(segments, "pulse", tp, phase, drive)
        if k < len(phases) - 1:
            _append(segments, "free", inner)
    _append(segments, "free", lead)
    # closing pi/2 along -x: the ideal block is the identity, so this
    # returns the bright state and resonances read out as dips
    _append(segments, "pulse", tp2, np.pi, drive)
    metadata = {
        "protocol": protocol,
        "tau_us": tau,
        "m": m,
        "t_pi_us": t_pi,
        "phase_offsets": tuple(float(x) for x in np.asarray(offsets, dtype=float)),
    }
    if seed is not None:
        metadata["rng_seed"] = seed
    if g is not None:
        metadata["g"] = g
    timeline = SequenceTimeline(segments=tuple(segments), metadata=metadata)
    assert abs(timeline.total_duration - (8 * m * tau + tp2)) < 1e-9
    return timeline


def xy8_timeline(m: int, tau: float, drive: DriveSpec, t_pi: float) -> SequenceTimeline:
    """XY8-m: pi/2 -- [tau/2 -- pi -- tau -- ... -- pi -- tau/2] -- pi/2."""
    if m < 1:
        raise ValueError("m must be >= 1")
    return _xy8_family("xy8", m, tau, drive, t_pi, np.zeros(m), None)


def rxy8_timeline(
    m: int,
    tau: float,
    drive: DriveSpec,
    t_pi: float,
    seed: int | None = None,
    *,
    offsets=None,
) -> SequenceTimeline:
    """XY8-m with an i.i.d. uniform [0, 2 pi) phase offset per block.

    Explicit ``offsets`` (one per block) override the generator; forcing
    them to zero reproduces the plain XY8 pulse train.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if offsets is None:
        if seed is None:
            raise ValueError("need a seed (or explicit offsets)")
        offsets = np.random.default_rng(seed).uniform(0.0, 2 * np.pi, m)
    return _xy8_family("rxy8", m, tau, drive, t_pi, offsets, seed)


def rxy8_correlated_timeline(
    m: int, tau: float, drive: DriveSpec, t_pi: float, g: int, seed: int
) -> SequenceTimeline:
    """RXY8 with block phases cancelling every g blocks.

    Within each consecutive group of g blocks the offsets are
    Phi, Phi + 2 pi/g, ..., Phi + 2 pi (g-1)/g with Phi uniform, so
    sum(exp(-i Phi_m)) over the group vanishes (roots of unity).
    """
    if g not in (2, 3):
        raise ValueError("g must be 2 or 3")
    if m % g != 0:
        raise ValueError(f"m = {m} must be divisible by g = {g}")
    rng = np.random.default_rng(seed)
    base = rng.uniform(0.0, 2 * np.pi, m // g)
    offsets = np.concatenate(
        [phi + (2 * np.pi / g) * np.arange(g) for phi in base]
    )
    return _xy8_family("rxy8c", m, tau, drive, t_pi, offsets, seed, g=g)


def timeline_to_text(timeline: SequenceTimeline) -> str:
    """Serialize a timeline to the debug text format.

    One segment per line: ``kind duration_us phase_rad drive``, where
    drive is ``mw`` for pulses and ``-`` for free evolution; metadata as
    leading ``# key = value`` comments.
    """
    lines = [
        f"# {key} = {value!r}" for key, value in sorted(timeline.metadata.items())
    ]
    for s in timeline.segments:
        ref = "mw" if s.kind == "pulse" else "-"
        lines.append(f"{s.kind} {s.duration!r} {s.phase!r} {ref}")
    return "\n".join(lines) + "\n"


def calibrate_pi(
    system: SpinSystem,
    drive: DriveSpec,
    *,
    settings: PropagationSettings | None = None,
    max_duration: float | None = None,
) -> float:
    """Pulse duration (ns) of the first probability minimum of a Rabi sweep.

    One continuous resonant pulse is propagated once; the bright-state
    probability is snapshot at every integrator step boundary and the
    first (global in-range) minimum refined parabolically.  The drive must
    already be set to the transition frequency.

    Args:
        system: Spin system.
        drive: Resonant microwave drive.
        settings: Integrator configuration.
        max_duration: Sweep span in us; defaults to 2.5x the rotating-wave
            pi-time estimate sqrt(2) / (2 gamma_e B1).

    Returns:
        t_pi in nanoseconds (unscaled: duration_scale models applying an
        erroneous pulse length, not a different calibration).

    Raises:
        CalibrationRangeError: If no flip minimum lies inside the range.
    """
    settings = settings or PropagationSettings()
    gamma_b1 = abs(system.constants.gamma_e) * float(
        np.linalg.norm(drive.b1_vector)
    )
    if gamma_b1 <= 0:
        raise CalibrationRangeError("drive amplitude is zero")
    if max_duration is None:
        max_duration = 2.5 * np.sqrt(2) / (2 * gamma_b1)
    carrier = drive.frequency + drive.detuning
    n = max(
        16, int(np.ceil(max_duration * carrier * settings.samples_per_drive_period))
    )
    h_step = max_duration / n
    h0 = build_static(system)
    harmonics = [(drive_operator(system, drive.b1_vector), carrier, drive.phase)]
    us = harmonic_step_unitaries(h0, harmonics, 0.0, max_duration, n, settings)
    rho0 = initial_state(system)
    rho = rho0
    probs = np.empty(n + 1)
    probs[0] = 1.0
    for k in range(n):
        rho = us[k] @ rho @ us[k].conj().T
        probs[k + 1] = bright_state_probability(rho0, rho)
    k_min = int(np.argmin(probs))
    if k_min in (0, n) or probs[k_min] > 0.5:
        raise CalibrationRangeError(
            f"no pulse flip within {max_duration} us "
            f"(min p = {probs[k_min]:.3f} at sample {k_min}/{n})"
        )
    # parabolic refinement on the three samples around the minimum
    pm, p0, pp = probs[k_min - 1], probs[k_min], probs[k_min + 1]
    denom = pm - 2 * p0 + pp
    shift = 0.5 * (pm - pp) / denom if denom > 0 else 0.0
    return (k_min + shift) * h_step * 1e3
