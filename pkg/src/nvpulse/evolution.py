"""Lab-frame density-matrix propagation.

Everything evolves under rho' = U rho U(dagger) with U = exp(-i 2 pi H dt)
(H in MHz, t in microseconds).  Static stretches use the exact
eigendecomposition-based exponential; stretches where a drive or rf signal
oscillates are integrated stepwise, sampling the Hamiltonian either at
step midpoints (second order) or at the two Gauss nodes of a fourth-order
commutator-free scheme.  No rotating-wave approximation anywhere: the
cost of resolving the microwave carrier is accepted so that
counter-rotating effects survive.

Oscillating terms are handled in batch: the sampled Hamiltonian stack is
diagonalized with one vectorized eigh call and the step unitaries are
reassembled and multiplied in time order.

An optional Lindblad channel turns the unitary update into the full
master equation, integrated with an adaptive ODE solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from .hamiltonian import SpinSystem, build_static, drive_operator
from .spincore import initial_state, is_hermitian

TRACE_TOL = 1e-6

STATIC_METHODS = ("exact_exponential",)
TIMEDEP_METHODS = ("piecewise_constant_midpoint", "fourth_order_stepper")

# fourth-order commutator-free scheme: two Gauss-Legendre nodes per step
# and cross-weighted exponentials (Blanes-Moan CF4)
_GAUSS_NODES = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)
_CF4_WEIGHTS = (0.25 + np.sqrt(3) / 6, 0.25 - np.sqrt(3) / 6)


class PropagationError(RuntimeError):
    """Base class for propagation failures."""


class TraceDriftError(PropagationError):
    """Trace conservation was violated beyond the accepted bound.

    Attributes:
        drift: Absolute trace change over the offending stretch.
        time: Lab time (us) at the end of the stretch.
    """

    def __init__(self, drift: float, time: float):
        super().__init__(
            f"trace drifted by {drift:.3e} (> {TRACE_TOL:.0e}) by t = {time:.6f} us; "
            "the Hamiltonian stack or state is likely ill-conditioned"
        )
        self.drift = drift
        self.time = time


@dataclass(frozen=True, eq=False)
class PropagationSettings:
    """Integrator configuration.

    Attributes:
        samples_per_drive_period: Time steps per period of the fastest
            oscillating term, >= 16.
        static_segment_method: How static stretches are propagated.
        timedep_method: Stepper for oscillating stretches.
        tolerance: Convergence / consistency tolerance, in (0, 1e-4].
        collapse_operators: Optional ((operator, rate 1/us), ...) Lindblad
            channel; empty means purely unitary evolution.
    """

    samples_per_drive_period: int = 64
    static_segment_method: str = "exact_exponential"
    timedep_method: str = "piecewise_constant_midpoint"
    tolerance: float = 1e-8
    collapse_operators: tuple = ()

    def __post_init__(self):
        if self.samples_per_drive_period < 16:
            raise ValueError("samples_per_drive_period must be >= 16")
        if self.static_segment_method not in STATIC_METHODS:
            raise ValueError(f"unknown static method {self.static_segment_method!r}")
        if self.timedep_method not in TIMEDEP_METHODS:
            raise ValueError(f"unknown timedep method {self.timedep_method!r}")
        if not 0 < self.tolerance <= 1e-4:
            raise ValueError("tolerance must lie in (0, 1e-4]")
        try:
            ops = tuple(
                (np.asarray(op, dtype=complex), float(rate))
                for op, rate in self.collapse_operators
            )
        except (TypeError, np.exceptions.ComplexWarning) as exc:
            raise ValueError(
                "collapse_operators must be (operator, rate) pairs"
            ) from exc
        for op, rate in ops:
            if op.ndim != 2 or op.shape[0] != op.shape[1]:
                raise ValueError("collapse operators must be square matrices")
            if rate < 0:
                raise ValueError("collapse rates must be >= 0")
        object.__setattr__(self, "collapse_operators", ops)


def propagate_static(h: np.ndarray, rho: np.ndarray, dt: float) -> np.ndarray:
    """Propagate rho under a constant Hamiltonian for dt microseconds.

    Exact: U = exp(-i 2 pi H dt) via eigendecomposition.

    Raises:
        ValueError: If h is not Hermitian or dt < 0.
    """
    h = np.asarray(h)
    if not is_hermitian(h, tol=1e-9):
        raise ValueError("Hamiltonian must be Hermitian")
    if dt < 0:
        raise ValueError("dt must be >= 0")
    if dt == 0:
        return np.array(rho, dtype=complex)
    w, v = np.linalg.eigh(h)
    u = (v * np.exp(-2j * np.pi * w * dt)) @ v.conj().T
    return u @ np.asarray(rho, dtype=complex) @ u.conj().T


def bright_state_probability(rho0: np.ndarray, rhof: np.ndarray) -> float:
    """Overlap p = Tr[rho0 rhof(dagger)] between reference and final state.

    The conjugate transpose makes the formula insensitive to accumulated
    numerical anti-Hermitian parts; for Hermitian states it is Tr[rho0 rhof].

    Raises:
        ValueError: On dimension mismatch.
    """
    rho0 = np.asarray(rho0)
    rhof = np.asarray(rhof)
    if rho0.shape != rhof.shape:
        raise ValueError(f"dimension mismatch: {rho0.shape} vs {rhof.shape}")
    return float(np.real(np.trace(rho0 @ rhof.conj().T)))


# ---------------------------------------------------------------------------
# Stepped propagation over oscillating Hamiltonians
# ---------------------------------------------------------------------------


def _step_count(duration: float, fastest_frequency: float, settings) -> int:
    if fastest_frequency <= 0:
        raise ValueError("fastest_frequency must be > 0")
    return max(
        1, int(np.ceil(duration * fastest_frequency * settings.samples_per_drive_period))
    )


def _batched_expm(hs: np.ndarray, h_step: float) -> np.ndarray:
    """exp(-i 2 pi H h) for a stack of Hermitian H, one vectorized eigh."""
    w, v = np.linalg.eigh(hs)
    phases = np.exp(-2j * np.pi * w * h_step)
    return np.einsum("nij,nj,nkj->nik", v, phases, v.conj())


def _product_in_time_order(us: np.ndarray) -> np.ndarray:
    """U_total = U_{n-1} ... U_1 U_0 for a stack ordered by time."""
    u = us[0]
    for k in range(1, len(us)):
        u = us[k] @ u
    return u


def _sample_harmonics(h_base, harmonics, times):
    """Hamiltonian stack H(t) = H_base + sum_j sin(2 pi f_j t + phi_j) V_j."""
    hs = np.broadcast_to(h_base, (len(times),) + h_base.shape).astype(complex)
    hs = np.array(hs)
    for v_op, freq, phase in harmonics:
        hs += np.sin(2 * np.pi * freq * times + phase)[:, None, None] * v_op
    return hs


def harmonic_unitary(
    h_base: np.ndarray,
    harmonics,
    t_start: float,
    duration: float,
    settings: PropagationSettings | None = None,
) -> np.ndarray:
    """Stepped propagator over H(t) = H_base + sum sin(2 pi f t + phi) V.

    ``harmonics`` is an iterable of (operator, frequency MHz, phase rad)
    triples; amplitudes are folded into the operators.  Time is absolute:
    the oscillation phases refer to the same t = 0 as ``t_start``, which
    is what keeps a sensed rf signal coherent across an entire sequence.

    The step size resolves the fastest harmonic with
    ``samples_per_drive_period`` samples; the stack of step Hamiltonians
    is diagonalized in one batched call.
    """
    settings = settings or PropagationSettings()
    harmonics = tuple(harmonics)
    if not harmonics:
        raise ValueError("no oscillating terms; use propagate_static instead")
    if duration <= 0:
        return np.eye(h_base.shape[0], dtype=complex)
    fastest = max(abs(freq) for _, freq, _ in harmonics)
    n = _step_count(duration, fastest, settings)
    return _product_in_time_order(
        harmonic_step_unitaries(h_base, harmonics, t_start, duration, n, settings)
    )


def harmonic_step_unitaries(
    h_base: np.ndarray,
    harmonics,
    t_start: float,
    duration: float,
    n_steps: int,
    settings: PropagationSettings | None = None,
) -> np.ndarray:
    """Per-step unitaries (n, d, d) for the harmonic Hamiltonian model.

    Low-level building block behind harmonic_unitary; exposed so callers
    can record intermediate states (pulse calibration snapshots the
    state at every step boundary).
    """
    settings = settings or PropagationSettings()
    harmonics = tuple(harmonics)
    h = duration / n_steps
    k = np.arange(n_steps)
    if settings.timedep_method == "piecewise_constant_midpoint":
        times = t_start + (k + 0.5) * h
        return _batched_expm(_sample_harmonics(h_base, harmonics, times), h)
    # fourth-order commutator-free: two node samples, two cross-weighted
    # exponentials per step, later node applied last
    c1, c2 = _GAUSS_NODES
    w1, w2 = _CF4_WEIGHTS
    h1 = _sample_harmonics(h_base, harmonics, t_start + (k + c1) * h)
    h2 = _sample_harmonics(h_base, harmonics, t_start + (k + c2) * h)
    first = w1 * h1 + w2 * h2
    second = w2 * h1 + w1 * h2
    us_first = _batched_expm(first, h)
    us_second = _batched_expm(second, h)
    return np.einsum("nij,njk->nik", us_second, us_first)


def propagate_timedep(
    h_fn,
    rho: np.ndarray,
    t0: float,
    t1: float,
    settings: PropagationSettings | None = None,
    *,
    fastest_frequency: float,
) -> np.ndarray:
    """Propagate rho under a generic time-dependent Hamiltonian.

    Args:
        h_fn: Callable t -> Hermitian operator (MHz), absolute lab time.
        rho: Initial density matrix.
        t0, t1: Interval in us, t1 >= t0.
        settings: Integrator configuration.
        fastest_frequency: Fastest oscillation in h_fn (MHz); sets the
            step size to (1/fastest_frequency)/samples_per_drive_period.

    With collapse operators configured, the Lindblad master equation is
    integrated instead of the unitary update.

    Raises:
        ValueError: If t1 < t0 or a sampled Hamiltonian is not Hermitian.
        TraceDriftError: If the trace moves by more than 1e-6.
    """
    settings = settings or PropagationSettings()
    if t1 < t0:
        raise ValueError("t1 must be >= t0")
    rho = np.asarray(rho, dtype=complex)
    if t1 == t0:
        return rho.copy()
    if settings.collapse_operators:
        return _propagate_lindblad(h_fn, rho, t0, t1, settings)
    n = _step_count(t1 - t0, fastest_frequency, settings)
    h = (t1 - t0) / n
    k = np.arange(n)
    if settings.timedep_method == "piecewise_constant_midpoint":
        node_sets = [t0 + (k + 0.5) * h]
        weights = None
    else:
        c1, c2 = _GAUSS_NODES
        node_sets = [t0 + (k + c1) * h, t0 + (k + c2) * h]
        weights = _CF4_WEIGHTS
    stacks = []
    for nodes in node_sets:
        hs = np.array([np.asarray(h_fn(t), dtype=complex) for t in nodes])
        herm_err = np.max(np.abs(hs - hs.conj().transpose(0, 2, 1)))
        if herm_err > 1e-9:
            raise ValueError(f"h_fn is not Hermitian (max deviation {herm_err:.3e})")
        stacks.append(hs)
    if weights is None:
        us = _batched_expm(stacks[0], h)
    else:
        w1, w2 = weights
        us_first = _batched_expm(w1 * stacks[0] + w2 * stacks[1], h)
        us_second = _batched_expm(w2 * stacks[0] + w1 * stacks[1], h)
        us = np.einsum("nij,njk->nik", us_second, us_first)
    u = _product_in_time_order(us)
    out = u @ rho @ u.conj().T
    _check_trace(rho, out, t1)
    return out


def _lindblad_rhs(t, y, h_fn, dim, collapse):
    rho = y.reshape(dim, dim)
    h = np.asarray(h_fn(t), dtype=complex)
    drho = -2j * np.pi * (h @ rho - rho @ h)
    for op, rate in collapse:
        drho += rate * (
            op @ rho @ op.conj().T
            - 0.5 * (op.conj().T @ op @ rho + rho @ op.conj().T @ op)
        )
    return drho.ravel()


def _propagate_lindblad(h_fn, rho, t0, t1, settings):
    dim = rho.shape[0]
    sol = solve_ivp(
        _lindblad_rhs,
        (t0, t1),
        rho.ravel(),
        args=(h_fn, dim, settings.collapse_operators),
        method="DOP853",
        rtol=max(settings.tolerance, 1e-10),
        atol=1e-12,
    )
    if not sol.success:
        raise PropagationError(f"master equation integration failed: {sol.message}")
    out = sol.y[:, -1].reshape(dim, dim)
    _check_trace(rho, out, t1)
    return out


def _check_trace(rho_in, rho_out, time):
    drift = abs(np.trace(rho_out) - np.trace(rho_in))
    if drift > TRACE_TOL:
        raise TraceDriftError(float(drift), float(time))


# ---------------------------------------------------------------------------
# Timeline propagation
# ---------------------------------------------------------------------------


@lru_cache(maxsize=256)
def _static_eigensystem(system: SpinSystem):
    w, v = np.linalg.eigh(build_static(system))
    return w, v


def _free_unitary(system: SpinSystem, dt: float) -> np.ndarray:
    w, v = _static_eigensystem(system)
    return (v * np.exp(-2j * np.pi * w * dt)) @ v.conj().T


def _segment_harmonics(system, segment, signal):
    """Active oscillating terms during one timeline segment."""
    harmonics = []
    if segment.kind == "pulse":
        d = segment.drive
        harmonics.append(
            (
                drive_operator(system, d.b1_vector),
                d.frequency + d.detuning,
                d.phase + segment.phase,
            )
        )
    if signal is not None:
        harmonics.append(
            (drive_operator(system, signal.b2_vector), signal.frequency, signal.phase)
        )
    return harmonics


def propagate_timeline(
    system: SpinSystem,
    timeline,
    *,
    signal=None,
    settings: PropagationSettings | None = None,
    rho0: np.ndarray | None = None,
) -> np.ndarray:
    """Propagate through a compiled pulse sequence, returning the final state.

    Free segments with no active rf signal advance exactly under the cached
    static eigensystem; everything else steps through harmonic_unitary.
    Lab time is absolute across segments so drive and signal phases stay
    coherent over the whole sequence.

    Args:
        system: Spin system (supplies the static Hamiltonian and rho0).
        timeline: Object with ``segments`` of (kind, duration, phase, drive).
        signal: Optional sensed rf field, active during every segment.
        settings: Integrator configuration.
        rho0: Initial state; defaults to electron |0> with mixed nuclei.

    Raises:
        TraceDriftError: If trace conservation fails anywhere.
    """
    settings = settings or PropagationSettings()
    rho = initial_state(system) if rho0 is None else np.asarray(rho0, dtype=complex)
    rho_in = rho
    if settings.collapse_operators:
        return _propagate_timeline_lindblad(system, timeline, signal, settings, rho)
    h0 = build_static(system)
    t = 0.0
    for segment in timeline.segments:
        harmonics = _segment_harmonics(system, segment, signal)
        if harmonics:
            u = harmonic_unitary(h0, harmonics, t, segment.duration, settings)
        else:
            u = _free_unitary(system, segment.duration)
        rho = u @ rho @ u.conj().T
        t += segment.duration
    _check_trace(rho_in, rho, t)
    return rho


def _propagate_timeline_lindblad(system, timeline, signal, settings, rho):
    h0 = build_static(system)
    t = 0.0
    for segment in timeline.segments:
        harmonics = _segment_harmonics(system, segment, signal)

        def h_fn(time, _terms=tuple(harmonics)):
            h = np.array(h0, dtype=complex)
            for v_op, freq, phase in _terms:
                h += np.sin(2 * np.pi * freq * time + phase) * v_op
            return h

        rho = _propagate_lindblad(h_fn, rho, t, t + segment.duration, settings)
        t += segment.duration
    return rho


def timeline_probability(
    system: SpinSystem,
    timeline,
    *,
    signal=None,
    settings: PropagationSettings | None = None,
) -> float:
    """Bright-state probability after running a full sequence."""
    rho0 = initial_state(system)
    rhof = propagate_timeline(
        system, timeline, signal=signal, settings=settings, rho0=rho0
    )
    return bright_state_probability(rho0, rhof)
