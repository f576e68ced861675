import numpy as np
import pytest

from nvpulse.evolution import PropagationSettings, timeline_probability
from nvpulse.hamiltonian import DriveSpec, SpinSystem, transition_frequency
from nvpulse.sequences import (
    XY8_BLOCK_PHASES,
    CalibrationRangeError,
    GeometryError,
    Segment,
    calibrate_pi,
    hahn_timeline,
    phase_table,
    rabi_timeline,
    rxy8_correlated_timeline,
    rxy8_timeline,
    timeline_to_text,
    xy8_timeline,
)


def _drive(gamma_b1=40.0, frequency=1749.0, **kwargs):
    return DriveSpec.along_x(gamma_b1=gamma_b1, frequency=frequency, **kwargs)


T_PI = 0.0176  # us, roughly the 40 MHz pi time


def test_phase_table_base_pattern():
    assert phase_table(1) == XY8_BLOCK_PHASES
    tab = phase_table(3, offsets=[0.0, 1.0, 2.5])
    assert tab[:8] == XY8_BLOCK_PHASES
    assert tab[8:16] == tuple(p + 1.0 for p in XY8_BLOCK_PHASES)
    assert tab[16:] == tuple(p + 2.5 for p in XY8_BLOCK_PHASES)
    with pytest.raises(ValueError):
        phase_table(2, offsets=[0.0])


def test_segment_validation():
    with pytest.raises(ValueError):
        Segment(kind="wait", duration=1.0)
    with pytest.raises(ValueError):
        Segment(kind="free", duration=0.0)
    with pytest.raises(ValueError):
        Segment(kind="pulse", duration=1.0)  # no drive


def test_xy8_structure_and_durations():
    drive = _drive()
    m, tau = 2, 0.3
    tl = xy8_timeline(m, tau, drive, T_PI)
    pulses = [s for s in tl.segments if s.kind == "pulse"]
    assert len(pulses) == 8 * m + 2
    # closed form: total = 8 m tau + pi/2 duration
    assert tl.total_duration == pytest.approx(8 * m * tau + T_PI / 2, abs=1e-12)
    # center-to-center spacing: tau/2 to the first pi, tau between pis
    centers = tl.pulse_centers()
    assert centers[1] - centers[0] == pytest.approx(tau / 2, abs=1e-12)
    for a, b in zip(centers[1:-2], centers[2:-1]):
        assert b - a == pytest.approx(tau, abs=1e-12)
    assert centers[-1] - centers[-2] == pytest.approx(tau / 2, abs=1e-12)
    # phases: x pattern plus the -x closing pulse
    assert tl.pulse_phases[0] == 0.0
    assert tl.pulse_phases[1:-1] == phase_table(m)
    assert tl.pulse_phases[-1] == pytest.approx(np.pi)


def test_hahn_structure():
    drive = _drive()
    tau = 0.8
    tl = hahn_timeline(tau, drive, T_PI)
    kinds = [s.kind for s in tl.segments]
    assert kinds == ["pulse", "free", "pulse", "free", "pulse"]
    assert tl.total_duration == pytest.approx(2 * tau + T_PI / 2, abs=1e-12)
    centers = tl.pulse_centers()
    assert centers[1] - centers[0] == pytest.approx(tau, abs=1e-12)
    assert centers[2] - centers[1] == pytest.approx(tau, abs=1e-12)
    assert all(p == 0.0 for p in tl.pulse_phases)


def test_duration_scale_stretches_every_pulse():
    drive = _drive(duration_scale=1.1)
    tl = xy8_timeline(1, 0.4, drive, T_PI)
    pulses = [s for s in tl.segments if s.kind == "pulse"]
    assert pulses[0].duration == pytest.approx(1.1 * T_PI / 2)
    assert pulses[1].duration == pytest.approx(1.1 * T_PI)
    # spacing stays center-to-center tau
    centers = tl.pulse_centers()
    assert centers[2] - centers[1] == pytest.approx(0.4, abs=1e-12)


def test_geometry_violations():
    drive = _drive()
    with pytest.raises(GeometryError):
        xy8_timeline(1, 0.01, drive, T_PI)  # tau < t_pi
    with pytest.raises(GeometryError):
        hahn_timeline(0.01, drive, T_PI)
    with pytest.raises(GeometryError):
        rabi_timeline(0.0, drive)


def test_rxy8_reproducible_and_reduces_to_xy8():
    drive = _drive()
    a = rxy8_timeline(3, 0.3, drive, T_PI, seed=42)
    b = rxy8_timeline(3, 0.3, drive, T_PI, seed=42)
    assert a == b
    assert a.metadata["rng_seed"] == 42
    c = rxy8_timeline(3, 0.3, drive, T_PI, seed=43)
    assert c != a
    # zero offsets give exactly the plain XY8 pulse train
    plain = xy8_timeline(3, 0.3, drive, T_PI)
    forced = rxy8_timeline(3, 0.3, drive, T_PI, offsets=np.zeros(3))
    assert forced.segments == plain.segments
    with pytest.raises(ValueError):
        rxy8_timeline(3, 0.3, drive, T_PI)  # neither seed nor offsets


def test_correlated_phases_cancel_per_group():
    drive = _drive()
    for g, m in ((2, 4), (3, 6)):
        tl = rxy8_correlated_timeline(m, 0.3, drive, T_PI, g=g, seed=7)
        offsets = np.asarray(tl.metadata["phase_offsets"])
        assert offsets.shape == (m,)
        for start in range(0, m, g):
            group = offsets[start : start + g]
            assert abs(np.sum(np.exp(-1j * group))) < 1e-12
    with pytest.raises(ValueError):
        rxy8_correlated_timeline(5, 0.3, drive, T_PI, g=2, seed=1)
    with pytest.raises(ValueError):
        rxy8_correlated_timeline(4, 0.3, drive, T_PI, g=4, seed=1)


def test_timeline_text_format():
    drive = _drive()
    text = timeline_to_text(hahn_timeline(0.5, drive, T_PI))
    lines = text.strip().split("\n")
    meta = [l for l in lines if l.startswith("#")]
    body = [l for l in lines if not l.startswith("#")]
    assert any("protocol" in l and "hahn" in l for l in meta)
    assert len(body) == 5
    kind, dur, phase, ref = body[0].split()
    assert kind == "pulse" and ref == "mw"
    assert float(dur) == pytest.approx(T_PI / 2)


def test_echo_identity_no_nuclei():
    # aligned bare electron, no coupling: the echo refocuses everything
    s = SpinSystem(b0=0.04)
    drive = _drive(frequency=transition_frequency(s, "minus_one"))
    t_pi = calibrate_pi(s, drive) * 1e-3
    for tau in (0.2, 0.9):
        p = timeline_probability(s, hahn_timeline(tau, drive, t_pi))
        assert p > 0.995, (tau, p)


def test_xy8_bright_baseline_no_signal():
    # perfect pulses, no nuclei, no signal: close to p = 1 everywhere,
    # which pins the -x closing-pulse convention
    s = SpinSystem(b0=0.04)
    drive = _drive(frequency=transition_frequency(s, "minus_one"))
    t_pi = calibrate_pi(s, drive) * 1e-3
    p = timeline_probability(s, xy8_timeline(1, 0.25, drive, t_pi))
    assert p > 0.98, p


def test_calibrate_pi_band_and_contrast():
    s = SpinSystem(b0=0.04)
    drive = _drive(gamma_b1=40.0, frequency=transition_frequency(s, "minus_one"))
    t_pi_ns = calibrate_pi(s, drive)
    assert 10.0 < t_pi_ns < 25.0
    # contrast check at the minimum
    tl = rabi_timeline(t_pi_ns * 1e-3, drive)
    assert timeline_probability(s, tl) < 0.1


def test_calibrate_pi_amplitude_scaling():
    s = SpinSystem(b0=0.04)
    f = transition_frequency(s, "minus_one")
    t1 = calibrate_pi(s, _drive(gamma_b1=20.0, frequency=f))
    t2 = calibrate_pi(s, _drive(gamma_b1=40.0, frequency=f))
    assert t1 / t2 == pytest.approx(2.0, rel=0.05)


def test_calibrate_pi_range_error():
    s = SpinSystem(b0=0.04)
    drive = _drive(frequency=transition_frequency(s, "minus_one"))
    with pytest.raises(CalibrationRangeError):
        calibrate_pi(s, drive, max_duration=0.002)  # flip needs ~0.018 us
