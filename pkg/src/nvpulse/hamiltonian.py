"""System description and Hamiltonian construction for the NV sensor.

The composite system is electron (spin-1) ⊗ intrinsic nitrogen (spin-1/2
or spin-1, optional) ⊗ target nuclear spin (spin-1/2, optional), in a lab
frame with the NV axis along z and the static field B0 in the plane set
by the azimuth (default: xz plane).

Terms implemented (all MHz, ordinary frequency; propagators supply the 2π):

- zero-field splitting          D (Sz² − S²/3)
- electron Zeeman               −γe B0·S
- nitrogen hyperfine            a⊥(SxIx + SyIy) + a∥ SzIz
- nitrogen Zeeman               −γn B0·Iⁿ
- nitrogen quadrupole (14N)     Q (Izⁿ)²
- target coupling + Zeeman      S·A·Iᶜ − γc B0·Iᶜ
- microwave drive               γe sin(2π(Ω+δ0)t + φ1) B1·S
- sensed rf signal              γe sin(2π f0 t + φ2) B2·S

The nitrogen–target nuclear coupling is omitted.

Derived spectra: microwave transition frequencies (m_s = 0 ↔ ±1) and the
effective nuclear Larmor frequency within an electron manifold, in both a
manifold-projected (secular) and an exact-diagonalization variant.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .spincore import embed, is_hermitian, spin_operators

# Gyromagnetic ratios of common target nuclei, MHz/T.
GAMMA_C13 = 10.705
GAMMA_H1 = 42.57

NITROGEN_SPINS = {"n14": 1.0, "n15": 0.5}


class ConfigurationError(ValueError):
    """Raised for invalid or inconsistent system configuration."""


class DegeneracyError(ValueError):
    """Eigenstates cannot be assigned unambiguously to electron manifolds.

    Carries the overlap table (n_states x 3 array of |<psi|P_ms|psi>|
    weights for m_s = +1, 0, -1) used for the failed assignment.
    """

    def __init__(self, message: str, overlaps: np.ndarray):
        super().__init__(message)
        self.overlaps = overlaps


@dataclass(frozen=True)
class NVConstants:
    """Internal coupling constants of the NV center (MHz, MHz/T)."""

    d: float = 2870.0
    gamma_e: float = -28025.0
    gamma_n14: float = 3.077
    gamma_n15: float = -4.316
    a_perp_n14: float = -2.70
    a_par_n14: float = -2.14
    a_perp_n15: float = 3.65
    a_par_n15: float = 3.03
    quadrupole_n14: float = -5.01


@dataclass(frozen=True)
class TargetSpin:
    """A sensed spin-1/2 nucleus: gyromagnetic ratio and hyperfine matrix.

    Attributes:
        gamma: Gyromagnetic ratio in MHz/T.
        a: Symmetric 3x3 hyperfine matrix in MHz, stored as nested tuples
           so the containing system stays hashable.
    """

    gamma: float
    a: tuple[tuple[float, float, float], ...] = (
        (0.0, 0.0, 0.0),
        (0.0, 0.0, 0.0),
        (0.0, 0.0, 0.0),
    )

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        if a.shape != (3, 3):
            raise ConfigurationError(f"hyperfine matrix must be 3x3, got {a.shape}")
        if np.max(np.abs(a - a.T)) > 1e-12:
            raise ConfigurationError("hyperfine matrix must be symmetric (tol 1e-12)")
        object.__setattr__(self, "a", tuple(tuple(float(x) for x in row) for row in a))

    @property
    def a_matrix(self) -> np.ndarray:
        return np.asarray(self.a, dtype=float)

    @classmethod
    def carbon13(cls, a=None) -> "TargetSpin":
        """Convenience constructor for a 13C target."""
        if a is None:
            a = np.zeros((3, 3))
        return cls(gamma=GAMMA_C13, a=tuple(map(tuple, np.asarray(a, dtype=float))))


@dataclass(frozen=True)
class SpinSystem:
    """Immutable description of the sensor and its static field.

    Attributes:
        nitrogen: "n14", "n15" or None.
        target: Optional sensed nucleus.
        b0: Static field magnitude in Tesla.
        theta: Polar misalignment angle of B0 from the NV axis, degrees.
        azimuth: Azimuthal angle of B0, degrees (0 keeps B0 in xz).
        constants: Internal NV constants; override for sensitivity studies.
    """

    nitrogen: str | None = None
    target: TargetSpin | None = None
    b0: float = 0.0
    theta: float = 0.0
    azimuth: float = 0.0
    constants: NVConstants = field(default_factory=NVConstants)

    def __post_init__(self):
        if self.nitrogen is not None and self.nitrogen not in NITROGEN_SPINS:
            raise ConfigurationError(
                f"nitrogen must be one of {sorted(NITROGEN_SPINS)} or None, got {self.nitrogen!r}"
            )
        if self.b0 < 0:
            raise ConfigurationError("b0 magnitude must be >= 0")
        if not 0.0 <= self.theta <= 180.0:
            raise ConfigurationError("theta must lie in [0, 180] degrees")

    @property
    def dims(self) -> tuple[int, ...]:
        dims = [3]
        if self.nitrogen is not None:
            dims.append(round(2 * NITROGEN_SPINS[self.nitrogen]) + 1)
        if self.target is not None:
            dims.append(2)
        return tuple(dims)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    @property
    def nitrogen_slot(self) -> int | None:
        return 1 if self.nitrogen is not None else None

    @property
    def target_slot(self) -> int | None:
        if self.target is None:
            return None
        return 2 if self.nitrogen is not None else 1

    @property
    def b0_vector(self) -> np.ndarray:
        th = np.deg2rad(self.theta)
        az = np.deg2rad(self.azimuth)
        return self.b0 * np.array(
            [np.sin(th) * np.cos(az), np.sin(th) * np.sin(az), np.cos(th)]
        )


@dataclass(frozen=True)
class DriveSpec:
    """Microwave control field parameters.

    Attributes:
        b1_vector: Drive field amplitude vector in Tesla.
        frequency: Carrier frequency Ω_MW in MHz (ordinary frequency).
        phase: Carrier phase φ1 in radians (pulse phases add to it).
        detuning: Frequency offset δ0 in MHz added to the carrier.
        duration_scale: Pulse-length error T_p/t_π scaling every pulse.
    """

    b1_vector: tuple[float, float, float]
    frequency: float
    phase: float = 0.0
    detuning: float = 0.0
    duration_scale: float = 1.0

    def __post_init__(self):
        vec = np.asarray(self.b1_vector, dtype=float)
        if vec.shape != (3,) or not np.all(np.isfinite(vec)):
            raise ConfigurationError("b1_vector must be a finite 3-vector")
        object.__setattr__(self, "b1_vector", tuple(float(x) for x in vec))
        if self.duration_scale <= 0:
            raise ConfigurationError("duration_scale must be > 0")

    @classmethod
    def along_x(cls, gamma_b1: float, frequency: float, *,
                gamma_e: float = NVConstants.gamma_e, **kwargs) -> "DriveSpec":
        """Drive with B1 along x, specified via the Rabi amplitude γe·B1 (MHz)."""
        return cls(b1_vector=(gamma_b1 / abs(gamma_e), 0.0, 0.0),
                   frequency=frequency, **kwargs)


@dataclass(frozen=True)
class SignalSpec:
    """Classical rf signal sensed by the sequence.

    Attributes:
        b2_vector: Signal field amplitude vector in Tesla.
        frequency: Signal frequency f0 in MHz, > 0.
        phase: Signal phase φ2 in radians, fixed relative to t = 0 of the
            compiled timeline (the simulation is a single coherent run).
    """

    b2_vector: tuple[float, float, float]
    frequency: float
    phase: float = 0.0

    def __post_init__(self):
        vec = np.asarray(self.b2_vector, dtype=float)
        if vec.shape != (3,) or not np.all(np.isfinite(vec)):
            raise ConfigurationError("b2_vector must be a finite 3-vector")
        object.__setattr__(self, "b2_vector", tuple(float(x) for x in vec))
        if self.frequency <= 0:
            raise ConfigurationError("signal frequency must be > 0")

    @classmethod
    def along_z(cls, gamma_b2z: float, frequency: float, *,
                gamma_e: float = NVConstants.gamma_e, **kwargs) -> "SignalSpec":
        """Signal with B2 along z, specified via γe·B2z in MHz."""
        return cls(b2_vector=(0.0, 0.0, gamma_b2z / abs(gamma_e)),
                   frequency=frequency, **kwargs)


@lru_cache(maxsize=128)
def _spin_vectors(system: SpinSystem):
    """Embedded (Sx,Sy,Sz) and nuclear operator triples for a system."""
    dims = system.dims
    electron = tuple(embed(op, 0, dims) for op in spin_operators(1))
    nitrogen = None
    if system.nitrogen is not None:
        s_n = NITROGEN_SPINS[system.nitrogen]
        nitrogen = tuple(
            embed(op, system.nitrogen_slot, dims) for op in spin_operators(s_n)
        )
    target = None
    if system.target is not None:
        target = tuple(
            embed(op, system.target_slot, dims) for op in spin_operators(0.5)
        )
    return electron, nitrogen, target


def electron_spin_vector(system: SpinSystem) -> tuple[np.ndarray, ...]:
    """Embedded electron spin operators (Sx, Sy, Sz) on the full space."""
    return _spin_vectors(system)[0]


@lru_cache(maxsize=128)
def build_internal(system: SpinSystem) -> np.ndarray:
    """Internal Hamiltonian: zero-field, Zeeman and nitrogen terms (MHz).

    Includes D(Sz²−S²/3), −γe B0·S and, when nitrogen is present, the
    hyperfine, nuclear Zeeman and (14N) quadrupole terms.
    """
    c = system.constants
    s_ops, n_ops, _ = _spin_vectors(system)
    b = system.b0_vector
    dim = system.dim
    sz = s_ops[2]
    h = c.d * (sz @ sz - (2.0 / 3.0) * np.eye(dim))
    h = h - c.gamma_e * sum(bi * si for bi, si in zip(b, s_ops))
    if system.nitrogen is not None:
        if system.nitrogen == "n14":
            gamma_n, a_perp, a_par = c.gamma_n14, c.a_perp_n14, c.a_par_n14
        else:
            gamma_n, a_perp, a_par = c.gamma_n15, c.a_perp_n15, c.a_par_n15
        ix, iy, iz = n_ops
        h = h + a_perp * (s_ops[0] @ ix + s_ops[1] @ iy) + a_par * (sz @ iz)
        h = h - gamma_n * sum(bi * ii for bi, ii in zip(b, n_ops))
        if system.nitrogen == "n14":
            h = h + c.quadrupole_n14 * (iz @ iz)
    return h


@lru_cache(maxsize=128)
def build_sensing_static(system: SpinSystem) -> np.ndarray:
    """Static target-spin Hamiltonian S·A·Iᶜ − γc B0·Iᶜ (MHz).

    Raises:
        ConfigurationError: If the system has no target spin.
    """
    if system.target is None:
        raise ConfigurationError("system has no target spin")
    s_ops, _, t_ops = _spin_vectors(system)
    a = system.target.a_matrix
    h = sum(
        a[i, j] * (s_ops[i] @ t_ops[j])
        for i in range(3)
        for j in range(3)
        if a[i, j] != 0.0
    )
    if isinstance(h, int):  # all-zero matrix: sum() returned 0
        h = np.zeros((system.dim, system.dim), dtype=complex)
    b = system.b0_vector
    h = h - system.target.gamma * sum(bi * ti for bi, ti in zip(b, t_ops))
    return h


@lru_cache(maxsize=128)
def build_static(system: SpinSystem) -> np.ndarray:
    """Full static Hamiltonian: internal plus target terms when present."""
    h = build_internal(system)
    if system.target is not None:
        h = h + build_sensing_static(system)
    return h


@lru_cache(maxsize=128)
def drive_operator(system: SpinSystem, b_vector: tuple[float, float, float]) -> np.ndarray:
    """Coupling operator γe·(B·S) for an oscillating electron-coupled field."""
    s_ops = _spin_vectors(system)[0]
    return system.constants.gamma_e * sum(
        bi * si for bi, si in zip(b_vector, s_ops)
    )


def drive_hamiltonian(system: SpinSystem, spec: DriveSpec, t: float) -> np.ndarray:
    """Microwave Hamiltonian at time t: γe sin(2π(Ω+δ0)t + φ1) B1·S (MHz)."""
    scalar = np.sin(2 * np.pi * (spec.frequency + spec.detuning) * t + spec.phase)
    return scalar * drive_operator(system, spec.b1_vector)


def signal_hamiltonian(system: SpinSystem, spec: SignalSpec, t: float) -> np.ndarray:
    """Sensed-signal Hamiltonian at time t: γe sin(2π f0 t + φ2) B2·S (MHz)."""
    scalar = np.sin(2 * np.pi * spec.frequency * t + spec.phase)
    return scalar * drive_operator(system, spec.b2_vector)


def _manifold_projectors(system: SpinSystem) -> np.ndarray:
    """Projectors onto the bare electron m_s = (+1, 0, -1) subspaces."""
    dims = system.dims
    projs = []
    for k in range(3):
        p = np.zeros((3, 3))
        p[k, k] = 1.0
        projs.append(embed(p, 0, dims))
    return np.array(projs)


def _group_eigenstates(system: SpinSystem, h: np.ndarray):
    """Diagonalize h and assign eigenstates to electron manifolds.

    Returns (eigenvalues, eigenvectors, labels) with labels in {+1, 0, -1}
    chosen by maximal overlap with the bare projectors.

    Raises:
        DegeneracyError: If any state's best overlap is below 0.5.
    """
    w, v = np.linalg.eigh(h)
    projs = _manifold_projectors(system)
    # overlaps[n, k] = <psi_n| P_k |psi_n> for k over (+1, 0, -1)
    overlaps = np.einsum("in,kij,jn->nk", v.conj(), projs, v).real
    best = overlaps.max(axis=1)
    if np.min(best) < 0.5:
        bad = int(np.argmin(best))
        raise DegeneracyError(
            f"eigenstate {bad} has maximal manifold overlap {best[bad]:.3f} < 0.5; "
            "manifold assignment is ambiguous",
            overlaps,
        )
    ms_of_col = np.array([1, 0, -1])
    labels = ms_of_col[np.argmax(overlaps, axis=1)]
    return w, v, labels


def transition_frequency(system: SpinSystem, target: str) -> float:
    """Microwave transition frequency m_s = 0 ↔ ±1 in MHz.

    Computed as the difference between the centroids (plain means) of the
    eigenvalues assigned to the two manifolds of the full static
    Hamiltonian.

    Args:
        system: Spin system.
        target: "plus_one" or "minus_one".

    Raises:
        DegeneracyError: If the eigenstate grouping is ambiguous.
        ValueError: For an unknown target label.
    """
    if target not in ("plus_one", "minus_one"):
        raise ValueError(f"target must be 'plus_one' or 'minus_one', got {target!r}")
    ms = 1 if target == "plus_one" else -1
    w, _, labels = _group_eigenstates(system, build_static(system))
    centroid_t = float(np.mean(w[labels == ms]))
    centroid_0 = float(np.mean(w[labels == 0]))
    return abs(centroid_t - centroid_0)


def _spin_of_interest(system: SpinSystem, spin: str | None) -> str:
    if spin is None:
        spin = "target" if system.target is not None else "nitrogen"
    if spin == "target" and system.target is None:
        raise ConfigurationError("system has no target spin")
    if spin == "nitrogen" and system.nitrogen is None:
        raise ConfigurationError("system has no nitrogen spin")
    if spin not in ("target", "nitrogen"):
        raise ValueError(f"spin must be 'target' or 'nitrogen', got {spin!r}")
    return spin


def _adjacent_gap(levels: np.ndarray) -> float:
    """Nuclear transition frequency from sorted manifold levels.

    Spin-1/2 has a single gap; for spin-1 the mean adjacent gap is used
    (half the total spread), which removes any common quadrupole offset.
    """
    levels = np.sort(levels)
    return float((levels[-1] - levels[0]) / (len(levels) - 1))


def effective_larmor(
    system: SpinSystem,
    m_s: int,
    *,
    spin: str | None = None,
    exact: bool = False,
) -> float:
    """Effective nuclear Larmor frequency ω̃ within an electron manifold (MHz).

    Default method projects the static Hamiltonian onto the bare |m_s⟩
    electron state (secular approximation for the nuclear dynamics) and
    returns the level splitting of the designated nucleus.  At B0 = 0 the
    m_s = ±1 result equals the z-row norm of the hyperfine matrix exactly.

    With ``exact=True`` the full Hamiltonian is diagonalized, eigenstates
    are grouped by electron-manifold overlap, and the splitting is read
    from the exact eigenvalues.  This variant carries the second-order
    frequency shifts (notably the m_s = 0 enhancement) but is undefined at
    degeneracies such as B0 = 0.

    Args:
        system: Spin system with at least one nuclear spin.
        m_s: Electron manifold, one of +1, 0, -1.
        spin: "target" or "nitrogen"; defaults to the target when present.
        exact: Use exact diagonalization instead of the projected block.

    Raises:
        ConfigurationError: If the designated nucleus is absent.
        DegeneracyError: If exact grouping is ambiguous.
    """
    if m_s not in (1, 0, -1):
        raise ValueError(f"m_s must be one of +1, 0, -1, got {m_s!r}")
    spin = _spin_of_interest(system, spin)
    h = build_static(system)
    dims = system.dims
    n_nuc = int(np.prod(dims[1:]))
    if exact:
        return _effective_larmor_exact(system, h, m_s, spin)
    # Electron-projected nuclear block: <m_s| H |m_s> acting on the nuclei.
    idx = {1: 0, 0: 1, -1: 2}[m_s]
    block = h.reshape(3, n_nuc, 3, n_nuc)[idx, :, idx, :]
    if len(dims) == 3:
        # Partial-trace out the other nucleus; with no nitrogen-target
        # coupling the block is a tensor sum, so this is exact.
        dn, dt = dims[1], dims[2]
        b4 = block.reshape(dn, dt, dn, dt)
        if spin == "target":
            sub = np.einsum("itjt->ij", b4.transpose(1, 0, 3, 2)) / dn
        else:
            sub = np.einsum("itjt->ij", b4) / dt
    else:
        sub = block
    levels = np.linalg.eigvalsh(sub)
    return _adjacent_gap(levels)


def _effective_larmor_exact(
    system: SpinSystem, h: np.ndarray, m_s: int, spin: str
) -> float:
    w, v, labels = _group_eigenstates(system, h)
    sel = labels == m_s
    w_m, v_m = w[sel], v[:, sel]
    dims = system.dims
    if len(dims) == 2:
        return _adjacent_gap(w_m)
    # Two nuclei: subgroup the manifold by the spectator nucleus character,
    # then average the interest-nucleus gap over the subgroups.
    spectator_slot = system.nitrogen_slot if spin == "target" else system.target_slot
    d_spec = dims[spectator_slot]
    sub_projs = []
    for k in range(d_spec):
        p = np.zeros((d_spec, d_spec))
        p[k, k] = 1.0
        sub_projs.append(embed(p, spectator_slot, dims))
    ov = np.array(
        [np.real(np.einsum("in,ij,jn->n", v_m.conj(), p, v_m)) for p in sub_projs]
    )  # (d_spec, n_states)
    assign = np.argmax(ov, axis=0)
    if np.min(ov.max(axis=0)) < 0.5:
        raise DegeneracyError(
            "spectator-nucleus grouping within the manifold is ambiguous", ov.T
        )
    gaps = []
    for k in range(d_spec):
        levels = w_m[assign == k]
        if len(levels) < 2:
            raise DegeneracyError(
                f"spectator subgroup {k} holds {len(levels)} state(s); "
                "cannot read a splitting",
                ov.T,
            )
        gaps.append(_adjacent_gap(levels))
    return float(np.mean(gaps))


def zero_field_larmor(a) -> float:
    """Zero-field effective Larmor frequency from the hyperfine z-row (MHz).

    sqrt(A_zx² + A_zy² + A_zz²) — the m_s = ±1 nuclear splitting at B0 = 0.
    """
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"hyperfine matrix must be 3x3, got {a.shape}")
    if np.max(np.abs(a - a.T)) > 1e-12:
        raise ValueError("hyperfine matrix must be symmetric")
    return float(np.linalg.norm(a[2]))


def resonant_drive(system: SpinSystem, transition: str, *,
                   rabi_mhz: float = 40.0, detuning: float = 0.0,
                   duration_scale: float = 1.0, phase: float = 0.0) -> DriveSpec:
    """An x-polarized drive resonant with the chosen transition.

    Args:
        rabi_mhz: Amplitude expressed as gamma_e * B1 in MHz.
    """
    if rabi_mhz <= 0:
        raise ConfigurationError("rabi_mhz must be > 0")
    b1 = rabi_mhz / abs(system.constants.gamma_e)
    return DriveSpec(
        b1_vector=(b1, 0.0, 0.0),
        frequency=transition_frequency(system, transition),
        phase=phase,
        detuning=detuning,
        duration_scale=duration_scale,
    )


# ---------------------------------------------------------------------------
# Config-file serialization
# ---------------------------------------------------------------------------
#
# Schema (INI, parsed with configparser; all keys lowercase):
#
#   [system]
#   nitrogen = n15              # n14 | n15 | none
#   b0_T = 0.024                # field magnitude, Tesla
#   theta_deg = 2.1             # polar misalignment, degrees
#   azimuth_deg = 0.0           # optional, default 0
#   target_gamma_MHzT = 10.705  # optional; presence enables the target spin
#   target_a_MHz = -0.25 -1.85 -0.49 ; -1.85 0.0 0.01 ; -0.49 0.01 1.01
#                               # three ;-separated rows, symmetric
#
#   [constants]                 # optional overrides, same units as defaults
#   d = 2870.0
#   gamma_e = -28025.0
#   ...

_CONSTANT_KEYS = (
    "d", "gamma_e", "gamma_n14", "gamma_n15",
    "a_perp_n14", "a_par_n14", "a_perp_n15", "a_par_n15", "quadrupole_n14",
)


def system_to_config(system: SpinSystem) -> str:
    """Serialize a SpinSystem to the documented INI config format."""
    lines = ["[system]"]
    lines.append(f"nitrogen = {system.nitrogen if system.nitrogen else 'none'}")
    lines.append(f"b0_T = {system.b0!r}")
    lines.append(f"theta_deg = {system.theta!r}")
    lines.append(f"azimuth_deg = {system.azimuth!r}")
    if system.target is not None:
        lines.append(f"target_gamma_MHzT = {system.target.gamma!r}")
        rows = " ; ".join(
            " ".join(repr(x) for x in row) for row in system.target.a
        )
        lines.append(f"target_a_MHz = {rows}")
    defaults = NVConstants()
    overrides = [
        (k, getattr(system.constants, k))
        for k in _CONSTANT_KEYS
        if getattr(system.constants, k) != getattr(defaults, k)
    ]
    if overrides:
        lines.append("")
        lines.append("[constants]")
        lines.extend(f"{k} = {v!r}" for k, v in overrides)
    return "\n".join(lines) + "\n"


def system_from_config(text: str) -> SpinSystem:
    """Parse a SpinSystem from config text (see module schema).

    Raises:
        ConfigurationError: On missing sections/keys or malformed values,
            with the offending key named.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"config parse error: {exc}") from exc
    if "system" not in parser:
        raise ConfigurationError("config is missing the [system] section")
    sec = parser["system"]

    def _float(key, default=None):
        raw = sec.get(key, None)
        if raw is None:
            if default is None:
                raise ConfigurationError(f"missing required key '{key}'")
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigurationError(f"key '{key}': not a number: {raw!r}") from exc

    nitrogen = sec.get("nitrogen", "none").strip().lower()
    nitrogen = None if nitrogen in ("none", "") else nitrogen
    target = None
    if "target_gamma_mhzt" in sec:
        gamma = _float("target_gamma_MHzT")
        a = np.zeros((3, 3))
        if "target_a_mhz" in sec:
            rows = [r.split() for r in sec["target_a_mhz"].split(";")]
            if len(rows) != 3 or any(len(r) != 3 for r in rows):
                raise ConfigurationError(
                    "key 'target_a_MHz': need three ;-separated rows of three numbers"
                )
            try:
                a = np.array([[float(x) for x in r] for r in rows])
            except ValueError as exc:
                raise ConfigurationError(f"key 'target_a_MHz': {exc}") from exc
        target = TargetSpin(gamma=gamma, a=tuple(map(tuple, a)))
    constants = NVConstants()
    if "constants" in parser:
        kwargs = {}
        for key, raw in parser["constants"].items():
            if key not in _CONSTANT_KEYS:
                raise ConfigurationError(f"unknown constants key '{key}'")
            try:
                kwargs[key] = float(raw)
            except ValueError as exc:
                raise ConfigurationError(f"constants key '{key}': {exc}") from exc
        constants = replace(constants, **kwargs)
    return SpinSystem(
        nitrogen=nitrogen,
        target=target,
        b0=_float("b0_T"),
        theta=_float("theta_deg", 0.0),
        azimuth=_float("azimuth_deg", 0.0),
        constants=constants,
    )


def load_system(path) -> SpinSystem:
    """Read a SpinSystem config file from disk."""
    with open(path, "r", encoding="utf-8") as fh:
        return system_from_config(fh.read())
