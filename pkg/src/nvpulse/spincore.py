"""Spin operator algebra and density-matrix primitives.

Operators for arbitrary spins up to s = 3 in the descending-m basis
(|s⟩, |s-1⟩, ..., |-s⟩), Kronecker embedding into composite Hilbert
spaces, and construction/validation of the states used by the engine.

All operators are plain complex ``numpy.ndarray`` matrices; there is no
wrapper class.  Helper predicates (:func:`is_hermitian`,
:func:`validate_density_matrix`) implement the invariants that the rest
of the package relies on.

Units: operators are dimensionless; Hamiltonians built from them carry
MHz (ordinary frequency) by convention of the callers.
"""

from __future__ import annotations

from collections.abc import Sequence

import numpy as np

MAX_SPIN = 3.0

# Exact-algebra comparisons (commutators, Casimir) use 1e-12; propagated
# states are held to the looser 1e-10.
ALGEBRA_TOL = 1e-12
STATE_TOL = 1e-10


class SpinValueError(ValueError):
    """Raised for spin quantum numbers outside the supported set."""


def spin_operators(s: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Construct the spin matrices (Sx, Sy, Sz) for spin quantum number s.

    The basis is ordered by descending magnetic quantum number, so
    ``Sz = diag(s, s-1, ..., -s)``.

    Args:
        s: Half-integer spin quantum number, 0 <= s <= 3.

    Returns:
        Tuple of complex (2s+1)x(2s+1) arrays (Sx, Sy, Sz).

    Raises:
        SpinValueError: If 2s is not a non-negative integer or s > 3.

    Examples:
        >>> sx, sy, sz = spin_operators(0.5)
        >>> np.allclose(sz, np.diag([0.5, -0.5]))
        True
        >>> sx, sy, sz = spin_operators(1)
        >>> np.allclose(sx[0, 1], 1 / np.sqrt(2))
        True
    """
    two_s = round(2 * s)
    if abs(2 * s - two_s) > 1e-12 or two_s < 0 or s > MAX_SPIN:
        raise SpinValueError(
            f"spin must be a half-integer in [0, {MAX_SPIN}], got {s!r}"
        )
    dim = two_s + 1
    m = s - np.arange(dim)
    raising = np.zeros((dim, dim))
    for i in range(dim - 1):
        # <m+1| S+ |m> = sqrt(s(s+1) - m(m+1)) with m = m[i+1]
        raising[i, i + 1] = np.sqrt(s * (s + 1) - m[i + 1] * (m[i + 1] + 1))
    sx = (raising + raising.T) / 2
    sy = (raising - raising.T) / 2j
    sz = np.diag(m)
    return sx.astype(complex), sy.astype(complex), sz.astype(complex)


def embed(op: np.ndarray, slot: int, dims: Sequence[int]) -> np.ndarray:
    """Embed a subsystem operator into the composite product space.

    Places ``op`` at position ``slot`` of the tensor product and the
    identity everywhere else.

    Args:
        op: Square operator of dimension dims[slot].
        slot: Index of the subsystem the operator acts on.
        dims: Dimensions of every subsystem, in tensor-product order.

    Returns:
        Operator of dimension prod(dims).

    Raises:
        IndexError: If slot is out of range.
        ValueError: If op does not match dims[slot].
    """
    if not 0 <= slot < len(dims):
        raise IndexError(f"slot {slot} out of range for {len(dims)} subsystems")
    op = np.asarray(op)
    if op.shape != (dims[slot], dims[slot]):
        raise ValueError(
            f"operator shape {op.shape} does not match subsystem dim {dims[slot]}"
        )
    left = int(np.prod(dims[:slot], initial=1))
    right = int(np.prod(dims[slot + 1:], initial=1))
    return np.kron(np.kron(np.eye(left), op), np.eye(right)).astype(complex)


def is_hermitian(op: np.ndarray, tol: float = ALGEBRA_TOL) -> bool:
    """Check Hermiticity entrywise within ``tol``."""
    op = np.asarray(op)
    return op.ndim == 2 and op.shape[0] == op.shape[1] and bool(
        np.max(np.abs(op - op.conj().T)) <= tol
    )


def purity(rho: np.ndarray) -> float:
    """Tr(rho^2), real part."""
    rho = np.asarray(rho)
    return float(np.real(np.trace(rho @ rho)))


def validate_density_matrix(rho: np.ndarray, tol: float = STATE_TOL) -> np.ndarray:
    """Validate the density-matrix invariants and return rho unchanged.

    Checks unit trace and Hermiticity to ``tol``, positive semidefiniteness
    up to an eigenvalue floor of -1e-9, and purity in (0, 1 + 1e-9].

    Raises:
        ValueError: Describing the first violated invariant.
    """
    rho = np.asarray(rho, dtype=complex)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ValueError(f"density matrix must be square, got shape {rho.shape}")
    tr = np.trace(rho)
    if abs(tr - 1.0) > tol:
        raise ValueError(f"trace {tr} deviates from 1 beyond {tol}")
    if np.max(np.abs(rho - rho.conj().T)) > tol:
        raise ValueError("density matrix is not Hermitian within tolerance")
    eigs = np.linalg.eigvalsh(rho)
    if eigs[0] < -1e-9:
        raise ValueError(f"negative eigenvalue {eigs[0]:.3e} below -1e-9")
    pur = purity(rho)
    if not 0.0 < pur <= 1.0 + 1e-9:
        raise ValueError(f"purity {pur} outside (0, 1]")
    return rho


def initial_state(system_or_dims) -> np.ndarray:
    """Build the sensing initial state: electron in |m_s=0>, nuclei mixed.

    The electron part is the pure projector onto m_s = 0 and every nuclear
    subsystem is maximally mixed (identity over its dimension), so the
    total state has unit trace.

    Args:
        system_or_dims: Either a sequence of subsystem dimensions (the
            first entry must be the electron's 3) or any object with a
            ``dims`` attribute providing the same.

    Returns:
        Density matrix of dimension prod(dims).

    Examples:
        >>> rho = initial_state([3, 2])
        >>> float(np.real(np.trace(rho)))
        1.0
        >>> round(purity(rho), 6)
        0.5
    """
    dims = getattr(system_or_dims, "dims", system_or_dims)
    dims = tuple(int(d) for d in dims)
    if not dims or dims[0] != 3:
        raise ValueError(f"first subsystem must be the spin-1 electron, got dims {dims}")
    electron = np.zeros((3, 3), dtype=complex)
    electron[1, 1] = 1.0  # |m_s=0><m_s=0| in the (+1, 0, -1) basis
    rho = electron
    for d in dims[1:]:
        rho = np.kron(rho, np.eye(d) / d)
    return rho
