import numpy as np
import pytest

from nvpulse.spincore import (
    SpinValueError,
    embed,
    initial_state,
    is_hermitian,
    purity,
    spin_operators,
    validate_density_matrix,
)


@pytest.mark.parametrize("s", [0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
def test_spin_operators_algebra(s):
    sx, sy, sz = spin_operators(s)
    d = round(2 * s) + 1
    assert sx.shape == (d, d)
    for op in (sx, sy, sz):
        assert is_hermitian(op)
    # su(2): [Sx, Sy] = i Sz and cyclic
    assert np.allclose(sx @ sy - sy @ sx, 1j * sz, atol=1e-12)
    assert np.allclose(sy @ sz - sz @ sy, 1j * sx, atol=1e-12)
    assert np.allclose(sz @ sx - sx @ sz, 1j * sy, atol=1e-12)
    # Casimir: S^2 = s(s+1) I
    casimir = sx @ sx + sy @ sy + sz @ sz
    assert np.allclose(casimir, s * (s + 1) * np.eye(d), atol=1e-12)


def test_spin_operators_basis_is_descending_m():
    _, _, sz = spin_operators(1)
    assert np.allclose(np.diag(sz), [1.0, 0.0, -1.0])
    _, _, sz_half = spin_operators(0.5)
    assert np.allclose(np.diag(sz_half), [0.5, -0.5])


def test_spin_operators_rejects_bad_spin():
    for bad in (0.3, -0.5, 3.5, 1.0001):
        with pytest.raises(SpinValueError):
            spin_operators(bad)


def test_embed_matches_explicit_kron():
    sx1, _, _ = spin_operators(1)
    sxh, _, _ = spin_operators(0.5)
    dims = (3, 2, 2)
    assert np.allclose(embed(sx1, 0, dims), np.kron(sx1, np.eye(4)))
    assert np.allclose(
        embed(sxh, 1, dims), np.kron(np.kron(np.eye(3), sxh), np.eye(2))
    )
    assert np.allclose(embed(sxh, 2, dims), np.kron(np.eye(6), sxh))


def test_embed_validates_slot_and_shape():
    sx, _, _ = spin_operators(0.5)
    with pytest.raises(IndexError):
        embed(sx, 3, (3, 2))
    with pytest.raises(ValueError):
        embed(sx, 0, (3, 2))  # operator dim 2 does not fit slot dim 3


def test_embedded_operators_on_different_slots_commute():
    ops1 = spin_operators(1)
    ops2 = spin_operators(0.5)
    dims = (3, 2)
    for a in ops1:
        for b in ops2:
            ea = embed(a, 0, dims)
            eb = embed(b, 1, dims)
            assert np.allclose(ea @ eb, eb @ ea, atol=1e-12)


def test_purity_and_validation():
    rho = np.diag([1.0, 0.0, 0.0]).astype(complex)
    validate_density_matrix(rho)
    assert purity(rho) == pytest.approx(1.0)
    mixed = np.eye(4) / 4
    validate_density_matrix(mixed)
    assert purity(mixed) == pytest.approx(0.25)


def test_validate_density_matrix_rejects_bad_states():
    with pytest.raises(ValueError):
        validate_density_matrix(np.eye(3))  # trace 3
    nonherm = np.diag([1.0, 0.0]).astype(complex)
    nonherm[0, 1] = 0.5
    with pytest.raises(ValueError):
        validate_density_matrix(nonherm)
    negative = np.diag([1.5, -0.5]).astype(complex)
    with pytest.raises(ValueError):
        validate_density_matrix(negative)


def test_initial_state_electron_projector_and_mixed_nuclei():
    rho = initial_state((3,))
    assert rho.shape == (3, 3)
    assert rho[1, 1] == pytest.approx(1.0)
    assert purity(rho) == pytest.approx(1.0)

    rho2 = initial_state((3, 2))
    validate_density_matrix(rho2)
    assert purity(rho2) == pytest.approx(0.5)
    # electron block structure: |0><0| on slot 0
    pops = np.real(np.diag(rho2))
    assert np.allclose(pops, [0, 0, 0.5, 0.5, 0, 0])

    rho3 = initial_state((3, 3, 2))
    validate_density_matrix(rho3)
    assert purity(rho3) == pytest.approx(1.0 / 6.0)


def test_initial_state_accepts_system_like_object():
    class Sys:
        dims = (3, 2)

    assert np.allclose(initial_state(Sys()), initial_state((3, 2)))


def test_initial_state_requires_spin1_electron_first():
    with pytest.raises(ValueError):
        initial_state((2, 2))
