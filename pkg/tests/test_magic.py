"""Magic basis, canonical decomposition and gate classification."""

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lobc.linalg import CNOT, CZ, H, I2, ISWAP, PAULIS, SWAP, X, StateVector, haar_random_unitary, schmidt
from lobc.magic import (
    MAGIC,
    XX,
    YY,
    ZZ,
    NotUnitaryError,
    angles_from_phases,
    canonical_class,
    canonical_decompose,
    canonical_invariants,
    clifford_class_gate,
    in_L,
    invariants_match,
    is_nonentangling,
    locally_equivalent,
    m_gate,
    magic_phases,
    magic_product_criterion,
    omega_by_exponentials,
    omega_from_angles,
)

QUARTER = math.pi / 4
angle = st.floats(-math.pi, math.pi, allow_nan=False)


class TestMagicBasis:
    def test_unitary(self):
        np.testing.assert_allclose(MAGIC.conj().T @ MAGIC, np.eye(4), atol=1e-15)

    def test_first_column(self):
        np.testing.assert_allclose(MAGIC[:, 0], np.array([1, 0, 0, 1]) / math.sqrt(2))

    @pytest.mark.parametrize("pauli", [XX, YY, ZZ])
    def test_pauli_pairs_diagonal(self, pauli):
        m = MAGIC.conj().T @ pauli @ MAGIC
        np.testing.assert_allclose(m, np.diag(np.diag(m)), atol=1e-15)
        np.testing.assert_allclose(m.imag, 0, atol=1e-15)


class TestOmega:
    def test_identity_at_zero(self):
        np.testing.assert_allclose(omega_from_angles(0, 0, 0), np.eye(4), atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(angle, angle, angle)
    def test_spectral_form_matches_exponentials(self, a, b, c):
        np.testing.assert_allclose(omega_from_angles(a, b, c), omega_by_exponentials(a, b, c), atol=1e-10)

    @settings(max_examples=50, deadline=None)
    @given(angle, angle, angle)
    def test_phase_map_roundtrip(self, a, b, c):
        np.testing.assert_allclose(angles_from_phases(magic_phases(a, b, c)), (a, b, c), atol=1e-12)

    def test_diagonal_in_magic_basis(self, rng):
        for _ in range(20):
            a, b, c = rng.uniform(-math.pi, math.pi, 3)
            m = MAGIC.conj().T @ omega_from_angles(a, b, c) @ MAGIC
            np.testing.assert_allclose(np.diag(m), np.exp(1j * magic_phases(a, b, c)), atol=1e-10)
            np.testing.assert_allclose(m - np.diag(np.diag(m)), 0, atol=1e-10)

    def test_swap_angles(self):
        assert locally_equivalent(omega_from_angles(QUARTER, QUARTER, QUARTER), SWAP)


class TestMGate:
    def test_zero_is_identity(self):
        np.testing.assert_allclose(m_gate(0, 0, 0), np.eye(4), atol=1e-12)

    def test_half_angle_identity(self, rng):
        for _ in range(100):
            a, b, c = rng.uniform(-math.pi, math.pi, 3)
            np.testing.assert_allclose(m_gate(a, b, c), omega_from_angles(a / 2, b / 2, c / 2), atol=1e-12)

    def test_invariants_agree(self, rng):
        for _ in range(100):
            a, b, c = rng.uniform(-math.pi, math.pi, 3)
            assert invariants_match(canonical_invariants(m_gate(a, b, c)),
                                    canonical_invariants(omega_from_angles(a / 2, b / 2, c / 2)))


class TestDecomposition:
    @pytest.mark.parametrize("gate", [np.eye(4), CNOT, CZ, SWAP, ISWAP, np.kron(H, X)],
                             ids=["identity", "cnot", "cz", "swap", "iswap", "local"])
    def test_degenerate_spectra(self, gate):
        form = canonical_decompose(gate)
        np.testing.assert_allclose(form.rebuild(), gate, atol=1e-9)
        for m in form.local_pre + form.local_post:
            np.testing.assert_allclose(m @ m.conj().T, np.eye(2), atol=1e-10)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_haar_reconstruction(self, seed):
        u = haar_random_unitary(4, np.random.default_rng(seed))
        assert np.max(np.abs(canonical_decompose(u).rebuild() - u)) <= 1e-9

    def test_rejects_non_unitary(self):
        with pytest.raises(NotUnitaryError):
            canonical_decompose(np.ones((4, 4)))

    def test_invariants_local_insensitive(self, rng):
        u = haar_random_unitary(4, rng)
        loc = np.kron(haar_random_unitary(2, rng), haar_random_unitary(2, rng))
        assert invariants_match(canonical_invariants(u), canonical_invariants(np.exp(0.3j) * loc @ u))

    @settings(max_examples=30, deadline=None)
    @given(angle, angle, angle)
    def test_angle_permutation_is_local(self, a, b, c):
        assert locally_equivalent(omega_from_angles(a, b, c), omega_from_angles(c, a, b))

    def test_invariants_separate_classes(self):
        assert not invariants_match(canonical_invariants(CNOT), canonical_invariants(SWAP))
        assert not locally_equivalent(CNOT, ISWAP)
        assert locally_equivalent(CNOT, CZ)


class TestCanonicalClass:
    @pytest.mark.parametrize("gate,expected", [
        (CNOT, (QUARTER, 0, 0)),
        (CZ, (QUARTER, 0, 0)),
        (ISWAP, (QUARTER, QUARTER, 0)),
        (SWAP, (QUARTER, QUARTER, QUARTER)),
        (np.eye(4), (0, 0, 0)),
    ])
    def test_named_gates(self, gate, expected):
        np.testing.assert_allclose(canonical_class(gate), expected, atol=1e-9)


class TestMembership:
    @pytest.mark.parametrize("gate", [CNOT, SWAP, CZ, ISWAP, np.eye(4)])
    def test_named_in_L(self, gate):
        assert in_L(gate)

    def test_pi_over_8_not_in_L(self):
        assert not in_L(omega_from_angles(math.pi / 8, 0, 0))

    def test_clifford_class(self, rng):
        assert all(in_L(clifford_class_gate(rng)) for _ in range(30))

    def test_pauli_conjugation_multiples_of_quarter(self, rng):
        pairs = [np.kron(a, b) for a, b in itertools.product(PAULIS, PAULIS)][1:]
        for _ in range(10):
            k = rng.integers(0, 8, 3)
            om = omega_from_angles(*(k * QUARTER))
            for p in pairs:
                assert _is_scaled_pauli_pair(om @ p @ om.conj().T)

    def test_pauli_conjugation_breaks_off_grid(self):
        om = omega_from_angles(0.3, 0, 0)
        pairs = [np.kron(a, b) for a, b in itertools.product(PAULIS, PAULIS)][1:]
        assert not all(_is_scaled_pauli_pair(om @ p @ om.conj().T) for p in pairs)


def _is_scaled_pauli_pair(m):
    for a, b in itertools.product(PAULIS, PAULIS):
        p = np.kron(a, b)
        for s in (1, -1, 1j, -1j):
            if np.max(np.abs(m - s * p)) <= 1e-9:
                return True
    return False


class TestNonentangling:
    def test_local_product(self):
        assert is_nonentangling(np.kron(X, H))

    def test_cnot_entangles(self):
        assert not is_nonentangling(CNOT)

    def test_swap(self):
        assert is_nonentangling(SWAP)

    def test_swap_magic_form(self):
        m = MAGIC.conj().T @ SWAP @ MAGIC
        k = np.argmax(np.abs(np.diag(m)))
        np.testing.assert_allclose(np.sort((m / m[k, k]).diagonal().real), [-1, 1, 1, 1], atol=1e-12)

    def test_behavior_on_products(self, rng):
        for u in (np.kron(haar_random_unitary(2, rng), haar_random_unitary(2, rng)),
                  SWAP @ np.kron(haar_random_unitary(2, rng), I2)):
            assert is_nonentangling(u)
            for _ in range(20):
                a = StateVector.random(("A",), (2,), rng)
                b = StateVector.random(("B",), (2,), rng)
                out = StateVector(("A", "B"), (2, 2), u @ a.tensor(b).amplitudes)
                assert schmidt(out, ("A",)).coefficients[1] < 1e-9


class TestProductCriterion:
    def test_zero_zero(self):
        psi = StateVector.basis(("A", "B"), (2, 2), (0, 0))
        np.testing.assert_allclose(MAGIC.conj().T @ psi.amplitudes, np.array([1, 1j, 0, 0]) / math.sqrt(2),
                                   atol=1e-15)
        assert magic_product_criterion(psi)

    def test_phi0_entangled(self):
        assert not magic_product_criterion(MAGIC[:, 0])

    def test_rejects_wrong_size(self):
        with pytest.raises(ValueError):
            magic_product_criterion(np.ones(3) / math.sqrt(3))
