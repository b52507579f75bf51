"""Magic-basis transforms, canonical two-qubit decomposition and gate classes.

Every two-qubit unitary factors as ``phase * (R1⊗S1) Ω(α,β,γ) (R2⊗S2)`` with
``Ω = exp(i(α XX + β YY + γ ZZ))``. In the magic basis Ω is diagonal and the
local factors become real orthogonal matrices, which is what the
decomposition below exploits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from .linalg import CNOT, H, I2, X, Y, Z, factor_product, haar_random_unitary, is_unitary, rz, tz

_S = 1 / math.sqrt(2)
MAGIC = np.array(
    [
        [_S, -1j * _S, 0, 0],
        [0, 0, -1j * _S, _S],
        [0, 0, -1j * _S, -_S],
        [_S, 1j * _S, 0, 0],
    ],
    dtype=complex,
)

XX, YY, ZZ = np.kron(X, X), np.kron(Y, Y), np.kron(Z, Z)

# rows give (phi_0..phi_3) as combinations of (alpha, beta, gamma)
_PHASE_MAP = np.array([[1, -1, 1], [-1, 1, 1], [1, 1, -1], [-1, -1, -1]], dtype=float)

RECON_TOL = 1e-9
L_TOL = 1e-8


class NotUnitaryError(ValueError):
    pass


def magic_basis_matrix() -> np.ndarray:
    """Columns are |Φ0>, |Φ1>, |Φ2>, |Φ3>."""
    return MAGIC.copy()


def omega_from_angles(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Ω(α,β,γ) built from its magic-basis spectrum."""
    phases = magic_phases(alpha, beta, gamma)
    return MAGIC @ np.diag(np.exp(1j * phases)) @ MAGIC.conj().T


def omega_by_exponentials(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Ω as the product of the three commuting Pauli-pair exponentials."""
    return expm(1j * alpha * XX) @ expm(1j * beta * YY) @ expm(1j * gamma * ZZ)


def magic_phases(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Eigenphases (φ0, φ1, φ2, φ3) of Ω(α,β,γ) on the magic basis."""
    return _PHASE_MAP @ np.array([alpha, beta, gamma], dtype=float)


def angles_from_phases(phi) -> tuple[float, float, float]:
    """Inverse of ``magic_phases`` for phases summing to zero."""
    p0, p1, p2, p3 = phi
    return ((p0 - p1 + p2 - p3) / 4, (-p0 + p1 + p2 - p3) / 4, (p0 + p1 - p2 - p3) / 4)


def m_gate(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """CNOT·(H⊗I)·T_z(β)·(R_z(α)⊗R_z(γ))·(H⊗I)·CNOT.

    Equal to Ω(α/2, β/2, γ/2).
    """
    hi = np.kron(H, I2)
    return CNOT @ hi @ tz(beta) @ np.kron(rz(alpha), rz(gamma)) @ hi @ CNOT


@dataclass(frozen=True)
class CanonicalForm:
    """``phase * (R1⊗S1) Ω(α,β,γ) (R2⊗S2)``.

    ``local_pre`` is (R2, S2), applied first; ``local_post`` is (R1, S1).
    """

    alpha: float
    beta: float
    gamma: float
    local_pre: tuple[np.ndarray, np.ndarray]
    local_post: tuple[np.ndarray, np.ndarray]
    phase: complex

    @property
    def angles(self) -> tuple[float, float, float]:
        return (self.alpha, self.beta, self.gamma)

    def omega(self) -> np.ndarray:
        return omega_from_angles(self.alpha, self.beta, self.gamma)

    def rebuild(self) -> np.ndarray:
        r1, s1 = self.local_post
        r2, s2 = self.local_pre
        return self.phase * np.kron(r1, s1) @ self.omega() @ np.kron(r2, s2)


def _check_unitary(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.shape != (4, 4) or not is_unitary(u):
        raise NotUnitaryError("expected a 4x4 unitary")
    return u


def _real_orthogonal_eigenbasis(s: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Real O with Oᵀ s O diagonal for a complex symmetric unitary ``s``.

    Re(s) and Im(s) are commuting real symmetric matrices, so a generic real
    combination of them has the joint eigenbasis. Degenerate spectra can make a
    given combination ambiguous, hence the retry loop.
    """
    for _ in range(100):
        c = rng.uniform(0.5, 2.0)
        _, o = np.linalg.eigh(s.real + c * s.imag)
        d = o.T @ s @ o
        if np.max(np.abs(d - np.diag(np.diagonal(d)))) < 1e-10:
            if np.linalg.det(o) < 0:
                o[:, 0] = -o[:, 0]
            return o
    raise RuntimeError("failed to diagonalize the magic-basis Gram matrix")


def canonical_decompose(u: np.ndarray, seed: int = 0) -> CanonicalForm:
    """Decompose a two-qubit unitary into canonical angles and local factors."""
    u = _check_unitary(u)
    rng = np.random.default_rng(seed)
    det_root = np.linalg.det(u) ** 0.25
    m = MAGIC.conj().T @ (u / det_root) @ MAGIC
    best = None
    for _ in range(8):
        o = _real_orthogonal_eigenbasis(m.T @ m, rng)
        lam = np.diagonal(o.T @ m.T @ m @ o)
        phi = np.angle(lam) / 2
        # det(m) = 1 forces sum(phi) to be 0 or π mod 2π; pick the 0 branch
        if abs(np.exp(1j * phi.sum()) - 1) > 1e-6:
            phi[0] += math.pi
        k1 = m @ o @ np.diag(np.exp(-1j * phi))
        k2 = o.T
        left = MAGIC @ k1 @ MAGIC.conj().T
        right = MAGIC @ k2 @ MAGIC.conj().T
        r1, s1, _ = factor_product(left, 2, 2)
        r2, s2, _ = factor_product(right, 2, 2)
        r1, s1, r2, s2 = (_nearest_unitary(a) for a in (r1, s1, r2, s2))
        alpha, beta, gamma = angles_from_phases(phi)
        core = np.kron(r1, s1) @ omega_from_angles(alpha, beta, gamma) @ np.kron(r2, s2)
        k = np.unravel_index(np.argmax(np.abs(core)), core.shape)
        phase = u[k] / core[k]
        phase /= abs(phase)
        form = CanonicalForm(float(alpha), float(beta), float(gamma), (r2, s2), (r1, s1), complex(phase))
        err = np.max(np.abs(form.rebuild() - u))
        if err <= RECON_TOL:
            return form
        if best is None or err < best[0]:
            best = (err, form)
    raise RuntimeError(f"decomposition did not converge (residual {best[0]:.2e})")


def _nearest_unitary(a: np.ndarray) -> np.ndarray:
    w, _, vh = np.linalg.svd(a)
    return w @ vh


# ---------------------------------------------------------------------------
# Invariants and classification
# ---------------------------------------------------------------------------


def _gram_phases(u: np.ndarray) -> np.ndarray:
    """Eigenphases of MᵀM, M = Q†UQ, for U scaled to determinant 1.

    Fixing det U = 1 leaves U defined up to a fourth root of unity, which
    shifts every phase of MᵀM by 0 or π.
    """
    u = u / np.linalg.det(u) ** 0.25
    m = MAGIC.conj().T @ u @ MAGIC
    return np.angle(np.linalg.eigvals(m.T @ m))


def canonical_invariants(u: np.ndarray) -> np.ndarray:
    """Local-equivalence fingerprint of a two-qubit gate.

    Sorted eigenphases in [0, 2π) of MᵀM for det-normalized U. Local factors
    conjugate MᵀM by real orthogonal matrices, so the multiset is invariant
    up to the common π shift; of the two shifted copies the one with the
    smaller sorted tuple is returned. Compare with ``invariants_match``.
    """
    u = _check_unitary(u)
    ph = _gram_phases(u)
    options = []
    for shift in (0.0, math.pi):
        v = np.mod(ph + shift, 2 * math.pi)
        v[np.isclose(v, 2 * math.pi, atol=1e-9)] = 0.0
        options.append(np.sort(v))
    return min(options, key=lambda v: tuple(np.round(v, 9)))


def _circular_match(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    used = np.zeros(len(b), dtype=bool)
    for x in a:
        d = np.abs(np.angle(np.exp(1j * (b - x))))
        d[used] = np.inf
        j = int(np.argmin(d))
        if d[j] > tol:
            return False
        used[j] = True
    return True


def invariants_match(a: np.ndarray, b: np.ndarray, tol: float = 1e-8) -> bool:
    """Multiset equality of two invariant vectors up to the common π shift."""
    a, b = np.asarray(a), np.asarray(b)
    return _circular_match(a, b, tol) or _circular_match(a, b + math.pi, tol)


def locally_equivalent(u: np.ndarray, v: np.ndarray, tol: float = 1e-8) -> bool:
    """True iff ``u`` and ``v`` differ only by local unitaries and a phase."""
    return invariants_match(_gram_phases(_check_unitary(u)), _gram_phases(_check_unitary(v)), tol)


def canonical_class(u: np.ndarray) -> tuple[float, float, float]:
    """A reduced representative of the canonical angles for display.

    Angles are reduced modulo π/2 into (-π/4, π/4], ordered by magnitude and
    signs normalized so that at most the smallest angle is negative.
    """
    form = canonical_decompose(u)
    q = math.pi / 2
    a = [((x + math.pi / 4) % q) - math.pi / 4 for x in form.angles]
    a = [q / 2 if math.isclose(x, -q / 2, abs_tol=1e-9) else x for x in a]
    a = sorted(a, key=lambda x: -abs(x))
    a = [0.0 if abs(x) < 1e-12 else x for x in a]
    # flipping two signs at once is a local equivalence
    if a[0] < 0:
        a[0], a[2] = -a[0], -a[2]
    if a[1] < 0:
        a[1], a[2] = -a[1], -a[2]
    if math.isclose(abs(a[0]), math.pi / 4, abs_tol=1e-9) and a[2] < 0:
        a[2] = -a[2]
    return tuple(float(round(x, 12)) for x in a)


def in_L(u: np.ndarray, tol: float = L_TOL) -> bool:
    """True iff every canonical angle is an integer multiple of π/4."""
    form = canonical_decompose(u)
    q = math.pi / 4
    return all(abs(x / q - round(x / q)) * q <= tol for x in form.angles)


def is_nonentangling(u: np.ndarray, tol: float = 1e-9) -> bool:
    """True iff Q†UQ is entrywise real up to a global phase."""
    u = _check_unitary(u)
    m = MAGIC.conj().T @ u @ MAGIC
    k = np.unravel_index(np.argmax(np.abs(m)), m.shape)
    m = m * (abs(m[k]) / m[k])
    return bool(np.max(np.abs(m.imag)) <= tol)


def magic_product_criterion(psi, tol: float = 1e-9) -> bool:
    """Product test for two-qubit pure states: |Σ c_k²| ≤ tol in the magic basis."""
    amps = getattr(psi, "amplitudes", psi)
    amps = np.asarray(amps, dtype=complex).reshape(-1)
    if amps.size != 4:
        raise ValueError("expected a two-qubit state")
    c = MAGIC.conj().T @ amps
    return bool(abs(np.sum(c ** 2)) <= tol)


def clifford_class_gate(rng: np.random.Generator) -> np.ndarray:
    """Random locals around Ω with angles drawn from multiples of π/4."""
    k = rng.integers(0, 8, size=3)
    om = omega_from_angles(*(k * math.pi / 4))
    loc = [haar_random_unitary(2, rng) for _ in range(4)]
    return np.kron(loc[0], loc[1]) @ om @ np.kron(loc[2], loc[3])
