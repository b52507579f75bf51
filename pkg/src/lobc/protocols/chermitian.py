"""One-ebit protocol for hermitian binary-controlled gates (I-P)⊗I + P⊗V."""

from __future__ import annotations

import math

import numpy as np

from ..engine import ALICE, BOB, Session
from ..linalg import is_unitary
from .base import Protocol, ProtocolValidationError, Resolution

TOL = 1e-9


def controlled_gate(p: np.ndarray, v: np.ndarray) -> np.ndarray:
    da, db = p.shape[0], v.shape[0]
    return np.kron(np.eye(da) - p, np.eye(db)) + np.kron(p, v)


def alice_kraus(p: np.ndarray) -> np.ndarray:
    """A_0, A_1 mapping A⊗A' to A."""
    q = np.eye(p.shape[0]) - p
    bra0, bra1 = np.array([[1, 0]]), np.array([[0, 1]])
    return np.array([np.kron(q, bra0) + np.kron(p, bra1), np.kron(p, bra0) + np.kron(q, bra1)], dtype=complex)


def bob_kraus(v: np.ndarray) -> np.ndarray:
    """B_0, B_1 mapping B⊗B' to B."""
    i = np.eye(v.shape[0])
    bra0, bra1 = np.array([[1, 0]]), np.array([[0, 1]])
    s = 1 / math.sqrt(2)
    return np.array([s * (np.kron(i, bra0) + np.kron(v, bra1)), s * (np.kron(i, bra0) - np.kron(v, bra1))],
                    dtype=complex)


class ControlledHermitian(Protocol):
    name = "chermitian"

    def __init__(self, p: np.ndarray, v: np.ndarray):
        p = np.asarray(p, dtype=complex)
        v = np.asarray(v, dtype=complex)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ProtocolValidationError("P must be square")
        if np.max(np.abs(p @ p - p)) > TOL or np.max(np.abs(p - p.conj().T)) > TOL:
            raise ProtocolValidationError("P is not a projector")
        if np.max(np.abs(v - v.conj().T)) > TOL or not is_unitary(v, TOL):
            raise ProtocolValidationError("V must be a hermitian unitary")
        self.p, self.v = p, v
        self.dims = (p.shape[0], v.shape[0])
        self.z = np.eye(p.shape[0]) - 2 * p

    def target(self) -> np.ndarray:
        return controlled_gate(self.p, self.v)

    def script(self, s: Session) -> tuple[str, str]:
        s.allocate_ebit(("A'", "B'"), tag="ebit")
        s.measure(ALICE, ["A", "A'"], alice_kraus(self.p), "a", outputs=[("A", self.dims[0])])
        s.measure(BOB, ["B", "B'"], bob_kraus(self.v), "b", outputs=[("B", self.dims[1])])
        return "A", "B"

    def resolve(self, view) -> Resolution:
        a, b = view["a"], view["b"]
        alice = np.where(b[:, None, None] == 1, self.z, np.eye(self.dims[0]))
        bob = np.where(a[:, None, None] == 1, self.v, np.eye(self.dims[1]))
        return Resolution(alice.astype(complex), bob.astype(complex), np.ones(len(a), dtype=bool))

    def candidates(self):
        za = np.array([np.eye(self.dims[0]), self.z, np.eye(self.dims[0]), self.z], dtype=complex)
        vb = np.array([np.eye(self.dims[1]), np.eye(self.dims[1]), self.v, self.v], dtype=complex)
        return za, vb

    def ebit_budget(self) -> float:
        return 1.0

    def parameters(self) -> dict:
        return {"dA": self.dims[0], "dB": self.dims[1], "rank_P": int(round(np.real(np.trace(self.p))))}


def random_projector(d: int, rng: np.random.Generator, rank: int | None = None) -> np.ndarray:
    from ..linalg import haar_random_unitary

    r = int(rng.integers(0, d + 1)) if rank is None else rank
    u = haar_random_unitary(d, rng)[:, :r]
    return u @ u.conj().T


def random_hermitian_unitary(d: int, rng: np.random.Generator, negative: int | None = None) -> np.ndarray:
    """W diag(±1) W† with ``negative`` eigenvalues -1 (random count if None)."""
    from ..linalg import haar_random_unitary

    w = haar_random_unitary(d, rng)
    if negative is None:
        signs = rng.choice([-1.0, 1.0], size=d)
    else:
        signs = np.where(np.arange(d) < negative, -1.0, 1.0)
    return w @ np.diag(signs) @ w.conj().T
