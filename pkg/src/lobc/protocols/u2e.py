"""Two-ebit exact protocol for gates locally equivalent to a Clifford gate."""

from __future__ import annotations

import numpy as np

from ..engine import ALICE, BOB, Session, error_basis
from ..linalg import PAULIS, factor_product, is_unitary
from ..magic import canonical_decompose, in_L
from .base import Protocol, ProtocolValidationError, Resolution

FACTOR_TOL = 1e-8


class MembershipError(ProtocolValidationError):
    """The gate is not locally equivalent to a Clifford gate."""


def conjugation_data(u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """R and T_j, V_j with U (Rσ_jR†⊗I) U† = T_j ⊗ V_j for j = 0..3."""
    form = canonical_decompose(u)
    r = form.local_pre[0].conj().T
    errs = error_basis(2, r)
    ts, vs = [], []
    for e in errs:
        w = u @ np.kron(e, np.eye(2)) @ u.conj().T
        t, v, resid = factor_product(w, 2, 2)
        if resid > FACTOR_TOL:
            raise MembershipError(f"conjugated error does not factor (residual {resid:.2e})")
        ts.append(t)
        vs.append(v)
    return r, np.array(ts), np.array(vs)


class U2E(Protocol):
    name = "u2e"

    def __init__(self, u: np.ndarray, gate_name: str | None = None):
        u = np.asarray(u, dtype=complex)
        if u.shape != (4, 4) or not is_unitary(u):
            raise ProtocolValidationError("U2E needs a two-qubit unitary")
        if not in_L(u):
            raise MembershipError("gate is not in the Clifford-equivalent family")
        self.u = u
        self.gate_name = gate_name
        self.rotation, self.t, self.v = conjugation_data(u)

    def target(self) -> np.ndarray:
        return self.u

    def script(self, s: Session) -> tuple[str, str]:
        s.allocate_ebit(("a1", "b1"), tag="ebit1")
        s.teleport_star(ALICE, "A", ("a1", "b1"), "j", rotation=self.rotation)
        s.local_op(BOB, ["b1", "B"], self.u)
        s.allocate_ebit(("a2", "b2"), tag="ebit2")
        s.teleport_star(BOB, "b1", ("b2", "a2"), "k")
        return "a2", "B"

    def resolve(self, view) -> Resolution:
        j, k = view["j"], view["k"]
        paulis = np.array(PAULIS)
        alice = np.einsum("nji,njk->nik", self.t[j].conj(), paulis[k])
        bob = np.transpose(self.v[j].conj(), (0, 2, 1))
        return Resolution(alice, bob, np.ones(len(j), dtype=bool))

    def candidates(self):
        paulis = np.array(PAULIS)
        ca = np.array([self.t[j].conj().T @ paulis[k] for j in range(4) for k in range(4)])
        cb = np.array([self.v[j].conj().T for j in range(4) for k in range(4)])
        return ca, cb

    def ebit_budget(self) -> float:
        return 2.0

    def parameters(self) -> dict:
        return {"gate": self.gate_name or "custom"}
