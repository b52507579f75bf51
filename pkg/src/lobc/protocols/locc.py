"""Interactive two-ebit baseline for a controlled diagonal gate on 2⊗s."""

from __future__ import annotations

import math

import numpy as np

from ..engine import ALICE, BOB, Session, error_basis
from .base import Protocol, ProtocolValidationError, Resolution
from .bounds import lobc_lower_bound


def distinct_phase_gate(s: int) -> np.ndarray:
    """|0><0|⊗I + |1><1|⊗U_τ with τ_j = 2πj/s, all phases distinct."""
    tau = 2 * np.pi * np.arange(s) / s
    return np.diag(np.concatenate([np.ones(s), np.exp(1j * tau)]))


class LOCCBaseline(Protocol):
    """Alice teleports her qubit to Bob, he applies U_c, and teleports it back.

    Each teleportation is corrected right away from a sent message, so this
    script is interactive and not an LOBC protocol.
    """

    name = "locc-baseline"
    interactive = True

    def __init__(self, s: int, uc: np.ndarray | None = None):
        if int(s) < 2:
            raise ProtocolValidationError("s must be at least 2")
        self.s = int(s)
        self.dims = (2, self.s)
        self.uc = distinct_phase_gate(self.s) if uc is None else np.asarray(uc, dtype=complex)
        if self.uc.shape != (2 * self.s, 2 * self.s):
            raise ProtocolValidationError("controlled gate has the wrong shape")
        self.paulis = error_basis(2)

    def target(self) -> np.ndarray:
        return self.uc

    def script(self, s: Session) -> tuple[str, str]:
        adj = np.transpose(self.paulis.conj(), (0, 2, 1))
        s.allocate_ebit(("a1", "b1"), tag="ebit1")
        s.teleport_star(ALICE, "A", ("a1", "b1"), "t1")
        s.send(ALICE, "t1")
        s.local_op(BOB, ["b1"], adj, choose=lambda v: v["t1"])
        s.local_op(BOB, ["b1", "B"], self.uc)
        s.allocate_ebit(("a2", "b2"), tag="ebit2")
        s.teleport_star(BOB, "b1", ("b2", "a2"), "t2")
        s.send(BOB, "t2")
        s.local_op(ALICE, ["a2"], adj, choose=lambda v: v["t2"])
        return "a2", "B"

    def resolve(self, view) -> Resolution:
        n = view.batch
        return Resolution(np.broadcast_to(np.eye(2, dtype=complex), (n, 2, 2)),
                          np.broadcast_to(np.eye(self.s, dtype=complex), (n, self.s, self.s)),
                          np.ones(n, dtype=bool))

    def ebit_budget(self) -> float:
        return 2.0

    def parameters(self) -> dict:
        return {"s": self.s}

    def annotations(self) -> dict:
        return {"locc_ebits": 2.0, "lobc_lower_bound_ebits": lobc_lower_bound(self.s), "non_lobc": True}
