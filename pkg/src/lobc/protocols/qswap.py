"""Swap of two d-dimensional systems via two generalized teleportations."""

from __future__ import annotations

import math

import numpy as np

from ..engine import ALICE, BOB, Session, error_basis
from ..linalg import swap_gate
from .base import Protocol, ProtocolValidationError, Resolution


class QuditSwap(Protocol):
    name = "qswap"

    def __init__(self, d: int):
        if int(d) < 2:
            raise ProtocolValidationError("d must be at least 2")
        self.d = int(d)
        self.dims = (self.d, self.d)
        self.errors = error_basis(self.d)

    def target(self) -> np.ndarray:
        return swap_gate(self.d)

    def script(self, s: Session) -> tuple[str, str]:
        d = self.d
        s.allocate_ebit(("a1", "b1"), d=d, tag="ebit1")
        s.teleport_star(ALICE, "A", ("a1", "b1"), "j")
        s.local_op(BOB, ["b1", "B"], swap_gate(d))
        s.allocate_ebit(("a2", "b2"), d=d, tag="ebit2")
        s.teleport_star(BOB, "b1", ("b2", "a2"), "k")
        return "a2", "B"

    def resolve(self, view) -> Resolution:
        j, k = view["j"], view["k"]
        adj = np.transpose(self.errors.conj(), (0, 2, 1))
        return Resolution(adj[k], adj[j], np.ones(len(j), dtype=bool))

    def candidates(self):
        adj = np.transpose(self.errors.conj(), (0, 2, 1))
        n = len(adj)
        return np.repeat(adj, n, axis=0), np.tile(adj, (n, 1, 1))

    def ebit_budget(self) -> float:
        return 2 * math.log2(self.d)

    def parameters(self) -> dict:
        return {"d": self.d}
