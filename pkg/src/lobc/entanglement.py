"""Pure-state entanglement measures and the η_d family.

All logarithms are base 2, so every quantity is in ebits.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import StateVector, schmidt

ZERO_TOL = 1e-15


def _coefficients(psi: StateVector, cut: Sequence[str] | None) -> np.ndarray:
    if cut is None:
        cut = psi.labels[:1]
    return schmidt(psi, cut).coefficients


def entropy_from_coefficients(lam: np.ndarray) -> float:
    p = np.asarray(lam, dtype=float) ** 2
    p = p[p > ZERO_TOL]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def e_max_from_coefficients(lam: np.ndarray) -> float:
    return float(max(0.0, 2 * math.log2(float(np.sum(lam)))))


def entropy(psi: StateVector, cut: Sequence[str] | None = None) -> float:
    """Entanglement entropy -Σ λ² log2 λ² across ``cut`` (default: first subsystem)."""
    return entropy_from_coefficients(_coefficients(psi, cut))


def e_max_pure(psi: StateVector, cut: Sequence[str] | None = None) -> float:
    """Log-robustness 2·log2(Σ λ) of a pure state."""
    return e_max_from_coefficients(_coefficients(psi, cut))


def eta_d(d: int) -> StateVector:
    """|η_d> = sqrt(1 - 1/√d)|11> + sqrt(1/(√d(d-1))) Σ_{k=2..d} |kk>.

    Kets are labelled 1..d; basis index k maps to amplitude index k-1.
    """
    if int(d) != d or d < 2:
        raise ValueError("d must be an integer ≥ 2")
    d = int(d)
    diag = np.full(d, math.sqrt(1 / (math.sqrt(d) * (d - 1))))
    diag[0] = math.sqrt(1 - 1 / math.sqrt(d))
    amps = np.zeros(d * d, dtype=complex)
    amps[np.arange(d) * (d + 1)] = diag
    return StateVector(("A", "B"), (d, d), amps)


def eta_d_coefficients(d: int) -> np.ndarray:
    """Schmidt coefficients of η_d read off its amplitudes, descending."""
    lam = np.full(d, math.sqrt(1 / (math.sqrt(d) * (d - 1))))
    lam[0] = math.sqrt(1 - 1 / math.sqrt(d))
    return np.sort(lam)[::-1]


@dataclass(frozen=True)
class EntanglementReport:
    schmidt_coefficients: np.ndarray
    entropy_E: float
    e_max: float

    def as_dict(self) -> dict:
        return {
            "schmidt_coefficients": [float(x) for x in self.schmidt_coefficients],
            "schmidt_rank": int(np.sum(self.schmidt_coefficients > 1e-12)),
            "entropy_E": self.entropy_E,
            "e_max": self.e_max,
        }


def report(psi: StateVector, cut: Sequence[str] | None = None) -> EntanglementReport:
    lam = _coefficients(psi, cut)
    return EntanglementReport(lam, entropy_from_coefficients(lam), e_max_from_coefficients(lam))
