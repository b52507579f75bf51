"""Closed-form budgets and bounds."""

from __future__ import annotations

import math


def _check_rounds(n: int) -> int:
    if int(n) != n or n < 1:
        raise ValueError("N must be a positive integer")
    return int(n)


def predicted_success(n: int) -> float:
    """(1 - 2^-N)^3."""
    n = _check_rounds(n)
    return (1 - 2.0 ** -n) ** 3


def ebit_budget(n: int) -> int:
    """8N + 1."""
    return 8 * _check_rounds(n) + 1


def step_budgets(n: int) -> dict[str, int]:
    n = _check_rounds(n)
    return {"s1": 1, "s2": 2 * n, "s3": 2 * n, "s4": 4 * n - 1, "s5": 1}


def epsilon_ebits(epsilon: float) -> tuple[float, float]:
    """Ebits needed for diamond-norm error ε: (exact, 8·log2(1/ε) + 22).

    The exact value is 1 - 8·log2(1 - (1 - ε/2)^(1/3)), which equals 8N + 1
    at ε = 2(1 - (1 - 2^-N)^3).
    """
    if not (0 < epsilon <= 2):
        raise ValueError("epsilon must lie in (0, 2]")
    inner = 1 - (1 - epsilon / 2) ** (1 / 3)
    exact = 1 - 8 * math.log2(inner)
    bound = 8 * math.log2(1 / epsilon) + 22
    if exact > bound + 1e-9:
        raise ArithmeticError(f"exact cost {exact} exceeds the bound {bound}")
    return exact, bound


def lobc_lower_bound(s: int) -> float:
    """log2(s) ebits for distinct-phase controlled gates on 2⊗s."""
    if int(s) != s or s < 2:
        raise ValueError("s must be an integer ≥ 2")
    return math.log2(s)
