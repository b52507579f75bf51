"""Protocol scripts with analytic corrections and budgets."""

from .base import (
    OracleDisagreement,
    Protocol,
    ProtocolReport,
    ProtocolValidationError,
    Resolution,
    enumerate_branches,
    resolve_corrections,
    run_protocol,
    sample_trajectory,
)
from .bounds import ebit_budget, epsilon_ebits, lobc_lower_bound, predicted_success, step_budgets
from .chermitian import ControlledHermitian, controlled_gate, random_hermitian_unitary, random_projector
from .locc import LOCCBaseline, distinct_phase_gate
from .qswap import QuditSwap
from .u2 import U2
from .u2e import U2E, MembershipError


def run_u2e(u, psi, mode="enumerate", **kw) -> ProtocolReport:
    return run_protocol(U2E(u), psi, mode, **kw)


def run_controlled_hermitian(p, v, psi, mode="enumerate", **kw) -> ProtocolReport:
    return run_protocol(ControlledHermitian(p, v), psi, mode, **kw)


def run_u2(u_or_angles, rounds, psi, mode="enumerate", **kw) -> ProtocolReport:
    import numpy as np

    arr = np.asarray(u_or_angles)
    proto = U2(rounds, u=arr) if arr.shape == (4, 4) else U2(rounds, angles=tuple(arr))
    return run_protocol(proto, psi, mode, **kw)


def run_qudit_swap(d, psi, mode="enumerate", **kw) -> ProtocolReport:
    return run_protocol(QuditSwap(d), psi, mode, **kw)


def run_locc_baseline(s, psi, mode="enumerate", uc=None, **kw) -> ProtocolReport:
    return run_protocol(LOCCBaseline(s, uc), psi, mode, **kw)
