"""Simulation of nonlocal gate protocols under local operations and a single broadcast."""

__version__ = "0.1.0"

from .engine import ALICE, BOB, BranchOverflow, LocalityError, OwnershipError, Session  # noqa: E402
from .entanglement import e_max_pure, entropy, eta_d  # noqa: E402
from .linalg import StateVector  # noqa: E402
from .magic import canonical_decompose, canonical_invariants, in_L, is_nonentangling  # noqa: E402
from .protocols import (  # noqa: E402
    U2,
    U2E,
    ControlledHermitian,
    LOCCBaseline,
    OracleDisagreement,
    QuditSwap,
    run_protocol,
)
