"""Protocol interface, runner and report type."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..engine import ALICE, BOB, BranchSet, RecordView, Session, snapshot
from ..linalg import StateVector

FID_TOL = 1e-9
DEFAULT_CHUNK = 10_000


class OracleDisagreement(RuntimeError):
    """Analytic corrections failed on a branch the protocol declares successful."""


class ProtocolValidationError(ValueError):
    """Protocol parameters violate a precondition."""


@dataclass
class Resolution:
    """Per-branch local corrections decided after the broadcast."""

    alice: np.ndarray
    bob: np.ndarray
    success: np.ndarray
    detail: dict[str, np.ndarray] = field(default_factory=dict)


class Protocol:
    """A two-party script with its analytic correction rule.

    Subclasses set ``name``, ``labels``, ``dims`` and ``owners`` for the
    input and implement ``script``, ``resolve`` and ``target``.
    """

    name = "protocol"
    interactive = False
    labels: tuple[str, ...] = ("A", "B")
    dims: tuple[int, ...] = (2, 2)
    owners = {"A": ALICE, "B": BOB}

    def target(self) -> np.ndarray:
        raise NotImplementedError

    def script(self, s: Session) -> tuple[str, str]:
        """Run the protocol; return the (Alice, Bob) output labels."""
        raise NotImplementedError

    def resolve(self, view: RecordView) -> Resolution:
        raise NotImplementedError

    def candidates(self) -> tuple[np.ndarray, np.ndarray] | None:
        """Finite correction family searched by the oracle, or None."""
        return None

    def ebit_budget(self) -> float:
        raise NotImplementedError

    def predicted_success(self) -> float:
        return 1.0

    def parameters(self) -> dict:
        return {}

    def annotations(self) -> dict:
        return {}


@dataclass
class ProtocolReport:
    protocol: str
    parameters: dict
    target_gate: np.ndarray
    mode: str
    branches_or_trials: int
    n_inputs: int
    success_probability: float
    predicted_success: float
    success_stderr: float
    mean_fidelity_on_success: float
    min_fidelity_on_success: float
    allocated_ebits: float
    ebit_budget: float
    touched_ebits: float
    cbits_broadcast: int
    cbits_sent: int
    ebit_breakdown: dict
    interactive: bool
    pruned_mass: float
    oracle_checked: bool
    oracle_recovered_failures: int
    annotations: dict
    branch_set: BranchSet | None = field(default=None, repr=False)
    per_trial: dict[str, np.ndarray] | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        out = {}
        for k, v in self.__dict__.items():
            if k in ("branch_set", "per_trial", "target_gate"):
                continue
            out[k] = v
        return out


def as_inputs(psi, dims: Sequence[int]) -> np.ndarray:
    """Normalize a StateVector, list of them, or array into an (n, D) array."""
    d = int(np.prod(dims))
    if isinstance(psi, StateVector):
        psi = [psi]
    if isinstance(psi, (list, tuple)) and psi and isinstance(psi[0], StateVector):
        return np.array([p.amplitudes for p in psi])
    arr = np.atleast_2d(np.asarray(psi, dtype=complex))
    if arr.shape[1] != d:
        raise ProtocolValidationError(f"input length {arr.shape[1]} does not match dimension {d}")
    norms = np.linalg.norm(arr, axis=1)
    if np.max(np.abs(norms - 1)) > 1e-10:
        raise ProtocolValidationError("input states must be normalized")
    return arr


def _kron_apply(a: np.ndarray, b: np.ndarray, states: np.ndarray, da: int, db: int) -> np.ndarray:
    """(a_i ⊗ b_i) states_i for per-branch a, b."""
    t = states.reshape(-1, da, db)
    return np.einsum("nij,njk,nlk->nil", a, t, b).reshape(len(states), -1)


@dataclass
class _BatchResult:
    branch_set: BranchSet
    ledger: dict
    oracle_recovered: int


def _run_batch(protocol: Protocol, inputs: np.ndarray, mode: str, seed: int, trials: int | None,
               offset: int, max_branches: int, oracle: bool) -> _BatchResult:
    s = Session(inputs, protocol.labels, protocol.dims, protocol.owners, mode=mode, seed=seed,
                trials=trials, trial_offset=offset, max_branches=max_branches,
                interactive=protocol.interactive)
    out_a, out_b = protocol.script(s)
    raw = s.states([out_a, out_b])
    da = s.dims[s.labels.index(out_a)]
    db = s.dims[s.labels.index(out_b)]
    holder = {}

    def rule(view):
        res = protocol.resolve(view)
        holder["res"] = res
        return {ALICE: ([out_a], res.alice), BOB: ([out_b], res.bob)}

    s.broadcast_and_correct(rule)
    res: Resolution = holder["res"]
    bs = snapshot(s, [out_a, out_b])
    expected = inputs[bs.origin] @ protocol.target().T
    fid = np.abs(np.einsum("ni,ni->n", expected.conj(), bs.amplitudes))
    bs.fidelity = np.minimum(fid, 1.0)
    bs.success = np.asarray(res.success, dtype=bool)
    for k, v in res.detail.items():
        bs.notes[k] = np.asarray(v)

    recovered = 0
    if oracle:
        cands = protocol.candidates()
        if cands is not None:
            ca, cb = cands
            best = np.zeros(len(raw))
            for c in range(len(ca)):
                t = _kron_apply(np.broadcast_to(ca[c], (len(raw), da, da)),
                                np.broadcast_to(cb[c], (len(raw), db, db)), raw, da, db)
                best = np.maximum(best, np.abs(np.einsum("ni,ni->n", expected.conj(), t)))
            bad = bs.success & ((bs.fidelity < 1 - FID_TOL) | (best < 1 - FID_TOL))
            if np.any(bad):
                i = int(np.nonzero(bad)[0][0])
                raise OracleDisagreement(
                    f"{protocol.name}: branch {i} declared successful but analytic fidelity "
                    f"{bs.fidelity[i]:.12f}, oracle best {best[i]:.12f}; events {s.events(i)}")
            recovered = int(np.sum(~bs.success & (best >= 1 - FID_TOL)))
        else:
            bad = bs.success & (bs.fidelity < 1 - FID_TOL)
            if np.any(bad):
                i = int(np.nonzero(bad)[0][0])
                raise OracleDisagreement(f"{protocol.name}: branch {i} fidelity {bs.fidelity[i]:.12f}")
    led = s.ledger.as_dict()
    return _BatchResult(bs, led, recovered)


def _worker(args):
    return _run_batch(*args)


def run_protocol(protocol: Protocol, psi, mode: str = "enumerate", *, seed: int = 0,
                 trials: int | None = None, chunk: int = DEFAULT_CHUNK, workers: int | None = 1,
                 max_branches: int = 1 << 20, oracle: bool = True,
                 keep_branches: bool = True) -> ProtocolReport:
    """Execute ``protocol`` on the given inputs and summarize the outcome.

    Enumerate mode expands every branch for every input. Sample mode runs
    ``trials`` trajectories (trial t uses input t mod n) in fixed-size chunks;
    each trial draws from substream (seed, t), so the result does not depend
    on ``chunk`` or ``workers``.
    """
    inputs = as_inputs(psi, protocol.dims)
    n = len(inputs)
    if mode == "enumerate":
        results = [_run_batch(protocol, inputs, mode, seed, None, 0, max_branches, oracle)]
    elif mode == "sample":
        total = n if trials is None else int(trials)
        if total < 1:
            raise ProtocolValidationError("trials must be positive")
        jobs = [(protocol, inputs, mode, seed, min(chunk, total - o), o, max_branches, oracle)
                for o in range(0, total, chunk)]
        workers = workers or os.cpu_count() or 1
        if workers > 1 and len(jobs) > 1:
            with ProcessPoolExecutor(max_workers=workers) as ex:
                results = list(ex.map(_worker, jobs))
        else:
            results = [_run_batch(*j) for j in jobs]
    else:
        raise ProtocolValidationError(f"unknown mode {mode!r}")

    prob = np.concatenate([r.branch_set.probabilities for r in results])
    succ = np.concatenate([r.branch_set.success for r in results])
    fid = np.concatenate([r.branch_set.fidelity for r in results])
    origin = np.concatenate([r.branch_set.origin for r in results])
    led = results[0].ledger
    for r in results[1:]:
        if r.ledger["allocated_ebits"] != led["allocated_ebits"]:
            raise RuntimeError("ledger differs between batches")
    pruned = float(sum(r.branch_set.pruned_mass.sum() for r in results)) / n

    if mode == "enumerate":
        per_input = np.bincount(origin, weights=prob * succ, minlength=n)
        p_succ = float(per_input.mean())
        stderr = 0.0
        count = len(prob)
        w = prob * succ
        mean_f = float(np.sum(w * fid) / np.sum(w)) if np.sum(w) > 0 else float("nan")
    else:
        p_succ = float(succ.mean())
        count = len(succ)
        stderr = math.sqrt(max(p_succ * (1 - p_succ), 0.0) / count)
        mean_f = float(fid[succ].mean()) if succ.any() else float("nan")
    min_f = float(fid[succ].min()) if succ.any() else float("nan")

    bs = results[0].branch_set if (keep_branches and len(results) == 1) else None
    per_trial = {"index": np.arange(count), "origin": origin, "probability": prob,
                 "success": succ, "fidelity": fid}
    for key in results[0].branch_set.notes:
        if key.startswith("halt."):
            per_trial[key] = np.concatenate([r.branch_set.notes[key] for r in results])
    return ProtocolReport(
        protocol=protocol.name,
        parameters=protocol.parameters(),
        target_gate=protocol.target(),
        mode=mode,
        branches_or_trials=count,
        n_inputs=n,
        success_probability=p_succ,
        predicted_success=protocol.predicted_success(),
        success_stderr=stderr,
        mean_fidelity_on_success=mean_f,
        min_fidelity_on_success=min_f,
        allocated_ebits=led["allocated_ebits"],
        ebit_budget=protocol.ebit_budget(),
        touched_ebits=led["touched_ebits"],
        cbits_broadcast=led["cbits_broadcast"],
        cbits_sent=led["cbits_sent"],
        ebit_breakdown=led["breakdown"],
        interactive=protocol.interactive,
        pruned_mass=pruned,
        oracle_checked=oracle and protocol.candidates() is not None,
        oracle_recovered_failures=sum(r.oracle_recovered for r in results),
        annotations=protocol.annotations(),
        branch_set=bs,
        per_trial=per_trial,
    )


def enumerate_branches(protocol: Protocol, psi, max_branches: int = 1 << 20) -> BranchSet:
    """Every measurement branch of ``protocol`` on ``psi``, corrected."""
    return run_protocol(protocol, psi, "enumerate", max_branches=max_branches).branch_set


def sample_trajectory(protocol: Protocol, psi, seed: int, trial: int = 0) -> tuple[StateVector, "object"]:
    """One Born-rule trajectory drawn from substream (seed, trial)."""
    inputs = as_inputs(psi, protocol.dims)
    r = _run_batch(protocol, inputs, "sample", seed, 1, trial, 1 << 20, True)
    return r.branch_set.state(0), r.branch_set.transcript(0)


def resolve_corrections(protocol: Protocol, session: Session) -> Resolution:
    """Analytic per-branch corrections from a broadcast session's joint record."""
    if not session.broadcast_done:
        raise RuntimeError("corrections are resolved after the broadcast")
    return protocol.resolve(session.view(None))
