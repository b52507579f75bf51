"""Two-party protocol execution engine.

A :class:`Session` holds every live measurement branch along a leading batch
axis. In ``enumerate`` mode each measurement fans the batch out over its
outcomes; in ``sample`` mode every row is an independent Monte Carlo trial
that draws its outcomes from a per-trial random stream. Both modes run the
same protocol script, so a script written once is verified exhaustively and
sampled at scale.

Locality is enforced through :class:`RecordView`: branch-dependent operations
receive a view bound to the acting party, and reading the other party's
outcomes before the broadcast raises :class:`LocalityError`.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

from .linalg import PAULIS, PRUNE_TOL, PROB_TOL, StateVector, bell_state, contract, weyl

ALICE = "alice"
BOB = "bob"
PARTIES = (ALICE, BOB)

UNIFORM_BLOCK = 64


class LocalityError(RuntimeError):
    """A party tried to condition on the other party's private record."""


class OwnershipError(ValueError):
    """A party acted on a subsystem it does not hold."""


class BranchOverflow(RuntimeError):
    """Enumeration exceeded the configured branch budget."""


# ---------------------------------------------------------------------------
# Bookkeeping types
# ---------------------------------------------------------------------------


@dataclass
class EbitLedger:
    """Entanglement and communication accounting, in ebits and bits."""

    allocated: float = 0.0
    touched: float = 0.0
    cbits_broadcast: int = 0
    cbits_sent: int = 0
    breakdown: Counter = field(default_factory=Counter)
    allocated_by_dim: Counter = field(default_factory=Counter)

    def as_dict(self) -> dict:
        return {
            "allocated_ebits": self.allocated,
            "touched_ebits": self.touched,
            "cbits_broadcast": self.cbits_broadcast,
            "cbits_sent": self.cbits_sent,
            "breakdown": dict(self.breakdown),
        }


class Event(NamedTuple):
    party: str
    key: str
    outcome: int
    probability: float


@dataclass
class Transcript:
    events: list[Event]
    notes: dict[str, int]
    success: bool | None = None
    final_fidelity: float | None = None

    @property
    def probability(self) -> float:
        return float(np.prod([e.probability for e in self.events])) if self.events else 1.0


@dataclass
class _Record:
    party: str
    outcomes: np.ndarray
    probs: np.ndarray
    n_outcomes: int

    @property
    def bits(self) -> int:
        return math.ceil(math.log2(self.n_outcomes)) if self.n_outcomes > 1 else 0


class RecordView:
    """Read access to measurement records on behalf of one party."""

    def __init__(self, session: "Session", party: str | None):
        self._s = session
        self.party = party

    def _check(self, key: str, owner: str):
        if self.party is None or self._s.broadcast_done or owner == self.party:
            return
        if key in self._s._sent:
            return
        raise LocalityError(f"{self.party} cannot read {owner}'s record {key!r} before the broadcast")

    def __getitem__(self, key: str) -> np.ndarray:
        if key in self._s._records:
            rec = self._s._records[key]
            self._check(key, rec.party)
            return rec.outcomes
        if key in self._s._notes:
            owner, values = self._s._notes[key]
            self._check(key, owner)
            return values
        raise KeyError(key)

    def __contains__(self, key: str) -> bool:
        return key in self._s._records or key in self._s._notes

    def get(self, key: str, default: int = 0) -> np.ndarray:
        if key in self:
            return self[key]
        return np.full(self._s.batch, default, dtype=np.int64)

    @property
    def batch(self) -> int:
        return self._s.batch


# ---------------------------------------------------------------------------
# Random streams
# ---------------------------------------------------------------------------


class TrialStreams:
    """Per-trial uniform streams, substream(seed, trial) independent of batching."""

    def __init__(self, seed: int, trial_ids: np.ndarray):
        self.seed = int(seed)
        self.trial_ids = np.asarray(trial_ids, dtype=np.int64)
        self._blocks: dict[int, np.ndarray] = {}
        self._cursor = 0

    def _block(self, b: int) -> np.ndarray:
        if b not in self._blocks:
            self._blocks[b] = np.stack([
                np.random.default_rng([self.seed, int(t), b]).random(UNIFORM_BLOCK)
                for t in self.trial_ids
            ]) if len(self.trial_ids) else np.zeros((0, UNIFORM_BLOCK))
        return self._blocks[b]

    def next(self) -> np.ndarray:
        b, i = divmod(self._cursor, UNIFORM_BLOCK)
        self._cursor += 1
        return self._block(b)[:, i]


# ---------------------------------------------------------------------------
# Measurement bases
# ---------------------------------------------------------------------------


def error_basis(d: int, rotation: np.ndarray | None = None) -> np.ndarray:
    """Teleportation error operators E_j, j = 0..d²-1.

    Paulis I, X, Y, Z (optionally conjugated by ``rotation``) for qubits,
    Weyl operators X^m Z^n with j = m·d + n otherwise.
    """
    if d == 2:
        ops = np.array(PAULIS)
        if rotation is not None:
            r = np.asarray(rotation, dtype=complex)
            ops = np.einsum("ij,kjl,ml->kim", r, ops, r.conj())
        return ops
    if rotation is not None:
        raise ValueError("basis rotation is only defined for qubits")
    return np.array([weyl(d, m, n) for m in range(d) for n in range(d)])


def teleport_kraus(d: int, rotation: np.ndarray | None = None) -> np.ndarray:
    """Destructive generalized Bell measurement <b_j| with b_j = (E_j†⊗I)|Φ+>."""
    phi = bell_state(d)
    errs = error_basis(d, rotation)
    rows = [(np.kron(e, np.eye(d)).T @ phi.conj()) for e in errs]
    return np.array(rows)[:, None, :]


def product_kraus(*dims: int) -> np.ndarray:
    """Destructive computational-basis measurement on several subsystems."""
    n = int(np.prod(dims))
    return np.eye(n, dtype=complex)[:, None, :]


# ---------------------------------------------------------------------------
# Session
# ---------------------------------------------------------------------------


Chooser = Callable[[RecordView], np.ndarray]


class Session:
    """Execution context for one batch of branches or trials.

    Parameters
    ----------
    inputs : array (n, D)
        Input amplitude vectors over ``labels``.
    mode : "enumerate" or "sample"
    trials : number of Monte Carlo trials (sample mode); trial ``t`` uses input
        ``t mod n``.
    """

    def __init__(self, inputs, labels: Sequence[str], dims: Sequence[int], owners: dict[str, str],
                 mode: str = "enumerate", seed: int = 0, trials: int | None = None,
                 trial_offset: int = 0, max_branches: int = 1 << 20, interactive: bool = False):
        inputs = np.atleast_2d(np.asarray(inputs, dtype=complex))
        if mode not in ("enumerate", "sample"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.labels = list(labels)
        self.dims = [int(d) for d in dims]
        if inputs.shape[1] != int(np.prod(self.dims)):
            raise ValueError("input length does not match subsystem dims")
        self.owners = dict(owners)
        for l in self.labels:
            if self.owners.get(l) not in PARTIES:
                raise OwnershipError(f"subsystem {l!r} has no owner")
        self.n_inputs = inputs.shape[0]
        if mode == "sample":
            n = self.n_inputs if trials is None else int(trials)
            ids = trial_offset + np.arange(n)
            self.origin = ids % self.n_inputs
            self.streams = TrialStreams(seed, ids)
        else:
            self.origin = np.arange(self.n_inputs)
            self.streams = None
        self.amps = inputs[self.origin].copy()
        self.probs = np.ones(len(self.origin))
        self.max_branches = max_branches
        self.interactive = interactive
        self.broadcast_done = False
        self.ledger = EbitLedger()
        self.pruned_mass = np.zeros(self.n_inputs)
        self._records: dict[str, _Record] = {}
        self._notes: dict[str, tuple[str, np.ndarray]] = {}
        self._sent: set[str] = set()
        self._ebits: dict[str, tuple[str, float]] = {}
        self._touched: set[str] = set()

    # -- basic properties ---------------------------------------------------

    @property
    def batch(self) -> int:
        return self.amps.shape[0]

    def view(self, party: str | None) -> RecordView:
        return RecordView(self, party)

    def _axes(self, party: str | None, targets: Sequence[str]) -> list[int]:
        axes = []
        for t in targets:
            if t not in self.labels:
                raise KeyError(f"unknown subsystem {t!r}")
            if party is not None and self.owners[t] != party:
                raise OwnershipError(f"{party} does not hold {t!r}")
            axes.append(self.labels.index(t))
        return axes

    def _resolve_choice(self, party: str, choose) -> np.ndarray | None:
        if choose is None:
            return None
        if callable(choose):
            choose = choose(self.view(party))
        c = np.asarray(choose, dtype=np.int64)
        if c.shape == ():
            c = np.full(self.batch, int(c))
        if c.shape != (self.batch,):
            raise ValueError("choice must give one index per branch")
        return c

    def _apply(self, axes: list[int], ops: np.ndarray, choice: np.ndarray | None,
               out_dims: list[int] | None = None) -> tuple[np.ndarray, list[int], int]:
        """Contract ``ops[choice[b]]`` (each a (k, dout, din) stack) into branch b."""
        if choice is None:
            return contract(self.amps, self.dims, axes, ops, out_dims)
        values = np.unique(choice)
        if len(values) == 1:
            return contract(self.amps, self.dims, axes, ops[values[0]], out_dims)
        out = None
        for v in values:
            idx = np.nonzero(choice == v)[0]
            y, new_dims, pos = contract(self.amps[idx], self.dims, axes, ops[v], out_dims)
            if out is None:
                out = np.empty((self.batch,) + y.shape[1:], dtype=complex)
            out[idx] = y
        return out, new_dims, pos

    def _reindex(self, parent: np.ndarray):
        self.origin = self.origin[parent]
        for rec in self._records.values():
            rec.outcomes = rec.outcomes[parent]
            rec.probs = rec.probs[parent]
        for key, (owner, vals) in list(self._notes.items()):
            self._notes[key] = (owner, vals[parent])
        if self.streams is not None and len(parent) != len(self.streams.trial_ids):
            raise RuntimeError("sample-mode batches cannot change size")

    # -- registers and entanglement -----------------------------------------

    def add_register(self, label: str, dim: int, party: str, state: np.ndarray | None = None):
        """Append a fresh local register, |0> unless ``state`` is given."""
        if label in self.labels:
            raise ValueError(f"label collision: {label!r}")
        if party not in PARTIES:
            raise OwnershipError(f"unknown party {party!r}")
        v = np.zeros(dim, dtype=complex)
        if state is None:
            v[0] = 1
        else:
            v = np.asarray(state, dtype=complex).reshape(dim)
        self.amps = (self.amps[:, :, None] * v[None, None, :]).reshape(self.batch, -1)
        self.labels.append(label)
        self.dims.append(int(dim))
        self.owners[label] = party

    def allocate_ebit(self, labels: tuple[str, str], d: int = 2, tag: str | None = None,
                      owners: tuple[str, str] = (ALICE, BOB)):
        """Share |Φ+_d> between the two parties; charges log2(d) ebits."""
        a, b = labels
        if a in self.labels or b in self.labels or a == b:
            raise ValueError(f"label collision: {labels}")
        if set(owners) != set(PARTIES):
            raise OwnershipError("an ebit must be split between the two parties")
        phi = bell_state(d)
        self.amps = (self.amps[:, :, None] * phi[None, None, :]).reshape(self.batch, -1)
        self.labels += [a, b]
        self.dims += [d, d]
        self.owners[a], self.owners[b] = owners
        cost = math.log2(d)
        self._ebits[a] = self._ebits[b] = (f"{a}|{b}", cost)
        self.ledger.allocated += cost
        self.ledger.allocated_by_dim[d] += 1
        self.ledger.breakdown[tag or "untagged"] += cost

    # -- local operations ---------------------------------------------------

    def local_op(self, party: str, targets: Sequence[str], ops, choose=None):
        """Apply a unitary, or ``ops[choose(view)]`` per branch, to ``targets``."""
        axes = self._axes(party, targets)
        ops = np.asarray(ops, dtype=complex)
        choice = self._resolve_choice(party, choose)
        if choice is None:
            if ops.ndim != 2:
                raise ValueError("a stack of operators needs a choice")
            stack = ops[None]
        else:
            if ops.ndim == 2:
                raise ValueError("choice given for a single operator")
            stack = ops[:, None]
        y, _, _ = self._apply(axes, stack, choice)
        self.amps = y[:, 0]

    def note(self, party: str, key: str, values):
        """Store a per-branch integer known to ``party`` (free of charge)."""
        v = np.asarray(values, dtype=np.int64)
        if v.shape == ():
            v = np.full(self.batch, int(v))
        self._notes[key] = (party, v.copy())

    def measure(self, party: str, targets: Sequence[str], kraus, key: str, choose=None,
                outputs: Sequence[tuple[str, int]] = ()) -> np.ndarray:
        """Generalized measurement by ``party`` on its own subsystems.

        ``kraus`` is a (k, dout, din) stack, or a list of such stacks selected
        per branch by ``choose``. Targets are consumed; ``outputs`` names the
        subsystems the operators map into (empty for destructive measurement).
        """
        if key in self._records or key in self._notes:
            raise ValueError(f"duplicate record key {key!r}")
        axes = self._axes(party, targets)
        outputs = [(l, int(d)) for l, d in outputs]
        for l, _ in outputs:
            if l in self.labels and l not in targets:
                raise ValueError(f"label collision: {l!r}")
        if isinstance(kraus, (list, tuple)):
            stack = np.array([np.asarray(k, dtype=complex) for k in kraus])
        else:
            stack = np.asarray(kraus, dtype=complex)[None]
        gram = np.einsum("nkoi,nkoj->nij", stack.conj(), stack)
        if np.max(np.abs(gram - np.eye(stack.shape[-1]))) > PROB_TOL:
            raise ValueError("Kraus operators are not complete")
        choice = self._resolve_choice(party, choose)
        if choice is None:
            if stack.shape[0] != 1:
                raise ValueError("a list of measurements needs a choice")
            choice_for_apply = None
            ops = stack[0]
        else:
            choice_for_apply = choice
            ops = stack
        y, new_dims, pos = self._apply(axes, ops, choice_for_apply, [d for _, d in outputs])
        k = y.shape[1]
        p = np.sum(np.abs(y) ** 2, axis=2)
        rest = [l for i, l in enumerate(self.labels) if i not in axes]
        new_labels = rest[:pos] + [l for l, _ in outputs] + rest[pos:]

        if self.mode == "enumerate":
            keep = p >= PRUNE_TOL
            np.add.at(self.pruned_mass, self.origin, np.sum(np.where(keep, 0.0, p), axis=1) * self.probs)
            parent, outcome = np.nonzero(keep)
            if len(parent) > self.max_branches:
                raise BranchOverflow(f"{len(parent)} branches exceed the limit {self.max_branches}")
            pk = p[parent, outcome]
            self.amps = y[parent, outcome] / np.sqrt(pk)[:, None]
            self.probs = self.probs[parent] * pk
            self._reindex(parent)
        else:
            u = self.streams.next()
            cum = np.cumsum(p, axis=1)
            outcome = np.sum(cum < (u * cum[:, -1])[:, None], axis=1)
            outcome = np.minimum(outcome, k - 1)
            idx = np.arange(self.batch)
            pk = p[idx, outcome]
            self.amps = y[idx, outcome] / np.sqrt(pk)[:, None]
            self.probs = self.probs * pk

        for l in (self.labels[a] for a in axes):
            if l not in new_labels:
                del self.owners[l]
                ebit = self._ebits.pop(l, None)
                if ebit is not None and ebit[0] not in self._touched:
                    self._touched.add(ebit[0])
                    self.ledger.touched += ebit[1]
        for l, _ in outputs:
            self.owners[l] = party
        self.labels = new_labels
        self.dims = list(new_dims)
        self._records[key] = _Record(party, outcome.astype(np.int64), pk, k)
        return outcome

    def teleport_star(self, sender: str, source: str, pair: tuple[str, str], key: str,
                      rotation: np.ndarray | None = None) -> np.ndarray:
        """Teleportation without message or correction.

        The receiver's half of ``pair`` ends up holding E_j·source, where j is
        the outcome recorded privately for ``sender``.
        """
        mine, theirs = pair
        if self.owners.get(theirs) == sender:
            raise OwnershipError("the receiving half must belong to the other party")
        d = self.dims[self.labels.index(source)]
        if self.dims[self.labels.index(mine)] != d:
            raise ValueError("source and ebit dimensions differ")
        return self.measure(sender, [source, mine], teleport_kraus(d, rotation), key)

    def send(self, sender: str, key: str):
        """Interactive message: reveals ``key`` to the other party immediately."""
        if not self.interactive:
            raise LocalityError("messages are only allowed in interactive sessions")
        rec = self._records[key]
        if rec.party != sender:
            raise LocalityError(f"{sender} cannot send {rec.party}'s record")
        self._sent.add(key)
        self.ledger.cbits_sent += rec.bits

    # -- broadcast ----------------------------------------------------------

    def broadcast(self) -> RecordView:
        if self.broadcast_done:
            raise RuntimeError("broadcast happens once")
        self.broadcast_done = True
        self.ledger.cbits_broadcast += sum(r.bits for k, r in self._records.items() if k not in self._sent)
        return self.view(None)

    def broadcast_and_correct(self, rule: Callable[[RecordView], dict]) -> RecordView:
        """Broadcast every record, then let each party apply its correction.

        ``rule`` maps the joint record to ``{party: (targets, ops)}`` where
        ``ops`` holds one local unitary per branch.
        """
        view = self.broadcast()
        for party, (targets, ops) in rule(view).items():
            axes = self._axes(party, targets)
            ops = np.asarray(ops, dtype=complex)
            if ops.ndim == 2:
                ops = np.broadcast_to(ops, (self.batch,) + ops.shape)
            y, _, _ = contract(self.amps, self.dims, axes, ops[:, None])
            self.amps = y[:, 0]
        return view

    # -- results ------------------------------------------------------------

    def states(self, labels: Sequence[str]) -> np.ndarray:
        """Amplitudes reordered to ``labels`` (which must be every live subsystem)."""
        labels = list(labels)
        if sorted(labels) != sorted(self.labels):
            raise ValueError(f"live subsystems {self.labels} differ from {labels}")
        perm = [self.labels.index(l) for l in labels]
        t = self.amps.reshape([self.batch] + self.dims)
        return t.transpose([0] + [p + 1 for p in perm]).reshape(self.batch, -1)

    def events(self, i: int) -> list[Event]:
        return [Event(r.party, k, int(r.outcomes[i]), float(r.probs[i])) for k, r in self._records.items()]

    def record_table(self) -> dict[str, np.ndarray]:
        return {k: r.outcomes for k, r in self._records.items()}

    def note_table(self) -> dict[str, np.ndarray]:
        return {k: v for k, (_, v) in self._notes.items()}


# ---------------------------------------------------------------------------
# Branch sets
# ---------------------------------------------------------------------------


class Branch(NamedTuple):
    probability: float
    state: StateVector
    transcript: Transcript


@dataclass
class BranchSet:
    """Final branches of a run with their probabilities and transcripts.

    Probabilities are conditional on the input indexed by ``origin``; for a
    single input they sum to one.
    """

    probabilities: np.ndarray
    amplitudes: np.ndarray
    labels: tuple[str, ...]
    dims: tuple[int, ...]
    origin: np.ndarray
    records: dict[str, tuple[str, np.ndarray, np.ndarray]]
    notes: dict[str, np.ndarray]
    pruned_mass: np.ndarray
    success: np.ndarray | None = None
    fidelity: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.probabilities)

    def total_probability(self, origin: int | None = None) -> float:
        if origin is None:
            return float(self.probabilities.sum())
        return float(self.probabilities[self.origin == origin].sum())

    def transcript(self, i: int) -> Transcript:
        events = [Event(party, k, int(out[i]), float(pr[i])) for k, (party, out, pr) in self.records.items()]
        notes = {k: int(v[i]) for k, v in self.notes.items()}
        return Transcript(
            events, notes,
            None if self.success is None else bool(self.success[i]),
            None if self.fidelity is None else float(self.fidelity[i]),
        )

    def state(self, i: int) -> StateVector:
        return StateVector(self.labels, self.dims, self.amplitudes[i])

    def __iter__(self) -> Iterator[Branch]:
        for i in range(len(self)):
            yield Branch(float(self.probabilities[i]), self.state(i), self.transcript(i))


def snapshot(session: Session, labels: Sequence[str]) -> BranchSet:
    return BranchSet(
        probabilities=session.probs.copy(),
        amplitudes=session.states(labels),
        labels=tuple(labels),
        dims=tuple(session.dims[session.labels.index(l)] for l in labels),
        origin=session.origin.copy(),
        records={k: (r.party, r.outcomes, r.probs) for k, r in session._records.items()},
        notes=session.note_table(),
        pruned_mass=session.pruned_mass.copy(),
    )
