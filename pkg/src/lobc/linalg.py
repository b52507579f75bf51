"""Dense complex linear algebra and pure-state primitives.

States are tracked by subsystem label rather than tensor position. Every
function here is pure; the batched helpers (``contract``) carry a leading
branch axis so the protocol engine can evolve many measurement branches at
once with the same code path used for single states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

UNITARY_TOL = 1e-10
PROB_TOL = 1e-9
PRUNE_TOL = 1e-12

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = (I2, X, Y, Z)
H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
CZ = np.diag([1, 1, 1, -1]).astype(complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)
ISWAP = np.array([[1, 0, 0, 0], [0, 0, 1j, 0], [0, 1j, 0, 0], [0, 0, 0, 1]], dtype=complex)


def rz(theta: float) -> np.ndarray:
    """diag(e^{i theta/2}, e^{-i theta/2}); note the sign convention."""
    return np.diag([np.exp(0.5j * theta), np.exp(-0.5j * theta)])


def tz(theta: float) -> np.ndarray:
    """exp(-i theta Z⊗Z / 2) = R_z(-theta) ⊕ R_z(theta)."""
    return np.diag(np.exp(-0.5j * theta * np.array([1, -1, -1, 1])))


def weyl(d: int, m: int, n: int) -> np.ndarray:
    """Weyl operator X^m Z^n with X|k> = |k+1 mod d>, Z|k> = w^k |k>."""
    shift = np.roll(np.eye(d, dtype=complex), 1, axis=0)
    clock = np.diag(np.exp(2j * np.pi * np.arange(d) / d))
    return np.linalg.matrix_power(shift, m) @ np.linalg.matrix_power(clock, n)


def swap_gate(d: int) -> np.ndarray:
    """Permutation matrix exchanging two d-dimensional systems."""
    f = np.zeros((d * d, d * d), dtype=complex)
    for i in range(d):
        for j in range(d):
            f[j * d + i, i * d + j] = 1
    return f


def kron(*mats: np.ndarray) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def is_unitary(u: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    u = np.asarray(u)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        return False
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) <= tol)


def haar_random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed d x d unitary (QR of a Ginibre matrix, phase-fixed R)."""
    if d < 1:
        raise ValueError("dimension must be positive")
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diagonal(r)
    return q * (diag / np.abs(diag))


def haar_random_state(dims: Sequence[int], rng: np.random.Generator) -> np.ndarray:
    d = int(np.prod(dims))
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# States
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StateVector:
    """Normalized amplitude vector over labelled subsystems."""

    labels: tuple[str, ...]
    dims: tuple[int, ...]
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        dims = tuple(int(d) for d in self.dims)
        amps = np.array(self.amplitudes, dtype=complex).reshape(-1)
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate subsystem labels: {labels}")
        if len(labels) != len(dims):
            raise ValueError("labels and dims differ in length")
        if amps.size != int(np.prod(dims, dtype=np.int64)):
            raise ValueError(f"{amps.size} amplitudes for dims {dims}")
        norm = np.linalg.norm(amps)
        if abs(norm - 1) > UNITARY_TOL:
            raise ValueError(f"state not normalized (norm {norm:.3e})")
        amps.setflags(write=False)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "amplitudes", amps)

    @classmethod
    def basis(cls, labels: Sequence[str], dims: Sequence[int], digits: Sequence[int]) -> "StateVector":
        amps = np.zeros(int(np.prod(dims)), dtype=complex)
        amps[np.ravel_multi_index(tuple(digits), tuple(dims))] = 1
        return cls(tuple(labels), tuple(dims), amps)

    @classmethod
    def random(cls, labels: Sequence[str], dims: Sequence[int], rng: np.random.Generator) -> "StateVector":
        return cls(tuple(labels), tuple(dims), haar_random_state(dims, rng))

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def dim_of(self, label: str) -> int:
        return self.dims[self.labels.index(label)]

    def tensor(self, other: "StateVector") -> "StateVector":
        return StateVector(self.labels + other.labels, self.dims + other.dims,
                           np.kron(self.amplitudes, other.amplitudes))

    def reorder(self, labels: Sequence[str]) -> "StateVector":
        labels = tuple(labels)
        if sorted(labels) != sorted(self.labels):
            raise ValueError(f"cannot reorder {self.labels} as {labels}")
        perm = [self.labels.index(l) for l in labels]
        t = self.amplitudes.reshape(self.dims).transpose(perm)
        return StateVector(labels, tuple(self.dims[p] for p in perm), t.reshape(-1))

    def relabel(self, mapping: dict[str, str]) -> "StateVector":
        return StateVector(tuple(mapping.get(l, l) for l in self.labels), self.dims, self.amplitudes)


def bell_state(d: int = 2) -> np.ndarray:
    """|Phi+_d> = sum_k |kk> / sqrt(d) as a flat vector."""
    return np.eye(d, dtype=complex).reshape(-1) / math.sqrt(d)


# ---------------------------------------------------------------------------
# Batched contraction
# ---------------------------------------------------------------------------


def contract(amps: np.ndarray, dims: Sequence[int], targets: Sequence[int], ops: np.ndarray,
             out_dims: Sequence[int] | None = None) -> tuple[np.ndarray, list[int], int]:
    """Apply a stack of operators to the ``targets`` axes of a batch of states.

    ``amps`` has shape (B, prod(dims)). ``ops`` has shape (k, dout, din) or
    (B, k, dout, din) for branch-dependent operators. With ``out_dims=None``
    the operators act in place and the axis layout is unchanged. Otherwise the
    targets are replaced by subsystems of ``out_dims``, inserted where the
    first target sat among the untouched axes. Returns the result with shape
    (B, k, prod(new_dims)), the new dims and the insertion position.
    """
    dims = list(dims)
    targets = list(targets)
    in_place = out_dims is None
    if in_place:
        out_dims = [dims[t] for t in targets]
    out_dims = list(out_dims)
    B = amps.shape[0]
    rest = [i for i in range(len(dims)) if i not in targets]
    din = int(np.prod([dims[t] for t in targets], dtype=np.int64))
    dout = int(np.prod(out_dims, dtype=np.int64))
    if ops.shape[-1] != din or ops.shape[-2] != dout:
        raise ValueError(f"operator shape {ops.shape[-2:]} does not match ({dout}, {din})")
    R = int(np.prod([dims[i] for i in rest], dtype=np.int64))
    x = amps.reshape([B] + dims)
    if rest + targets != list(range(len(dims))):
        x = x.transpose([0] + [i + 1 for i in rest] + [t + 1 for t in targets])
    x = x.reshape(B, R, din)
    k = ops.shape[-3]
    if ops.ndim == 3:
        y = (x.reshape(B * R, din) @ ops.transpose(2, 0, 1).reshape(din, k * dout))
        y = y.reshape(B, R, k, dout).transpose(0, 2, 1, 3)
    else:
        y = np.matmul(x[:, None], ops.transpose(0, 1, 3, 2))
    rest_dims = [dims[i] for i in rest]
    nr, no = len(rest_dims), len(out_dims)
    if in_place:
        order = rest + targets
        if order != list(range(len(dims))):
            y = y.reshape([B, k] + rest_dims + out_dims)
            inv = np.argsort(order)
            y = y.transpose([0, 1] + [2 + int(i) for i in inv])
        return np.ascontiguousarray(y).reshape(B, k, -1), dims, 0
    pos = sum(1 for i in rest if i < min(targets)) if targets else 0
    if no and pos != nr:
        y = y.reshape([B, k] + rest_dims + out_dims)
        perm = [0, 1] + [2 + i for i in range(pos)] + [2 + nr + j for j in range(no)] \
            + [2 + i for i in range(pos, nr)]
        y = y.transpose(perm)
    new_dims = rest_dims[:pos] + out_dims + rest_dims[pos:]
    return np.ascontiguousarray(y).reshape(B, k, -1), new_dims, pos


# ---------------------------------------------------------------------------
# Gates and measurements on single states
# ---------------------------------------------------------------------------


def apply_gate(psi: StateVector, u: np.ndarray, targets: Sequence[str]) -> StateVector:
    targets = list(targets)
    missing = [t for t in targets if t not in psi.labels]
    if missing:
        raise ValueError(f"unknown subsystems {missing}")
    axes = [psi.labels.index(t) for t in targets]
    din = int(np.prod([psi.dims[a] for a in axes]))
    u = np.asarray(u, dtype=complex)
    if u.shape != (din, din):
        raise ValueError(f"gate of shape {u.shape} on subsystems of total dimension {din}")
    y, _, _ = contract(psi.amplitudes[None], psi.dims, axes, u[None])
    return StateVector(psi.labels, psi.dims, y[0, 0])


@dataclass(frozen=True)
class KrausSet:
    """Generalized measurement on ``targets``.

    Each operator maps the target space into the space of ``outputs``
    (label, dim) pairs; ``outputs=None`` keeps the targets in place, and an
    empty tuple consumes them entirely.
    """

    operators: np.ndarray
    targets: tuple[str, ...] = ()
    outputs: tuple[tuple[str, int], ...] | None = None

    def __post_init__(self):
        ops = np.asarray(self.operators, dtype=complex)
        if ops.ndim != 3:
            raise ValueError("operators must be a (k, dout, din) stack")
        gram = np.einsum("koi,koj->ij", ops.conj(), ops)
        if np.max(np.abs(gram - np.eye(ops.shape[2]))) > PROB_TOL:
            raise ValueError("Kraus operators are not complete")
        object.__setattr__(self, "operators", ops)
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.outputs is not None:
            object.__setattr__(self, "outputs", tuple((l, int(d)) for l, d in self.outputs))

    def __len__(self) -> int:
        return self.operators.shape[0]

    def on(self, *targets: str, outputs=None) -> "KrausSet":
        return KrausSet(self.operators, targets, outputs if outputs is not None else self.outputs)


def basis_measurement(d: int = 2) -> np.ndarray:
    """Operators <k| for a destructive computational-basis measurement."""
    return np.eye(d, dtype=complex)[:, None, :]


class Outcome(NamedTuple):
    index: int
    probability: float
    state: StateVector | None


def measure(psi: StateVector, kraus: KrausSet, mode: str = "enumerate",
            rng: np.random.Generator | None = None) -> list[Outcome] | Outcome:
    """Measure ``psi`` with ``kraus``.

    ``enumerate`` returns every outcome with probability >= 1e-12 (the pruned
    mass is attached as a final ``Outcome(-1, mass, None)`` when nonzero);
    ``sample`` draws one outcome with the Born rule.
    """
    axes = [psi.labels.index(t) for t in kraus.targets]
    rest_labels = [l for l in psi.labels if l not in kraus.targets]
    if kraus.outputs is None:
        out = [(t, psi.dims[a]) for t, a in zip(kraus.targets, axes)]
    else:
        out = list(kraus.outputs)
    y, new_dims, pos = contract(psi.amplitudes[None], psi.dims, axes, kraus.operators,
                                [d for _, d in out])
    labels = tuple(rest_labels[:pos] + [l for l, _ in out] + rest_labels[pos:])
    probs = np.sum(np.abs(y[0]) ** 2, axis=1)

    def post(i):
        return StateVector(labels, tuple(new_dims), y[0, i] / math.sqrt(probs[i]))

    if mode == "sample":
        if rng is None:
            raise ValueError("sampling needs an rng")
        i = int(rng.choice(len(probs), p=probs / probs.sum()))
        return Outcome(i, float(probs[i]), post(i))
    if mode != "enumerate":
        raise ValueError(f"unknown mode {mode!r}")
    results = [Outcome(i, float(p), post(i)) for i, p in enumerate(probs) if p >= PRUNE_TOL]
    pruned = float(sum(p for p in probs if p < PRUNE_TOL))
    if pruned > 0:
        results.append(Outcome(-1, pruned, None))
    return results


def fidelity_up_to_phase(a: StateVector, b: StateVector) -> float:
    """|<a|b>| after aligning b's subsystem order with a's."""
    if b.labels != a.labels:
        b = b.reorder(a.labels)
    if b.dims != a.dims:
        raise ValueError("subsystem dimensions differ")
    return float(min(1.0, abs(np.vdot(a.amplitudes, b.amplitudes))))


# ---------------------------------------------------------------------------
# Schmidt decomposition
# ---------------------------------------------------------------------------


class Schmidt(NamedTuple):
    coefficients: np.ndarray
    left: np.ndarray   # columns are left Schmidt vectors
    right: np.ndarray  # columns are right Schmidt vectors


def schmidt(psi: StateVector, cut: Sequence[str]) -> Schmidt:
    """Schmidt decomposition across ``cut`` | rest, coefficients descending."""
    cut = list(cut)
    other = [l for l in psi.labels if l not in cut]
    if not cut or not other or any(c not in psi.labels for c in cut):
        raise ValueError(f"invalid bipartition {cut} of {psi.labels}")
    t = psi.reorder(cut + other)
    dl = int(np.prod(t.dims[:len(cut)]))
    u, s, vh = np.linalg.svd(t.amplitudes.reshape(dl, -1), full_matrices=False)
    return Schmidt(s, u, vh.T)


def factor_product(w: np.ndarray, da: int, db: int) -> tuple[np.ndarray, np.ndarray, float]:
    """Best A ⊗ B approximation of ``w`` via rank-1 realignment.

    Returns (A, B, residual) with A scaled to be unitary whenever ``w`` is a
    product of unitaries.
    """
    r = w.reshape(da, db, da, db).transpose(0, 2, 1, 3).reshape(da * da, db * db)
    u, s, vh = np.linalg.svd(r)
    a = (u[:, 0] * math.sqrt(s[0])).reshape(da, da)
    b = (vh[0] * math.sqrt(s[0])).reshape(db, db)
    scale = math.sqrt(np.real(np.trace(a.conj().T @ a)) / da)
    if scale > 0:
        a, b = a / scale, b * scale
    return a, b, float(np.max(np.abs(np.kron(a, b) - w)))
