"""Probabilistic LOBC protocol for an arbitrary two-qubit gate.

The core implements M(α,β,γ) = CNOT·(H⊗I)·T_z(β)·(R_z(α)⊗R_z(γ))·(H⊗I)·CNOT
in five steps:

1. one-ebit CNOT without communication, then H on A;
2. R_z(γ) on B by angle doubling, with Alice halting once the rotation is right;
3. the same for R_z(α) on A with the roles swapped;
4. T_z(β) by angle doubling on both qubits, with Alice halting;
5. CNOT·(H⊗I) applied by Alice, who then teleports B back to Bob.

Every branch executes the same sequence of operations so that all branches
share one subsystem layout. Branch-dependent behavior (whether a party has
halted, which basis to measure in) is expressed through per-branch operator
choices that read only the acting party's own record.

Pauli frames are tracked as index 0..3 for I, X, Y, Z. A halter that has
stopped keeps its qubit in a ``hold`` register; idle ebit halves are measured
in the computational basis so that the simulated state stays pure and small.
"""

from __future__ import annotations

import math

import numpy as np

from ..engine import ALICE, BOB, Session, product_kraus, teleport_kraus
from ..linalg import CNOT, H, I2, PAULIS, SWAP, X, is_unitary, rz, tz
from ..magic import canonical_decompose, m_gate
from .base import Protocol, ProtocolValidationError, Resolution
from .bounds import ebit_budget, predicted_success, step_budgets
from .chermitian import alice_kraus, bob_kraus

PAULI_STACK = np.array(PAULIS)
ANGLE_TOL = 1e-9


def xbit(p):
    return ((p == 1) | (p == 2)).astype(np.int64)


def zbit(p):
    return ((p == 2) | (p == 3)).astype(np.int64)


def from_bits(x, z):
    """Pauli index with the given x and z bits."""
    return np.choose(2 * x + z, [0, 3, 1, 2])


def pmul(p, q):
    """Index of σ_p σ_q up to phase."""
    return from_bits(xbit(p) ^ xbit(q), zbit(p) ^ zbit(q))


def residual_power(theta: float, rounds: int) -> int | None:
    """Pauli exponent w with exp(-i·2^(N-1)·θ·Z) ∝ Z^w, or None if not Pauli."""
    phi = (2 ** (rounds - 1) * theta) % math.pi
    if min(phi, math.pi - phi) <= ANGLE_TOL:
        return 0
    if abs(phi - math.pi / 2) <= ANGLE_TOL:
        return 1
    return None


BELL = teleport_kraus(2)
ZZ_BASIS = product_kraus(2, 2)
Z_BASIS = product_kraus(2)
SWAP_CHOICE = np.array([np.eye(4), SWAP], dtype=complex)


class U2(Protocol):
    """Parameters are either M's angles (α, β, γ) or a full gate ``u``.

    For a full gate with canonical form phase·(R1⊗S1)Ω(a,b,c)(R2⊗S2), the
    core runs M(2a, 2b, 2c) = Ω(a,b,c); R2, S2 are applied locally before it
    and R1, S1 are folded into the final corrections.
    """

    name = "u2"

    def __init__(self, rounds: int, angles: tuple[float, float, float] | None = None,
                 u: np.ndarray | None = None, gate_name: str | None = None):
        if int(rounds) != rounds or rounds < 1:
            raise ProtocolValidationError("rounds must be a positive integer")
        self.n = int(rounds)
        self.gate_name = gate_name
        if (angles is None) == (u is None):
            raise ProtocolValidationError("give exactly one of angles or u")
        if u is not None:
            u = np.asarray(u, dtype=complex)
            if u.shape != (4, 4) or not is_unitary(u):
                raise ProtocolValidationError("u must be a two-qubit unitary")
            form = canonical_decompose(u)
            self.angles = tuple(2 * x for x in form.angles)
            self.pre = form.local_pre
            self.post = form.local_post
            self.u = u
        else:
            self.angles = tuple(float(x) for x in angles)
            self.pre = (I2, I2)
            self.post = (I2, I2)
            self.u = None

    # -- protocol interface -------------------------------------------------

    def target(self) -> np.ndarray:
        return self.u if self.u is not None else m_gate(*self.angles)

    def ebit_budget(self) -> float:
        return float(ebit_budget(self.n))

    def predicted_success(self) -> float:
        return predicted_success(self.n)

    def parameters(self) -> dict:
        p = {"rounds": self.n, "angles": list(self.angles)}
        if self.gate_name:
            p["gate"] = self.gate_name
        return p

    def annotations(self) -> dict:
        return {"step_budgets": step_budgets(self.n)}

    def candidates(self):
        r1, s1 = self.post
        ca = np.array([r1 @ PAULIS[i] for i in range(4) for j in range(4)])
        cb = np.array([s1 @ PAULIS[j] for i in range(4) for j in range(4)])
        return ca, cb

    # -- script -------------------------------------------------------------

    def script(self, s: Session) -> tuple[str, str]:
        alpha, beta, gamma = self.angles
        s.local_op(ALICE, ["A"], self.pre[0])
        s.local_op(BOB, ["B"], self.pre[1])
        self._step1(s)
        b = self._rotation_step(s, "s2", BOB, ALICE, "B", gamma, "s1.a")
        a = self._rotation_step(s, "s3", ALICE, BOB, "A", alpha, "s1.b")
        hold_a, hold_b = self._step4(s, a, b, beta)
        s.local_op(ALICE, [hold_a, hold_b], CNOT @ np.kron(H, I2))
        s.allocate_ebit(("s5.a", "s5.b"), tag="s5")
        s.teleport_star(ALICE, hold_b, ("s5.a", "s5.b"), "s5.t")
        return hold_a, "s5.b"

    def _step1(self, s: Session):
        p = np.diag([0, 1]).astype(complex)
        s.allocate_ebit(("s1.a'", "s1.b'"), tag="s1")
        s.measure(ALICE, ["A", "s1.a'"], alice_kraus(p), "s1.a", outputs=[("A", 2)])
        s.measure(BOB, ["B", "s1.b'"], bob_kraus(X), "s1.b", outputs=[("B", 2)])
        s.local_op(ALICE, ["A"], H)

    def _rotation_step(self, s: Session, tag: str, rot: str, halter: str, data: str,
                       theta: float, init_key: str) -> str:
        """Implement R_z(θ) on ``data`` held by ``rot``; returns the new data label."""
        n = self.n
        hold = f"{tag}.hold"
        s.add_register(hold, 2, halter)
        s.note(halter, f"{tag}.K", 0)
        rot_keys = []
        for r in range(1, n + 1):
            mag = 2 ** (r - 1) * theta
            keys = list(rot_keys)
            s.local_op(rot, [data], np.array([rz(mag), rz(-mag)]),
                       choose=lambda v, keys=keys: _xparity(v, keys))
            x, y = f"{tag}.e{2 * r - 1}.{rot[0]}", f"{tag}.e{2 * r - 1}.{halter[0]}"
            s.allocate_ebit((x, y) if rot == ALICE else (y, x), tag=tag)
            key = f"{tag}.r{r}"
            s.teleport_star(rot, data, (x, y), key)
            rot_keys.append(key)
            arrived = y

            prev_key = init_key if r == 1 else f"{tag}.h{r - 1}"
            hv = s.view(halter)
            k_old = hv[f"{tag}.K"].copy()
            # round 1: the step-1 error X^bit has Pauli index equal to the bit
            known = hv[prev_key]
            active = k_old == 0
            s.local_op(halter, [arrived], PAULI_STACK, choose=np.where(active, known, 0))
            newly = active & ((known == 0) | (known == 3))
            k_new = np.where(newly, r, k_old)
            s.note(halter, f"{tag}.K", k_new)
            do_swap = newly | (active & (r == n))
            s.local_op(halter, [arrived, hold], SWAP_CHOICE, choose=do_swap.astype(np.int64))

            if r < n:
                g, d_new = f"{tag}.e{2 * r}.{halter[0]}", f"{tag}.e{2 * r}.{rot[0]}"
                s.allocate_ebit((g, d_new) if halter == ALICE else (d_new, g), tag=tag)
                hkey = f"{tag}.h{r}"
                s.measure(halter, [arrived, g], [BELL, ZZ_BASIS], hkey,
                          choose=(k_new > 0).astype(np.int64))
                arrived_bit = s.view(halter)[hkey] // 2
                data = d_new
            else:
                pkey = f"{tag}.p"
                s.measure(halter, [arrived], Z_BASIS, pkey)
                arrived_bit = s.view(halter)[pkey]
            if r >= 2:
                prev_g = s.view(halter)[f"{tag}.h{r - 1}"] % 2
                flip = (k_old > 0) & (arrived_bit != prev_g)
                s.local_op(halter, [hold], np.array([I2, X]), choose=flip.astype(np.int64))

        out_h, out_r = f"{tag}.out.{halter[0]}", f"{tag}.out.{rot[0]}"
        s.allocate_ebit((out_h, out_r) if halter == ALICE else (out_r, out_h), tag=tag)
        s.teleport_star(halter, hold, (out_h, out_r), f"{tag}.out")
        s.local_op(rot, [out_r], PAULI_STACK, choose=lambda v: _xor(v, rot_keys))
        return out_r

    def _step4(self, s: Session, data_a: str, data_b: str, beta: float) -> tuple[str, str]:
        n = self.n
        hold_a, hold_b = "s4.holdA", "s4.holdB"
        s.add_register(hold_a, 2, ALICE)
        s.add_register(hold_b, 2, ALICE)
        s.note(ALICE, "s4.K", 0)
        s.allocate_ebit(("s4.e0.a", "s4.e0.b"), tag="s4")
        s.teleport_star(ALICE, data_a, ("s4.e0.a", "s4.e0.b"), "s4.t1")
        b_a, b_b = "s4.e0.b", data_b
        for r in range(1, n + 1):
            if r == 1:
                s.local_op(BOB, [b_a], PAULI_STACK, choose=lambda v: v["s3.out"])
            else:
                s.local_op(BOB, [b_a], PAULI_STACK, choose=lambda v, r=r: v[f"s4.bA{r - 1}"])
                s.local_op(BOB, [b_b], PAULI_STACK, choose=lambda v, r=r: v[f"s4.bB{r - 1}"])
            s.local_op(BOB, [b_a, b_b], tz(2 ** (r - 1) * beta))
            xa, xb = f"s4.f{r}A.a", f"s4.f{r}B.a"
            s.allocate_ebit((xa, f"s4.f{r}A.b"), tag="s4")
            s.teleport_star(BOB, b_a, (f"s4.f{r}A.b", xa), f"s4.bA{r}")
            s.allocate_ebit((xb, f"s4.f{r}B.b"), tag="s4")
            s.teleport_star(BOB, b_b, (f"s4.f{r}B.b", xb), f"s4.bB{r}")

            av = s.view(ALICE)
            k_old = av["s4.K"].copy()
            active = k_old == 0
            if r == 1:
                pa, pb = av["s4.t1"], av["s2.out"]
            else:
                pa, pb = av[f"s4.aA{r}"], av[f"s4.aB{r}"]
            s.local_op(ALICE, [xa], PAULI_STACK, choose=np.where(active, pa, 0))
            s.local_op(ALICE, [xb], PAULI_STACK, choose=np.where(active, pb, 0))
            newly = active & ((xbit(pa) ^ xbit(pb)) == 0)
            k_new = np.where(newly, r, k_old)
            s.note(ALICE, "s4.K", k_new)
            do_swap = (newly | (active & (r == n))).astype(np.int64)
            s.local_op(ALICE, [xa, hold_a], SWAP_CHOICE, choose=do_swap)
            s.local_op(ALICE, [xb, hold_b], SWAP_CHOICE, choose=do_swap)

            halted = (k_new > 0).astype(np.int64)
            if r < n:
                nxt = []
                for side, x in (("A", xa), ("B", xb)):
                    ya, yb = f"s4.g{r}{side}.a", f"s4.g{r}{side}.b"
                    s.allocate_ebit((ya, yb), tag="s4")
                    s.measure(ALICE, [x, ya], [BELL, ZZ_BASIS], f"s4.a{side}{r + 1}", choose=halted)
                    nxt.append(yb)
                b_a, b_b = nxt
            else:
                s.measure(ALICE, [xa], Z_BASIS, "s4.zA")
                s.measure(ALICE, [xb], Z_BASIS, "s4.zB")
        return hold_a, hold_b

    # -- corrections --------------------------------------------------------

    def _rotation_frame(self, v, tag: str, theta: float) -> tuple[np.ndarray, np.ndarray]:
        """Residual Pauli on the rotated qubit after a rotation step, and success."""
        n = self.n
        k = v[f"{tag}.K"]
        out = v[f"{tag}.out"]
        acc = np.zeros_like(out)
        for j in range(1, n + 1):
            late = k < j
            bj = v[f"{tag}.r{j}"]
            acc = np.where(late & (k > 0), pmul(acc, pmul(bj, xbit(bj))), acc)
        if np.any(xbit(acc)):
            raise RuntimeError(f"{tag}: halting-subroutine flips left an X residual")
        err = pmul(out, acc)
        w = residual_power(theta, n)
        never = k == 0
        ok = ~never | (w is not None)
        if w:
            err = np.where(never, pmul(err, 3), err)
        return err, ok

    def resolve(self, v) -> Resolution:
        alpha, beta, gamma = self.angles
        e_b2, ok2 = self._rotation_frame(v, "s2", gamma)
        e_a3, ok3 = self._rotation_frame(v, "s3", alpha)
        mu = pmul(e_a3, v["s3.out"])
        nu = pmul(e_b2, v["s2.out"])
        k = v["s4.K"]
        kk = np.where(k == 0, self.n, k)
        n_b = len(k)
        rows = np.arange(n_b)
        b_a = np.stack([v[f"s4.bA{r}"] for r in range(1, self.n + 1)], axis=1)[rows, kk - 1]
        b_b = np.stack([v[f"s4.bB{r}"] for r in range(1, self.n + 1)], axis=1)[rows, kk - 1]
        e_a = pmul(b_a, mu)
        e_b = pmul(b_b, nu)
        w = residual_power(beta, self.n)
        ok4 = (k > 0) | (w is not None)
        if w:
            e_a = np.where(k == 0, pmul(e_a, 3), e_a)
            e_b = np.where(k == 0, pmul(e_b, 3), e_b)
        # conjugate through CNOT·(H⊗I)
        xa, za, xb, zb = zbit(e_a), xbit(e_a), xbit(e_b), zbit(e_b)
        xb = xb ^ xa
        za = za ^ zb
        e_a = from_bits(xa, za)
        e_b = pmul(from_bits(xb, zb), v["s5.t"])
        r1, s1 = self.post
        alice = np.einsum("ij,njk->nik", r1, PAULI_STACK[e_a])
        bob = np.einsum("ij,njk->nik", s1, PAULI_STACK[e_b])
        success = ok2 & ok3 & ok4
        detail = {"halt.s2": v["s2.K"], "halt.s3": v["s3.K"], "halt.s4": k,
                  "ok.s2": ok2.astype(np.int64), "ok.s3": ok3.astype(np.int64), "ok.s4": ok4.astype(np.int64)}
        return Resolution(alice, bob, success, detail)


def _xparity(v, keys) -> np.ndarray:
    acc = np.zeros(v.batch, dtype=np.int64)
    for k in keys:
        acc ^= xbit(v[k])
    return acc


def _xor(v, keys) -> np.ndarray:
    acc = np.zeros(v.batch, dtype=np.int64)
    for k in keys:
        acc = pmul(acc, v[k])
    return acc
