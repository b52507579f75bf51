"""Acceptance criteria 1-9, each reporting one PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary section
at the end of the pytest output lists the verdicts.
"""

import json
import math
import time

import numpy as np
import pytest

from lobc.cli import main
from lobc.entanglement import e_max_pure, entropy, eta_d
from lobc.linalg import CNOT, CZ, ISWAP, SWAP, I2, StateVector, haar_random_state, haar_random_unitary
from lobc.magic import (
    canonical_decompose,
    clifford_class_gate,
    in_L,
    is_nonentangling,
    magic_product_criterion,
    omega_from_angles,
)
from lobc.protocols import (
    U2,
    ControlledHermitian,
    U2E,
    epsilon_ebits,
    predicted_success,
    random_hermitian_unitary,
    random_projector,
    run_protocol,
)

SEED = 20240611
MC_TRIALS = 100_000

# 40-digit mpmath evaluation of the closed-form Schmidt coefficients of η_d
ETA_REFERENCE = {
    2: (0.87242933985646807, 0.93370838201870706),
    4: (1.7924812503605781, 1.8999686269529917),
    16: (1.7880007733612625, 2.9734463279823908),
    64: (1.290724433637086, 3.8073549220576041),
    256: (0.8369371564206925, 4.6209278693296712),
    1024: (0.51307827524225616, 5.4616460986975143),
}


def _inputs(rng, dims, n):
    return np.array([haar_random_state(dims, rng) for _ in range(n)])


def test_criterion_1_controlled_hermitian(verdict):
    rng = np.random.default_rng(SEED + 1)
    t0 = time.perf_counter()
    ok, worst_f, worst_p, branches = True, 1.0, 0.0, set()
    for _ in range(50):
        da, db = int(rng.integers(2, 5)), int(rng.integers(2, 6))
        p = random_projector(da, rng, int(rng.integers(1, da)))
        v = random_hermitian_unitary(db, rng, int(rng.integers(1, db)))
        rep = run_protocol(ControlledHermitian(p, v), _inputs(rng, (da, db), 1))
        bs = rep.branch_set
        branches.add(len(bs))
        worst_f = min(worst_f, float(bs.fidelity.min()))
        worst_p = max(worst_p, abs(bs.total_probability() - 1))
        ok &= bool(bs.success.all()) and rep.allocated_ebits == 1
    elapsed = time.perf_counter() - t0
    ok &= worst_f >= 1 - 1e-9 and worst_p <= 1e-9 and branches == {4} and elapsed < 10
    verdict("1 controlled-hermitian exactness", ok,
            f"min fidelity {worst_f:.12f}, |Σp-1| {worst_p:.1e}, branches {sorted(branches)}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_u2e(verdict):
    rng = np.random.default_rng(SEED + 2)
    t0 = time.perf_counter()
    ok, worst = True, 1.0
    for gate in (CNOT, CZ, SWAP, ISWAP):
        rep = run_protocol(U2E(gate), _inputs(rng, (2, 2), 100))
        bs = rep.branch_set
        per_input = np.bincount(bs.origin, minlength=100)
        worst = min(worst, float(bs.fidelity.min()))
        ok &= bool(np.all(per_input == 16)) and bool(bs.success.all())
        ok &= rep.allocated_ebits == 2 and rep.cbits_broadcast == 4
    elapsed = time.perf_counter() - t0
    ok &= worst >= 1 - 1e-9 and elapsed < 30
    verdict("2 U2E exactness", ok, f"min fidelity {worst:.12f}, 2 ebits, 4 cbits, {elapsed:.1f}s")
    assert ok


def test_criterion_3_success_law(verdict):
    rng = np.random.default_rng(SEED + 3)
    t0 = time.perf_counter()
    ok = True
    worst_mass, worst_f = 0.0, 1.0
    psi = haar_random_state((2, 2), rng)
    for _ in range(20):
        angles = tuple(rng.uniform(0, 2 * math.pi, 3))
        rep = run_protocol(U2(1, angles=angles), psi, "enumerate")
        worst_mass = max(worst_mass, abs(rep.success_probability - 0.125))
        worst_f = min(worst_f, rep.min_fidelity_on_success)
        ok &= rep.allocated_ebits == 9
    ok &= worst_mass <= 1e-9 and worst_f >= 1 - 1e-9
    details = [f"N=1 |mass-0.125| {worst_mass:.1e}"]
    angles = (0.3, 0.5, 0.7)
    for n, ebits in ((2, 17), (3, 25), (4, 33)):
        target = (1 - 2.0 ** -n) ** 3
        rep = run_protocol(U2(n, angles=angles), _inputs(rng, (2, 2), 16), "sample", seed=7,
                           trials=MC_TRIALS, workers=None)
        z = (rep.success_probability - target) / rep.success_stderr
        ok &= abs(z) <= 4 and rep.allocated_ebits == ebits and rep.min_fidelity_on_success >= 1 - 1e-9
        details.append(f"N={n} {rep.success_probability:.5f} vs {target} z={z:+.2f} ebits={rep.allocated_ebits:g}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 300
    verdict("3 success law (1-2^-N)^3", ok, "; ".join(details) + f"; {elapsed:.0f}s")
    assert ok


@pytest.mark.xfail(strict=True, reason="0.8291015625 is not (1-2^-4)^3 = 0.823974609375")
def test_criterion_3_n4_printed_literal():
    assert (1 - 2.0 ** -4) ** 3 == 0.8291015625


def test_criterion_4_deterministic_angles(verdict):
    rng = np.random.default_rng(SEED + 4)
    fails = {}
    for n, angles in ((2, (math.pi / 2,) * 3), (3, (math.pi, math.pi / 2, math.pi / 4))):
        rep = run_protocol(U2(n, angles=angles), _inputs(rng, (2, 2), 16), "sample", seed=11,
                           trials=10_000, workers=None)
        fails[n] = int(np.sum(~rep.per_trial["success"]))
        assert rep.min_fidelity_on_success >= 1 - 1e-9
    ok = all(v == 0 for v in fails.values())
    verdict("4 deterministic angle sets", ok, f"failures {fails} in 10^4 trials each")
    assert ok


def test_criterion_5_decomposition(verdict):
    rng = np.random.default_rng(SEED + 5)
    worst = max(float(np.max(np.abs(canonical_decompose(u).rebuild() - u)))
                for u in (haar_random_unitary(4, rng) for _ in range(1000)))
    members = sum(in_L(clifford_class_gate(rng)) for _ in range(200))
    outsiders = 0
    for _ in range(200):
        k = rng.integers(0, 8, 3).astype(float)
        k_angles = k * math.pi / 4
        j = rng.integers(0, 3)
        k_angles[j] += rng.uniform(0.05, math.pi / 4 - 0.05)
        loc = [haar_random_unitary(2, rng) for _ in range(4)]
        u = np.kron(loc[0], loc[1]) @ omega_from_angles(*k_angles) @ np.kron(loc[2], loc[3])
        outsiders += not in_L(u)
    ok = worst <= 1e-9 and members == 200 and outsiders == 200
    verdict("5 decomposition and L membership", ok,
            f"max error {worst:.1e}, in_L {members}/200, rejected {outsiders}/200")
    assert ok


def _product_inputs(rng, n):
    a = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    b = rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    b /= np.linalg.norm(b, axis=1, keepdims=True)
    return np.einsum("ni,nj->nij", a, b).reshape(n, 4)


def _second_schmidt(states):
    return np.linalg.svd(states.reshape(-1, 2, 2), compute_uv=False)[:, 1]


def test_criterion_6_nonentangling_and_product(verdict):
    rng = np.random.default_rng(SEED + 6)
    gates = []
    for i in range(1000):
        kind = i % 4
        loc = [haar_random_unitary(2, rng) for _ in range(4)]
        if kind == 0:
            u = np.kron(loc[0], loc[1])
        elif kind == 1:
            u = np.kron(loc[0], loc[1]) @ SWAP @ np.kron(loc[2], loc[3])
        elif kind == 2:
            u = haar_random_unitary(4, rng)
        else:
            u = clifford_class_gate(rng)
        gates.append(u)
    agree = 0
    flagged = 0
    for u in gates:
        outs = _product_inputs(rng, 200) @ u.T
        lam2 = _second_schmidt(outs)
        if is_nonentangling(u):
            flagged += 1
            agree += bool(np.all(lam2 <= 1e-9))
        else:
            agree += bool(np.any(lam2 > 1e-6))
    states = np.concatenate([_inputs(rng, (2, 2), 500), _product_inputs(rng, 500)])
    crit = np.array([magic_product_criterion(s) for s in states])
    rank1 = _second_schmidt(states) <= 1e-9
    state_agree = int(np.sum(crit == rank1))
    ok = agree == 1000 and state_agree == 1000
    verdict("6 nonentangling behavior and Σc²=0 product test", ok,
            f"gates {agree}/1000 ({flagged} nonentangling), states {state_agree}/1000")
    assert ok


def test_criterion_7_entanglement_separation(verdict):
    ds = (16, 64, 256, 1024)
    ent = [entropy(eta_d(d)) for d in ds]
    emax = [e_max_pure(eta_d(d)) for d in ds]
    dev = max(max(abs(entropy(eta_d(d)) - e), abs(e_max_pure(eta_d(d)) - m))
              for d, (e, m) in ETA_REFERENCE.items())
    ok = all(a > b for a, b in zip(ent, ent[1:])) and all(a < b for a, b in zip(emax, emax[1:])) and dev <= 1e-9
    verdict("7 entanglement separation", ok,
            f"E {[round(x, 4) for x in ent]}, Emax {[round(x, 4) for x in emax]}, oracle dev {dev:.1e}")
    assert ok


def test_criterion_8_gap_report(verdict, tmp_path):
    out = tmp_path / "gap.json"
    code = main(["run", "--protocol", "locc-baseline", "--s", "1024", "--inputs", "2", "--out", str(out)])
    rep = json.loads(out.read_text())
    locc = rep["ledger"]["allocated_ebits"]
    bound = rep["predicted"]["lobc_lower_bound_ebits"]
    ok = code == 0 and locc == 2 and rep["predicted"]["locc_ebits"] == 2 and bound == 10
    ok &= rep["ledger"]["interactive"] and rep["measured"]["min_fidelity_on_success"] >= 1 - 1e-9
    verdict("8 LOCC vs LOBC gap report", ok, f"LOCC {locc:g} ebits, LOBC lower bound {bound:g} ebits")
    assert ok


def test_criterion_9_epsilon_identity(verdict):
    rows = []
    ok = True
    for n in range(1, 11):
        eps = 2 * (1 - predicted_success(n))
        exact, bound = epsilon_ebits(eps)
        ok &= abs(exact - (8 * n + 1)) <= 1e-9 and exact <= bound
        rows.append(f"{n}:{exact:.6f}<={bound:.2f}")
    verdict("9 epsilon conversion", ok, ", ".join(rows[:3]) + ", ...")
    assert ok
