"""Two-party session engine: locality, ledgers, branching and sampling."""

import math

import numpy as np
import pytest
from scipy import stats

from lobc.engine import (
    ALICE,
    BOB,
    BranchOverflow,
    LocalityError,
    OwnershipError,
    Session,
    TrialStreams,
    error_basis,
    product_kraus,
    snapshot,
    teleport_kraus,
)
from lobc.linalg import PAULIS, StateVector, haar_random_state, haar_random_unitary, weyl

OWNERS = {"A": ALICE, "B": BOB}


def qubit_session(rng, n=1, **kw):
    psi = np.array([haar_random_state((2, 2), rng) for _ in range(n)])
    return Session(psi, ("A", "B"), (2, 2), OWNERS, **kw), psi


class TestOwnership:
    def test_unowned_subsystem_rejected(self, rng):
        with pytest.raises(OwnershipError):
            Session(haar_random_state((2, 2), rng), ("A", "B"), (2, 2), {"A": ALICE})

    def test_cannot_touch_other_party(self, rng):
        s, _ = qubit_session(rng)
        with pytest.raises(OwnershipError):
            s.local_op(ALICE, ["B"], PAULIS[1])

    def test_ebit_must_be_split(self, rng):
        s, _ = qubit_session(rng)
        with pytest.raises(OwnershipError):
            s.allocate_ebit(("a", "b"), owners=(ALICE, ALICE))

    def test_label_collision(self, rng):
        s, _ = qubit_session(rng)
        with pytest.raises(ValueError):
            s.allocate_ebit(("A", "b"))


class TestLocality:
    def test_reading_other_record_before_broadcast(self, rng):
        s, _ = qubit_session(rng)
        s.measure(ALICE, ["A"], product_kraus(2), "m")
        with pytest.raises(LocalityError):
            s.local_op(BOB, ["B"], np.array(PAULIS[:2]), choose=lambda v: v["m"])

    def test_own_record_is_readable(self, rng):
        s, _ = qubit_session(rng)
        s.measure(ALICE, ["A"], product_kraus(2), "m")
        s.add_register("A2", 2, ALICE)
        s.local_op(ALICE, ["A2"], np.array(PAULIS[:2]), choose=lambda v: v["m"])
        out = s.states(["A2", "B"]).reshape(-1, 2, 2)
        for i in range(s.batch):
            assert np.allclose(out[i, 1 - s.record_table()["m"][i]], 0)

    def test_send_requires_interactive(self, rng):
        s, _ = qubit_session(rng)
        s.measure(ALICE, ["A"], product_kraus(2), "m")
        with pytest.raises(LocalityError):
            s.send(ALICE, "m")

    def test_send_unlocks_record(self, rng):
        s, _ = qubit_session(rng, interactive=True)
        s.measure(ALICE, ["A"], product_kraus(2), "m")
        s.send(ALICE, "m")
        s.local_op(BOB, ["B"], np.array(PAULIS[:2]), choose=lambda v: v["m"])
        assert s.ledger.cbits_sent == 1
        s.broadcast()
        assert s.ledger.cbits_broadcast == 0

    def test_single_broadcast(self, rng):
        s, _ = qubit_session(rng)
        s.broadcast()
        with pytest.raises(RuntimeError):
            s.broadcast()

    def test_everything_readable_after_broadcast(self, rng):
        s, _ = qubit_session(rng)
        s.measure(ALICE, ["A"], product_kraus(2), "m")
        s.broadcast()
        assert s.view(BOB)["m"].shape == (s.batch,)


class TestLedger:
    def test_allocation_cost(self, rng):
        s, _ = qubit_session(rng)
        s.allocate_ebit(("a1", "b1"), tag="x")
        s.allocate_ebit(("a2", "b2"), d=4, tag="y")
        assert s.ledger.allocated == 3
        assert s.ledger.breakdown == {"x": 1, "y": 2}

    def test_touched_counted_once(self, rng):
        s, _ = qubit_session(rng)
        s.allocate_ebit(("a1", "b1"))
        s.allocate_ebit(("a2", "b2"))
        s.measure(ALICE, ["a1"], product_kraus(2), "p")
        s.measure(BOB, ["b1"], product_kraus(2), "q")
        assert s.ledger.touched == 1

    def test_broadcast_bits(self, rng):
        s, _ = qubit_session(rng)
        s.allocate_ebit(("a", "b"))
        s.teleport_star(ALICE, "A", ("a", "b"), "t")
        s.measure(BOB, ["B"], product_kraus(2), "z")
        s.broadcast()
        assert s.ledger.cbits_broadcast == 3


class TestTeleportStar:
    @pytest.mark.parametrize("d", [2, 3])
    def test_error_operator_relation(self, rng, d):
        psi = haar_random_state((d, 2), rng)
        s = Session(psi, ("A", "B"), (d, 2), OWNERS)
        s.allocate_ebit(("a", "b"), d=d)
        s.teleport_star(ALICE, "A", ("a", "b"), "t")
        out = s.states(["b", "B"])
        errs = error_basis(d)
        assert s.batch == d * d
        np.testing.assert_allclose(s.probs, 1 / d ** 2, atol=1e-12)
        for i, j in enumerate(s.record_table()["t"]):
            expected = np.kron(errs[j], np.eye(2)) @ psi
            assert abs(np.vdot(expected, out[i])) == pytest.approx(1, abs=1e-12)

    def test_rotated_basis(self, rng):
        r = haar_random_unitary(2, rng)
        errs = error_basis(2, r)
        for k, e in enumerate(errs):
            np.testing.assert_allclose(e, r @ PAULIS[k] @ r.conj().T, atol=1e-12)
        kr = teleport_kraus(2, r)
        gram = np.einsum("koi,koj->ij", kr.conj(), kr)
        np.testing.assert_allclose(gram, np.eye(4), atol=1e-12)

    def test_weyl_basis_complete(self):
        kr = teleport_kraus(3)
        np.testing.assert_allclose(np.einsum("koi,koj->ij", kr.conj(), kr), np.eye(9), atol=1e-12)

    def test_receiver_must_be_other_party(self, rng):
        s, _ = qubit_session(rng)
        s.allocate_ebit(("a", "b"), owners=(BOB, ALICE))
        with pytest.raises(OwnershipError):
            s.teleport_star(ALICE, "A", ("a", "b"), "t")


class TestBranching:
    def test_probabilities_sum_per_input(self, rng):
        s, _ = qubit_session(rng, n=3)
        s.allocate_ebit(("a", "b"))
        s.teleport_star(ALICE, "A", ("a", "b"), "t")
        s.measure(BOB, ["B"], product_kraus(2), "z")
        bs = snapshot(s, ["b"])
        for k in range(3):
            assert bs.total_probability(k) == pytest.approx(1, abs=1e-12)

    def test_pruning_mass_tracked(self):
        s = Session(np.eye(4)[0], ("A", "B"), (2, 2), OWNERS)
        s.measure(ALICE, ["A"], product_kraus(2), "m")
        assert s.batch == 1
        assert s.pruned_mass[0] == 0

    def test_overflow(self, rng):
        s, _ = qubit_session(rng, max_branches=10)
        s.allocate_ebit(("a", "b"), d=4)
        with pytest.raises(BranchOverflow):
            s.measure(ALICE, ["a"], product_kraus(4), "m1")
            s.allocate_ebit(("c", "e"), d=4)
            s.measure(ALICE, ["c"], product_kraus(4), "m2")

    def test_transcripts(self, rng):
        s, _ = qubit_session(rng)
        s.measure(ALICE, ["A"], product_kraus(2), "m")
        bs = snapshot(s, ["B"])
        t = bs.transcript(0)
        assert t.events[0].party == ALICE
        assert t.probability == pytest.approx(bs.probabilities[0])


class TestSampling:
    def test_streams_independent_of_batching(self):
        whole = TrialStreams(3, np.arange(10))
        part = TrialStreams(3, np.arange(5, 10))
        for _ in range(70):
            np.testing.assert_array_equal(whole.next()[5:], part.next())

    def test_sample_matches_enumeration(self, rng):
        """Chi-square goodness of fit of sampled outcomes against enumerated Born weights."""
        psi = haar_random_state((3, 2), rng)

        def script(s):
            s.allocate_ebit(("a", "b"), d=3)
            s.teleport_star(ALICE, "A", ("a", "b"), "t")
            s.measure(BOB, ["B"], product_kraus(2), "z")

        e = Session(psi, ("A", "B"), (3, 2), OWNERS)
        script(e)
        key = e.record_table()["t"] * 2 + e.record_table()["z"]
        expected = np.bincount(key, weights=e.probs, minlength=18)

        trials = 20000
        m = Session(psi, ("A", "B"), (3, 2), OWNERS, mode="sample", seed=11, trials=trials)
        script(m)
        observed = np.bincount(m.record_table()["t"] * 2 + m.record_table()["z"], minlength=18)
        mask = expected > 0
        chi2, p = stats.chisquare(observed[mask], expected[mask] * trials)
        assert p > 1e-3

    def test_sample_reproducible(self, rng):
        psi = haar_random_state((2, 2), rng)
        runs = []
        for _ in range(2):
            s = Session(psi, ("A", "B"), (2, 2), OWNERS, mode="sample", seed=4, trials=50)
            s.measure(ALICE, ["A"], product_kraus(2), "m")
            runs.append(s.record_table()["m"])
        np.testing.assert_array_equal(*runs)


class TestErrorBasis:
    def test_weyl_indexing(self):
        errs = error_basis(3)
        np.testing.assert_allclose(errs[1 * 3 + 2], weyl(3, 1, 2))

    def test_rotation_only_for_qubits(self):
        with pytest.raises(ValueError):
            error_basis(3, np.eye(3))
