import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jointkg.alignment import AlignmentMatrix
from jointkg.entr import (
    enlarge_seeds,
    matrix_entropy,
    prune_stale_transfers,
    seed_budget,
    transfer_triples,
)
from jointkg.errors import EnTrError
from jointkg.kgdata import ENLARGED, GIVEN, Kg, MultiKg, RelationVocab, SeedSet


def pair_multikg(triples_a, triples_b, entities_a, entities_b):
    vocab = RelationVocab()
    kg_a = Kg("aa", vocab)
    kg_b = Kg("bb", vocab)
    for i in range(entities_a):
        kg_a.intern_entity(f"a{i}")
    for i in range(entities_b):
        kg_b.intern_entity(f"b{i}")
    rel_count = max([r for _, r, _ in triples_a + triples_b], default=-1) + 1
    for r in range(rel_count):
        vocab.intern(f"r{r}")
    for h, r, t in triples_a:
        kg_a.add_triple(h, r, t)
    for h, r, t in triples_b:
        kg_b.add_triple(h, r, t)
    return MultiKg([kg_a, kg_b], vocab)


def seeds(pairs, provenance=None):
    provenance = provenance or [GIVEN] * len(pairs)
    return SeedSet(("aa", "bb"), list(pairs), list(provenance))


class TestMatrixEntropy:
    def test_uniform_two_by_two(self):
        h = matrix_entropy(np.array([[0.3, 0.3], [-1.0, -1.0]]))
        assert h == pytest.approx(2.0 * np.log(2.0), abs=1e-12)

    def test_singleton_matrix_is_zero(self):
        assert matrix_entropy(np.array([[0.42]])) == pytest.approx(0.0)

    def test_confident_row_hand_value(self):
        # softmax of (10, 0) written out longhand
        p1 = np.exp(10.0) / (np.exp(10.0) + np.exp(0.0))
        p2 = np.exp(0.0) / (np.exp(10.0) + np.exp(0.0))
        expected = -(p1 * np.log(p1) + p2 * np.log(p2))
        h = matrix_entropy(np.array([[10.0, 0.0]]))
        assert h == pytest.approx(expected, abs=1e-15)
        assert h == pytest.approx(5.0e-4, abs=1e-5)

    @settings(max_examples=60, deadline=None)
    @given(arrays(np.float64, (4, 6), elements=st.floats(-50, 50)))
    def test_entropy_bounds(self, values):
        h = matrix_entropy(values)
        assert 0.0 <= h <= 4 * np.log(6) + 1e-9

    def test_accepts_alignment_matrix(self):
        m = AlignmentMatrix(("aa", "bb"), np.zeros((2, 2)))
        assert matrix_entropy(m) == pytest.approx(2 * np.log(2))


class TestSeedBudget:
    def test_no_entropy_drop_means_zero(self):
        assert seed_budget(3.7, 3.7, beta=0.3, e_count=50, e_star_count=80) == 0

    def test_full_drop(self):
        assert seed_budget(12.0, 0.0, beta=0.2, e_count=100, e_star_count=500) == 20

    def test_half_drop_hand_value(self):
        assert seed_budget(10.0, 5.0, beta=0.2, e_count=100, e_star_count=100) == 10

    def test_rising_entropy_clamps_to_zero(self):
        assert seed_budget(5.0, 9.0, beta=0.3, e_count=100, e_star_count=100) == 0

    def test_degenerate_pretraining_entropy_errors(self):
        with pytest.raises(EnTrError, match="degenerate"):
            seed_budget(0.0, 0.0, beta=0.2, e_count=10, e_star_count=10)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.01, 20), st.floats(0, 20), st.floats(0, 20),
           st.floats(0, 1), st.floats(0, 1))
    def test_monotone_in_current_entropy_and_beta(self, h_tilde, h1, h2, beta1, beta2):
        lo_h, hi_h = sorted((h1, h2))
        assert seed_budget(h_tilde, lo_h, beta1, 40, 40) >= seed_budget(h_tilde, hi_h, beta1, 40, 40)
        lo_b, hi_b = sorted((beta1, beta2))
        assert seed_budget(h_tilde, lo_h, hi_b, 40, 40) >= seed_budget(h_tilde, lo_h, lo_b, 40, 40)


class TestEnlargeSeeds:
    def matrix(self, values):
        return AlignmentMatrix(("aa", "bb"), np.asarray(values, dtype=np.float64))

    def test_zero_budget_keeps_given_seeds(self):
        base = seeds([(0, 0)])
        out = enlarge_seeds(self.matrix([[0.9, 0.1], [0.2, 0.8]]), 0, base)
        assert out.pairs == [(0, 0)]
        assert out.provenance == [GIVEN]

    def test_conflicting_best_entry_is_skipped(self):
        base = seeds([(0, 1)])  # entity 0 on the left is taken
        out = enlarge_seeds(self.matrix([[0.9, 0.1], [0.2, 0.8]]), 1, base)
        assert (1, 0) in out.pairs  # best free pair once row 0 and column 1 are used
        assert out.provenance.count(ENLARGED) == 1

    def test_two_by_two_brute_force(self):
        out = enlarge_seeds(self.matrix([[0.9, 0.1], [0.2, 0.8]]), 2, seeds([]))
        assert set(out.pairs) == {(0, 0), (1, 1)}

    def test_previous_enlarged_pairs_are_recomputed(self):
        base = seeds([(0, 0), (1, 1)], [GIVEN, ENLARGED])
        out = enlarge_seeds(self.matrix([[0.9, 0.1], [0.2, 0.8]]), 0, base)
        assert out.pairs == [(0, 0)]

    def test_budget_larger_than_matrix_stops_at_exhaustion(self):
        out = enlarge_seeds(self.matrix([[0.9, 0.1], [0.2, 0.8]]), 10, seeds([]))
        assert len(out.pairs) == 2

    def test_output_is_one_to_one(self):
        rng = np.random.default_rng(0)
        out = enlarge_seeds(self.matrix(rng.normal(size=(6, 5))), 4, seeds([(0, 3)]))
        out.validate_one_to_one()


class TestTransferTriples:
    def figure_like_pair(self):
        # KG misses the (B, r4, A) edge its counterpart has
        names_a = {"E": 0, "D": 1, "B": 2, "C": 3, "A": 4}
        triples_a = [(0, 0, 2), (1, 1, 2), (2, 2, 3)]
        triples_b = [(0, 0, 2), (1, 1, 2), (2, 2, 3), (2, 3, 4)]  # extra (B*, r4, A*)
        multikg = pair_multikg(triples_a, triples_b, 5, 5)
        return multikg, names_a

    def test_missing_triple_is_recovered_and_nothing_else(self):
        multikg, names = self.figure_like_pair()
        seed_set = seeds([(names["B"], names["B"]), (names["A"], names["A"])])
        added = transfer_triples(seed_set, multikg, epoch=1)
        assert added == 1
        kg_a = multikg.by_id["aa"]
        assert kg_a.has_triple(names["B"], 3, names["A"])
        assert [t.key for t in kg_a.transferred_triples()] == [(names["B"], 3, names["A"])]
        assert multikg.by_id["bb"].transferred_triples() == []

    def test_second_run_adds_nothing(self):
        multikg, names = self.figure_like_pair()
        seed_set = seeds([(names["B"], names["B"]), (names["A"], names["A"])])
        transfer_triples(seed_set, multikg, epoch=1)
        assert transfer_triples(seed_set, multikg, epoch=2) == 0

    def test_structurally_identical_pair_adds_nothing(self):
        triples = [(0, 0, 1), (1, 1, 2)]
        multikg = pair_multikg(triples, triples, 3, 3)
        seed_set = seeds([(i, i) for i in range(3)])
        assert transfer_triples(seed_set, multikg) == 0

    def test_transfer_soundness_under_inverse_mapping(self):
        rng = np.random.default_rng(1)
        base = sorted({(int(rng.integers(6)), int(rng.integers(2)), int(rng.integers(6)))
                       for _ in range(10)})
        kept = [t for t in base if rng.random() > 0.3]
        multikg = pair_multikg(kept, base, 6, 6)
        seed_set = seeds([(i, i) for i in range(6)])
        transfer_triples(seed_set, multikg, epoch=0)
        mapping = seed_set.mapping()
        inverse = seed_set.inverse_mapping()
        for t in multikg.by_id["aa"].transferred_triples():
            assert multikg.by_id["bb"].has_triple(mapping[t.head], t.relation, mapping[t.tail])
        for t in multikg.by_id["bb"].transferred_triples():
            assert multikg.by_id["aa"].has_triple(inverse[t.head], t.relation, inverse[t.tail])

    def test_neighbor_index_sees_transfers(self):
        multikg, names = self.figure_like_pair()
        seed_set = seeds([(names["B"], names["B"]), (names["A"], names["A"])])
        transfer_triples(seed_set, multikg, epoch=1)
        index = multikg.by_id["aa"].neighbor_index()
        assert (names["A"], 3, "out") in index[names["B"]]


class TestPruneStaleTransfers:
    def test_transfer_from_withdrawn_pair_is_pruned(self):
        multikg = pair_multikg([(0, 0, 1)], [(0, 0, 1), (1, 1, 0)], 3, 3)
        enlarged = seeds([(0, 0), (1, 1)], [GIVEN, ENLARGED])
        transfer_triples(enlarged, multikg, epoch=0)
        assert multikg.by_id["aa"].has_triple(1, 1, 0)
        shrunk = {("aa", "bb"): seeds([(0, 0)])}
        removed = prune_stale_transfers(multikg, shrunk)
        assert removed == 1
        assert not multikg.by_id["aa"].has_triple(1, 1, 0)

    def test_still_derivable_transfers_survive(self):
        multikg = pair_multikg([(0, 0, 1)], [(0, 0, 1), (1, 1, 0)], 3, 3)
        seed_set = seeds([(0, 0), (1, 1)])
        transfer_triples(seed_set, multikg, epoch=0)
        removed = prune_stale_transfers(multikg, {("aa", "bb"): seed_set})
        assert removed == 0
        assert multikg.by_id["aa"].has_triple(1, 1, 0)

    def test_mutually_supporting_stale_copies_are_both_dropped(self):
        multikg = pair_multikg([(0, 0, 1)], [], 3, 3)
        kg_a = multikg.by_id["aa"]
        kg_b = multikg.by_id["bb"]
        # fabricate a support cycle whose generating pair no longer exists
        kg_a.add_triple(2, 0, 1, origin="transferred", epoch=0)
        kg_b.add_triple(2, 0, 1, origin="transferred", epoch=0)
        removed = prune_stale_transfers(multikg, {("aa", "bb"): seeds([(1, 1)])})
        assert removed == 2
