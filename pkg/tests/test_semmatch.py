"""Neighbor matching and pair enumeration, with count cross-checks."""

import numpy as np
import pytest

from l2a.semmatch import (
    cosine_similarity,
    enumerate_pairs,
    nearest_neighbors,
    sample_pairs,
    search_space_size,
)
from l2a.tensorstore import SampleInfo


def _sample(sid, cid):
    return SampleInfo(sid, cid, f"{sid}.ten", f"{sid}m.ten", "train-labeled")


def _bank(counts):
    out = []
    for cid, n in counts.items():
        out.extend(_sample(f"c{cid}s{i}", cid) for i in range(n))
    return out


class TestNearestNeighbors:
    def test_mutual_pairs_in_clustered_embeddings(self):
        emb = {
            0: np.array([1.0, 0.0]),
            1: np.array([0.95, 0.05]),
            2: np.array([0.0, 1.0]),
            3: np.array([0.05, 0.95]),
        }
        nn = nearest_neighbors(emb)
        assert nn == {0: 1, 1: 0, 2: 3, 3: 2}

    def test_tie_breaks_to_lowest_id(self):
        emb = {
            5: np.array([1.0, 0.0]),
            7: np.array([0.0, 1.0]),
            9: np.array([0.0, 1.0]),  # same direction as 7
        }
        nn = nearest_neighbors(emb)
        assert nn[9] == 7  # exact tie against nothing; 7 is its twin
        assert nn[7] == 9
        assert nn[5] in (7, 9)
        # 7 and 9 tie exactly for 5's neighbor; lowest id wins.
        assert nn[5] == 7

    def test_never_returns_self(self):
        rng = np.random.default_rng(0)
        emb = {i: rng.normal(size=4) for i in range(6)}
        nn = nearest_neighbors(emb)
        assert all(c != n for c, n in nn.items())

    def test_scale_invariance(self):
        emb = {0: np.array([2.0, 0.0]), 1: np.array([1.0, 0.1]), 2: np.array([0.0, 3.0])}
        scaled = {c: 7.5 * e for c, e in emb.items()}
        assert nearest_neighbors(emb) == nearest_neighbors(scaled)

    def test_needs_two_classes(self):
        with pytest.raises(ValueError):
            nearest_neighbors({0: np.ones(2)})

    def test_cosine_basics(self):
        assert cosine_similarity(np.array([1.0, 0]), np.array([2.0, 0])) == pytest.approx(1.0)
        assert cosine_similarity(np.array([1.0, 0]), np.array([0, 1.0])) == pytest.approx(0.0)


class TestEnumeratePairs:
    def test_random_mode_counts_and_no_self_pairs(self):
        bank = _bank({0: 3, 1: 2})
        pairs = enumerate_pairs(bank, "random")
        assert len(pairs) == 5 * 4
        assert all(p.fg_id != p.bg_id for p in pairs)

    def test_semantic_mode_respects_neighbor_map(self):
        bank = _bank({0: 3, 1: 2, 2: 4})
        nn = {0: 1, 1: 0, 2: 0}
        pairs = enumerate_pairs(bank, "semantic", nn)
        assert all(p.bg_class == nn[p.fg_class] for p in pairs)
        assert len(pairs) == 3 * 2 + 2 * 3 + 4 * 3

    def test_intra_class_mode(self):
        bank = _bank({0: 3, 1: 2})
        pairs = enumerate_pairs(bank, "intra-class")
        assert all(p.fg_class == p.bg_class for p in pairs)
        assert len(pairs) == 3 * 2 + 2 * 1

    def test_deterministic_order(self):
        bank = _bank({0: 3, 1: 3})
        a = enumerate_pairs(bank, "random")
        b = enumerate_pairs(list(reversed(bank)), "random")
        assert a == b

    def test_semantic_needs_neighbor_map(self):
        with pytest.raises(ValueError):
            enumerate_pairs(_bank({0: 1, 1: 1}), "semantic")

    def test_unknown_mode_rejected(self):
        with pytest.raises(ValueError):
            enumerate_pairs(_bank({0: 2}), "alphabetic")


class TestSearchSpaceSize:
    def test_closed_forms_match_enumeration(self):
        counts = {0: 3, 1: 2, 2: 4, 3: 1}
        nn = {0: 1, 1: 0, 2: 3, 3: 2}
        bank = _bank(counts)
        for mode in ("random", "semantic", "intra-class"):
            assert search_space_size(counts, mode, nn) == len(enumerate_pairs(bank, mode, nn))

    def test_documented_examples(self):
        # 20 clips, all modes against hand counts: random 380; two balanced
        # mutually-matched classes of 10 give semantic 200 and intra 180.
        counts = {0: 10, 1: 10}
        nn = {0: 1, 1: 0}
        assert search_space_size(counts, "random") == 380
        assert search_space_size(counts, "semantic", nn) == 200
        assert search_space_size(counts, "intra-class") == 180

    def test_intra_smaller_than_random(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            counts = {c: int(rng.integers(1, 9)) for c in range(int(rng.integers(2, 6)))}
            assert search_space_size(counts, "intra-class") <= search_space_size(counts, "random")


class TestSamplePairs:
    def test_without_replacement_and_in_range(self):
        bank = _bank({0: 5, 1: 5})
        cands = enumerate_pairs(bank, "random")
        rng = np.random.default_rng(2)
        batch = sample_pairs(cands, 16, rng)
        assert len(batch) == 16
        assert len({(p.fg_id, p.bg_id) for p in batch}) == 16
        assert all(p in cands for p in batch)

    def test_small_pool_returned_whole(self):
        cands = enumerate_pairs(_bank({0: 2}), "intra-class")
        assert sample_pairs(cands, 16, np.random.default_rng(3)) == cands

    def test_seeded_reproducibility(self):
        cands = enumerate_pairs(_bank({0: 6, 1: 6}), "random")
        a = sample_pairs(cands, 8, np.random.default_rng(4))
        b = sample_pairs(cands, 8, np.random.default_rng(4))
        assert a == b
