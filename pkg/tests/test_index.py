import numpy as np
import pytest

from kernelmap.index import (
    ClassIndex,
    DuplicateEntryError,
    IndexedVector,
    MissingEntryError,
    SupportVectorIndex,
)


def linear_scan(entries, query, k):
    """Brute-force oracle: ascending distance, ties by lexicographic position."""
    q = np.asarray(query, dtype=float)
    ranked = sorted(
        ((float(np.linalg.norm(np.asarray(p) - q)), p, w) for p, w in entries),
        key=lambda e: (e[0], e[1]),
    )
    return ranked[:k]


class TestBasics:
    def test_insert_then_self_nearest(self):
        idx = ClassIndex(2)
        idx.insert((1.0, 2.0), 0.5)
        got = idx.knn((1.0, 2.0), 1)
        assert got[0][0] == (1.0, 2.0)
        assert got[0][1] == 0.5
        assert got[0][2] == 0.0

    def test_collinear_nearest(self):
        idx = ClassIndex(1)
        for x in (0.0, 1.0, 2.0):
            idx.insert((x,), 1.0)
        assert idx.knn((0.4,), 1)[0][0] == (0.0,)

    def test_duplicate_insert_rejected(self):
        idx = ClassIndex(2)
        idx.insert((1.0, 1.0), 1.0)
        with pytest.raises(DuplicateEntryError):
            idx.insert((1.0, 1.0), 2.0)

    def test_remove_then_empty(self):
        idx = ClassIndex(2)
        idx.insert((1.0, 1.0), 1.0)
        idx.remove((1.0, 1.0))
        assert idx.knn((0.0, 0.0), 3) == []
        assert len(idx) == 0

    def test_remove_missing_raises(self):
        idx = ClassIndex(2)
        idx.insert((1.0, 1.0), 1.0)
        idx.remove((1.0, 1.0))
        with pytest.raises(MissingEntryError):
            idx.remove((1.0, 1.0))

    def test_k_larger_than_size_returns_all_sorted(self):
        idx = ClassIndex(2)
        pts = [(3.0, 0.0), (1.0, 0.0), (2.0, 0.0)]
        for p in pts:
            idx.insert(p, 1.0)
        got = [p for p, _, _ in idx.knn((0.0, 0.0), 10)]
        assert got == [(1.0, 0.0), (2.0, 0.0), (3.0, 0.0)]

    def test_empty_index_knn(self):
        assert ClassIndex(2).knn((0.0, 0.0), 5) == []

    def test_weight_update_visible_in_queries(self):
        idx = ClassIndex(2)
        idx.insert((1.0, 1.0), 1.0)
        idx.set_weight((1.0, 1.0), 7.5)
        assert idx.knn((1.0, 1.0), 1)[0][1] == 7.5
        assert idx.get_weight((1.0, 1.0)) == 7.5


class TestOracleEquivalence:
    def test_random_points_match_linear_scan(self):
        rng = np.random.default_rng(7)
        idx = ClassIndex(2)
        entries = []
        for _ in range(300):
            p = tuple(rng.uniform(-5, 5, 2).round(3))
            if idx.get_weight(p) is None:
                w = float(rng.uniform(0.1, 2.0))
                idx.insert(p, w)
                entries.append((p, w))
        for _ in range(50):
            q = rng.uniform(-5, 5, 2)
            got = idx.knn(q, 10)
            want = linear_scan(entries, q, 10)
            assert [g[0] for g in got] == [w[1] for w in want]

    def test_insert_remove_interleaved_match(self):
        rng = np.random.default_rng(11)
        idx = ClassIndex(2)
        entries: dict = {}
        for step in range(800):
            if entries and rng.random() < 0.35:
                p = list(entries)[rng.integers(len(entries))]
                idx.remove(p)
                del entries[p]
            else:
                p = tuple(rng.uniform(0, 10, 2).round(2))
                if p in entries:
                    continue
                w = float(rng.uniform(0.1, 3.0))
                idx.insert(p, w)
                entries[p] = w
            if step % 40 == 0:
                q = rng.uniform(0, 10, 2)
                got = idx.knn(q, 5)
                want = linear_scan(list(entries.items()), q, 5)
                assert [g[0] for g in got] == [w[1] for w in want]
                assert len(idx) == len(entries)

    def test_tie_break_lexicographic(self):
        idx = ClassIndex(2)
        # four corners equidistant from the origin
        for p in [(1.0, 1.0), (-1.0, 1.0), (1.0, -1.0), (-1.0, -1.0)]:
            idx.insert(p, 1.0)
        got = [p for p, _, _ in idx.knn((0.0, 0.0), 2)]
        assert got == [(-1.0, -1.0), (-1.0, 1.0)]

    def test_knn_prefix_property(self):
        rng = np.random.default_rng(3)
        idx = ClassIndex(2)
        for _ in range(100):
            idx.insert(tuple(rng.uniform(0, 1, 2)), 1.0)
        q = (0.5, 0.5)
        for k in range(1, 20):
            a = idx.knn(q, k)
            b = idx.knn(q, k + 1)
            assert b[:k] == a


class TestPairedIndex:
    def test_labels_are_separate(self):
        idx = SupportVectorIndex(2)
        idx.insert(IndexedVector((1.0, 1.0), 1.0, 1))
        idx.insert(IndexedVector((1.0, 1.0), 2.0, -1))  # same position, other class OK
        assert idx.size(1) == 1
        assert idx.size(-1) == 1
        got = idx.knn((0.0, 0.0), 5, label=-1)
        assert got[0].weight == 2.0
        assert got[0].label == -1

    def test_bad_label_rejected(self):
        idx = SupportVectorIndex(2)
        with pytest.raises(ValueError):
            idx.insert(IndexedVector((0.0, 0.0), 1.0, 0))

    def test_remove_by_label(self):
        idx = SupportVectorIndex(2)
        idx.insert(IndexedVector((1.0, 1.0), 1.0, 1))
        with pytest.raises(MissingEntryError):
            idx.remove((1.0, 1.0), -1)
        idx.remove((1.0, 1.0), 1)
        assert idx.size(1) == 0
