"""Dynamic k-nearest-neighbor indices over weighted support vectors.

One index per label class. Queries must match a brute-force linear scan
exactly, including deterministic tie-breaking (ascending distance, then
lexicographic position). Mutations are cheap: inserts go to a pending buffer
and removals to a tombstone set; the underlying kd-tree is rebuilt lazily.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import as_point

#: Quantum for exact-position lookups; positions closer than this are
#: considered identical.
POSITION_QUANTUM = 1e-9

#: Buffered mutations beyond which the kd-tree is rebuilt.
_REBUILD_LIMIT = 64


class DuplicateEntryError(ValueError):
    """Insert at a position already present in the same class."""


class MissingEntryError(KeyError):
    """Remove or update of a position not present in the class."""


def position_key(p: Sequence[float] | np.ndarray) -> tuple[int, ...]:
    """Quantized coordinate tuple used for exact-position membership."""
    return tuple(int(round(float(c) / POSITION_QUANTUM)) for c in p)


@dataclass(frozen=True)
class IndexedVector:
    """A weighted support vector as stored in the index."""

    position: tuple[float, ...]
    weight: float
    label: int


class ClassIndex:
    """k-NN index over the support vectors of a single label class."""

    def __init__(self, dim: int) -> None:
        self.dim = int(dim)
        # key -> (position tuple, weight); insertion-ordered
        self._entries: dict[tuple[int, ...], tuple[tuple[float, ...], float]] = {}
        self._tree: cKDTree | None = None
        self._tree_keys: list[tuple[int, ...]] = []
        self._dead: set[tuple[int, ...]] = set()
        self._pending: dict[tuple[int, ...], tuple[float, ...]] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, position) -> bool:
        return position_key(position) in self._entries

    def get_weight(self, position) -> float | None:
        entry = self._entries.get(position_key(position))
        return None if entry is None else entry[1]

    def insert(self, position, weight: float) -> None:
        pos = tuple(float(c) for c in as_point(position, self.dim))
        key = position_key(pos)
        if key in self._entries:
            raise DuplicateEntryError(f"entry already present at {pos}")
        self._entries[key] = (pos, float(weight))
        if key in self._dead:
            # Position is still in the stale tree; resurrect it in place.
            self._dead.discard(key)
        else:
            self._pending[key] = pos
        self._maybe_rebuild()

    def remove(self, position) -> None:
        key = position_key(position)
        if key not in self._entries:
            raise MissingEntryError(f"no entry at {tuple(position)}")
        del self._entries[key]
        if key in self._pending:
            del self._pending[key]
        else:
            self._dead.add(key)
        self._maybe_rebuild()

    def set_weight(self, position, weight: float) -> None:
        """Update the payload weight without touching the spatial structure."""
        key = position_key(position)
        if key not in self._entries:
            raise MissingEntryError(f"no entry at {tuple(position)}")
        pos, _ = self._entries[key]
        self._entries[key] = (pos, float(weight))

    def _maybe_rebuild(self) -> None:
        if len(self._pending) > _REBUILD_LIMIT or len(self._dead) > _REBUILD_LIMIT:
            self.flush()

    def flush(self) -> None:
        """Rebuild the kd-tree so it mirrors the entry set exactly."""
        self._pending.clear()
        self._dead.clear()
        if not self._entries:
            self._tree = None
            self._tree_keys = []
            return
        self._tree_keys = list(self._entries.keys())
        pts = np.array([self._entries[k][0] for k in self._tree_keys], dtype=float)
        self._tree = cKDTree(pts)

    def knn(self, query, k: int) -> list[tuple[tuple[float, ...], float, float]]:
        """The ``min(k, len(self))`` nearest entries, ascending distance.

        Returns ``(position, weight, distance)`` triples. Distance ties break
        by lexicographic position comparison.
        """
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        q = as_point(query, self.dim)
        candidates: list[tuple[float, tuple[float, ...], tuple[int, ...]]] = []
        for key, pos in self._pending.items():
            d = float(np.linalg.norm(q - np.asarray(pos)))
            candidates.append((d, pos, key))
        candidates.extend(self._tree_candidates(q, k))
        candidates.sort(key=lambda c: (c[0], c[1]))
        out = []
        for d, pos, key in candidates[:k]:
            out.append((pos, self._entries[key][1], d))
        return out

    def _tree_candidates(self, q: np.ndarray, k: int):
        """Alive tree entries guaranteed to contain the k nearest of the tree.

        Queries extra slots to cover tombstones, and keeps growing the query
        while equal-distance entries might be cut off, so tie-breaking stays
        exact.
        """
        if self._tree is None:
            return []
        n_tree = len(self._tree_keys)
        kq = min(n_tree, k + len(self._dead))
        while True:
            dists, idxs = self._tree.query(q, k=kq)
            dists = np.atleast_1d(dists)
            idxs = np.atleast_1d(idxs)
            alive = [
                (float(d), self._entries[self._tree_keys[i]][0], self._tree_keys[i])
                for d, i in zip(dists, idxs)
                if self._tree_keys[i] not in self._dead
            ]
            if kq == n_tree:
                return alive
            if len(alive) >= k:
                # Safe to stop only if every omitted tree point is strictly
                # farther than our k-th candidate (ties could reorder).
                kth = sorted(a[0] for a in alive)[k - 1]
                if float(dists[-1]) > kth:
                    return alive
            kq = min(n_tree, kq * 2)

    def knn_batch(self, queries: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Vectorized k-NN for many queries.

        Returns ``(distances, positions, weights)`` with shapes (n, k'),
        (n, k', dim), (n, k') where ``k' = min(k, len(self))``; flushes
        buffered mutations first. Tie order follows the kd-tree.
        """
        self.flush()
        n = len(self._entries)
        queries = np.atleast_2d(np.asarray(queries, dtype=float))
        kk = min(k, n)
        if kk == 0:
            m = queries.shape[0]
            return (np.zeros((m, 0)), np.zeros((m, 0, self.dim)), np.zeros((m, 0)))
        dists, idxs = self._tree.query(queries, k=kk)
        if kk == 1:
            dists = dists[:, None]
            idxs = idxs[:, None]
        positions = self.positions_array()[idxs]
        weights = self.weights_array()[idxs]
        return dists, positions, weights

    def positions_array(self) -> np.ndarray:
        """All positions, insertion-ordered after a flush, shape (n, dim)."""
        self.flush()
        if not self._entries:
            return np.zeros((0, self.dim))
        return np.array([pos for pos, _ in self._entries.values()], dtype=float)

    def weights_array(self) -> np.ndarray:
        self.flush()
        return np.array([w for _, w in self._entries.values()], dtype=float)

    def items(self) -> list[tuple[tuple[float, ...], float]]:
        """(position, weight) pairs in insertion order."""
        return list(self._entries.values())


class SupportVectorIndex:
    """Pair of per-label :class:`ClassIndex` instances (+1 occupied, -1 free)."""

    def __init__(self, dim: int) -> None:
        self.dim = int(dim)
        self._by_label = {1: ClassIndex(dim), -1: ClassIndex(dim)}

    def _cls(self, label: int) -> ClassIndex:
        try:
            return self._by_label[int(label)]
        except KeyError:
            raise ValueError(f"label must be +1 or -1, got {label}") from None

    def insert(self, v: IndexedVector) -> None:
        self._cls(v.label).insert(v.position, v.weight)

    def remove(self, position, label: int) -> None:
        self._cls(label).remove(position)

    def update_weight(self, position, label: int, weight: float) -> None:
        self._cls(label).set_weight(position, weight)

    def knn(self, query, k: int, label: int) -> list[IndexedVector]:
        cls = self._cls(label)
        return [
            IndexedVector(position=pos, weight=w, label=int(label))
            for pos, w, _ in cls.knn(query, k)
        ]

    def size(self, label: int) -> int:
        return len(self._cls(label))
