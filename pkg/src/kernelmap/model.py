"""Sparse kernel-perceptron occupancy model.

The map is a pair of weighted point sets (positive = occupied evidence,
negative = free evidence). The score

    F(x) = sum_i w_i^+ k(x_i^+, x) - sum_j w_j^- k(x_j^-, x)

classifies occupancy by sign; incremental training corrects the most-margin-
violating sample of each local batch with a one-step weight update and prunes
support vectors that stay correctly classified without their own
contribution.

Concurrency: training takes the model's write lock; ``score``/``classify``
read immutable snapshots and may run concurrently with each other, but not
with training on the same instance.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .geometry import KernelParams, as_point
from .index import ClassIndex, position_key

MODEL_FORMAT_VERSION = 1

#: Idealized storage per support vector (packed grid id + float weight).
BYTES_PER_SUPPORT_VECTOR = 8


class ModelFormatError(ValueError):
    """Malformed or invalid serialized model."""


class TrainingDivergedError(RuntimeError):
    """Non-finite scores encountered during training (corrupted weights)."""


def rbf_kernel(x, y, params: KernelParams) -> float:
    """``eta * exp(-gamma * ||x - y||^2)``; symmetric, bounded by eta."""
    a = as_point(x)
    b = as_point(y, a.size)
    d2 = float(np.dot(a - b, a - b))
    return params.eta * math.exp(-params.gamma * d2)


def _kernel_matrix(X: np.ndarray, P: np.ndarray, params: KernelParams) -> np.ndarray:
    if P.shape[0] == 0:
        return np.zeros((X.shape[0], 0))
    return params.eta * np.exp(-params.gamma * cdist(X, P, "sqeuclidean"))


@dataclass(frozen=True)
class TrainingConfig:
    """Knobs for one incremental training call.

    Attributes
    ----------
    xi_plus, xi_minus:
        Target margins for occupied / free corrections, > 0.
    n_max:
        Update budget; ``None`` means 5x the batch size.
    anchor:
        Where the initial-score k-NN query is anchored: ``"sample"`` queries
        the neighbors of every batch point, ``"robot"`` uses one query at the
        robot position (cheaper, requires passing ``robot_position``).
    """

    xi_plus: float = 1.0
    xi_minus: float = 1.0
    n_max: int | None = None
    anchor: str = "sample"

    def __post_init__(self) -> None:
        if self.xi_plus <= 0.0 or self.xi_minus <= 0.0:
            raise ValueError("xi_plus and xi_minus must be > 0")
        if self.n_max is not None and self.n_max < 1:
            raise ValueError("n_max must be >= 1")
        if self.anchor not in ("sample", "robot"):
            raise ValueError(f"anchor must be 'sample' or 'robot', got {self.anchor!r}")


@dataclass(frozen=True)
class TrainReport:
    converged: bool
    iterations: int
    added: int
    removed: int


class TrainingBatch:
    """Labeled C-space samples from one scan: positions (n, d), labels in {-1, +1}."""

    __slots__ = ("positions", "labels")

    def __init__(self, samples: Iterable[tuple[Sequence[float], int]]) -> None:
        pts = []
        labels = []
        seen = set()
        for p, q in samples:
            a = as_point(p)
            if int(q) not in (-1, 1):
                raise ValueError(f"label must be +1 or -1, got {q}")
            key = position_key(a)
            if key in seen:
                raise ValueError(f"duplicate sample position {tuple(a)}")
            seen.add(key)
            pts.append(a)
            labels.append(int(q))
        if not pts:
            raise ValueError("training batch must be nonempty")
        self.positions = np.array(pts, dtype=float)
        self.labels = np.array(labels, dtype=int)

    @classmethod
    def from_arrays(cls, positions: np.ndarray, labels: np.ndarray) -> "TrainingBatch":
        return cls(zip(np.asarray(positions, dtype=float), np.asarray(labels, dtype=int)))

    def __len__(self) -> int:
        return int(self.labels.size)


class SupportVectorModel:
    """Occupancy map as two weighted support-vector sets plus k-NN indices.

    Parameters
    ----------
    dim:
        C-space dimension, fixed at construction.
    kernel:
        RBF parameters.
    approx_k:
        ``(K_pos, K_neg)`` neighbor counts for approximate scoring, or
        ``None`` to always score exactly.
    """

    def __init__(
        self,
        dim: int = 2,
        kernel: KernelParams = KernelParams(),
        approx_k: tuple[int, int] | None = (100, 100),
    ) -> None:
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if approx_k is not None and (approx_k[0] < 1 or approx_k[1] < 1):
            raise ValueError(f"approx_k entries must be >= 1, got {approx_k}")
        self.dim = int(dim)
        self.kernel = kernel
        self.approx_k = approx_k
        self._pos = ClassIndex(dim)
        self._neg = ClassIndex(dim)
        self._snapshot: tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray] | None = None
        self._write_lock = threading.Lock()

    # -- introspection ------------------------------------------------------

    @property
    def num_positive(self) -> int:
        return len(self._pos)

    @property
    def num_negative(self) -> int:
        return len(self._neg)

    @property
    def num_support_vectors(self) -> int:
        return len(self._pos) + len(self._neg)

    def class_index(self, label: int) -> ClassIndex:
        return self._pos if label > 0 else self._neg

    def support_vectors(self, label: int) -> list[tuple[tuple[float, ...], float]]:
        """(position, weight) pairs of one class, insertion-ordered."""
        return self.class_index(label).items()

    def _arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Immutable (pos_pts, pos_w, neg_pts, neg_w) snapshot for exact scoring."""
        snap = self._snapshot
        if snap is None:
            snap = (
                self._pos.positions_array(),
                self._pos.weights_array(),
                self._neg.positions_array(),
                self._neg.weights_array(),
            )
            for a in snap:
                a.setflags(write=False)
            self._snapshot = snap
        return snap

    @property
    def positive_weight_sum(self) -> float:
        return float(self._arrays()[1].sum())

    def storage_estimate(self) -> int:
        """Idealized map size in bytes: 8 per support vector."""
        return BYTES_PER_SUPPORT_VECTOR * self.num_support_vectors

    # -- scoring ------------------------------------------------------------

    def score(self, x, approximate: bool = False) -> float:
        return float(self.score_many(np.asarray(x, dtype=float)[None, :], approximate)[0])

    def score_many(self, X: np.ndarray, approximate: bool = False) -> np.ndarray:
        """Score at each row of ``X``; empty model scores 0 everywhere."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim}-d queries, got {X.shape[1]}-d")
        if approximate and self.approx_k is not None:
            return self._score_knn(X, self.approx_k[0], self.approx_k[1])
        pos_pts, pos_w, neg_pts, neg_w = self._arrays()
        return _kernel_matrix(X, pos_pts, self.kernel) @ pos_w - _kernel_matrix(
            X, neg_pts, self.kernel
        ) @ neg_w

    def _score_knn(self, X: np.ndarray, k_pos: int, k_neg: int) -> np.ndarray:
        total = np.zeros(X.shape[0])
        for cls, k, sign in ((self._pos, k_pos, 1.0), (self._neg, k_neg, -1.0)):
            d, _, w = cls.knn_batch(X, k)
            if d.shape[1]:
                total += sign * (self.kernel.eta * np.exp(-self.kernel.gamma * d**2) * w).sum(
                    axis=1
                )
        return total

    def classify(self, x, approximate: bool = False) -> int:
        """-1 (free) iff score < 0, else +1; an empty model is all free."""
        if self.num_support_vectors == 0:
            return -1
        return -1 if self.score(x, approximate) < 0.0 else 1

    def classify_many(self, X: np.ndarray, approximate: bool = False) -> np.ndarray:
        if self.num_support_vectors == 0:
            return -np.ones(np.atleast_2d(X).shape[0], dtype=int)
        s = self.score_many(X, approximate)
        return np.where(s < 0.0, -1, 1)

    # -- mutation primitives (used by training) -----------------------------

    def _insert(self, pos: np.ndarray, weight: float, label: int) -> None:
        self.class_index(label).insert(pos, weight)
        self._snapshot = None

    def _remove(self, pos: np.ndarray, label: int) -> None:
        self.class_index(label).remove(pos)
        self._snapshot = None

    def _set_weight(self, pos: np.ndarray, weight: float, label: int) -> None:
        self.class_index(label).set_weight(pos, weight)
        self._snapshot = None

    # -- training -----------------------------------------------------------

    def train_increment(
        self,
        batch: TrainingBatch,
        cfg: TrainingConfig = TrainingConfig(),
        robot_position: Sequence[float] | None = None,
        validate_bookkeeping: bool = False,
    ) -> TrainReport:
        """One incremental training pass over a local batch.

        Repeatedly picks the worst-margin sample ``m`` (argmin of
        ``label * score``), applies the one-step correction
        ``delta = xi * label_m - score_m`` to its weight (creating a support
        vector if needed), then prunes batch points whose removal keeps them
        correctly classified. Sample scores are maintained incrementally.

        ``validate_bookkeeping`` recomputes the approximate score from
        scratch after every model mutation and raises if the incremental
        values drift by more than 1e-9 (test hook; quadratic cost).
        """
        with self._write_lock:
            return self._train_locked(batch, cfg, robot_position, validate_bookkeeping)

    def _train_locked(
        self,
        batch: TrainingBatch,
        cfg: TrainingConfig,
        robot_position: Sequence[float] | None,
        validate_bookkeeping: bool,
    ) -> TrainReport:
        P = batch.positions
        if P.shape[1] != self.dim:
            raise ValueError(f"batch dimension {P.shape[1]} != model dimension {self.dim}")
        q = batch.labels.astype(float)
        n = len(batch)
        n_max = cfg.n_max if cfg.n_max is not None else 5 * n
        eta, gamma = self.kernel.eta, self.kernel.gamma

        F = self._initial_scores(P, cfg, robot_position)

        # Per-sample weight bookkeeping: > 0 where the sample currently is a
        # support vector of that class.
        pos_w = np.zeros(n)
        neg_w = np.zeros(n)
        for l in range(n):
            w = self._pos.get_weight(P[l])
            if w is not None:
                pos_w[l] = w
            w = self._neg.get_weight(P[l])
            if w is not None:
                neg_w[l] = w

        columns: dict[int, np.ndarray] = {}

        def col(l: int) -> np.ndarray:
            c = columns.get(l)
            if c is None:
                diff = P - P[l]
                c = eta * np.exp(-gamma * np.einsum("ij,ij->i", diff, diff))
                columns[l] = c
            return c

        def check(F_now: np.ndarray) -> None:
            if not np.all(np.isfinite(F_now)):
                raise TrainingDivergedError("non-finite sample scores during training")
            if validate_bookkeeping:
                fresh = self.score_many(P, approximate=True)
                err = float(np.max(np.abs(fresh - F_now)))
                if err > 1e-9:
                    raise AssertionError(f"incremental score drift {err:.3e} exceeds 1e-9")

        added = removed = 0
        iterations = 0
        converged = False
        while True:
            margins = q * F
            if np.all(margins > 0.0):
                converged = True
                break
            if iterations >= n_max:
                break
            iterations += 1
            m = int(np.argmin(margins))
            xi = cfg.xi_plus if q[m] > 0 else cfg.xi_minus
            delta = xi * q[m] - F[m]
            km = col(m)
            if pos_w[m] > 0.0:
                new_w = pos_w[m] + delta
                if new_w > 0.0:
                    self._set_weight(P[m], new_w, 1)
                    pos_w[m] = new_w
                    F += km * delta
                else:
                    # Correction would flip the weight sign; drop the vector
                    # instead (it may re-enter the other class later).
                    self._remove(P[m], 1)
                    F -= km * pos_w[m]
                    pos_w[m] = 0.0
                    removed += 1
            elif neg_w[m] > 0.0:
                new_w = neg_w[m] - delta
                if new_w > 0.0:
                    self._set_weight(P[m], new_w, -1)
                    neg_w[m] = new_w
                    F += km * delta
                else:
                    self._remove(P[m], -1)
                    F += km * neg_w[m]
                    neg_w[m] = 0.0
                    removed += 1
            elif q[m] > 0:
                self._insert(P[m], delta, 1)
                pos_w[m] = delta
                F += km * delta
                added += 1
            else:
                self._insert(P[m], -delta, -1)
                neg_w[m] = -delta
                F += km * delta
                added += 1
            check(F)

            # Prune batch points that stay correctly classified without
            # their own contribution; one ordered pass, scores updated as
            # we go.
            l = 0
            while l < n:
                hit = np.nonzero(
                    ((pos_w[l:] > 0.0) & (q[l:] * (F[l:] - pos_w[l:]) > 0.0))
                    | ((neg_w[l:] > 0.0) & (q[l:] * (F[l:] + neg_w[l:]) > 0.0))
                )[0]
                if hit.size == 0:
                    break
                l = l + int(hit[0])
                kl = col(l)
                if pos_w[l] > 0.0 and q[l] * (F[l] - pos_w[l]) > 0.0:
                    self._remove(P[l], 1)
                    F -= kl * pos_w[l]
                    pos_w[l] = 0.0
                    removed += 1
                elif neg_w[l] > 0.0 and q[l] * (F[l] + neg_w[l]) > 0.0:
                    self._remove(P[l], -1)
                    F += kl * neg_w[l]
                    neg_w[l] = 0.0
                    removed += 1
                check(F)
                l += 1

        return TrainReport(converged=converged, iterations=iterations, added=added, removed=removed)

    def _initial_scores(
        self, P: np.ndarray, cfg: TrainingConfig, robot_position
    ) -> np.ndarray:
        if self.approx_k is None:
            return self.score_many(P, approximate=False)
        k_pos, k_neg = self.approx_k
        if cfg.anchor == "robot":
            if robot_position is None:
                raise ValueError("anchor='robot' requires robot_position")
            anchor = as_point(robot_position, self.dim)
            F = np.zeros(P.shape[0])
            for cls, k, sign in ((self._pos, k_pos, 1.0), (self._neg, k_neg, -1.0)):
                if len(cls) == 0:
                    continue
                near = cls.knn(anchor, min(k, len(cls)))
                pts = np.array([p for p, _, _ in near], dtype=float)
                w = np.array([wt for _, wt, _ in near], dtype=float)
                F += sign * _kernel_matrix(P, pts, self.kernel) @ w
            return F
        return self._score_knn(P, k_pos, k_neg)

    # -- serialization ------------------------------------------------------

    def to_json(self) -> str:
        """Versioned JSON: exact positions and full-precision weights."""
        doc = {
            "version": MODEL_FORMAT_VERSION,
            "dim": self.dim,
            "kernel": {"eta": self.kernel.eta, "gamma": self.kernel.gamma},
            "positives": [
                {"p": list(p), "w": w} for p, w in self._pos.items()
            ],
            "negatives": [
                {"p": list(p), "w": w} for p, w in self._neg.items()
            ],
        }
        return json.dumps(doc)

    def to_bytes(self) -> bytes:
        return self.to_json().encode("utf-8")

    @classmethod
    def from_json(
        cls, text: str | bytes, approx_k: tuple[int, int] | None = (100, 100)
    ) -> "SupportVectorModel":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ModelFormatError(f"model file is not valid JSON: {e}") from e
        if not isinstance(doc, dict):
            raise ModelFormatError("model file must contain a JSON object")
        if doc.get("version") != MODEL_FORMAT_VERSION:
            raise ModelFormatError(
                f"unsupported model version {doc.get('version')!r}; expected {MODEL_FORMAT_VERSION}"
            )
        try:
            kernel = KernelParams(eta=float(doc["kernel"]["eta"]), gamma=float(doc["kernel"]["gamma"]))
            dim = int(doc["dim"])
            model = cls(dim=dim, kernel=kernel, approx_k=approx_k)
            for label, field in ((1, "positives"), (-1, "negatives")):
                for entry in doc[field]:
                    w = float(entry["w"])
                    if not (w > 0.0 and math.isfinite(w)):
                        raise ModelFormatError(f"weight must be positive and finite, got {w}")
                    model._insert(as_point(entry["p"], dim), w, label)
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, ModelFormatError):
                raise
            raise ModelFormatError(f"malformed model file: {e}") from e
        return model
