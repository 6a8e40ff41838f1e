"""Data model and likelihood algebra for triplet similarity learning.

Objects live in a combined representation: the first block of coordinates
is a set of auxiliary feature vectors, each column scaled by a learned
nonnegative weight, and the second block is a freely learned embedding.
A triplet response (head, closer, farther) is scored by the ratio
likelihood

    p = (mu + D_hf) / (2*mu + D_hf + D_hc)

where D_hf and D_hc are squared Euclidean distances from the head to the
farther and closer objects in the combined space, and mu > 0 is a
stabilizer that pulls probabilities toward 0.5.  Everything downstream
(fitting, active query scoring, evaluation metrics) computes through the
functions in this module.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator, Sequence

import numpy as np

DEFAULT_MU = 1e-4

TripletArray = np.ndarray  # (m, 3) integer array of (head, closer, farther)


class ModelKind(Enum):
    """Which parts of the combined representation a model learns."""

    CKL = "ckl"                    # free embedding only
    TACKL = "tackl"                # weighted features + free embedding
    FEATURES_ONLY = "features-only"  # unit-weighted features, no free block


@dataclass(frozen=True, order=True)
class TripletQuery:
    """An unanswered question: is `head` closer to one pair member or the other?

    The pair is stored in ascending index order so that logically equal
    queries hash and compare equal regardless of construction order.
    Ordering (head, then pair) is the canonical tie-break order used by
    the active selection loop.
    """

    head: int
    pair: tuple[int, int]

    def __post_init__(self) -> None:
        b, c = self.pair
        if b == c or self.head == b or self.head == c:
            raise ValueError(f"degenerate query ({self.head}, {{{b}, {c}}})")
        if b > c:
            object.__setattr__(self, "pair", (c, b))

    def responses(self) -> tuple["TripletResponse", "TripletResponse"]:
        """The two possible answers, in canonical pair order."""
        b, c = self.pair
        return (TripletResponse(self.head, b, c), TripletResponse(self.head, c, b))


@dataclass(frozen=True, order=True)
class TripletResponse:
    """An answered query: `head` is more similar to `closer` than to `farther`."""

    head: int
    closer: int
    farther: int

    def __post_init__(self) -> None:
        if len({self.head, self.closer, self.farther}) != 3:
            raise ValueError(
                f"response ids must be distinct: ({self.head}, {self.closer}, {self.farther})"
            )

    def query(self) -> TripletQuery:
        return TripletQuery(self.head, (self.closer, self.farther))

    def flipped(self) -> "TripletResponse":
        return TripletResponse(self.head, self.farther, self.closer)


def _as_readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=np.float64, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class CombinedModel:
    """Weighted auxiliary features concatenated with a free embedding.

    ``features`` is (n, d) with d == 0 for purely nonparametric models;
    ``weights`` is the length-d nonnegative column scaling; ``free`` is
    (n, dhat) with dhat == 0 for features-only models.  Instances are
    immutable after construction and safe to share across threads.
    """

    features: np.ndarray
    weights: np.ndarray
    free: np.ndarray
    mu: float = DEFAULT_MU

    def __post_init__(self) -> None:
        feats = np.atleast_2d(np.asarray(self.features, dtype=np.float64))
        free = np.atleast_2d(np.asarray(self.free, dtype=np.float64))
        w = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if feats.size == 0:
            feats = feats.reshape(max(feats.shape[0], free.shape[0]), 0)
        if free.size == 0:
            free = free.reshape(max(free.shape[0], feats.shape[0]), 0)
        if feats.shape[0] != free.shape[0]:
            raise ValueError(
                f"feature rows ({feats.shape[0]}) != free rows ({free.shape[0]})"
            )
        if w.shape[0] != feats.shape[1]:
            raise ValueError(f"weight length {w.shape[0]} != feature dim {feats.shape[1]}")
        if not (np.all(np.isfinite(feats)) and np.all(np.isfinite(free)) and np.all(np.isfinite(w))):
            raise ValueError("model parameters must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if not (np.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be positive, got {self.mu}")
        object.__setattr__(self, "features", _as_readonly(feats))
        object.__setattr__(self, "free", _as_readonly(free))
        object.__setattr__(self, "weights", _as_readonly(w))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def dhat(self) -> int:
        return self.free.shape[1]

    def with_free(self, free: np.ndarray) -> "CombinedModel":
        return CombinedModel(self.features, self.weights, free, self.mu)

    def with_weights(self, weights: np.ndarray) -> "CombinedModel":
        return CombinedModel(self.features, weights, self.free, self.mu)


def ckl_model(free: np.ndarray, mu: float = DEFAULT_MU) -> CombinedModel:
    """Purely nonparametric model: empty feature block."""
    free = np.atleast_2d(np.asarray(free, dtype=np.float64))
    return CombinedModel(np.zeros((free.shape[0], 0)), np.zeros(0), free, mu)


def features_only_model(features: np.ndarray, mu: float = DEFAULT_MU) -> CombinedModel:
    """Unit weights, no free block: the raw-feature baseline."""
    features = np.atleast_2d(np.asarray(features, dtype=np.float64))
    n, d = features.shape
    return CombinedModel(features, np.ones(d), np.zeros((n, 0)), mu)


def _check_index(model: CombinedModel, i: int) -> None:
    if not 0 <= i < model.n:
        raise IndexError(f"object index {i} out of range for n={model.n}")


def parametric_matrix(model: CombinedModel) -> np.ndarray:
    """The weighted feature block, one row per object: w * x_i elementwise."""
    return model.features * model.weights


def combined_matrix(model: CombinedModel) -> np.ndarray:
    """All combined points as an (n, d + dhat) array."""
    return np.hstack([parametric_matrix(model), model.free])


def combined_point(model: CombinedModel, i: int) -> np.ndarray:
    """The combined representation of object i."""
    _check_index(model, i)
    return np.concatenate([model.weights * model.features[i], model.free[i]])


def sq_dist(model: CombinedModel, i: int, j: int) -> float:
    """Squared Euclidean distance between combined points i and j."""
    _check_index(model, i)
    _check_index(model, j)
    diff = combined_point(model, i) - combined_point(model, j)
    return float(diff @ diff)


def responses_array(responses: Iterable[TripletResponse]) -> TripletArray:
    """Pack responses into an (m, 3) int array of (head, closer, farther)."""
    arr = np.array([(r.head, r.closer, r.farther) for r in responses], dtype=np.int64)
    return arr.reshape(-1, 3)


def pairwise_sq_dists(points: np.ndarray) -> np.ndarray:
    """Full (n, n) matrix of squared Euclidean distances, clipped at 0."""
    sq = np.sum(points * points, axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    return np.maximum(d, 0.0)


def triplet_likelihoods_from_points(
    points: np.ndarray, triplets: TripletArray, mu: float
) -> np.ndarray:
    """Vectorized response likelihoods for rows (head, closer, farther).

    Operates on any point matrix: the weighted feature block alone, the
    free block alone, or the full combined representation.
    """
    t = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
    if t.shape[0] == 0:
        return np.zeros(0)
    pa, pb, pc = points[t[:, 0]], points[t[:, 1]], points[t[:, 2]]
    d_ab = np.sum((pa - pb) ** 2, axis=1)
    d_ac = np.sum((pa - pc) ** 2, axis=1)
    return (mu + d_ac) / (2.0 * mu + d_ac + d_ab)


def triplet_likelihood(model: CombinedModel, r: TripletResponse) -> float:
    """Probability mass the model assigns to the observed response.

    Strictly inside (0, 1) for mu > 0, and complementary with the flipped
    response: p(a,b,c) + p(a,c,b) == 1.
    """
    d_ac = sq_dist(model, r.head, r.farther)
    d_ab = sq_dist(model, r.head, r.closer)
    return (model.mu + d_ac) / (2.0 * model.mu + d_ac + d_ab)


def log_likelihood(
    model: CombinedModel,
    responses: Sequence[TripletResponse] | TripletArray,
    subset: str = "combined",
) -> float:
    """Sum of log response likelihoods over ``responses``.

    ``subset`` selects the representation: "combined" uses the full
    points (weighted features + free block); "parametric" uses the
    weighted feature block alone, which is the objective of the
    constrained weight fit.
    """
    if subset == "combined":
        points = combined_matrix(model)
    elif subset in ("parametric", "parametric-only"):
        points = parametric_matrix(model)
    else:
        raise ValueError(f"unknown subset {subset!r}")
    triplets = responses if isinstance(responses, np.ndarray) else responses_array(responses)
    if triplets.shape[0] == 0:
        return 0.0
    p = triplet_likelihoods_from_points(points, triplets, model.mu)
    return float(np.sum(np.log(p)))


def count_all_queries(n: int) -> int:
    """Number of distinct canonical queries over n objects: n*(n-1)*(n-2)/2."""
    if n < 3:
        raise ValueError(f"need at least 3 objects, got {n}")
    return n * (n - 1) * (n - 2) // 2


def all_queries(n: int) -> Iterator[TripletQuery]:
    """Every canonical query over n objects, in canonical order."""
    if n < 3:
        raise ValueError(f"need at least 3 objects, got {n}")
    for a in range(n):
        for b in range(n):
            if b == a:
                continue
            for c in range(b + 1, n):
                if c == a:
                    continue
                yield TripletQuery(a, (b, c))
