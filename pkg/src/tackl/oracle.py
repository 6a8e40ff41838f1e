"""Sources of triplet answers: synthetic ground truth spaces and stored pools.

Four answering modes:

* deterministic ground truth -- compare squared distances in the true
  space, exact ties broken by coin flip;
* probabilistic ground truth -- sample the response from the ratio
  likelihood evaluated on the true space;
* pool -- look up the majority-vote answer recorded for the query;
* interactive -- a live human session (handled by the service layer,
  which plays the oracle role through the wire protocol).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from tackl.core import (
    TripletQuery,
    TripletResponse,
    all_queries,
    count_all_queries,
    pairwise_sq_dists,
)


class PoolMissError(KeyError):
    """The pool holds no response for the requested query.

    Callers running active selection against a pool should enable
    pool-restricted selection so only answerable queries are chosen.
    """

    def __init__(self, query: TripletQuery):
        super().__init__(str(query))
        self.query = query


class PoolBudgetError(RuntimeError):
    """Exhaustive enumeration would exceed the configured entry budget."""


# -- ground truth generation --------------------------------------------------


@dataclass(frozen=True)
class Uniform:
    lo: float = 0.0
    hi: float = 1.0

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size=n)


@dataclass(frozen=True)
class NormalMixture:
    """Components are (mean, stdev, weight) triples; weights must sum to 1."""

    components: tuple[tuple[float, float, float], ...]

    def __post_init__(self) -> None:
        w = sum(c[2] for c in self.components)
        if not self.components or abs(w - 1.0) > 1e-9:
            raise ValueError("mixture weights must sum to 1")

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        weights = np.array([c[2] for c in self.components])
        idx = rng.choice(len(self.components), size=n, p=weights)
        means = np.array([c[0] for c in self.components])[idx]
        stds = np.array([c[1] for c in self.components])[idx]
        return rng.normal(means, stds)


DimSpec = Uniform | NormalMixture


@dataclass(frozen=True)
class GroundTruthSpace:
    """The true perceptual space the simulated answer sources consult."""

    points: np.ndarray  # (n, d*)
    dim_specs: tuple[DimSpec, ...]
    seed: int

    @property
    def n(self) -> int:
        return self.points.shape[0]


def default_dim_specs(d: int, seed: int = 0, mixture_sd: float = 0.1) -> tuple[DimSpec, ...]:
    """Half uniform dims, half normal-mixture dims (uniforms first).

    Mixtures use 2-3 components with means in [0, 1], stdev ``mixture_sd``
    and equal weights; the component layout is drawn reproducibly from
    ``seed``.
    """
    if d < 1:
        raise ValueError("need at least one dimension")
    rng = np.random.default_rng([seed, 91])
    n_uniform = (d + 1) // 2
    specs: list[DimSpec] = [Uniform(0.0, 1.0) for _ in range(n_uniform)]
    for _ in range(d - n_uniform):
        k = int(rng.integers(2, 4))
        means = rng.uniform(0.0, 1.0, size=k)
        specs.append(NormalMixture(tuple((float(m), mixture_sd, 1.0 / k) for m in means)))
    return tuple(specs)


def generate_ground_truth(
    n: int, dim_specs: Sequence[DimSpec], seed: int = 0
) -> GroundTruthSpace:
    """Sample each dimension independently from its spec."""
    if n < 3:
        raise ValueError(f"need at least 3 objects, got {n}")
    if not dim_specs:
        raise ValueError("need at least one dimension spec")
    rng = np.random.default_rng([seed, 17])
    cols = [spec.sample(rng, n) for spec in dim_specs]
    return GroundTruthSpace(np.column_stack(cols), tuple(dim_specs), seed)


def make_aux_features(
    space: GroundTruthSpace,
    true_dims: Sequence[int],
    noise_dims: int,
    noise_spec: DimSpec | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Selected ground-truth columns followed by fresh noise columns."""
    for k in true_dims:
        if not 0 <= k < space.points.shape[1]:
            raise ValueError(f"true dimension index {k} out of range")
    if noise_dims < 0:
        raise ValueError("noise_dims must be >= 0")
    noise_spec = noise_spec if noise_spec is not None else Uniform(0.0, 1.0)
    rng = np.random.default_rng([seed, 53])
    cols = [space.points[:, k] for k in true_dims]
    cols += [noise_spec.sample(rng, space.n) for _ in range(noise_dims)]
    if not cols:
        raise ValueError("features need at least one column")
    return np.column_stack(cols)


# -- response pools -----------------------------------------------------------


@dataclass
class PoolEntry:
    response: TripletResponse
    votes_for: int
    votes_against: int
    tie_broken: bool = False


@dataclass
class ResponsePool:
    """Majority-vote answers keyed by canonical query.

    Doubles as an oracle (lookup) and as evaluation ground truth (the
    winning responses).  Immutable by convention once built.
    """

    entries: dict[TripletQuery, PoolEntry] = field(default_factory=dict)
    _pairs_by_head: dict[int, list[tuple[int, int]]] | None = None

    def add(self, entry: PoolEntry) -> None:
        q = entry.response.query()
        if q in self.entries:
            raise ValueError(f"duplicate pool entry for query {q}")
        if entry.votes_for < max(entry.votes_against, 1):
            raise ValueError(f"winner must hold at least as many votes: {entry}")
        self.entries[q] = entry
        self._pairs_by_head = None

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, q: TripletQuery) -> bool:
        return q in self.entries

    def lookup(self, q: TripletQuery) -> TripletResponse:
        entry = self.entries.get(q)
        if entry is None:
            raise PoolMissError(q)
        return entry.response

    def responses(self) -> list[TripletResponse]:
        """All winning responses, in canonical query order."""
        return [self.entries[q].response for q in sorted(self.entries)]

    def pairs_for_head(self, head: int) -> list[tuple[int, int]]:
        if self._pairs_by_head is None:
            by_head: dict[int, list[tuple[int, int]]] = {}
            for q in sorted(self.entries):
                by_head.setdefault(q.head, []).append(q.pair)
            self._pairs_by_head = by_head
        return self._pairs_by_head.get(head, [])

    def agreement_stats(self) -> tuple[float, float]:
        """(fraction with full agreement, fraction with a split vote)."""
        if not self.entries:
            return (0.0, 0.0)
        full = sum(1 for e in self.entries.values() if e.votes_against == 0)
        m = len(self.entries)
        return (full / m, (m - full) / m)


def aggregate_votes(
    votes: Iterable[TripletResponse], rng: np.random.Generator | None = None
) -> ResponsePool:
    """Majority-vote a stream of raw responses into a pool.

    An even split is broken by coin flip and flagged on the entry.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    counts: dict[TripletQuery, dict[TripletResponse, int]] = {}
    for r in votes:
        counts.setdefault(r.query(), {}).setdefault(r, 0)
        counts[r.query()][r] += 1
    pool = ResponsePool()
    for q in sorted(counts):
        a, b = q.responses()
        va, vb = counts[q].get(a, 0), counts[q].get(b, 0)
        tie = va == vb
        if tie:
            winner = a if rng.random() < 0.5 else b
        else:
            winner = a if va > vb else b
        w, l = (va, vb) if winner == a else (vb, va)
        pool.add(PoolEntry(winner, w, l, tie_broken=tie))
    return pool


# -- answer sources -----------------------------------------------------------


class DeterministicOracle:
    """Answer by direct distance comparison in the ground-truth space."""

    def __init__(self, space: GroundTruthSpace):
        self.space = space
        self._dists = pairwise_sq_dists(space.points)

    def answer_query(self, q: TripletQuery, rng: np.random.Generator) -> TripletResponse:
        b, c = q.pair
        d_ab, d_ac = self._dists[q.head, b], self._dists[q.head, c]
        if d_ab == d_ac:
            return TripletResponse(q.head, b, c) if rng.random() < 0.5 else TripletResponse(q.head, c, b)
        return TripletResponse(q.head, b, c) if d_ab < d_ac else TripletResponse(q.head, c, b)


class ProbabilisticOracle:
    """Sample the response from the ratio likelihood on the true space."""

    def __init__(self, space: GroundTruthSpace, mu: float):
        if mu <= 0:
            raise ValueError("mu must be positive")
        self.space = space
        self.mu = mu
        self._dists = pairwise_sq_dists(space.points)

    def response_probability(self, r: TripletResponse) -> float:
        d_ab = self._dists[r.head, r.closer]
        d_ac = self._dists[r.head, r.farther]
        return (self.mu + d_ac) / (2.0 * self.mu + d_ac + d_ab)

    def answer_query(self, q: TripletQuery, rng: np.random.Generator) -> TripletResponse:
        b, c = q.pair
        r = TripletResponse(q.head, b, c)
        return r if rng.random() < self.response_probability(r) else r.flipped()


class PoolOracle:
    """Answer from a stored majority-vote pool; missing queries raise."""

    def __init__(self, pool: ResponsePool):
        self.pool = pool

    def answer_query(self, q: TripletQuery, rng: np.random.Generator) -> TripletResponse:
        return self.pool.lookup(q)


def answer_query(oracle, q: TripletQuery, rng: np.random.Generator) -> TripletResponse:
    return oracle.answer_query(q, rng)


DEFAULT_POOL_BUDGET = 10_000_000
_WARN_POOL_SIZE = 1_000_000


def exhaustive_pool(
    space: GroundTruthSpace,
    mode: str = "deterministic",
    mu: float = 1e-4,
    seed: int = 0,
    budget: int = DEFAULT_POOL_BUDGET,
    force: bool = False,
) -> ResponsePool:
    """Answer every canonical query over the space's objects.

    Deterministic mode records each winner with a 1-0 vote.  Guard rails:
    enumeration beyond ``budget`` entries requires ``force``; anything
    above a million entries warns.
    """
    n = space.n
    total = count_all_queries(n)
    if total > budget and not force:
        raise PoolBudgetError(
            f"exhaustive pool for n={n} has {total} entries (budget {budget}); "
            "pass force=True to proceed"
        )
    if total > _WARN_POOL_SIZE:
        warnings.warn(f"enumerating {total} triplet queries; this may take a while")
    if mode == "deterministic":
        oracle = DeterministicOracle(space)
    elif mode == "probabilistic":
        oracle = ProbabilisticOracle(space, mu)
    else:
        raise ValueError(f"unknown exhaustive pool mode {mode!r}")
    rng = np.random.default_rng([seed, 29])

    # Vectorized enumeration: for each head, compare distances to all pairs.
    pool = ResponsePool()
    dists = oracle._dists
    for a in range(n):
        others = np.array([j for j in range(n) if j != a])
        iu, ju = np.triu_indices(len(others), k=1)
        bs, cs = others[iu], others[ju]
        d_ab, d_ac = dists[a, bs], dists[a, cs]
        if mode == "deterministic":
            b_wins = d_ab < d_ac
            ties = d_ab == d_ac
            if np.any(ties):
                flips = rng.random(int(np.sum(ties))) < 0.5
                b_wins = b_wins.copy()
                b_wins[np.where(ties)[0]] = flips
        else:
            p_b = (mu + d_ac) / (2.0 * mu + d_ac + d_ab)
            b_wins = rng.random(len(bs)) < p_b
            ties = np.zeros(len(bs), dtype=bool)
        for b, c, bw, tie in zip(bs, cs, b_wins, ties):
            r = TripletResponse(a, int(b), int(c)) if bw else TripletResponse(a, int(c), int(b))
            pool.add(PoolEntry(r, 1, 0, tie_broken=bool(tie)))
    return pool
