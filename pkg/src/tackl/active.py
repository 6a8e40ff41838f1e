"""Active triplet query selection by expected posterior entropy.

Selection runs in rounds: one query per head per round.  Round 0 picks a
uniformly random pair for every head; later rounds score a random subset
of candidate pairs per head and ask the one whose expected post-response
entropy over a sampled hypothesis set is lowest.

For the combined model the hypothesis set is the cross product of weight
draws (uniform per coordinate on [0, 2 max w]) and head-position draws
(uniform per coordinate on [-M, M], M the largest free-coordinate
magnitude); hypothesis posteriors are discrete likelihood weights over
that set, accumulated in the log domain.  For the nonparametric baseline
the head hypotheses are the current positions of the other objects.

Seed streams are derived from (seed, trial, round, head, stream) so that
schedules are reproducible, all methods share round-0 and random-round
draws, and both active methods score the same candidate draws.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from math import ceil, sqrt
from typing import Sequence

import numpy as np

from tackl.core import (
    CombinedModel,
    ModelKind,
    TripletQuery,
    TripletResponse,
    ckl_model,
)
from tackl.metrics import MetricRecord, snapshot
from tackl.optim import FitConfig, FitReport, fit_ckl, fit_tackl
from tackl.oracle import ResponsePool


class HeadExhausted(RuntimeError):
    """No candidate query remains for this head; the round skips it."""

    def __init__(self, head: int):
        super().__init__(f"head {head} has no remaining candidate queries")
        self.head = head


@dataclass(frozen=True)
class ActiveConfig:
    """Hypothesis sampling and candidate subsampling knobs.

    ``None`` counts resolve from n at query time: w_samples = ceil(sqrt(n)),
    xhat_samples = n, and ckl_samples = w_samples * xhat_samples so both
    active methods take exactly the same number of samples;
    candidate_pairs_per_head = min(50, (n-1)(n-2)/2).
    ``fallback_scale`` replaces degenerate (all-zero) sampling bounds.
    """

    w_samples: int | None = None
    xhat_samples: int | None = None
    ckl_samples: int | None = None
    candidate_pairs_per_head: int | None = None
    pool_restricted: bool = False
    ckl_hypotheses: str = "positions"  # positions | box
    fallback_scale: float = 0.1
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("w_samples", "xhat_samples", "ckl_samples", "candidate_pairs_per_head"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ValueError(f"{name} must be >= 1, got {v}")
        if self.ckl_hypotheses not in ("positions", "box"):
            raise ValueError(f"unknown ckl_hypotheses mode {self.ckl_hypotheses!r}")

    def resolve(self, n: int) -> "ActiveConfig":
        """Fill None fields with their n-derived defaults."""
        w = self.w_samples if self.w_samples is not None else ceil(sqrt(n))
        x = self.xhat_samples if self.xhat_samples is not None else n
        c = self.ckl_samples if self.ckl_samples is not None else w * x
        k = (
            self.candidate_pairs_per_head
            if self.candidate_pairs_per_head is not None
            else min(50, (n - 1) * (n - 2) // 2)
        )
        return dataclasses.replace(
            self, w_samples=w, xhat_samples=x, ckl_samples=c, candidate_pairs_per_head=k
        )


# -- hypothesis sets ----------------------------------------------------------


@dataclass
class HypothesisSet:
    """Sampled re-positionings of one head, with cached distance tables.

    For the combined model each hypothesis is a (weight draw, head free
    position draw) pair from the cross product of ``w_draws`` and
    ``xa_draws``; the weight also moves every other object through the
    feature block.  For the nonparametric baseline hypotheses are head
    positions only.  ``feat_sq[i, j]`` holds the feature-block squared
    distance from the head to object j under weight draw i, and
    ``free_sq[u, j]`` the free-block squared distance under position
    draw u; the flattened hypothesis index is i * len(xa_draws) + u.
    """

    head: int
    model: CombinedModel
    kind: ModelKind
    w_draws: np.ndarray | None    # (mw, d) or None for the nonparametric baseline
    xa_draws: np.ndarray          # (mx, dhat)
    feat_sq: np.ndarray | None
    free_sq: np.ndarray

    @property
    def m(self) -> int:
        if self.w_draws is None:
            return self.xa_draws.shape[0]
        return self.w_draws.shape[0] * self.xa_draws.shape[0]

    def sq_dists_to(self, j: int) -> np.ndarray:
        """Squared distance from every hypothesized head to object j."""
        if self.w_draws is None:
            return self.free_sq[:, j]
        return np.add.outer(self.feat_sq[:, j], self.free_sq[:, j]).ravel()

    def pair_likelihoods(self, b: int, c: int) -> tuple[np.ndarray, np.ndarray]:
        """Per-hypothesis likelihoods of responses (head,b,c) and (head,c,b)."""
        d_ab = self.sq_dists_to(b)
        d_ac = self.sq_dists_to(c)
        denom = 2.0 * self.model.mu + d_ac + d_ab
        return (self.model.mu + d_ac) / denom, (self.model.mu + d_ab) / denom

    def likelihoods(self, r: TripletResponse) -> np.ndarray:
        if r.head != self.head:
            raise ValueError(f"response head {r.head} != hypothesis head {self.head}")
        return self.pair_likelihoods(r.closer, r.farther)[0]

    def log_weights(self, conditioning: Sequence[TripletResponse]) -> np.ndarray:
        """Unnormalized log posterior weights given the conditioning responses."""
        lw = np.zeros(self.m)
        for r in conditioning:
            lw += np.log(self.likelihoods(r))
        return lw


def sample_hypotheses(
    model: CombinedModel,
    head: int,
    cfg: ActiveConfig,
    kind: ModelKind,
    rng: np.random.Generator,
) -> HypothesisSet:
    """Draw the hypothesis set for one head from the current model.

    Weight draws come first from ``rng``, then head-position draws, so a
    fixed generator state reproduces the set exactly.
    """
    if not 0 <= head < model.n:
        raise IndexError(f"head {head} out of range for n={model.n}")
    cfg = cfg.resolve(model.n)
    free = model.free

    if kind == ModelKind.TACKL:
        if model.d == 0:
            raise ValueError("combined-model hypotheses need a nonempty feature block")
        w_bound = 2.0 * float(np.max(model.weights))
        if w_bound <= 0.0:
            w_bound = 2.0 * cfg.fallback_scale
        w_draws = rng.uniform(0.0, w_bound, size=(cfg.w_samples, model.d))
        x_bound = float(np.max(np.abs(free))) if free.size else 0.0
        if x_bound <= 0.0:
            x_bound = cfg.fallback_scale
        xa_draws = rng.uniform(-x_bound, x_bound, size=(cfg.xhat_samples, model.dhat))
        feat_diff_sq = (model.features[head] - model.features) ** 2  # (n, d)
        feat_sq = (w_draws * w_draws) @ feat_diff_sq.T  # (mw, n)
    elif kind == ModelKind.CKL:
        if model.d != 0:
            raise ValueError("nonparametric hypotheses require a model without features")
        others = np.array([j for j in range(model.n) if j != head])
        if cfg.ckl_hypotheses == "positions" and free.shape[1] > 0:
            replace = cfg.ckl_samples > len(others)
            idx = rng.choice(len(others), size=cfg.ckl_samples, replace=replace)
            xa_draws = free[others[idx]]
        else:
            x_bound = float(np.max(np.abs(free))) if free.size else 0.0
            if x_bound <= 0.0:
                x_bound = cfg.fallback_scale
            xa_draws = rng.uniform(-x_bound, x_bound, size=(cfg.ckl_samples, model.dhat))
        w_draws = None
        feat_sq = None
    else:
        raise ValueError(f"active selection is not defined for {kind}")

    diff = xa_draws[:, None, :] - free[None, :, :]  # (mx, n, dhat)
    free_sq = np.sum(diff * diff, axis=2)
    return HypothesisSet(head, model, kind, w_draws, xa_draws, feat_sq, free_sq)


# -- posterior weights and entropy scores -------------------------------------


def _normalize_log_weights(lw: np.ndarray) -> np.ndarray:
    w = np.exp(lw - np.max(lw))
    return w / np.sum(w)


def posterior_weights(
    hypotheses: HypothesisSet, conditioning: Sequence[TripletResponse]
) -> np.ndarray:
    """Discrete posterior over hypotheses given the conditioning responses.

    Likelihood products are accumulated as log sums and normalized after
    subtracting the maximum, so long conditioning lists cannot underflow.
    An empty conditioning list gives uniform weights.
    """
    if hypotheses.m == 0:
        raise ValueError("empty hypothesis set")
    return _normalize_log_weights(hypotheses.log_weights(conditioning))


def entropy(weights: np.ndarray) -> float:
    """Shannon entropy in nats, with 0 * log 0 = 0."""
    w = np.asarray(weights, dtype=np.float64)
    nz = w[w > 0.0]
    return float(-np.sum(nz * np.log(nz)))


def response_probability(
    hypotheses: HypothesisSet, weights: np.ndarray, candidate: TripletResponse
) -> float:
    """Posterior-mean likelihood that a human answers with ``candidate``."""
    return float(weights @ hypotheses.likelihoods(candidate))


def expected_query_entropy(
    hypotheses: HypothesisSet, pair: tuple[int, int], state: "RoundState"
) -> float:
    """Expected posterior entropy after asking (head, pair): p*H_abc + (1-p)*H_acb."""
    conditioning = state.by_head.get(hypotheses.head, [])
    return float(
        _score_pairs(hypotheses, [tuple(pair)], conditioning)[0]
    )


def _score_pairs(
    hypotheses: HypothesisSet,
    pairs: Sequence[tuple[int, int]],
    conditioning: Sequence[TripletResponse],
) -> np.ndarray:
    base = hypotheses.log_weights(conditioning)
    weights = _normalize_log_weights(base)
    scores = np.empty(len(pairs))
    for i, (b, c) in enumerate(pairs):
        l_abc, l_acb = hypotheses.pair_likelihoods(b, c)
        p = float(weights @ l_abc)
        h_abc = entropy(_normalize_log_weights(base + np.log(l_abc)))
        h_acb = entropy(_normalize_log_weights(base + np.log(l_acb)))
        scores[i] = p * h_abc + (1.0 - p) * h_acb
    return scores


# -- round state and the loop -------------------------------------------------


@dataclass
class RoundRecord:
    """History entry for one completed round."""

    t: int
    queries: list[TripletQuery]
    fit_reports: tuple[FitReport, ...]
    metrics: MetricRecord | None
    hypothesis_evals: dict[int, int]  # head -> hypothesis * candidate evaluations


@dataclass
class RoundState:
    """Accumulated responses and the model fit on them after round t-1.

    ``t`` is the next round to run; ``by_head`` partitions ``responses``
    by head and is maintained alongside it.
    """

    t: int
    kind: ModelKind
    model: CombinedModel
    responses: list[TripletResponse] = field(default_factory=list)
    by_head: dict[int, list[TripletResponse]] = field(default_factory=dict)
    history: list[RoundRecord] = field(default_factory=list)

    def asked_pairs(self, head: int) -> set[tuple[int, int]]:
        return {r.query().pair for r in self.by_head.get(head, [])}


@dataclass(frozen=True)
class LoopConfig:
    """Everything one method's round loop needs besides the oracle.

    ``selector`` is "active" or "random"; random methods repeat the
    round-0 uniform draw every round.  ``seed`` and ``trial`` key the
    reproducible per-(round, head) sample streams shared across methods.
    """

    method: str
    kind: ModelKind
    selector: str
    features: np.ndarray
    dhat: int
    mu: float
    fit: FitConfig
    active: ActiveConfig
    seed: int = 0
    trial: int = 0
    warm_start: bool = True
    pool: ResponsePool | None = None

    def __post_init__(self) -> None:
        if self.selector not in ("active", "random"):
            raise ValueError(f"unknown selector {self.selector!r}")
        if self.seed < 0 or self.trial < 0:
            raise ValueError("seed and trial must be nonnegative")


# Stream tags for per-(seed, trial, round, head) generators.
_STREAM_QUERY = 0
_STREAM_CAND = 1
_STREAM_HYP = 2
_STREAM_ANSWER = 3
_STREAM_INIT = 4


def _rng(seed: int, trial: int, t: int, head: int, stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, trial, t, head, stream])


def _derived_seed(seed: int, trial: int, t: int, stream: int) -> int:
    return int(np.random.SeedSequence([seed, trial, t, stream]).generate_state(1)[0])


def init_state(ctx: LoopConfig, n: int) -> RoundState:
    """Fresh state at round 0 with a seeded initial model."""
    rng = _rng(ctx.seed, ctx.trial, 0, 0, _STREAM_INIT)
    free = rng.normal(scale=ctx.fit.init_scale, size=(n, ctx.dhat))
    if ctx.kind == ModelKind.CKL:
        model = ckl_model(free, ctx.mu)
    elif ctx.kind == ModelKind.TACKL:
        d = ctx.features.shape[1]
        model = CombinedModel(ctx.features, np.ones(d), free, ctx.mu)
    else:
        raise ValueError(f"round loop is not defined for {ctx.kind}")
    return RoundState(t=0, kind=ctx.kind, model=model)


def _allowed_pairs(
    head: int,
    n: int,
    asked: set[tuple[int, int]],
    pool: ResponsePool | None,
    pool_restricted: bool,
) -> list[tuple[int, int]]:
    """Canonically ordered candidate universe for a head, minus exclusions."""
    if pool_restricted:
        if pool is None:
            raise ValueError("pool_restricted selection needs a pool")
        universe = pool.pairs_for_head(head)
    else:
        universe = [
            (b, c) for b in range(n) if b != head for c in range(b + 1, n) if c != head
        ]
    return [p for p in universe if p not in asked]


def random_query_for_head(
    head: int,
    n: int,
    rng: np.random.Generator,
    pool: ResponsePool | None = None,
    pool_restricted: bool = False,
) -> TripletQuery:
    """The round-0 rule: both pair members drawn uniformly without replacement."""
    if pool_restricted:
        pairs = _allowed_pairs(head, n, set(), pool, True)
        if not pairs:
            raise HeadExhausted(head)
        b, c = pairs[int(rng.integers(len(pairs)))]
        return TripletQuery(head, (b, c))
    others = [j for j in range(n) if j != head]
    if len(others) < 2:
        raise HeadExhausted(head)
    b = others[int(rng.integers(len(others)))]
    rest = [j for j in others if j != b]
    c = rest[int(rng.integers(len(rest)))]
    return TripletQuery(head, (b, c))


def select_query_for_head(
    head: int,
    state: RoundState,
    ctx: LoopConfig,
    cand_rng: np.random.Generator,
    hyp_rng: np.random.Generator,
) -> tuple[TripletQuery, int]:
    """Score a random candidate subset and return the minimum-entropy query.

    Candidates are the head of a shared random permutation of the full
    pair universe, filtered by this method's already-asked queries, so
    concurrent methods score draws from identical randomness.  Returns
    the query and the number of hypothesis evaluations spent.  Ties break
    toward the smallest canonical pair.
    """
    cfg = ctx.active.resolve(state.model.n)
    asked = state.asked_pairs(head)
    if cfg.pool_restricted:
        universe = list(ctx.pool.pairs_for_head(head)) if ctx.pool else []
    else:
        n = state.model.n
        universe = [
            (b, c) for b in range(n) if b != head for c in range(b + 1, n) if c != head
        ]
    if not universe:
        raise HeadExhausted(head)
    perm = cand_rng.permutation(len(universe))
    k = cfg.candidate_pairs_per_head
    chosen = []
    for idx in perm:
        pair = universe[int(idx)]
        if pair in asked:
            continue
        chosen.append(pair)
        if len(chosen) == k:
            break
    if not chosen:
        raise HeadExhausted(head)
    chosen.sort()

    hyps = sample_hypotheses(state.model, head, cfg, state.kind, hyp_rng)
    scores = _score_pairs(hyps, chosen, state.by_head.get(head, []))
    best = chosen[int(np.argmin(scores))]
    return TripletQuery(head, best), hyps.m * len(chosen)


def select_round_queries(
    state: RoundState, ctx: LoopConfig
) -> tuple[list[TripletQuery], dict[int, int]]:
    """One query per un-exhausted head, per the round's selection rule."""
    n = state.model.n
    cfg = ctx.active.resolve(n)
    queries: list[TripletQuery] = []
    evals: dict[int, int] = {}
    for head in range(n):
        try:
            if state.t == 0 or ctx.selector == "random":
                q = random_query_for_head(
                    head,
                    n,
                    _rng(ctx.seed, ctx.trial, state.t, head, _STREAM_QUERY),
                    pool=ctx.pool,
                    pool_restricted=cfg.pool_restricted,
                )
                evals[head] = 0
            else:
                q, spent = select_query_for_head(
                    head,
                    state,
                    ctx,
                    _rng(ctx.seed, ctx.trial, state.t, head, _STREAM_CAND),
                    _rng(ctx.seed, ctx.trial, state.t, head, _STREAM_HYP),
                )
                evals[head] = spent
        except HeadExhausted:
            continue
        queries.append(q)
    return queries, evals


def refit(
    state: RoundState, ctx: LoopConfig, responses: list[TripletResponse], t: int
) -> tuple[CombinedModel, tuple[FitReport, ...]]:
    """Re-learn the model on the full accumulated response pool."""
    cold_seed = _derived_seed(ctx.seed, ctx.trial, t, _STREAM_INIT)
    fit_cfg = dataclasses.replace(ctx.fit, seed=cold_seed)
    if ctx.kind == ModelKind.CKL:
        init = state.model.free if ctx.warm_start else None
        free, report = fit_ckl(
            responses, state.model.n, ctx.dhat, mu=ctx.mu, cfg=fit_cfg, init=init
        )
        return ckl_model(free, ctx.mu), (report,)
    w0 = state.model.weights if ctx.warm_start else None
    x0 = state.model.free if ctx.warm_start else None
    model, reports = fit_tackl(
        ctx.features, responses, ctx.dhat, mu=ctx.mu, cfg=fit_cfg, w0=w0, xhat0=x0
    )
    return model, reports


def complete_round(
    state: RoundState,
    ctx: LoopConfig,
    queries: list[TripletQuery],
    answers: list[TripletResponse],
    eval_responses=None,
) -> RoundState:
    """Fold a full batch of answers into a new state: append, refit, snapshot.

    The input state is left untouched; failures leave no partial update.
    """
    issued = {q: False for q in queries}
    for r in answers:
        q = r.query()
        if q not in issued:
            raise ValueError(f"response answers un-issued query {q}")
        if issued[q]:
            raise ValueError(f"duplicate response for query {q}")
        issued[q] = True
    if not all(issued.values()):
        missing = [q for q, seen in issued.items() if not seen]
        raise ValueError(f"round incomplete: {len(missing)} queries unanswered")

    responses = state.responses + list(answers)
    model, reports = refit(state, ctx, responses, state.t)
    metrics = None
    if eval_responses is not None:
        metrics = snapshot(
            ctx.method, ctx.trial, state.t, model, eval_responses, len(responses)
        )
    by_head: dict[int, list[TripletResponse]] = {
        h: list(rs) for h, rs in state.by_head.items()
    }
    for r in answers:
        by_head.setdefault(r.head, []).append(r)
    record = RoundRecord(state.t, list(queries), reports, metrics, {})
    return RoundState(
        t=state.t + 1,
        kind=state.kind,
        model=model,
        responses=responses,
        by_head=by_head,
        history=state.history + [record],
    )


def run_round(
    state: RoundState, oracle, ctx: LoopConfig, eval_responses=None
) -> RoundState:
    """Select, ask, refit: one full round, committed atomically."""
    queries, evals = select_round_queries(state, ctx)
    answers = [
        oracle.answer_query(
            q, _rng(ctx.seed, ctx.trial, state.t, q.head, _STREAM_ANSWER)
        )
        for q in queries
    ]
    new_state = complete_round(state, ctx, queries, answers, eval_responses)
    new_state.history[-1].hypothesis_evals = evals
    return new_state
