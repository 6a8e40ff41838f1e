"""Evaluation metrics: query prediction error, likelihood margins, ratios.

All metrics are pure functions of (model, responses); repeated calls on
the same inputs agree bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.stats

from tackl.core import (
    CombinedModel,
    TripletArray,
    combined_matrix,
    responses_array,
    triplet_likelihoods_from_points,
)


@dataclass(frozen=True)
class MetricRecord:
    """One evaluation snapshot of one method at one round of one trial."""

    method: str
    trial: int
    round: int
    responses_seen: int
    query_prediction_error: float
    mean_likelihood: float
    mean_ratio: float
    median_ratio: float


def _as_triplets(responses) -> TripletArray:
    t = responses if isinstance(responses, np.ndarray) else responses_array(responses)
    t = np.asarray(t, dtype=np.int64).reshape(-1, 3)
    if t.shape[0] == 0:
        raise ValueError("evaluation needs at least one response")
    return t


def _likelihoods(model: CombinedModel, t: TripletArray) -> np.ndarray:
    return triplet_likelihoods_from_points(combined_matrix(model), t, model.mu)


def query_prediction_error(model: CombinedModel, eval_responses) -> float:
    """Fraction of responses whose assigned likelihood is <= 0.5.

    The boundary is inclusive, so an exactly even prediction counts as an
    error; a model placing all objects at one point scores 1.0.
    """
    t = _as_triplets(eval_responses)
    return float(np.mean(_likelihoods(model, t) <= 0.5))


def mean_likelihood(model: CombinedModel, eval_responses) -> float:
    """Average assigned likelihood: the margin by which responses are honored."""
    t = _as_triplets(eval_responses)
    return float(np.mean(_likelihoods(model, t)))


def _ratios(model: CombinedModel, t: TripletArray) -> np.ndarray:
    pts = combined_matrix(model)
    pa, pb, pc = pts[t[:, 0]], pts[t[:, 1]], pts[t[:, 2]]
    d_ab = np.sum((pa - pb) ** 2, axis=1)
    d_ac = np.sum((pa - pc) ** 2, axis=1)
    # mu-augmented to stay finite at coincident points.
    return (model.mu + d_ac) / (model.mu + d_ab)


def mean_distance_ratio(model: CombinedModel, eval_responses) -> float:
    """Mean of (mu + D_head,farther) / (mu + D_head,closer) over responses."""
    t = _as_triplets(eval_responses)
    return float(np.mean(_ratios(model, t)))


def median_distance_ratio(model: CombinedModel, eval_responses) -> float:
    """Median counterpart of mean_distance_ratio."""
    t = _as_triplets(eval_responses)
    return float(np.median(_ratios(model, t)))


def snapshot(
    method: str,
    trial: int,
    round_: int,
    model: CombinedModel,
    eval_responses,
    responses_seen: int = 0,
) -> MetricRecord:
    """All metrics for one (method, trial, round) cell in one pass."""
    t = _as_triplets(eval_responses)
    p = _likelihoods(model, t)
    ratios = _ratios(model, t)
    return MetricRecord(
        method=method,
        trial=trial,
        round=round_,
        responses_seen=responses_seen,
        query_prediction_error=float(np.mean(p <= 0.5)),
        mean_likelihood=float(np.mean(p)),
        mean_ratio=float(np.mean(ratios)),
        median_ratio=float(np.median(ratios)),
    )


@dataclass(frozen=True)
class AggregateRow:
    """Cross-trial mean and 90% confidence half-width per (method, round)."""

    method: str
    round: int
    trials: int
    error_mean: float
    error_ci: float | None
    mean_likelihood: float
    mean_ratio: float
    median_ratio: float


def t_interval_half_width(values: np.ndarray, confidence: float = 0.90) -> float:
    """Symmetric Student-t confidence half-width for the mean."""
    values = np.asarray(values, dtype=np.float64)
    k = len(values)
    if k < 2:
        raise ValueError("confidence interval needs at least 2 trials")
    sem = np.std(values, ddof=1) / np.sqrt(k)
    t_crit = scipy.stats.t.ppf(0.5 + confidence / 2.0, df=k - 1)
    return float(t_crit * sem)


def aggregate_trials(
    records: Sequence[MetricRecord], confidence: float = 0.90
) -> list[AggregateRow]:
    """Per-(method, round) means with a 90% t-interval across trials.

    With a single trial the interval is reported as absent (None).
    Output is sorted by (method, round).
    """
    cells: dict[tuple[str, int], list[MetricRecord]] = {}
    for r in records:
        cells.setdefault((r.method, r.round), []).append(r)
    rows = []
    for (method, round_), group in sorted(cells.items()):
        errors = np.array([g.query_prediction_error for g in group])
        ci = t_interval_half_width(errors, confidence) if len(group) >= 2 else None
        rows.append(
            AggregateRow(
                method=method,
                round=round_,
                trials=len(group),
                error_mean=float(np.mean(errors)),
                error_ci=ci,
                mean_likelihood=float(np.mean([g.mean_likelihood for g in group])),
                mean_ratio=float(np.mean([g.mean_ratio for g in group])),
                median_ratio=float(np.mean([g.median_ratio for g in group])),
            )
        )
    return rows
