"""Batch experiments: several methods, several trials, shared randomness.

Fairness rules baked into the loop:

* every method of a trial sees the same random round-0 queries and
  responses (the selection streams are keyed by (seed, trial, round,
  head), never by method);
* the two random-selection methods receive identical random queries
  every round;
* the two active methods draw candidate pairs from the same shared
  permutation per (round, head) and take the same number of hypothesis
  samples.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from tackl.active import LoopConfig, init_state, run_round
from tackl.core import ModelKind, responses_array
from tackl.metrics import MetricRecord
from tackl.oracle import (
    GroundTruthSpace,
    PoolOracle,
    ResponsePool,
    default_dim_specs,
    exhaustive_pool,
    generate_ground_truth,
    make_aux_features,
)
from tackl.persist import METHODS, ExperimentConfig, load_features, load_pool, pca_reduce

METHOD_MAP: dict[str, tuple[ModelKind, str]] = {
    "CKL-random": (ModelKind.CKL, "random"),
    "A-CKL": (ModelKind.CKL, "active"),
    "TACKL-random": (ModelKind.TACKL, "random"),
    "A-TACKL": (ModelKind.TACKL, "active"),
}


def default_synthetic_config(seed: int = 0) -> "ExperimentConfig":
    """The desk-scale synthetic replication: 60 objects, 6-dim truth.

    Three uniform plus three mixture dimensions, auxiliary features from
    three true dimensions plus three noise columns, answers from the
    deterministic exhaustive pool, 5 trials of 12 rounds.  Per-round fits
    are warm-started with a small iteration budget so each round performs
    an incremental update, matching the coverage regime the method
    orderings are visible in.
    """
    from tackl.optim import FitConfig

    return ExperimentConfig(
        methods=METHODS,
        n=60,
        rounds=12,
        trials=5,
        seed=seed,
        truth_dims=6,
        true_feature_dims=(0, 1, 2),
        noise_feature_dims=3,
        dhat_ckl=6,
        warm_start=True,
        fit=FitConfig(max_iters=5),
    )


@dataclass
class TrialData:
    """One trial's answer source, features, and evaluation ground truth."""

    n: int
    features: np.ndarray
    pool: ResponsePool
    eval_triplets: np.ndarray
    space: GroundTruthSpace | None = None


def _trial_seed(base: int, trial: int) -> int:
    return int(np.random.SeedSequence([base, trial, 1009]).generate_state(1)[0])


def synthetic_trial_data(cfg: ExperimentConfig, trial: int) -> TrialData:
    """Fresh ground truth, exhaustive pool, and aux features for one trial."""
    seed = _trial_seed(cfg.seed, trial)
    specs = default_dim_specs(cfg.truth_dims, seed=seed, mixture_sd=cfg.mixture_sd)
    space = generate_ground_truth(cfg.n, specs, seed=seed)
    pool = exhaustive_pool(space, mode=cfg.oracle_mode, mu=cfg.mu, seed=seed)
    features = make_aux_features(
        space, cfg.true_feature_dims, cfg.noise_feature_dims, seed=seed
    )
    return TrialData(
        n=cfg.n,
        features=features,
        pool=pool,
        eval_triplets=responses_array(pool.responses()),
        space=space,
    )


def pool_trial_data(cfg: ExperimentConfig) -> TrialData:
    """Stored-pool protocol: a fixed pool and feature file shared by trials."""
    pool = load_pool(cfg.pool_path)
    needs_features = any(METHOD_MAP[m][0] == ModelKind.TACKL for m in cfg.methods)
    if cfg.features_path:
        table = load_features(cfg.features_path)
        features = table.matrix
        if cfg.pca_k:
            features = pca_reduce(features, cfg.pca_k, scale=cfg.pca_scale)
    elif needs_features:
        raise ValueError("TACKL methods need features_path")
    else:
        features = None
    heads = {q.head for q in pool.entries}
    pairs = {p for q in pool.entries for p in q.pair}
    n = max(heads | pairs) + 1
    if features is not None and features.shape[0] != n:
        raise ValueError(
            f"feature rows ({features.shape[0]}) != object count implied by pool ({n})"
        )
    return TrialData(
        n=n,
        features=features if features is not None else np.zeros((n, 0)),
        pool=pool,
        eval_triplets=responses_array(pool.responses()),
    )


def method_loop_config(
    cfg: ExperimentConfig, method: str, data: TrialData, trial: int
) -> LoopConfig:
    kind, selector = METHOD_MAP[method]
    if kind == ModelKind.TACKL:
        features = data.features
        dhat = cfg.dhat_tackl if cfg.dhat_tackl is not None else features.shape[1]
    else:
        features = np.zeros((data.n, 0))
        dhat = cfg.dhat_ckl
    active = cfg.active
    if cfg.oracle_kind == "pool" and not active.pool_restricted:
        # A stored pool can only answer recorded queries.
        active = dataclasses.replace(active, pool_restricted=True)
    return LoopConfig(
        method=method,
        kind=kind,
        selector=selector,
        features=features,
        dhat=dhat,
        mu=cfg.mu,
        fit=cfg.fit,
        active=active,
        seed=cfg.seed,
        trial=trial,
        warm_start=cfg.warm_start,
        pool=data.pool,
    )


def run_experiment(cfg: ExperimentConfig, progress=None) -> list[MetricRecord]:
    """Run every (method, trial) and return rounds+1 metric records each.

    Records are ordered by (method, trial, round).  ``progress``, if
    given, is called with a status line after every completed round.
    """
    per_method: dict[str, list[MetricRecord]] = {m: [] for m in cfg.methods}
    shared = pool_trial_data(cfg) if cfg.oracle_kind == "pool" else None
    for trial in range(cfg.trials):
        data = shared if shared is not None else synthetic_trial_data(cfg, trial)
        oracle = PoolOracle(data.pool)
        for method in cfg.methods:
            ctx = method_loop_config(cfg, method, data, trial)
            state = init_state(ctx, data.n)
            for t in range(cfg.rounds + 1):
                state = run_round(state, oracle, ctx, eval_responses=data.eval_triplets)
                per_method[method].append(state.history[-1].metrics)
                if progress is not None:
                    rec = state.history[-1].metrics
                    progress(
                        f"trial {trial} {method} round {t}: "
                        f"error={rec.query_prediction_error:.4f} "
                        f"responses={rec.responses_seen}"
                    )
    records: list[MetricRecord] = []
    for method in cfg.methods:
        records.extend(sorted(per_method[method], key=lambda r: (r.trial, r.round)))
    return records
