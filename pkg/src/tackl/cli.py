"""Command-line entry points.

Subcommands:

* ``gen-synthetic``    write a synthetic instance (truth, features, pool,
                       ready-to-run experiment config) to a directory
* ``make-pool``        build a majority-vote pool file from ground-truth
                       points or from a raw votes file
* ``run-experiment``   run a batch experiment from a config file, writing
                       the results CSV and report figures
* ``report``           re-render figures from an existing results CSV
* ``eval``             score a model checkpoint against a pool
* ``serve``            start the live labeling session server
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from tackl import persist
from tackl.core import TripletResponse, features_only_model
from tackl.experiment import default_synthetic_config, run_experiment, synthetic_trial_data
from tackl.metrics import (
    mean_distance_ratio,
    mean_likelihood,
    median_distance_ratio,
    query_prediction_error,
)
from tackl.oracle import GroundTruthSpace, Uniform, aggregate_votes, exhaustive_pool
from tackl.persist import (
    ExperimentConfig,
    load_checkpoint,
    load_config,
    load_features,
    load_pool,
    save_config,
    save_pool,
    write_results,
)
from tackl.report import render_report

DATA_DIR_ENV = "TACKL_DATA_DIR"


def _default_out_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "."))


def cmd_gen_synthetic(args: argparse.Namespace) -> int:
    cfg = default_synthetic_config(seed=args.seed)
    if args.n is not None:
        import dataclasses

        cfg = dataclasses.replace(cfg, n=args.n)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = synthetic_trial_data(cfg, trial=0)
    np.savetxt(
        out / "truth.csv",
        np.column_stack([np.arange(cfg.n), data.space.points]),
        delimiter=",",
        header="id," + ",".join(f"dim{k}" for k in range(cfg.truth_dims)),
        comments="",
        fmt="%.17g",
    )
    np.savetxt(
        out / "features.csv",
        np.column_stack([np.arange(cfg.n), data.features]),
        delimiter=",",
        header="id," + ",".join(f"f{k}" for k in range(data.features.shape[1])),
        comments="",
        fmt="%.17g",
    )
    save_pool(data.pool, out / "pool.txt")
    save_config(cfg, out / "config.json")
    print(f"wrote truth.csv, features.csv, pool.txt ({len(data.pool)} entries), config.json to {out}")
    return 0


def cmd_make_pool(args: argparse.Namespace) -> int:
    if bool(args.points) == bool(args.votes):
        print("make-pool needs exactly one of --points or --votes", file=sys.stderr)
        return 2
    if args.points:
        table = load_features(args.points)
        space = GroundTruthSpace(table.matrix, (Uniform(),), seed=args.seed)
        pool = exhaustive_pool(
            space, mode=args.mode, mu=args.mu, seed=args.seed, force=args.force
        )
    else:
        votes = []
        with open(args.votes) as fh:
            for lineno, line in enumerate(fh, start=1):
                text = line.split("#", 1)[0].strip()
                if not text:
                    continue
                parts = text.split()
                if len(parts) != 3:
                    print(f"{args.votes}:{lineno}: expected 'a b c'", file=sys.stderr)
                    return 2
                votes.append(TripletResponse(*(int(p) for p in parts)))
        pool = aggregate_votes(votes, rng=np.random.default_rng(args.seed))
        full, split = pool.agreement_stats()
        print(f"agreement: {full:.1%} unanimous, {split:.1%} split")
    save_pool(pool, args.out)
    print(f"wrote {len(pool)} entries to {args.out}")
    return 0


def cmd_run_experiment(args: argparse.Namespace) -> int:
    cfg = load_config(args.config)
    progress = None if args.quiet else lambda line: print(line, file=sys.stderr)
    records = run_experiment(cfg, progress=progress)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_results(records, out)
    print(f"wrote {len(records)} metric rows to {out}")
    if args.save_models:
        _save_final_models(cfg, Path(args.save_models))
    if not args.no_figures:
        fig_dir = Path(args.fig_dir) if args.fig_dir else out.parent
        for path in render_report(records, fig_dir):
            print(f"wrote {path}")
    return 0


def _save_final_models(cfg: ExperimentConfig, out_dir: Path) -> None:
    """Re-run trial 0 per method and checkpoint the final-round models."""
    import dataclasses

    from tackl.active import init_state, run_round
    from tackl.experiment import method_loop_config, pool_trial_data, synthetic_trial_data
    from tackl.oracle import PoolOracle
    from tackl.persist import config_hash, save_checkpoint

    out_dir.mkdir(parents=True, exist_ok=True)
    data = pool_trial_data(cfg) if cfg.oracle_kind == "pool" else synthetic_trial_data(cfg, 0)
    oracle = PoolOracle(data.pool)
    for method in cfg.methods:
        ctx = method_loop_config(cfg, method, data, trial=0)
        state = init_state(ctx, data.n)
        for _ in range(cfg.rounds + 1):
            state = run_round(state, oracle, ctx)
        path = out_dir / f"{method}.json"
        save_checkpoint(
            state.model,
            path,
            provenance={
                "config": config_hash(cfg),
                "round": state.t - 1,
                "seed": cfg.seed,
                "method": method,
            },
        )
        print(f"wrote {path}")


def cmd_report(args: argparse.Namespace) -> int:
    wrote_any = False
    if args.results:
        records = persist.read_results(args.results)
        if not records:
            print("no records in results file", file=sys.stderr)
            return 2
        for path in render_report(records, args.out_dir):
            print(f"wrote {path}")
        wrote_any = True
    if args.model:
        from tackl.report import render_embedding

        features = load_features(args.features).matrix if args.features else None
        model, _ = load_checkpoint(args.model, features=features)
        labels = None
        if args.labels:
            labels = [line.strip() for line in Path(args.labels).read_text().splitlines() if line.strip()]
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = render_embedding(model, out / "embedding.png", labels=labels)
        print(f"wrote {path}")
        wrote_any = True
    if not wrote_any:
        print("report needs --results and/or --model", file=sys.stderr)
        return 2
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    features = None
    if args.features:
        features = load_features(args.features).matrix
        if args.pca_k:
            features = persist.pca_reduce(features, args.pca_k)
    if args.features_only:
        if features is None:
            print("--features-only needs --features", file=sys.stderr)
            return 2
        model = features_only_model(features, mu=args.mu)
    else:
        model, provenance = load_checkpoint(args.model, features=features)
        if provenance:
            print(f"checkpoint provenance: {json.dumps(provenance, sort_keys=True)}")
    pool = load_pool(args.pool)
    eval_responses = pool.responses()
    metrics = {
        "error": query_prediction_error(model, eval_responses),
        "mean_likelihood": mean_likelihood(model, eval_responses),
        "mean_ratio": mean_distance_ratio(model, eval_responses),
        "median_ratio": median_distance_ratio(model, eval_responses),
        "responses": len(eval_responses),
    }
    print(json.dumps(metrics, sort_keys=True))
    return 0


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from tackl.server import create_app

    app = create_app(args.data_dir, ui_dir=args.ui_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tackl",
        description="Triplet similarity learning with auxiliary features and active queries.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-synthetic", help="write a synthetic instance to a directory")
    p.add_argument("--out-dir", default=str(_default_out_dir() / "synthetic"))
    p.add_argument("--n", type=int, default=None, help="object count (default 60)")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synthetic)

    p = sub.add_parser("make-pool", help="build a majority-vote pool file")
    p.add_argument("--points", help="ground-truth points CSV (id + coordinates)")
    p.add_argument("--votes", help="raw votes file: one 'a b c' response per line")
    p.add_argument("--mode", choices=("deterministic", "probabilistic"), default="deterministic")
    p.add_argument("--mu", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--force", action="store_true", help="allow pools beyond the entry budget")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_make_pool)

    p = sub.add_parser("run-experiment", help="run a batch experiment from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--fig-dir", help="figure directory (default: beside the CSV)")
    p.add_argument("--no-figures", action="store_true")
    p.add_argument("--save-models", help="directory for final-round model checkpoints")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("report", help="render figures from a results CSV or a checkpoint")
    p.add_argument("--results", help="results CSV to turn into round curves")
    p.add_argument("--model", help="checkpoint to render as a 2-D embedding scatter")
    p.add_argument("--features", help="feature CSV for checkpoints with a parametric block")
    p.add_argument("--labels", help="text file with one object label per line")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("eval", help="score a checkpoint against a pool")
    p.add_argument("--model", help="model checkpoint JSON")
    p.add_argument("--pool", required=True)
    p.add_argument("--features", help="feature CSV for models with a parametric block")
    p.add_argument("--pca-k", type=int, default=None)
    p.add_argument("--features-only", action="store_true", help="score raw features, no checkpoint")
    p.add_argument("--mu", type=float, default=1e-4)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("serve", help="start the live labeling server")
    p.add_argument("--port", type=int, default=8008)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--data-dir", default=None, help=f"session directory (default ${DATA_DIR_ENV} or ./tackl-data)")
    p.add_argument("--ui-dir", default=None, help="built labeler UI to serve at / (default: auto-detect)")
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
