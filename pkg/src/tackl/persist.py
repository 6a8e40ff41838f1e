"""File formats and transforms: features, pools, results, checkpoints, PCA.

All artifacts are line-oriented text or JSON so desk experiments stay
diff-able and hand-editable.  Every load/save pair is inverse on valid
data, and checkpoints round-trip byte-identically.
"""

from __future__ import annotations

import csv
import hashlib
import json
import warnings
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from tackl.active import ActiveConfig
from tackl.core import DEFAULT_MU, CombinedModel, TripletResponse
from tackl.metrics import MetricRecord
from tackl.optim import FitConfig
from tackl.oracle import PoolEntry, ResponsePool


class FormatError(ValueError):
    """A file failed to parse; the message carries the offending location."""


# -- feature tables -----------------------------------------------------------


@dataclass(frozen=True)
class FeatureTable:
    """Feature matrix with rows remapped to contiguous ids 0..n-1.

    ``original_ids[i]`` is the id the input file used for row i.
    """

    matrix: np.ndarray
    original_ids: tuple[int, ...]

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def d(self) -> int:
        return self.matrix.shape[1]


def load_features(path: str | Path) -> FeatureTable:
    """Read a feature CSV: first column object id, rest features.

    A non-numeric first row is treated as a header.  Ids are remapped to
    0..n-1 in ascending original-id order; the mapping is retained.
    """
    path = Path(path)
    rows: list[tuple[int, list[float]]] = []
    width: int | None = None
    with path.open(newline="") as fh:
        for lineno, cells in enumerate(csv.reader(fh), start=1):
            if not cells or all(not c.strip() for c in cells):
                continue
            if lineno == 1:
                try:
                    float(cells[0])
                except ValueError:
                    continue  # header row
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise FormatError(f"{path}:{lineno}: ragged row ({len(cells)} != {width} cells)")
            try:
                rid = int(float(cells[0]))
                feats = [float(c) for c in cells[1:]]
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric cell ({exc})") from exc
            rows.append((rid, feats))
    if not rows:
        raise FormatError(f"{path}: no feature rows")
    if width is not None and width < 2:
        raise FormatError(f"{path}: rows need an id column plus at least one feature")
    seen: set[int] = set()
    for rid, _ in rows:
        if rid in seen:
            raise FormatError(f"{path}: duplicate object id {rid}")
        seen.add(rid)
    rows.sort(key=lambda r: r[0])
    matrix = np.array([feats for _, feats in rows], dtype=np.float64)
    if not np.all(np.isfinite(matrix)):
        raise FormatError(f"{path}: non-finite feature value")
    return FeatureTable(matrix, tuple(rid for rid, _ in rows))


# -- PCA ----------------------------------------------------------------------


@dataclass(frozen=True)
class PCAResult:
    transformed: np.ndarray        # (n, k)
    components: np.ndarray         # (k, d) rows are principal directions
    mean: np.ndarray               # (d,) column means removed before projection
    explained_variance: np.ndarray # (k,) descending


def pca(features: np.ndarray, k: int, scale: bool = False) -> PCAResult:
    """Centered PCA via SVD with a deterministic sign convention.

    Components are ordered by descending explained variance (ties broken
    by original order, stable); each direction is flipped so its
    largest-magnitude loading is positive.  ``scale`` additionally
    divides columns by their standard deviation before projection.
    """
    x = np.asarray(features, dtype=np.float64)
    n, d = x.shape
    if not 1 <= k <= min(n - 1, d):
        raise ValueError(f"k={k} out of range for {n}x{d} input")
    mean = x.mean(axis=0)
    centered = x - mean
    if scale:
        sd = centered.std(axis=0, ddof=1)
        sd[sd == 0] = 1.0
        centered = centered / sd
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    variances = (svals * svals) / max(n - 1, 1)
    if np.allclose(variances, 0.0):
        warnings.warn("zero-variance input; PCA projection is all zeros")
    order = np.argsort(-variances, kind="stable")[:k]
    comps = vt[order]
    for row in comps:
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            row *= -1.0
    return PCAResult(
        transformed=centered @ comps.T,
        components=comps,
        mean=mean,
        explained_variance=variances[order],
    )


def pca_reduce(features: np.ndarray, k: int, scale: bool = False) -> np.ndarray:
    """Project features onto their top-k principal directions."""
    return pca(features, k, scale=scale).transformed


# -- pools --------------------------------------------------------------------


def save_pool(pool: ResponsePool, path: str | Path) -> None:
    """One record per line: ``a b c votes_for votes_against``.

    The (a, b, c) order encodes the winning response; rows are written in
    canonical query order.
    """
    path = Path(path)
    with path.open("w") as fh:
        fh.write("# a b c votes_for votes_against\n")
        for q in sorted(pool.entries):
            e = pool.entries[q]
            r = e.response
            fh.write(f"{r.head} {r.closer} {r.farther} {e.votes_for} {e.votes_against}\n")


def load_pool(path: str | Path) -> ResponsePool:
    path = Path(path)
    pool = ResponsePool()
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 5:
                raise FormatError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
            try:
                a, b, c, vf, va = (int(p) for p in parts)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-integer field ({exc})") from exc
            try:
                entry = PoolEntry(TripletResponse(a, b, c), vf, va)
                pool.add(entry)
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return pool


# -- results tables -----------------------------------------------------------

RESULTS_HEADER = [
    "method",
    "trial",
    "round",
    "responses_seen",
    "error",
    "mean_likelihood",
    "mean_ratio",
    "median_ratio",
]


def write_results(records: Sequence[MetricRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULTS_HEADER)
        for r in records:
            writer.writerow(
                [
                    r.method,
                    r.trial,
                    r.round,
                    r.responses_seen,
                    repr(float(r.query_prediction_error)),
                    repr(float(r.mean_likelihood)),
                    repr(float(r.mean_ratio)),
                    repr(float(r.median_ratio)),
                ]
            )


def read_results(path: str | Path) -> list[MetricRecord]:
    path = Path(path)
    records = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != RESULTS_HEADER:
            raise FormatError(f"{path}: unexpected header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(RESULTS_HEADER):
                raise FormatError(f"{path}:{lineno}: expected {len(RESULTS_HEADER)} columns")
            try:
                records.append(
                    MetricRecord(
                        method=row[0],
                        trial=int(row[1]),
                        round=int(row[2]),
                        responses_seen=int(row[3]),
                        query_prediction_error=float(row[4]),
                        mean_likelihood=float(row[5]),
                        mean_ratio=float(row[6]),
                        median_ratio=float(row[7]),
                    )
                )
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return records


# -- model checkpoints --------------------------------------------------------

CHECKPOINT_SCHEMA = 1


def save_checkpoint(
    model: CombinedModel,
    path: str | Path,
    provenance: dict | None = None,
) -> None:
    """JSON checkpoint of the learned parameters (weights + free block).

    Auxiliary features are inputs, not learned state, so they are not
    stored; reassemble with the feature file when evaluating.
    """
    doc = {
        "schema": CHECKPOINT_SCHEMA,
        "n": model.n,
        "d": model.d,
        "dhat": model.dhat,
        "mu": model.mu,
        "weights": [float(v) for v in model.weights],
        "free": [[float(v) for v in row] for row in model.free],
        "provenance": provenance or {},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")


def load_checkpoint(
    path: str | Path, features: np.ndarray | None = None
) -> tuple[CombinedModel, dict]:
    """Rebuild a model from a checkpoint, attaching features when given."""
    doc = json.loads(Path(path).read_text())
    if doc.get("schema") != CHECKPOINT_SCHEMA:
        raise FormatError(f"{path}: unsupported checkpoint schema {doc.get('schema')}")
    n, d = int(doc["n"]), int(doc["d"])
    if d > 0:
        if features is None:
            raise ValueError(f"{path}: checkpoint has d={d} feature weights; features required")
        features = np.asarray(features, dtype=np.float64)
        if features.shape != (n, d):
            raise ValueError(f"feature shape {features.shape} != checkpoint ({n}, {d})")
    else:
        features = np.zeros((n, 0))
    free = np.array(doc["free"], dtype=np.float64).reshape(n, int(doc["dhat"]))
    model = CombinedModel(features, np.array(doc["weights"], dtype=np.float64), free, float(doc["mu"]))
    return model, doc.get("provenance", {})


# -- experiment configs -------------------------------------------------------

CONFIG_SCHEMA = 1
METHODS = ("CKL-random", "A-CKL", "TACKL-random", "A-TACKL")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a batch experiment needs, mirroring the config file."""

    methods: tuple[str, ...] = METHODS
    rounds: int = 12
    trials: int = 5
    seed: int = 0
    mu: float = DEFAULT_MU
    dhat_tackl: int | None = None  # None -> feature dimension d
    dhat_ckl: int = 5
    warm_start: bool = True
    fit: FitConfig = field(default_factory=FitConfig)
    active: ActiveConfig = field(default_factory=ActiveConfig)
    # oracle: synthetic generation or a stored pool
    oracle_kind: str = "synthetic"  # synthetic | pool
    n: int = 60
    truth_dims: int = 6
    mixture_sd: float = 0.1
    true_feature_dims: tuple[int, ...] = (0, 1, 2)
    noise_feature_dims: int = 3
    oracle_mode: str = "deterministic"  # deterministic | probabilistic
    pool_path: str | None = None
    features_path: str | None = None
    pca_k: int | None = None
    pca_scale: bool = False

    def __post_init__(self) -> None:
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; valid: {list(METHODS)}")
        if self.rounds < 0 or self.trials < 1:
            raise ValueError("rounds must be >= 0 and trials >= 1")
        if self.oracle_kind not in ("synthetic", "pool"):
            raise ValueError(f"unknown oracle kind {self.oracle_kind!r}")
        if self.oracle_kind == "pool" and not self.pool_path:
            raise ValueError("pool oracle needs pool_path")


def config_to_dict(cfg: ExperimentConfig) -> dict:
    doc = asdict(cfg)
    doc["schema"] = CONFIG_SCHEMA
    doc["methods"] = list(cfg.methods)
    doc["true_feature_dims"] = list(cfg.true_feature_dims)
    return doc


def config_from_dict(doc: dict) -> ExperimentConfig:
    doc = dict(doc)
    schema = doc.pop("schema", CONFIG_SCHEMA)
    if schema != CONFIG_SCHEMA:
        raise FormatError(f"unsupported config schema {schema}")
    if "fit" in doc and isinstance(doc["fit"], dict):
        doc["fit"] = FitConfig(**doc["fit"])
    if "active" in doc and isinstance(doc["active"], dict):
        doc["active"] = ActiveConfig(**doc["active"])
    if "methods" in doc:
        doc["methods"] = tuple(doc["methods"])
    if "true_feature_dims" in doc:
        doc["true_feature_dims"] = tuple(doc["true_feature_dims"])
    return ExperimentConfig(**doc)


def save_config(cfg: ExperimentConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config_to_dict(cfg), indent=2, sort_keys=True) + "\n")


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return config_from_dict(doc)


def config_hash(cfg: ExperimentConfig) -> str:
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
