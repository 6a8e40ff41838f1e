"""Live labeling sessions over HTTP: a human plays the oracle.

One round at a time: the server issues one query per head, the client
submits that round's responses (partial submissions are held), and a
background refit runs before the next round can start.  Session state is
persisted to disk after every committed change, so submitted responses
survive a restart.

Endpoints (JSON in, JSON out; errors are ``{"error": {"code", "message"}}``):

* ``POST /sessions``                 create a session
* ``POST /sessions/{id}/rounds``     issue the next round's queries
* ``POST /sessions/{id}/responses``  submit responses
* ``GET  /sessions/{id}``            state snapshot
"""

from __future__ import annotations

import json
import os
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from tackl.active import (
    ActiveConfig,
    LoopConfig,
    RoundState,
    complete_round,
    init_state,
    select_round_queries,
)
from tackl.core import DEFAULT_MU, ModelKind, TripletQuery, TripletResponse, responses_array
from tackl.optim import FitConfig
from tackl.persist import load_pool
from tackl.report import embedding_projection

DATA_DIR_ENV = "TACKL_DATA_DIR"
UI_DIR_ENV = "TACKL_UI_DIR"


class SessionError(Exception):
    """API-level failure with a machine-readable code."""

    def __init__(self, code: str, message: str, status: int = 400, **extra: Any):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status
        self.extra = extra


@dataclass
class Session:
    """One live labeling loop: manifest, config, round state, wire status."""

    session_id: str
    labels: list[str]
    media: list[str | None]
    method: str
    ctx: LoopConfig
    state: RoundState
    status: str = "ready"  # ready | awaiting-responses | fitting | finished
    issued: list[TripletQuery] = field(default_factory=list)
    received: dict[str, TripletResponse] = field(default_factory=dict)
    metrics_history: list[dict] = field(default_factory=list)
    eval_triplets: np.ndarray | None = None
    pool_path: str | None = None
    lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    @property
    def n(self) -> int:
        return len(self.labels)

    def query_id(self, q: TripletQuery) -> str:
        return f"{self.state.t}-{q.head}"


_METHOD_KINDS = {
    "CKL": ModelKind.CKL,
    "TACKL": ModelKind.TACKL,
    "A-CKL": ModelKind.CKL,
    "A-TACKL": ModelKind.TACKL,
}


def _build_ctx(method: str, features: np.ndarray | None, n: int, config: dict, pool) -> LoopConfig:
    kind = _METHOD_KINDS[method]
    selector = "active" if method.startswith("A-") else "random"
    if kind == ModelKind.TACKL:
        if features is None:
            raise SessionError("features-required", f"method {method} needs a feature matrix")
        dhat = config.get("dhat")
        dhat = features.shape[1] if dhat is None else int(dhat)
        feats = features
    else:
        feats = np.zeros((n, 0))
        dhat = int(config.get("dhat", 5))
    fit = FitConfig(**config.get("fit", {}))
    active = ActiveConfig(**config.get("active", {}))
    return LoopConfig(
        method=method,
        kind=kind,
        selector=selector,
        features=feats,
        dhat=dhat,
        mu=float(config.get("mu", DEFAULT_MU)),
        fit=fit,
        active=active,
        seed=int(config.get("seed", 0)),
        trial=0,
        warm_start=bool(config.get("warm_start", True)),
        pool=pool,
    )


class SessionStore:
    """Sessions on disk: one JSON file each, written atomically on commit."""

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.sessions: dict[str, Session] = {}
        for path in sorted(self.data_dir.glob("session-*.json")):
            session = self._load(path)
            self.sessions[session.session_id] = session

    # -- persistence ----------------------------------------------------------

    def _path(self, session_id: str) -> Path:
        return self.data_dir / f"session-{session_id}.json"

    def save(self, s: Session) -> None:
        doc = {
            "schema": 1,
            "session_id": s.session_id,
            "labels": s.labels,
            "media": s.media,
            "method": s.method,
            "status": s.status if s.status != "fitting" else "awaiting-responses",
            "config": {
                "dhat": s.ctx.dhat,
                "mu": s.ctx.mu,
                "seed": s.ctx.seed,
                "warm_start": s.ctx.warm_start,
                "fit": {
                    "max_iters": s.ctx.fit.max_iters,
                    "step_size": s.ctx.fit.step_size,
                    "step_decay": s.ctx.fit.step_decay,
                    "grad_tol": s.ctx.fit.grad_tol,
                    "obj_tol": s.ctx.fit.obj_tol,
                    "init_scale": s.ctx.fit.init_scale,
                    "seed": s.ctx.fit.seed,
                    "restarts": s.ctx.fit.restarts,
                },
                "active": {
                    "w_samples": s.ctx.active.w_samples,
                    "xhat_samples": s.ctx.active.xhat_samples,
                    "ckl_samples": s.ctx.active.ckl_samples,
                    "candidate_pairs_per_head": s.ctx.active.candidate_pairs_per_head,
                    "pool_restricted": s.ctx.active.pool_restricted,
                    "ckl_hypotheses": s.ctx.active.ckl_hypotheses,
                    "fallback_scale": s.ctx.active.fallback_scale,
                    "seed": s.ctx.active.seed,
                },
            },
            "features": s.ctx.features.tolist(),
            "pool_path": s.pool_path,
            "round": s.state.t,
            "responses": [[r.head, r.closer, r.farther] for r in s.state.responses],
            "issued": [[q.head, *q.pair] for q in s.issued],
            "received": {k: [r.head, r.closer, r.farther] for k, r in s.received.items()},
            "model": {
                "weights": s.state.model.weights.tolist(),
                "free": s.state.model.free.tolist(),
            },
            "metrics_history": s.metrics_history,
        }
        tmp = self._path(s.session_id).with_suffix(".tmp")
        tmp.write_text(json.dumps(doc, sort_keys=True))
        os.replace(tmp, self._path(s.session_id))

    def _load(self, path: Path) -> Session:
        doc = json.loads(path.read_text())
        features = np.array(doc["features"], dtype=np.float64)
        n = len(doc["labels"])
        features = features.reshape(n, -1) if features.size else np.zeros((n, 0))
        pool = load_pool(doc["pool_path"]) if doc.get("pool_path") else None
        ctx = _build_ctx(
            doc["method"], features if features.shape[1] else None, n, doc["config"], pool
        )
        responses = [TripletResponse(*r) for r in doc["responses"]]
        by_head: dict[int, list[TripletResponse]] = {}
        for r in responses:
            by_head.setdefault(r.head, []).append(r)
        from tackl.core import CombinedModel, ckl_model

        weights = np.array(doc["model"]["weights"], dtype=np.float64)
        free = np.array(doc["model"]["free"], dtype=np.float64).reshape(n, -1)
        if ctx.kind == ModelKind.CKL:
            model = ckl_model(free, ctx.mu)
        else:
            model = CombinedModel(ctx.features, weights, free, ctx.mu)
        state = RoundState(
            t=int(doc["round"]),
            kind=ctx.kind,
            model=model,
            responses=responses,
            by_head=by_head,
        )
        session = Session(
            session_id=doc["session_id"],
            labels=list(doc["labels"]),
            media=list(doc["media"]),
            method=doc["method"],
            ctx=ctx,
            state=state,
            status=doc["status"],
            issued=[TripletQuery(q[0], (q[1], q[2])) for q in doc["issued"]],
            received={k: TripletResponse(*v) for k, v in doc["received"].items()},
            metrics_history=list(doc["metrics_history"]),
            pool_path=doc.get("pool_path"),
        )
        if pool is not None:
            session.eval_triplets = responses_array(pool.responses())
        if (
            session.status == "awaiting-responses"
            and session.issued
            and len(session.received) == len(session.issued)
        ):
            # A refit was interrupted by shutdown; finish it now.
            queries = list(session.issued)
            answers = [session.received[session.query_id(q)] for q in queries]
            self._refit(session, queries, answers)
        return session

    # -- operations -----------------------------------------------------------

    def create_session(self, manifest: dict, config: dict) -> Session:
        objects = manifest.get("objects")
        if not isinstance(objects, list) or len(objects) < 3:
            raise SessionError("manifest-too-small", "manifest needs at least 3 objects")
        labels = [str(o.get("label", i)) for i, o in enumerate(objects)]
        media = [o.get("media") for o in objects]
        method = config.get("method", "A-TACKL")
        if method not in _METHOD_KINDS:
            raise SessionError("unknown-method", f"unknown method {method!r}")
        features = None
        if manifest.get("features") is not None:
            features = np.asarray(manifest["features"], dtype=np.float64)
            if features.ndim != 2 or features.shape[0] != len(objects):
                raise SessionError(
                    "bad-features", f"features must be ({len(objects)}, d), got {features.shape}"
                )
        pool = None
        pool_path = config.get("pool_path")
        if pool_path:
            try:
                pool = load_pool(pool_path)
            except (OSError, ValueError) as exc:
                raise SessionError("bad-pool", f"could not load pool: {exc}")
        ctx = _build_ctx(method, features, len(objects), config, pool)
        state = init_state(ctx, len(objects))
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            labels=labels,
            media=media,
            method=method,
            ctx=ctx,
            state=state,
            pool_path=pool_path,
        )
        if pool is not None:
            session.eval_triplets = responses_array(pool.responses())
        self.sessions[session.session_id] = session
        self.save(session)
        return session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise SessionError("unknown-session", f"no session {session_id!r}", status=404)
        return session

    def next_round(self, session_id: str) -> list[dict]:
        s = self.get(session_id)
        with s.lock:
            if s.status == "awaiting-responses":
                raise SessionError(
                    "round-open", "current round is still awaiting responses", status=409
                )
            if s.status == "fitting":
                raise SessionError("fitting", "refit in progress; poll status", status=409)
            if s.status == "finished":
                return []
            queries, _ = select_round_queries(s.state, s.ctx)
            if not queries:
                s.status = "finished"
                self.save(s)
                return []
            s.issued = queries
            s.received = {}
            s.status = "awaiting-responses"
            self.save(s)
            return [
                {"query_id": s.query_id(q), "head": q.head, "pair": list(q.pair)}
                for q in queries
            ]

    def submit_responses(self, session_id: str, responses: list[dict]) -> dict:
        s = self.get(session_id)
        with s.lock:
            if s.status != "awaiting-responses":
                raise SessionError(
                    "no-open-round", f"session is {s.status}, not awaiting responses", status=409
                )
            by_id = {s.query_id(q): q for q in s.issued}
            for item in responses:
                qid = str(item.get("query_id"))
                q = by_id.get(qid)
                if q is None:
                    raise SessionError(
                        "unknown-query",
                        f"response for un-issued query {qid!r}",
                        issued=sorted(by_id),
                    )
                if qid in s.received:
                    raise SessionError("duplicate-response", f"query {qid!r} already answered")
                closer = item.get("closer")
                if closer not in q.pair:
                    raise SessionError(
                        "bad-closer",
                        f"closer {closer!r} is not in the pair of query {qid!r}",
                        query={"query_id": qid, "head": q.head, "pair": list(q.pair)},
                    )
                farther = q.pair[1] if closer == q.pair[0] else q.pair[0]
                s.received[qid] = TripletResponse(q.head, int(closer), int(farther))
            complete = len(s.received) == len(s.issued)
            self.save(s)
            accepted = [
                {"query_id": qid, "closer": r.closer} for qid, r in sorted(s.received.items())
            ]
            if not complete:
                return {
                    "status": s.status,
                    "received": len(s.received),
                    "expected": len(s.issued),
                    "accepted": accepted,
                }
            s.status = "fitting"
            queries = list(s.issued)
            answers = [s.received[s.query_id(q)] for q in queries]
        thread = threading.Thread(
            target=self._refit, args=(s, queries, answers), daemon=True
        )
        thread.start()
        return {
            "status": "fitting",
            "received": len(answers),
            "expected": len(answers),
            "accepted": accepted,
        }

    def _refit(self, s: Session, queries, answers) -> None:
        new_state = complete_round(
            s.state, s.ctx, queries, answers, eval_responses=s.eval_triplets
        )
        with s.lock:
            s.state = new_state
            record = new_state.history[-1].metrics
            if record is not None:
                s.metrics_history.append(
                    {
                        "round": record.round,
                        "responses_seen": record.responses_seen,
                        "error": record.query_prediction_error,
                        "mean_likelihood": record.mean_likelihood,
                        "mean_ratio": record.mean_ratio,
                        "median_ratio": record.median_ratio,
                    }
                )
            else:
                s.metrics_history.append(
                    {
                        "round": new_state.t - 1,
                        "responses_seen": len(new_state.responses),
                    }
                )
            s.issued = []
            s.received = {}
            s.status = "ready"
            self.save(s)

    def snapshot(self, session_id: str) -> dict:
        s = self.get(session_id)
        with s.lock:
            current = []
            for q in s.issued:
                qid = s.query_id(q)
                entry = {
                    "query_id": qid,
                    "head": q.head,
                    "pair": list(q.pair),
                    "answered": qid in s.received,
                }
                if qid in s.received:
                    entry["closer"] = s.received[qid].closer
                current.append(entry)
            return {
                "session_id": s.session_id,
                "status": s.status,
                "method": s.method,
                "round": s.state.t,
                "n": s.n,
                "labels": s.labels,
                "media": s.media,
                "responses_seen": len(s.state.responses),
                "weights": s.state.model.weights.tolist(),
                "projection": embedding_projection(s.state.model).tolist(),
                "metrics_history": list(s.metrics_history),
                "current_round": current,
            }


def _default_ui_dir() -> Path | None:
    env = os.environ.get(UI_DIR_ENV)
    if env:
        return Path(env)
    repo_frontend = Path(__file__).resolve().parents[2] / "frontend"
    return repo_frontend if (repo_frontend / "index.html").exists() else None


def create_app(
    data_dir: str | Path | None = None, ui_dir: str | Path | None = None
) -> FastAPI:
    """Build the API app around a session store rooted at ``data_dir``.

    When ``ui_dir`` (or the checked-out frontend) holds a built labeler
    UI, it is served at the root path.
    """
    if data_dir is None:
        data_dir = os.environ.get(DATA_DIR_ENV, "./tackl-data")
    store = SessionStore(data_dir)
    app = FastAPI(title="tackl session server")
    app.state.store = store

    @app.exception_handler(SessionError)
    async def _session_error(_: Request, exc: SessionError):
        body = {"error": {"code": exc.code, "message": exc.message, **exc.extra}}
        return JSONResponse(status_code=exc.status, content=body)

    @app.post("/sessions", status_code=201)
    async def create_session(payload: dict):
        manifest = payload.get("manifest", {})
        config = payload.get("config", {})
        try:
            session = store.create_session(manifest, config)
        except (TypeError, ValueError) as exc:
            raise SessionError("bad-request", str(exc))
        return store.snapshot(session.session_id)

    @app.post("/sessions/{session_id}/rounds")
    async def next_round(session_id: str):
        return {"queries": store.next_round(session_id)}

    @app.post("/sessions/{session_id}/responses")
    async def submit(session_id: str, payload: dict):
        responses = payload.get("responses")
        if not isinstance(responses, list):
            raise SessionError("bad-request", "payload needs a 'responses' list")
        return store.submit_responses(session_id, responses)

    @app.get("/sessions/{session_id}")
    async def snapshot(session_id: str):
        return store.snapshot(session_id)

    ui_dir = Path(ui_dir) if ui_dir is not None else _default_ui_dir()
    if ui_dir is not None and ui_dir.is_dir():
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    return app
