"""Maximum-likelihood fitting of the combined similarity model.

Three fits, all full-batch gradient ascent with backtracking line search
(halve the step until the objective stops decreasing), so objective
traces are monotone non-decreasing:

* ``fit_w``     -- nonnegative feature weights, via projected ascent
                   (negative components clamped to zero after each step);
* ``fit_xhat``  -- the free embedding, with the weights held fixed;
* ``fit_ckl``   -- the purely nonparametric baseline (``fit_xhat`` with an
                   empty feature block);
* ``fit_tackl`` -- the two-stage procedure chaining ``fit_w`` then
                   ``fit_xhat``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from tackl.core import (
    DEFAULT_MU,
    CombinedModel,
    TripletArray,
    TripletResponse,
    responses_array,
)


class NonFiniteObjectiveError(RuntimeError):
    """The objective or gradient became non-finite; retry with a smaller step."""


@dataclass(frozen=True)
class FitConfig:
    """Knobs for the gradient-ascent fits.

    ``step_size`` is the initial trial step; the line search halves it as
    needed and the accepted step is carried (doubled) into the next
    iteration, scaled by ``step_decay``.  Convergence fires when the
    (projected) gradient infinity-norm drops below ``grad_tol``, when an
    accepted step improves the objective by less than ``obj_tol``, or at
    ``max_iters``.  ``init_scale`` sets the spread of random embedding
    initializations and ``restarts`` > 1 refits from that many seeds and
    keeps the best objective.
    """

    max_iters: int = 2000
    step_size: float = 1.0
    step_decay: float = 1.0
    grad_tol: float = 1e-5
    obj_tol: float = 1e-8
    init_scale: float = 0.1
    seed: int = 0
    restarts: int = 1

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not 0 < self.step_decay <= 1:
            raise ValueError("step_decay must be in (0, 1]")
        if self.step_size <= 0 or self.init_scale <= 0:
            raise ValueError("step_size and init_scale must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")


@dataclass
class FitReport:
    """What a fit did: monotone objective trace plus the stop reason."""

    iterations_used: int
    final_objective: float
    objective_trace: list[float] = field(default_factory=list)
    converged_by: str = "max_iters"  # grad_tol | obj_tol | max_iters


def project_nonnegative(w: np.ndarray) -> np.ndarray:
    """Euclidean projection onto the nonnegative orthant."""
    return np.maximum(w, 0.0)


def _ascend(x0, objective, gradient, cfg: FitConfig, project=None):
    """Monotone gradient ascent shared by all fits.

    ``objective`` and ``gradient`` take the parameter array; ``project``
    (if given) is applied after every trial step.  Returns the final
    parameters and a FitReport.
    """
    x = x0 if project is None else project(x0)
    f = objective(x)
    if not np.isfinite(f):
        raise NonFiniteObjectiveError(f"objective non-finite at initialization: {f}")
    trace = [float(f)]
    step = cfg.step_size
    converged_by = "max_iters"
    iters = 0
    for iters in range(1, cfg.max_iters + 1):
        g = gradient(x)
        if not np.all(np.isfinite(g)):
            raise NonFiniteObjectiveError("gradient became non-finite")
        g_test = g
        if project is not None:
            # At an active bound the raw gradient may legitimately point
            # outward; measure convergence on the feasible directions only.
            g_test = np.where((x <= 0.0) & (g < 0.0), 0.0, g)
        if np.max(np.abs(g_test), initial=0.0) < cfg.grad_tol:
            converged_by = "grad_tol"
            iters -= 1
            break

        # Backtracking: halve until the objective stops decreasing.
        accepted = False
        backtracked = False
        while step > 1e-18:
            x_new = x + step * g
            if project is not None:
                x_new = project(x_new)
            f_new = objective(x_new)
            if np.isfinite(f_new) and f_new >= f:
                accepted = True
                break
            step *= 0.5
            backtracked = True
        if not accepted:
            converged_by = "obj_tol"
            iters -= 1
            break

        improvement = f_new - f
        x, f = x_new, f_new
        trace.append(float(f))
        step = step * 2.0 * cfg.step_decay
        # A tiny improvement only signals convergence when the full trial
        # step was accepted; mid-backtracking steps are artificially short.
        if improvement < cfg.obj_tol and not backtracked:
            converged_by = "obj_tol"
            break

    return x, FitReport(iters, float(f), trace, converged_by)


# -- weight fit ---------------------------------------------------------------


def grad_log_likelihood_w(
    features: np.ndarray,
    w: np.ndarray,
    responses: Sequence[TripletResponse] | TripletArray,
    mu: float = DEFAULT_MU,
) -> np.ndarray:
    """Analytic gradient of the weighted-feature log-likelihood w.r.t. w.

    With x'_i = w * x_i the squared distance is D_ij = sum_k w_k^2
    (x_i^k - x_j^k)^2, so dD_ij/dw_k = 2 w_k (x_i^k - x_j^k)^2 and each
    response contributes d/dw of log(mu + D_hf) - log(2mu + D_hf + D_hc).
    """
    t = responses if isinstance(responses, np.ndarray) else responses_array(responses)
    t = np.asarray(t, dtype=np.int64).reshape(-1, 3)
    w = np.asarray(w, dtype=np.float64)
    if t.shape[0] == 0:
        return np.zeros_like(w)
    fb, fc = _sq_feature_diffs(features, t)
    d_ab = fb @ (w * w)
    d_ac = fc @ (w * w)
    alpha = 1.0 / (mu + d_ac)
    beta = 1.0 / (2.0 * mu + d_ac + d_ab)
    return 2.0 * w * (fc.T @ (alpha - beta) - fb.T @ beta)


def _sq_feature_diffs(features: np.ndarray, t: TripletArray):
    """Per-response squared feature differences (head-closer, head-farther)."""
    xa = features[t[:, 0]]
    fb = (xa - features[t[:, 1]]) ** 2
    fc = (xa - features[t[:, 2]]) ** 2
    return fb, fc


def fit_w(
    features: np.ndarray,
    responses: Sequence[TripletResponse] | TripletArray,
    cfg: FitConfig,
    mu: float = DEFAULT_MU,
    w0: np.ndarray | None = None,
) -> tuple[np.ndarray, FitReport]:
    """Projected gradient ascent on the weighted-feature log-likelihood.

    Weights start at all-ones (the raw-feature baseline) unless warm
    started via ``w0``; after every step negative components are clamped
    to zero.
    """
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[1] < 1:
        raise ValueError("fit_w needs a nonempty feature matrix")
    t = responses if isinstance(responses, np.ndarray) else responses_array(responses)
    t = np.asarray(t, dtype=np.int64).reshape(-1, 3)
    if t.shape[0] == 0:
        raise ValueError("fit_w needs at least one response")
    fb, fc = _sq_feature_diffs(features, t)
    mu = float(mu)

    def objective(w):
        d_ab = fb @ (w * w)
        d_ac = fc @ (w * w)
        return float(np.sum(np.log(mu + d_ac) - np.log(2.0 * mu + d_ac + d_ab)))

    def gradient(w):
        d_ab = fb @ (w * w)
        d_ac = fc @ (w * w)
        alpha = 1.0 / (mu + d_ac)
        beta = 1.0 / (2.0 * mu + d_ac + d_ab)
        return 2.0 * w * (fc.T @ (alpha - beta) - fb.T @ beta)

    w_init = np.ones(features.shape[1]) if w0 is None else np.asarray(w0, dtype=np.float64).copy()
    return _ascend(w_init, objective, gradient, cfg, project=project_nonnegative)


# -- free-embedding fit -------------------------------------------------------


def grad_log_likelihood_xhat(
    features: np.ndarray,
    w: np.ndarray,
    free: np.ndarray,
    responses: Sequence[TripletResponse] | TripletArray,
    mu: float = DEFAULT_MU,
) -> np.ndarray:
    """Analytic gradient of the combined log-likelihood w.r.t. the free block.

    Only the rows of objects appearing in some response are nonzero.
    """
    t = responses if isinstance(responses, np.ndarray) else responses_array(responses)
    t = np.asarray(t, dtype=np.int64).reshape(-1, 3)
    free = np.asarray(free, dtype=np.float64)
    if t.shape[0] == 0 or free.shape[1] == 0:
        return np.zeros_like(free)
    feat_ab, feat_ac = _feature_dist_parts(features, w, t)
    return _xhat_gradient(free, t, feat_ab, feat_ac, float(mu))


def _feature_dist_parts(features: np.ndarray, w: np.ndarray, t: TripletArray):
    """Constant feature-block contribution to the per-response distances."""
    features = np.asarray(features, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if features.shape[1] == 0:
        m = t.shape[0]
        return np.zeros(m), np.zeros(m)
    fb, fc = _sq_feature_diffs(features, t)
    w2 = w * w
    return fb @ w2, fc @ w2


def _xhat_distances(free: np.ndarray, t: TripletArray, feat_ab, feat_ac):
    va = free[t[:, 0]]
    diff_b = va - free[t[:, 1]]
    diff_c = va - free[t[:, 2]]
    d_ab = feat_ab + np.sum(diff_b * diff_b, axis=1)
    d_ac = feat_ac + np.sum(diff_c * diff_c, axis=1)
    return diff_b, diff_c, d_ab, d_ac


def _xhat_gradient(free, t, feat_ab, feat_ac, mu):
    diff_b, diff_c, d_ab, d_ac = _xhat_distances(free, t, feat_ab, feat_ac)
    alpha = 1.0 / (mu + d_ac)
    beta = 1.0 / (2.0 * mu + d_ac + d_ab)
    # d(log p)/d xhat_a = 2(alpha-beta)(xa-xc) - 2 beta (xa-xb); the closer
    # and farther rows get the complementary shares.
    ga = 2.0 * ((alpha - beta)[:, None] * diff_c - beta[:, None] * diff_b)
    gb = 2.0 * beta[:, None] * diff_b
    gc = -2.0 * (alpha - beta)[:, None] * diff_c
    n, dhat = free.shape
    idx = np.concatenate([t[:, 0], t[:, 1], t[:, 2]])
    contrib = np.vstack([ga, gb, gc])
    grad = np.empty((n, dhat))
    for k in range(dhat):
        grad[:, k] = np.bincount(idx, weights=contrib[:, k], minlength=n)
    return grad


def fit_xhat(
    features: np.ndarray,
    w: np.ndarray,
    responses: Sequence[TripletResponse] | TripletArray,
    dhat: int,
    cfg: FitConfig,
    mu: float = DEFAULT_MU,
    init: np.ndarray | None = None,
    n: int | None = None,
) -> tuple[np.ndarray, FitReport]:
    """Gradient ascent on the combined log-likelihood over the free block.

    The weights stay fixed. Initialization is zero-centered Gaussian with
    scale ``cfg.init_scale`` unless warm started via ``init``.  With
    ``cfg.restarts`` > 1 the fit is repeated from consecutive seeds and
    the best final objective wins.
    """
    features = np.asarray(features, dtype=np.float64)
    if n is None:
        n = features.shape[0]
    t = responses if isinstance(responses, np.ndarray) else responses_array(responses)
    t = np.asarray(t, dtype=np.int64).reshape(-1, 3)
    mu = float(mu)
    feat_ab, feat_ac = _feature_dist_parts(features, w, t)

    if dhat == 0 or t.shape[0] == 0:
        free = np.zeros((n, dhat)) if init is None else np.asarray(init, dtype=np.float64)
        obj = float(np.sum(np.log(mu + feat_ac) - np.log(2.0 * mu + feat_ac + feat_ab)))
        return free, FitReport(0, obj, [obj], "grad_tol")

    def objective(free):
        _, _, d_ab, d_ac = _xhat_distances(free, t, feat_ab, feat_ac)
        return float(np.sum(np.log(mu + d_ac) - np.log(2.0 * mu + d_ac + d_ab)))

    def gradient(free):
        return _xhat_gradient(free, t, feat_ab, feat_ac, mu)

    if init is not None:
        x0 = np.asarray(init, dtype=np.float64).copy()
        if x0.shape != (n, dhat):
            raise ValueError(f"warm start shape {x0.shape} != ({n}, {dhat})")
        return _ascend(x0, objective, gradient, cfg)

    best: tuple[np.ndarray, FitReport] | None = None
    for r in range(cfg.restarts):
        rng = np.random.default_rng(cfg.seed + r)
        x0 = rng.normal(scale=cfg.init_scale, size=(n, dhat))
        result = _ascend(x0, objective, gradient, cfg)
        if best is None or result[1].final_objective > best[1].final_objective:
            best = result
    return best


def fit_ckl(
    responses: Sequence[TripletResponse] | TripletArray,
    n: int,
    dhat: int,
    mu: float = DEFAULT_MU,
    cfg: FitConfig = FitConfig(),
    init: np.ndarray | None = None,
) -> tuple[np.ndarray, FitReport]:
    """The nonparametric baseline: fit a free embedding with no features."""
    if n < 1 or dhat < 1:
        raise ValueError("fit_ckl needs n >= 1 and dhat >= 1")
    empty = np.zeros((n, 0))
    return fit_xhat(empty, np.zeros(0), responses, dhat, cfg, mu=mu, init=init, n=n)


def fit_tackl(
    features: np.ndarray,
    responses: Sequence[TripletResponse] | TripletArray,
    dhat: int,
    mu: float = DEFAULT_MU,
    cfg: FitConfig = FitConfig(),
    w0: np.ndarray | None = None,
    xhat0: np.ndarray | None = None,
) -> tuple[CombinedModel, tuple[FitReport, FitReport]]:
    """Two-stage fit: weights first, then the free block with weights fixed."""
    w, report_w = fit_w(features, responses, cfg, mu=mu, w0=w0)
    free, report_x = fit_xhat(features, w, responses, dhat, cfg, mu=mu, init=xhat0)
    model = CombinedModel(features, w, free, mu)
    return model, (report_w, report_x)
