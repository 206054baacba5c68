"""Logistic regression (unpenalized, L1, L2) and shared+task multitask logistic regression."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

PENALTIES = ("none", "l1", "l2")
_TINY = np.finfo(float).tiny
_ONE_BELOW = np.nextafter(1.0, 0.0)


class TrainingError(ValueError):
    pass


def sigmoid(z) -> np.ndarray:
    """Overflow-safe logistic function, clipped so outputs stay strictly inside (0, 1)."""
    return np.clip(expit(z), _TINY, _ONE_BELOW)


def _as_matrix(X):
    if sp.issparse(X):
        return sp.csr_matrix(X, dtype=np.float64)
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


def _check_xy(X, y, sample_weight):
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] != y.size:
        raise TrainingError(f"X has {X.shape[0]} rows but y has {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise TrainingError("labels must be 0/1")
    if y.min() == y.max():
        raise TrainingError(f"single-class labels (n={y.size}, class={int(y[0])})")
    data = X.data if sp.issparse(X) else X
    if not np.all(np.isfinite(data)):
        raise TrainingError("non-finite feature values")
    s = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64).ravel()
    if s.size != y.size or np.any(s < 0) or s.sum() <= 0:
        raise TrainingError("sample weights must be non-negative, one per row, with positive sum")
    return y, s


def nll_terms(z: np.ndarray, y: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z) - y * z


def weighted_prevalence(y, s) -> float:
    return float(np.dot(s, y) / s.sum())


# ---------------------------------------------------------------------------
# optimizer shared by all linear fits


@dataclass
class OptimResult:
    x: np.ndarray
    objective: float
    n_iter: int
    converged: bool
    history: list[float] = field(default_factory=list)


def minimize(
    smooth: Callable[[np.ndarray], tuple[float, np.ndarray]],
    x0: np.ndarray,
    l1: float = 0.0,
    l1_mask: np.ndarray | None = None,
    max_iter: int = 2000,
    tol: float = 1e-8,
    patience: int = 3,
) -> OptimResult:
    """Monotone (proximal) gradient descent with Barzilai-Borwein trial steps and backtracking.

    Minimizes smooth(x) + l1 * ||x[l1_mask]||_1. A step is accepted only
    under the sufficient-decrease condition, so the objective never goes up.
    Converged once ``patience`` consecutive accepted steps each lower the
    objective by less than ``tol``; a single short BB step is not enough.
    """
    x = np.array(x0, dtype=np.float64)
    mask = np.zeros(x.size, bool) if l1_mask is None else np.asarray(l1_mask, bool)

    def penalty(v):
        return l1 * np.abs(v[mask]).sum() if l1 > 0 else 0.0

    def prox(v, t):
        if l1 <= 0:
            return v
        out = v.copy()
        out[mask] = np.sign(v[mask]) * np.maximum(np.abs(v[mask]) - t * l1, 0.0)
        return out

    f, g = smooth(x)
    F = f + penalty(x)
    if not np.isfinite(F):
        raise TrainingError("objective is not finite at the starting point")
    history = [F]
    t = 1.0
    prev_x = prev_g = None
    small = 0
    for it in range(1, max_iter + 1):
        if prev_x is not None:
            sx, sg = x - prev_x, g - prev_g
            denom = float(sx @ sg)
            if denom > 0:
                t = float(np.clip((sx @ sx) / denom, 1e-12, 1e12))
        accepted = False
        for _ in range(60):
            x_new = prox(x - t * g, t)
            d = x_new - x
            f_new, g_new = smooth(x_new)
            if np.isfinite(f_new) and f_new <= f + g @ d + (d @ d) / (2 * t) + 1e-15 * abs(f):
                F_new = f_new + penalty(x_new)
                if F_new <= F:
                    accepted = True
                    break
            t *= 0.5
        if not accepted or not np.any(d):
            return OptimResult(x, F, it, True, history)
        prev_x, prev_g = x, g
        x, f, g = x_new, f_new, g_new
        decrease = F - F_new
        F = F_new
        history.append(F)
        small = small + 1 if decrease < tol else 0
        if small >= patience:
            return OptimResult(x, F, it, True, history)
    return OptimResult(x, F, max_iter, False, history)


# ---------------------------------------------------------------------------
# single-task logistic regression


@dataclass(frozen=True)
class LinearModel:
    w: np.ndarray
    b: float
    penalty: str = "l2"
    lam: float = 1e-4
    n_iter: int = 0
    objective: float = float("nan")
    converged: bool = True
    history: tuple[float, ...] = ()

    @property
    def dim(self) -> int:
        return self.w.size


def lr_objective(X, y, s, penalty: str, lam: float):
    """Return smooth(theta) for theta = [w..., b] (the L1 term is handled by the prox)."""
    X = _as_matrix(X)
    stot = s.sum()
    ridge = lam if penalty == "l2" else 0.0

    def smooth(theta):
        w, b = theta[:-1], theta[-1]
        z = X @ w + b
        f = float(s @ nll_terms(z, y)) / stot + 0.5 * ridge * float(w @ w)
        r = s * (expit(z) - y) / stot
        g = np.empty_like(theta)
        g[:-1] = X.T @ r + ridge * w
        g[-1] = r.sum()
        return f, g

    return smooth


def lr_full_objective(model_or_theta, X, y, sample_weight=None, penalty="none", lam=0.0) -> float:
    X = _as_matrix(X)
    y = np.asarray(y, float)
    s = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, float)
    if isinstance(model_or_theta, LinearModel):
        theta = np.append(model_or_theta.w, model_or_theta.b)
    else:
        theta = np.asarray(model_or_theta, float)
    f, _ = lr_objective(X, y, s, "l2" if penalty == "l2" else "none", lam)(theta)
    if penalty == "l1":
        f += lam * np.abs(theta[:-1]).sum()
    return f


def l1_lambda_max(X, y, sample_weight=None) -> float:
    """Smallest L1 strength at which all non-intercept weights are zero."""
    X = _as_matrix(X)
    y = np.asarray(y, float)
    s = np.ones_like(y) if sample_weight is None else np.asarray(sample_weight, float)
    p = weighted_prevalence(y, s)
    r = s * (p - y) / s.sum()
    return float(np.max(np.abs(X.T @ r)))


def train_lr(
    X,
    y,
    penalty: str = "l2",
    lam: float = 1e-4,
    sample_weight=None,
    max_iter: int = 2000,
    tol: float = 1e-8,
) -> LinearModel:
    """Fit weighted logistic regression.

    Objective: weighted mean NLL + lam * ||w||_1 (l1) or lam/2 * ||w||^2 (l2);
    the intercept is never penalized. Starts at w = 0 with the intercept at
    the log-odds of the weighted prevalence.
    """
    if penalty not in PENALTIES:
        raise TrainingError(f"unknown penalty {penalty!r}")
    if lam < 0:
        raise TrainingError("regularization strength must be non-negative")
    X = _as_matrix(X)
    y, s = _check_xy(X, y, sample_weight)
    d = X.shape[1]
    p = weighted_prevalence(y, s)
    theta0 = np.zeros(d + 1)
    theta0[-1] = np.log(p / (1 - p))
    mask = np.ones(d + 1, bool)
    mask[-1] = False
    res = minimize(
        lr_objective(X, y, s, penalty, lam),
        theta0,
        l1=lam if penalty == "l1" else 0.0,
        l1_mask=mask,
        max_iter=max_iter,
        tol=tol,
    )
    return LinearModel(
        w=res.x[:-1].copy(),
        b=float(res.x[-1]),
        penalty=penalty,
        lam=lam,
        n_iter=res.n_iter,
        objective=res.objective,
        converged=res.converged,
        history=tuple(res.history),
    )


def predict(model: LinearModel, X) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != model.dim:
        raise ValueError(f"feature dimension {X.shape[1]} does not match model dimension {model.dim}")
    return sigmoid(X @ model.w + model.b)


# ---------------------------------------------------------------------------
# multitask


@dataclass(frozen=True)
class MultitaskLinearModel:
    w_shared: np.ndarray
    w_task: Mapping[str, np.ndarray]
    b_task: Mapping[str, float]
    lam_shared: float
    lam_task: float
    n_iter: int = 0
    objective: float = float("nan")
    converged: bool = True

    @property
    def tasks(self) -> tuple[str, ...]:
        return tuple(sorted(self.w_task))

    def task_model(self, task: str) -> LinearModel:
        return LinearModel(
            self.w_shared + self.w_task[task],
            self.b_task[task],
            "l2",
            self.lam_task,
            self.n_iter,
            self.objective,
            self.converged,
        )


def multitask_objective(tasks: Mapping[str, tuple], lam_shared: float, lam_task: float):
    """smooth(theta) for theta = [w_shared, (w_t, b_t) per task in sorted order].

    sum_t NLL_t(w_shared + w_t) + lam_shared ||w_shared||^2 + lam_task sum_t ||w_t||^2
    with NLL_t the weighted mean negative log-likelihood of task t.
    """
    names = sorted(tasks)
    prepared = []
    for t in names:
        X, y, s = tasks[t]
        prepared.append((_as_matrix(X), np.asarray(y, float), np.asarray(s, float)))
    d = prepared[0][0].shape[1]

    def smooth(theta):
        ws = theta[:d]
        f = lam_shared * float(ws @ ws)
        g = np.zeros_like(theta)
        g[:d] = 2 * lam_shared * ws
        for i, (X, y, s) in enumerate(prepared):
            off = d + i * (d + 1)
            wt, bt = theta[off : off + d], theta[off + d]
            z = X @ (ws + wt) + bt
            stot = s.sum()
            f += float(s @ nll_terms(z, y)) / stot + lam_task * float(wt @ wt)
            r = s * (expit(z) - y) / stot
            gx = X.T @ r
            g[:d] += gx
            g[off : off + d] = gx + 2 * lam_task * wt
            g[off + d] = r.sum()
        return f, g

    return smooth, names, d


def train_multitask_lr(
    tasks: Mapping[str, tuple],
    lam_shared: float = 1e-4,
    lam_task: float = 1e-3,
    max_iter: int = 2000,
    tol: float = 1e-8,
) -> MultitaskLinearModel:
    """Fit shared + task-specific weights.

    ``tasks`` maps a task name to ``(X, y)`` or ``(X, y, sample_weight)``.
    """
    if not tasks:
        raise TrainingError("no tasks given")
    prepared = {}
    dims = set()
    for name, item in tasks.items():
        X, y = item[0], item[1]
        s = item[2] if len(item) > 2 else None
        X = _as_matrix(X)
        if X.shape[0] == 0:
            raise TrainingError(f"task {name!r} has no data")
        y, s = _check_xy(X, y, s)
        dims.add(X.shape[1])
        prepared[name] = (X, y, s)
    if len(dims) != 1:
        raise TrainingError(f"tasks disagree on feature dimension: {sorted(dims)}")
    smooth, names, d = multitask_objective(prepared, lam_shared, lam_task)
    theta0 = np.zeros(d + len(names) * (d + 1))
    # Jacobi scaling from a diagonal curvature bound; keeps large shared or
    # task penalties from stalling the first-order solver
    curv = np.empty_like(theta0)
    curv[:d] = 2 * lam_shared
    for i, n in enumerate(names):
        X, y, s = prepared[n]
        p = weighted_prevalence(y, s)
        off = d + i * (d + 1)
        theta0[off + d] = np.log(p / (1 - p))
        sq = X.multiply(X) if sp.issparse(X) else X * X
        data = 0.25 * np.asarray(sq.T @ s).ravel() / s.sum()
        curv[:d] += data
        curv[off : off + d] = data + 2 * lam_task
        curv[off + d] = 0.25
    scale = 1.0 / np.sqrt(np.where(curv > 0, curv, 1.0))

    def scaled(u):
        f, g = smooth(u * scale)
        return f, g * scale

    res = minimize(scaled, theta0 / scale, max_iter=max_iter, tol=tol)
    x = res.x * scale
    return MultitaskLinearModel(
        w_shared=x[:d].copy(),
        w_task={n: x[d + i * (d + 1) : d + i * (d + 1) + d].copy() for i, n in enumerate(names)},
        b_task={n: float(x[d + i * (d + 1) + d]) for i, n in enumerate(names)},
        lam_shared=lam_shared,
        lam_task=lam_task,
        n_iter=res.n_iter,
        objective=res.objective,
        converged=res.converged,
    )


def predict_task(model: MultitaskLinearModel, task: str, X) -> np.ndarray:
    return predict(model.task_model(task), X)
