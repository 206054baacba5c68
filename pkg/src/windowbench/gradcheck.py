"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from . import neural


def relative_error(ga, gn) -> np.ndarray:
    ga, gn = np.asarray(ga, float), np.asarray(gn, float)
    return np.abs(ga - gn) / (np.abs(ga) + np.abs(gn) + 1e-12)


def numeric_gradient(f: Callable[[], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Central differences of ``f`` with respect to every entry of ``x`` (modified in place and restored)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = f()
        flat[i] = orig - eps
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * eps)
    return g


def check_vector(fun_grad: Callable[[np.ndarray], tuple[float, np.ndarray]], x0, eps: float = 1e-5) -> float:
    """Max relative error between an analytic gradient and central differences at ``x0``."""
    x = np.array(x0, dtype=np.float64)
    if x.dtype != np.float64:
        raise TypeError("gradient checks need float64")
    _, ga = fun_grad(x)
    gn = numeric_gradient(lambda: fun_grad(x)[0], x, eps)
    return float(relative_error(ga, gn).max())


def nudge_off_kinks(params: dict[str, np.ndarray], batches: Mapping[str, tuple], margin: float = 1e-3) -> int:
    """Shift projection biases so no pre-activation on ``batches`` lies within ``margin`` of zero.

    Returns the number of hidden units moved. ReLU is not differentiable at 0,
    so finite differences there are meaningless.
    """
    tokens = np.unique(np.concatenate([b.uniq for b, _, _ in batches.values()] or [np.zeros(0, np.int64)]))
    if tokens.size == 0:
        return 0
    pre = params["E"][tokens] @ params["W_p"].T + params["b_p"]
    moved = 0
    steps = margin * np.array([2.0, -2.0, 4.0, -4.0, 8.0, -8.0, 16.0, -16.0])
    for j in range(pre.shape[1]):
        col = pre[:, j]
        if np.min(np.abs(col)) >= margin:
            continue
        for delta in steps:
            if np.min(np.abs(col + delta)) >= margin:
                params["b_p"][j] += delta
                moved += 1
                break
    return moved


def grad_check(
    params: dict[str, np.ndarray],
    aggregation: str,
    task_batches: Mapping[str, tuple],
    eps: float = 1e-5,
    corrupt: float = 0.0,
) -> dict[str, float]:
    """Max relative error per parameter of the Average encoder loss.

    ``corrupt`` scales the analytic gradient by (1 + corrupt) to test the
    harness itself.
    """
    for k, v in params.items():
        if v.dtype != np.float64:
            raise TypeError(f"parameter {k} is {v.dtype}; gradient checks need float64")
    _, grads = neural.loss_and_grad(params, aggregation, task_batches)
    ga = neural.dense_grads(params, grads)
    out = {}
    for k in params:
        gn = numeric_gradient(lambda: neural.loss_only(params, aggregation, task_batches), params[k], eps)
        out[k] = float(relative_error(ga[k] * (1.0 + corrupt), gn).max())
    return out
