"""Losses, the Adam optimizer, and checkpoint persistence for the autodiff core."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .autodiff import Param, Tensor, as_tensor, maximum, mul, sqrt, sub, tsum


def pinball(y, y_hat, alpha: float) -> Tensor:
    """Elementwise pinball (quantile) loss max(alpha*(y-yhat), (alpha-1)*(y-yhat)).

    Nonnegative, zero iff y == yhat, and minimized in expectation at the
    alpha-quantile of y. Differentiable everywhere except y == yhat.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("pinball alpha must be in (0, 1)")
    err = sub(as_tensor(y), as_tensor(y_hat))
    return maximum(mul(err, alpha), mul(err, alpha - 1.0))


def pinball_loss(y: float, y_hat: float, alpha: float) -> float:
    """Scalar pinball loss value."""
    return pinball(float(y), float(y_hat), alpha).item()


def masked_frobenius_loss(w_hat, w_target, mask) -> Tensor:
    """Frobenius norm of mask * w_hat - w_target.

    `w_target` is expected to carry values only on the mask's support, so the
    result measures reconstruction error over the masked entries alone and the
    gradient flows only through them.
    """
    w_hat = as_tensor(w_hat)
    w_target = as_tensor(w_target)
    mask = as_tensor(mask)
    if not (w_hat.shape == w_target.shape == mask.shape):
        raise ValueError("masked_frobenius_loss shape mismatch")
    diff = sub(mul(mask, w_hat), w_target)
    return sqrt(tsum(mul(diff, diff)))


def masked_squared_loss(pred, target, mask) -> Tensor:
    """Sum of squared errors over the masked entries (no square root)."""
    pred = as_tensor(pred)
    target = as_tensor(target)
    mask = as_tensor(mask)
    if not (pred.shape == target.shape == mask.shape):
        raise ValueError("masked_squared_loss shape mismatch")
    diff = mul(mask, sub(pred, target))
    return tsum(mul(diff, diff))


def masked_pinball_sum(target, pred, mask, alpha: float) -> Tensor:
    """Sum of pinball losses over the masked entries."""
    return tsum(mul(as_tensor(mask), pinball(target, pred, alpha)))


class Adam:
    """Adam with bias correction; state is keyed by parameter name."""

    def __init__(self, params: list[Param], lr: float = 0.01,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        names = [p.name for p in params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self._m = {p.name: np.zeros_like(p.value) for p in params}
        self._v = {p.name: np.zeros_like(p.value) for p in params}
        self._t = 0

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self._t += 1
        b1, b2 = self.beta1, self.beta2
        bias1 = 1.0 - b1 ** self._t
        bias2 = 1.0 - b2 ** self._t
        for p in self.params:
            g = p.grad
            m = self._m[p.name]
            v = self._v[p.name]
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            p.value = p.value - self.lr * update


def adam_step(params: list[Param], optimizer: Adam | None = None, **kwargs) -> Adam:
    """One optimizer step over `params`; creates the Adam state on first call."""
    if optimizer is None:
        optimizer = Adam(params, **kwargs)
    optimizer.step()
    return optimizer


# -- checkpoints --------------------------------------------------------------
#
# Flat JSON container: {"meta": {...}, "params": {name: {"rows": r, "cols": c,
# "data": [row-major floats]}}}. Human-readable and diff-friendly; these
# models are far too small for binary formats to matter.


def save_checkpoint(path, params: list[Param], meta: dict | None = None) -> None:
    payload = {
        "meta": meta or {},
        "params": {
            p.name: {
                "rows": p.tensor.rows,
                "cols": p.tensor.cols,
                "data": [float(x) for x in p.value.ravel()],
            }
            for p in params
        },
    }
    Path(path).write_text(json.dumps(payload, sort_keys=True), encoding="utf-8")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    params = {}
    for name, rec in payload["params"].items():
        arr = np.array(rec["data"], dtype=np.float64).reshape(rec["rows"], rec["cols"])
        params[name] = arr
    return params, payload.get("meta", {})


def restore_params(params: list[Param], state: dict[str, np.ndarray]) -> None:
    for p in params:
        if p.name not in state:
            raise KeyError(f"checkpoint missing parameter {p.name!r}")
        p.value = state[p.name]
