"""Finite-difference gradient verification.

The independent oracle for every differentiable path in the project:
central differences at f64 against the tape's analytic gradients.
"""

from __future__ import annotations

import numpy as np

from .tensor import Tensor


def grad_check(fn, inputs: list[Tensor], eps: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    `fn` maps the given tensors to a scalar Tensor and must be
    deterministic (re-runnable). Error per entry is
    |analytic - numeric| / max(|analytic|, |numeric|, 1e-8); the max over
    all entries of all inputs is returned.
    """
    if eps <= 0:
        raise ValueError(f"grad_check: eps must be positive, got {eps}")
    for x in inputs:
        x.grad = None
        x.requires_grad = True
    loss = fn(inputs)
    loss.backward()
    analytic = [
        x.grad.copy() if x.grad is not None else np.zeros_like(x.data) for x in inputs
    ]

    worst = 0.0
    for k, x in enumerate(inputs):
        flat = x.data.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + eps
            f_plus = fn(inputs).item()
            flat[i] = keep - eps
            f_minus = fn(inputs).item()
            flat[i] = keep
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = analytic[k].reshape(-1)[i]
            denom = max(abs(a), abs(numeric), 1e-8)
            worst = max(worst, abs(a - numeric) / denom)
    return worst
