"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

import numpy as np

from .tensor import Parameter, Tensor


def _name(p: Tensor, i: int) -> str:
    return p.name if isinstance(p, Parameter) else f"input{i}"


def grad_check(f, params, max_coords: int = 8, step: float | None = None,
               seed: int = 0) -> dict[str, float]:
    """Compare reverse-mode gradients of scalar ``f()`` against centered
    finite differences.

    `params` are the leaf tensors to perturb (closed over by `f`); for each
    one at most `max_coords` randomly sampled coordinates are checked.
    Returns the max relative error per parameter. Run in float64: the
    default step is tuned for that precision.
    """
    params = list(params)
    rng = np.random.default_rng(seed)

    for p in params:
        p.grad = None
    loss = f()
    loss.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy()
                for p in params]

    report: dict[str, float] = {}
    for i, p in enumerate(params):
        n = p.data.size
        flat = p.data.reshape(-1)
        coords = (np.arange(n) if n <= max_coords
                  else rng.choice(n, size=max_coords, replace=False))
        worst = 0.0
        for c in coords:
            orig = flat[c]
            h = step if step is not None else 6e-6 * max(1.0, abs(orig))
            flat[c] = orig + h
            fp = f().item()
            flat[c] = orig - h
            fm = f().item()
            flat[c] = orig
            num = (fp - fm) / (2.0 * h)
            ana = analytic[i].reshape(-1)[c]
            err = abs(ana - num) / max(abs(ana) + abs(num), 1e-6)
            worst = max(worst, err)
        report[_name(p, i)] = worst
    return report
