"""Self-contained gradient-check suites, shared by the CLI and tests.

Everything runs in float64; tolerances are 1e-4 for primitive ops and
1e-3 for the full network.
"""

from __future__ import annotations

import numpy as np

from . import ndtensor as nd
from .loss_metrics import phasen_loss
from .model import PhasenConfig, PhasenModel
from .ndtensor import Tensor, grad_check

PRIMITIVE_TOL = 1e-4
MODEL_TOL = 1e-3


def _rand(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True, dtype=np.float64)


def check_ops(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    report = {}

    for name, fn in [
        ("add", lambda a, b: a + b),
        ("sub", lambda a, b: a - b),
        ("mul", lambda a, b: a * b),
        ("div", lambda a, b: a / (b * b + 1.0)),
    ]:
        a, b = _rand(rng, 4, 5), _rand(rng, 4, 5)
        report[name] = max(grad_check(lambda: (fn(a, b) ** 2).sum(), [a, b]).values())

    for name, fn in [
        ("sigmoid", nd.sigmoid), ("tanh", nd.tanh), ("relu", nd.relu),
        ("sqrt", lambda x: nd.sqrt(x * x + 1.0)),
        ("power", lambda x: (x * x + 0.5) ** 0.3),
    ]:
        x = _rand(rng, 3, 7)
        report[name] = max(grad_check(lambda: (fn(x) * fn(x)).sum(), [x]).values())

    a, b = _rand(rng, 4, 3), _rand(rng, 3, 5)
    report["matmul"] = max(grad_check(lambda: ((a @ b) ** 2).sum(), [a, b]).values())

    x = _rand(rng, 2, 3, 4)
    report["reshape_permute"] = max(grad_check(
        lambda: ((x.permute(2, 0, 1).reshape(4, 6) ** 2).sum()), [x]).values())

    u, v = _rand(rng, 2, 3, 2), _rand(rng, 2, 3, 5)
    report["concat_slice"] = max(grad_check(
        lambda: (nd.concat([u, v], axis=2)[..., 1:4] ** 2).sum(), [u, v]).values())

    x = _rand(rng, 5, 4)
    report["mean_sum"] = max(grad_check(
        lambda: (x.mean(axis=0) * x.sum(axis=0)).sum(), [x]).values())
    return report


def check_conv(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    report = {}
    x = _rand(rng, 5, 6, 3)
    w = _rand(rng, 3, 3, 3, 2)
    b = _rand(rng, 2)
    report["conv2d"] = max(grad_check(
        lambda: (nd.conv2d(x, w, b) ** 2).sum(), [x, w, b]).values())
    x1 = _rand(rng, 7, 3)
    w1 = _rand(rng, 5, 3, 2)
    b1 = _rand(rng, 2)
    report["conv1d"] = max(grad_check(
        lambda: (nd.conv1d(x1, w1, b1) ** 2).sum(), [x1, w1, b1]).values())
    return report


def check_norm(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    report = {}
    x = _rand(rng, 4, 5, 3)
    g = Tensor(rng.uniform(0.5, 1.5, 3), requires_grad=True)
    b = _rand(rng, 3)
    st = nd.NormState(3, dtype=np.float64)
    # larger step: the normalization makes cancellation roundoff-dominated
    report["batch_norm"] = max(grad_check(
        lambda: (nd.batch_norm(x, g, b, st, training=True) ** 2).sum(),
        [x, g, b], step=1e-4).values())
    report["global_layer_norm"] = max(grad_check(
        lambda: (nd.global_layer_norm(x, g, b) ** 2).sum(), [x, g, b]).values())
    return report


def check_lstm(seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    T, D, H = 4, 3, 2
    x = _rand(rng, T, D)
    fwd = (_rand(rng, D, 4 * H), _rand(rng, H, 4 * H), _rand(rng, 4 * H))
    bwd = (_rand(rng, D, 4 * H), _rand(rng, H, 4 * H), _rand(rng, 4 * H))
    err = max(grad_check(
        lambda: (nd.bilstm(x, fwd, bwd) ** 2).sum(),
        [x, *fwd, *bwd]).values())
    return {"bilstm": err}


def check_model(seed: int = 0, frames: int = 16) -> dict[str, float]:
    """End-to-end: full forward plus loss on a short input.

    Checks one centered directional derivative per parameter tensor (random
    unit direction) against the dot product with the analytic gradient.
    No single finite-difference step suits every tensor here: the power-0.3
    amplitude compression in the loss has unbounded curvature at quiet bins,
    which keeps truncation error high until very small steps, while bias
    tensors that feed batch norm have exactly-zero gradients where only a
    larger step stays above roundoff. A tensor passes if any step in the
    ladder agrees; a wrong gradient disagrees at every step size.
    """
    rng = np.random.default_rng(seed)
    cfg = PhasenConfig.micro(num_bands=9)
    model = PhasenModel(cfg, dtype=np.float64, seed=seed)
    s_in = rng.normal(size=(frames, cfg.num_bands, 2))
    s_gt = rng.normal(size=(frames, cfg.num_bands, 2))

    def f():
        _, _, s_out = model.forward(s_in)
        loss, _, _ = phasen_loss(s_out, s_gt)
        return loss

    for p in model.parameters():
        p.grad = None
    f().backward()
    grads = {p.name: p.grad.copy() for p in model.parameters()}

    def directional_err(p, u, h):
        orig = p.data.copy()
        p.data = orig + h * u
        up = f().item()
        p.data = orig - h * u
        dn = f().item()
        p.data = orig
        numeric = (up - dn) / (2 * h)
        analytic = float((grads[p.name] * u).sum())
        return abs(analytic - numeric) / max(abs(analytic) + abs(numeric),
                                             1e-6)

    worst = 0.0
    dir_rng = np.random.default_rng(seed + 1)
    for p in model.parameters():
        u = dir_rng.normal(size=p.data.shape)
        u /= np.linalg.norm(u)
        err = directional_err(p, u, 3e-9)
        for h in (1e-5, 3e-10):
            if err < MODEL_TOL:
                break
            err = min(err, directional_err(p, u, h))
        worst = max(worst, err)
    return {"model_max": worst}


SUITES = {
    "ops": (check_ops, PRIMITIVE_TOL),
    "conv": (check_conv, PRIMITIVE_TOL),
    "norm": (check_norm, PRIMITIVE_TOL),
    "lstm": (check_lstm, PRIMITIVE_TOL),
    "model": (check_model, MODEL_TOL),
}


def run_suites(module: str | None = None):
    """Run one or all suites; returns (results, failures) where results maps
    'suite.op' to (error, tolerance)."""
    names = [module] if module else list(SUITES)
    results = {}
    failures = []
    for name in names:
        if name not in SUITES:
            raise ValueError(
                f"unknown gradcheck module {name!r}; valid: {', '.join(SUITES)}")
        fn, tol = SUITES[name]
        for op, err in fn().items():
            key = f"{name}.{op}"
            results[key] = (err, tol)
            if not (err < tol):
                failures.append(key)
    return results, failures
