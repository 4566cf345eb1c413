"""Shared fixtures-as-functions for the test modules."""

import numpy as np

from graphon_pooling.gnn import GnnConfig, init_weights, loss_and_grads
from graphon_pooling.graphon import exponential
from graphon_pooling.pooling import build_pooling_plan


def tiny_model(seed=0, method="m1"):
    """N0 = 6 -> N1 = 3, F = 2, K = 2."""
    plan = build_pooling_plan(exponential(2.3), method, [6, 3], seed=seed)
    cfg = GnnConfig.from_plan(plan, [2], [2], n_classes=3, seed=seed)
    return cfg, init_weights(cfg, seed)


def gradient_errors(cfg, weights, x, labels, h=1e-5):
    """Per-tensor relative error |analytic - central difference| / max(norms)."""
    _, grads = loss_and_grads(cfg, weights, x, labels)
    out = {}
    for name, w in weights.items():
        num = np.zeros_like(w)
        for idx in np.ndindex(w.shape):
            orig = w[idx]
            w[idx] = orig + h
            lp, _ = loss_and_grads(cfg, weights, x, labels)
            w[idx] = orig - h
            lm, _ = loss_and_grads(cfg, weights, x, labels)
            w[idx] = orig
            num[idx] = (lp - lm) / (2 * h)
        scale = max(np.linalg.norm(grads[name]), np.linalg.norm(num), 1e-12)
        out[name] = float(np.linalg.norm(grads[name] - num) / scale)
    return out
