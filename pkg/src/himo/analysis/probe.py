"""Logistic probe predicting a binary label (the goal room) from features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

LN2 = float(np.log(2.0))
MIN_SAMPLES = 200


@dataclass
class ProbeResult:
    cross_entropy: float    # held-out mean, nats
    train_cross_entropy: float
    n_train: int
    n_test: int
    degenerate: bool = False


def _nll(w, X, y, l2):
    z = X @ w
    # log(1 + e^z) - y z, computed stably
    loss = np.logaddexp(0.0, z) - y * z
    p = 0.5 * (1.0 + np.tanh(0.5 * z))
    grad = X.T @ (p - y) / len(y)
    reg = l2 * w[:-1]
    return loss.mean() + 0.5 * l2 * np.dot(w[:-1], w[:-1]), grad + np.append(reg, 0.0)


def _mean_xent(w, X, y) -> float:
    z = X @ w
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def probe_fit(features, labels, seed: int = 0, test_fraction: float = 0.3,
              l2: float = 1e-4) -> ProbeResult:
    """Fits on a random 70/30 split and reports held-out cross-entropy.

    Works on copies of the inputs, so the arrays (and any agent parameters
    they came from) are left untouched.
    """
    X = np.array(features, dtype=np.float64)
    y = np.array(labels, dtype=np.float64).reshape(-1)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) != len(y):
        raise ValueError("features and labels differ in length")
    if len(y) < MIN_SAMPLES:
        raise ValueError(f"probe needs at least {MIN_SAMPLES} samples, got {len(y)}")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ValueError("labels must be 0/1")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(y))
    n_test = int(round(test_fraction * len(y)))
    test, train = order[:n_test], order[n_test:]
    if y[train].min() == y[train].max():
        return ProbeResult(LN2, LN2, len(train), n_test, degenerate=True)
    mu = X[train].mean(axis=0)
    sd = X[train].std(axis=0)
    sd[sd == 0] = 1.0
    Xs = np.concatenate([(X - mu) / sd, np.ones((len(X), 1))], axis=1)
    res = minimize(_nll, np.zeros(Xs.shape[1]), args=(Xs[train], y[train], l2), jac=True,
                   method="L-BFGS-B", options={"maxiter": 500})
    return ProbeResult(_mean_xent(res.x, Xs[test], y[test]), _mean_xent(res.x, Xs[train], y[train]),
                       len(train), n_test)
