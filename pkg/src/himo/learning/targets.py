"""Value targets. All inputs are plain arrays: targets never carry gradients."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TargetConfig:
    gamma: float = 0.99
    n: int = 20
    lam: float = 0.7
    rescale_epsilon: float = 1e-3
    use_rescale: bool = True
    target_update_interval: int = 400

    def errors(self) -> list[str]:
        errs = []
        if not 0 < self.gamma <= 1:
            errs.append("gamma must be in (0, 1]")
        if self.n < 1:
            errs.append("n must be >= 1")
        if not 0 <= self.lam <= 1:
            errs.append("lam must be in [0, 1]")
        if self.rescale_epsilon < 0:
            errs.append("rescale_epsilon must be >= 0")
        if self.target_update_interval < 1:
            errs.append("target_update_interval must be >= 1")
        return errs


def value_rescale_g(x, eps: float = 1e-3):
    """``g(x) = sign(x) (sqrt(|x| + 1) - 1) + eps x``."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * (np.sqrt(np.abs(x) + 1.0) - 1.0) + eps * x


def value_rescale_g_inverse(y, eps: float = 1e-3):
    """Closed-form inverse of :func:`value_rescale_g`."""
    y = np.asarray(y, dtype=np.float64)
    a = np.abs(y)
    if eps == 0:
        return np.sign(y) * ((a + 1.0) ** 2 - 1.0)
    c = 1.0 + eps + a
    # positive root of eps*u^2 + u - c = 0, with u = sqrt(|x| + 1), rationalised
    u = 2.0 * c / (1.0 + np.sqrt(1.0 + 4.0 * eps * c))
    return np.sign(y) * (u * u - 1.0)


def _as_2d(x):
    x = np.asarray(x, dtype=np.float64)
    return (x[:, None], True) if x.ndim == 1 else (x, False)


def nstep_target(rewards, discounts, bootstrap_values, n: int, gamma: float) -> np.ndarray:
    """n-step returns truncated at the unroll end.

    ``rewards`` and ``discounts`` have ``L`` rows, ``bootstrap_values`` has
    ``L + 1`` (the value of every observation, including the one after the
    last transition). ``discounts`` are continuation flags: 0 cuts the
    return at a terminal transition.
    """
    R, squeeze = _as_2d(rewards)
    C, _ = _as_2d(discounts)
    V, _ = _as_2d(bootstrap_values)
    L = R.shape[0]
    if V.shape[0] != L + 1:
        raise ValueError(f"bootstrap_values needs {L + 1} rows, got {V.shape[0]}")
    U = np.empty_like(R)
    for t in range(L):
        steps = min(n, L - t)
        acc = np.zeros(R.shape[1])
        scale = np.ones(R.shape[1])
        for m in range(steps):
            acc = acc + scale * R[t + m]
            scale = scale * gamma * C[t + m]
        U[t] = acc + scale * V[t + steps]
    return U[:, 0] if squeeze else U


def q_lambda_target(rewards, discounts, q_target, q_online, lam: float, n_max: int, gamma: float,
                    use_rescale: bool = True, eps: float = 1e-3) -> np.ndarray:
    """Exponentially averaged double-Q n-step targets in rescaled space.

    ``q_target``/``q_online`` are (L+1, B, A) action values from the target
    snapshot and the online network. The bootstrap action at each step is the
    online argmax, evaluated with the target values. Each n-step return is
    ``g(sum gamma^m R + gamma^n g^-1(q_target(S_{t+n}, A*)))``; returns for
    n = 1..N are mixed with weights ``(1-lam) lam^(n-1)``, and the leftover
    mass ``lam^(N-1)`` goes to the longest return available in the unroll.
    """
    R, squeeze = _as_2d(rewards)
    C, _ = _as_2d(discounts)
    qt = np.asarray(q_target, dtype=np.float64)
    qo = np.asarray(q_online, dtype=np.float64)
    if squeeze:
        qt, qo = qt[:, None, :], qo[:, None, :]
    L, B = R.shape
    if qt.shape[:2] != (L + 1, B) or qo.shape != qt.shape:
        raise ValueError(f"q arrays need shape ({L + 1}, {B}, A), got {qt.shape} / {qo.shape}")
    a_star = np.argmax(qo, axis=-1)
    boot = np.take_along_axis(qt, a_star[..., None], axis=-1)[..., 0]
    if use_rescale:
        boot = value_rescale_g_inverse(boot, eps)

    def g(x):
        return value_rescale_g(x, eps) if use_rescale else x

    U = np.empty((L, B))
    for t in range(L):
        N = min(n_max, L - t)
        acc = np.zeros(B)
        scale = np.ones(B)
        total = np.zeros(B)
        for n in range(1, N + 1):
            acc = acc + scale * R[t + n - 1]
            scale = scale * gamma * C[t + n - 1]
            ret = g(acc + scale * boot[t + n])
            w = lam ** (n - 1) if n == N else (1.0 - lam) * lam ** (n - 1)
            total = total + w * ret
        U[t] = total
    return U[:, 0] if squeeze else U


def monte_carlo_return(rewards, discounts, gamma: float, bootstrap: float = 0.0) -> np.ndarray:
    """Discounted return to the end of a sequence with a final bootstrap."""
    R = np.asarray(rewards, dtype=np.float64)
    C = np.asarray(discounts, dtype=np.float64)
    out = np.empty_like(R)
    acc = bootstrap
    for t in range(len(R) - 1, -1, -1):
        acc = R[t] + gamma * C[t] * acc
        out[t] = acc
    return out
