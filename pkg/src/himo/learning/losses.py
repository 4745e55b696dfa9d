from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, as_tensor, exp, log_softmax, softmax, square, sum_


@dataclass(frozen=True)
class LossWeights:
    alpha: float = 0.25
    beta: float = 0.5

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError(f"loss weights must be >= 0, got alpha={self.alpha}, beta={self.beta}")

    @property
    def is_baseline(self) -> bool:
        return self.alpha == 0 and self.beta == 0


def _mask_array(mask, shape) -> np.ndarray:
    if mask is None:
        return np.ones(shape)
    m = np.asarray(mask, dtype=np.float64)
    if m.shape != shape:
        raise ValueError(f"mask shape {m.shape} does not match {shape}")
    return m


def masked_mean(x: Tensor, mask=None) -> Tensor:
    """Mean of ``x`` over entries where ``mask`` is set; 0 when none are."""
    m = _mask_array(mask, x.shape)
    count = m.sum()
    if count == 0:
        return Tensor(0.0)
    if mask is None:
        return sum_(x) / count
    return sum_(x * m) / count


def value_loss(v_pred, U, mask=None) -> Tensor:
    """``0.5 * mean((v - U)^2)`` over masked steps; ``U`` is a constant."""
    v_pred = as_tensor(v_pred)
    U = np.asarray(U.data if isinstance(U, Tensor) else U, dtype=np.float64)
    if v_pred.shape != U.shape:
        raise ValueError(f"value_loss: prediction {v_pred.shape} vs target {U.shape}")
    return 0.5 * masked_mean(square(v_pred - U), mask)


def _stopped(phi) -> np.ndarray:
    return np.asarray(phi.data if isinstance(phi, Tensor) else phi, dtype=np.float64)


def model_loss_squared(phi, phi_hat, mask=None) -> Tensor:
    """Mean over valid steps of ``||phi - phi_hat||^2``; ``phi`` is held fixed."""
    phi = _stopped(phi)
    phi_hat = as_tensor(phi_hat)
    if phi.shape != phi_hat.shape:
        raise ValueError(f"model_loss: phi {phi.shape} vs phi_hat {phi_hat.shape}")
    per_step = sum_(square(phi_hat - phi), axis=-1)
    return masked_mean(per_step, mask)


def model_loss_xent(phi, phi_hat, mask=None) -> Tensor:
    """Mean over valid steps of ``H(softmax(phi), softmax(phi_hat))``."""
    phi = _stopped(phi)
    phi_hat = as_tensor(phi_hat)
    if phi.shape != phi_hat.shape:
        raise ValueError(f"model_loss: phi {phi.shape} vs phi_hat {phi_hat.shape}")
    if phi.shape[-1] < 2:
        raise ValueError("cross-entropy model loss needs d >= 2")
    p = softmax(phi, axis=-1).data
    per_step = -sum_(log_softmax(phi_hat, axis=-1) * p, axis=-1)
    return masked_mean(per_step, mask)


MODEL_LOSSES = {"squared": model_loss_squared, "xent": model_loss_xent}


def combined_loss(L_v, L_vplus, L_model, weights: LossWeights) -> Tensor:
    """``L_v + alpha * L_vplus + beta * L_model``.

    Terms with a zero weight are left out of the graph rather than scaled by
    zero, so the baseline setting reproduces ``L_v`` exactly.
    """
    total = as_tensor(L_v)
    if weights.alpha != 0 and L_vplus is not None:
        total = total + weights.alpha * as_tensor(L_vplus)
    if weights.beta != 0 and L_model is not None:
        total = total + weights.beta * as_tensor(L_model)
    return total


def policy_entropy(logp: Tensor, mask=None) -> Tensor:
    """Mean entropy of categorical distributions given log-probabilities."""
    ent = -sum_(exp(logp) * logp, axis=-1)
    return masked_mean(ent, mask)
