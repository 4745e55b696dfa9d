from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .tensor import Parameter, ShapeError


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros_like(cls, values: np.ndarray, **hyper) -> "AdamState":
        return cls(np.zeros_like(values), np.zeros_like(values), **hyper)


def adam_apply(state: AdamState, params: np.ndarray, grad: np.ndarray) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam step. Inputs are not modified."""
    if params.shape != grad.shape or params.shape != state.first_moment.shape:
        raise ShapeError("adam_apply", [params.shape, grad.shape, state.first_moment.shape])
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    m = b1 * state.first_moment + (1.0 - b1) * grad
    v = b2 * state.second_moment + (1.0 - b2) * (grad * grad)
    m_hat = m / (1.0 - b1 ** t)
    v_hat = v / (1.0 - b2 ** t)
    new = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new, AdamState(m, v, t, state.learning_rate, b1, b2, state.epsilon)


@dataclass
class Adam:
    """Adam over a fixed list of parameters; missing gradients count as zero."""

    params: list[Parameter]
    learning_rate: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    states: list[AdamState] = field(default_factory=list)

    def __post_init__(self):
        self.params = list(self.params)
        if not self.states:
            self.states = [
                AdamState.zeros_like(p.data, learning_rate=self.learning_rate, beta1=self.beta1,
                                     beta2=self.beta2, epsilon=self.epsilon)
                for p in self.params
            ]

    @property
    def step_count(self) -> int:
        return self.states[0].step_count if self.states else 0

    def step(self, grads: dict) -> None:
        for i, p in enumerate(self.params):
            g = grads.get(p)
            if g is None:
                g = np.zeros_like(p.data)
            p.data, self.states[i] = adam_apply(self.states[i], p.data, g)

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {}
        for p, s in zip(self.params, self.states):
            out[f"{p.name}/m"] = s.first_moment
            out[f"{p.name}/v"] = s.second_moment
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step_count: int) -> None:
        for i, p in enumerate(self.params):
            self.states[i] = AdamState(
                np.array(arrays[f"{p.name}/m"]), np.array(arrays[f"{p.name}/v"]), step_count,
                self.learning_rate, self.beta1, self.beta2, self.epsilon,
            )


def global_norm(grads: Iterable[np.ndarray]) -> float:
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))
