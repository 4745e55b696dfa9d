"""One-step MRP where the useful part of the next state is a deterministic
but hard-to-learn function of the start state.

``s ~ N(0, I_D)`` splits as ``(s1, s2)`` with sizes ``(D1, D2)``. The next
state is ``s1' = MLP(s) + noise`` (a distractor) and
``s2' = heaviside(W s2 + b)``. The reward, and the true value of ``s``, is
``sum(s1) * sum(s2') / sqrt(D)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MrpSettings:
    D: int = 32
    D2: int = 4
    hidden: int = 16
    d: int = 3
    n_instances: int = 4
    repeats: int = 2
    noise_std: float = 1.0


def mrp_default_config() -> MrpSettings:
    return MrpSettings()


@dataclass(frozen=True, eq=False)
class MrpInstance:
    D: int
    D2: int
    W: np.ndarray
    b: np.ndarray
    mlp_w0: np.ndarray
    mlp_b0: np.ndarray
    mlp_w1: np.ndarray
    mlp_b1: np.ndarray
    noise_std: float
    seed: int

    @property
    def D1(self) -> int:
        return self.D - self.D2

    @classmethod
    def sample(cls, seed: int, D: int = 32, D2: int = 4, noise_std: float = 1.0,
               mlp_hidden: int = 16) -> "MrpInstance":
        if not 0 < D2 < D:
            raise ValueError(f"need 0 < D2 < D, got D={D}, D2={D2}")
        rng = np.random.default_rng(seed)
        D1 = D - D2
        inst = cls(
            D=D, D2=D2,
            W=rng.standard_normal((D2, D2)),
            b=rng.standard_normal(D2),
            mlp_w0=rng.standard_normal((D, mlp_hidden)) / np.sqrt(D),
            mlp_b0=rng.standard_normal(mlp_hidden) * 0.1,
            mlp_w1=rng.standard_normal((mlp_hidden, D1)) / np.sqrt(mlp_hidden),
            mlp_b1=rng.standard_normal(D1) * 0.1,
            noise_std=noise_std,
            seed=seed,
        )
        for a in (inst.W, inst.b, inst.mlp_w0, inst.mlp_b0, inst.mlp_w1, inst.mlp_b1):
            a.setflags(write=False)
        return inst

    def split(self, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return s[..., :self.D1], s[..., self.D1:]

    def useful_next(self, s2: np.ndarray) -> np.ndarray:
        # heaviside with the value 1 at 0
        return (s2 @ self.W.T + self.b >= 0).astype(np.float64)

    def distractor(self, s: np.ndarray) -> np.ndarray:
        hid = np.maximum(s @ self.mlp_w0 + self.mlp_b0, 0.0)
        return hid @ self.mlp_w1 + self.mlp_b1

    def reward(self, s: np.ndarray, s2_next: np.ndarray) -> np.ndarray:
        s1, _ = self.split(s)
        return s1.sum(axis=-1) * s2_next.sum(axis=-1) / np.sqrt(self.D)

    def true_value(self, s: np.ndarray) -> np.ndarray:
        return self.reward(s, self.useful_next(self.split(s)[1]))

    def transition(self, s: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
        s = np.asarray(s, dtype=np.float64)
        _, s2 = self.split(s)
        s2n = self.useful_next(s2)
        noise = rng.standard_normal(s.shape[:-1] + (self.D1,)) * self.noise_std
        s1n = self.distractor(s) + noise
        s_next = np.concatenate([s1n, s2n], axis=-1)
        return s_next, self.reward(s, s2n)

    def sample_batch(self, rng, n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``n`` episodes: ``(s (n, D), s' (n, D), r (n,))``."""
        s = rng.standard_normal((n, self.D))
        s_next, r = self.transition(s, rng)
        return s, s_next, r


def mrp_sample_episode(instance: MrpInstance, rng) -> tuple[np.ndarray, np.ndarray, float]:
    s, s_next, r = instance.sample_batch(rng, 1)
    return s[0], s_next[0], float(r[0])
