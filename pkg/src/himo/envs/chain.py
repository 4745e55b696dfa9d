"""Tabular chain ``(X, X') -> (X, Y') -> Z``.

The start pair is drawn uniformly; everything after is deterministic.
``Y' = y_map[X']`` is binary and ``Z = z_map[X, Y']`` is the return.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class ChainInstance:
    n: int
    m: int
    y_map: np.ndarray   # (m,) in {0, 1}
    z_map: np.ndarray   # (n, 2)
    seed: int
    noise_std: float = 0.0

    @property
    def noiseless(self) -> bool:
        return self.noise_std == 0

    @classmethod
    def sample(cls, seed: int, n: int = 10, m: int = 10, noise_std: float = 0.0) -> "ChainInstance":
        """Random instance with unit normal ``z_map`` cells. Observed returns
        are ``z_map[x, y'] + noise_std * N(0, 1)``; ``noise_std = 0`` is the
        noiseless mode used for exact coverage accounting."""
        if n < 1 or m < 1:
            raise ValueError("n and m must be >= 1")
        rng = np.random.default_rng(seed)
        y_map = rng.integers(0, 2, size=m)
        # both Y' values should occur so the factorisation is not degenerate
        if m >= 2 and y_map.min() == y_map.max():
            y_map[rng.integers(0, m)] ^= 1
        z_map = rng.standard_normal((n, 2))
        for a in (y_map, z_map):
            a.setflags(write=False)
        return cls(n=n, m=m, y_map=y_map, z_map=z_map, seed=seed, noise_std=noise_std)

    def y_of(self, x_prime):
        # reads only x', so Y' is independent of X given X'
        return self.y_map[x_prime]

    def z_of(self, x, y_prime):
        return self.z_map[x, y_prime]

    def true_values(self) -> np.ndarray:
        """(n, m) table of start-state values."""
        return self.z_map[:, self.y_map]

    @property
    def joint_cells(self) -> int:
        return self.n * self.m

    @property
    def factored_cells(self) -> int:
        return self.m + 2 * self.n


def chain_sample(instance: ChainInstance, rng) -> tuple[int, int, int, float]:
    x = int(rng.integers(0, instance.n))
    xp = int(rng.integers(0, instance.m))
    yp = int(instance.y_of(xp))
    z = instance.z_of(x, yp)
    if instance.noise_std:
        z = z + instance.noise_std * rng.standard_normal()
    return x, xp, yp, float(z)


def chain_samples(instance: ChainInstance, rng, count: int) -> np.ndarray:
    """(count, 4) rows of ``x, x', y', z``."""
    x = rng.integers(0, instance.n, size=count)
    xp = rng.integers(0, instance.m, size=count)
    yp = instance.y_of(xp)
    z = instance.z_of(x, yp)
    if instance.noise_std:
        z = z + instance.noise_std * rng.standard_normal(count)
    return np.stack([x, xp, yp, z], axis=1).astype(np.float64)


def chain_trajectory(instance: ChainInstance, x: int, x_prime: int):
    """Deterministic 2-step trajectory ``(s0, s1, rewards)``; the return is
    paid on the second transition, so ``Z`` is the value of both states."""
    yp = int(instance.y_of(x_prime))
    rewards = np.array([0.0, instance.z_of(x, yp)])
    return (x, x_prime), (x, yp), rewards
