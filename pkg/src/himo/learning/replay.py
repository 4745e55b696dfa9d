from __future__ import annotations

import threading

import numpy as np

from ..nets import UnrollBatch


class ReplayBuffer:
    """Ring buffer of whole fixed-length sequences with uniform sampling.

    Items are written and overwritten as complete sequences, so a sample can
    never straddle the write head. All methods take an internal lock.
    """

    def __init__(self, capacity: int, seed: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._items: list[dict] = []
        self._head = 0
        self._lock = threading.Lock()
        self.rng = np.random.default_rng(seed)

    def __len__(self) -> int:
        with self._lock:
            return len(self._items)

    def add(self, sequence: dict) -> None:
        """``sequence`` holds one stream: obs (L+1, ...), actions/rewards/
        discounts (L,), episode_start (L+1,), h0 (H,)."""
        item = {k: np.array(v) for k, v in sequence.items()}
        with self._lock:
            if len(self._items) < self.capacity:
                self._items.append(item)
            else:
                self._items[self._head] = item
            self._head = (self._head + 1) % self.capacity

    def add_unroll(self, unroll: UnrollBatch, h0: np.ndarray) -> None:
        for b in range(unroll.batch_size):
            self.add({
                "obs": unroll.obs[:, b], "actions": unroll.actions[:, b],
                "rewards": unroll.rewards[:, b], "discounts": unroll.discounts[:, b],
                "episode_start": unroll.episode_start[:, b], "h0": h0[b],
            })

    def sample(self, batch_size: int) -> tuple[UnrollBatch, np.ndarray] | None:
        with self._lock:
            size = len(self._items)
            if size == 0:
                return None
            if size >= batch_size:
                idx = self.rng.choice(size, size=batch_size, replace=False)
            else:
                idx = self.rng.integers(0, size, size=batch_size)
            picked = [self._items[i] for i in idx]

        def col(key):
            return np.stack([p[key] for p in picked], axis=1)

        batch = UnrollBatch(
            obs=col("obs"), actions=col("actions").astype(np.int64), rewards=col("rewards"),
            discounts=col("discounts"), episode_start=col("episode_start").astype(bool),
        )
        h0 = np.stack([p["h0"] for p in picked], axis=0)
        return batch, h0

    def state_arrays(self) -> dict[str, np.ndarray]:
        with self._lock:
            out = {}
            for i, item in enumerate(self._items):
                for k, v in item.items():
                    out[f"replay/{i}/{k}"] = np.asarray(v, dtype=np.float64)
            out["replay/head"] = np.array([self._head], dtype=np.float64)
            return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        items: dict[int, dict] = {}
        for key, v in arrays.items():
            parts = key.split("/")
            if parts[0] != "replay" or len(parts) != 3:
                continue
            items.setdefault(int(parts[1]), {})[parts[2]] = np.array(v)
        with self._lock:
            self._items = [items[i] for i in sorted(items)]
            self._head = int(arrays["replay/head"][0])
