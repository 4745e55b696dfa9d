"""Sample complexity of joint vs factored tabular value estimates on the chain.

The joint estimator keeps a mean return per start pair ``(x, x')``. The
factored estimator learns ``x' -> y'`` and ``(x, y') -> z`` separately and
composes them. Unseen cells predict 0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..envs.chain import ChainInstance, chain_samples, chain_trajectory
from ..learning.targets import nstep_target


@dataclass
class TabularEstimate:
    values: np.ndarray    # (n, m) predicted start-state values
    cells_seen: int
    cells_total: int


def _cell_means(shape, index, values) -> tuple[np.ndarray, np.ndarray]:
    """Per-cell means and counts. Means are shifted by each cell's first
    value so a cell of identical returns averages to exactly that value."""
    flat = np.ravel_multi_index(index, shape)
    size = int(np.prod(shape))
    ref = np.zeros(size)
    # reversed assignment leaves the first occurrence in place
    ref[flat[::-1]] = values[::-1]
    tot = np.zeros(size)
    cnt = np.zeros(size)
    np.add.at(tot, flat, values - ref[flat])
    np.add.at(cnt, flat, 1.0)
    means = np.where(cnt > 0, ref + np.divide(tot, np.maximum(cnt, 1.0)), 0.0)
    return means.reshape(shape), cnt.reshape(shape)


def joint_estimate(inst: ChainInstance, samples: np.ndarray) -> TabularEstimate:
    x, xp = samples[:, 0].astype(int), samples[:, 1].astype(int)
    vals, cnt = _cell_means((inst.n, inst.m), (x, xp), samples[:, 3])
    return TabularEstimate(vals, int((cnt > 0).sum()), inst.joint_cells)


def factored_estimate(inst: ChainInstance, samples: np.ndarray) -> TabularEstimate:
    x, xp, yp = (samples[:, i].astype(int) for i in range(3))
    y_tot = np.zeros(inst.m)
    y_cnt = np.zeros(inst.m)
    np.add.at(y_tot, xp, yp)
    np.add.at(y_cnt, xp, 1.0)
    z_hat, z_cnt = _cell_means((inst.n, 2), (x, yp), samples[:, 3])
    # the y' map is deterministic; round the frequency to a label
    y_hat = np.where(y_cnt > 0, np.round(np.divide(y_tot, np.maximum(y_cnt, 1))), -1).astype(int)
    vals = np.zeros((inst.n, inst.m))
    known = y_hat >= 0
    vals[:, known] = z_hat[:, y_hat[known]]
    vals[:, known] *= (z_cnt[:, y_hat[known]] > 0)
    seen = int((y_cnt > 0).sum() + (z_cnt > 0).sum())
    return TabularEstimate(vals, seen, inst.factored_cells)


def estimate_mse(inst: ChainInstance, est: TabularEstimate) -> float:
    return float(np.mean((est.values - inst.true_values()) ** 2))


def designed_samples(inst: ChainInstance) -> np.ndarray:
    """A short sample list that covers every factored cell.

    Each sample covers one ``x'`` and one ``(x, y')`` cell. Cycling through
    the ``x'`` values of each label covers everything in ``max(m, 2n)``
    samples when both labels occur.
    """
    by_label = [np.nonzero(inst.y_map == y)[0] for y in (0, 1)]
    pairs = []
    for y, xs in enumerate(by_label):
        if xs.size == 0:
            continue
        for x in range(inst.n):
            pairs.append((x, int(xs[x % xs.size])))
    used = {xp for _, xp in pairs}
    pairs += [(0, xp) for xp in range(inst.m) if xp not in used]
    rows = [(x, xp, int(inst.y_of(xp)), inst.z_of(x, int(inst.y_of(xp)))) for x, xp in pairs]
    return np.array(rows, dtype=np.float64)


def samples_to_zero_error(inst: ChainInstance, estimator, rng, max_samples: int = 100_000,
                          tol: float = 0.0) -> int:
    """Number of uniformly drawn samples until the estimate's MSE is <= tol."""
    samples = chain_samples(inst, rng, max_samples)
    lo, hi = 1, max_samples
    if estimate_mse(inst, estimator(inst, samples)) > tol:
        return max_samples + 1
    # coverage only grows with more samples, so the error hits tol monotonically in the noiseless case
    while lo < hi:
        mid = (lo + hi) // 2
        if estimate_mse(inst, estimator(inst, samples[:mid])) <= tol:
            hi = mid
        else:
            lo = mid + 1
    return lo


@dataclass
class CountingRow:
    budget: int
    joint_mse: float
    factored_mse: float
    joint_coverage: float
    factored_coverage: float


def counting_experiment(inst: ChainInstance, budgets, trials: int = 20, seed: int = 0) -> list[CountingRow]:
    """Mean MSE and cell coverage against the number of uniform samples."""
    rng = np.random.default_rng(seed)
    rows = []
    draws = [chain_samples(inst, rng, max(budgets)) for _ in range(trials)]
    for n in budgets:
        jm = fm = jc = fc = 0.0
        for s in draws:
            j = joint_estimate(inst, s[:n])
            f = factored_estimate(inst, s[:n])
            jm += estimate_mse(inst, j)
            fm += estimate_mse(inst, f)
            jc += j.cells_seen / j.cells_total
            fc += f.cells_seen / f.cells_total
        rows.append(CountingRow(int(n), jm / trials, fm / trials, jc / trials, fc / trials))
    return rows


def nstep_targets_from_start(inst: ChainInstance, x: int, x_prime: int, gamma: float = 1.0) -> list[float]:
    """n-step targets for the start state with perfect downstream values."""
    _, s1, rewards = chain_trajectory(inst, x, x_prime)
    values = np.array([0.0, inst.z_of(*s1), 0.0])   # v(s0) unused, v(s1) exact, terminal 0
    discounts = np.array([1.0, 0.0])
    return [float(nstep_target(rewards, discounts, values, n, gamma)[0]) for n in (1, 2)]


def bootstrap_contrast(inst: ChainInstance, trials: int = 50, tol: float = 0.0,
                       seed: int = 0) -> dict:
    """Median samples to reach ``tol`` for the return-only (joint) learner
    and the learner with hindsight features (factored)."""
    rng = np.random.default_rng(seed)
    joint = [samples_to_zero_error(inst, joint_estimate, rng, tol=tol) for _ in range(trials)]
    fact = [samples_to_zero_error(inst, factored_estimate, rng, tol=tol) for _ in range(trials)]
    return {"joint_median": float(np.median(joint)), "factored_median": float(np.median(fact)),
            "joint": joint, "factored": fact}
