"""HiMo actor-critic and recurrent double-Q learners, plus rollout collection."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..autodiff import Adam, Tape, Tensor, backward, global_norm, log_softmax, stop_gradient, sum_
from ..nets import (
    HimoParams,
    UnrollBatch,
    forward_unroll,
    initial_state,
    phi_hat_forward,
    policy_logits,
    state_step,
    value_head,
)
from .losses import (
    MODEL_LOSSES,
    LossWeights,
    combined_loss,
    masked_mean,
    policy_entropy,
    value_loss,
)
from .replay import ReplayBuffer
from .targets import TargetConfig, nstep_target, q_lambda_target


@dataclass
class LossReport:
    total: float
    L_v: float
    L_vplus: float
    L_model: float
    grad_norm: float
    extras: dict = field(default_factory=dict)


def _one_hot(actions: np.ndarray, n: int) -> np.ndarray:
    return np.eye(n)[np.asarray(actions, dtype=np.int64)]


def _gather(q: Tensor, actions: np.ndarray) -> Tensor:
    return sum_(q * _one_hot(actions, q.shape[-1]), axis=-1)


def _hindsight_losses(out, U, weights: LossWeights, model_loss: str):
    """``(L_vplus, L_model)`` over valid hindsight rows, or ``(None, None)``
    when the weights switch the branches off or no row fits the unroll."""
    rows = out.hindsight_rows
    if weights.is_baseline or rows == 0:
        return None, None
    mask = out.hindsight_mask[:rows]
    L_vplus = value_loss(out.v_plus, U[:rows], mask) if weights.alpha != 0 else None
    L_model = None
    if weights.beta != 0:
        L_model = MODEL_LOSSES[model_loss](out.phi, out.phi_hat[:rows], mask)
    return L_vplus, L_model


def _f(x) -> float:
    return 0.0 if x is None else float(x.data)


# ---------------------------------------------------------------- actor-critic


def actor_critic_losses(params: HimoParams, unroll: UnrollBatch, h0, weights: LossWeights,
                        targets: TargetConfig, k: int, model_loss: str = "xent",
                        entropy_coef: float = 0.01):
    """Builds the actor-critic objective on the active tape.

    The critic target is the n-step return bootstrapped on ``v_m``; the
    policy gradient uses the advantage ``U - v_m`` as a constant.
    Returns ``(loss, parts, out)``.
    """
    out = forward_unroll(params, unroll, h0, k)
    L = unroll.length
    v = out.v_m
    U = nstep_target(unroll.rewards, unroll.discounts, v.data, min(targets.n, L), targets.gamma)
    L_v = value_loss(v[:L], U)
    L_vplus, L_model = _hindsight_losses(out, U, weights, model_loss)
    critic = combined_loss(L_v, L_vplus, L_model, weights)

    logp = log_softmax(out.policy_logits[:L], axis=-1)
    adv = U - v.data[:L]
    logp_a = _gather(logp, unroll.actions)
    pg = -masked_mean(logp_a * adv)
    total = critic + pg
    ent = None
    if entropy_coef != 0:
        ent = policy_entropy(logp)
        total = total - entropy_coef * ent
    parts = {"L_v": L_v, "L_vplus": L_vplus, "L_model": L_model, "pg": pg, "entropy": ent}
    return total, parts, out


def actor_critic_update(params: HimoParams, opt: Adam, unroll: UnrollBatch, h0,
                        weights: LossWeights, targets: TargetConfig, k: int,
                        model_loss: str = "xent", entropy_coef: float = 0.01,
                        max_grad_norm: float | None = None) -> LossReport:
    with Tape():
        total, parts, _ = actor_critic_losses(params, unroll, h0, weights, targets, k,
                                              model_loss, entropy_coef)
    grads = backward(total, opt.params)
    norm = global_norm(grads.values())
    if max_grad_norm is not None and norm > max_grad_norm:
        scale = max_grad_norm / norm
        grads = {p: g * scale for p, g in grads.items()}
    opt.step(grads)
    return LossReport(float(total.data), _f(parts["L_v"]), _f(parts["L_vplus"]),
                      _f(parts["L_model"]), norm,
                      {"pg": _f(parts["pg"]), "entropy": _f(parts["entropy"])})


# ---------------------------------------------------------------- Q-learning


def q_learning_losses(params: HimoParams, target_params: HimoParams, unroll: UnrollBatch, h0,
                      weights: LossWeights, targets: TargetConfig, k: int,
                      model_loss: str = "squared"):
    out = forward_unroll(params, unroll, h0, k)
    target_out = forward_unroll(target_params, unroll, h0, k)
    L = unroll.length
    U = q_lambda_target(unroll.rewards, unroll.discounts, target_out.v_m.data, out.v_m.data,
                        targets.lam, targets.n, targets.gamma, targets.use_rescale,
                        targets.rescale_epsilon)
    q_sel = _gather(out.v_m[:L], unroll.actions)
    L_v = value_loss(q_sel, U)
    rows = out.hindsight_rows
    L_vplus = L_model = None
    if not weights.is_baseline and rows > 0:
        mask = out.hindsight_mask[:rows]
        if weights.alpha != 0:
            L_vplus = value_loss(_gather(out.v_plus, unroll.actions[:rows]), U[:rows], mask)
        if weights.beta != 0:
            L_model = MODEL_LOSSES[model_loss](out.phi, out.phi_hat[:rows], mask)
    total = combined_loss(L_v, L_vplus, L_model, weights)
    return total, {"L_v": L_v, "L_vplus": L_vplus, "L_model": L_model}, out


class QLearner:
    """Online/target network pair trained from sequence replay."""

    def __init__(self, params: HimoParams, weights: LossWeights, targets: TargetConfig, k: int,
                 learning_rate: float = 5e-4, model_loss: str = "squared"):
        self.params = params
        self.target_params = params.copy()
        self.weights = weights
        self.targets = targets
        self.k = k
        self.model_loss = model_loss
        self.opt = Adam(params.parameters(), learning_rate=learning_rate)
        self.learner_steps = 0

    def update(self, replay: ReplayBuffer, batch_size: int) -> LossReport | None:
        sample = replay.sample(batch_size)
        if sample is None:
            return None
        unroll, h0 = sample
        return self.update_on(unroll, h0)

    def update_on(self, unroll: UnrollBatch, h0) -> LossReport:
        with Tape():
            total, parts, _ = q_learning_losses(self.params, self.target_params, unroll, h0,
                                                self.weights, self.targets, self.k,
                                                self.model_loss)
        grads = backward(total, self.opt.params)
        norm = global_norm(grads.values())
        self.opt.step(grads)
        self.learner_steps += 1
        if self.learner_steps % self.targets.target_update_interval == 0:
            self.target_params.assign(self.params)
        return LossReport(float(total.data), _f(parts["L_v"]), _f(parts["L_vplus"]),
                          _f(parts["L_model"]), norm)


# ---------------------------------------------------------------- acting


def act_step(params: HimoParams, h_prev, obs, episode_start):
    """One recurrent step without recording: ``(h, head_output)`` where the
    head output is policy logits when the net has a policy, else ``q_m``."""
    h = state_step(params["eta3"], h_prev, obs, episode_start)
    feat = stop_gradient(phi_hat_forward(params["eta2"], h))
    if params.config.policy:
        head = policy_logits(params["pi"], h, feat)
    else:
        head = value_head(params["eta1"], h, feat)
    return h.data, head.data


def sample_actions(logits: np.ndarray, rng) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    p = np.exp(z)
    p /= p.sum(axis=-1, keepdims=True)
    u = rng.random((p.shape[0], 1))
    return np.minimum((p.cumsum(axis=-1) < u).sum(axis=-1), p.shape[-1] - 1)


def epsilon_greedy(q: np.ndarray, epsilon: float, rng) -> np.ndarray:
    greedy = q.argmax(axis=-1)
    explore = rng.random(q.shape[0]) < epsilon
    random = rng.integers(0, q.shape[-1], size=q.shape[0])
    return np.where(explore, random, greedy)


@dataclass(frozen=True)
class EpsilonSchedule:
    start: float = 1.0
    end: float = 0.05
    steps: int = 20000

    def __call__(self, env_steps: int) -> float:
        frac = min(max(env_steps, 0) / max(self.steps, 1), 1.0)
        if frac >= 1.0:
            return self.end
        return self.start + frac * (self.end - self.start)


class RolloutCollector:
    """Steps a batched environment with the current parameters and cuts the
    stream into fixed-length unrolls that overlap by one observation.

    ``info_keys`` names env attributes (per-stream arrays) to snapshot next
    to every observation; they land in ``last_info`` as (L+1, B) arrays.
    """

    def __init__(self, env, params: HimoParams, unroll_length: int, seed: int,
                 info_keys: tuple = ()):
        self.env = env
        self.info_keys = tuple(info_keys)
        self.last_info: dict[str, np.ndarray] = {}
        self.params = params
        self.L = unroll_length
        self.rng = np.random.default_rng(seed)
        self.obs = env.reset().reshape(env.B, -1)
        self.start = np.ones(env.B, dtype=bool)
        self.h = initial_state(params.config, env.B)
        self.env_steps = 0
        self.running_return = np.zeros(env.B)
        self.finished_returns: list[float] = []

    def collect(self, epsilon: float | None = None) -> tuple[UnrollBatch, np.ndarray]:
        B, L = self.env.B, self.L
        obs = np.zeros((L + 1,) + self.obs.shape)
        starts = np.zeros((L + 1, B), dtype=bool)
        actions = np.zeros((L, B), dtype=np.int64)
        rewards = np.zeros((L, B))
        discounts = np.zeros((L, B))
        h0 = self.h.copy()
        info = {key: [np.array(getattr(self.env, key))] for key in self.info_keys}
        for t in range(L):
            obs[t], starts[t] = self.obs, self.start
            self.h, head = act_step(self.params, self.h, self.obs, self.start)
            if self.params.config.policy:
                a = sample_actions(head, self.rng)
            else:
                a = epsilon_greedy(head, 0.0 if epsilon is None else epsilon, self.rng)
            nxt, r, done, start = self.env.step(a)
            for key in self.info_keys:
                info[key].append(np.array(getattr(self.env, key)))
            actions[t], rewards[t], discounts[t] = a, r, 1.0 - done
            self.running_return += r
            for b in np.nonzero(done)[0]:
                self.finished_returns.append(float(self.running_return[b]))
                self.running_return[b] = 0.0
            self.obs, self.start = nxt.reshape(B, -1), start
        obs[L], starts[L] = self.obs, self.start
        self.env_steps += L * B
        self.last_info = {key: np.stack(v) for key, v in info.items()}
        # the next unroll starts at obs[L]; its h0 is the state before it
        return UnrollBatch(obs, actions, rewards, discounts, starts), h0

    def pop_returns(self) -> list[float]:
        out, self.finished_returns = self.finished_returns, []
        return out

    def state_arrays(self, prefix: str = "collector") -> dict[str, np.ndarray]:
        return {
            f"{prefix}/obs": self.obs, f"{prefix}/start": self.start.astype(np.float64),
            f"{prefix}/h": self.h, f"{prefix}/running_return": self.running_return,
            f"{prefix}/env_steps": np.array([self.env_steps], dtype=np.float64),
        }

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str = "collector") -> None:
        self.obs = np.array(arrays[f"{prefix}/obs"])
        self.start = np.asarray(arrays[f"{prefix}/start"]).astype(bool)
        self.h = np.array(arrays[f"{prefix}/h"])
        self.running_return = np.array(arrays[f"{prefix}/running_return"])
        self.env_steps = int(arrays[f"{prefix}/env_steps"][0])
