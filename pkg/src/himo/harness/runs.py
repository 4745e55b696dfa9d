"""Per-experiment training runs driven by :mod:`himo.harness.runner`.

A run owns everything that evolves during training (parameters, optimiser,
environments, generators). ``state_arrays``/``load_state_arrays`` together
with ``rngs`` capture that state exactly, which is what makes a resumed run
reproduce an uninterrupted one bit for bit.
"""
from __future__ import annotations

import numpy as np

from ..analysis.probe import probe_fit
from ..analysis.value_error import MrpComparison, MrpTrainConfig
from ..autodiff import Adam
from ..envs.mrp import MrpInstance
from ..envs.portal import GOAL_ROOM, N_ACTIONS, PORTAL_ROOM, PortalBatch
from ..learning.agents import EpsilonSchedule, QLearner, RolloutCollector, actor_critic_update
from ..learning.replay import ReplayBuffer
from ..nets import forward_unroll, init_params
from .config import ExperimentConfig

NAN = float("nan")


def _mean(xs) -> float:
    return float(np.mean(xs)) if len(xs) else NAN


class TrainingRun:
    extra_columns: tuple = ()

    def rngs(self) -> dict[str, np.random.Generator]:
        raise NotImplementedError

    def train_step(self) -> dict:
        raise NotImplementedError

    def log_metrics(self, step: int) -> dict:
        return {}

    def state_arrays(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def load_state_arrays(self, arrays: dict[str, np.ndarray], step: int) -> None:
        raise NotImplementedError

    def report(self) -> dict:
        return {}


# ---------------------------------------------------------------- portal


class _ProbeMixin:
    """Room-identity probes on phi (hindsight) and phi_hat (model).

    Features come from a separate probe environment, so probing never
    changes the training stream. Rows are steps ``t`` in the portal room
    whose window ends in a goal room; the label is that room's colour.
    """

    cfg: ExperimentConfig

    def _init_probe(self, seed: int):
        self.probe_env = PortalBatch(self.cfg.batch_size, seed + 50_000, self.cfg.time_limit)
        self.probe_collector = RolloutCollector(self.probe_env, self.params,
                                                self.cfg.unroll_length, seed + 60_000,
                                                info_keys=("phase", "room"))

    def _probe_epsilon(self):
        return None

    def probe_features(self, max_unrolls: int = 200):
        """``(phi, phi_hat, labels)`` with at least ``probe_samples`` rows, or None."""
        k = self.cfg.k
        phi_rows, hat_rows, labels = [], [], []
        count = 0
        for _ in range(max_unrolls):
            if count >= self.cfg.probe_samples:
                break
            unroll, h0 = self.probe_collector.collect(self._probe_epsilon())
            phases = self.probe_collector.last_info["phase"]
            rooms = self.probe_collector.last_info["room"]
            out = forward_unroll(self.params, unroll, h0, k)
            rows = out.hindsight_rows
            if rows == 0:
                continue
            valid = out.hindsight_mask[:rows] & (phases[:rows] == PORTAL_ROOM) & \
                (phases[k:k + rows] == GOAL_ROOM)
            t_idx, b_idx = np.nonzero(valid)
            phi_rows.append(out.phi.data[t_idx, b_idx])
            hat_rows.append(out.phi_hat.data[t_idx, b_idx])
            labels.append(rooms[t_idx + k, b_idx])
            count += len(t_idx)
        if count == 0:
            return None
        return np.concatenate(phi_rows), np.concatenate(hat_rows), np.concatenate(labels)

    def run_probe(self) -> dict:
        feats = self.probe_features()
        if feats is None or len(feats[2]) < 200:
            return {"probe_phi": NAN, "probe_phi_hat": NAN}
        phi, hat, y = feats
        return {"probe_phi": probe_fit(phi, y, seed=0).cross_entropy,
                "probe_phi_hat": probe_fit(hat, y, seed=0).cross_entropy}

    def _probe_state(self) -> dict:
        out = self.probe_env.state_arrays("probe_env")
        out.update(self.probe_collector.state_arrays("probe_collector"))
        return out

    def _load_probe_state(self, arrays):
        self.probe_env.load_state_arrays(arrays, "probe_env")
        self.probe_collector.load_state_arrays(arrays, "probe_collector")


class PortalActorCritic(TrainingRun, _ProbeMixin):
    extra_columns = ("env_steps", "pg_loss", "entropy", "probe_phi", "probe_phi_hat")

    def __init__(self, cfg: ExperimentConfig, arm: str, seed: int):
        self.cfg = cfg
        self.weights = cfg.loss_weights(arm)
        self.targets = cfg.target_config()
        self.env = PortalBatch(cfg.batch_size, seed, cfg.time_limit)
        net = cfg.net_config(self.env.obs_dim, N_ACTIONS)
        # shared seed: both arms start from identical weights and see the same env stream
        self.params = init_params(net, seed)
        self.opt = Adam(self.params.parameters(), learning_rate=cfg.learning_rate)
        self.collector = RolloutCollector(self.env, self.params, cfg.unroll_length, seed + 10_000)
        self._init_probe(seed)

    def rngs(self):
        return {"env": self.env.rng, "collector": self.collector.rng,
                "probe_env": self.probe_env.rng, "probe_collector": self.probe_collector.rng}

    def train_step(self) -> dict:
        unroll, h0 = self.collector.collect()
        rep = actor_critic_update(self.params, self.opt, unroll, h0, self.weights, self.targets,
                                  self.cfg.k, self.cfg.model_loss, self.cfg.entropy_coef,
                                  self.cfg.max_grad_norm or None)
        return {"L_v": rep.L_v, "L_vplus": rep.L_vplus, "L_model": rep.L_model,
                "grad_norm": rep.grad_norm, "pg_loss": rep.extras["pg"],
                "entropy": rep.extras["entropy"]}

    def log_metrics(self, step: int) -> dict:
        out = {"episode_return_mean": _mean(self.collector.pop_returns()),
               "env_steps": self.collector.env_steps}
        if self.cfg.probe_interval and step % self.cfg.probe_interval == 0:
            out.update(self.run_probe())
        return out

    def state_arrays(self):
        out = dict(self.params.named_arrays())
        out.update({f"adam/{k}": v for k, v in self.opt.state_arrays().items()})
        out.update(self.env.state_arrays())
        out.update(self.collector.state_arrays())
        out.update(self._probe_state())
        return out

    def load_state_arrays(self, arrays, step):
        self.params.load_arrays(arrays)
        self.opt.load_state_arrays({k[5:]: v for k, v in arrays.items() if k.startswith("adam/")},
                                   step)
        self.env.load_state_arrays(arrays)
        self.collector.load_state_arrays(arrays)
        self._load_probe_state(arrays)


class PortalQ(TrainingRun, _ProbeMixin):
    extra_columns = ("env_steps", "replay_size", "probe_phi", "probe_phi_hat")

    def __init__(self, cfg: ExperimentConfig, arm: str, seed: int):
        self.cfg = cfg
        self.env = PortalBatch(cfg.num_actors, seed, cfg.time_limit)
        net = cfg.net_config(self.env.obs_dim, N_ACTIONS)
        self.params = init_params(net, seed)
        self.learner = QLearner(self.params, cfg.loss_weights(arm), cfg.target_config(), cfg.k,
                                cfg.learning_rate, cfg.model_loss)
        self.collector = RolloutCollector(self.env, self.params, cfg.unroll_length, seed + 10_000)
        self.replay = ReplayBuffer(cfg.replay_capacity, seed + 20_000)
        self.schedule = EpsilonSchedule(cfg.epsilon_start, cfg.epsilon_end, cfg.epsilon_steps)
        self._init_probe(seed)
        self.epsilon = cfg.epsilon_start

    def _probe_epsilon(self):
        return self.cfg.epsilon_end

    def rngs(self):
        return {"env": self.env.rng, "collector": self.collector.rng, "replay": self.replay.rng,
                "probe_env": self.probe_env.rng, "probe_collector": self.probe_collector.rng}

    def train_step(self) -> dict:
        self.epsilon = self.schedule(self.collector.env_steps)
        unroll, h0 = self.collector.collect(self.epsilon)
        self.replay.add_unroll(unroll, h0)
        if len(self.replay) < max(self.cfg.min_replay, 1):
            return {"epsilon": self.epsilon}
        rep = self.learner.update(self.replay, self.cfg.batch_size)
        return {"L_v": rep.L_v, "L_vplus": rep.L_vplus, "L_model": rep.L_model,
                "grad_norm": rep.grad_norm, "epsilon": self.epsilon}

    def log_metrics(self, step: int) -> dict:
        out = {"episode_return_mean": _mean(self.collector.pop_returns()),
               "env_steps": self.collector.env_steps, "replay_size": len(self.replay)}
        if self.cfg.probe_interval and step % self.cfg.probe_interval == 0:
            out.update(self.run_probe())
        return out

    def state_arrays(self):
        out = dict(self.params.named_arrays())
        out.update({f"target/{k}": v for k, v in self.learner.target_params.named_arrays().items()})
        out.update({f"adam/{k}": v for k, v in self.learner.opt.state_arrays().items()})
        out.update(self.env.state_arrays())
        out.update(self.collector.state_arrays())
        out.update(self.replay.state_arrays())
        out.update(self._probe_state())
        out["learner_steps"] = np.array([self.learner.learner_steps], dtype=np.float64)
        out["epsilon"] = np.array([self.epsilon])
        return out

    def load_state_arrays(self, arrays, step):
        self.params.load_arrays(arrays)
        self.learner.target_params.load_arrays(
            {k[7:]: v for k, v in arrays.items() if k.startswith("target/")})
        self.learner.learner_steps = int(arrays["learner_steps"][0])
        self.learner.opt.load_state_arrays(
            {k[5:]: v for k, v in arrays.items() if k.startswith("adam/")},
            self.learner.learner_steps)
        self.env.load_state_arrays(arrays)
        self.collector.load_state_arrays(arrays)
        self.replay.load_state_arrays(arrays)
        self._load_probe_state(arrays)
        self.epsilon = float(arrays["epsilon"][0])


# ---------------------------------------------------------------- mrp


class MrpRun(TrainingRun):
    """One (instance, repeat) pair; seeds enumerate instances x repeats."""

    extra_columns = ("value_error_modelfree", "value_error_model_based", "instance", "L_v_baseline")

    def __init__(self, cfg: ExperimentConfig, arm: str, seed: int):
        self.cfg = cfg
        self.instance_index = seed // cfg.mrp_repeats
        self.instance = MrpInstance.sample(1000 + self.instance_index, cfg.mrp_D, cfg.mrp_D2,
                                           cfg.mrp_noise_std)
        tcfg = MrpTrainConfig(hidden=cfg.mrp_hidden, d=cfg.d, batch_size=cfg.batch_size,
                              learning_rate=cfg.mrp_learning_rate, alpha=cfg.mrp_alpha,
                              beta=cfg.mrp_beta, updates=cfg.total_steps,
                              eval_states=cfg.mrp_eval_states)
        self.comp = MrpComparison(self.instance, tcfg, seed)

    def rngs(self):
        return {"train": self.comp.rng}

    def train_step(self) -> dict:
        s = self.comp.update()
        return {"L_v": s["L_v"], "L_vplus": s["L_vplus"], "L_model": s["L_model"],
                "grad_norm": s["grad_norm"], "L_v_baseline": s["L_v_baseline"]}

    def log_metrics(self, step: int) -> dict:
        err = self.comp.evaluate()
        return {"value_error_vm": err["v_m"], "value_error_vplus": err["v_plus"],
                "value_error_modelfree": err["v_modelfree_baseline"],
                "value_error_model_based": err["model_based_baseline"],
                "instance": self.instance_index}

    def state_arrays(self):
        return self.comp.state_arrays()

    def load_state_arrays(self, arrays, step):
        self.comp.load_state_arrays(arrays, step)

    def report(self) -> dict:
        return {"instance": self.instance_index, "final_value_errors": self.comp.evaluate()}


RUNS = {"portal_ac": PortalActorCritic, "portal_q": PortalQ, "mrp": MrpRun}
