"""Flat ``key = value`` experiment configs.

One setting per line; ``#`` starts a comment. Lists are comma separated.
Unset keys take the experiment's defaults (see :func:`default_config`).
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, fields
from pathlib import Path

from ..learning.losses import MODEL_LOSSES, LossWeights
from ..learning.targets import TargetConfig
from ..nets import NetConfig

EXPERIMENTS = ("mrp", "portal_ac", "portal_q", "chain", "proposition")
ARMS = ("himo", "baseline")


class ConfigError(ValueError):
    """Config problem; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class ExperimentConfig:
    experiment: str = "portal_ac"
    arms: tuple = ("himo", "baseline")
    seeds: tuple = (0, 1, 2, 3)
    total_steps: int = 10000         # learner updates
    eval_interval: int = 50
    checkpoint_interval: int = 1000
    out_dir: str = "runs"

    # loss weights and hindsight
    alpha: float = 0.25
    beta: float = 0.5
    k: int = 5
    model_loss: str = "xent"

    # network
    d: int = 3
    state_size: int = 64
    encoder_hidden: int = 64
    hidden: int = 64
    core: str = "gru"

    # optimisation and targets
    learning_rate: float = 5e-4
    batch_size: int = 32
    unroll_length: int = 20
    gamma: float = 0.99
    n_step: int = 20
    lam: float = 0.7
    rescale_epsilon: float = 1e-3
    use_rescale: bool = True
    target_update_interval: int = 400
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.0       # 0 disables clipping

    # Q-agent acting and replay
    num_actors: int = 8
    replay_capacity: int = 1000
    min_replay: int = 32
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_steps: int = 200000      # environment steps

    # portal
    time_limit: int = 60
    probe_interval: int = 0          # learner updates between probe fits; 0 disables
    probe_samples: int = 600

    # mrp
    mrp_D: int = 32
    mrp_D2: int = 4
    mrp_hidden: int = 16
    mrp_instances: int = 4
    mrp_repeats: int = 2
    mrp_noise_std: float = 1.0
    mrp_alpha: float = 0.5
    mrp_beta: float = 1.0
    mrp_learning_rate: float = 1e-3
    mrp_eval_states: int = 4096

    # chain / counting
    chain_n: int = 10
    chain_m: int = 10
    chain_trials: int = 50
    chain_budgets: tuple = (10, 20, 30, 50, 100, 200, 500, 1000, 2000)

    # proposition
    prop_instances: int = 1000

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def config_hash(self) -> str:
        """Hash of the settings that shape a single run's trajectory; the
        seed list, arm list and output directory only select runs."""
        blob = json.dumps({k: list(v) if isinstance(v, tuple) else v
                           for k, v in self.to_dict().items()
                           if k not in ("out_dir", "seeds", "arms")}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def loss_weights(self, arm: str = "himo") -> LossWeights:
        if arm == "baseline":
            return LossWeights(0.0, 0.0)
        return LossWeights(self.alpha, self.beta)

    def target_config(self) -> TargetConfig:
        return TargetConfig(self.gamma, self.n_step, self.lam, self.rescale_epsilon,
                            self.use_rescale, self.target_update_interval)

    def net_config(self, obs_dim: int, n_actions: int) -> NetConfig:
        q = self.experiment == "portal_q"
        h = self.hidden
        return NetConfig(
            obs_dim=obs_dim, state_size=self.state_size, encoder_hidden=self.encoder_hidden,
            core=self.core, phi_hidden=h, phi_hat_hidden=h, value_hidden=h, policy_hidden=h,
            d=self.d, n_actions=n_actions,
            head_kind="action_value" if q else "state_value", policy=not q,
        )


# experiment-specific defaults layered over the dataclass defaults
_DEFAULTS = {
    "portal_ac": {},
    "portal_q": {"alpha": 0.01, "beta": 1.0, "model_loss": "squared", "learning_rate": 2e-4},
    "mrp": {"arms": ("himo",), "seeds": tuple(range(8)), "total_steps": 20000,
            "eval_interval": 500, "checkpoint_interval": 5000},
    "chain": {"arms": ("himo",), "seeds": (0,), "total_steps": 0},
    "proposition": {"arms": ("himo",), "seeds": (0,), "total_steps": 0},
}


def default_config(experiment: str = "portal_ac", **overrides) -> ExperimentConfig:
    if experiment not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {experiment!r}; choose from {EXPERIMENTS}")
    cfg = ExperimentConfig(experiment=experiment, **_DEFAULTS[experiment])
    return dataclasses.replace(cfg, **overrides) if overrides else cfg


_FIELD_TYPES = {f.name: f.type for f in fields(ExperimentConfig)}


def _coerce(key: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if default and isinstance(default[0], int):
                return tuple(int(x) for x in items)
            return tuple(items)
        return raw
    except ValueError:
        raise ConfigError(key, f"cannot parse {raw!r} as {type(default).__name__}") from None


def parse_config_text(text: str) -> ExperimentConfig:
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected 'key = value', got {line!r}")
        key, value = (x.strip() for x in line.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ConfigError(key, "unknown config key")
        if key in pairs:
            raise ConfigError(key, "set more than once")
        pairs[key] = value
    experiment = pairs.pop("experiment", "portal_ac").strip()
    base = default_config(experiment)
    values = {k: _coerce(k, v, getattr(base, k)) for k, v in pairs.items()}
    return dataclasses.replace(base, **values)


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError("config", f"cannot read {path}: {exc.strerror}") from None
    return parse_config_text(text)


def format_config(cfg: ExperimentConfig) -> str:
    lines = []
    for k, v in cfg.to_dict().items():
        if isinstance(v, tuple):
            v = ",".join(str(x) for x in v)
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"


def validate_config(cfg: ExperimentConfig) -> tuple[list[str], list[str]]:
    """``(errors, warnings)``; each message starts with the field name."""
    errors: list[str] = []
    warnings: list[str] = []

    def err(field, msg):
        errors.append(f"{field}: {msg}")

    if cfg.experiment not in EXPERIMENTS:
        err("experiment", f"must be one of {EXPERIMENTS}")
    for arm in cfg.arms:
        if arm not in ARMS:
            err("arms", f"unknown arm {arm!r}; choose from {ARMS}")
    if not cfg.arms:
        err("arms", "needs at least one arm")
    if not cfg.seeds:
        err("seeds", "needs at least one seed")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        err("seeds", "seeds must be distinct")
    for name in ("total_steps",):
        if getattr(cfg, name) < 0:
            err(name, "must be >= 0")
    for name in ("eval_interval", "checkpoint_interval", "k", "d", "state_size", "batch_size",
                 "unroll_length", "n_step", "target_update_interval", "num_actors",
                 "replay_capacity", "time_limit", "mrp_D", "mrp_D2", "mrp_hidden",
                 "mrp_instances", "mrp_repeats", "mrp_eval_states", "chain_n", "chain_m",
                 "chain_trials", "prop_instances", "probe_samples"):
        if getattr(cfg, name) < 1:
            err(name, "must be >= 1")
    for name in ("hidden", "encoder_hidden", "probe_interval", "min_replay", "epsilon_steps"):
        if getattr(cfg, name) < 0:
            err(name, "must be >= 0")
    if cfg.checkpoint_interval % max(cfg.eval_interval, 1):
        err("checkpoint_interval", "must be a multiple of eval_interval")
    if cfg.probe_interval and cfg.probe_interval % max(cfg.eval_interval, 1):
        err("probe_interval", "must be a multiple of eval_interval")
    if cfg.alpha < 0:
        err("alpha", "must be >= 0")
    if cfg.beta < 0:
        err("beta", "must be >= 0")
    if cfg.learning_rate <= 0 or cfg.mrp_learning_rate <= 0:
        err("learning_rate", "must be > 0")
    if cfg.model_loss not in MODEL_LOSSES:
        err("model_loss", f"must be one of {tuple(MODEL_LOSSES)}")
    elif cfg.model_loss == "xent" and cfg.d < 2:
        err("model_loss", "cross-entropy model loss needs d >= 2")
    if cfg.core not in ("gru", "mlp"):
        err("core", "must be 'gru' or 'mlp'")
    if not 0 <= cfg.epsilon_end <= 1 or not 0 <= cfg.epsilon_start <= 1:
        err("epsilon_start", "epsilons must be in [0, 1]")
    if cfg.max_grad_norm < 0:
        err("max_grad_norm", "must be >= 0")
    if cfg.mrp_D2 >= cfg.mrp_D:
        err("mrp_D2", "must be smaller than mrp_D")
    if cfg.experiment in ("portal_ac", "portal_q") and cfg.k >= cfg.unroll_length:
        err("k", "must be smaller than unroll_length so hindsight windows fit")
    for msg in cfg.target_config().errors():
        field = msg.split(" ", 1)[0]
        err({"n": "n_step", "lam": "lam"}.get(field, field), msg)
    if cfg.experiment == "mrp":
        a, b = cfg.mrp_alpha, cfg.mrp_beta
    else:
        a, b = cfg.alpha, cfg.beta
    if b > 0 and a >= b:
        warnings.append(f"alpha: alpha={a} >= beta={b}; the hindsight value should learn more "
                        "slowly than the model (alpha < beta)")
    return errors, warnings
