"""HiMo network stack.

Partitions follow the parameter naming of the method:

========  ==========================================================
``eta3``  observation encoder and recurrent state core, ``h_t``
``eta2``  feature model ``phi_hat(h_t)``
``eta1``  model-augmented value head ``v_m`` / ``q_m`` (dueling)
``theta2`` hindsight features ``phi(h_{t+k})``
``theta1`` hindsight value head ``v_plus`` / ``q_plus``
``pi``    policy head (actor-critic only)
========  ==========================================================

Gradient stopping is wired into :func:`forward_unroll`: ``v_plus`` sees
stopped copies of both ``h_t`` and ``h_{t+k}``, and ``v_m`` (and the policy)
see a stopped ``phi_hat``.
"""
from __future__ import annotations

import copy
from dataclasses import asdict, dataclass, field

import numpy as np

from .autodiff import (
    Parameter,
    ShapeError,
    Tensor,
    as_tensor,
    concat,
    gru_gates,
    matmul,
    mean,
    relu,
    reshape,
    stack,
    stop_gradient,
)

PARTITIONS = ("eta3", "eta2", "eta1", "theta2", "theta1", "pi")


@dataclass(frozen=True)
class NetConfig:
    obs_dim: int
    state_size: int = 64
    encoder_hidden: int = 64
    core: str = "gru"
    phi_hidden: int = 64
    phi_hat_hidden: int = 64
    value_hidden: int = 64
    policy_hidden: int = 64
    d: int = 3
    n_actions: int = 1
    head_kind: str = "state_value"
    policy: bool = False
    # >0: phi reads raw future observations of this size instead of h_{t+k}
    phi_input_dim: int = 0

    def errors(self) -> list[str]:
        errs = []
        for name in ("obs_dim", "state_size", "d", "n_actions"):
            if getattr(self, name) < 1:
                errs.append(f"{name} must be >= 1")
        for name in ("encoder_hidden", "phi_hidden", "phi_hat_hidden", "value_hidden",
                     "policy_hidden", "phi_input_dim"):
            if getattr(self, name) < 0:
                errs.append(f"{name} must be >= 0")
        if self.core not in ("gru", "mlp"):
            errs.append(f"core must be 'gru' or 'mlp', got {self.core!r}")
        if self.head_kind not in ("state_value", "action_value"):
            errs.append(f"head_kind must be 'state_value' or 'action_value', got {self.head_kind!r}")
        if self.policy and self.n_actions < 2:
            errs.append("policy head needs n_actions >= 2")
        return errs

    @property
    def value_outputs(self) -> int:
        return self.n_actions if self.head_kind == "action_value" else 1

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HimoParams:
    config: NetConfig
    seed: int
    partitions: dict[str, dict[str, Parameter]] = field(default_factory=dict)

    def __getitem__(self, name: str) -> dict[str, Parameter]:
        return self.partitions[name]

    def parameters(self, names=None) -> list[Parameter]:
        names = PARTITIONS if names is None else names
        return [p for n in names for p in self.partitions.get(n, {}).values()]

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for p in self.parameters():
            src = np.asarray(arrays[p.name], dtype=np.float64)
            if src.shape != p.shape:
                raise ShapeError("load_arrays", [p.shape, src.shape], p.name)
            p.data = np.array(src)

    def copy(self) -> "HimoParams":
        out = HimoParams(self.config, self.seed)
        for part, params in self.partitions.items():
            out.partitions[part] = {k: Parameter(v.data.copy(), v.name) for k, v in params.items()}
        return out

    def assign(self, other: "HimoParams") -> None:
        self.load_arrays({k: v.copy() for k, v in other.named_arrays().items()})

    def partition_of(self, param: Parameter) -> str:
        for part, params in self.partitions.items():
            if any(p is param for p in params.values()):
                return part
        raise KeyError(param.name)


# ---------------------------------------------------------------- init


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _orthogonal(rng, n):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _dense(part, prefix, rng, n_in, n_out):
    name = part["__name__"]
    part["params"][f"{prefix}w"] = Parameter(_uniform(rng, n_in, (n_in, n_out)), f"{name}/{prefix}w")
    part["params"][f"{prefix}b"] = Parameter(np.zeros(n_out), f"{name}/{prefix}b")


def _mlp(part, rng, n_in, hidden, n_out):
    if hidden > 0:
        _dense(part, "l0_", rng, n_in, hidden)
        _dense(part, "l1_", rng, hidden, n_out)
    else:
        _dense(part, "l0_", rng, n_in, n_out)


def make_mlp(partition: str, rng, n_in: int, hidden: int, n_out: int) -> dict[str, Parameter]:
    """Stand-alone MLP parameters, named like the partitions of :func:`init_params`."""
    part = {"__name__": partition, "params": {}}
    _mlp(part, rng, n_in, hidden, n_out)
    return part["params"]


def init_params(config: NetConfig, seed: int) -> HimoParams:
    """Deterministic initialisation: uniform fan-in weights, orthogonal
    recurrent blocks, zero biases."""
    errs = config.errors()
    if errs:
        raise ValueError("; ".join(errs))
    rng = np.random.default_rng(seed)
    parts = {n: {"__name__": n, "params": {}} for n in PARTITIONS}
    H, d = config.state_size, config.d
    A = config.n_actions

    core_in = config.obs_dim
    if config.encoder_hidden > 0:
        _dense(parts["eta3"], "enc_", rng, config.obs_dim, config.encoder_hidden)
        core_in = config.encoder_hidden
    if config.core == "gru":
        e3 = parts["eta3"]["params"]
        e3["gru_wx"] = Parameter(_uniform(rng, core_in, (core_in, 3 * H)), "eta3/gru_wx")
        e3["gru_wh"] = Parameter(np.concatenate([_orthogonal(rng, H) for _ in range(3)], axis=1),
                                 "eta3/gru_wh")
        e3["gru_bx"] = Parameter(np.zeros(3 * H), "eta3/gru_bx")
        e3["gru_bh"] = Parameter(np.zeros(3 * H), "eta3/gru_bh")
    else:
        _dense(parts["eta3"], "core_", rng, core_in, H)

    _mlp(parts["eta2"], rng, H, config.phi_hat_hidden, d)
    phi_in = config.phi_input_dim or H
    _mlp(parts["theta2"], rng, phi_in, config.phi_hidden, d)

    vh = config.value_hidden
    if config.head_kind == "action_value":
        _dense(parts["eta1"], "l0_", rng, H + d, vh)
        _dense(parts["eta1"], "value_", rng, vh, 1)
        _dense(parts["eta1"], "adv_", rng, vh, A)
        _mlp(parts["theta1"], rng, H + d, vh, A)
    else:
        _mlp(parts["eta1"], rng, H + d, vh, 1)
        _mlp(parts["theta1"], rng, H + d, vh, 1)
    if config.policy:
        _mlp(parts["pi"], rng, H + d, config.policy_hidden, A)

    params = HimoParams(config, seed)
    for n in PARTITIONS:
        params.partitions[n] = parts[n]["params"]
    return params


# ---------------------------------------------------------------- pieces


def dense(x, w, b) -> Tensor:
    return matmul(x, w) + b


def mlp_forward(part: dict[str, Parameter], x) -> Tensor:
    """One hidden ReLU layer if the partition has it, else a linear map."""
    out = dense(x, part["l0_w"], part["l0_b"])
    if "l1_w" in part:
        out = dense(relu(out), part["l1_w"], part["l1_b"])
    return out


def encode(eta3: dict[str, Parameter], obs) -> Tensor:
    obs = as_tensor(obs)
    if "enc_w" in eta3:
        return relu(dense(obs, eta3["enc_w"], eta3["enc_b"]))
    return obs


def _core(eta3, h_prev, x, episode_start) -> Tensor:
    if "gru_wx" not in eta3:
        return relu(dense(x, eta3["core_w"], eta3["core_b"]))
    h_prev = as_tensor(h_prev)
    if np.any(episode_start):
        keep = 1.0 - np.asarray(episode_start, dtype=np.float64)
        h_prev = h_prev * (keep.reshape(-1, 1) if keep.ndim else keep)
    gx = dense(x, eta3["gru_wx"], eta3["gru_bx"])
    gh = dense(h_prev, eta3["gru_wh"], eta3["gru_bh"])
    return gru_gates(gx, gh, h_prev)


def state_step(eta3: dict[str, Parameter], h_prev, o_t, episode_start) -> Tensor:
    """``h_t = f(o_t, h_{t-1})``; ``h_prev`` is zeroed where an episode starts.

    Inputs are batched: ``h_prev`` (B, H), ``o_t`` (B, obs_dim) and
    ``episode_start`` a bool or a (B,) array.
    """
    o_t = as_tensor(o_t)
    h_prev = as_tensor(h_prev)
    if o_t.ndim == 1:
        o_t = reshape(o_t, (1, -1))
    if h_prev.ndim == 1:
        h_prev = reshape(h_prev, (1, -1))
    return _core(eta3, h_prev, encode(eta3, o_t), episode_start)


def _check_width(kind, x, part, key="l0_w"):
    if x.shape[-1] != part[key].shape[0]:
        raise ShapeError(kind, [x.shape, part[key].shape])


def phi_forward(theta2: dict[str, Parameter], h_future) -> Tensor:
    """Hindsight features; the caller passes a gradient-stopped input."""
    h_future = as_tensor(h_future)
    _check_width("phi_forward", h_future, theta2)
    return mlp_forward(theta2, h_future)


def phi_hat_forward(eta2: dict[str, Parameter], h_t) -> Tensor:
    h_t = as_tensor(h_t)
    _check_width("phi_hat_forward", h_t, eta2)
    return mlp_forward(eta2, h_t)


def value_head(head: dict[str, Parameter], h, feat) -> Tensor:
    """MLP over ``concat(h, feat)``.

    Returns (N,) for a scalar head; (N, A) for an action head. A head with
    ``value_`` and ``adv_`` layers is dueling: ``V + A - mean(A)``.
    """
    h, feat = as_tensor(h), as_tensor(feat)
    x = concat([h, feat], axis=-1)
    _check_width("value_head", x, head)
    if "adv_w" in head:
        torso = relu(dense(x, head["l0_w"], head["l0_b"]))
        value = dense(torso, head["value_w"], head["value_b"])
        adv = dense(torso, head["adv_w"], head["adv_b"])
        return value + (adv - mean(adv, axis=-1, keepdims=True))
    out = mlp_forward(head, x)
    if out.shape[-1] == 1:
        return reshape(out, out.shape[:-1])
    return out


def policy_logits(pi: dict[str, Parameter], h, feat) -> Tensor:
    x = concat([as_tensor(h), as_tensor(feat)], axis=-1)
    _check_width("policy_logits", x, pi)
    return mlp_forward(pi, x)


# ---------------------------------------------------------------- unrolls


@dataclass
class UnrollBatch:
    """Time-major unroll of ``L`` transitions over a batch of ``B`` streams.

    ``obs`` and ``episode_start`` have ``L + 1`` rows; the last row is the
    bootstrap observation (and the first row of the next unroll).
    ``discounts[t]`` is 0 where the episode terminated on transition ``t``
    and 1 otherwise; the discount factor itself lives in the target config.
    """

    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    discounts: np.ndarray
    episode_start: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def length(self) -> int:
        return self.rewards.shape[0]

    @property
    def batch_size(self) -> int:
        return self.rewards.shape[1]

    def validate(self) -> None:
        L, B = self.rewards.shape
        expect = {
            "obs": (L + 1, B), "actions": (L, B), "discounts": (L, B), "episode_start": (L + 1, B),
        }
        for name, lead in expect.items():
            if getattr(self, name).shape[:2] != lead:
                raise ShapeError("UnrollBatch", [getattr(self, name).shape, lead], name)


def hindsight_mask(episode_start: np.ndarray, length: int, k: int) -> np.ndarray:
    """Valid where ``t + k`` is inside the unroll and no episode starts in (t, t+k]."""
    starts = np.asarray(episode_start, dtype=bool)
    B = starts.shape[1]
    mask = np.zeros((length, B), dtype=bool)
    for t in range(max(length - k, 0)):
        mask[t] = ~starts[t + 1:t + k + 1].any(axis=0)
    return mask


@dataclass
class ForwardOutputs:
    h: Tensor               # (L+1, B, H)
    phi_hat: Tensor         # (L+1, B, d)
    v_m: Tensor             # (L+1, B) or (L+1, B, A)
    policy_logits: Tensor | None
    phi: Tensor | None      # (L-k, B, d) rows aligned with t = 0..L-k-1
    v_plus: Tensor | None   # (L-k, B) or (L-k, B, A)
    hindsight_mask: np.ndarray  # (L, B)
    h_carry: np.ndarray     # state after the last in-unroll slot; next unroll's h0

    @property
    def hindsight_rows(self) -> int:
        return 0 if self.phi is None else self.phi.shape[0]


def forward_unroll(params: HimoParams, unroll: UnrollBatch, h0, k: int) -> ForwardOutputs:
    """Run the full HiMo graph over an unroll."""
    if k < 1:
        raise ValueError("k must be >= 1")
    cfg = params.config
    L, B = unroll.length, unroll.batch_size
    if L < 1:
        raise ValueError("unroll length must be >= 1")
    eta3 = params["eta3"]
    obs = np.asarray(unroll.obs, dtype=np.float64).reshape(L + 1, B, -1)
    x_all = encode(eta3, obs.reshape((L + 1) * B, -1))
    x_all = reshape(x_all, (L + 1, B, -1))
    h = as_tensor(np.asarray(h0, dtype=np.float64).reshape(B, cfg.state_size))
    hs = []
    for t in range(L + 1):
        h = _core(eta3, h, x_all[t], unroll.episode_start[t])
        hs.append(h)
    h_all = stack(hs, axis=0)
    H = cfg.state_size
    flat = reshape(h_all, ((L + 1) * B, H))

    phi_hat_flat = phi_hat_forward(params["eta2"], flat)
    phi_hat_stopped = stop_gradient(phi_hat_flat)
    v_m = value_head(params["eta1"], flat, phi_hat_stopped)
    v_m = reshape(v_m, (L + 1, B) + v_m.shape[1:])
    logits = None
    if cfg.policy:
        logits = policy_logits(params["pi"], flat, phi_hat_stopped)
        logits = reshape(logits, (L + 1, B, -1))

    mask = hindsight_mask(unroll.episode_start, L, k)
    rows = max(L - k, 0)
    phi = v_plus = None
    if rows > 0:
        h_now = Tensor(h_all.data[:rows].reshape(rows * B, H))
        if cfg.phi_input_dim:
            fut = Tensor(obs[k:k + rows].reshape(rows * B, -1))
        else:
            fut = Tensor(h_all.data[k:k + rows].reshape(rows * B, H))
        phi_flat = phi_forward(params["theta2"], fut)
        vp = value_head(params["theta1"], h_now, phi_flat)
        phi = reshape(phi_flat, (rows, B, cfg.d))
        v_plus = reshape(vp, (rows, B) + vp.shape[1:])

    return ForwardOutputs(
        h=h_all,
        phi_hat=reshape(phi_hat_flat, (L + 1, B, cfg.d)),
        v_m=v_m,
        policy_logits=logits,
        phi=phi,
        v_plus=v_plus,
        hindsight_mask=mask,
        h_carry=h_all.data[L - 1].copy(),
    )


def initial_state(config: NetConfig, batch_size: int) -> np.ndarray:
    return np.zeros((batch_size, config.state_size))


def clone_config(config: NetConfig, **changes) -> NetConfig:
    return copy.replace(config, **changes) if hasattr(copy, "replace") else NetConfig(
        **{**asdict(config), **changes})
