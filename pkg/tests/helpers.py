"""Shared oracles for the test suite."""
from __future__ import annotations

import numpy as np

from himo.autodiff import Tape, backward


def numeric_grad(loss_fn, params, h: float = 1e-5) -> dict:
    """Central finite differences of ``loss_fn()`` with respect to ``params``."""
    out = {}
    for p in params:
        g = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(loss_fn().data)
            flat[i] = orig - h
            down = float(loss_fn().data)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * h)
        out[p] = g
    return out


def analytic_grad(loss_fn, params) -> dict:
    with Tape():
        loss = loss_fn()
    return backward(loss, params)


def max_rel_error(a: dict, b: dict, floor: float = 1e-6) -> float:
    """Largest ``|a - b| / max(|a|, |b|, floor)`` over all entries."""
    worst = 0.0
    for p in a:
        x, y = a[p], b[p]
        denom = np.maximum(np.maximum(np.abs(x), np.abs(y)), floor)
        worst = max(worst, float(np.max(np.abs(x - y) / denom)) if x.size else 0.0)
    return worst


def fd_check(loss_fn, params, h: float = 1e-5) -> float:
    return max_rel_error(analytic_grad(loss_fn, params), numeric_grad(loss_fn, params, h))


# ---------------------------------------------------------------- random graphs

_UNARY = ("sigmoid", "tanh", "exp", "log", "sqrt", "square", "relu", "abs", "softmax",
          "log_softmax", "matmul", "scale", "center", "reshape", "slice_concat", "stack_pick")
_BINARY = ("add", "sub", "mul", "div")


def random_graph(seed: int, n_ops: int):
    """A random differentiable composite over four parameters.

    Returns ``(params, loss_fn, margin)``; ``margin`` is the smallest distance
    of any relu/abs input from its kink at the sampled point.
    """
    from himo import autodiff as ad

    rng = np.random.default_rng(seed)
    params = [ad.Parameter(rng.normal(size=(3, 4)), "a"), ad.Parameter(rng.normal(size=(3, 4)), "b"),
              ad.Parameter(0.5 * rng.normal(size=(4, 4)), "w"), ad.Parameter(rng.normal(size=4), "c")]
    plan = []
    for _ in range(n_ops):
        if rng.random() < 0.35:
            plan.append((_BINARY[rng.integers(len(_BINARY))], int(rng.integers(0, 1 << 30))))
        else:
            plan.append((_UNARY[rng.integers(len(_UNARY))], int(rng.integers(0, 1 << 30))))
    margin = [np.inf]

    def loss_fn():
        a, b, w, c = params
        pool = [a, b]
        for kind, pick in plan:
            x = pool[pick % len(pool)]
            y = pool[(pick // 7) % len(pool)]
            if kind == "sigmoid":
                z = ad.tensor_op("sigmoid", x)
            elif kind == "tanh":
                z = ad.tensor_op("tanh", x)
            elif kind == "exp":
                z = ad.tensor_op("exp", ad.tensor_op("tanh", x))
            elif kind == "log":
                z = ad.tensor_op("log", 1.0 + ad.tensor_op("square", x))
            elif kind == "sqrt":
                z = ad.tensor_op("sqrt", 1.0 + ad.tensor_op("square", x))
            elif kind == "square":
                z = 0.5 * ad.tensor_op("square", x)
            elif kind in ("relu", "abs"):
                margin[0] = min(margin[0], float(np.min(np.abs(x.data))))
                z = ad.tensor_op(kind, x)
            elif kind == "softmax":
                z = ad.tensor_op("softmax", x, axis=-1)
            elif kind == "log_softmax":
                z = ad.tensor_op("log_softmax", x, axis=0)
            elif kind == "matmul":
                z = ad.tensor_op("matmul", x, w)
            elif kind == "scale":
                z = x * c
            elif kind == "center":
                z = x - ad.tensor_op("mean", x, axis=1, keepdims=True)
            elif kind == "reshape":
                z = ad.tensor_op("reshape", ad.tensor_op("reshape", x, (4, 3)) * 1.5, (3, 4))
            elif kind == "slice_concat":
                z = ad.tensor_op("concat", x[:, 2:], x[:, :2], axis=1)
            elif kind == "stack_pick":
                z = ad.tensor_op("stack", x, y, axis=0)[1] - x
            elif kind == "div":
                z = x / (1.0 + ad.tensor_op("square", y))
            else:
                z = ad.tensor_op(kind, x, y)
            pool.append(z)
        out = pool[-1]
        return 0.1 * ad.tensor_op("sum", ad.tensor_op("square", out)) + ad.tensor_op("mean", out * c)

    loss_fn()
    return params, loss_fn, margin[0]


# ---------------------------------------------------------------- tiny networks


def tiny_config(head_kind: str = "state_value", policy: bool = True, core: str = "gru"):
    from himo.nets import NetConfig

    return NetConfig(obs_dim=6, state_size=5, encoder_hidden=4, core=core, phi_hidden=4,
                     phi_hat_hidden=4, value_hidden=4, policy_hidden=4, d=3, n_actions=3,
                     head_kind=head_kind, policy=policy and head_kind == "state_value")


def random_unroll(seed: int, L: int = 6, B: int = 3, obs_dim: int = 6, n_actions: int = 3,
                  start_prob: float = 0.2):
    from himo.nets import UnrollBatch

    rng = np.random.default_rng(seed)
    starts = rng.random((L + 1, B)) < start_prob
    starts[0] = True
    discounts = np.ones((L, B))
    # a transition into a new episode terminates the previous one
    discounts[starts[1:]] = 0.0
    return UnrollBatch(
        obs=rng.normal(size=(L + 1, B, obs_dim)),
        actions=rng.integers(0, n_actions, size=(L, B)),
        rewards=rng.normal(size=(L, B)),
        discounts=discounts,
        episode_start=starts,
    )


def partition_grad_norms(params, loss_fn) -> dict:
    """Largest absolute gradient entry per partition."""
    grads = analytic_grad(loss_fn, params.parameters())
    out = {}
    for name, part in params.partitions.items():
        if part:
            out[name] = max(float(np.max(np.abs(grads[p]))) for p in part.values())
    return out


def hindsight_loss_fns(params, unroll, k: int, model_loss: str = "squared", seed: int = 0):
    """``{"L_v", "L_vplus", "L_model"}`` closures over one forward pass each."""
    from himo.learning.agents import _gather
    from himo.learning.losses import MODEL_LOSSES, value_loss
    from himo.nets import forward_unroll

    L, B = unroll.length, unroll.batch_size
    U = np.random.default_rng(seed).normal(size=(L, B))
    h0 = 0.3 * np.random.default_rng(seed + 1).normal(size=(B, params.config.state_size))
    q = params.config.head_kind == "action_value"

    def pick(v, rows):
        return _gather(v, unroll.actions[:rows]) if q else v

    def L_v():
        out = forward_unroll(params, unroll, h0, k)
        return value_loss(pick(out.v_m[:L], L), U)

    def L_vplus():
        out = forward_unroll(params, unroll, h0, k)
        rows = out.hindsight_rows
        return value_loss(pick(out.v_plus, rows), U[:rows], out.hindsight_mask[:rows])

    def L_model():
        out = forward_unroll(params, unroll, h0, k)
        rows = out.hindsight_rows
        return MODEL_LOSSES[model_loss](out.phi, out.phi_hat[:rows], out.hindsight_mask[:rows])

    return {"L_v": L_v, "L_vplus": L_vplus, "L_model": L_model}


# partitions each loss must reach with a nonzero gradient; everything else is exactly zero
EXPECTED_REACH = {"L_v": {"eta1", "eta3"}, "L_vplus": {"theta1", "theta2"},
                  "L_model": {"eta2", "eta3"}}


def jitter_biases(params, seed: int, scale: float = 0.1):
    """Move zero-initialised biases off zero so no ReLU input sits on its kink
    (an all-zero input row would otherwise hit every kink at once)."""
    rng = np.random.default_rng(seed)
    for p in params.parameters():
        if p.name.endswith("b"):
            p.data = scale * rng.normal(size=p.shape)
    return params


# ---------------------------------------------------------------- plain baselines
#
# Independently written no-hindsight agents: a recurrent actor-critic and a
# recurrent double-Q learner. They share only the autodiff primitives and
# the optimiser with the library, and contain no mask, loss-weight or
# hindsight code. Arithmetic follows the same evaluation order as the
# library so that equal maths gives equal bits.


def _relu_dense(x, w, b):
    from himo import autodiff as ad

    return ad.relu(ad.matmul(x, w) + b)


def _two_layer(part, x):
    from himo import autodiff as ad

    return ad.matmul(_relu_dense(x, part["l0_w"], part["l0_b"]), part["l1_w"]) + part["l1_b"]


def plain_forward(params, obs, starts, h0):
    """``(flat_h, feat, T, B)`` for a GRU-core network; ``feat`` is the
    untrained model output that the value and policy heads read (constant)."""
    from himo import autodiff as ad

    e3 = params["eta3"]
    T, B = obs.shape[0], obs.shape[1]
    x = _relu_dense(ad.Tensor(obs.reshape(T * B, -1)), e3["enc_w"], e3["enc_b"])
    x = ad.reshape(x, (T, B, -1))
    h = ad.Tensor(np.asarray(h0, dtype=np.float64))
    hs = []
    for t in range(T):
        if starts[t].any():
            h = h * (1.0 - starts[t].astype(np.float64)).reshape(-1, 1)
        gx = ad.matmul(x[t], e3["gru_wx"]) + e3["gru_bx"]
        gh = ad.matmul(h, e3["gru_wh"]) + e3["gru_bh"]
        h = ad.gru_gates(gx, gh, h)
        hs.append(h)
    flat = ad.reshape(ad.stack(hs, axis=0), (T * B, -1))
    feat = ad.Tensor(_two_layer(params["eta2"], flat).data)
    return flat, feat, T, B


def plain_returns(rewards, discounts, values, n, gamma):
    L, B = rewards.shape
    U = np.zeros((L, B))
    for b in range(B):
        for t in range(L):
            steps = min(n, L - t)
            acc, scale = 0.0, 1.0
            for m in range(steps):
                acc = acc + scale * rewards[t + m, b]
                scale = scale * gamma * discounts[t + m, b]
            U[t, b] = acc + scale * values[t + steps, b]
    return U


def plain_ac_loss(params, unroll, h0, gamma, n, entropy_coef):
    from himo import autodiff as ad

    flat, feat, T, B = plain_forward(params, unroll.obs, unroll.episode_start, h0)
    L = T - 1
    v = ad.reshape(_two_layer(params["eta1"], ad.concat([flat, feat], axis=-1)), (T, B))
    logits = ad.reshape(_two_layer(params["pi"], ad.concat([flat, feat], axis=-1)), (T, B, -1))
    U = plain_returns(unroll.rewards, unroll.discounts, v.data, min(n, L), gamma)
    count = float(L * B)
    value = 0.5 * (ad.sum_(ad.square(v[:L] - U)) / count)
    logp = ad.log_softmax(logits[:L], axis=-1)
    tt, bb = np.meshgrid(np.arange(L), np.arange(B), indexing="ij")
    logp_a = logp[tt, bb, unroll.actions]
    adv = U - v.data[:L]
    pg = -(ad.sum_(logp_a * adv) / count)
    loss = value + pg
    if entropy_coef:
        ent = ad.sum_(-ad.sum_(ad.exp(logp) * logp, axis=-1)) / count
        loss = loss - entropy_coef * ent
    return loss


def _g(x, eps):
    return np.sign(x) * (np.sqrt(np.abs(x) + 1.0) - 1.0) + eps * x


def _g_inv(y, eps):
    a = np.abs(y)
    c = 1.0 + eps + a
    u = 2.0 * c / (1.0 + np.sqrt(1.0 + 4.0 * eps * c))
    return np.sign(y) * (u * u - 1.0)


def plain_q_values(params, obs, starts, h0):
    from himo import autodiff as ad

    flat, feat, T, B = plain_forward(params, obs, starts, h0)
    e1 = params["eta1"]
    torso = _relu_dense(ad.concat([flat, feat], axis=-1), e1["l0_w"], e1["l0_b"])
    value = ad.matmul(torso, e1["value_w"]) + e1["value_b"]
    adv = ad.matmul(torso, e1["adv_w"]) + e1["adv_b"]
    q = value + (adv - ad.mean(adv, axis=-1, keepdims=True))
    return ad.reshape(q, (T, B, -1))


def plain_q_loss(params, target_params, unroll, h0, gamma, n_max, lam, eps):
    from himo import autodiff as ad

    q = plain_q_values(params, unroll.obs, unroll.episode_start, h0)
    q_tgt = plain_q_values(target_params, unroll.obs, unroll.episode_start, h0).data
    L, B = unroll.rewards.shape
    U = np.zeros((L, B))
    for b in range(B):
        for t in range(L):
            N = min(n_max, L - t)
            acc, scale, total = 0.0, 1.0, 0.0
            for n in range(1, N + 1):
                acc = acc + scale * unroll.rewards[t + n - 1, b]
                scale = scale * gamma * unroll.discounts[t + n - 1, b]
                a_star = int(np.argmax(q.data[t + n, b]))
                boot = _g_inv(q_tgt[t + n, b, a_star], eps)
                w = lam ** (n - 1) if n == N else (1.0 - lam) * lam ** (n - 1)
                total = total + w * _g(acc + scale * boot, eps)
            U[t, b] = total
    tt, bb = np.meshgrid(np.arange(L), np.arange(B), indexing="ij")
    q_sel = q[:L][tt, bb, unroll.actions]
    return 0.5 * (ad.sum_(ad.square(q_sel - U)) / float(L * B))


def _same_params(a, b) -> bool:
    return all(x.tobytes() == y.tobytes()
               for x, y in zip(a.named_arrays().values(), b.named_arrays().values()))


def ac_baseline_trajectory(steps: int = 10, seed: int = 0) -> list[bool]:
    """Per step: does the alpha=beta=0 agent match the plain actor-critic bitwise?"""
    from himo.autodiff import Adam, Tape, backward
    from himo.envs import PortalBatch
    from himo.learning import LossWeights, RolloutCollector, TargetConfig, actor_critic_update
    from himo.nets import NetConfig, init_params

    cfg = NetConfig(obs_dim=PortalBatch(1, 0).obs_dim, state_size=8, encoder_hidden=8,
                    phi_hidden=6, phi_hat_hidden=6, value_hidden=6, policy_hidden=6, d=3,
                    n_actions=4, policy=True)
    himo, plain = init_params(cfg, seed), init_params(cfg, seed)
    collector = RolloutCollector(PortalBatch(3, seed + 1), himo, 8, seed + 2)
    opt_h = Adam(himo.parameters(), learning_rate=1e-3)
    opt_p = Adam(plain.parameters(), learning_rate=1e-3)
    targets = TargetConfig(gamma=0.99, n=5)
    out = []
    for _ in range(steps):
        unroll, h0 = collector.collect()
        actor_critic_update(himo, opt_h, unroll, h0, LossWeights(0.0, 0.0), targets, 3, "xent", 0.01)
        with Tape():
            loss = plain_ac_loss(plain, unroll, h0, 0.99, 5, 0.01)
        opt_p.step(backward(loss, opt_p.params))
        out.append(_same_params(himo, plain))
    return out


def q_baseline_trajectory(steps: int = 10, seed: int = 0, interval: int = 4) -> list[bool]:
    """Per step: does the alpha=beta=0 Q learner match the plain double-Q learner bitwise?"""
    from himo.autodiff import Adam, Tape, backward
    from himo.envs import PortalBatch
    from himo.learning import LossWeights, QLearner, ReplayBuffer, RolloutCollector, TargetConfig
    from himo.nets import NetConfig, init_params

    cfg = NetConfig(obs_dim=PortalBatch(1, 0).obs_dim, state_size=8, encoder_hidden=8,
                    phi_hidden=6, phi_hat_hidden=6, value_hidden=6, d=3, n_actions=4,
                    head_kind="action_value")
    himo, plain = init_params(cfg, seed), init_params(cfg, seed)
    plain_target = plain.copy()
    collector = RolloutCollector(PortalBatch(3, seed + 1), himo, 8, seed + 2)
    targets = TargetConfig(gamma=0.99, n=5, lam=0.7, target_update_interval=interval)
    learner = QLearner(himo, LossWeights(0.0, 0.0), targets, 3, 1e-3, "squared")
    replay = ReplayBuffer(50, seed + 3)
    opt_p = Adam(plain.parameters(), learning_rate=1e-3)
    out = []
    for step in range(steps):
        unroll, h0 = collector.collect(0.3)
        replay.add_unroll(unroll, h0)
        batch, h0s = replay.sample(4)
        learner.update_on(batch, h0s)
        with Tape():
            loss = plain_q_loss(plain, plain_target, batch, h0s, 0.99, 5, 0.7, 1e-3)
        opt_p.step(backward(loss, opt_p.params))
        if (step + 1) % interval == 0:
            plain_target = plain.copy()
        out.append(_same_params(himo, plain))
    return out
