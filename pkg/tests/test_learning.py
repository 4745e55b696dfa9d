import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from himo import autodiff as ad
from himo.autodiff import Adam, Parameter, Tape, Tensor, backward
from himo.envs import PortalBatch
from himo.learning import (
    EpsilonSchedule,
    LossWeights,
    QLearner,
    ReplayBuffer,
    RolloutCollector,
    TargetConfig,
    actor_critic_losses,
    actor_critic_update,
    combined_loss,
    epsilon_greedy,
    masked_mean,
    model_loss_squared,
    model_loss_xent,
    monte_carlo_return,
    nstep_target,
    q_lambda_target,
    sample_actions,
    value_loss,
    value_rescale_g,
    value_rescale_g_inverse,
)
from himo.nets import forward_unroll, init_params

from helpers import (
    ac_baseline_trajectory,
    analytic_grad,
    partition_grad_norms,
    q_baseline_trajectory,
    random_unroll,
    tiny_config,
)

# ---------------------------------------------------------------- losses


def test_value_loss_examples():
    assert float(value_loss(Tensor([1.0, 2.0]), np.array([1.0, 2.0])).data) == 0.0
    assert float(value_loss(Tensor([1.0, 3.0]), np.zeros(2)).data) == 2.5
    a = float(value_loss(Tensor([0.5, -1.0]), np.zeros(2)).data)
    b = float(value_loss(Tensor([1.0, -2.0]), np.zeros(2)).data)
    assert b == 4 * a


def test_value_loss_mask_and_empty_mask():
    v = Tensor([1.0, 3.0, 100.0])
    assert float(value_loss(v, np.zeros(3), [1, 1, 0]).data) == 2.5
    assert float(value_loss(v, np.zeros(3), [0, 0, 0]).data) == 0.0
    assert float(masked_mean(v, np.zeros(3)).data) == 0.0
    with pytest.raises(ValueError):
        value_loss(v, np.zeros(2))


def test_value_loss_target_is_constant():
    v = Parameter(np.array([0.5, -0.5]))
    U = Tensor(np.array([1.0, 1.0]))
    g = analytic_grad(lambda: value_loss(v, U), [v])[v]
    np.testing.assert_allclose(g, (v.data - U.data) / 2)


def test_model_loss_squared_examples():
    phi = np.array([[1.0, 0.0, 0.0]])
    assert float(model_loss_squared(phi, Tensor(phi)).data) == 0.0
    assert float(model_loss_squared(phi, Tensor(np.zeros((1, 3)))).data) == 1.0


def test_model_loss_squared_gradients():
    rng = np.random.default_rng(0)
    theta2 = Parameter(rng.normal(size=(4, 3)))
    eta2 = Parameter(rng.normal(size=(4, 3)))
    mask = np.array([1, 1, 0, 1])

    def loss():
        return model_loss_squared(ad.tanh(theta2), eta2, mask)

    grads = analytic_grad(loss, [theta2, eta2])
    assert np.all(grads[theta2] == 0.0)
    expect = 2 * (eta2.data - np.tanh(theta2.data)) / 3 * mask[:, None]
    np.testing.assert_allclose(grads[eta2], expect, rtol=1e-12)


def test_model_loss_xent_examples():
    rng = np.random.default_rng(1)
    phi = rng.normal(size=(5, 3))
    p = np.exp(phi) / np.exp(phi).sum(-1, keepdims=True)
    entropy = float(np.mean(-(p * np.log(p)).sum(-1)))
    assert abs(float(model_loss_xent(phi, Tensor(phi)).data) - entropy) < 1e-12
    # equality is the minimum over phi_hat
    for _ in range(5):
        other = Tensor(phi + rng.normal(size=phi.shape))
        assert float(model_loss_xent(phi, other).data) >= entropy
    hat = rng.normal(size=(1, 3))
    p_hat = np.exp(hat) / np.exp(hat).sum()
    want = -np.sum(np.log(p_hat)) / 3
    assert abs(float(model_loss_xent(np.zeros((1, 3)), Tensor(hat)).data) - want) < 1e-12
    shifted = float(model_loss_xent(phi[:1], Tensor(hat + 4.2)).data)
    assert abs(shifted - float(model_loss_xent(phi[:1], Tensor(hat)).data)) < 1e-12
    with pytest.raises(ValueError):
        model_loss_xent(np.zeros((2, 1)), Tensor(np.zeros((2, 1))))


def test_combined_loss_examples():
    w = LossWeights(0.25, 0.5)
    assert float(combined_loss(Tensor(1.0), Tensor(2.0), Tensor(4.0), w).data) == 3.5
    base = combined_loss(Tensor(1.37), Tensor(2.0), Tensor(4.0), LossWeights(0.0, 0.0))
    assert float(base.data) == 1.37


def test_combined_loss_baseline_is_lv_graph():
    v = Parameter(np.array([0.4, -0.2]))
    lv = lambda: value_loss(v, np.zeros(2))  # noqa: E731
    g_plain = analytic_grad(lv, [v])[v]
    g_comb = analytic_grad(lambda: combined_loss(lv(), ad.sum_(v * 1e9), ad.sum_(v * -1e9),
                                                 LossWeights(0, 0)), [v])[v]
    assert g_plain.tobytes() == g_comb.tobytes()


@settings(max_examples=50, deadline=None)
@given(lv=st.floats(0, 10), lvp=st.floats(0, 10), lm=st.floats(0, 10),
       a=st.floats(0, 2), b=st.floats(0, 2))
def test_combined_loss_is_linear_in_weights(lv, lvp, lm, a, b):
    total = float(combined_loss(Tensor(lv), Tensor(lvp), Tensor(lm), LossWeights(a, b)).data)
    assert abs(total - (lv + a * lvp + b * lm)) <= 1e-12 * max(1.0, abs(total))
    # partial derivatives w.r.t. the weights are the loss values
    wa, wb = Parameter(np.array(a)), Parameter(np.array(b))
    g = analytic_grad(lambda: Tensor(lv) + wa * lvp + wb * lm, [wa, wb])
    assert float(g[wa]) == lvp and float(g[wb]) == lm


def test_loss_weights_validation():
    assert LossWeights(0, 0).is_baseline
    with pytest.raises(ValueError):
        LossWeights(-0.1, 0.5)


# ---------------------------------------------------------------- targets


def test_nstep_examples():
    U = nstep_target(np.zeros(3), np.ones(3), np.full(4, 5.0), 3, 1.0)
    assert U[0] == 5.0
    U = nstep_target(np.ones(3), np.ones(3), np.zeros(4), 3, 0.5)
    assert U[0] == 1.75
    U = nstep_target(np.array([2.0, 7.0, 7.0]), np.array([0.0, 1.0, 1.0]), np.full(4, 99.0), 3, 0.9)
    assert U[0] == 2.0


def test_nstep_truncates_at_unroll_end():
    r = np.array([1.0, 2.0, 3.0])
    v = np.array([0.0, 0.0, 0.0, 10.0])
    U = nstep_target(r, np.ones(3), v, 5, 1.0)
    np.testing.assert_array_equal(U, [16.0, 15.0, 13.0])


def test_nstep_batched_matches_columns():
    rng = np.random.default_rng(0)
    r, c = rng.normal(size=(6, 3)), (rng.random((6, 3)) > 0.2).astype(float)
    v = rng.normal(size=(7, 3))
    U = nstep_target(r, c, v, 3, 0.9)
    for b in range(3):
        np.testing.assert_array_equal(U[:, b], nstep_target(r[:, b], c[:, b], v[:, b], 3, 0.9))


def test_rescale_examples():
    assert value_rescale_g(0.0) == 0.0
    assert abs(value_rescale_g(3.0) - 1.003) < 1e-12
    grid = np.linspace(-100, 100, 20001)
    assert np.max(np.abs(value_rescale_g_inverse(value_rescale_g(grid)) - grid)) < 1e-10


@settings(max_examples=200)
@given(x=st.floats(-1e6, 1e6), eps=st.sampled_from([0.0, 1e-3, 1e-2]))
def test_rescale_inverse_property(x, eps):
    back = float(value_rescale_g_inverse(value_rescale_g(x, eps), eps))
    assert abs(back - x) <= 1e-9 * max(1.0, abs(x))


def test_rescale_is_odd_and_increasing():
    x = np.linspace(-50, 50, 1001)
    y = value_rescale_g(x)
    assert np.all(np.diff(y) > 0)
    np.testing.assert_array_equal(value_rescale_g(-x), -y)


def _q_arrays(seed, L=5, B=2, A=3):
    rng = np.random.default_rng(seed)
    return (rng.normal(size=(L, B)), np.ones((L, B)), rng.normal(size=(L + 1, B, A)),
            rng.normal(size=(L + 1, B, A)))


def test_q_lambda_zero_is_one_step():
    r, c, qt, qo = _q_arrays(0)
    U = q_lambda_target(r, c, qt, qo, 0.0, 5, 0.9)
    a = qo.argmax(-1)
    boot = value_rescale_g_inverse(np.take_along_axis(qt, a[..., None], -1)[..., 0])
    np.testing.assert_allclose(U, value_rescale_g(r + 0.9 * boot[1:]), rtol=1e-14)


def test_q_lambda_without_rescale_matches_nstep_on_max():
    r, c, qt, _ = _q_arrays(1)
    U = q_lambda_target(r, c, qt, qt, 0.0, 5, 0.9, use_rescale=False)
    np.testing.assert_allclose(U, nstep_target(r, c, qt.max(-1), 1, 0.9), rtol=1e-14)


def test_q_lambda_single_step_hand_value():
    qt = np.array([[0.0], [value_rescale_g(2.0)]])
    U = q_lambda_target(np.array([3.0]), np.array([1.0]), qt, qt, 0.7, 5, 1.0)
    assert abs(U[0] - value_rescale_g(5.0)) < 1e-12


def test_q_lambda_one_is_monte_carlo_plus_bootstrap():
    rng = np.random.default_rng(3)
    r = rng.normal(size=5)
    c = np.array([1.0, 1.0, 1.0, 0.0, 1.0])
    qt = rng.normal(size=(6, 2))
    U = q_lambda_target(r, c, qt, qt, 1.0, 10, 0.95, use_rescale=False)
    mc = monte_carlo_return(r, c, 0.95, bootstrap=qt[5].max())
    np.testing.assert_allclose(U, mc, rtol=1e-13)


def test_q_lambda_uses_online_argmax():
    qt = np.array([[[0.0, 0.0]], [[10.0, -4.0]]])
    qo = np.array([[[0.0, 0.0]], [[0.0, 1.0]]])
    U = q_lambda_target(np.zeros((1, 1)), np.ones((1, 1)), qt, qo, 0.0, 1, 1.0, use_rescale=False)
    assert U[0, 0] == -4.0


def test_q_lambda_weights_sum_to_one():
    # constant returns in every horizon give back the constant
    L, B = 6, 1
    qt = np.full((L + 1, B, 2), 0.0)
    U = q_lambda_target(np.zeros((L, B)), np.zeros((L, B)), qt, qt, 0.6, 4, 0.9, use_rescale=False)
    np.testing.assert_array_equal(U, 0.0)
    qt = np.full((L + 1, B, 2), 3.0)
    U = q_lambda_target(np.zeros((L, B)), np.ones((L, B)), qt, qt, 0.6, 4, 1.0, use_rescale=False)
    np.testing.assert_allclose(U, 3.0, rtol=1e-14)


def test_target_config_errors():
    assert TargetConfig().errors() == []
    assert len(TargetConfig(gamma=0.0, n=0, lam=2.0, target_update_interval=0).errors()) == 4


# ---------------------------------------------------------------- actor-critic


def _ac_setup(seed=0, L=6):
    params = init_params(tiny_config(), seed)
    unroll = random_unroll(seed + 1, L=L, start_prob=0.1)
    return params, unroll, np.zeros((3, 5))


def test_ac_loss_decomposition():
    params, unroll, h0 = _ac_setup()
    w = LossWeights(0.25, 0.5)
    with Tape():
        total, parts, _ = actor_critic_losses(params, unroll, h0, w, TargetConfig(n=4), 2, "xent",
                                              entropy_coef=0.0)
    manual = (float(parts["L_v"].data) + 0.25 * float(parts["L_vplus"].data)
              + 0.5 * float(parts["L_model"].data) + float(parts["pg"].data))
    assert abs(float(total.data) - manual) < 1e-12


def test_policy_term_does_not_touch_hindsight_partitions():
    params, unroll, h0 = _ac_setup()

    def pg():
        _, parts, _ = actor_critic_losses(params, unroll, h0, LossWeights(), TargetConfig(), 2)
        return parts["pg"]

    norms = partition_grad_norms(params, pg)
    assert norms["theta1"] == 0.0 and norms["theta2"] == 0.0
    assert norms["pi"] > 0


def test_ac_targets_are_constant():
    # the critic gradient equals the gradient of 0.5 (v - U)^2 with U frozen beforehand
    params, unroll, h0 = _ac_setup(2)
    out = forward_unroll(params, unroll, h0, 2)
    U = nstep_target(unroll.rewards, unroll.discounts, out.v_m.data, 20, 0.99)

    def lib():
        _, parts, _ = actor_critic_losses(params, unroll, h0, LossWeights(0, 0), TargetConfig(), 2)
        return parts["L_v"]

    def frozen():
        v = forward_unroll(params, unroll, h0, 2).v_m
        return value_loss(v[:unroll.length], U)

    a = analytic_grad(lib, params.parameters())
    b = analytic_grad(frozen, params.parameters())
    assert all(a[p].tobytes() == b[p].tobytes() for p in params.parameters())


def test_ac_all_masks_invalid_still_updates_critic():
    params, unroll, h0 = _ac_setup(3, L=4)
    before = {k: v.copy() for k, v in params.named_arrays().items()}
    opt = Adam(params.parameters(), learning_rate=1e-2)
    rep = actor_critic_update(params, opt, unroll, h0, LossWeights(0.25, 0.5), TargetConfig(), 6)
    assert rep.L_vplus == 0.0 and rep.L_model == 0.0 and rep.L_v > 0
    after = params.named_arrays()
    assert not np.array_equal(before["eta1/l0_w"], after["eta1/l0_w"])
    assert np.array_equal(before["theta1/l0_w"], after["theta1/l0_w"])


def test_ac_baseline_equivalence():
    assert all(ac_baseline_trajectory(10))


def test_q_baseline_equivalence():
    assert all(q_baseline_trajectory(10))


def test_ac_himo_differs_from_baseline():
    params_a, unroll, h0 = _ac_setup(4)
    params_b = params_a.copy()
    for params, w in ((params_a, LossWeights(0, 0)), (params_b, LossWeights(0.25, 0.5))):
        actor_critic_update(params, Adam(params.parameters()), unroll, h0, w, TargetConfig(), 2)
    assert not np.array_equal(params_a.named_arrays()["eta2/l0_w"],
                              params_b.named_arrays()["eta2/l0_w"])


def test_zero_advantage_policy_gradient_vanishes_in_expectation():
    """Rewards and observations independent of actions: E[grad log pi * adv] = 0."""
    params = init_params(tiny_config(), 7)
    pi = params.parameters(["pi"])
    rng = np.random.default_rng(8)
    samples = []
    for i in range(1000):
        unroll = random_unroll(1000 + i, L=4, B=2, start_prob=0.0)
        out = forward_unroll(params, unroll, np.zeros((2, 5)), 2)
        unroll.actions = sample_actions(out.policy_logits.data[:4].reshape(8, -1), rng).reshape(4, 2)
        unroll.rewards = rng.uniform(-1, 1, size=(4, 2))

        def pg():
            _, parts, _ = actor_critic_losses(params, unroll, np.zeros((2, 5)), LossWeights(0, 0),
                                              TargetConfig(n=4), 2, entropy_coef=0.0)
            return parts["pg"]

        g = analytic_grad(pg, pi)
        samples.append(np.concatenate([g[p].ravel() for p in pi]))
    G = np.array(samples)
    mean = G.mean(axis=0)
    se2 = G.var(axis=0, ddof=1) / len(G)
    assert np.linalg.norm(mean) < 3 * np.sqrt(se2.sum())


# ---------------------------------------------------------------- Q-learning


def _q_setup(interval=400):
    params = init_params(tiny_config("action_value"), 0)
    learner = QLearner(params, LossWeights(0.01, 1.0),
                       TargetConfig(n=3, target_update_interval=interval), 2, 1e-3)
    return params, learner


def test_q_empty_replay_is_noop():
    params, learner = _q_setup()
    before = params.named_arrays()["eta1/l0_w"].copy()
    assert learner.update(ReplayBuffer(4), 2) is None
    assert learner.learner_steps == 0
    assert np.array_equal(before, params.named_arrays()["eta1/l0_w"])


def test_q_target_syncs_on_interval():
    params, learner = _q_setup(400)
    unroll = random_unroll(0, L=3, B=2, start_prob=0.0)
    h0 = np.zeros((2, 5))
    synced = []
    for _ in range(800):
        before = learner.target_params.named_arrays()["eta1/l0_w"].copy()
        learner.update_on(unroll, h0)
        if not np.array_equal(before, learner.target_params.named_arrays()["eta1/l0_w"]):
            synced.append(learner.learner_steps)
    assert synced == [400, 800]
    # right after a sync the two networks agree on a probe batch
    probe = random_unroll(5, L=4, B=3)
    a = forward_unroll(params, probe, np.zeros((3, 5)), 2).v_m.data
    b = forward_unroll(learner.target_params, probe, np.zeros((3, 5)), 2).v_m.data
    assert a.tobytes() == b.tobytes()


def test_q_update_reports_all_terms():
    params, learner = _q_setup()
    replay = ReplayBuffer(10, 0)
    replay.add_unroll(random_unroll(1, L=6, B=3), np.zeros((3, 5)))
    rep = learner.update(replay, 2)
    assert rep.L_v > 0 and rep.L_vplus > 0 and rep.L_model > 0


# ---------------------------------------------------------------- replay and acting


def test_replay_ring_and_whole_sequences():
    buf = ReplayBuffer(3, seed=0)
    seqs = []
    for i in range(5):
        u = random_unroll(i, L=4, B=1)
        buf.add_unroll(u, np.full((1, 5), float(i)))
        seqs.append(u)
    assert len(buf) == 3
    batch, h0 = buf.sample(3)
    kept = {2.0, 3.0, 4.0}
    assert set(h0[:, 0]) == kept
    for b in range(3):
        i = int(h0[b, 0])
        np.testing.assert_array_equal(batch.obs[:, b], seqs[i].obs[:, 0])
        np.testing.assert_array_equal(batch.rewards[:, b], seqs[i].rewards[:, 0])


def test_replay_sampling_is_seed_deterministic():
    def draw(seed):
        buf = ReplayBuffer(10, seed)
        for i in range(6):
            buf.add_unroll(random_unroll(i, L=2, B=1), np.full((1, 5), float(i)))
        return [buf.sample(3)[1][:, 0].tolist() for _ in range(4)]

    assert draw(1) == draw(1)


def test_replay_state_roundtrip():
    buf = ReplayBuffer(4, 0)
    for i in range(6):
        buf.add_unroll(random_unroll(i, L=2, B=1), np.full((1, 5), float(i)))
    other = ReplayBuffer(4, 0)
    other.load_state_arrays(buf.state_arrays())
    other.rng.bit_generator.state = buf.rng.bit_generator.state
    a, b = buf.sample(2), other.sample(2)
    np.testing.assert_array_equal(a[0].obs, b[0].obs)
    buf.add_unroll(random_unroll(9, L=2, B=1), np.full((1, 5), 9.0))
    other.add_unroll(random_unroll(9, L=2, B=1), np.full((1, 5), 9.0))
    assert sorted(x[5:] for x in buf.state_arrays()) == sorted(x[5:] for x in other.state_arrays())


def test_epsilon_schedule():
    s = EpsilonSchedule(1.0, 0.05, 100)
    assert s(0) == 1.0 and s(100) == 0.05 and s(1000) == 0.05
    assert abs(s(50) - 0.525) < 1e-15
    assert s(99) > 0.05


def test_epsilon_greedy_extremes():
    rng = np.random.default_rng(0)
    q = rng.normal(size=(500, 4))
    np.testing.assert_array_equal(epsilon_greedy(q, 0.0, rng), q.argmax(-1))
    counts = np.bincount(epsilon_greedy(q, 1.0, rng), minlength=4)
    assert counts.min() > 80


def test_sample_actions_frequencies():
    rng = np.random.default_rng(0)
    logits = np.tile(np.log([0.1, 0.2, 0.7]), (20000, 1))
    freq = np.bincount(sample_actions(logits, rng), minlength=3) / 20000
    np.testing.assert_allclose(freq, [0.1, 0.2, 0.7], atol=0.015)


def test_collector_carries_state_across_unrolls():
    env = PortalBatch(3, 0)
    from himo.nets import NetConfig

    cfg = NetConfig(obs_dim=env.obs_dim, state_size=6, encoder_hidden=6, phi_hidden=4,
                    phi_hat_hidden=4, value_hidden=4, policy_hidden=4, n_actions=4, policy=True)
    params = init_params(cfg, 0)
    col = RolloutCollector(env, params, 5, 1)
    u1, h0_1 = col.collect()
    u2, h0_2 = col.collect()
    u1.validate()
    assert np.all(h0_1 == 0.0) and u1.episode_start[0].all()
    out = forward_unroll(params, u1, h0_1, 2)
    np.testing.assert_allclose(out.h_carry, h0_2, rtol=1e-12, atol=1e-14)
    np.testing.assert_array_equal(u1.obs[-1], u2.obs[0])
    np.testing.assert_array_equal(u1.episode_start[-1], u2.episode_start[0])
    assert col.env_steps == 30
