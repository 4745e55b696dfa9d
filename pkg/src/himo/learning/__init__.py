from .agents import (
    EpsilonSchedule,
    LossReport,
    QLearner,
    RolloutCollector,
    act_step,
    actor_critic_losses,
    actor_critic_update,
    epsilon_greedy,
    q_learning_losses,
    sample_actions,
)
from .losses import (
    MODEL_LOSSES,
    LossWeights,
    combined_loss,
    masked_mean,
    model_loss_squared,
    model_loss_xent,
    policy_entropy,
    value_loss,
)
from .replay import ReplayBuffer
from .targets import (
    TargetConfig,
    monte_carlo_return,
    nstep_target,
    q_lambda_target,
    value_rescale_g,
    value_rescale_g_inverse,
)

__all__ = [
    "EpsilonSchedule", "LossReport", "LossWeights", "MODEL_LOSSES", "QLearner", "ReplayBuffer",
    "RolloutCollector", "TargetConfig", "act_step", "actor_critic_losses", "actor_critic_update",
    "combined_loss", "epsilon_greedy", "masked_mean", "model_loss_squared", "model_loss_xent",
    "monte_carlo_return", "nstep_target", "policy_entropy", "q_learning_losses",
    "q_lambda_target", "sample_actions", "value_loss", "value_rescale_g",
    "value_rescale_g_inverse",
]
