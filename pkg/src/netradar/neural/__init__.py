"""Actor-critic networks and the sequential-selection PPO trainer."""

from netradar.neural.nets import (
    ACTIVATIONS,
    ActorNet,
    Adam,
    CriticNet,
    DenseNet,
    GradCheckReport,
    MASKED_LOGIT,
    NeuralError,
    actor_forward,
    critic_forward,
    grad_check,
    masked_log_softmax,
)
from netradar.neural.ppo import (
    NeuralPolicy,
    RolloutBatch,
    TrainRlResult,
    compute_gae,
    load_checkpoint,
    ppo_update,
    rollout,
    save_checkpoint,
    train_rl,
)

__all__ = [
    "ACTIVATIONS",
    "ActorNet",
    "Adam",
    "CriticNet",
    "DenseNet",
    "GradCheckReport",
    "MASKED_LOGIT",
    "NeuralError",
    "NeuralPolicy",
    "RolloutBatch",
    "TrainRlResult",
    "actor_forward",
    "compute_gae",
    "critic_forward",
    "grad_check",
    "load_checkpoint",
    "masked_log_softmax",
    "ppo_update",
    "rollout",
    "save_checkpoint",
    "train_rl",
]
