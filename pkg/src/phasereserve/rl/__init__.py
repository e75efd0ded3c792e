"""Actor-critic networks, SMDP advantage estimation and PPO training."""

from .networks import Actor, Critic, sample_action, squashed_log_prob
from .ppo import Adam, PPOAgent, PPOConfig, RolloutBuffer, gae_smdp
from .training import TrainResult, load_checkpoint, save_checkpoint, train, write_curve

__all__ = [
    "Actor", "Critic", "sample_action", "squashed_log_prob",
    "Adam", "PPOAgent", "PPOConfig", "RolloutBuffer", "gae_smdp",
    "TrainResult", "load_checkpoint", "save_checkpoint", "train", "write_curve",
]
