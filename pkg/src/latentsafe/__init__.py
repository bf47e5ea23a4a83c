"""CVaR-constrained soft actor-critic on a learned latent world model, in plain numpy."""

from .agent import Agent, Multipliers, TrainConfig, TrainingDivergence, run_episode, train_epoch
from .config import RunConfig, load_config, parse_config
from .core import (
    Episode,
    ReplayBuffer,
    RiskBudget,
    TransitionStep,
    derive_rng,
    discounted_return,
    push_episode,
    sample_sequence_batch,
)
from .critic import GaussianCostDistribution, SafetyCritic, cvar, fit_tabular_critic, w2_distance_gaussian
from .diffusion import DiffusionSchedule, select_candidate
from .harness import evaluate, sweep, train_run
from .metrics import EpisodeLog, MetricsReport, build_report
from .world_model import LatentState, WorldModel

__version__ = "0.1.0"
