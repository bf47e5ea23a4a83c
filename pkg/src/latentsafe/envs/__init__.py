from .hazard import HazardGridConfig, HazardGridWorld
from .nav import (
    EgoState,
    MovingObstacle,
    NavEnv,
    NavWorld,
    NavWorldConfig,
    PRESETS,
    nav_reset,
    nav_step,
    preset,
    time_to_collision,
)
from .rewards import (
    composite_reward,
    exploration_reward,
    lane_reward,
    orientation_reward,
    velocity_reward,
)
from .tabular import (
    CostMoments,
    EnumerationBudgetError,
    TabularCMDP,
    bernoulli_mdp,
    chain_mdp,
    exact_cost_distribution,
    random_cmdp,
    tabular_step,
)
