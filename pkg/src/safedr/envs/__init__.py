from .chain import ChainSpec, ChainPair, build_chain
from .random_pair import RandomCmdpSpec, AssumptionProbe, RandomPair, build_random_pair
from .pointgoal import PointGoalSpec, PointGoalParams, make_pointgoal_family, step_pointgoal
from .cartpole import CartpoleSpec, CartpoleParams, make_cartpole_family, step_cartpole, upsilon_heatmap

__all__ = [
    "ChainSpec", "ChainPair", "build_chain",
    "RandomCmdpSpec", "AssumptionProbe", "RandomPair", "build_random_pair",
    "PointGoalSpec", "PointGoalParams", "make_pointgoal_family", "step_pointgoal",
    "CartpoleSpec", "CartpoleParams", "make_cartpole_family", "step_cartpole", "upsilon_heatmap",
]
