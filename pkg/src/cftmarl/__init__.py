"""Counterfactual-thinking multi-agent actor-critic agents and DDPG opponents."""

from ._kernels import BACKEND
from .cft import CftAgent, posterior_regrets, softmin
from .config import RunConfig
from .ddpg import DdpgAgent
from .marl import GameSpec, JointTransition, ReplayBuffer, shape_rewards, td_target

__version__ = "0.1.0"

__all__ = ["BACKEND", "CftAgent", "DdpgAgent", "GameSpec", "JointTransition",
           "ReplayBuffer", "RunConfig", "posterior_regrets", "shape_rewards",
           "softmin", "td_target"]
