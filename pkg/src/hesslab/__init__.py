"""Battery/ultracapacitor hybrid storage simulation with learned and
rule-based power-split strategies, capacity-fade tracking and optimizers."""

from ._jit import backend
from .config import Config, load_config
from .cycles import DrivingCycle, bundled_cycle, get_cycle, load_cycle
from .harness import (ExperimentSpec, Policy, SimResult, aging_test, calibrate_reward, compare,
                      range_test, simulate, train_qlearning)
from .qlearning import QTable

__version__ = "0.1.0"

__all__ = [
    "Config", "DrivingCycle", "ExperimentSpec", "Policy", "QTable", "SimResult", "aging_test",
    "backend", "bundled_cycle", "calibrate_reward", "compare", "get_cycle", "load_config",
    "load_cycle", "range_test", "simulate", "train_qlearning",
]
