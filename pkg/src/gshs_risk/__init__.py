"""Rare-event collision risk for stochastic hybrid systems.

The package estimates the probability that a stochastic hybrid system
reaches a target set before a horizon, using interacting particles with
fixed-assignment splitting, and applies it to two automated vehicles
changing lanes with and without situation awareness.
"""

from .lane_change import LaneChangeScenario, ScenarioConfig
from .shs import GshsModel, HybridState, ShsModel, transform_gshs_to_shs
from .splitting import (EstimationResult, LevelSchedule, estimate_reach_probability,
                        fixed_assignment_split, monte_carlo_estimate)
from .ttc import MotionSample, TtcOutcome, time_to_collision

__all__ = [
    "EstimationResult", "GshsModel", "HybridState", "LaneChangeScenario", "LevelSchedule",
    "MotionSample", "ScenarioConfig", "ShsModel", "TtcOutcome", "estimate_reach_probability",
    "fixed_assignment_split", "monte_carlo_estimate", "time_to_collision", "transform_gshs_to_shs",
]
