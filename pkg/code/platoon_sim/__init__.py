"""
Platoon-Sim

Deterministic headless simulator for multi-vehicle platooning on 2D road
networks: modular road construction, kinematic vehicles, sensor models,
route-following guidance, pluggable controllers and a fixed-step
traffic environment with CSV logging and frame output.

Author: Platoon-Sim Team
Version: 1.0.0
"""

__version__ = "1.0.0"
__author__ = "Platoon-Sim Team"

from .control import (  # noqa: E402
    AccParams,
    AdaptiveCruiseController,
    DirectiveKind,
    PlatoonDirective,
    PurePursuitController,
    PurePursuitParams,
    SplitController,
    ZeroController,
)
from .dynamics import BicycleParams, ControlInput, KinematicBicycle, VehicleState  # noqa: E402
from .engine import LogConfig, TrafficEnvironment, VehicleStatus  # noqa: E402
from .errors import PlatoonSimError  # noqa: E402
from .geometry import Pose2D, Trajectory, Vec2, dubins_csc  # noqa: E402
from .guidance import RoutePrimitive  # noqa: E402
from .perception import SensorConfig  # noqa: E402
from .road_network import RoadNetwork, SegmentSpec, SegmentType  # noqa: E402
from .scenario import ScenarioSpec, build_environment, parse_scenario  # noqa: E402

__all__ = [
    "AccParams",
    "AdaptiveCruiseController",
    "BicycleParams",
    "ControlInput",
    "DirectiveKind",
    "KinematicBicycle",
    "LogConfig",
    "PlatoonDirective",
    "PlatoonSimError",
    "Pose2D",
    "PurePursuitController",
    "PurePursuitParams",
    "RoadNetwork",
    "RoutePrimitive",
    "ScenarioSpec",
    "SegmentSpec",
    "SegmentType",
    "SensorConfig",
    "SplitController",
    "Trajectory",
    "TrafficEnvironment",
    "Vec2",
    "VehicleState",
    "VehicleStatus",
    "ZeroController",
    "build_environment",
    "create_environment",
    "dubins_csc",
    "parse_scenario",
]


def create_environment(dt=0.05, seed=0, **kwargs):
    """
    Convenience function to create an empty TrafficEnvironment

    Args:
        dt (float): time step in seconds (default: 0.05)
        seed (int): seed of all random streams (default: 0)
        **kwargs: further TrafficEnvironment options

    Returns:
        TrafficEnvironment: environment with an empty road network
    """
    return TrafficEnvironment(dt=dt, seed=seed, **kwargs)
