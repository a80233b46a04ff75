"""
Simulated on-board perception

Neighbour detection inside a field-of-view cone and range, body-frame
relative position and velocity, lane association, and optional Gaussian
measurement noise. No occlusion model: every vehicle in the cone is seen.

Author: Platoon-Sim Team
Version: 1.0.0
"""

import math
import zlib
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Tuple

import numpy as np

from .dynamics import VehicleState
from .geometry import Vec2, rotate, to_body_frame


@dataclass(frozen=True)
class SensorConfig:
    """Sensor cone and noise

    Attributes:
        fov: full cone angle centred on the heading, radians
        range: detection range, meters
        noise_sigma_pos: std of the position noise per component
        noise_sigma_vel: std of the velocity noise per component
    """
    fov: float = math.pi
    range: float = 80.0
    noise_sigma_pos: float = 0.0
    noise_sigma_vel: float = 0.0

    def __post_init__(self):
        if not 0 < self.fov <= 2 * math.pi:
            raise ValueError(f"fov must be in (0, 2pi], got {self.fov}")
        if self.range <= 0:
            raise ValueError(f"range must be positive, got {self.range}")
        if self.noise_sigma_pos < 0 or self.noise_sigma_vel < 0:
            raise ValueError("noise sigmas must be >= 0")


@dataclass(frozen=True)
class NeighborMeasurement:
    vehicle_id: str
    rel_position: Vec2
    rel_velocity: Vec2
    distance: float
    lane: Optional[int] = None


@dataclass(frozen=True)
class PerceptionData:
    """Sensor output of one ego vehicle; neighbours sorted by (distance, id)"""
    ego_id: str
    timestamp: float
    neighbors: Tuple[NeighborMeasurement, ...] = ()

    def get(self, vehicle_id: str) -> Optional[NeighborMeasurement]:
        for n in self.neighbors:
            if n.vehicle_id == vehicle_id:
                return n
        return None


@dataclass(frozen=True)
class SensedVehicle:
    """Another vehicle as seen by the sensor model"""
    id: str
    state: VehicleState
    lane: Optional[int] = None


def in_cone(rel: Vec2, distance: float, cfg: SensorConfig) -> bool:
    if distance > cfg.range:
        return False
    if cfg.fov >= 2 * math.pi:
        return True
    return abs(math.atan2(rel.y, rel.x)) <= cfg.fov / 2.0


def _sorted(neighbors: Iterable[NeighborMeasurement]) -> Tuple[NeighborMeasurement, ...]:
    return tuple(sorted(neighbors, key=lambda n: (n.distance, n.vehicle_id)))


def sense(ego_id: str, ego_state: VehicleState, others: Iterable[SensedVehicle],
          cfg: SensorConfig, timestamp: float = 0.0) -> PerceptionData:
    """Noise-free detection of the vehicles inside the ego sensor cone

    Args:
        ego_id: id of the observing vehicle; entries with this id are skipped
        ego_state: observer state
        others: candidate vehicles (parked vehicles already removed)
        cfg: sensor configuration
        timestamp: simulation time stamped on the result

    Returns:
        PerceptionData: neighbours in body frame, sorted by distance then id
    """
    pose = ego_state.pose
    ego_vel = ego_state.velocity
    found = []
    for other in others:
        if other.id == ego_id:
            continue
        rel = to_body_frame(pose, other.state.position)
        distance = rel.norm()
        if not in_cone(rel, distance, cfg):
            continue
        rel_vel = rotate(other.state.velocity - ego_vel, -pose.theta)
        found.append(NeighborMeasurement(other.id, rel, rel_vel, distance, other.lane))
    return PerceptionData(ego_id, timestamp, _sorted(found))


def add_noise(data: PerceptionData, rng: np.random.Generator,
              cfg: SensorConfig) -> PerceptionData:
    """Add i.i.d. zero-mean Gaussian noise to body-frame positions and velocities

    Distance is recomputed from the noisy position and the result re-sorted.
    Zero sigmas return the input unchanged and draw nothing from rng.
    """
    if cfg.noise_sigma_pos == 0 and cfg.noise_sigma_vel == 0:
        return data
    noisy: List[NeighborMeasurement] = []
    for n in data.neighbors:
        dp = rng.normal(0.0, cfg.noise_sigma_pos, 2) if cfg.noise_sigma_pos > 0 else np.zeros(2)
        dv = rng.normal(0.0, cfg.noise_sigma_vel, 2) if cfg.noise_sigma_vel > 0 else np.zeros(2)
        pos = Vec2(n.rel_position.x + float(dp[0]), n.rel_position.y + float(dp[1]))
        vel = Vec2(n.rel_velocity.x + float(dv[0]), n.rel_velocity.y + float(dv[1]))
        noisy.append(replace(n, rel_position=pos, rel_velocity=vel, distance=pos.norm()))
    return replace(data, neighbors=_sorted(noisy))


def vehicle_rng(seed: int, vehicle_id: str) -> np.random.Generator:
    """Independent noise stream per vehicle, derived from the scenario seed"""
    return np.random.default_rng([int(seed), zlib.crc32(vehicle_id.encode('utf-8'))])
