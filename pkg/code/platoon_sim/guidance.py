"""
Guidance: route primitives and reference trajectories

A route is a queue of primitives, one consumed per road segment entered.
Reference trajectories are concatenated lane centres over a short
horizon of segments; the preprocessor keeps only the part ahead of the
vehicle.

Author: Platoon-Sim Team
Version: 1.0.0
"""

import logging
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable, Optional, Tuple

import numpy as np

from .errors import DeadEnd, EmptyAhead, InvalidPrimitive, NoSuchLane
from .geometry import Pose2D, Trajectory
from .road_network import RoadNetwork, RoadSegment, SegmentType

logger = logging.getLogger(__name__)

__all__ = [
    "RoutePrimitive",
    "RouteState",
    "Trajectory",
    "advance_route",
    "build_reference",
    "crop_ahead",
    "preprocess",
    "resolve_exit",
]


class RoutePrimitive(Enum):
    """High-level route instruction executed on one segment"""
    STRAIGHT = 'straight'
    LEFT_TURN = 'left_turn'
    RIGHT_TURN = 'right_turn'
    LEFT = 'left'
    RIGHT = 'right'

    @classmethod
    def parse(cls, value) -> "RoutePrimitive":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise InvalidPrimitive(f"unknown route primitive {value!r}") from None

    @property
    def is_turn(self) -> bool:
        return self in (RoutePrimitive.LEFT_TURN, RoutePrimitive.RIGHT_TURN)

    @property
    def is_lane_change(self) -> bool:
        return self in (RoutePrimitive.LEFT, RoutePrimitive.RIGHT)


_RELATION = {
    RoutePrimitive.LEFT_TURN: 'left',
    RoutePrimitive.RIGHT_TURN: 'right',
}


@dataclass(frozen=True)
class RouteState:
    """Where a vehicle is on its route

    Attributes:
        pending: primitives not consumed yet
        current_segment: segment the vehicle is on
        current_lane: travel lane on the current segment
        last_consumed_segment: segment whose entry consumed the last primitive
        entry_port, exit_port: ports of the current segment traversal
        active: primitive consumed for the current segment
        lane_change_from: source lane of a lane change not yet approved
        consumed: number of primitives consumed so far
    """
    pending: Tuple[RoutePrimitive, ...] = ()
    current_segment: Optional[str] = None
    current_lane: int = 1
    last_consumed_segment: Optional[str] = None
    entry_port: Optional[str] = None
    exit_port: Optional[str] = None
    active: Optional[RoutePrimitive] = None
    lane_change_from: Optional[int] = None
    consumed: int = 0

    @classmethod
    def from_primitives(cls, primitives: Iterable, lane: int = 1) -> "RouteState":
        return cls(pending=tuple(RoutePrimitive.parse(p) for p in primitives), current_lane=lane)

    def peek(self, k: int = 0) -> RoutePrimitive:
        return self.pending[k] if k < len(self.pending) else RoutePrimitive.STRAIGHT


def resolve_exit(segment: RoadSegment, entry: str, primitive: RoutePrimitive,
                 strict: bool = True) -> str:
    """Exit port of a segment traversal selected by a primitive

    Raises:
        InvalidPrimitive: turn primitive outside an intersection (strict only)
    """
    is_intersection = segment.spec.segment_type == SegmentType.INTERSECTION
    if primitive.is_turn:
        if is_intersection:
            exit = segment.exit_towards(entry, _RELATION[primitive])
            if exit is not None:
                return exit
        if strict:
            raise InvalidPrimitive(
                f"'{primitive.value}' is only valid on an intersection, segment {segment.id} "
                f"is {segment.spec.segment_type.name.lower()}")
    return segment.default_exit(entry)


def advance_route(route: RouteState, new_segment: str, entry_port: str = 'start',
                  network: Optional[RoadNetwork] = None) -> RouteState:
    """Consume one primitive on entering a segment

    An empty queue behaves as Straight. Left/Right shift the travel lane by
    one immediately (the controller drives the change afterwards). With a
    network, the exit port of the new segment is resolved as well.
    """
    if new_segment == route.last_consumed_segment:
        raise ValueError(f"segment '{new_segment}' was already entered")
    primitive = route.peek(0)
    pending = route.pending[1:]
    lane, lane_change_from = route.current_lane, None
    if primitive == RoutePrimitive.LEFT:
        lane_change_from, lane = lane, lane + 1
    elif primitive == RoutePrimitive.RIGHT:
        lane_change_from, lane = lane, lane - 1
    exit_port = None
    if network is not None:
        exit_port = resolve_exit(network.segment(new_segment), entry_port, primitive, strict=False)
    logger.debug("route enters %s via %s with %s (lane %d)", new_segment, entry_port,
                 primitive.value, lane)
    return replace(route, pending=pending, current_segment=new_segment, current_lane=lane,
                   last_consumed_segment=new_segment, entry_port=entry_port,
                   exit_port=exit_port, active=primitive, lane_change_from=lane_change_from,
                   consumed=route.consumed + 1)


def build_reference(route: RouteState, network: RoadNetwork, horizon_segments: int = 2,
                    spacing: float = 1.0, lane: Optional[int] = None,
                    strict: bool = True) -> Trajectory:
    """Reference trajectory over the current and upcoming segments

    Upcoming segments keep the current lane and take their exit from the
    pending primitives; lane changes are not previewed. The result is
    flagged dead_end when the road ends before the horizon.

    Raises:
        NoSuchLane: the lane does not exist on the current segment
        InvalidPrimitive: turn primitive consumed outside an intersection
        DeadEnd: no trajectory could be built at all
    """
    lane = route.current_lane if lane is None else lane
    seg = network.segment(route.current_segment)
    if not 1 <= lane <= seg.spec.lanes:
        raise NoSuchLane(f"lane {lane} does not exist on {seg.id} (lanes 1..{seg.spec.lanes})")
    entry = route.entry_port or seg.default_entry()
    primitive = route.active or RoutePrimitive.STRAIGHT
    exit = resolve_exit(seg, entry, primitive, strict=strict)

    parts = [network.lane_center(seg.id, lane, spacing, entry, exit)]
    dead_end = False
    for k in range(max(0, horizon_segments - 1)):
        peer = network.peer_of(seg.id, exit)
        if peer is None:
            dead_end = True
            break
        seg = network.segment(peer[0])
        entry = peer[1]
        exit = resolve_exit(seg, entry, route.peek(k), strict=False)
        parts.append(network.lane_center(seg.id, lane, spacing, entry, exit))
    traj = Trajectory.concatenate(parts, dead_end=dead_end)
    if len(traj) == 0:
        raise DeadEnd(f"no reference trajectory from {route.current_segment}")
    return traj


def crop_ahead(traj: Trajectory, pose: Pose2D, length: float) -> Trajectory:
    """Window of `length` meters starting at the point nearest to the pose"""
    return traj.window(traj.nearest_index(pose.x, pose.y), length)


def preprocess(traj: Trajectory, vehicle_pose: Pose2D) -> Trajectory:
    """Maximal suffix lying strictly ahead of the vehicle, arc_length from 0

    Raises:
        EmptyAhead: no point lies ahead of the vehicle
    """
    if len(traj) == 0:
        raise EmptyAhead("empty trajectory")
    c, s = np.cos(vehicle_pose.theta), np.sin(vehicle_pose.theta)
    ahead = c * (traj.x - vehicle_pose.x) + s * (traj.y - vehicle_pose.y) > 0
    behind = np.flatnonzero(~ahead)
    start = int(behind[-1]) + 1 if behind.size else 0
    if start >= len(traj):
        raise EmptyAhead(f"vehicle at ({vehicle_pose.x:.2f}, {vehicle_pose.y:.2f}) "
                         "has passed the end of its reference")
    return traj.suffix(start)
