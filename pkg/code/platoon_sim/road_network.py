"""
Road network

Road segments (straight, curved, intersection) with lanes and named
connection points, rigid alignment on connection, automatic CSC
connection of open ends, lane-center trajectories, road queries, the
virtual parking lot configuration and the directed multigraph view.

Lanes are numbered from 1. Lane 1 is the rightmost lane with respect to
the direction of travel; the centre of lane i lies
(i - (lanes + 1) / 2) * lane_width to the left of the segment axis.

Author: Platoon-Sim Team
Version: 1.0.0
"""

import itertools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from .errors import (
    AlreadyConnected,
    Incompatible,
    InvalidSpec,
    UnknownConnectionPoint,
    UnknownLane,
    UnknownSegment,
    WouldTearJoint,
)
from .geometry import (
    ArcComponent,
    CSCPlan,
    LineComponent,
    PathComponent,
    Pose2D,
    Trajectory,
    Vec2,
    compose,
    dubins_csc,
    inverse,
    normalize_angle,
    sample_components,
    to_body_frame,
)

logger = logging.getLogger(__name__)

# Longitudinal slack when deciding whether a point lies on a segment
_ALONG_TOL = 1e-9

# Pose coincidence tolerance for closing a loop without moving anything
_COINCIDENT_POS = 1e-6
_COINCIDENT_ANGLE = 1e-6

PortRef = Tuple[str, str]


class SegmentType(IntEnum):
    """Road segment kinds; the integer codes are the public configuration values"""
    STRAIGHT = 1
    CURVED = 2
    INTERSECTION = 3


@dataclass(frozen=True)
class SegmentSpec:
    """Geometric description of a road segment

    Attributes:
        segment_type: straight, curved or intersection
        length: straight length, or arm length of an intersection
        radius: axis radius of a curved segment
        sweep: signed swept angle of a curved segment, positive turns left
        orientation: heading of the segment placement
        lanes: number of lanes (>= 1)
        lane_width: lane width in meters
        speed_limit: meters/second
        local_origin: placement position (start point, or intersection centre)
    """
    segment_type: SegmentType = SegmentType.STRAIGHT
    length: float = 100.0
    radius: float = 0.0
    sweep: float = 0.0
    orientation: float = 0.0
    lanes: int = 2
    lane_width: float = 4.0
    speed_limit: float = 13.9
    local_origin: Vec2 = Vec2(0.0, 0.0)

    @property
    def placement(self) -> Pose2D:
        return Pose2D(self.local_origin.x, self.local_origin.y, self.orientation)

    @property
    def half_width(self) -> float:
        return self.lanes * self.lane_width / 2.0

    def lane_offset(self, lane: int) -> float:
        """Leftward offset of a lane centre from the segment axis"""
        return (lane - (self.lanes + 1) / 2.0) * self.lane_width

    def validate(self) -> None:
        """Check the segment invariants

        Raises:
            InvalidSpec: on the first violated invariant
        """
        try:
            segment_type = SegmentType(self.segment_type)
        except ValueError:
            raise InvalidSpec(f"unknown segment_type {self.segment_type!r}") from None
        for name in ('length', 'radius', 'sweep', 'orientation', 'lane_width', 'speed_limit'):
            if not math.isfinite(getattr(self, name)):
                raise InvalidSpec(f"{name} must be finite")
        if int(self.lanes) != self.lanes or self.lanes < 1:
            raise InvalidSpec(f"lanes must be an integer >= 1, got {self.lanes}")
        if self.lane_width <= 0:
            raise InvalidSpec(f"lane_width must be positive, got {self.lane_width}")
        if self.speed_limit <= 0:
            raise InvalidSpec(f"speed_limit must be positive, got {self.speed_limit}")
        if segment_type in (SegmentType.STRAIGHT, SegmentType.INTERSECTION) and self.length <= 0:
            raise InvalidSpec(f"length must be positive, got {self.length}")
        if segment_type == SegmentType.CURVED:
            if self.radius <= self.half_width:
                raise InvalidSpec(
                    f"curved radius {self.radius} must exceed lanes*lane_width/2 = {self.half_width}")
            if self.sweep == 0 or abs(self.sweep) > 2 * math.pi:
                raise InvalidSpec(f"curved sweep must be in [-2pi, 2pi] \\ {{0}}, got {self.sweep}")


@dataclass
class ConnectionPoint:
    """Attachment port on a segment boundary; pose heading is the outward normal"""
    owner: str
    name: str
    pose: Pose2D
    peer: Optional[PortRef] = None


@dataclass(frozen=True)
class RoadQuery:
    """Result of a road query at a position"""
    segment: str
    lane: int
    lateral_offset: float
    speed_limit: float
    lane_width: float


@dataclass(frozen=True)
class ParkingLotConfig:
    """Virtual parking lot parameters

    Attributes:
        platoon_size: vehicles per released platoon
        exit_points: open connection points where platoons re-enter
        time_sequence_interval: seconds between members of one platoon
        time_mean: mean release delay in seconds
        time_variance: release delay variance in seconds squared
    """
    platoon_size: int
    exit_points: Tuple[PortRef, ...]
    time_sequence_interval: float = 4.0
    time_mean: float = 5.0
    time_variance: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, 'exit_points', tuple(tuple(p) for p in self.exit_points))
        if int(self.platoon_size) != self.platoon_size or self.platoon_size < 1:
            raise ValueError(f"platoon_size must be an integer >= 1, got {self.platoon_size}")
        if not self.exit_points:
            raise ValueError("parking lot needs at least one exit point")
        if self.time_variance < 0:
            raise ValueError(f"time_variance must be >= 0, got {self.time_variance}")
        if self.time_sequence_interval < 0:
            raise ValueError("time_sequence_interval must be >= 0")


# ---------------------------------------------------------------------------
# Segments
# ---------------------------------------------------------------------------

class RoadSegment(ABC):
    """A road block placed in the world frame

    Geometry is described in the segment's local frame and mapped through
    the placement pose (local_origin, orientation).
    """

    port_names: Tuple[str, ...] = ()

    def __init__(self, segment_id: str, spec: SegmentSpec):
        self.id = segment_id
        self.spec = spec
        self.connection_points: Dict[str, ConnectionPoint] = {
            name: ConnectionPoint(segment_id, name, pose)
            for name, pose in self._port_poses().items()
        }

    # -- placement ---------------------------------------------------------

    @property
    def placement(self) -> Pose2D:
        return self.spec.placement

    def _port_poses(self) -> Dict[str, Pose2D]:
        return {name: compose(self.placement, local)
                for name, local in self.local_ports().items()}

    def move_to(self, placement: Pose2D) -> None:
        self.spec = replace(self.spec, local_origin=placement.position,
                            orientation=placement.theta)
        for name, pose in self._port_poses().items():
            self.connection_points[name].pose = pose

    def connected_ports(self) -> List[str]:
        return [name for name in self.port_names if self.connection_points[name].peer is not None]

    # -- geometry ----------------------------------------------------------

    @abstractmethod
    def local_ports(self) -> Dict[str, Pose2D]:
        """Port poses in the local frame, outward heading"""

    @abstractmethod
    def routes(self) -> List[PortRef]:
        """All (entry, exit) port pairs a vehicle can traverse"""

    @abstractmethod
    def _local_lane_route(self, entry: str, exit: str, lane: int) -> List[PathComponent]:
        """Lane centre components in the local frame for a travel lane"""

    @abstractmethod
    def _local_locate(self, u: float, v: float, margin: float) -> Optional[float]:
        """Leftward lateral coordinate of a local point if it is on the segment"""

    @abstractmethod
    def _local_outlines(self, spacing: float) -> List[np.ndarray]:
        """Drivable-area polygons in the local frame"""

    @abstractmethod
    def _local_markings(self, spacing: float) -> List[np.ndarray]:
        """Lane boundary polylines in the local frame"""

    def default_entry(self) -> str:
        return self.port_names[0]

    def default_exit(self, entry: str) -> str:
        for e, x in self.routes():
            if e == entry:
                return x
        raise UnknownConnectionPoint(f"{self.id} has no route from '{entry}'")

    def exit_towards(self, entry: str, relation: str) -> Optional[str]:
        """Exit port reached from entry by a 'straight', 'left' or 'right' manoeuvre"""
        if relation == 'straight':
            return self.default_exit(entry)
        return None

    def lane_route(self, entry: str, exit: str, lane: int) -> List[PathComponent]:
        """Global-frame lane centre components for a travel lane"""
        if entry not in self.connection_points:
            raise UnknownConnectionPoint(f"{self.id} has no connection point '{entry}'")
        if exit not in self.connection_points:
            raise UnknownConnectionPoint(f"{self.id} has no connection point '{exit}'")
        if (entry, exit) not in self.routes():
            raise UnknownConnectionPoint(f"{self.id} has no route {entry} -> {exit}")
        if not (isinstance(lane, (int, np.integer)) and 1 <= lane <= self.spec.lanes):
            raise UnknownLane(f"lane {lane} does not exist on {self.id} "
                              f"(lanes 1..{self.spec.lanes})")
        return [c.transformed(self.placement) for c in self._local_lane_route(entry, exit, lane)]

    def locate(self, position: Vec2, margin: float = 0.0) -> Optional[Tuple[int, float]]:
        """Nearest lane and its signed lateral offset, or None when off this segment

        Lateral offsets are positive to the left of the lane's reference
        direction. Ties between lanes go to the lower index.
        """
        local = to_body_frame(self.placement, position)
        v = self._local_locate(local.x, local.y, margin)
        if v is None:
            return None
        offsets = np.array([self.spec.lane_offset(i) for i in range(1, self.spec.lanes + 1)])
        idx = int(np.argmin(np.abs(v - offsets)))
        return idx + 1, float(v - offsets[idx])

    def exit_port(self, position: Vec2, margin: float = 0.0,
                  reach: float = 10.0) -> Optional[str]:
        """Port the position has left the segment through, if any"""
        best, best_u = None, math.inf
        for name in self.port_names:
            local = to_body_frame(self.connection_points[name].pose, position)
            if 0.0 < local.x <= reach and abs(local.y) <= self.spec.half_width + margin:
                if local.x < best_u:
                    best, best_u = name, local.x
        return best

    def outlines(self, spacing: float = 1.0) -> List[np.ndarray]:
        return [self._to_global(p) for p in self._local_outlines(spacing)]

    def markings(self, spacing: float = 1.0) -> List[np.ndarray]:
        return [self._to_global(p) for p in self._local_markings(spacing)]

    def _to_global(self, points: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.placement.theta), math.sin(self.placement.theta)
        rot = np.array([[c, -s], [s, c]])
        return points @ rot.T + np.array([self.placement.x, self.placement.y])

    def _band_offsets(self) -> np.ndarray:
        h = self.spec.half_width
        return -h + self.spec.lane_width * np.arange(self.spec.lanes + 1)


class StraightSegment(RoadSegment):
    """Straight road from local (0, 0) to (length, 0)"""

    port_names = ('start', 'end')

    def local_ports(self):
        return {'start': Pose2D(0.0, 0.0, math.pi),
                'end': Pose2D(self.spec.length, 0.0, 0.0)}

    def routes(self):
        return [('start', 'end'), ('end', 'start')]

    def _axis(self) -> LineComponent:
        return LineComponent(Vec2(0.0, 0.0), Vec2(self.spec.length, 0.0), 0.0)

    def _local_lane_route(self, entry, exit, lane):
        if entry == 'start':
            return [self._axis().offset(self.spec.lane_offset(lane))]
        geometric = self.spec.lanes + 1 - lane
        return [self._axis().offset(self.spec.lane_offset(geometric)).reversed()]

    def _local_locate(self, u, v, margin):
        if -_ALONG_TOL <= u <= self.spec.length + _ALONG_TOL and abs(v) <= self.spec.half_width + margin:
            return v
        return None

    def _local_outlines(self, spacing):
        h, length = self.spec.half_width, self.spec.length
        return [np.array([[0.0, -h], [length, -h], [length, h], [0.0, h]])]

    def _local_markings(self, spacing):
        return [np.array([[0.0, o], [self.spec.length, o]]) for o in self._band_offsets()]


class CurvedSegment(RoadSegment):
    """Circular road starting at local (0, 0) with heading 0"""

    port_names = ('start', 'end')

    @property
    def turn(self) -> int:
        return 1 if self.spec.sweep > 0 else -1

    def _axis(self) -> ArcComponent:
        k = self.turn
        return ArcComponent(Vec2(0.0, k * self.spec.radius), self.spec.radius,
                            -k * math.pi / 2.0, self.spec.sweep)

    def local_ports(self):
        return {'start': Pose2D(0.0, 0.0, math.pi), 'end': self._axis().end_pose}

    def routes(self):
        return [('start', 'end'), ('end', 'start')]

    def _local_lane_route(self, entry, exit, lane):
        if entry == 'start':
            return [self._axis().offset(self.spec.lane_offset(lane))]
        geometric = self.spec.lanes + 1 - lane
        return [self._axis().offset(self.spec.lane_offset(geometric)).reversed()]

    def _local_locate(self, u, v, margin):
        axis = self._axis()
        du, dv = u - axis.center.x, v - axis.center.y
        r = math.hypot(du, dv)
        along = math.fmod(self.turn * (math.atan2(dv, du) - axis.start_angle), 2 * math.pi)
        if along < 0:
            along += 2 * math.pi
        span = abs(self.spec.sweep)
        tol = _ALONG_TOL / self.spec.radius
        if not (along <= span + tol or along >= 2 * math.pi - tol):
            return None
        lateral = self.turn * (self.spec.radius - r)
        if abs(lateral) > self.spec.half_width + margin:
            return None
        return lateral

    def _arc_points(self, lateral: float, spacing: float) -> np.ndarray:
        xs, ys, _ = self._axis().offset(lateral).sample(spacing)
        return np.column_stack((xs, ys))

    def _local_outlines(self, spacing):
        h = self.spec.half_width
        return [np.vstack((self._arc_points(-h, spacing), self._arc_points(h, spacing)[::-1]))]

    def _local_markings(self, spacing):
        return [self._arc_points(o, spacing) for o in self._band_offsets()]


class IntersectionSegment(RoadSegment):
    """Four-way intersection: a square core of side lanes*lane_width and four arms

    The local origin is the centre of the core. Turning lane centres are
    circular arcs tangent to the entry and exit lane centres; the through
    route is a straight line. U-turns are not offered.
    """

    port_names = ('north', 'south', 'east', 'west')

    def local_ports(self):
        reach = self.spec.half_width + self.spec.length
        return {
            'north': Pose2D(0.0, reach, math.pi / 2.0),
            'south': Pose2D(0.0, -reach, -math.pi / 2.0),
            'east': Pose2D(reach, 0.0, 0.0),
            'west': Pose2D(-reach, 0.0, math.pi),
        }

    def routes(self):
        return [(a, b) for a, b in itertools.permutations(self.port_names, 2)]

    def _relation(self, entry: str, exit: str) -> str:
        ports = self.local_ports()
        rel = normalize_angle(ports[exit].theta - ports[entry].theta)
        if abs(rel - math.pi) < 1e-9:
            return 'straight'
        return 'left' if rel < 0 else 'right'

    def default_exit(self, entry):
        return self.exit_towards(entry, 'straight')

    def exit_towards(self, entry, relation):
        if entry not in self.connection_points:
            raise UnknownConnectionPoint(f"{self.id} has no connection point '{entry}'")
        for candidate in self.port_names:
            if candidate != entry and self._relation(entry, candidate) == relation:
                return candidate
        return None

    def _local_lane_route(self, entry, exit, lane):
        h, arm = self.spec.half_width, self.spec.length
        o = self.spec.lane_offset(lane)
        relation = self._relation(entry, exit)
        # Canonical frame: entering through the west port, travelling +x
        if relation == 'straight':
            canonical = [LineComponent(Vec2(-h - arm, o), Vec2(h + arm, o), 0.0)]
        elif relation == 'left':
            canonical = [
                LineComponent(Vec2(-h - arm, o), Vec2(-h, o), 0.0),
                ArcComponent(Vec2(-h, h), h - o, -math.pi / 2.0, math.pi / 2.0),
                LineComponent(Vec2(-o, h), Vec2(-o, h + arm), math.pi / 2.0),
            ]
        else:
            canonical = [
                LineComponent(Vec2(-h - arm, o), Vec2(-h, o), 0.0),
                ArcComponent(Vec2(-h, -h), h + o, math.pi / 2.0, -math.pi / 2.0),
                LineComponent(Vec2(o, -h), Vec2(o, -h - arm), -math.pi / 2.0),
            ]
        frame = Pose2D(0.0, 0.0, self.local_ports()[entry].theta - math.pi)
        return [c.transformed(frame) for c in canonical]

    def _local_locate(self, u, v, margin):
        h, arm = self.spec.half_width, self.spec.length
        reach = h + arm + _ALONG_TOL
        band = h + margin
        if abs(u) <= h and abs(v) <= h:
            return v
        # Arms: lateral coordinate relative to inbound travel
        if h < u <= reach and abs(v) <= band:
            return -v
        if -reach <= u < -h and abs(v) <= band:
            return v
        if h < v <= reach and abs(u) <= band:
            return u
        if -reach <= v < -h and abs(u) <= band:
            return -u
        if abs(u) <= h + margin and abs(v) <= h + margin:
            return v
        return None

    def _local_outlines(self, spacing):
        h, arm = self.spec.half_width, self.spec.length
        r = h + arm
        return [
            np.array([[-h, -h], [h, -h], [h, h], [-h, h]]),
            np.array([[h, -h], [r, -h], [r, h], [h, h]]),
            np.array([[-r, -h], [-h, -h], [-h, h], [-r, h]]),
            np.array([[-h, h], [h, h], [h, r], [-h, r]]),
            np.array([[-h, -r], [h, -r], [h, -h], [-h, -h]]),
        ]

    def _local_markings(self, spacing):
        h, arm = self.spec.half_width, self.spec.length
        r = h + arm
        lines = []
        for o in self._band_offsets():
            lines.append(np.array([[h, o], [r, o]]))
            lines.append(np.array([[-r, o], [-h, o]]))
            lines.append(np.array([[o, h], [o, r]]))
            lines.append(np.array([[o, -r], [o, -h]]))
        return lines


_SEGMENT_CLASSES = {
    SegmentType.STRAIGHT: StraightSegment,
    SegmentType.CURVED: CurvedSegment,
    SegmentType.INTERSECTION: IntersectionSegment,
}


# ---------------------------------------------------------------------------
# Network
# ---------------------------------------------------------------------------

class RoadNetwork:
    """Mutable aggregate of road segments and their connections"""

    def __init__(self):
        self.segments: Dict[str, RoadSegment] = {}
        self.parking_lot: Optional[ParkingLotConfig] = None
        self._next_index = 1
        self._lane_cache: Dict[tuple, Trajectory] = {}

    def __len__(self) -> int:
        return len(self.segments)

    # -- lookup ------------------------------------------------------------

    def segment(self, segment_id: str) -> RoadSegment:
        try:
            return self.segments[segment_id]
        except KeyError:
            raise UnknownSegment(f"unknown segment '{segment_id}'") from None

    def connection_point(self, segment_id: str, name: str) -> ConnectionPoint:
        seg = self.segment(segment_id)
        try:
            return seg.connection_points[name]
        except KeyError:
            raise UnknownConnectionPoint(
                f"segment '{segment_id}' has no connection point '{name}' "
                f"(has {', '.join(seg.port_names)})") from None

    def peer_of(self, segment_id: str, name: str) -> Optional[PortRef]:
        return self.connection_point(segment_id, name).peer

    # -- construction ------------------------------------------------------

    def create_road_segment(self, spec: SegmentSpec, segment_id: Optional[str] = None) -> str:
        """Register a segment and return its id

        Raises:
            InvalidSpec: if the segment spec violates an invariant or the id is taken
        """
        spec.validate()
        spec = replace(spec, segment_type=SegmentType(spec.segment_type), lanes=int(spec.lanes))
        if segment_id is None:
            while f"s{self._next_index}" in self.segments:
                self._next_index += 1
            segment_id = f"s{self._next_index}"
            self._next_index += 1
        elif segment_id in self.segments:
            raise InvalidSpec(f"segment id '{segment_id}' is already in use")
        self.segments[segment_id] = _SEGMENT_CLASSES[spec.segment_type](segment_id, spec)
        logger.debug("created %s segment %s at %s", spec.segment_type.name.lower(),
                     segment_id, spec.placement)
        return segment_id

    def is_compatible(self, a: str, b: str) -> bool:
        sa, sb = self.segment(a).spec, self.segment(b).spec
        return sa.lanes == sb.lanes and math.isclose(sa.lane_width, sb.lane_width,
                                                     rel_tol=0.0, abs_tol=1e-12)

    def _check_free(self, *ports: ConnectionPoint) -> None:
        for cp in ports:
            if cp.peer is not None:
                raise AlreadyConnected(
                    f"{cp.owner}.{cp.name} is already connected to {cp.peer[0]}.{cp.peer[1]}")

    def _link(self, a: ConnectionPoint, b: ConnectionPoint) -> None:
        a.peer = (b.owner, b.name)
        b.peer = (a.owner, a.name)
        self._lane_cache.clear()

    def connect_road_segments(self, fixed: str, cp_fixed: str, moving: str, cp_moving: str) -> None:
        """Connect two ports, rigidly moving the `moving` segment onto the fixed one

        When the moving segment already has connections it cannot move; the
        link is then only accepted if the two ports already coincide.

        Raises:
            Incompatible: lanes or lane widths differ
            AlreadyConnected: one of the ports already has a peer
            WouldTearJoint: the move would break an existing joint
        """
        a = self.connection_point(fixed, cp_fixed)
        b = self.connection_point(moving, cp_moving)
        if not self.is_compatible(fixed, moving):
            raise Incompatible(f"segments '{fixed}' and '{moving}' differ in lanes or lane_width")
        self._check_free(a, b)
        target = Pose2D(a.pose.x, a.pose.y, a.pose.theta + math.pi)
        mover = self.segment(moving)
        if mover.connected_ports() or fixed == moving:
            gap = math.hypot(b.pose.x - target.x, b.pose.y - target.y)
            twist = abs(normalize_angle(b.pose.theta - target.theta))
            if gap > _COINCIDENT_POS or twist > _COINCIDENT_ANGLE:
                raise WouldTearJoint(
                    f"moving '{moving}' would tear its joints at {', '.join(mover.connected_ports())}")
        else:
            local = mover.local_ports()[cp_moving]
            mover.move_to(compose(target, inverse(local)))
        self._link(a, b)
        logger.debug("connected %s.%s <-> %s.%s", fixed, cp_fixed, moving, cp_moving)

    def _plan_connection(self, a: str, cp_a: str, b: str, cp_b: str,
                         r_min: float) -> Tuple[ConnectionPoint, ConnectionPoint, CSCPlan,
                                                List[SegmentSpec]]:
        """Checks, CSC plan and validated bridge specs; leaves the network untouched"""
        port_a = self.connection_point(a, cp_a)
        port_b = self.connection_point(b, cp_b)
        self._check_free(port_a, port_b)
        if not self.is_compatible(a, b):
            raise Incompatible(f"segments '{a}' and '{b}' differ in lanes or lane_width")
        base = self.segment(a).spec
        if not math.isfinite(r_min) or r_min <= base.half_width:
            raise InvalidSpec(
                f"r_min {r_min} must exceed lanes*lane_width/2 = {base.half_width}")
        goal = Pose2D(port_b.pose.x, port_b.pose.y, port_b.pose.theta + math.pi)
        plan = dubins_csc(port_a.pose, goal, r_min)

        specs: List[SegmentSpec] = []
        for _, comp in plan.active_components():
            origin = comp.start_pose
            if isinstance(comp, ArcComponent):
                spec = replace(base, segment_type=SegmentType.CURVED, radius=r_min,
                               sweep=comp.sweep, length=comp.length,
                               orientation=origin.theta, local_origin=origin.position)
            else:
                spec = replace(base, segment_type=SegmentType.STRAIGHT, length=comp.length,
                               radius=0.0, sweep=0.0, orientation=origin.theta,
                               local_origin=origin.position)
            spec.validate()
            specs.append(spec)
        return port_a, port_b, plan, specs

    def _build_connection(self, port_a: ConnectionPoint, port_b: ConnectionPoint,
                          plan: CSCPlan, specs: List[SegmentSpec]) -> List[str]:
        created: List[str] = []
        previous = port_a
        for spec in specs:
            new_id = self.create_road_segment(spec)
            self._link(previous, self.connection_point(new_id, 'start'))
            previous = self.connection_point(new_id, 'end')
            created.append(new_id)
        self._link(previous, port_b)
        logger.info("auto-connected %s.%s -> %s.%s with %s (%d segment(s), length %.2f m)",
                    port_a.owner, port_a.name, port_b.owner, port_b.name, plan.word,
                    len(created), plan.length)
        return created

    def create_connection(self, a: str, cp_a: str, b: str, cp_b: str, r_min: float) -> List[str]:
        """Bridge two open ends with curved/straight segments along a CSC path

        Degenerate CSC components are not instantiated; if all are
        degenerate the two ports are linked directly. New segments inherit
        lanes, lane width and speed limit from segment `a`. Nothing is
        created or linked unless every bridge segment is valid.

        Returns:
            list of str: ids of the created segments in travel order

        Raises:
            InvalidSpec: r_min not above half the road width of `a`
            Incompatible: lanes or lane widths differ
            AlreadyConnected: one of the ports already has a peer
        """
        return self._build_connection(*self._plan_connection(a, cp_a, b, cp_b, r_min))

    def auto_connect_open_ends(self, pairs: Iterable[Tuple[PortRef, PortRef]],
                               r_min: float) -> Dict[Tuple[PortRef, PortRef], List[str]]:
        """Batch create_connection over (open end, open end) pairs

        All pairs are planned before the first segment is created, so a
        failing pair leaves the network unchanged.
        """
        pairs = [((a, cp_a), (b, cp_b)) for (a, cp_a), (b, cp_b) in pairs]
        ports = [port for pair in pairs for port in pair]
        repeated = sorted({port for port in ports if ports.count(port) > 1})
        if repeated:
            raise AlreadyConnected(
                f"{repeated[0][0]}.{repeated[0][1]} appears in more than one auto connection")
        plans = [self._plan_connection(a, cp_a, b, cp_b, r_min) for (a, cp_a), (b, cp_b) in pairs]
        return {pair: self._build_connection(*plan) for pair, plan in zip(pairs, plans)}

    def create_virtual_parking_lot(self, config: ParkingLotConfig) -> ParkingLotConfig:
        """Attach the parking lot; every exit point must be an open end"""
        for segment_id, name in config.exit_points:
            cp = self.connection_point(segment_id, name)
            if cp.peer is not None:
                raise AlreadyConnected(f"parking lot exit {segment_id}.{name} is not an open end")
        self.parking_lot = config
        logger.debug("parking lot with exits %s", list(config.exit_points))
        return config

    # -- queries -----------------------------------------------------------

    def open_ends(self) -> List[PortRef]:
        return [(seg.id, name) for seg in self.segments.values() for name in seg.port_names
                if seg.connection_points[name].peer is None]

    def lane_route(self, segment_id: str, lane: int, entry: Optional[str] = None,
                   exit: Optional[str] = None) -> List[PathComponent]:
        seg = self.segment(segment_id)
        entry = entry or seg.default_entry()
        exit = exit or seg.default_exit(entry)
        return seg.lane_route(entry, exit, lane)

    def lane_center(self, segment_id: str, lane: int, spacing: float = 1.0,
                    entry: Optional[str] = None, exit: Optional[str] = None) -> Trajectory:
        """Lane centre polyline annotated with the segment speed limit

        Straight and curved segments default to the forward direction
        (start -> end); intersections default to the west -> east route.

        Raises:
            UnknownLane: lane outside 1..lanes
        """
        seg = self.segment(segment_id)
        entry = entry or seg.default_entry()
        exit = exit or seg.default_exit(entry)
        key = (segment_id, lane, spacing, entry, exit)
        cached = self._lane_cache.get(key)
        if cached is None:
            cached = Trajectory.from_components(seg.lane_route(entry, exit, lane), spacing,
                                                seg.spec.speed_limit)
            self._lane_cache[key] = cached
        return cached

    def entry_pose(self, segment_id: str, entry: str, lane: int,
                   exit: Optional[str] = None) -> Pose2D:
        return self.lane_route(segment_id, lane, entry, exit)[0].start_pose

    def query_road(self, position: Vec2, margin: float = 0.0) -> Optional[RoadQuery]:
        """Segment and lane at a position, or None when off every drivable band

        Lane ties go to the lower index; segment ties to the earlier segment.
        """
        best: Optional[RoadQuery] = None
        for seg in self.segments.values():
            hit = seg.locate(position, margin)
            if hit is None:
                continue
            lane, offset = hit
            if best is None or abs(offset) < abs(best.lateral_offset):
                best = RoadQuery(seg.id, lane, offset, seg.spec.speed_limit, seg.spec.lane_width)
        return best

    def contains(self, segment_id: str, position: Vec2, margin: float = 0.0) -> bool:
        return self.segment(segment_id).locate(position, margin) is not None

    def bounds(self) -> Optional[Tuple[float, float, float, float]]:
        """(xmin, ymin, xmax, ymax) of all drivable area, None for an empty network"""
        polys = [p for seg in self.segments.values() for p in seg.outlines()]
        if not polys:
            return None
        pts = np.vstack(polys)
        return (float(pts[:, 0].min()), float(pts[:, 1].min()),
                float(pts[:, 0].max()), float(pts[:, 1].max()))

    def as_graph(self) -> nx.MultiDiGraph:
        """Directed multigraph: merged connection points as nodes, routes as edges

        Node keys are "segment.port" of the first port of each merged pair.
        Edge attributes: segment, entry, exit, length (lane 1 route length).
        """
        graph = nx.MultiDiGraph(name='road network')
        node_of: Dict[PortRef, str] = {}
        for seg in self.segments.values():
            for name in seg.port_names:
                ref = (seg.id, name)
                if ref in node_of:
                    continue
                cp = seg.connection_points[name]
                key = f"{seg.id}.{name}"
                members = [ref] + ([cp.peer] if cp.peer is not None else [])
                for member in members:
                    node_of[member] = key
                graph.add_node(key, pos=(cp.pose.x, cp.pose.y), ports=members)
        for seg in self.segments.values():
            for entry, exit in seg.routes():
                length = sum(c.length for c in seg.lane_route(entry, exit, 1))
                graph.add_edge(node_of[(seg.id, entry)], node_of[(seg.id, exit)],
                               segment=seg.id, entry=entry, exit=exit, length=length)
        return graph

    def lane_centers_for_drawing(self, spacing: float = 1.0) -> List[np.ndarray]:
        """Every lane centre of every route, as (n, 2) arrays"""
        lines = []
        for seg in self.segments.values():
            routes: Sequence[PortRef] = seg.routes()
            if seg.spec.segment_type != SegmentType.INTERSECTION:
                routes = routes[:1]
            for entry, exit in routes:
                for lane in range(1, seg.spec.lanes + 1):
                    xs, ys, _ = sample_components(seg.lane_route(entry, exit, lane), spacing)
                    lines.append(np.column_stack((xs, ys)))
        return lines
