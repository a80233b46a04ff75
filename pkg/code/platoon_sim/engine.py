"""
Traffic environment

Vehicle registry and lifecycle, the four-phase simulation step
(route/reference, perception, control, state update) evaluated against a
frozen snapshot, status classification, the virtual parking lot runtime
and data logging.

Author: Platoon-Sim Team
Version: 1.0.0
"""

import logging
import math
import zlib
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from .control import (
    AccParams,
    CombinedController,
    DirectiveKind,
    LaneChangeDecision,
    LaneChangeParams,
    LateralController,
    LongitudinalController,
    PlatoonDirective,
    SplitController,
    find_acc,
    lane_change_supervisor,
    platoon_step,
)
from .dynamics import ControlInput, DynamicsModel, KinematicBicycle, VehicleState, integrate_step
from .errors import (
    BlockedExit,
    ControllerAmbiguity,
    DuplicateId,
    EmptyAhead,
    GuidanceError,
    InvalidPrimitive,
    NoSuchLane,
    NonFiniteState,
    OffRoadSpawn,
    PlatoonSimError,
    SpawnConflict,
    UnknownVehicle,
)
from .geometry import Pose2D, Trajectory, Vec2
from .guidance import (
    RoutePrimitive,
    RouteState,
    advance_route,
    build_reference,
    crop_ahead,
    preprocess,
)
from .perception import PerceptionData, SensedVehicle, SensorConfig, add_noise, sense, vehicle_rng
from .road_network import ParkingLotConfig, PortRef, RoadNetwork, SegmentSpec, SegmentType

logger = logging.getLogger(__name__)

CHANNELS = ('position', 'velocity', 'control_input', 'status')
LOG_COLUMNS = ['t', 'vehicle_id', 'channel', 'v1', 'v2', 'v3', 'v4']

_TIME_EPS = 1e-9


class VehicleStatus(Enum):
    ACTIVE = 'active'
    CRASHED = 'crashed'
    PARKED = 'parked'


@dataclass
class Vehicle:
    """One simulated vehicle and everything the engine keeps about it"""
    id: str
    dynamics: DynamicsModel
    controller: CombinedController
    sensor: SensorConfig
    route: RouteState
    state: VehicleState = VehicleState(0.0, 0.0, 0.0, 0.0)
    status: VehicleStatus = VehicleStatus.PARKED
    initial_route: Tuple[RoutePrimitive, ...] = ()
    lane_change: LaneChangeParams = field(default_factory=LaneChangeParams)
    last_input: ControlInput = ControlInput()
    reference: Optional[Trajectory] = None
    placed: bool = False
    rng: Optional[np.random.Generator] = None


@dataclass
class SimClock:
    """Simulation time; t is always step_index * dt"""
    dt: float
    step_index: int = 0

    @property
    def t(self) -> float:
        return self.step_index * self.dt

    def advance(self) -> None:
        self.step_index += 1


@dataclass(frozen=True)
class LogConfig:
    """Which channels to log, when, and how often

    Attributes:
        channels: subset of position, velocity, control_input, status
        interval: [t_start, t_end] in seconds
        sample_period: seconds, an integer multiple of dt (None means every step)
    """
    channels: FrozenSet[str] = frozenset(CHANNELS)
    interval: Tuple[float, float] = (0.0, math.inf)
    sample_period: Optional[float] = None

    def __post_init__(self):
        object.__setattr__(self, 'channels', frozenset(self.channels))
        unknown = self.channels - set(CHANNELS)
        if unknown:
            raise ValueError(f"unknown log channels {sorted(unknown)}")
        if self.interval[0] > self.interval[1]:
            raise ValueError(f"empty log interval {self.interval}")

    def stride(self, dt: float) -> int:
        """Steps between samples

        Raises:
            ValueError: sample_period is not an integer multiple of dt
        """
        if self.sample_period is None:
            return 1
        ratio = self.sample_period / dt
        k = int(round(ratio))
        if k < 1 or abs(ratio - k) > 1e-9 * max(1.0, ratio):
            raise ValueError(f"sample_period {self.sample_period} is not a multiple of dt {dt}")
        return k


@dataclass(frozen=True)
class LogRecord:
    t: float
    vehicle_id: str
    channel: str
    values: Tuple


@dataclass(frozen=True)
class StatusTransition:
    vehicle_id: str
    old: VehicleStatus
    new: VehicleStatus
    t: float
    reason: str = ''


@dataclass(frozen=True)
class Release:
    """A vehicle leaving the parking lot"""
    vehicle_id: str
    exit_point: PortRef
    scheduled_time: float
    t: float


@dataclass
class StepReport:
    t: float
    step_index: int
    transitions: List[StatusTransition] = field(default_factory=list)
    records: List[LogRecord] = field(default_factory=list)
    releases: List[Release] = field(default_factory=list)


@dataclass
class PendingRelease:
    vehicle_id: str
    release_time: float
    exit_point: PortRef
    platoon: int
    position: int


@dataclass(frozen=True)
class VehicleSnapshot:
    id: str
    state: VehicleState
    status: VehicleStatus
    reference: Optional[Trajectory]


@dataclass(frozen=True)
class EnvSnapshot:
    """Immutable view of the environment for rendering"""
    t: float
    step_index: int
    network: RoadNetwork
    vehicles: Tuple[VehicleSnapshot, ...]
    vehicle_length: float
    vehicle_width: float


# ---------------------------------------------------------------------------
# Parking lot
# ---------------------------------------------------------------------------

class ParkingLotRuntime:
    """Collects vehicles leaving at open ends and releases them as platoons

    Attributes:
        config: lot parameters
        queue: arrival order of every vehicle ever parked (FIFO)
        forming: the platoon currently being filled
        scheduled: members waiting for their release time
        completions: (time, members) of every completed platoon
    """

    def __init__(self, config: ParkingLotConfig):
        self.config = config
        self.queue: List[str] = []
        self.forming: List[str] = []
        self.scheduled: List[PendingRelease] = []
        self.completions: List[Tuple[float, Tuple[str, ...]]] = []
        self._platoons = 0

    def __contains__(self, vehicle_id: str) -> bool:
        return vehicle_id in self.forming or any(p.vehicle_id == vehicle_id for p in self.scheduled)

    @property
    def occupancy(self) -> int:
        return len(self.forming) + len(self.scheduled)

    def arrive(self, vehicle_id: str) -> None:
        self.queue.append(vehicle_id)
        self.forming.append(vehicle_id)

    def tick(self, clock: SimClock, rng: np.random.Generator) -> List[PendingRelease]:
        """Schedule every complete platoon; returns the new schedule entries"""
        new: List[PendingRelease] = []
        cfg = self.config
        while len(self.forming) >= cfg.platoon_size:
            members = self.forming[:cfg.platoon_size]
            self.forming = self.forming[cfg.platoon_size:]
            delay = max(0.0, float(rng.normal(cfg.time_mean, math.sqrt(cfg.time_variance))))
            exit_point = cfg.exit_points[int(rng.integers(len(cfg.exit_points)))]
            start = clock.t + delay
            self.completions.append((clock.t, tuple(members)))
            for k, vid in enumerate(members):
                entry = PendingRelease(vid, start + k * cfg.time_sequence_interval,
                                       tuple(exit_point), self._platoons, k)
                new.append(entry)
            self._platoons += 1
            logger.info("platoon %s complete at t=%.2f, release at t=%.2f via %s.%s",
                        members, clock.t, start, exit_point[0], exit_point[1])
        self.scheduled.extend(new)
        return new

    def due(self, t: float) -> List[PendingRelease]:
        ready = [p for p in self.scheduled if p.release_time <= t + _TIME_EPS]
        return sorted(ready, key=lambda p: (p.release_time, p.platoon, p.position))

    def defer(self, entry: PendingRelease, dt: float) -> None:
        """Push a blocked member and the rest of its platoon back by dt"""
        for p in self.scheduled:
            if p.platoon == entry.platoon and p.position >= entry.position:
                p.release_time += dt

    def remove(self, entry: PendingRelease) -> None:
        self.scheduled.remove(entry)


# ---------------------------------------------------------------------------
# Status classification
# ---------------------------------------------------------------------------

def classify_status(vehicle: Vehicle, network: RoadNetwork,
                    crash_margin: float = 0.9) -> VehicleStatus:
    """Active, Crashed, or Parked (left through an open end into a parking lot)

    Without a parking lot an open-end exit is a crash.
    """
    if vehicle.status != VehicleStatus.ACTIVE:
        return vehicle.status
    pos = vehicle.state.position
    if vehicle.route.current_segment is not None:
        seg = network.segment(vehicle.route.current_segment)
        if seg.locate(pos, crash_margin) is None:
            port = seg.exit_port(pos, crash_margin)
            if port is not None and network.peer_of(seg.id, port) is None:
                return VehicleStatus.PARKED if network.parking_lot is not None \
                    else VehicleStatus.CRASHED
    hit = network.query_road(pos, crash_margin)
    if hit is None or abs(hit.lateral_offset) > hit.lane_width / 2.0 + crash_margin:
        return VehicleStatus.CRASHED
    return VehicleStatus.ACTIVE


def log(config: LogConfig, clock: SimClock, vehicles: Iterable[Vehicle]) -> List[LogRecord]:
    """Records for the current clock, one per enabled channel per vehicle"""
    t = clock.t
    if not config.interval[0] - _TIME_EPS <= t <= config.interval[1] + _TIME_EPS:
        return []
    if clock.step_index % config.stride(clock.dt):
        return []
    stamp = round(t, 9)
    records: List[LogRecord] = []
    for v in vehicles:
        s, u = v.state, v.last_input
        for channel in CHANNELS:
            if channel not in config.channels:
                continue
            if channel == 'position':
                values = (s.x, s.y, s.theta)
            elif channel == 'velocity':
                values = (s.v, s.v * math.cos(s.theta), s.v * math.sin(s.theta))
            elif channel == 'control_input':
                values = (u.a, u.delta)
            else:
                values = (v.status.value,)
            records.append(LogRecord(stamp, v.id, channel, values))
    return records


def records_to_frame(records: Sequence[LogRecord]) -> pd.DataFrame:
    """Log records as a table with columns t, vehicle_id, channel, v1..v4"""
    rows = []
    for r in records:
        padded = list(r.values) + [None] * (4 - len(r.values))
        rows.append([r.t, r.vehicle_id, r.channel] + padded)
    return pd.DataFrame(rows, columns=LOG_COLUMNS)


# ---------------------------------------------------------------------------
# Environment
# ---------------------------------------------------------------------------

class TrafficEnvironment:
    """The simulated world: road network, vehicles, clock, parking lot and log

    Args:
        network: road network (a new empty one if omitted)
        dt: time step in seconds
        seed: seed of every random stream
        log_config: logging configuration (all channels every step if omitted)
        vehicle_width: used for the crash margin (half the width)
        vehicle_length: bumper-to-bumper length used for ACC gaps
        min_spawn_gap: clearance required around a spawn point
        horizon_segments: segments spanned by reference trajectories
        reference_spacing: lane centre sampling distance
        reference_window: meters of reference kept ahead of the nearest point
        merge_ramp_time: seconds to ramp the gap down after a merge
    """

    def __init__(self, network: Optional[RoadNetwork] = None, dt: float = 0.05,
                 seed: int = 0, log_config: Optional[LogConfig] = None,
                 vehicle_width: float = 1.8, vehicle_length: float = 4.5,
                 min_spawn_gap: float = 6.0, horizon_segments: int = 2,
                 reference_spacing: float = 1.0, reference_window: float = 50.0,
                 merge_ramp_time: float = 10.0):
        if not dt > 0:
            raise ValueError(f"dt must be positive, got {dt}")
        self.network = network if network is not None else RoadNetwork()
        self.clock = SimClock(dt)
        self.seed = int(seed)
        self.log_config = log_config or LogConfig()
        self.log_config.stride(dt)
        self.vehicle_width = vehicle_width
        self.vehicle_length = vehicle_length
        self.crash_margin = 0.5 * vehicle_width
        self.min_spawn_gap = min_spawn_gap
        self.horizon_segments = horizon_segments
        self.reference_spacing = reference_spacing
        self.reference_window = reference_window
        self.merge_ramp_time = merge_ramp_time
        self.vehicles: Dict[str, Vehicle] = {}
        self.directives: Dict[str, PlatoonDirective] = {}
        self.records: List[LogRecord] = []
        self.transitions: List[StatusTransition] = []
        self.releases: List[Release] = []
        self.parking_lot: Optional[ParkingLotRuntime] = None
        self._lot_rng = np.random.default_rng([self.seed, zlib.crc32(b'parking_lot')])
        self._started = False

    @property
    def t(self) -> float:
        return self.clock.t

    @property
    def dt(self) -> float:
        return self.clock.dt

    # -- road construction facade ------------------------------------------

    def create_road_segment(self, segment_type: Union[int, SegmentType] = 1,
                            length: float = 100.0, orientation: float = 0.0,
                            lane_width: float = 4.0, lanes: int = 2,
                            speed_limit: float = 13.9, radius: float = 0.0,
                            sweep: float = 0.0, local_origin=(0.0, 0.0),
                            segment_id: Optional[str] = None) -> str:
        origin = local_origin if isinstance(local_origin, Vec2) else Vec2(*local_origin)
        spec = SegmentSpec(SegmentType(segment_type), length, radius, sweep, orientation,
                           lanes, lane_width, speed_limit, origin)
        return self.network.create_road_segment(spec, segment_id)

    def connect_road_segments(self, fixed_segment_index: str, connection_point_1: str,
                              moving_segment_index: str, connection_point_2: str) -> None:
        self.network.connect_road_segments(fixed_segment_index, connection_point_1,
                                           moving_segment_index, connection_point_2)

    def create_connection(self, a: str, cp_a: str, b: str, cp_b: str, r_min: float) -> List[str]:
        return self.network.create_connection(a, cp_a, b, cp_b, r_min)

    def create_virtual_parking_lot(self, platoon_size: int, exit_points: Sequence,
                                   time_sequence_interval: float = 4.0,
                                   time_mean: float = 5.0,
                                   time_variance: float = 0.0) -> ParkingLotRuntime:
        """Attach a parking lot; exit points are (segment, port) pairs or
        mappings with 'segment_id' and 'connection_point' keys"""
        points = []
        for p in exit_points:
            if isinstance(p, Mapping):
                points.append((p['segment_id'], p['connection_point']))
            else:
                points.append(tuple(p))
        config = ParkingLotConfig(platoon_size, tuple(points), time_sequence_interval,
                                  time_mean, time_variance)
        self.network.create_virtual_parking_lot(config)
        self.parking_lot = ParkingLotRuntime(config)
        return self.parking_lot

    # -- vehicles ----------------------------------------------------------

    def vehicle(self, vehicle_id: str) -> Vehicle:
        try:
            return self.vehicles[vehicle_id]
        except KeyError:
            raise UnknownVehicle(f"unknown vehicle '{vehicle_id}'") from None

    def create_vehicle(self, vehicle_id: str, dynamic_model: Optional[DynamicsModel] = None,
                       controller: Optional[CombinedController] = None,
                       lateral_controller: Optional[LateralController] = None,
                       longitudinal_controller: Optional[LongitudinalController] = None,
                       sensor: Optional[SensorConfig] = None,
                       route: Optional[Iterable] = None,
                       lane_change: Optional[LaneChangeParams] = None) -> Vehicle:
        """Register a vehicle; it stays Parked until placed on a segment

        Exactly one controller form must be given: a combined controller,
        or a lateral and a longitudinal controller.

        Raises:
            DuplicateId: the id is taken
            ControllerAmbiguity: both or neither controller forms were given
        """
        if vehicle_id in self.vehicles:
            raise DuplicateId(f"vehicle '{vehicle_id}' already exists")
        has_split = lateral_controller is not None or longitudinal_controller is not None
        if (controller is None) == (not has_split):
            raise ControllerAmbiguity(
                f"vehicle '{vehicle_id}' needs either a combined controller or a "
                "lateral/longitudinal pair")
        dynamics = dynamic_model or KinematicBicycle()
        if has_split:
            if lateral_controller is None or longitudinal_controller is None:
                raise ControllerAmbiguity(
                    f"vehicle '{vehicle_id}' needs both a lateral and a longitudinal controller")
            controller = SplitController(lateral_controller, longitudinal_controller,
                                         dynamics.params)
        primitives = tuple(RoutePrimitive.parse(p) for p in (route or ()))
        vehicle = Vehicle(vehicle_id, dynamics, controller, sensor or SensorConfig(),
                          RouteState(pending=primitives), initial_route=primitives,
                          lane_change=lane_change or LaneChangeParams(),
                          rng=vehicle_rng(self.seed, vehicle_id))
        self.vehicles[vehicle_id] = vehicle
        logger.debug("created vehicle %s", vehicle_id)
        return vehicle

    def _active(self, exclude: Optional[str] = None) -> List[Vehicle]:
        return [v for vid, v in sorted(self.vehicles.items())
                if v.status == VehicleStatus.ACTIVE and vid != exclude]

    def _spawn_clear(self, position: Vec2, exclude: Optional[str] = None) -> bool:
        return all(math.hypot(v.state.x - position.x, v.state.y - position.y) >= self.min_spawn_gap
                   for v in self._active(exclude))

    def _lane_pose(self, segment_id: str, lane: int, entry: Optional[str],
                   offset: float) -> Pose2D:
        components = self.network.lane_route(segment_id, lane, entry)
        total = sum(c.length for c in components)
        if not -1e-9 <= offset <= total + 1e-9:
            raise OffRoadSpawn(f"offset {offset} m is outside lane {lane} of {segment_id} "
                               f"(length {total:.2f} m)")
        remaining = min(max(offset, 0.0), total)
        for comp in components:
            if remaining <= comp.length or comp is components[-1]:
                return comp.pose_at(min(remaining, comp.length))
            remaining -= comp.length
        return components[-1].end_pose

    def add_vehicle_to_segment(self, vehicle_id: str, segment_id: str, lane: int = 1,
                               longitudinal_offset: float = 0.0, initial_speed: float = 0.0,
                               entry: Optional[str] = None) -> Vehicle:
        """Place a registered vehicle on a lane centre, heading along the lane

        The placement counts as entering the segment and consumes the first
        route primitive.

        Raises:
            OffRoadSpawn: the pose is not on the drivable band
            SpawnConflict: another active vehicle is within min_spawn_gap
        """
        vehicle = self.vehicle(vehicle_id)
        if vehicle.status == VehicleStatus.ACTIVE:
            raise SpawnConflict(f"vehicle '{vehicle_id}' is already on the road")
        seg = self.network.segment(segment_id)
        entry = entry or seg.default_entry()
        try:
            pose = self._lane_pose(segment_id, lane, entry, longitudinal_offset)
        except PlatoonSimError as exc:
            if isinstance(exc, OffRoadSpawn):
                raise
            raise OffRoadSpawn(str(exc)) from exc
        if self.network.query_road(pose.position) is None:
            raise OffRoadSpawn(f"spawn pose {pose} is off the road")
        if not self._spawn_clear(pose.position, exclude=vehicle_id):
            raise SpawnConflict(f"another vehicle is within {self.min_spawn_gap} m of "
                                f"the spawn point of '{vehicle_id}'")
        route = RouteState(pending=vehicle.initial_route, current_lane=lane)
        vehicle.route = advance_route(route, segment_id, entry, self.network)
        vehicle.state = VehicleState(pose.x, pose.y, pose.theta, float(initial_speed))
        vehicle.status = VehicleStatus.ACTIVE
        vehicle.placed = True
        logger.info("vehicle %s placed on %s lane %d at %.1f m", vehicle_id, segment_id,
                    lane, longitudinal_offset)
        return vehicle

    def update_route(self, vehicle_id: str, primitives: Iterable) -> None:
        """Replace the pending primitives of a vehicle"""
        vehicle = self.vehicle(vehicle_id)
        pending = tuple(RoutePrimitive.parse(p) for p in primitives)
        vehicle.route = replace(vehicle.route, pending=pending)
        logger.debug("route of %s updated to %s", vehicle_id, [p.value for p in pending])

    def set_directive(self, vehicle_id: str, directive: Optional[PlatoonDirective]) -> None:
        """Install a platoon directive; a split without a leader keeps the current one"""
        self.vehicle(vehicle_id)
        if directive is None:
            self.directives.pop(vehicle_id, None)
            return
        if directive.kind == DirectiveKind.SPLIT and directive.leader_id is None:
            previous = self.directives.get(vehicle_id)
            directive = replace(directive, leader_id=previous.leader if previous else None)
        if directive.leader is not None:
            self.vehicle(directive.leader)
        self.directives[vehicle_id] = directive
        logger.info("t=%.2f %s directive for %s (leader %s)", self.t, directive.kind.value,
                    vehicle_id, directive.leader)

    # -- simulation loop ---------------------------------------------------

    def begin(self) -> List[LogRecord]:
        """Log the initial state; called automatically by the first step"""
        if self._started:
            return []
        self._started = True
        records = self._log()
        return records

    def _log(self) -> List[LogRecord]:
        records = log(self.log_config, self.clock,
                      [v for _, v in sorted(self.vehicles.items()) if v.placed])
        self.records.extend(records)
        return records

    def _set_status(self, vehicle: Vehicle, status: VehicleStatus, reason: str,
                    report: StepReport) -> None:
        if vehicle.status == status:
            return
        transition = StatusTransition(vehicle.id, vehicle.status, status, self.t, reason)
        vehicle.status = status
        report.transitions.append(transition)
        self.transitions.append(transition)
        level = logging.WARNING if status == VehicleStatus.CRASHED else logging.INFO
        logger.log(level, "t=%.2f vehicle %s %s -> %s (%s)", self.t, vehicle.id,
                   transition.old.value, status.value, reason)

    def _track_segment(self, vehicle: Vehicle) -> None:
        route = vehicle.route
        pos = vehicle.state.position
        seg = self.network.segment(route.current_segment)
        if seg.locate(pos, self.crash_margin) is not None:
            return
        target: Optional[PortRef] = None
        port = seg.exit_port(pos, self.crash_margin)
        if port is not None:
            target = self.network.peer_of(seg.id, port)
            if target is None:
                return
        else:
            hit = self.network.query_road(pos, self.crash_margin)
            if hit is None or hit.segment == seg.id:
                return
            other = self.network.segment(hit.segment)
            nearest = min(other.port_names, key=lambda n: (
                other.connection_points[n].pose.position - pos).norm())
            target = (hit.segment, nearest)
        if route.lane_change_from is not None:
            logger.warning("t=%.2f vehicle %s left %s before its lane change was clear; "
                           "staying in lane %d", self.t, vehicle.id, seg.id,
                           route.lane_change_from)
            route = replace(route, current_lane=route.lane_change_from, lane_change_from=None)
        if target[0] == route.last_consumed_segment:
            route = replace(route, last_consumed_segment=None)
        vehicle.route = advance_route(route, target[0], target[1], self.network)

    def _reference(self, vehicle: Vehicle, lane: Optional[int] = None) -> Optional[Trajectory]:
        try:
            ref = build_reference(vehicle.route, self.network, self.horizon_segments,
                                  self.reference_spacing, lane=lane)
        except InvalidPrimitive as exc:
            logger.warning("vehicle %s: %s; following the lane instead", vehicle.id, exc)
            ref = build_reference(vehicle.route, self.network, self.horizon_segments,
                                  self.reference_spacing, lane=lane, strict=False)
        pose = vehicle.state.pose
        try:
            return preprocess(crop_ahead(ref, pose, self.reference_window), pose)
        except EmptyAhead:
            return None

    def _plan(self, vehicle: Vehicle) -> Tuple[Optional[Trajectory], Optional[Trajectory]]:
        """Phase 1: route bookkeeping and reference trajectories (target, hold)"""
        self._track_segment(vehicle)
        try:
            target = self._reference(vehicle)
        except NoSuchLane as exc:
            source = vehicle.route.lane_change_from or vehicle.route.current_lane
            logger.warning("vehicle %s: %s; staying in lane %d", vehicle.id, exc, source)
            vehicle.route = replace(vehicle.route, current_lane=source, lane_change_from=None)
            target = self._reference(vehicle)
        hold = None
        if vehicle.route.lane_change_from is not None:
            hold = self._reference(vehicle, lane=vehicle.route.lane_change_from)
        return target, hold

    def _lane_of(self, state: VehicleState) -> Optional[int]:
        hit = self.network.query_road(state.position)
        return hit.lane if hit is not None else None

    def step(self, order: Optional[Sequence[str]] = None) -> StepReport:
        """Advance the simulation by one time step

        All controllers see the states frozen at the start of the step;
        results are committed in id order. `order` only permutes the
        evaluation order of phases 1-3.
        """
        if not self._started:
            self.begin()
        t = self.t
        report = StepReport(t, self.clock.step_index)
        active = self._active()
        if order is not None:
            rank = {vid: i for i, vid in enumerate(order)}
            active = sorted(active, key=lambda v: rank.get(v.id, len(rank)))
        snapshot = {v.id: v.state for v in active}
        sensable = [SensedVehicle(vid, v.state, self._lane_of(v.state))
                    for vid, v in sorted(self.vehicles.items())
                    if v.status in (VehicleStatus.ACTIVE, VehicleStatus.CRASHED)]

        # Phase 1: route and reference
        plans: Dict[str, Tuple[Optional[Trajectory], Optional[Trajectory]]] = {}
        for v in active:
            try:
                plans[v.id] = self._plan(v)
            except GuidanceError as exc:
                logger.warning("vehicle %s: %s", v.id, exc)
                plans[v.id] = (None, None)

        # Phase 2: perception
        perceptions: Dict[str, PerceptionData] = {}
        for v in active:
            data = sense(v.id, snapshot[v.id], sensable, v.sensor, t)
            perceptions[v.id] = add_noise(data, v.rng, v.sensor)

        # Phase 3: control
        base = {}
        for v in active:
            acc = find_acc(v.controller)
            if acc is not None:
                base[v.id] = acc.base_params
        live = {vid: d for vid, d in self.directives.items()
                if vid in snapshot}
        overrides = platoon_step(live, perceptions, base, t, self.merge_ramp_time)
        inputs: Dict[str, ControlInput] = {}
        approved: Dict[str, bool] = {}
        for v in active:
            acc = find_acc(v.controller)
            if acc is not None and v.id in overrides:
                acc.apply_override(overrides[v.id])
            target, hold = plans[v.id]
            traj = target
            if v.route.lane_change_from is not None:
                decision = lane_change_supervisor(snapshot[v.id], perceptions[v.id], v.route,
                                                  self.network.segment(
                                                      v.route.current_segment).spec.lane_width,
                                                  v.lane_change)
                approved[v.id] = decision == LaneChangeDecision.PROCEED
                if not approved[v.id]:
                    traj = hold
            v.reference = traj
            try:
                u = v.controller.compute(snapshot[v.id], perceptions[v.id], traj, t)
            except PlatoonSimError as exc:
                logger.warning("vehicle %s controller fault: %s", v.id, exc)
                u = ControlInput(0.0, 0.0)
            inputs[v.id] = v.dynamics.saturate(u)

        # Phase 4: state update, committed in id order
        for v in sorted(active, key=lambda veh: veh.id):
            if approved.get(v.id):
                logger.debug("t=%.2f vehicle %s changes from lane %d to %d", t, v.id,
                             v.route.lane_change_from, v.route.current_lane)
                v.route = replace(v.route, lane_change_from=None)
            v.last_input = inputs[v.id]
            try:
                v.state = integrate_step(v.dynamics, snapshot[v.id], inputs[v.id], t, self.dt)
            except NonFiniteState as exc:
                logger.warning("vehicle %s: %s", v.id, exc)
                self._set_status(v, VehicleStatus.CRASHED, 'non-finite state', report)

        self.clock.advance()
        report.t = self.t
        report.step_index = self.clock.step_index

        for v in sorted(active, key=lambda veh: veh.id):
            if v.status != VehicleStatus.ACTIVE:
                continue
            status = classify_status(v, self.network, self.crash_margin)
            if status == VehicleStatus.PARKED:
                self._set_status(v, status, 'left the network', report)
                self.parking_lot.arrive(v.id)
                v.reference = None
            elif status == VehicleStatus.CRASHED:
                self._set_status(v, status, 'left the lane boundaries', report)

        if self.parking_lot is not None:
            self.parking_lot.tick(self.clock, self._lot_rng)
            self._release_due(report)

        report.records = self._log()
        return report

    def _release_due(self, report: StepReport) -> None:
        lot = self.parking_lot
        for entry in lot.due(self.t):
            try:
                self._reenter(entry)
            except BlockedExit as exc:
                logger.info("t=%.2f %s; retrying next step", self.t, exc)
                lot.defer(entry, self.dt)
                continue
            lot.remove(entry)
            release = Release(entry.vehicle_id, entry.exit_point, entry.release_time, self.t)
            report.releases.append(release)
            self.releases.append(release)
            self._set_status(self.vehicles[entry.vehicle_id], VehicleStatus.ACTIVE,
                             f"released at {entry.exit_point[0]}.{entry.exit_point[1]}", report)

    def _reenter(self, entry: PendingRelease) -> None:
        vehicle = self.vehicles[entry.vehicle_id]
        segment_id, port = entry.exit_point
        pose = self.network.entry_pose(segment_id, port, 1)
        if not self._spawn_clear(pose.position, exclude=vehicle.id):
            raise BlockedExit(f"exit {segment_id}.{port} is blocked for {vehicle.id}")
        speed = self.network.segment(segment_id).spec.speed_limit
        vehicle.state = VehicleState(pose.x, pose.y, pose.theta, speed)
        vehicle.route = advance_route(RouteState(pending=vehicle.initial_route, current_lane=1),
                                      segment_id, port, self.network)
        vehicle.last_input = ControlInput()

    def steps_for(self, duration: float) -> int:
        return int(math.ceil(duration / self.dt - 1e-9))

    def run(self, duration: float) -> List[StepReport]:
        return [self.step() for _ in range(self.steps_for(duration))]

    # -- views -------------------------------------------------------------

    def status_counts(self) -> Dict[str, int]:
        counts = {s.value: 0 for s in VehicleStatus}
        for v in self.vehicles.values():
            counts[v.status.value] += 1
        return counts

    def snapshot(self) -> EnvSnapshot:
        vehicles = tuple(VehicleSnapshot(vid, v.state, v.status, v.reference)
                         for vid, v in sorted(self.vehicles.items()) if v.placed)
        return EnvSnapshot(self.t, self.clock.step_index, self.network, vehicles,
                           self.vehicle_length, self.vehicle_width)

    def log_frame(self) -> pd.DataFrame:
        return records_to_frame(self.records)

    def write_log(self, path) -> None:
        self.log_frame().to_csv(path, index=False)

    def acc_base_params(self) -> Dict[str, AccParams]:
        return {vid: acc.base_params for vid, v in self.vehicles.items()
                if (acc := find_acc(v.controller)) is not None}
