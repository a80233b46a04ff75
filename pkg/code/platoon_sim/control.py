"""
Controllers

Controller interfaces (combined, or split into lateral and longitudinal
parts) and the reference implementations: pure pursuit lane tracking,
constant time-headway adaptive cruise control, a gap-window lane change
check, and platoon follow/split/merge supervision.

Author: Platoon-Sim Team
Version: 1.0.0
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from enum import Enum
from typing import Dict, Mapping, Optional

import networkx as nx

from .dynamics import BicycleParams, ControlInput, VehicleState
from .errors import CyclicLeadership, EmptyTrajectory
from .geometry import Trajectory, Vec2, to_body_frame
from .guidance import RoutePrimitive, RouteState
from .perception import NeighborMeasurement, PerceptionData

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Interfaces
# ---------------------------------------------------------------------------

class CombinedController(ABC):
    """Computes the full control input in one call"""

    @abstractmethod
    def compute(self, state: VehicleState, perception: PerceptionData,
                trajectory: Optional[Trajectory], t: float) -> ControlInput:
        ...


class LateralController(ABC):

    @abstractmethod
    def steer(self, state: VehicleState, perception: PerceptionData,
              trajectory: Optional[Trajectory], t: float) -> float:
        ...


class LongitudinalController(ABC):

    @abstractmethod
    def accelerate(self, state: VehicleState, perception: PerceptionData,
                   trajectory: Optional[Trajectory], t: float) -> float:
        ...


class SplitController(CombinedController):
    """A lateral and a longitudinal controller behind the combined interface"""

    def __init__(self, lateral: LateralController, longitudinal: LongitudinalController,
                 limits: Optional[BicycleParams] = None):
        self.lateral = lateral
        self.longitudinal = longitudinal
        self.limits = limits or BicycleParams()

    def compute(self, state, perception, trajectory, t):
        delta = self.lateral.steer(state, perception, trajectory, t) if trajectory is not None else 0.0
        a = self.longitudinal.accelerate(state, perception, trajectory, t)
        return self.limits.clamp(ControlInput(a, delta))


class ZeroController(CombinedController):
    """Always outputs zero acceleration and zero steering"""

    def compute(self, state, perception, trajectory, t):
        return ControlInput(0.0, 0.0)


# ---------------------------------------------------------------------------
# Lane tracking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PurePursuitParams:
    """Lookahead distance L0 + k_L * v and the vehicle wheelbase"""
    lookahead_base: float = 4.0
    lookahead_gain: float = 0.4
    wheelbase: float = 2.5

    def __post_init__(self):
        if self.lookahead_base <= 0:
            raise ValueError("lookahead_base must be positive")
        if self.lookahead_gain < 0:
            raise ValueError("lookahead_gain must be >= 0")


def pure_pursuit_steer(s: VehicleState, traj: Trajectory, p: PurePursuitParams,
                       delta_max: float = 0.6) -> float:
    """Pure pursuit steering angle towards the lookahead point of a trajectory

    Raises:
        EmptyTrajectory: the trajectory has no points
    """
    if len(traj) == 0:
        raise EmptyTrajectory("pure pursuit needs at least one trajectory point")
    lookahead = p.lookahead_base + p.lookahead_gain * max(s.v, 0.0)
    reached = traj.arc_length >= lookahead
    idx = int(reached.argmax()) if reached.any() else len(traj) - 1
    target = to_body_frame(s.pose, _point(traj, idx))
    distance = target.norm()
    if distance < 1e-9:
        return 0.0
    alpha = math.atan2(target.y, target.x)
    delta = math.atan(2.0 * p.wheelbase * math.sin(alpha) / distance)
    return min(max(delta, -delta_max), delta_max)


def _point(traj: Trajectory, idx: int) -> Vec2:
    return Vec2(float(traj.x[idx]), float(traj.y[idx]))


class PurePursuitController(LateralController):

    def __init__(self, params: Optional[PurePursuitParams] = None,
                 limits: Optional[BicycleParams] = None):
        self.params = params or PurePursuitParams()
        self.limits = limits or BicycleParams()

    def steer(self, state, perception, trajectory, t):
        return pure_pursuit_steer(state, trajectory, self.params, self.limits.delta_max)


# ---------------------------------------------------------------------------
# Adaptive cruise control
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AccParams:
    """Constant time-headway spacing policy: desired gap d0 + h * v"""
    standstill_gap: float = 5.0
    time_headway: float = 1.0
    gain_gap: float = 0.2
    gain_speed: float = 0.7
    cruise_speed: float = 15.0

    def __post_init__(self):
        for name in ('standstill_gap', 'time_headway', 'gain_gap', 'gain_speed', 'cruise_speed'):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")


def select_leader(percep: PerceptionData, lane_width: float,
                  leader_id: Optional[str] = None) -> Optional[NeighborMeasurement]:
    """Designated leader if seen ahead, else the nearest same-lane vehicle ahead"""
    if leader_id is not None:
        designated = percep.get(leader_id)
        if designated is not None and designated.rel_position.x > 0:
            return designated
    for n in percep.neighbors:
        if n.rel_position.x > 0 and abs(n.rel_position.y) < lane_width / 2.0:
            return n
    return None


def acc_accel(s: VehicleState, percep: PerceptionData, p: AccParams,
              limits: Optional[BicycleParams] = None, lane_width: float = 4.0,
              vehicle_length: float = 0.0, leader_id: Optional[str] = None,
              target_speed: Optional[float] = None) -> float:
    """Constant time-headway ACC law

    With a same-lane leader ahead: k_g (gap - d0 - h v) + k_v (v_leader - v),
    capped by the cruise term when a target speed is given; otherwise
    k_v (cruise - v). The gap is the body-frame longitudinal distance minus
    the vehicle length. Output is clamped to the acceleration limits.
    """
    limits = limits or BicycleParams()
    leader = select_leader(percep, lane_width, leader_id)
    cruise = p.cruise_speed if target_speed is None else min(p.cruise_speed, target_speed)
    free = p.gain_speed * (cruise - s.v)
    if leader is None:
        a = free
    else:
        gap = leader.rel_position.x - vehicle_length
        v_leader = s.v + leader.rel_velocity.x
        a = p.gain_gap * (gap - p.standstill_gap - p.time_headway * s.v) \
            + p.gain_speed * (v_leader - s.v)
        if target_speed is not None:
            a = min(a, free)
    return min(max(a, limits.a_min), limits.a_max)


class AdaptiveCruiseController(LongitudinalController):
    """ACC with platoon leader designation and the merge gap ramp

    Attributes:
        base_params: configured gains and spacing
        params: parameters currently in force (after platoon overrides)
        leader_id: designated leader, if any
        last_leader_id: vehicle followed in the last evaluation
    """

    def __init__(self, params: Optional[AccParams] = None,
                 limits: Optional[BicycleParams] = None,
                 lane_width: float = 4.0, vehicle_length: float = 4.5):
        self.base_params = params or AccParams()
        self.params = self.base_params
        self.limits = limits or BicycleParams()
        self.lane_width = lane_width
        self.vehicle_length = vehicle_length
        self.leader_id: Optional[str] = None
        self.last_leader_id: Optional[str] = None
        self._ramp_time = 0.0
        self._ramp_issued: Optional[float] = None
        self._ramp_start: Optional[float] = None
        self._ramp_from = 0.0

    def apply_override(self, override: "AccOverride") -> None:
        self.leader_id = override.leader_id
        self.params = override.params
        if override.ramp_time > 0:
            if override.issued_at != self._ramp_issued:
                self._ramp_issued = override.issued_at
                self._ramp_time = override.ramp_time
                self._ramp_start = None
        else:
            self._ramp_time = 0.0
            self._ramp_issued = None

    def effective_params(self, percep: PerceptionData, state: VehicleState,
                         t: float) -> AccParams:
        if self._ramp_time <= 0 or self.leader_id is None:
            return self.params
        if self._ramp_start is None:
            leader = percep.get(self.leader_id)
            if leader is None or leader.rel_position.x <= 0:
                return self.params
            gap = leader.rel_position.x - self.vehicle_length
            self._ramp_start = t
            self._ramp_from = max(self.params.standstill_gap,
                                  gap - self.params.time_headway * state.v)
            logger.debug("merge ramp towards %s starts at t=%.2f from d0=%.2f",
                         self.leader_id, t, self._ramp_from)
        frac = max(0.0, 1.0 - (t - self._ramp_start) / self._ramp_time)
        d0 = self.params.standstill_gap + (self._ramp_from - self.params.standstill_gap) * frac
        return replace(self.params, standstill_gap=d0)

    def accelerate(self, state, perception, trajectory, t):
        params = self.effective_params(perception, state, t)
        target = None
        if trajectory is not None and len(trajectory):
            target = float(trajectory.speed_ref.min())
        leader = select_leader(perception, self.lane_width, self.leader_id)
        self.last_leader_id = leader.vehicle_id if leader is not None else None
        return acc_accel(state, perception, params, self.limits, self.lane_width,
                         self.vehicle_length, self.leader_id, target)


# ---------------------------------------------------------------------------
# Lane change supervision
# ---------------------------------------------------------------------------

class LaneChangeDecision(Enum):
    PROCEED = 'proceed'
    HOLD = 'hold'


@dataclass(frozen=True)
class LaneChangeParams:
    """Longitudinal window in the target lane that must be free"""
    lead_clear: float = 10.0
    lag_clear: float = 10.0


def lane_change_side(route: RouteState) -> int:
    """+1 for a change to the left, -1 to the right, 0 when none is pending"""
    if route.lane_change_from is not None:
        diff = route.current_lane - route.lane_change_from
        return (diff > 0) - (diff < 0)
    if route.active == RoutePrimitive.LEFT:
        return 1
    if route.active == RoutePrimitive.RIGHT:
        return -1
    return 0


def lane_change_supervisor(s: VehicleState, percep: PerceptionData, route: RouteState,
                           lane_width: float = 4.0,
                           params: Optional[LaneChangeParams] = None) -> LaneChangeDecision:
    """Proceed unless a vehicle occupies the target-lane window around the ego"""
    params = params or LaneChangeParams()
    side = lane_change_side(route)
    if side == 0:
        return LaneChangeDecision.PROCEED
    for n in percep.neighbors:
        in_lane = abs(n.rel_position.y - side * lane_width) < lane_width / 2.0
        in_window = -params.lag_clear <= n.rel_position.x <= params.lead_clear
        if in_lane and in_window:
            return LaneChangeDecision.HOLD
    return LaneChangeDecision.PROCEED


# ---------------------------------------------------------------------------
# Platoon supervision
# ---------------------------------------------------------------------------

class DirectiveKind(Enum):
    FOLLOW = 'follow'
    SPLIT = 'split'
    MERGE = 'merge'


@dataclass(frozen=True)
class PlatoonDirective:
    """Platoon role of one vehicle

    Attributes:
        kind: follow, split or merge
        leader_id: vehicle to follow (follow and split)
        gap_target: standstill gap to open up to (split)
        target: vehicle to merge behind (merge)
        issued_at: simulation time the directive was issued
    """
    kind: DirectiveKind
    leader_id: Optional[str] = None
    gap_target: Optional[float] = None
    target: Optional[str] = None
    issued_at: float = 0.0

    def __post_init__(self):
        if self.kind == DirectiveKind.SPLIT and not (self.gap_target and self.gap_target > 0):
            raise ValueError("split directive needs a positive gap_target")
        if self.kind == DirectiveKind.MERGE and self.target is None:
            raise ValueError("merge directive needs a target vehicle")

    @property
    def leader(self) -> Optional[str]:
        return self.target if self.kind == DirectiveKind.MERGE else self.leader_id


@dataclass(frozen=True)
class AccOverride:
    """Per-vehicle ACC settings produced by platoon supervision"""
    leader_id: Optional[str]
    params: AccParams
    ramp_time: float = 0.0
    issued_at: float = 0.0
    leader_visible: bool = False


def leadership_graph(directives: Mapping[str, PlatoonDirective]) -> nx.DiGraph:
    """Follower -> leader edges of the directive set"""
    graph = nx.DiGraph()
    for vid, directive in directives.items():
        graph.add_node(vid)
        if directive.leader is not None:
            graph.add_edge(vid, directive.leader)
    return graph


def platoon_step(directives: Mapping[str, PlatoonDirective],
                 perceptions: Mapping[str, PerceptionData],
                 base_params: Mapping[str, AccParams], t: float,
                 ramp_time: float = 10.0) -> Dict[str, AccOverride]:
    """ACC overrides for every vehicle with a directive

    Follow keeps the platoon parameters, Split raises d0 to gap_target,
    Merge retargets the leader and asks the controller to ramp d0 down
    over ramp_time.

    Raises:
        CyclicLeadership: the follower -> leader relation has a cycle
    """
    graph = leadership_graph(directives)
    if not nx.is_directed_acyclic_graph(graph):
        cycle = nx.find_cycle(graph)
        raise CyclicLeadership(f"leader cycle {' -> '.join(u for u, _ in cycle)}")
    overrides: Dict[str, AccOverride] = {}
    for vid in sorted(directives):
        directive = directives[vid]
        base = base_params.get(vid, AccParams())
        percep = perceptions.get(vid)
        leader = directive.leader
        visible = bool(percep is not None and leader is not None and percep.get(leader) is not None)
        if directive.kind == DirectiveKind.SPLIT:
            params = replace(base, standstill_gap=directive.gap_target)
            overrides[vid] = AccOverride(leader, params, issued_at=directive.issued_at,
                                         leader_visible=visible)
        elif directive.kind == DirectiveKind.MERGE:
            overrides[vid] = AccOverride(leader, base, ramp_time=ramp_time,
                                         issued_at=directive.issued_at, leader_visible=visible)
        else:
            overrides[vid] = AccOverride(leader, base, issued_at=directive.issued_at,
                                         leader_visible=visible)
    return overrides


def find_acc(controller: CombinedController) -> Optional[AdaptiveCruiseController]:
    """The ACC inside a controller, if it has one"""
    if isinstance(controller, SplitController) and \
            isinstance(controller.longitudinal, AdaptiveCruiseController):
        return controller.longitudinal
    return None
