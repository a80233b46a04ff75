"""
Planar geometry kernel

Poses and frame transforms in the global world frame, arc and line
primitives, polyline sampling, the curve-straight-curve (CSC) Dubins
planner used for automatic road generation, and the Trajectory
container shared by the road network, guidance and control modules.

All types here are immutable values and every function is pure.

Author: Platoon-Sim Team
Version: 1.0.0
"""

import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import NoCscSolution

TWO_PI = 2.0 * math.pi

# Components shorter than this are flagged degenerate and never instantiated
EPSILON_LEN = 1e-6

# Sweeps closer than this to a full turn are snapped to zero
_FULL_TURN_SNAP = 1e-9

# Coincident circle centres
_CENTER_EPS = 1e-9

# Consecutive polyline points closer than this are merged at joints
JOINT_EPS = 1e-9


def normalize_angle(angle: float) -> float:
    """Map an angle to (-pi, pi]; -pi maps to +pi"""
    wrapped = math.remainder(angle, TWO_PI)
    if wrapped <= -math.pi:
        wrapped = math.pi
    return wrapped


def wrap_angles(angles: np.ndarray) -> np.ndarray:
    """Vectorized normalize_angle"""
    return np.pi - np.mod(np.pi - np.asarray(angles, dtype=float), TWO_PI)


@dataclass(frozen=True)
class Vec2:
    """Planar vector in meters"""
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Vec2 components must be finite, got ({self.x}, {self.y})")

    def __add__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x + other.x, self.y + other.y)

    def __sub__(self, other: "Vec2") -> "Vec2":
        return Vec2(self.x - other.x, self.y - other.y)

    def __mul__(self, scale: float) -> "Vec2":
        return Vec2(self.x * scale, self.y * scale)

    __rmul__ = __mul__

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def angle(self) -> float:
        return normalize_angle(math.atan2(self.y, self.x))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])


@dataclass(frozen=True)
class Pose2D:
    """Planar pose; theta is CCW from the global +x axis, kept in (-pi, pi]"""
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.theta)):
            raise ValueError(f"Pose2D must be finite, got ({self.x}, {self.y}, {self.theta})")
        object.__setattr__(self, 'theta', normalize_angle(self.theta))

    @property
    def position(self) -> Vec2:
        return Vec2(self.x, self.y)

    def heading_vector(self) -> Vec2:
        return Vec2(math.cos(self.theta), math.sin(self.theta))

    def left_normal(self) -> Vec2:
        return Vec2(-math.sin(self.theta), math.cos(self.theta))


IDENTITY = Pose2D(0.0, 0.0, 0.0)


def rotate(vec: Vec2, angle: float) -> Vec2:
    """Rotate a vector CCW by angle"""
    c, s = math.cos(angle), math.sin(angle)
    return Vec2(c * vec.x - s * vec.y, s * vec.x + c * vec.y)


def compose(parent: Pose2D, child_in_parent: Pose2D) -> Pose2D:
    """Express a pose given in the parent's frame in the parent's own frame

    Args:
        parent: pose of the parent frame
        child_in_parent: pose relative to the parent

    Returns:
        Pose2D: the child pose one frame up
    """
    c, s = math.cos(parent.theta), math.sin(parent.theta)
    return Pose2D(
        parent.x + c * child_in_parent.x - s * child_in_parent.y,
        parent.y + s * child_in_parent.x + c * child_in_parent.y,
        parent.theta + child_in_parent.theta,
    )


def inverse(pose: Pose2D) -> Pose2D:
    """Inverse transform, so that compose(pose, inverse(pose)) is the identity"""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Pose2D(-(c * pose.x + s * pose.y), s * pose.x - c * pose.y, -pose.theta)


def transform_point(pose: Pose2D, point: Vec2) -> Vec2:
    """Map a point from the pose's local frame to the parent frame"""
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    return Vec2(pose.x + c * point.x - s * point.y, pose.y + s * point.x + c * point.y)


def to_body_frame(observer: Pose2D, point_global: Vec2) -> Vec2:
    """Global point expressed in the observer's body frame (+x along heading)"""
    dx = point_global.x - observer.x
    dy = point_global.y - observer.y
    c, s = math.cos(observer.theta), math.sin(observer.theta)
    return Vec2(c * dx + s * dy, -s * dx + c * dy)


def to_global_frame(observer: Pose2D, point_body: Vec2) -> Vec2:
    """Inverse of to_body_frame"""
    return transform_point(observer, point_body)


def _left(angle: float) -> Vec2:
    return Vec2(-math.sin(angle), math.cos(angle))


# ---------------------------------------------------------------------------
# Path components
# ---------------------------------------------------------------------------

def _subdivisions(length: float, spacing: float) -> int:
    return max(1, int(math.ceil(length / spacing - 1e-9)))


@dataclass(frozen=True)
class ArcComponent:
    """Circular arc

    Attributes:
        center: arc centre
        radius: arc radius (> 0 unless the arc is degenerate)
        start_angle: polar angle of the start point about the centre
        sweep: signed swept angle, positive = CCW (left turn)
    """
    center: Vec2
    radius: float
    start_angle: float
    sweep: float

    @property
    def turn(self) -> int:
        return 1 if self.sweep >= 0 else -1

    @property
    def length(self) -> float:
        return abs(self.sweep) * self.radius

    @property
    def curvature(self) -> float:
        return self.turn / self.radius if self.radius > 0 else 0.0

    def pose_at(self, s: float) -> Pose2D:
        phi = self.start_angle + self.turn * s / self.radius
        return Pose2D(
            self.center.x + self.radius * math.cos(phi),
            self.center.y + self.radius * math.sin(phi),
            phi + self.turn * math.pi / 2.0,
        )

    @property
    def start_pose(self) -> Pose2D:
        return self.pose_at(0.0)

    @property
    def end_pose(self) -> Pose2D:
        phi = self.start_angle + self.sweep
        return Pose2D(
            self.center.x + self.radius * math.cos(phi),
            self.center.y + self.radius * math.sin(phi),
            phi + self.turn * math.pi / 2.0,
        )

    def sample(self, spacing: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Evenly spaced samples including both endpoints"""
        n = _subdivisions(self.length, spacing)
        phi = self.start_angle + np.linspace(0.0, self.sweep, n + 1)
        xs = self.center.x + self.radius * np.cos(phi)
        ys = self.center.y + self.radius * np.sin(phi)
        return xs, ys, wrap_angles(phi + self.turn * np.pi / 2.0)

    def offset(self, lateral: float) -> "ArcComponent":
        """Parallel arc shifted leftward (w.r.t. travel) by lateral"""
        return ArcComponent(self.center, self.radius - self.turn * lateral,
                            self.start_angle, self.sweep)

    def transformed(self, pose: Pose2D) -> "ArcComponent":
        return ArcComponent(transform_point(pose, self.center), self.radius,
                            self.start_angle + pose.theta, self.sweep)

    def reversed(self) -> "ArcComponent":
        return ArcComponent(self.center, self.radius,
                            self.start_angle + self.sweep, -self.sweep)

    def distance_to(self, point: Vec2) -> float:
        return abs((point - self.center).norm() - self.radius)


@dataclass(frozen=True)
class LineComponent:
    """Straight line from start to end; heading is kept for zero-length lines"""
    start: Vec2
    end: Vec2
    direction: Optional[float] = None

    @property
    def length(self) -> float:
        return (self.end - self.start).norm()

    @property
    def heading(self) -> float:
        if self.direction is not None:
            return normalize_angle(self.direction)
        delta = self.end - self.start
        return math.atan2(delta.y, delta.x)

    @property
    def curvature(self) -> float:
        return 0.0

    def pose_at(self, s: float) -> Pose2D:
        h = self.heading
        return Pose2D(self.start.x + s * math.cos(h), self.start.y + s * math.sin(h), h)

    @property
    def start_pose(self) -> Pose2D:
        return Pose2D(self.start.x, self.start.y, self.heading)

    @property
    def end_pose(self) -> Pose2D:
        return Pose2D(self.end.x, self.end.y, self.heading)

    def sample(self, spacing: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = _subdivisions(self.length, spacing)
        t = np.linspace(0.0, 1.0, n + 1)
        xs = self.start.x + t * (self.end.x - self.start.x)
        ys = self.start.y + t * (self.end.y - self.start.y)
        return xs, ys, np.full(n + 1, self.heading)

    def offset(self, lateral: float) -> "LineComponent":
        shift = _left(self.heading) * lateral
        return LineComponent(self.start + shift, self.end + shift, self.direction)

    def transformed(self, pose: Pose2D) -> "LineComponent":
        direction = None if self.direction is None else self.direction + pose.theta
        return LineComponent(transform_point(pose, self.start),
                             transform_point(pose, self.end), direction)

    def reversed(self) -> "LineComponent":
        direction = None if self.direction is None else self.direction + math.pi
        return LineComponent(self.end, self.start, direction)


PathComponent = Union[ArcComponent, LineComponent]


def sample_components(components: Sequence[PathComponent],
                      spacing: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Sample a chain of components into x, y, heading arrays

    Zero-length components are skipped and the shared point at every
    joint appears once.
    """
    if spacing <= 0:
        raise ValueError(f"spacing must be positive, got {spacing}")
    xs: List[np.ndarray] = []
    ys: List[np.ndarray] = []
    hs: List[np.ndarray] = []
    for comp in components:
        if comp.length <= 1e-12:
            continue
        x, y, h = comp.sample(spacing)
        if xs:
            x, y, h = x[1:], y[1:], h[1:]
        xs.append(x)
        ys.append(y)
        hs.append(h)
    if not xs:
        return np.empty(0), np.empty(0), np.empty(0)
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(hs)


# ---------------------------------------------------------------------------
# Dubins CSC planner
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CSCPlan:
    """Curve-straight-curve plan between two poses

    Attributes:
        word: one of LSL, RSR, LSR, RSL
        first_arc, straight, second_arc: the three components in travel order
        degenerate_flags: names of components shorter than EPSILON_LEN
        start, goal: the planned endpoints
    """
    word: str
    first_arc: ArcComponent
    straight: LineComponent
    second_arc: ArcComponent
    degenerate_flags: frozenset
    start: Pose2D
    goal: Pose2D

    @property
    def length(self) -> float:
        return self.first_arc.length + self.straight.length + self.second_arc.length

    def components(self) -> List[Tuple[str, PathComponent]]:
        return [('first_arc', self.first_arc), ('straight', self.straight),
                ('second_arc', self.second_arc)]

    def active_components(self) -> List[Tuple[str, PathComponent]]:
        """Components that are long enough to become road segments"""
        return [(name, comp) for name, comp in self.components()
                if name not in self.degenerate_flags]


_WORDS: Tuple[Tuple[str, int, int], ...] = (
    ('LSL', 1, 1),
    ('RSR', -1, -1),
    ('LSR', 1, -1),
    ('RSL', -1, 1),
)


def _turn_center(pose: Pose2D, radius: float, turn: int) -> Vec2:
    return pose.position + _left(pose.theta) * (turn * radius)


def _sweep(from_heading: float, to_heading: float, turn: int) -> float:
    if turn > 0:
        sweep = math.fmod(to_heading - from_heading, TWO_PI)
        if sweep < 0:
            sweep += TWO_PI
    else:
        sweep = math.fmod(from_heading - to_heading, TWO_PI)
        if sweep < 0:
            sweep += TWO_PI
        sweep = -sweep
    if TWO_PI - abs(sweep) < _FULL_TURN_SNAP:
        sweep = 0.0
    return sweep


def _word_plan(word: str, k1: int, k2: int, start: Pose2D, goal: Pose2D,
               r: float) -> Optional[CSCPlan]:
    c1 = _turn_center(start, r, k1)
    c2 = _turn_center(goal, r, k2)
    delta = c2 - c1
    d = delta.norm()

    if k1 == k2:
        if d < _CENTER_EPS:
            # Both poses on one circle: the whole turn happens on the first arc
            phi = goal.theta
        else:
            phi = math.atan2(delta.y, delta.x)
    else:
        disc = d * d - 4.0 * r * r
        if disc < -1e-12:
            return None
        ell = math.sqrt(max(disc, 0.0))
        if k1 > 0:
            phi = math.atan2(delta.y, delta.x) + math.atan2(2.0 * r, ell)
        else:
            phi = math.atan2(delta.y, delta.x) - math.atan2(2.0 * r, ell)

    tangent_1 = c1 - _left(phi) * (k1 * r)
    tangent_2 = c2 - _left(phi) * (k2 * r)
    if k1 == k2 and d < _CENTER_EPS:
        tangent_2 = tangent_1

    first = ArcComponent(c1, r, start.theta - k1 * math.pi / 2.0,
                         _sweep(start.theta, phi, k1))
    straight = LineComponent(tangent_1, tangent_2, direction=phi)
    second = ArcComponent(c2, r, phi - k2 * math.pi / 2.0,
                          _sweep(phi, goal.theta, k2))

    flags = frozenset(name for name, comp in (('first_arc', first), ('straight', straight),
                                              ('second_arc', second))
                      if comp.length < EPSILON_LEN)
    return CSCPlan(word, first, straight, second, flags, start, goal)


def csc_words(start: Pose2D, goal: Pose2D, r_min: float) -> Dict[str, CSCPlan]:
    """All feasible CSC words between two poses, keyed by word"""
    if not r_min > 0:
        raise ValueError(f"r_min must be positive, got {r_min}")
    plans = {}
    for word, k1, k2 in _WORDS:
        plan = _word_plan(word, k1, k2, start, goal, r_min)
        if plan is not None:
            plans[word] = plan
    return plans


def dubins_csc(start: Pose2D, goal: Pose2D, r_min: float) -> CSCPlan:
    """Shortest CSC path from start to goal with turning radius r_min

    Length ties are broken by the fixed word order LSL, RSR, LSR, RSL.

    Args:
        start: start pose
        goal: goal pose
        r_min: minimum turning radius, > 0

    Returns:
        CSCPlan: the shortest feasible plan

    Raises:
        ValueError: if r_min is not positive
        NoCscSolution: if no CSC word is feasible
    """
    plans = csc_words(start, goal, r_min)
    best: Optional[CSCPlan] = None
    for word, _, _ in _WORDS:
        plan = plans.get(word)
        if plan is None:
            continue
        if best is None or plan.length < best.length - 1e-12 * max(1.0, best.length):
            best = plan
    if best is None:
        raise NoCscSolution(f"no CSC word connects {start} to {goal} with r_min={r_min}")
    return best


def sample_polyline(plan: CSCPlan, spacing: float) -> List[Pose2D]:
    """Sample a CSC plan at most `spacing` apart along its arc length

    Returns:
        list of Pose2D: first sample at plan.start, last at plan.goal
    """
    xs, ys, hs = sample_components([c for _, c in plan.components()], spacing)
    if xs.size == 0:
        return [plan.start, plan.goal]
    return [Pose2D(float(x), float(y), float(h)) for x, y, h in zip(xs, ys, hs)]


# ---------------------------------------------------------------------------
# Trajectory
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryPoint:
    position: Vec2
    heading: float
    speed_ref: float
    arc_length: float


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Global-frame polyline with a speed reference per point

    Attributes:
        x, y: point positions
        heading: tangent direction per point
        speed_ref: reference speed per point
        arc_length: cumulative chord length, strictly increasing
        dead_end: the route ran out of road before the planning horizon
    """
    x: np.ndarray
    y: np.ndarray
    heading: np.ndarray
    speed_ref: np.ndarray
    arc_length: np.ndarray = None
    dead_end: bool = False

    def __post_init__(self):
        n = len(self.x)
        for name in ('y', 'heading', 'speed_ref'):
            if len(getattr(self, name)) != n:
                raise ValueError(f"trajectory field '{name}' has length "
                                 f"{len(getattr(self, name))}, expected {n}")
        object.__setattr__(self, 'x', _frozen(self.x))
        object.__setattr__(self, 'y', _frozen(self.y))
        object.__setattr__(self, 'heading', _frozen(self.heading))
        object.__setattr__(self, 'speed_ref', _frozen(self.speed_ref))
        if self.arc_length is None:
            steps = np.hypot(np.diff(self.x), np.diff(self.y))
            arc = np.concatenate(([0.0], np.cumsum(steps))) if n else np.empty(0)
        else:
            arc = self.arc_length
        object.__setattr__(self, 'arc_length', _frozen(arc))
        if len(self.arc_length) != n:
            raise ValueError("arc_length does not match the number of points")
        if n > 1 and not np.all(np.diff(self.arc_length) > 0):
            raise ValueError("trajectory arc_length must be strictly increasing")

    @classmethod
    def empty(cls) -> "Trajectory":
        return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0))

    @classmethod
    def from_components(cls, components: Sequence[PathComponent], spacing: float,
                        speed_ref: float) -> "Trajectory":
        xs, ys, hs = sample_components(components, spacing)
        return cls(xs, ys, hs, np.full(xs.size, float(speed_ref)))

    @classmethod
    def concatenate(cls, parts: Iterable["Trajectory"], dead_end: bool = False) -> "Trajectory":
        """Join trajectories; a leading point coinciding with the previous end is dropped"""
        xs, ys, hs, vs = [], [], [], []
        last: Optional[Tuple[float, float]] = None
        for part in parts:
            if len(part) == 0:
                continue
            start = 0
            if last is not None and math.hypot(part.x[0] - last[0], part.y[0] - last[1]) <= JOINT_EPS:
                start = 1
            xs.append(part.x[start:])
            ys.append(part.y[start:])
            hs.append(part.heading[start:])
            vs.append(part.speed_ref[start:])
            last = (part.x[-1], part.y[-1])
        if not xs:
            return cls(np.empty(0), np.empty(0), np.empty(0), np.empty(0), dead_end=dead_end)
        return cls(np.concatenate(xs), np.concatenate(ys), np.concatenate(hs),
                   np.concatenate(vs), dead_end=dead_end)

    def __len__(self) -> int:
        return len(self.x)

    @property
    def length(self) -> float:
        return float(self.arc_length[-1]) if len(self) else 0.0

    @property
    def positions(self) -> np.ndarray:
        return np.column_stack((self.x, self.y))

    @property
    def points(self) -> List[TrajectoryPoint]:
        return [TrajectoryPoint(Vec2(float(x), float(y)), float(h), float(v), float(s))
                for x, y, h, v, s in zip(self.x, self.y, self.heading,
                                         self.speed_ref, self.arc_length)]

    def suffix(self, start: int) -> "Trajectory":
        """Points from index `start` on, arc_length re-based to 0"""
        arc = self.arc_length[start:]
        base = arc[0] if len(arc) else 0.0
        return Trajectory(self.x[start:], self.y[start:], self.heading[start:],
                          self.speed_ref[start:], arc - base, dead_end=self.dead_end)

    def window(self, start: int, length: float) -> "Trajectory":
        """Suffix from `start` truncated to the first `length` meters"""
        tail = self.suffix(start)
        stop = int(np.searchsorted(tail.arc_length, length, side='right'))
        stop = max(stop, 1)
        return Trajectory(tail.x[:stop], tail.y[:stop], tail.heading[:stop],
                          tail.speed_ref[:stop], tail.arc_length[:stop],
                          dead_end=self.dead_end)

    def nearest_index(self, x: float, y: float) -> int:
        if not len(self):
            raise ValueError("empty trajectory has no nearest point")
        return int(np.argmin(np.hypot(self.x - x, self.y - y)))
