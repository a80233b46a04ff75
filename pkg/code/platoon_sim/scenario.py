"""
Scenario files

A scenario is one YAML document describing the run settings, the road
network, the optional parking lot, the vehicles with their controllers
and routes, scheduled platoon directives and route updates, and the
logging configuration. This module parses and validates such files into
frozen dataclasses, serializes them back to their canonical form, and
builds a ready-to-step TrafficEnvironment.

Author: Platoon-Sim Team
Version: 1.0.0
"""

import itertools
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import networkx as nx
import yaml

from .control import (
    AccParams,
    AdaptiveCruiseController,
    DirectiveKind,
    LaneChangeParams,
    PlatoonDirective,
    PurePursuitController,
    PurePursuitParams,
    ZeroController,
    leadership_graph,
)
from .dynamics import BicycleParams, KinematicBicycle
from .engine import CHANNELS, LogConfig, TrafficEnvironment
from .errors import ParseError, PlatoonSimError, ValidationError
from .geometry import Vec2
from .guidance import RoutePrimitive
from .perception import SensorConfig
from .road_network import ParkingLotConfig, SegmentSpec, SegmentType

logger = logging.getLogger(__name__)

CONTROLLER_TYPES = ('pure_pursuit_acc', 'zero')

_SEGMENT_TYPE_NAMES = {t.name.lower(): t for t in SegmentType}


# ---------------------------------------------------------------------------
# Spec dataclasses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MetaSpec:
    """Run settings (the `meta` table)"""
    name: str = 'scenario'
    seed: int = 0
    time_step: float = 0.05
    duration: float = 60.0
    save_video: bool = False
    fps: float = 10.0

    @property
    def steps(self) -> int:
        return int(math.ceil(self.duration / self.time_step - 1e-9))

    @property
    def frame_stride(self) -> int:
        """Steps between two video frames"""
        return int(round(1.0 / (self.fps * self.time_step)))


@dataclass(frozen=True)
class SimulationSpec:
    """Engine constants (the `simulation` table)"""
    vehicle_width: float = 1.8
    vehicle_length: float = 4.5
    min_spawn_gap: float = 6.0
    horizon_segments: int = 2
    reference_spacing: float = 1.0
    reference_window: float = 50.0
    merge_ramp_time: float = 10.0


@dataclass(frozen=True)
class SegmentEntry:
    id: str
    spec: SegmentSpec


@dataclass(frozen=True)
class ConnectionSpec:
    fixed: str
    fixed_point: str
    moving: str
    moving_point: str


@dataclass(frozen=True)
class AutoConnectionSpec:
    a: str
    a_point: str
    b: str
    b_point: str
    r_min: float


@dataclass(frozen=True)
class ControllerSpec:
    type: str = 'pure_pursuit_acc'
    pure_pursuit: PurePursuitParams = field(default_factory=PurePursuitParams)
    acc: AccParams = field(default_factory=AccParams)
    lane_change: LaneChangeParams = field(default_factory=LaneChangeParams)


@dataclass(frozen=True)
class PlacementSpec:
    segment: str
    lane: int = 1
    offset: float = 0.0
    speed: float = 0.0
    entry: Optional[str] = None


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    dynamics: BicycleParams = field(default_factory=BicycleParams)
    controller: ControllerSpec = field(default_factory=ControllerSpec)
    sensor: SensorConfig = field(default_factory=SensorConfig)
    route: Tuple[str, ...] = ()
    placement: Optional[PlacementSpec] = None


@dataclass(frozen=True)
class DirectiveEvent:
    """A platoon directive issued at time t"""
    t: float
    vehicle: str
    kind: str
    leader: Optional[str] = None
    gap_target: Optional[float] = None
    target: Optional[str] = None


@dataclass(frozen=True)
class RouteUpdate:
    t: float
    vehicle: str
    route: Tuple[str, ...]


@dataclass(frozen=True)
class ScenarioSpec:
    meta: MetaSpec = field(default_factory=MetaSpec)
    simulation: SimulationSpec = field(default_factory=SimulationSpec)
    segments: Tuple[SegmentEntry, ...] = ()
    connections: Tuple[ConnectionSpec, ...] = ()
    auto_connections: Tuple[AutoConnectionSpec, ...] = ()
    parking_lot: Optional[ParkingLotConfig] = None
    vehicles: Tuple[VehicleSpec, ...] = ()
    platoon_schedule: Tuple[DirectiveEvent, ...] = ()
    route_updates: Tuple[RouteUpdate, ...] = ()
    logging: LogConfig = field(default_factory=LogConfig)

    def with_overrides(self, seed: Optional[int] = None, duration: Optional[float] = None,
                       dt: Optional[float] = None,
                       save_video: Optional[bool] = None) -> "ScenarioSpec":
        """Copy with command-line overrides applied (None keeps the file value)"""
        changes = {}
        if seed is not None:
            changes['seed'] = int(seed)
        if duration is not None:
            changes['duration'] = float(duration)
        if dt is not None:
            changes['time_step'] = float(dt)
        if save_video is not None:
            changes['save_video'] = bool(save_video)
        return replace(self, meta=replace(self.meta, **changes))


# ---------------------------------------------------------------------------
# Reading helpers
# ---------------------------------------------------------------------------

def _table(data: Any, key: str) -> Mapping:
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ValidationError(key, f"expected a mapping, got {type(data).__name__}")
    return data


def _list(data: Any, key: str) -> List:
    if data is None:
        return []
    if not isinstance(data, list):
        raise ValidationError(key, f"expected a list, got {type(data).__name__}")
    return data


def _number(table: Mapping, name: str, key: str, default: Any = None) -> Any:
    value = table.get(name)
    if value is None:
        return None if default is None else float(default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{key}.{name}", f"expected a number, got {value!r}")
    return float(value)


def _int(table: Mapping, name: str, key: str, default: Any = None) -> Any:
    value = table.get(name)
    if value is None:
        return default
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{key}.{name}", f"expected an integer, got {value!r}")
    return value


def _str(table: Mapping, name: str, key: str, default: Any = None) -> Any:
    value = table.get(name, default)
    if value is None:
        if default is None:
            raise ValidationError(f"{key}.{name}", "missing required key")
        return default
    return str(value)


def _angle(table: Mapping, stem: str, key: str, required: bool) -> Optional[float]:
    """Read `<stem>_deg` or `<stem>_rad`; at most one may be present"""
    deg, rad = table.get(f"{stem}_deg"), table.get(f"{stem}_rad")
    if deg is not None and rad is not None:
        raise ValidationError(f"{key}.{stem}_deg", f"give either {stem}_deg or {stem}_rad, not both")
    if deg is None and rad is None:
        if required:
            raise ValidationError(f"{key}.{stem}_deg", f"one of {stem}_deg or {stem}_rad is required")
        return None
    if deg is not None:
        return math.radians(_number(table, f"{stem}_deg", key))
    return _number(table, f"{stem}_rad", key)


def _build(key: str, factory, **kwargs):
    """Construct a dataclass, turning its own validation errors into ValidationError"""
    try:
        return factory(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ValidationError(key, str(exc)) from exc


def _port(value: Any, key: str) -> Tuple[str, str]:
    if isinstance(value, Mapping):
        return (_str(value, 'segment', key), _str(value, 'point', key))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return (str(value[0]), str(value[1]))
    raise ValidationError(key, f"expected [segment, point], got {value!r}")


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------

def _meta(data: Any) -> MetaSpec:
    t = _table(data, 'meta')
    defaults = MetaSpec()
    save_video = t.get('SAVE_VIDEO', defaults.save_video)
    if not isinstance(save_video, bool):
        raise ValidationError('meta.SAVE_VIDEO', f"expected true or false, got {save_video!r}")
    return MetaSpec(
        name=str(t.get('name', defaults.name)),
        seed=_int(t, 'seed', 'meta', defaults.seed),
        time_step=_number(t, 'TIME_STEP', 'meta', defaults.time_step),
        duration=_number(t, 'SIMULATION_DURATION', 'meta', defaults.duration),
        save_video=save_video,
        fps=_number(t, 'fps', 'meta', defaults.fps),
    )


def _simulation(data: Any) -> SimulationSpec:
    t = _table(data, 'simulation')
    d = SimulationSpec()
    return SimulationSpec(
        vehicle_width=_number(t, 'vehicle_width', 'simulation', d.vehicle_width),
        vehicle_length=_number(t, 'vehicle_length', 'simulation', d.vehicle_length),
        min_spawn_gap=_number(t, 'min_spawn_gap', 'simulation', d.min_spawn_gap),
        horizon_segments=_int(t, 'horizon_segments', 'simulation', d.horizon_segments),
        reference_spacing=_number(t, 'reference_spacing', 'simulation', d.reference_spacing),
        reference_window=_number(t, 'reference_window', 'simulation', d.reference_window),
        merge_ramp_time=_number(t, 'merge_ramp_time', 'simulation', d.merge_ramp_time),
    )


def _segment_type(value: Any, key: str) -> SegmentType:
    if isinstance(value, str) and value.lower() in _SEGMENT_TYPE_NAMES:
        return _SEGMENT_TYPE_NAMES[value.lower()]
    if isinstance(value, int) and not isinstance(value, bool) and value in set(SegmentType):
        return SegmentType(value)
    raise ValidationError(key, f"unknown segment type {value!r} "
                               f"(use {', '.join(_SEGMENT_TYPE_NAMES)} or 1/2/3)")


def _segment(item: Any, key: str) -> SegmentEntry:
    t = _table(item, key)
    d = SegmentSpec()
    seg_type = _segment_type(t.get('type', 'straight'), f"{key}.type")
    origin = t.get('origin', [0.0, 0.0])
    if not (isinstance(origin, (list, tuple)) and len(origin) == 2):
        raise ValidationError(f"{key}.origin", f"expected [x, y], got {origin!r}")
    sweep = _angle(t, 'sweep', key, required=False)
    spec = _build(key, SegmentSpec,
                  segment_type=seg_type,
                  length=_number(t, 'length', key, d.length),
                  radius=_number(t, 'radius', key, d.radius),
                  sweep=sweep if sweep is not None else d.sweep,
                  orientation=_angle(t, 'orientation', key, required=True),
                  lanes=_int(t, 'lanes', key, d.lanes),
                  lane_width=_number(t, 'lane_width', key, d.lane_width),
                  speed_limit=_number(t, 'speed_limit', key, d.speed_limit),
                  local_origin=_build(f"{key}.origin", Vec2, x=float(origin[0]), y=float(origin[1])))
    try:
        spec.validate()
    except PlatoonSimError as exc:
        raise ValidationError(key, str(exc)) from exc
    return SegmentEntry(_str(t, 'id', key), spec)


def _connection(item: Any, key: str) -> ConnectionSpec:
    t = _table(item, key)
    fixed, fixed_point = _port(t.get('fixed'), f"{key}.fixed")
    moving, moving_point = _port(t.get('moving'), f"{key}.moving")
    return ConnectionSpec(fixed, fixed_point, moving, moving_point)


def _auto_connection(item: Any, key: str) -> AutoConnectionSpec:
    t = _table(item, key)
    a, a_point = _port(t.get('from'), f"{key}.from")
    b, b_point = _port(t.get('to'), f"{key}.to")
    r_min = _number(t, 'r_min', key)
    if r_min is None or r_min <= 0:
        raise ValidationError(f"{key}.r_min", "must be a positive number")
    return AutoConnectionSpec(a, a_point, b, b_point, r_min)


def _parking_lot(data: Any) -> Optional[ParkingLotConfig]:
    if data is None:
        return None
    t = _table(data, 'parking_lot')
    d = ParkingLotConfig.__dataclass_fields__
    points = tuple(_port(p, f"parking_lot.exit_points[{i}]")
                   for i, p in enumerate(_list(t.get('exit_points'), 'parking_lot.exit_points')))
    return _build('parking_lot', ParkingLotConfig,
                  platoon_size=_int(t, 'platoon_size', 'parking_lot', 1),
                  exit_points=points,
                  time_sequence_interval=_number(t, 'time_sequence_interval', 'parking_lot',
                                                 d['time_sequence_interval'].default),
                  time_mean=_number(t, 'time_mean', 'parking_lot', d['time_mean'].default),
                  time_variance=_number(t, 'time_variance', 'parking_lot',
                                        d['time_variance'].default))


def _controller(data: Any, key: str) -> ControllerSpec:
    t = _table(data, key)
    kind = str(t.get('type', 'pure_pursuit_acc'))
    if kind not in CONTROLLER_TYPES:
        raise ValidationError(f"{key}.type", f"unknown controller {kind!r} "
                                             f"(use {', '.join(CONTROLLER_TYPES)})")
    pp, acc, lc = PurePursuitParams(), AccParams(), LaneChangeParams()
    return ControllerSpec(
        type=kind,
        pure_pursuit=_build(key, PurePursuitParams,
                            lookahead_base=_number(t, 'lookahead_base', key, pp.lookahead_base),
                            lookahead_gain=_number(t, 'lookahead_gain', key, pp.lookahead_gain),
                            wheelbase=pp.wheelbase),
        acc=_build(key, AccParams,
                   standstill_gap=_number(t, 'standstill_gap', key, acc.standstill_gap),
                   time_headway=_number(t, 'time_headway', key, acc.time_headway),
                   gain_gap=_number(t, 'gain_gap', key, acc.gain_gap),
                   gain_speed=_number(t, 'gain_speed', key, acc.gain_speed),
                   cruise_speed=_number(t, 'cruise_speed', key, acc.cruise_speed)),
        lane_change=_build(key, LaneChangeParams,
                           lead_clear=_number(t, 'lead_clear', key, lc.lead_clear),
                           lag_clear=_number(t, 'lag_clear', key, lc.lag_clear)),
    )


def _route(data: Any, key: str) -> Tuple[str, ...]:
    route = []
    for j, p in enumerate(_list(data, key)):
        try:
            route.append(RoutePrimitive.parse(p).value)
        except PlatoonSimError as exc:
            raise ValidationError(f"{key}[{j}]", str(exc)) from exc
    return tuple(route)


def _vehicle(item: Any, key: str) -> VehicleSpec:
    t = _table(item, key)
    vid = _str(t, 'id', key)
    dyn = _table(t.get('dynamics'), f"{key}.dynamics")
    b = BicycleParams()
    dynamics = _build(f"{key}.dynamics", BicycleParams,
                      wheelbase=_number(dyn, 'wheelbase', f"{key}.dynamics", b.wheelbase),
                      delta_max=_number(dyn, 'delta_max', f"{key}.dynamics", b.delta_max),
                      v_max=_number(dyn, 'v_max', f"{key}.dynamics", b.v_max),
                      a_min=_number(dyn, 'a_min', f"{key}.dynamics", b.a_min),
                      a_max=_number(dyn, 'a_max', f"{key}.dynamics", b.a_max))
    controller = _controller(t.get('controller'), f"{key}.controller")
    controller = replace(controller, pure_pursuit=replace(controller.pure_pursuit,
                                                          wheelbase=dynamics.wheelbase))
    sen = _table(t.get('sensor'), f"{key}.sensor")
    s = SensorConfig()
    fov = _angle(sen, 'fov', f"{key}.sensor", required=False)
    sensor = _build(f"{key}.sensor", SensorConfig,
                    fov=fov if fov is not None else s.fov,
                    range=_number(sen, 'range', f"{key}.sensor", s.range),
                    noise_sigma_pos=_number(sen, 'noise_sigma_pos', f"{key}.sensor",
                                            s.noise_sigma_pos),
                    noise_sigma_vel=_number(sen, 'noise_sigma_vel', f"{key}.sensor",
                                            s.noise_sigma_vel))
    placement = None
    if t.get('placement') is not None:
        pk = f"{key}.placement"
        p = _table(t['placement'], pk)
        entry = p.get('entry')
        placement = PlacementSpec(segment=_str(p, 'segment', pk),
                                  lane=_int(p, 'lane', pk, 1),
                                  offset=_number(p, 'offset', pk, 0.0),
                                  speed=_number(p, 'speed', pk, 0.0),
                                  entry=str(entry) if entry is not None else None)
    return VehicleSpec(vid, dynamics, controller, sensor, _route(t.get('route'), f"{key}.route"),
                       placement)


def _directive(item: Any, key: str) -> DirectiveEvent:
    t = _table(item, key)
    kind = _str(t, 'kind', key)
    if kind not in {k.value for k in DirectiveKind}:
        raise ValidationError(f"{key}.kind", f"unknown directive {kind!r}")
    event = DirectiveEvent(t=_number(t, 't', key, 0.0), vehicle=_str(t, 'vehicle', key),
                           kind=kind,
                           leader=str(t['leader']) if t.get('leader') is not None else None,
                           gap_target=_number(t, 'gap_target', key),
                           target=str(t['target']) if t.get('target') is not None else None)
    _build(key, event_directive, event=event)
    return event


def _route_update(item: Any, key: str) -> RouteUpdate:
    t = _table(item, key)
    return RouteUpdate(_number(t, 't', key, 0.0), _str(t, 'vehicle', key),
                       _route(t.get('route'), f"{key}.route"))


def _logging(data: Any) -> LogConfig:
    t = _table(data, 'logging')
    channels = t.get('channels', list(CHANNELS))
    if not isinstance(channels, list):
        raise ValidationError('logging.channels', "expected a list")
    interval = t.get('interval', [0.0, None])
    if not (isinstance(interval, (list, tuple)) and len(interval) == 2):
        raise ValidationError('logging.interval', f"expected [t_start, t_end], got {interval!r}")
    start = float(interval[0]) if interval[0] is not None else 0.0
    end = float(interval[1]) if interval[1] is not None else math.inf
    return _build('logging', LogConfig, channels=frozenset(str(c) for c in channels),
                  interval=(start, end), sample_period=_number(t, 'sample_period', 'logging'))


def event_directive(event: DirectiveEvent) -> PlatoonDirective:
    return PlatoonDirective(DirectiveKind(event.kind), leader_id=event.leader,
                            gap_target=event.gap_target, target=event.target, issued_at=event.t)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def scenario_from_dict(data: Any) -> ScenarioSpec:
    """Map a loaded YAML document onto a ScenarioSpec (structure checks only)"""
    root = _table(data, '<root>')
    known = {'meta', 'simulation', 'segments', 'connections', 'auto_connections',
             'parking_lot', 'vehicles', 'platoon_schedule', 'route_updates', 'logging'}
    for key in root:
        if key not in known:
            raise ValidationError(str(key), "unknown top-level key")
    return ScenarioSpec(
        meta=_meta(root.get('meta')),
        simulation=_simulation(root.get('simulation')),
        segments=tuple(_segment(s, f"segments[{i}]")
                       for i, s in enumerate(_list(root.get('segments'), 'segments'))),
        connections=tuple(_connection(c, f"connections[{i}]")
                          for i, c in enumerate(_list(root.get('connections'), 'connections'))),
        auto_connections=tuple(_auto_connection(c, f"auto_connections[{i}]") for i, c in
                               enumerate(_list(root.get('auto_connections'), 'auto_connections'))),
        parking_lot=_parking_lot(root.get('parking_lot')),
        vehicles=tuple(_vehicle(v, f"vehicles[{i}]")
                       for i, v in enumerate(_list(root.get('vehicles'), 'vehicles'))),
        platoon_schedule=tuple(_directive(d, f"platoon_schedule[{i}]") for i, d in
                               enumerate(_list(root.get('platoon_schedule'), 'platoon_schedule'))),
        route_updates=tuple(_route_update(u, f"route_updates[{i}]") for i, u in
                            enumerate(_list(root.get('route_updates'), 'route_updates'))),
        logging=_logging(root.get('logging')),
    )


def _is_multiple(value: float, quantum: float) -> bool:
    ratio = value / quantum
    return abs(ratio - round(ratio)) <= 1e-9 * max(1.0, abs(ratio))


def _check_leadership(spec: ScenarioSpec) -> None:
    """Replay the directive schedule; the follower -> leader relation must stay acyclic"""
    directives: Dict[str, PlatoonDirective] = {}
    events = sorted(enumerate(spec.platoon_schedule), key=lambda e: (e[1].t, e[0]))
    for t, group in itertools.groupby(events, key=lambda e: e[1].t):
        if t > spec.meta.duration + 1e-9:
            break
        group = list(group)
        for _, event in group:
            directive = event_directive(event)
            previous = directives.get(event.vehicle)
            if directive.kind == DirectiveKind.SPLIT and directive.leader_id is None:
                directive = replace(directive, leader_id=previous.leader if previous else None)
            directives[event.vehicle] = directive
        graph = leadership_graph(directives)
        if nx.is_directed_acyclic_graph(graph):
            continue
        cycle = nx.find_cycle(graph)
        members = {u for u, _ in cycle}
        i, event = next((i, e) for i, e in reversed(group) if e.vehicle in members)
        field_name = 'target' if event.kind == DirectiveKind.MERGE.value else 'leader'
        raise ValidationError(f"platoon_schedule[{i}].{field_name}",
                              f"leader cycle at t={t:g}: "
                              + " -> ".join([u for u, _ in cycle] + [cycle[0][0]]))


def validate_scenario(spec: ScenarioSpec) -> ScenarioSpec:
    """Check invariants and cross-references, then try to build the world

    Raises:
        ValidationError: naming the first offending key
    """
    meta = spec.meta
    dt = meta.time_step
    for key, value in (('meta.TIME_STEP', dt), ('meta.SIMULATION_DURATION', meta.duration),
                       ('meta.fps', meta.fps), ('logging.sample_period', spec.logging.sample_period)):
        if value is not None and not math.isfinite(value):
            raise ValidationError(key, f"must be finite, got {value}")
    for name in ('vehicle_width', 'vehicle_length', 'min_spawn_gap', 'reference_spacing',
                 'reference_window', 'merge_ramp_time'):
        if not math.isfinite(getattr(spec.simulation, name)):
            raise ValidationError(f"simulation.{name}", "must be finite")
    if not dt > 0:
        raise ValidationError('meta.TIME_STEP', f"must be positive, got {dt}")
    if not meta.duration > 0:
        raise ValidationError('meta.SIMULATION_DURATION', f"must be positive, got {meta.duration}")
    if not _is_multiple(meta.duration, dt):
        raise ValidationError('meta.SIMULATION_DURATION',
                              f"{meta.duration} is not an integer multiple of TIME_STEP {dt}")
    if not meta.fps > 0:
        raise ValidationError('meta.fps', f"must be positive, got {meta.fps}")
    if meta.fps > 1.0 / dt + 1e-9:
        raise ValidationError('meta.fps', f"{meta.fps} exceeds 1/TIME_STEP = {1.0 / dt:g}")
    if not _is_multiple(1.0 / meta.fps, dt):
        raise ValidationError('meta.fps', f"1/(fps*TIME_STEP) = {1.0 / (meta.fps * dt):g} "
                                          "must be an integer")
    if spec.logging.sample_period is not None and not _is_multiple(spec.logging.sample_period, dt):
        raise ValidationError('logging.sample_period',
                              f"{spec.logging.sample_period} is not a multiple of TIME_STEP {dt}")
    if spec.simulation.horizon_segments < 1:
        raise ValidationError('simulation.horizon_segments', "must be at least 1")

    segment_ids = set()
    for i, entry in enumerate(spec.segments):
        if entry.id in segment_ids:
            raise ValidationError(f"segments[{i}].id", f"duplicate segment id '{entry.id}'")
        segment_ids.add(entry.id)

    def check_segment(key: str, segment_id: str) -> None:
        if segment_id not in segment_ids:
            raise ValidationError(key, f"unknown segment '{segment_id}'")

    for i, c in enumerate(spec.connections):
        check_segment(f"connections[{i}].fixed", c.fixed)
        check_segment(f"connections[{i}].moving", c.moving)
    for i, c in enumerate(spec.auto_connections):
        check_segment(f"auto_connections[{i}].from", c.a)
        check_segment(f"auto_connections[{i}].to", c.b)
    if spec.parking_lot is not None:
        for i, (segment_id, _) in enumerate(spec.parking_lot.exit_points):
            check_segment(f"parking_lot.exit_points[{i}]", segment_id)

    vehicle_ids = set()
    for i, v in enumerate(spec.vehicles):
        if v.id in vehicle_ids:
            raise ValidationError(f"vehicles[{i}].id", f"duplicate vehicle id '{v.id}'")
        vehicle_ids.add(v.id)
        if v.placement is not None:
            check_segment(f"vehicles[{i}].placement.segment", v.placement.segment)

    for i, d in enumerate(spec.platoon_schedule):
        if not math.isfinite(d.t):
            raise ValidationError(f"platoon_schedule[{i}].t", f"must be finite, got {d.t}")
        for name in ('vehicle', 'leader', 'target'):
            ref = getattr(d, name)
            if ref is not None and ref not in vehicle_ids:
                raise ValidationError(f"platoon_schedule[{i}].{name}", f"unknown vehicle '{ref}'")
    for i, u in enumerate(spec.route_updates):
        if not math.isfinite(u.t):
            raise ValidationError(f"route_updates[{i}].t", f"must be finite, got {u.t}")
        if u.vehicle not in vehicle_ids:
            raise ValidationError(f"route_updates[{i}].vehicle", f"unknown vehicle '{u.vehicle}'")
    _check_leadership(spec)

    try:
        build_environment(spec)
    except PlatoonSimError as exc:
        raise ValidationError('build', str(exc)) from exc
    return spec


def parse_scenario(path: Union[str, Path]) -> ScenarioSpec:
    """Read, parse and validate a scenario file

    Raises:
        OSError: the file cannot be read
        ParseError: YAML syntax error, with 1-based line and column
        ValidationError: structural or semantic problem, naming the key
    """
    text = Path(path).read_text(encoding='utf-8')
    try:
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        column = mark.column + 1 if mark is not None else None
        raise ParseError(f"{path}: {exc.problem or exc}", line, column) from exc
    except yaml.YAMLError as exc:
        raise ParseError(f"{path}: {exc}") from exc
    spec = validate_scenario(scenario_from_dict(data))
    logger.debug("parsed scenario '%s' from %s", spec.meta.name, path)
    return spec


def serialize_scenario(spec: ScenarioSpec) -> Dict[str, Any]:
    """Canonical document of a spec; angles in radians, every key explicit"""
    meta = spec.meta
    sim = spec.simulation
    doc: Dict[str, Any] = {
        'meta': {'name': meta.name, 'seed': meta.seed, 'TIME_STEP': meta.time_step,
                 'SIMULATION_DURATION': meta.duration, 'SAVE_VIDEO': meta.save_video,
                 'fps': meta.fps},
        'simulation': {
            'vehicle_width': sim.vehicle_width, 'vehicle_length': sim.vehicle_length,
            'min_spawn_gap': sim.min_spawn_gap, 'horizon_segments': sim.horizon_segments,
            'reference_spacing': sim.reference_spacing,
            'reference_window': sim.reference_window, 'merge_ramp_time': sim.merge_ramp_time,
        },
        'segments': [],
        'connections': [{'fixed': [c.fixed, c.fixed_point], 'moving': [c.moving, c.moving_point]}
                        for c in spec.connections],
        'auto_connections': [{'from': [c.a, c.a_point], 'to': [c.b, c.b_point], 'r_min': c.r_min}
                             for c in spec.auto_connections],
        'vehicles': [],
        'platoon_schedule': [],
        'route_updates': [{'t': u.t, 'vehicle': u.vehicle, 'route': list(u.route)}
                          for u in spec.route_updates],
        'logging': {
            'channels': [c for c in CHANNELS if c in spec.logging.channels],
            'interval': [spec.logging.interval[0],
                         None if math.isinf(spec.logging.interval[1]) else spec.logging.interval[1]],
            'sample_period': spec.logging.sample_period,
        },
    }
    for entry in spec.segments:
        s = entry.spec
        doc['segments'].append({
            'id': entry.id, 'type': s.segment_type.name.lower(), 'length': s.length,
            'radius': s.radius, 'sweep_rad': s.sweep, 'orientation_rad': s.orientation,
            'origin': [s.local_origin.x, s.local_origin.y], 'lanes': s.lanes,
            'lane_width': s.lane_width, 'speed_limit': s.speed_limit,
        })
    if spec.parking_lot is not None:
        lot = spec.parking_lot
        doc['parking_lot'] = {
            'platoon_size': lot.platoon_size,
            'exit_points': [list(p) for p in lot.exit_points],
            'time_sequence_interval': lot.time_sequence_interval,
            'time_mean': lot.time_mean, 'time_variance': lot.time_variance,
        }
    for v in spec.vehicles:
        c = v.controller
        item = {
            'id': v.id,
            'dynamics': {'wheelbase': v.dynamics.wheelbase, 'delta_max': v.dynamics.delta_max,
                         'v_max': v.dynamics.v_max, 'a_min': v.dynamics.a_min,
                         'a_max': v.dynamics.a_max},
            'controller': {
                'type': c.type,
                'lookahead_base': c.pure_pursuit.lookahead_base,
                'lookahead_gain': c.pure_pursuit.lookahead_gain,
                'standstill_gap': c.acc.standstill_gap, 'time_headway': c.acc.time_headway,
                'gain_gap': c.acc.gain_gap, 'gain_speed': c.acc.gain_speed,
                'cruise_speed': c.acc.cruise_speed,
                'lead_clear': c.lane_change.lead_clear, 'lag_clear': c.lane_change.lag_clear,
            },
            'sensor': {'fov_rad': v.sensor.fov, 'range': v.sensor.range,
                       'noise_sigma_pos': v.sensor.noise_sigma_pos,
                       'noise_sigma_vel': v.sensor.noise_sigma_vel},
            'route': list(v.route),
        }
        if v.placement is not None:
            p = v.placement
            item['placement'] = {'segment': p.segment, 'lane': p.lane, 'offset': p.offset,
                                 'speed': p.speed, 'entry': p.entry}
        doc['vehicles'].append(item)
    for d in spec.platoon_schedule:
        doc['platoon_schedule'].append({'t': d.t, 'vehicle': d.vehicle, 'kind': d.kind,
                                        'leader': d.leader, 'gap_target': d.gap_target,
                                        'target': d.target})
    return doc


def dump_scenario(spec: ScenarioSpec) -> str:
    """Canonical YAML text of a spec"""
    return yaml.safe_dump(serialize_scenario(spec), sort_keys=False)


# ---------------------------------------------------------------------------
# Building
# ---------------------------------------------------------------------------

def _make_controller(v: VehicleSpec, sim: SimulationSpec, lane_width: float) -> Dict[str, Any]:
    if v.controller.type == 'zero':
        return {'controller': ZeroController()}
    return {
        'lateral_controller': PurePursuitController(v.controller.pure_pursuit, v.dynamics),
        'longitudinal_controller': AdaptiveCruiseController(
            v.controller.acc, v.dynamics, lane_width=lane_width,
            vehicle_length=sim.vehicle_length),
    }


def build_environment(spec: ScenarioSpec) -> TrafficEnvironment:
    """Construct the road network, parking lot and vehicles of a scenario

    Directives scheduled at t = 0 are left to ScenarioSchedule.

    Raises:
        PlatoonSimError: any construction error of the underlying modules
    """
    sim = spec.simulation
    env = TrafficEnvironment(dt=spec.meta.time_step, seed=spec.meta.seed,
                             log_config=spec.logging, vehicle_width=sim.vehicle_width,
                             vehicle_length=sim.vehicle_length, min_spawn_gap=sim.min_spawn_gap,
                             horizon_segments=sim.horizon_segments,
                             reference_spacing=sim.reference_spacing,
                             reference_window=sim.reference_window,
                             merge_ramp_time=sim.merge_ramp_time)
    network = env.network
    for entry in spec.segments:
        network.create_road_segment(entry.spec, entry.id)
    for c in spec.connections:
        network.connect_road_segments(c.fixed, c.fixed_point, c.moving, c.moving_point)
    for c in spec.auto_connections:
        network.create_connection(c.a, c.a_point, c.b, c.b_point, c.r_min)
    if spec.parking_lot is not None:
        lot = spec.parking_lot
        env.create_virtual_parking_lot(lot.platoon_size, lot.exit_points,
                                       lot.time_sequence_interval, lot.time_mean,
                                       lot.time_variance)
    lane_width = spec.segments[0].spec.lane_width if spec.segments else SegmentSpec().lane_width
    for v in spec.vehicles:
        env.create_vehicle(v.id, KinematicBicycle(v.dynamics), sensor=v.sensor, route=v.route,
                           lane_change=v.controller.lane_change,
                           **_make_controller(v, sim, lane_width))
    for v in spec.vehicles:
        if v.placement is not None:
            p = v.placement
            env.add_vehicle_to_segment(v.id, p.segment, p.lane, p.offset, p.speed, p.entry)
    return env


class ScenarioSchedule:
    """Applies scheduled directives and route updates as the clock passes them"""

    def __init__(self, spec: ScenarioSpec):
        events = [(e.t, 0, i, e) for i, e in enumerate(spec.platoon_schedule)]
        events += [(u.t, 1, i, u) for i, u in enumerate(spec.route_updates)]
        self._events = sorted(events, key=lambda e: e[:3])
        self._next = 0

    @property
    def pending(self) -> int:
        return len(self._events) - self._next

    def apply(self, env: TrafficEnvironment) -> int:
        """Install every event due at env.t; returns how many were applied"""
        applied = 0
        while self._next < len(self._events) and self._events[self._next][0] <= env.t + 1e-9:
            event = self._events[self._next][3]
            if isinstance(event, DirectiveEvent):
                env.set_directive(event.vehicle, event_directive(event))
            else:
                env.update_route(event.vehicle, event.route)
            self._next += 1
            applied += 1
        return applied
