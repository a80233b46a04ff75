"""
Unit tests for guidance: routes, reference trajectories and preprocessing

Run with: pytest tests/test_guidance.py

Author: Platoon-Sim Team
Version: 1.0.0
"""

import math
from dataclasses import replace

import pytest
import numpy as np
import sys
import os

# Add the code directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'code'))

from platoon_sim.errors import EmptyAhead, InvalidPrimitive, NoSuchLane
from platoon_sim.geometry import Pose2D, Trajectory, normalize_angle
from platoon_sim.guidance import (
    RoutePrimitive,
    RouteState,
    advance_route,
    build_reference,
    crop_ahead,
    preprocess,
    resolve_exit,
)
from platoon_sim.road_network import RoadNetwork, SegmentSpec, SegmentType


def chain_network():
    """Three 100 m straights in a row: a -> b -> c"""
    net = RoadNetwork()
    for sid in ('a', 'b', 'c'):
        net.create_road_segment(SegmentSpec(SegmentType.STRAIGHT, length=100.0, speed_limit=10.0),
                                sid)
    net.connect_road_segments('a', 'end', 'b', 'start')
    net.connect_road_segments('b', 'end', 'c', 'start')
    return net


def approach_network():
    """A straight feeding the west port of an intersection"""
    net = RoadNetwork()
    net.create_road_segment(SegmentSpec(SegmentType.INTERSECTION, length=20.0, speed_limit=6.0), 'i')
    net.create_road_segment(SegmentSpec(SegmentType.STRAIGHT, length=100.0, speed_limit=12.0), 'w')
    net.connect_road_segments('i', 'west', 'w', 'end')
    return net


def ring_network():
    """Two 200 m straights joined by two half circles of radius 200 m"""
    net = RoadNetwork()
    for sid, spec in (('s1', SegmentSpec(SegmentType.STRAIGHT, length=200.0, speed_limit=15.0)),
                      ('s2', SegmentSpec(SegmentType.CURVED, radius=200.0, sweep=math.pi,
                                         speed_limit=15.0)),
                      ('s3', SegmentSpec(SegmentType.STRAIGHT, length=200.0, speed_limit=15.0)),
                      ('s4', SegmentSpec(SegmentType.CURVED, radius=200.0, sweep=math.pi,
                                         speed_limit=15.0))):
        net.create_road_segment(spec, sid)
    for a, b in (('s1', 's2'), ('s2', 's3'), ('s3', 's4'), ('s4', 's1')):
        net.connect_road_segments(a, 'end', b, 'start')
    return net


def brute_force_start(x, y, pose):
    """Index after the last point that is not strictly ahead"""
    start = 0
    for i in range(len(x)):
        dot = math.cos(pose.theta) * (x[i] - pose.x) + math.sin(pose.theta) * (y[i] - pose.y)
        if not dot > 0:
            start = i + 1
    return start


class TestRoutePrimitive:
    """Primitive parsing"""

    def test_parse(self):
        """Names parse case-insensitively"""
        assert RoutePrimitive.parse('Left_Turn') == RoutePrimitive.LEFT_TURN
        assert RoutePrimitive.parse(RoutePrimitive.RIGHT) == RoutePrimitive.RIGHT
        assert RoutePrimitive.LEFT.is_lane_change
        assert RoutePrimitive.RIGHT_TURN.is_turn

    def test_unknown(self):
        """Unknown names raise InvalidPrimitive"""
        with pytest.raises(InvalidPrimitive):
            RoutePrimitive.parse('u_turn')


class TestAdvanceRoute:
    """Primitive consumption on segment entry"""

    def test_lane_change_shifts_lane(self):
        """Left moves one lane left and remembers the source lane"""
        route = RouteState.from_primitives(['left', 'straight'], lane=1)
        route = advance_route(route, 'a')
        assert route.current_lane == 2
        assert route.lane_change_from == 1
        assert route.active == RoutePrimitive.LEFT
        assert route.pending == (RoutePrimitive.STRAIGHT,)
        route = advance_route(route, 'b')
        assert route.current_lane == 2
        assert route.lane_change_from is None
        assert route.consumed == 2

    def test_empty_queue_is_straight(self):
        """An exhausted route keeps going straight"""
        route = advance_route(RouteState.from_primitives([], lane=2), 'a')
        assert route.active == RoutePrimitive.STRAIGHT
        assert route.current_lane == 2
        assert route.pending == ()

    def test_same_segment_twice(self):
        """A segment consumes at most one primitive per entry"""
        route = advance_route(RouteState.from_primitives(['straight']), 'a')
        with pytest.raises(ValueError):
            advance_route(route, 'a')

    def test_exit_resolved_with_network(self):
        """With a network the exit port follows the primitive"""
        net = approach_network()
        route = RouteState(pending=(RoutePrimitive.LEFT_TURN,), last_consumed_segment='w')
        route = advance_route(route, 'i', 'west', net)
        assert route.exit_port == 'north'
        assert route.entry_port == 'west'

    def test_turn_on_straight_tolerated_when_advancing(self):
        """A turn consumed on a plain segment falls back to the default exit"""
        net = chain_network()
        route = advance_route(RouteState.from_primitives(['left_turn']), 'a', 'start', net)
        assert route.exit_port == 'end'


class TestResolveExit:
    """Exit port selection"""

    def test_strict_turn_outside_intersection(self):
        """Strict resolution refuses turn primitives on straights"""
        net = chain_network()
        with pytest.raises(InvalidPrimitive):
            resolve_exit(net.segment('a'), 'start', RoutePrimitive.RIGHT_TURN)
        assert resolve_exit(net.segment('a'), 'start', RoutePrimitive.RIGHT_TURN,
                            strict=False) == 'end'

    def test_intersection_turns(self):
        """Turn primitives pick the matching intersection exit"""
        seg = approach_network().segment('i')
        assert resolve_exit(seg, 'west', RoutePrimitive.LEFT_TURN) == 'north'
        assert resolve_exit(seg, 'west', RoutePrimitive.RIGHT_TURN) == 'south'
        assert resolve_exit(seg, 'west', RoutePrimitive.STRAIGHT) == 'east'


class TestBuildReference:
    """Reference trajectories over the segment horizon"""

    def test_two_segment_horizon(self):
        """Current and next segment, continuous, at the lane centre"""
        net = chain_network()
        route = advance_route(RouteState.from_primitives(['straight', 'straight']), 'a', 'start', net)
        traj = build_reference(route, net, horizon_segments=2, spacing=1.0)
        assert not traj.dead_end
        assert traj.length == pytest.approx(200.0)
        np.testing.assert_allclose(traj.y, -2.0, atol=1e-9)
        assert np.all(np.diff(traj.arc_length) > 0)
        np.testing.assert_array_equal(traj.speed_ref, 10.0)

    def test_dead_end_flag(self):
        """Running out of road before the horizon is flagged"""
        net = chain_network()
        route = advance_route(RouteState.from_primitives([]), 'c', 'start', net)
        traj = build_reference(route, net, horizon_segments=3)
        assert traj.dead_end
        assert traj.length == pytest.approx(100.0)

    def test_upcoming_turn(self):
        """The pending primitive selects the exit of the next segment"""
        net = approach_network()
        route = advance_route(RouteState.from_primitives(['straight', 'left_turn']), 'w', 'start', net)
        traj = build_reference(route, net, horizon_segments=2)
        assert traj.x[-1] == pytest.approx(2.0, abs=1e-6)
        assert traj.y[-1] == pytest.approx(24.0, abs=1e-6)
        assert traj.heading[-1] == pytest.approx(math.pi / 2)
        assert traj.speed_ref[0] == 12.0 and traj.speed_ref[-1] == 6.0

    def test_periodic_on_ring(self):
        """Going once round a closed ring comes back onto the first segment's lane centre"""
        net = ring_network()
        route = advance_route(RouteState.from_primitives([]), 's1', 'start', net)
        lap = build_reference(route, net, horizon_segments=4)
        assert not lap.dead_end
        assert lap.length == pytest.approx(400.0 + 2.0 * math.pi * 202.0, rel=1e-3)
        assert math.hypot(lap.x[-1] - lap.x[0], lap.y[-1] - lap.y[0]) < 1e-6
        assert normalize_angle(lap.heading[-1] - lap.heading[0]) == pytest.approx(0.0, abs=1e-6)

        longer = build_reference(route, net, horizon_segments=5)
        first = net.lane_center('s1', 1)
        # the joint point is shared with the previous lap
        n = len(first) - 1
        np.testing.assert_allclose(longer.x[-n:], first.x[1:], atol=1e-6)
        np.testing.assert_allclose(longer.y[-n:], first.y[1:], atol=1e-6)

    def test_no_such_lane(self):
        """A lane beyond the segment's lanes raises NoSuchLane"""
        net = chain_network()
        route = advance_route(RouteState.from_primitives(['left'], lane=2), 'a', 'start', net)
        with pytest.raises(NoSuchLane):
            build_reference(route, net)

    def test_strict_turn_on_straight(self):
        """A turn active on a straight raises unless strict is off"""
        net = chain_network()
        route = replace(advance_route(RouteState.from_primitives([]), 'a', 'start', net),
                        active=RoutePrimitive.LEFT_TURN)
        with pytest.raises(InvalidPrimitive):
            build_reference(route, net)
        assert len(build_reference(route, net, strict=False)) > 0


class TestPreprocess:
    """Trimming the reference to the part ahead of the vehicle"""

    def _random_trajectory(self, rng):
        n = int(rng.integers(2, 60))
        steps = rng.uniform(0.2, 2.0, n - 1)
        angles = np.cumsum(rng.normal(0.0, 0.3, n - 1))
        x = np.concatenate(([0.0], np.cumsum(steps * np.cos(angles))))
        y = np.concatenate(([0.0], np.cumsum(steps * np.sin(angles))))
        heading = np.concatenate((angles[:1], angles))
        return Trajectory(x, y, heading, np.full(n, 10.0))

    def test_random_cases(self):
        """1000 random cases agree with a brute-force reference"""
        rng = np.random.default_rng(11)
        for _ in range(1000):
            traj = self._random_trajectory(rng)
            pose = Pose2D(*rng.uniform(-10, 40, 2), rng.uniform(-math.pi, math.pi))
            start = brute_force_start(traj.x, traj.y, pose)
            if start >= len(traj):
                with pytest.raises(EmptyAhead):
                    preprocess(traj, pose)
                continue
            out = preprocess(traj, pose)
            np.testing.assert_array_equal(out.x, traj.x[start:])
            np.testing.assert_array_equal(out.y, traj.y[start:])
            assert out.arc_length[0] == 0.0
            np.testing.assert_allclose(out.arc_length, traj.arc_length[start:] - traj.arc_length[start],
                                       atol=1e-12)

    def test_idempotent(self):
        """Preprocessing twice from the same pose changes nothing"""
        rng = np.random.default_rng(12)
        checked = 0
        for _ in range(300):
            traj = self._random_trajectory(rng)
            pose = Pose2D(*rng.uniform(-10, 40, 2), rng.uniform(-math.pi, math.pi))
            try:
                once = preprocess(traj, pose)
            except EmptyAhead:
                continue
            twice = preprocess(once, pose)
            np.testing.assert_array_equal(once.x, twice.x)
            np.testing.assert_array_equal(once.arc_length, twice.arc_length)
            checked += 1
        assert checked > 0

    def test_empty(self):
        """An empty trajectory has nothing ahead"""
        with pytest.raises(EmptyAhead):
            preprocess(Trajectory.empty(), Pose2D(0.0, 0.0, 0.0))

    def test_crop_ahead(self):
        """Cropping starts at the nearest point and keeps the requested length"""
        net = chain_network()
        traj = net.lane_center('a', 1)
        cropped = crop_ahead(traj, Pose2D(30.2, -2.5, 0.0), 20.0)
        assert cropped.x[0] == pytest.approx(30.0)
        assert 19.0 <= cropped.length <= 20.0 + 1e-9


if __name__ == "__main__":
    pytest.main([__file__])
