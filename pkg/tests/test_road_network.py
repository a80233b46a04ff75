"""
Unit tests for the road network

Segment construction and validation, rigid connection, automatic CSC
connection, lane centres, road queries, the parking lot configuration
and the multigraph view.

Run with: pytest tests/test_road_network.py

Author: Platoon-Sim Team
Version: 1.0.0
"""

import math

import pytest
import numpy as np
import sys
import os

# Add the code directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'code'))

from platoon_sim.errors import (
    AlreadyConnected,
    Incompatible,
    InvalidSpec,
    UnknownConnectionPoint,
    UnknownLane,
    UnknownSegment,
    WouldTearJoint,
)
from platoon_sim.geometry import Vec2, normalize_angle
from platoon_sim.road_network import ParkingLotConfig, RoadNetwork, SegmentSpec, SegmentType


def straight(length=100.0, origin=(0.0, 0.0), orientation=0.0, lanes=2, lane_width=4.0,
             speed_limit=15.0):
    return SegmentSpec(SegmentType.STRAIGHT, length=length, orientation=orientation, lanes=lanes,
                       lane_width=lane_width, speed_limit=speed_limit,
                       local_origin=Vec2(*origin))


def curved(radius=50.0, sweep=math.pi / 2, lanes=2, lane_width=4.0):
    return SegmentSpec(SegmentType.CURVED, radius=radius, sweep=sweep, lanes=lanes,
                       lane_width=lane_width)


def intersection(arm=20.0, origin=(0.0, 0.0)):
    return SegmentSpec(SegmentType.INTERSECTION, length=arm, lanes=2, lane_width=4.0,
                       speed_limit=6.0, local_origin=Vec2(*origin))


def ring_network():
    net = RoadNetwork()
    net.create_road_segment(straight(200.0), 's1')
    net.create_road_segment(curved(200.0, math.pi), 's2')
    net.create_road_segment(straight(200.0), 's3')
    net.create_road_segment(curved(200.0, math.pi), 's4')
    net.connect_road_segments('s1', 'end', 's2', 'start')
    net.connect_road_segments('s2', 'end', 's3', 'start')
    net.connect_road_segments('s3', 'end', 's4', 'start')
    net.connect_road_segments('s4', 'end', 's1', 'start')
    return net


def assert_joint(traj_a, traj_b, tol=1e-6):
    gap = math.hypot(traj_a.x[-1] - traj_b.x[0], traj_a.y[-1] - traj_b.y[0])
    assert gap <= tol
    assert abs(normalize_angle(traj_a.heading[-1] - traj_b.heading[0])) <= tol


def linked_ports(net):
    """Every joined pair of connection points, each pair once"""
    seen = set()
    for seg in net.segments.values():
        for name in seg.port_names:
            cp = seg.connection_points[name]
            if cp.peer is not None and (seg.id, name) not in seen:
                seen.update({(seg.id, name), cp.peer})
                yield cp, net.connection_point(*cp.peer)


def assert_joints_continuous(net, tol=1e-6):
    """Joined ports coincide facing each other, and lane 1 runs on across them"""
    for a, b in linked_ports(net):
        assert math.hypot(a.pose.x - b.pose.x, a.pose.y - b.pose.y) <= tol
        assert abs(normalize_angle(a.pose.theta - b.pose.theta - math.pi)) <= tol
        ends = [net.segment(a.owner), net.segment(b.owner)]
        if any(seg.spec.segment_type == SegmentType.INTERSECTION for seg in ends):
            continue
        into = net.lane_center(a.owner, 1, entry='start' if a.name == 'end' else 'end')
        out = net.lane_center(b.owner, 1, entry=b.name)
        assert_joint(into, out, tol)


class TestSegmentSpec:
    """Spec validation"""

    def test_auto_ids(self):
        """Segments without an id get s1, s2, ..."""
        net = RoadNetwork()
        assert net.create_road_segment(straight()) == 's1'
        assert net.create_road_segment(straight()) == 's2'
        assert len(net) == 2

    def test_duplicate_id(self):
        """Reusing an id is rejected"""
        net = RoadNetwork()
        net.create_road_segment(straight(), 'a')
        with pytest.raises(InvalidSpec):
            net.create_road_segment(straight(), 'a')

    @pytest.mark.parametrize("spec", [
        SegmentSpec(SegmentType.CURVED, radius=3.0, sweep=1.0, lanes=2, lane_width=4.0),
        SegmentSpec(SegmentType.CURVED, radius=50.0, sweep=0.0),
        SegmentSpec(SegmentType.CURVED, radius=50.0, sweep=7.0),
        SegmentSpec(SegmentType.STRAIGHT, length=0.0),
        SegmentSpec(SegmentType.STRAIGHT, lanes=0),
        SegmentSpec(SegmentType.STRAIGHT, lane_width=-1.0),
        SegmentSpec(SegmentType.STRAIGHT, speed_limit=0.0),
        SegmentSpec(segment_type=7),
    ])
    def test_invalid_specs(self, spec):
        """Invariant violations raise InvalidSpec"""
        with pytest.raises(InvalidSpec):
            RoadNetwork().create_road_segment(spec)

    def test_invalid_spec_is_value_error(self):
        """InvalidSpec can be caught as ValueError"""
        assert issubclass(InvalidSpec, ValueError)

    def test_unknown_lookups(self):
        """Unknown segments and ports raise their own errors"""
        net = RoadNetwork()
        net.create_road_segment(straight(), 'a')
        with pytest.raises(UnknownSegment):
            net.segment('zzz')
        with pytest.raises(UnknownConnectionPoint):
            net.connection_point('a', 'north')


class TestLanes:
    """Lane centres and road queries"""

    def test_lane_one_is_rightmost(self):
        """Lane 1 lies right of the axis in the direction of travel"""
        net = RoadNetwork()
        net.create_road_segment(straight(), 's1')
        forward = net.lane_center('s1', 1)
        np.testing.assert_allclose(forward.y, -2.0)
        assert forward.x[0] == 0.0 and forward.x[-1] == pytest.approx(100.0)
        backward = net.lane_center('s1', 1, entry='end')
        np.testing.assert_allclose(backward.y, 2.0)
        np.testing.assert_allclose(backward.heading, math.pi)

    def test_speed_reference(self):
        """Lane centres carry the segment speed limit"""
        net = RoadNetwork()
        net.create_road_segment(straight(speed_limit=12.5), 's1')
        np.testing.assert_array_equal(net.lane_center('s1', 2).speed_ref, 12.5)

    def test_unknown_lane(self):
        """Lanes outside 1..lanes raise UnknownLane"""
        net = RoadNetwork()
        net.create_road_segment(straight(), 's1')
        with pytest.raises(UnknownLane):
            net.lane_center('s1', 3)
        with pytest.raises(UnknownLane):
            net.lane_center('s1', 0)

    def test_query_road(self):
        """Nearest lane, offset and speed limit at a point"""
        net = RoadNetwork()
        net.create_road_segment(straight(speed_limit=11.0), 's1')
        q = net.query_road(Vec2(50.0, -2.0))
        assert (q.segment, q.lane) == ('s1', 1)
        assert q.lateral_offset == pytest.approx(0.0)
        assert q.speed_limit == 11.0
        q = net.query_road(Vec2(50.0, 1.0))
        assert q.lane == 2
        assert q.lateral_offset == pytest.approx(-1.0)

    def test_query_on_lane_centres(self):
        """Points sampled from a lane centre query back to that segment and lane"""
        net = ring_network()
        for sid in ('s1', 's2', 's3', 's4'):
            for lane in (1, 2):
                traj = net.lane_center(sid, lane)
                for x, y in zip(traj.x[1:-1:7], traj.y[1:-1:7]):
                    q = net.query_road(Vec2(float(x), float(y)))
                    assert (q.segment, q.lane) == (sid, lane)
                    assert q.lateral_offset == pytest.approx(0.0, abs=1e-6)

    def test_query_off_road(self):
        """Points outside the drivable band give None unless the margin covers them"""
        net = RoadNetwork()
        net.create_road_segment(straight(), 's1')
        assert net.query_road(Vec2(50.0, 10.0)) is None
        assert net.query_road(Vec2(50.0, 4.5)) is None
        q = net.query_road(Vec2(50.0, 4.5), margin=0.9)
        assert q.lane == 2
        assert q.lateral_offset == pytest.approx(2.5)

    def test_curved_query(self):
        """Query on an arc reports the lane by radial offset"""
        net = RoadNetwork()
        net.create_road_segment(curved(50.0, math.pi / 2), 'c')
        # centre (0, 50); lane 2 (left, inner) centre radius 48
        angle = -math.pi / 4
        point = Vec2(48.0 * math.cos(angle), 50.0 + 48.0 * math.sin(angle))
        q = net.query_road(point)
        assert q.lane == 2
        assert q.lateral_offset == pytest.approx(0.0, abs=1e-9)
        assert net.query_road(Vec2(0.0, 150.0)) is None

    def test_exit_port(self):
        """A point just beyond an end reports that port"""
        net = RoadNetwork()
        net.create_road_segment(straight(), 's1')
        seg = net.segment('s1')
        assert seg.exit_port(Vec2(105.0, -2.0)) == 'end'
        assert seg.exit_port(Vec2(-3.0, 0.0)) == 'start'
        assert seg.exit_port(Vec2(50.0, 0.0)) is None

    def test_entry_pose_and_bounds(self):
        """Entry pose is the lane start; bounds cover the drivable area"""
        net = RoadNetwork()
        assert net.bounds() is None
        net.create_road_segment(straight(), 's1')
        pose = net.entry_pose('s1', 'start', 1)
        assert (pose.x, pose.y, pose.theta) == pytest.approx((0.0, -2.0, 0.0))
        assert net.bounds() == pytest.approx((0.0, -4.0, 100.0, 4.0))


class TestConnections:
    """Rigid connection and joint continuity"""

    def test_moving_segment_is_aligned(self):
        """The moving segment is placed so that the ports coincide facing each other"""
        net = RoadNetwork()
        net.create_road_segment(straight(50.0), 'a')
        net.create_road_segment(straight(30.0, origin=(500.0, 500.0), orientation=2.0), 'b')
        net.connect_road_segments('a', 'end', 'b', 'start')
        b_start = net.connection_point('b', 'start').pose
        assert (b_start.x, b_start.y) == pytest.approx((50.0, 0.0))
        assert net.peer_of('a', 'end') == ('b', 'start')
        assert net.peer_of('b', 'start') == ('a', 'end')
        assert_joint(net.lane_center('a', 1), net.lane_center('b', 1))

    def test_straight_curve_joint_continuity(self):
        """Lane centres are continuous in position and heading across joints"""
        net = RoadNetwork()
        net.create_road_segment(straight(40.0, orientation=0.4), 'a')
        net.create_road_segment(curved(30.0, -1.2), 'b')
        net.create_road_segment(straight(25.0), 'c')
        net.connect_road_segments('a', 'end', 'b', 'start')
        net.connect_road_segments('b', 'end', 'c', 'start')
        for lane in (1, 2):
            chain = [net.lane_center(s, lane) for s in ('a', 'b', 'c')]
            for first, second in zip(chain, chain[1:]):
                assert_joint(first, second, 1e-9)
            back = [net.lane_center(s, lane, entry='end') for s in ('c', 'b', 'a')]
            for first, second in zip(back, back[1:]):
                assert_joint(first, second, 1e-9)

    def test_ring_closes(self):
        """Closing a loop onto an already placed segment is accepted"""
        net = ring_network()
        assert net.open_ends() == []
        assert net.peer_of('s1', 'start') == ('s4', 'end')
        assert_joint(net.lane_center('s4', 1), net.lane_center('s1', 1))

    def test_incompatible(self):
        """Lane counts must match"""
        net = RoadNetwork()
        net.create_road_segment(straight(), 'a')
        net.create_road_segment(straight(lanes=3), 'b')
        net.create_road_segment(straight(50.0), 'c')
        assert not net.is_compatible('a', 'b')
        assert net.is_compatible('a', 'c')
        with pytest.raises(Incompatible):
            net.connect_road_segments('a', 'end', 'b', 'start')

    def test_already_connected(self):
        """A port can only have one peer"""
        net = RoadNetwork()
        for sid in ('a', 'b', 'c'):
            net.create_road_segment(straight(), sid)
        net.connect_road_segments('a', 'end', 'b', 'start')
        with pytest.raises(AlreadyConnected):
            net.connect_road_segments('a', 'end', 'c', 'start')

    def test_would_tear_joint(self):
        """A connected segment cannot be moved onto a distant port"""
        net = RoadNetwork()
        net.create_road_segment(straight(), 'a')
        net.create_road_segment(straight(), 'b')
        net.create_road_segment(straight(origin=(0.0, 300.0)), 'c')
        net.connect_road_segments('a', 'end', 'b', 'start')
        with pytest.raises(WouldTearJoint):
            net.connect_road_segments('c', 'end', 'b', 'end')
        assert net.connection_point('b', 'end').peer is None


class TestAutoConnect:
    """CSC bridging of open ends"""

    def test_bridge_is_continuous(self):
        """Generated segments link both ports with continuous lane centres"""
        net = RoadNetwork()
        net.create_road_segment(straight(50.0), 'a')
        net.create_road_segment(straight(40.0, origin=(100.0, 60.0), orientation=math.pi / 2), 'b')
        created = net.create_connection('a', 'end', 'b', 'start', 15.0)
        assert created
        assert sorted(net.open_ends()) == [('a', 'start'), ('b', 'end')]
        for sid in created:
            assert net.segment(sid).spec.lanes == 2
            assert net.segment(sid).spec.lane_width == 4.0
        for lane in (1, 2):
            chain = [net.lane_center('a', lane)]
            chain += [net.lane_center(sid, lane) for sid in created]
            chain.append(net.lane_center('b', lane))
            for first, second in zip(chain, chain[1:]):
                assert_joint(first, second, 1e-6)

    def test_coincident_ports_linked_directly(self):
        """When every CSC component is degenerate no segment is created"""
        net = RoadNetwork()
        net.create_road_segment(straight(50.0), 'a')
        net.create_road_segment(straight(50.0, origin=(50.0, 0.0)), 'b')
        assert net.create_connection('a', 'end', 'b', 'start', 10.0) == []
        assert net.peer_of('a', 'end') == ('b', 'start')
        assert len(net) == 2

    def test_batch(self):
        """auto_connect_open_ends bridges every listed pair"""
        net = RoadNetwork()
        net.create_road_segment(straight(50.0), 'a')
        net.create_road_segment(straight(50.0, origin=(200.0, 100.0)), 'b')
        result = net.auto_connect_open_ends([(('a', 'end'), ('b', 'start'))], 20.0)
        assert list(result) == [(('a', 'end'), ('b', 'start'))]
        assert net.peer_of('b', 'start') is not None

    def test_random_bridges_are_continuous(self):
        """Every joint created between random port pairs is continuous"""
        rng = np.random.default_rng(7)
        for _ in range(100):
            net = RoadNetwork()
            net.create_road_segment(straight(50.0), 'a')
            distance, bearing = rng.uniform(60.0, 200.0), rng.uniform(-math.pi, math.pi)
            origin = (50.0 + distance * math.cos(bearing), distance * math.sin(bearing))
            net.create_road_segment(
                straight(40.0, origin=origin, orientation=rng.uniform(-math.pi, math.pi)), 'b')
            created = net.create_connection('a', 'end', 'b', 'start', rng.uniform(5.0, 25.0))
            assert 1 <= len(created) <= 3
            assert sorted(net.open_ends()) == [('a', 'start'), ('b', 'end')]
            assert_joints_continuous(net, 1e-5)

    def test_radius_too_small_leaves_network_unchanged(self):
        """A turning radius inside the road width fails before anything is created"""
        net = RoadNetwork()
        net.create_road_segment(straight(50.0), 'a')
        net.create_road_segment(straight(40.0, origin=(83.0, 3.0), orientation=math.pi / 2), 'b')
        with pytest.raises(InvalidSpec):
            net.create_connection('a', 'end', 'b', 'start', 3.0)
        assert sorted(net.segments) == ['a', 'b']
        assert net.peer_of('a', 'end') is None
        assert net.peer_of('b', 'start') is None

    def test_failing_batch_leaves_network_unchanged(self):
        """One bad pair in a batch stops every pair from being built"""
        net = RoadNetwork()
        net.create_road_segment(straight(50.0), 'a')
        net.create_road_segment(straight(50.0, origin=(200.0, 100.0)), 'b')
        net.create_road_segment(straight(50.0, origin=(0.0, 300.0)), 'c')
        net.create_road_segment(straight(50.0, origin=(300.0, 300.0), lanes=3), 'd')
        pairs = [(('a', 'end'), ('b', 'start')), (('c', 'end'), ('d', 'start'))]
        with pytest.raises(Incompatible):
            net.auto_connect_open_ends(pairs, 20.0)
        assert sorted(net.segments) == ['a', 'b', 'c', 'd']
        assert len(net.open_ends()) == 8
        with pytest.raises(AlreadyConnected):
            net.auto_connect_open_ends([(('a', 'end'), ('b', 'start')),
                                        (('a', 'end'), ('c', 'start'))], 20.0)
        assert len(net.open_ends()) == 8


class TestIntersection:
    """Four-way intersection"""

    def test_ports(self):
        """Ports sit at half width plus arm length from the centre"""
        net = RoadNetwork()
        net.create_road_segment(intersection(), 'i')
        north = net.connection_point('i', 'north').pose
        assert (north.x, north.y) == pytest.approx((0.0, 24.0))

    def test_turn_exits(self):
        """Entering from the west, left leads north and right leads south"""
        net = RoadNetwork()
        net.create_road_segment(intersection(), 'i')
        seg = net.segment('i')
        assert seg.exit_towards('west', 'left') == 'north'
        assert seg.exit_towards('west', 'right') == 'south'
        assert seg.exit_towards('west', 'straight') == 'east'
        assert seg.default_exit('north') == 'south'

    def test_left_turn_lane_center(self):
        """A lane 1 left turn ends in lane 1 of the north arm, heading north"""
        net = RoadNetwork()
        net.create_road_segment(intersection(), 'i')
        traj = net.lane_center('i', 1, entry='west', exit='north')
        assert (traj.x[0], traj.y[0]) == pytest.approx((-24.0, -2.0))
        assert (traj.x[-1], traj.y[-1]) == pytest.approx((2.0, 24.0))
        assert traj.heading[-1] == pytest.approx(math.pi / 2)
        steps = np.hypot(np.diff(traj.x), np.diff(traj.y))
        assert np.all(steps <= 1.0 + 1e-9)


class TestGraph:
    """Multigraph view"""

    def test_two_straights(self):
        """Two connected straights: 3 nodes and 4 directed edges"""
        net = RoadNetwork()
        net.create_road_segment(straight(), 'a')
        net.create_road_segment(straight(), 'b')
        net.connect_road_segments('a', 'end', 'b', 'start')
        graph = net.as_graph()
        assert graph.number_of_nodes() == 3
        assert graph.number_of_edges() == 4
        segments = sorted(d['segment'] for _, _, d in graph.edges(data=True))
        assert segments == ['a', 'a', 'b', 'b']

    def test_intersection(self):
        """A lone intersection: 4 nodes and 12 directed edges"""
        net = RoadNetwork()
        net.create_road_segment(intersection(), 'i')
        graph = net.as_graph()
        assert graph.number_of_nodes() == 4
        assert graph.number_of_edges() == 12

    def test_ring(self):
        """A closed ring of four segments: 4 nodes and 8 edges"""
        graph = ring_network().as_graph()
        assert graph.number_of_nodes() == 4
        assert graph.number_of_edges() == 8

    def test_edge_lengths(self):
        """Edges carry the lane 1 route length"""
        net = RoadNetwork()
        net.create_road_segment(straight(80.0), 'a')
        lengths = [d['length'] for _, _, d in net.as_graph().edges(data=True)]
        assert lengths == pytest.approx([80.0, 80.0])


class TestParkingLot:
    """Virtual parking lot configuration"""

    def test_exit_must_be_open(self):
        """Exits at connected ports are rejected"""
        net = RoadNetwork()
        net.create_road_segment(straight(), 'a')
        net.create_road_segment(straight(), 'b')
        net.connect_road_segments('a', 'end', 'b', 'start')
        with pytest.raises(AlreadyConnected):
            net.create_virtual_parking_lot(ParkingLotConfig(2, [('a', 'end')]))
        config = net.create_virtual_parking_lot(ParkingLotConfig(2, [['a', 'start']]))
        assert config.exit_points == (('a', 'start'),)
        assert net.parking_lot is config

    def test_config_validation(self):
        """Platoon size, exits and variance are checked"""
        with pytest.raises(ValueError):
            ParkingLotConfig(0, [('a', 'start')])
        with pytest.raises(ValueError):
            ParkingLotConfig(1, [])
        with pytest.raises(ValueError):
            ParkingLotConfig(1, [('a', 'start')], time_variance=-1.0)


if __name__ == "__main__":
    pytest.main([__file__])
