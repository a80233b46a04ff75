"""
Unit tests for frame rendering and road network plots

Run with: pytest tests/test_render.py

Author: Platoon-Sim Team
Version: 1.0.0
"""

import math
from pathlib import Path

import pytest
import numpy as np
from PIL import Image
import sys
import os

# Add the code directory to Python path
sys.path.insert(0, os.path.join(os.path.dirname(__file__), '..', 'code'))

from platoon_sim.control import ZeroController
from platoon_sim.dynamics import VehicleState
from platoon_sim.engine import EnvSnapshot, TrafficEnvironment, VehicleSnapshot, VehicleStatus
from platoon_sim.geometry import Vec2
from platoon_sim.render import (
    DEFAULT_RESOLUTION,
    PALETTE,
    Viewport,
    build_frame,
    graph_layout,
    render_frame,
    vehicle_corners,
    visualize_road_network,
)
from platoon_sim.road_network import RoadNetwork, SegmentSpec, SegmentType
from platoon_sim.scenario import build_environment, parse_scenario

RING = Path(__file__).resolve().parent.parent / 'scenarios' / 'ring_platoon.yaml'


def hex_rgb(color):
    return tuple(int(color[i:i + 2], 16) for i in (1, 3, 5))


def read_rgb(path):
    with Image.open(path) as img:
        return np.asarray(img.convert('RGB'))


def chain_network():
    net = RoadNetwork()
    net.create_road_segment(SegmentSpec(SegmentType.STRAIGHT, length=100.0), 'a')
    net.create_road_segment(SegmentSpec(SegmentType.STRAIGHT, length=50.0), 'b')
    net.connect_road_segments('a', 'end', 'b', 'start')
    return net


class TestViewport:
    """World to pixel mapping"""

    def test_empty_bounds(self):
        """Without a network the view is centred on the origin"""
        view = Viewport.fit(None)
        assert view.center == Vec2(0.0, 0.0)
        assert (view.width, view.height) == DEFAULT_RESOLUTION

    def test_fit_with_margin(self):
        """The limiting axis spans the bounds plus 5% on each side"""
        view = Viewport.fit((0.0, -4.0, 100.0, 4.0))
        assert view.scale == pytest.approx(1280 / 110.0)
        col, row = view.to_pixels([0.0, 100.0], [0.0, 0.0])
        np.testing.assert_allclose(col, [5.0 * view.scale, 105.0 * view.scale])
        np.testing.assert_allclose(row, [360.0, 360.0])

    def test_vehicle_corners(self):
        """Rectangle with the rear axle 1 m ahead of the rear bumper"""
        corners = vehicle_corners(0.0, 0.0, 0.0, 4.5, 1.8)
        np.testing.assert_allclose(corners, [[-1.0, -0.9], [3.5, -0.9], [3.5, 0.9], [-1.0, 0.9]])
        turned = vehicle_corners(10.0, 0.0, math.pi / 2, 4.5, 1.8)
        np.testing.assert_allclose(turned[0], [10.9, -1.0], atol=1e-12)


class TestFrames:
    """Rendered frames"""

    def test_empty_network(self, tmp_path):
        """An empty world renders a background-only image at full resolution"""
        path = tmp_path / 'empty.png'
        render_frame(TrafficEnvironment().snapshot(), path)
        img = read_rgb(path)
        assert img.shape == (720, 1280, 3)
        assert np.all(img == hex_rgb(PALETTE['background']))

    def test_road_pixels_match_viewport(self, tmp_path):
        """The road band lands where the viewport predicts"""
        env = TrafficEnvironment()
        env.create_road_segment(1, length=100.0, lanes=2, lane_width=4.0, segment_id='a')
        path = tmp_path / 'road.png'
        frame = render_frame(env.snapshot(), path)
        img = read_rgb(path)
        rows, cols = np.nonzero(np.all(img == hex_rgb(PALETTE['road']), axis=-1))
        assert rows.size > 0
        (c0, c1), (r0, r1) = frame.viewport.to_pixels([0.0, 100.0], [4.0, -4.0])
        assert cols.min() == pytest.approx(c0, abs=2.5)
        assert cols.max() == pytest.approx(c1, abs=2.5)
        assert rows.min() == pytest.approx(r0, abs=2.5)
        assert rows.max() == pytest.approx(r1, abs=2.5)

    def test_vehicle_colors(self):
        """Active vehicles are green, crashed red, parked ones are hidden"""
        net = chain_network()
        state = VehicleState(10.0, -2.0, 0.0, 5.0)
        snap = EnvSnapshot(1.0, 20, net, (
            VehicleSnapshot('a', state, VehicleStatus.ACTIVE, None),
            VehicleSnapshot('b', state, VehicleStatus.CRASHED, None),
            VehicleSnapshot('c', state, VehicleStatus.PARKED, None),
        ), 4.5, 1.8)
        frame = build_frame(snap, index=3)
        assert frame.index == 3 and frame.t == 1.0
        assert [(g.vehicle_id, g.color) for g in frame.vehicles] == [
            ('a', PALETTE['active']), ('b', PALETTE['crashed'])]
        assert frame.references == []

    def test_crash_recolors(self):
        """A vehicle driving off an open end turns red"""
        env = TrafficEnvironment(dt=0.1)
        env.create_road_segment(1, length=50.0, speed_limit=10.0, segment_id='a')
        env.create_vehicle('v', controller=ZeroController())
        env.add_vehicle_to_segment('v', 'a', 1, 48.0, 10.0)
        assert build_frame(env.snapshot()).vehicles[0].color == PALETTE['active']
        env.run(1.0)
        assert build_frame(env.snapshot()).vehicles[0].color == PALETTE['crashed']

    def test_references_drawn(self):
        """Each active vehicle contributes its reference polyline"""
        env = build_environment(parse_scenario(RING))
        env.step()
        frame = build_frame(env.snapshot())
        assert len(frame.vehicles) == 4
        assert len(frame.references) == 4
        assert all(ref.shape[1] == 2 for ref in frame.references)
        assert len(frame.lane_centers) > 0


class TestNetworkPlot:
    """Road network figure"""

    def test_graph_layout(self):
        """Every node gets a position and every edge a segment label"""
        graph = chain_network().as_graph()
        positions, labels = graph_layout(graph)
        assert set(positions) == set(graph.nodes)
        assert set(labels.values()) == {'a', 'b'}
        assert len(labels) == graph.number_of_edges()

    def test_visualize_writes_png(self, tmp_path):
        """The plot is written and the graph returned"""
        net = chain_network()
        path = tmp_path / 'network.png'
        graph = visualize_road_network(net, path)
        assert path.exists()
        with Image.open(path) as img:
            assert img.size[0] > 0
        assert graph.number_of_edges() == net.as_graph().number_of_edges()


if __name__ == "__main__":
    pytest.main([__file__])
