"""
Frame rendering and road network plots

Frames are drawn with matplotlib on the Agg backend at a fixed
resolution. The viewport is fitted once to the road network bounding box
with a 5% margin, so every frame of a run shares the same framing.

Palette:
    background      light gray
    road            dark gray, lane boundaries in white
    lane centres    blue
    reference       red (one polyline per active vehicle)
    active vehicle  green
    crashed vehicle red

Author: Platoon-Sim Team
Version: 1.0.0
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import networkx as nx  # noqa: E402
import numpy as np  # noqa: E402
from matplotlib.patches import Polygon  # noqa: E402

from .engine import EnvSnapshot, VehicleStatus  # noqa: E402
from .geometry import Vec2  # noqa: E402
from .road_network import RoadNetwork  # noqa: E402

logger = logging.getLogger(__name__)

PALETTE = {
    'background': '#d3d3d3',
    'road': '#404040',
    'marking': '#f0f0f0',
    'lane_center': '#1f3fbf',
    'reference': '#e01010',
    'active': '#10a010',
    'crashed': '#e01010',
}

DEFAULT_RESOLUTION = (1280, 720)
DPI = 100
MARGIN = 0.05

# Distance from the rear axle (the state position) to the rear bumper
_REAR_OVERHANG = 1.0


@dataclass(frozen=True)
class Viewport:
    """World window shown in a frame

    Attributes:
        center: world point at the image centre
        scale: pixels per meter
        width, height: image size in pixels
    """
    center: Vec2
    scale: float
    width: int = DEFAULT_RESOLUTION[0]
    height: int = DEFAULT_RESOLUTION[1]

    @classmethod
    def fit(cls, bounds: Optional[Tuple[float, float, float, float]],
            resolution: Tuple[int, int] = DEFAULT_RESOLUTION,
            margin: float = MARGIN) -> "Viewport":
        """Largest scale showing `bounds` grown by `margin` of its size on every side"""
        width, height = resolution
        if bounds is None:
            return cls(Vec2(0.0, 0.0), 10.0, width, height)
        xmin, ymin, xmax, ymax = bounds
        span_x = max(xmax - xmin, 1e-3) * (1.0 + 2.0 * margin)
        span_y = max(ymax - ymin, 1e-3) * (1.0 + 2.0 * margin)
        scale = min(width / span_x, height / span_y)
        return cls(Vec2((xmin + xmax) / 2.0, (ymin + ymax) / 2.0), scale, width, height)

    @property
    def world_bounds(self) -> Tuple[float, float, float, float]:
        half_w = self.width / self.scale / 2.0
        half_h = self.height / self.scale / 2.0
        return (self.center.x - half_w, self.center.y - half_h,
                self.center.x + half_w, self.center.y + half_h)

    def to_pixels(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        """Image column and row (row 0 at the top) of world points"""
        xmin, _, _, ymax = self.world_bounds
        col = (np.asarray(x, dtype=float) - xmin) * self.scale
        row = (ymax - np.asarray(y, dtype=float)) * self.scale
        return col, row


@dataclass
class VehicleGlyph:
    vehicle_id: str
    corners: np.ndarray
    color: str


@dataclass
class Frame:
    """Draw list of one rendered image"""
    index: int
    t: float
    viewport: Viewport
    roads: List[np.ndarray] = field(default_factory=list)
    markings: List[np.ndarray] = field(default_factory=list)
    lane_centers: List[np.ndarray] = field(default_factory=list)
    references: List[np.ndarray] = field(default_factory=list)
    vehicles: List[VehicleGlyph] = field(default_factory=list)


def vehicle_corners(x: float, y: float, theta: float, length: float,
                    width: float) -> np.ndarray:
    """Rectangle corners of a vehicle whose rear axle is at (x, y)"""
    c, s = math.cos(theta), math.sin(theta)
    rear, front = -_REAR_OVERHANG, length - _REAR_OVERHANG
    local = np.array([[rear, -width / 2], [front, -width / 2],
                      [front, width / 2], [rear, width / 2]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def build_frame(snapshot: EnvSnapshot, index: int = 0,
                viewport: Optional[Viewport] = None,
                resolution: Tuple[int, int] = DEFAULT_RESOLUTION) -> Frame:
    """Collect everything to draw for a snapshot"""
    network = snapshot.network
    viewport = viewport or Viewport.fit(network.bounds(), resolution)
    frame = Frame(index, snapshot.t, viewport)
    for seg in network.segments.values():
        frame.roads.extend(seg.outlines())
        frame.markings.extend(seg.markings())
    frame.lane_centers = network.lane_centers_for_drawing()
    for v in snapshot.vehicles:
        if v.status == VehicleStatus.PARKED:
            continue
        if v.status == VehicleStatus.ACTIVE and v.reference is not None and len(v.reference):
            frame.references.append(v.reference.positions)
        color = PALETTE['active'] if v.status == VehicleStatus.ACTIVE else PALETTE['crashed']
        corners = vehicle_corners(v.state.x, v.state.y, v.state.theta,
                                  snapshot.vehicle_length, snapshot.vehicle_width)
        frame.vehicles.append(VehicleGlyph(v.id, corners, color))
    return frame


def _figure(viewport: Viewport):
    fig = plt.figure(figsize=(viewport.width / DPI, viewport.height / DPI), dpi=DPI)
    fig.patch.set_facecolor(PALETTE['background'])
    ax = fig.add_axes([0, 0, 1, 1])
    ax.set_facecolor(PALETTE['background'])
    xmin, ymin, xmax, ymax = viewport.world_bounds
    ax.set_xlim(xmin, xmax)
    ax.set_ylim(ymin, ymax)
    ax.set_axis_off()
    return fig, ax


def draw_frame(frame: Frame, path: Union[str, Path]) -> None:
    """Rasterize a frame to a PNG file"""
    fig, ax = _figure(frame.viewport)
    try:
        for poly in frame.roads:
            ax.add_patch(Polygon(poly, closed=True, facecolor=PALETTE['road'],
                                 edgecolor='none', antialiased=False, zorder=1))
        for line in frame.markings:
            ax.plot(line[:, 0], line[:, 1], color=PALETTE['marking'], linewidth=0.5,
                    antialiased=False, zorder=2)
        for line in frame.lane_centers:
            ax.plot(line[:, 0], line[:, 1], color=PALETTE['lane_center'], linewidth=0.8,
                    linestyle='--', zorder=3)
        for line in frame.references:
            ax.plot(line[:, 0], line[:, 1], color=PALETTE['reference'], linewidth=1.2, zorder=4)
        for glyph in frame.vehicles:
            ax.add_patch(Polygon(glyph.corners, closed=True, facecolor=glyph.color,
                                 edgecolor='black', linewidth=0.5, zorder=5))
        fig.savefig(path, dpi=DPI, facecolor=PALETTE['background'])
    finally:
        plt.close(fig)


def render_frame(snapshot: EnvSnapshot, path: Optional[Union[str, Path]] = None,
                 index: int = 0, viewport: Optional[Viewport] = None,
                 resolution: Tuple[int, int] = DEFAULT_RESOLUTION) -> Frame:
    """Build the frame of a snapshot and, given a path, write it as PNG

    Raises:
        OSError: the image cannot be written
    """
    frame = build_frame(snapshot, index, viewport, resolution)
    if path is not None:
        draw_frame(frame, path)
    return frame


def graph_layout(graph: nx.MultiDiGraph) -> Tuple[Dict[str, Tuple[float, float]],
                                                  Dict[Tuple[str, str, int], str]]:
    """Node positions (merged connection point coordinates) and edge labels (segment ids)"""
    positions = {node: tuple(data['pos']) for node, data in graph.nodes(data=True)}
    labels = {(u, v, k): data['segment'] for u, v, k, data in graph.edges(keys=True, data=True)}
    return positions, labels


def visualize_road_network(network: RoadNetwork, path: Union[str, Path]) -> nx.MultiDiGraph:
    """Geometric road plot next to its graph representation

    Raises:
        OSError: the image cannot be written
    """
    graph = network.as_graph()
    positions, labels = graph_layout(graph)
    fig, (ax_road, ax_graph) = plt.subplots(1, 2, figsize=(14, 6))
    try:
        for seg in network.segments.values():
            for poly in seg.outlines():
                ax_road.add_patch(Polygon(poly, closed=True, facecolor=PALETTE['road'],
                                          edgecolor='none'))
        for line in network.lane_centers_for_drawing():
            ax_road.plot(line[:, 0], line[:, 1], color=PALETTE['lane_center'], linewidth=0.8)
        ax_road.set_title('Road network')
        ax_road.set_aspect('equal')
        ax_road.autoscale_view()
        ax_road.grid(True, alpha=0.3)

        if graph.number_of_nodes():
            nx.draw_networkx_nodes(graph, positions, ax=ax_graph, node_size=120,
                                   node_color=PALETTE['lane_center'])
            nx.draw_networkx_labels(graph, positions, ax=ax_graph, font_size=7)
            nx.draw_networkx_edges(graph, positions, ax=ax_graph, arrows=True)
            # Parallel edges share one label per direction
            placed = set()
            for (u, v, _), seg_id in sorted(labels.items()):
                if (u, v) in placed:
                    continue
                placed.add((u, v))
                (x0, y0), (x1, y1) = positions[u], positions[v]
                ax_graph.text((2 * x0 + x1) / 3.0, (2 * y0 + y1) / 3.0, seg_id, fontsize=7,
                              ha='center', va='center')
        ax_graph.set_title(f'Graph ({graph.number_of_nodes()} nodes, '
                           f'{graph.number_of_edges()} edges)')
        ax_graph.set_aspect('equal')
        plt.tight_layout()
        fig.savefig(path, dpi=150)
    finally:
        plt.close(fig)
    logger.info("road network plot written to %s", path)
    return graph
