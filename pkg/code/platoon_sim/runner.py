"""
Scenario runner

Executes a validated scenario for its full duration and writes the run
directory: log.csv, optional frames/frame_%06d.png, summary.json,
config.json (canonical scenario) and metadata.json (execution
environment).

Author: Platoon-Sim Team
Version: 1.0.0
"""

import json
import logging
import os
import platform
import subprocess
import time
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Union

import matplotlib
import networkx as nx
import numpy as np
import pandas as pd
import yaml
from tqdm import tqdm

from . import __version__
from .engine import VehicleStatus
from .render import Viewport, render_frame
from .scenario import ScenarioSchedule, ScenarioSpec, build_environment, serialize_scenario

logger = logging.getLogger(__name__)

FRAME_PATTERN = 'frame_%06d.png'


@dataclass
class RunSummary:
    """Outcome of one run; everything except wall_time_s is deterministic"""
    scenario: str
    seed: int
    dt: float
    duration: float
    steps: int
    final_t: float
    final_statuses: Dict[str, str] = field(default_factory=dict)
    status_counts: Dict[str, int] = field(default_factory=dict)
    crash_count: int = 0
    parking_releases: int = 0
    log_records: int = 0
    frames_written: int = 0
    wall_time_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


def create_metadata(start_time: datetime, end_time: datetime, summary: RunSummary) -> dict:
    """Execution environment, versions and timing of a run"""
    git_commit = "unknown"
    git_dirty = True
    try:
        git_commit = subprocess.check_output(['git', 'rev-parse', 'HEAD'],
                                             stderr=subprocess.DEVNULL).decode().strip()
        git_status = subprocess.check_output(['git', 'status', '--porcelain'],
                                             stderr=subprocess.DEVNULL).decode().strip()
        git_dirty = len(git_status) > 0
    except (OSError, subprocess.CalledProcessError) as exc:
        logger.debug("git metadata unavailable: %s", exc)

    return {
        "execution": {
            "scenario": summary.scenario,
            "start_time": start_time.isoformat(),
            "end_time": end_time.isoformat(),
            "duration_seconds": (end_time - start_time).total_seconds(),
            "hostname": platform.node(),
        },
        "environment": {
            "python_version": platform.python_version(),
            "platform": platform.platform(),
            "cpu_count": os.cpu_count(),
        },
        "software": {
            "platoon_sim_version": __version__,
            "git_commit": git_commit,
            "is_dirty": git_dirty,
        },
        "dependencies": {
            "numpy": np.__version__,
            "pandas": pd.__version__,
            "matplotlib": matplotlib.__version__,
            "networkx": nx.__version__,
            "pyyaml": yaml.__version__,
        },
        "performance": {
            "steps": summary.steps,
            "steps_per_second": summary.steps / summary.wall_time_s if summary.wall_time_s else None,
            "frames_written": summary.frames_written,
        },
    }


def ffmpeg_command(frames_dir: Union[str, Path], fps: float,
                   output: Union[str, Path] = 'video.mp4') -> str:
    """External encoder command line for a frame directory"""
    return (f"ffmpeg -y -framerate {fps:g} -i {Path(frames_dir) / FRAME_PATTERN} "
            f"-c:v libx264 -pix_fmt yuv420p {output}")


def run(spec: ScenarioSpec, out_dir: Union[str, Path], progress: bool = False) -> RunSummary:
    """Run a scenario and write its outputs

    Args:
        spec: validated scenario
        out_dir: output directory, created if needed
        progress: show a tqdm progress bar

    Returns:
        RunSummary: also written to summary.json

    Raises:
        PlatoonSimError: construction errors of the scenario
        OSError: the output directory is not writable
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    meta = spec.meta
    env = build_environment(spec)
    schedule = ScenarioSchedule(spec)

    with open(out / 'config.json', 'w') as f:
        json.dump(serialize_scenario(spec), f, indent=2)

    frames_dir = out / 'frames'
    viewport: Optional[Viewport] = None
    if meta.save_video:
        frames_dir.mkdir(exist_ok=True)
        viewport = Viewport.fit(env.network.bounds())
    stride = meta.frame_stride

    steps = meta.steps
    logger.info("running '%s': %d steps of %.3f s, seed %d", meta.name, steps,
                meta.time_step, meta.seed)
    start_time = datetime.now(timezone.utc)
    wall_start = time.perf_counter()

    env.begin()
    frames = 0
    iterator = range(steps)
    if progress:
        iterator = tqdm(iterator, desc=meta.name, unit='step')
    for k in iterator:
        schedule.apply(env)
        if meta.save_video and k % stride == 0:
            render_frame(env.snapshot(), frames_dir / (FRAME_PATTERN % frames), frames, viewport)
            frames += 1
        env.step()

    wall_time = time.perf_counter() - wall_start
    end_time = datetime.now(timezone.utc)

    env.write_log(out / 'log.csv')
    statuses = {vid: v.status.value for vid, v in sorted(env.vehicles.items())}
    summary = RunSummary(
        scenario=meta.name,
        seed=meta.seed,
        dt=meta.time_step,
        duration=meta.duration,
        steps=steps,
        final_t=round(env.t, 9),
        final_statuses=statuses,
        status_counts=env.status_counts(),
        crash_count=sum(1 for s in statuses.values() if s == VehicleStatus.CRASHED.value),
        parking_releases=len(env.releases),
        log_records=len(env.records),
        frames_written=frames,
        wall_time_s=wall_time,
    )
    with open(out / 'summary.json', 'w') as f:
        json.dump(summary.to_dict(), f, indent=2)
    with open(out / 'metadata.json', 'w') as f:
        json.dump(create_metadata(start_time, end_time, summary), f, indent=2)
    logger.info("finished '%s' in %.2f s: %s", meta.name, wall_time, summary.status_counts)
    return summary


def load_log(path: Union[str, Path]) -> pd.DataFrame:
    """Read a log.csv back with vehicle ids as strings"""
    return pd.read_csv(path, dtype={'vehicle_id': str, 'channel': str})


def channel_table(log: pd.DataFrame, channel: str) -> pd.DataFrame:
    """Rows of one channel with its values under their channel names"""
    names: Dict[str, List[str]] = {
        'position': ['x', 'y', 'theta'],
        'velocity': ['v', 'vx', 'vy'],
        'control_input': ['a', 'delta'],
        'status': ['status'],
    }
    cols = names[channel]
    rows = log[log['channel'] == channel]
    table = rows[['t', 'vehicle_id'] + [f'v{i + 1}' for i in range(len(cols))]].copy()
    table.columns = ['t', 'vehicle_id'] + cols
    if channel != 'status':
        table[cols] = table[cols].astype(float)
    return table.reset_index(drop=True)

