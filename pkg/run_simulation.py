#!/usr/bin/env python3
"""
Platoon-Sim command line

Runs scenario files, plots their road network graph and validates them.

Usage:
    python run_simulation.py run scenarios/ring_platoon.yaml --out results/ring
    python run_simulation.py graph scenarios/intersection_parking.yaml --out network.png
    python run_simulation.py validate scenarios/ring_platoon.yaml
    python run_simulation.py --help

Exit codes: 0 success, 1 invalid scenario, 2 I/O error.

Author: Platoon-Sim Team
Version: 1.0.0
"""

import argparse
import logging
import os
import sys

# Import the simulator package
sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), 'code'))
from platoon_sim.errors import PlatoonSimError, ScenarioError  # noqa: E402
from platoon_sim.render import visualize_road_network  # noqa: E402
from platoon_sim.runner import ffmpeg_command, run  # noqa: E402
from platoon_sim.scenario import build_environment, parse_scenario, validate_scenario  # noqa: E402

logger = logging.getLogger('platoon_sim.cli')

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_IO = 2


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with the run, graph and validate sub-commands"""
    parser = argparse.ArgumentParser(
        prog='sim',
        description="Deterministic headless multi-vehicle platooning simulator",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Ring road with a four-vehicle platoon
  python run_simulation.py run scenarios/ring_platoon.yaml --out results/ring

  # Same run with video frames, shorter and with another seed
  python run_simulation.py run scenarios/ring_platoon.yaml --out results/ring_short \\
    --duration 10 --seed 7 --frames

  # Intersection, lane changes, split/merge and the parking lot
  python run_simulation.py run scenarios/intersection_parking.yaml --out results/parking

  # Road network and its graph
  python run_simulation.py graph scenarios/intersection_parking.yaml --out network.png

  # Check a scenario file without running it
  python run_simulation.py validate scenarios/ring_platoon.yaml
"""
    )
    parser.add_argument('--verbose', action='store_true',
                        help='Enable debug logging (disables the progress bar)')
    sub = parser.add_subparsers(dest='command', required=True)

    run_p = sub.add_parser('run', help='Run a scenario and write log, frames and summary')
    run_p.add_argument('scenario', help='Scenario file (YAML)')
    run_p.add_argument('--out', required=True, help='Output directory')
    run_p.add_argument('--seed', type=int, default=None, help='Override the scenario seed')
    run_p.add_argument('--duration', type=float, default=None,
                       help='Override SIMULATION_DURATION (seconds)')
    run_p.add_argument('--dt', type=float, default=None, help='Override TIME_STEP (seconds)')
    run_p.add_argument('--frames', action=argparse.BooleanOptionalAction, default=None,
                       help='Override SAVE_VIDEO')

    graph_p = sub.add_parser('graph', help='Plot the road network and its graph')
    graph_p.add_argument('scenario', help='Scenario file (YAML)')
    graph_p.add_argument('--out', required=True, help='Image file to write')

    validate_p = sub.add_parser('validate', help='Parse and validate a scenario file')
    validate_p.add_argument('scenario', help='Scenario file (YAML)')
    return parser


def cmd_run(args) -> int:
    spec = parse_scenario(args.scenario)
    spec = validate_scenario(spec.with_overrides(args.seed, args.duration, args.dt, args.frames))
    meta = spec.meta

    print("=== Platoon-Sim ===")
    print(f"Scenario: {meta.name} ({args.scenario})")
    print(f"Duration: {meta.duration:g} s, dt = {meta.time_step:g} s ({meta.steps} steps)")
    print(f"Seed: {meta.seed}")
    print(f"Vehicles: {len(spec.vehicles)}, segments: {len(spec.segments)}")
    print(f"Output directory: {args.out}")

    summary = run(spec, args.out, progress=not args.verbose)

    print("\n=== Run Complete ===")
    print(f"Wall time: {summary.wall_time_s:.2f} s")
    print(f"Final time: {summary.final_t:g} s")
    print("Statuses: " + ", ".join(f"{k}={v}" for k, v in summary.status_counts.items()))
    print(f"Crashes: {summary.crash_count}")
    print(f"Parking lot releases: {summary.parking_releases}")
    print(f"Log records: {summary.log_records}")
    print("\nFiles created:")
    print(f"  {os.path.join(args.out, 'log.csv')}")
    print(f"  {os.path.join(args.out, 'summary.json')}")
    print(f"  {os.path.join(args.out, 'config.json')}")
    print(f"  {os.path.join(args.out, 'metadata.json')}")
    if summary.frames_written:
        frames_dir = os.path.join(args.out, 'frames')
        print(f"  {frames_dir}/ ({summary.frames_written} frames)")
        print("\nEncode the frames with:")
        print(f"  {ffmpeg_command(frames_dir, meta.fps, os.path.join(args.out, 'video.mp4'))}")
    return EXIT_OK


def cmd_graph(args) -> int:
    spec = parse_scenario(args.scenario)
    env = build_environment(spec)
    graph = visualize_road_network(env.network, args.out)
    print(f"Graph: {graph.number_of_nodes()} nodes, {graph.number_of_edges()} edges")
    print(f"Plot saved to {args.out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    spec = parse_scenario(args.scenario)
    print(f"{args.scenario}: OK ('{spec.meta.name}', {len(spec.segments)} segments, "
          f"{len(spec.vehicles)} vehicles, {spec.meta.steps} steps)")
    return EXIT_OK


COMMANDS = {'run': cmd_run, 'graph': cmd_graph, 'validate': cmd_validate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except PlatoonSimError as exc:
        logger.error("simulation failed: %s", exc)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
