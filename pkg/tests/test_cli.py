"""
Tests for the run_simulation.py command line

Run with: pytest tests/test_cli.py

Author: Platoon-Sim Team
Version: 1.0.0
"""

import json
import os
import subprocess
import sys
import tempfile

import pytest
import yaml
from PIL import Image

ROOT = os.path.join(os.path.dirname(os.path.abspath(__file__)), '..')
RING = os.path.join(ROOT, 'scenarios', 'ring_platoon.yaml')
INTERSECTION = os.path.join(ROOT, 'scenarios', 'intersection_parking.yaml')


def sim(*args):
    return subprocess.run([sys.executable, 'run_simulation.py', *args],
                          capture_output=True, text=True, cwd=ROOT)


class TestCommandLine:
    """Sub-commands and exit codes"""

    def test_help_option(self):
        """--help lists the sub-commands"""
        result = sim('--help')
        assert result.returncode == 0
        assert 'usage:' in result.stdout.lower()
        for command in ('run', 'graph', 'validate'):
            assert command in result.stdout

    def test_validate_bundled(self):
        """Both bundled scenarios validate"""
        for path in (RING, INTERSECTION):
            result = sim('validate', path)
            assert result.returncode == 0, result.stderr
            assert 'OK' in result.stdout

    def test_validate_invalid(self):
        """A dangling segment reference exits with 1 and names the key"""
        with open(RING, encoding='utf-8') as f:
            doc = yaml.safe_load(f)
        doc['connections'][0]['moving'] = ['s9', 'start']
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, 'bad.yaml')
            with open(path, 'w', encoding='utf-8') as f:
                yaml.safe_dump(doc, f)
            result = sim('validate', path)
        assert result.returncode == 1
        assert 'connections[0].moving' in result.stderr

    def test_infinite_duration(self):
        """An infinite duration in the file or on the command line is a validation error"""
        with open(RING, encoding='utf-8') as f:
            doc = yaml.safe_load(f)
        doc['meta']['SIMULATION_DURATION'] = float('inf')
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, 'endless.yaml')
            with open(path, 'w', encoding='utf-8') as f:
                yaml.safe_dump(doc, f)
            result = sim('validate', path)
            assert result.returncode == 1
            assert 'meta.SIMULATION_DURATION' in result.stderr
            result = sim('run', RING, '--out', os.path.join(temp_dir, 'out'), '--duration', 'inf')
        assert result.returncode == 1
        assert 'Traceback' not in result.stderr

    def test_missing_file(self):
        """An unreadable scenario file is an I/O error"""
        result = sim('validate', os.path.join(ROOT, 'scenarios', 'does_not_exist.yaml'))
        assert result.returncode == 2

    def test_run_with_frames(self):
        """10 s at fps 10 writes 100 frames at 1280x720 plus the run files"""
        with tempfile.TemporaryDirectory() as temp_dir:
            out = os.path.join(temp_dir, 'ring')
            result = sim('run', RING, '--out', out, '--duration', '10', '--frames')
            assert result.returncode == 0, f"Command failed with: {result.stderr}"

            for name in ('log.csv', 'summary.json', 'config.json', 'metadata.json'):
                assert os.path.exists(os.path.join(out, name)), f"Required file missing: {name}"

            frames = sorted(os.listdir(os.path.join(out, 'frames')))
            assert len(frames) == 100
            assert frames[0] == 'frame_000000.png'
            assert frames[-1] == 'frame_000099.png'
            for name in (frames[0], frames[-1]):
                with Image.open(os.path.join(out, 'frames', name)) as img:
                    assert img.size == (1280, 720)

            with open(os.path.join(out, 'summary.json')) as f:
                summary = json.load(f)
            assert summary['steps'] == 200
            assert summary['frames_written'] == 100
            assert summary['crash_count'] == 0
            assert 'ffmpeg' in result.stdout

    def test_run_overrides_recorded(self):
        """Seed and duration overrides end up in config.json"""
        with tempfile.TemporaryDirectory() as temp_dir:
            result = sim('run', RING, '--out', temp_dir, '--duration', '1', '--seed', '7',
                         '--no-frames')
            assert result.returncode == 0, result.stderr
            with open(os.path.join(temp_dir, 'config.json')) as f:
                config = json.load(f)
            assert config['meta']['seed'] == 7
            assert config['meta']['SIMULATION_DURATION'] == 1.0
            assert not os.path.exists(os.path.join(temp_dir, 'frames'))

    def test_unwritable_output(self):
        """An output path below a regular file exits with 2"""
        with tempfile.TemporaryDirectory() as temp_dir:
            blocker = os.path.join(temp_dir, 'file')
            with open(blocker, 'w') as f:
                f.write('x')
            result = sim('run', RING, '--out', os.path.join(blocker, 'out'), '--duration', '1')
        assert result.returncode == 2

    def test_graph(self):
        """The graph sub-command writes the plot"""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, 'network.png')
            result = sim('graph', INTERSECTION, '--out', path)
            assert result.returncode == 0, result.stderr
            assert os.path.exists(path)
            assert 'nodes' in result.stdout


if __name__ == "__main__":
    pytest.main([__file__])
