"""Pytest configuration for shopdsl tests."""

import sys
from pathlib import Path

# Repository root and tests directory on the path
root_path = Path(__file__).parent
tests_path = root_path / "tests"
sys.path.insert(0, str(root_path))
sys.path.insert(0, str(tests_path))
