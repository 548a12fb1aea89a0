from pathlib import Path

import pytest

from coverkit.geometry import ConvexPolygon

REPO_ROOT = Path(__file__).resolve().parent.parent


@pytest.fixture
def unit_square():
    return ConvexPolygon([(0, 0), (1, 0), (1, 1), (0, 1)])


@pytest.fixture(scope="session")
def portrait_path():
    path = REPO_ROOT / "scenarios" / "portrait.pgm"
    assert path.exists(), "run scenarios/make_portrait.py first"
    return path
