import sys
from pathlib import Path

import pytest

REPO = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(REPO / "scripts"))

from microcarla.town import TownMap, load_bundled, town_from_dict


@pytest.fixture(scope="session")
def town_a() -> TownMap:
    return load_bundled("a")


@pytest.fixture(scope="session")
def town_b() -> TownMap:
    return load_bundled("b")


@pytest.fixture(scope="session")
def toy_town() -> TownMap:
    """Small 3x2 grid (ring plus one rung), cheap enough for exhaustive
    route enumeration; unlike a plain ring, every directed edge stays
    reachable without U-turns."""
    from build_towns import build_grid_town
    data = build_grid_town("toy", cols=3, rows=2, declared_km=0.7,
                           slow_roads=(), light_nodes=())
    return town_from_dict(data)


@pytest.fixture(scope="session")
def line_town() -> TownMap:
    """Three collinear intersections, two straight road segments."""
    from build_towns import build_grid_town
    data = build_grid_town("line", cols=3, rows=1, declared_km=0.36,
                           slow_roads=(), light_nodes=())
    return town_from_dict(data)
