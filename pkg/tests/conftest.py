import json
import math
import random
from pathlib import Path

import pytest

from trajoracle.geo import GeoPoint, Trajectory, viewport_for

DATA_DIR = Path(__file__).parent / "data"

# City-block-scale test area (roughly downtown Chengdu).
BASE_LAT = 30.65
BASE_LON = 104.06
DEG_PER_KM_LAT = 1.0 / 111.19492664455873


def deg_per_km_lon(lat=BASE_LAT):
    return DEG_PER_KM_LAT / math.cos(math.radians(lat))


def grid_geojson(center_lat=BASE_LAT, center_lon=BASE_LON, lines=5, spacing_km=0.4):
    """GeoJSON FeatureCollection: a square grid of north-south and east-west roads."""
    half = (lines - 1) / 2 * spacing_km
    lat_step = spacing_km * DEG_PER_KM_LAT
    lon_step = spacing_km * deg_per_km_lon(center_lat)
    lat0 = center_lat - half * DEG_PER_KM_LAT
    lon0 = center_lon - half * deg_per_km_lon(center_lat)
    features = []
    for i in range(lines):
        lat = lat0 + i * lat_step
        features.append({
            "type": "Feature",
            "properties": {"highway": "residential"},
            "geometry": {"type": "LineString",
                         "coordinates": [[lon0, lat], [lon0 + (lines - 1) * lon_step, lat]]},
        })
        lon = lon0 + i * lon_step
        features.append({
            "type": "Feature",
            "properties": {"highway": "residential"},
            "geometry": {"type": "LineString",
                         "coordinates": [[lon, lat0], [lon, lat0 + (lines - 1) * lat_step]]},
        })
    return {"type": "FeatureCollection", "features": features}


def straight_trajectory(n=13, start_lat=BASE_LAT, start_lon=None, heading="east",
                        step_km=0.05, dt=45.0):
    """Uniform trajectory moving along a straight line (a grid road)."""
    start_lon = BASE_LON if start_lon is None else start_lon
    pts = []
    for i in range(n):
        if heading == "east":
            pts.append(GeoPoint(start_lat, start_lon + i * step_km * deg_per_km_lon(start_lat)))
        else:
            pts.append(GeoPoint(start_lat + i * step_km * DEG_PER_KM_LAT, start_lon))
    return Trajectory(tuple(pts), dt)


def corpus_trajectories(n_trajs, seed=7):
    """Synthetic corpus: straight runs along grid roads with varied rows/cols."""
    rng = random.Random(seed)
    out = {}
    for k in range(n_trajs):
        offset = (k % 5 - 2) * 0.4  # pick one of the grid roads
        if k % 2 == 0:
            traj = straight_trajectory(
                start_lat=BASE_LAT + offset * DEG_PER_KM_LAT,
                start_lon=BASE_LON - 0.3 * deg_per_km_lon(),
                heading="east", step_km=0.04 + 0.002 * (k % 7))
        else:
            traj = straight_trajectory(
                start_lat=BASE_LAT - 0.3 * DEG_PER_KM_LAT,
                start_lon=BASE_LON + offset * deg_per_km_lon(),
                heading="north", step_km=0.04 + 0.002 * (k % 7))
        out[f"traj{k:04d}"] = traj
    return out


@pytest.fixture
def roads_doc():
    return grid_geojson()


@pytest.fixture
def roads_file(tmp_path, roads_doc):
    path = tmp_path / "roads.geojson"
    path.write_text(json.dumps(roads_doc), encoding="utf-8")
    return path


@pytest.fixture
def traj13():
    return straight_trajectory()


@pytest.fixture
def viewport(traj13):
    return viewport_for(traj13, canvas_px=1000)


def sample_text(n: int) -> str:
    return (DATA_DIR / f"sample{n}.txt").read_text(encoding="utf-8")
