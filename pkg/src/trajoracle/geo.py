"""Geographic primitives: points, uniform-time resampling, and the square
viewport that maps a trajectory neighbourhood onto a pixel canvas."""

from __future__ import annotations

import csv
import json
import math
from bisect import bisect_right
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

EARTH_RADIUS_M = 6_371_000.0
METERS_PER_DEG_LAT = EARTH_RADIUS_M * math.pi / 180.0

PixelPoint = tuple[float, float]


class SpanTooShort(ValueError):
    """Raw trajectory does not cover the requested resampling window."""


class NonMonotoneTime(ValueError):
    """Raw timestamps must be strictly increasing."""


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 coordinate in degrees."""

    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat!r}, {self.lon!r})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class TimedPoint:
    """Raw GPS fix with a timestamp in seconds since trajectory start."""

    point: GeoPoint
    t: float

    def __post_init__(self) -> None:
        if not math.isfinite(self.t) or self.t < 0:
            raise ValueError(f"bad timestamp {self.t!r}")


@dataclass(frozen=True)
class Trajectory:
    """Uniformly sampled trajectory: consecutive points are ``dt`` seconds apart."""

    points: tuple[GeoPoint, ...]
    dt: float = 45.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))
        if len(self.points) < 2:
            raise ValueError("trajectory needs at least two points")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"bad sampling interval {self.dt!r}")

    def __len__(self) -> int:
        return len(self.points)

    def prefix(self, n: int) -> tuple[GeoPoint, ...]:
        """First ``n`` points (the model input; the remainder is held-out truth)."""
        if not 2 <= n <= len(self.points):
            raise ValueError(f"prefix length {n} outside [2, {len(self.points)}]")
        return self.points[:n]


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in meters on a sphere of radius 6,371,000 m."""
    phi1 = math.radians(a.lat)
    phi2 = math.radians(b.lat)
    dphi = math.radians(b.lat - a.lat)
    dlam = math.radians(b.lon - a.lon)
    s = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(s)))


def resample_uniform(raw: Sequence[TimedPoint], dt: float = 45.0, count: int = 13) -> Trajectory:
    """Resample a raw timed sequence to ``count`` points spaced exactly ``dt`` apart.

    Each output point is the piecewise-linear interpolation of lat and lon in
    time between the bracketing raw fixes. Raw input that does not span
    ``(count - 1) * dt`` seconds is rejected, not padded.
    """
    if count < 2:
        raise ValueError("count must be at least 2")
    if len(raw) < 2:
        raise SpanTooShort("need at least two raw points")
    times = [p.t for p in raw]
    for earlier, later in zip(times, times[1:]):
        if later <= earlier:
            raise NonMonotoneTime(f"timestamps not strictly increasing at t={later}")
    needed = (count - 1) * dt
    span = times[-1] - times[0]
    if span < needed - 1e-9:
        raise SpanTooShort(f"raw span {span:.3f}s < required {needed:.3f}s")

    out = []
    for k in range(count):
        target = times[0] + k * dt
        idx = bisect_right(times, target) - 1
        idx = min(max(idx, 0), len(raw) - 2)
        t0, t1 = times[idx], times[idx + 1]
        frac = (target - t0) / (t1 - t0)
        frac = min(max(frac, 0.0), 1.0)
        p0, p1 = raw[idx].point, raw[idx + 1].point
        out.append(
            GeoPoint(
                p0.lat + (p1.lat - p0.lat) * frac,
                p0.lon + (p1.lon - p0.lon) * frac,
            )
        )
    return Trajectory(tuple(out), dt)


@dataclass(frozen=True)
class Viewport:
    """Square geographic bbox bound to a pixel canvas.

    The mapping is locally equirectangular (linear in lat and lon, with the
    lon axis scaled by cos of the center latitude when the bbox is built), so
    pixel distance times ``meters_per_pixel`` tracks metric distance at city
    scale. Pixel origin is the top-left corner, y grows downward.
    """

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float
    width_px: int
    height_px: int
    meters_per_pixel: float

    def __post_init__(self) -> None:
        if not (self.min_lat < self.max_lat and self.min_lon < self.max_lon):
            raise ValueError("degenerate geographic bbox")
        if self.width_px <= 0 or self.height_px <= 0:
            raise ValueError("canvas dimensions must be positive")

    @property
    def geo_bbox(self) -> tuple[float, float, float, float]:
        return (self.min_lat, self.min_lon, self.max_lat, self.max_lon)

    def project(self, g: GeoPoint) -> PixelPoint:
        """Geo to pixel. Out-of-bbox points map to out-of-canvas coordinates."""
        x = (g.lon - self.min_lon) / (self.max_lon - self.min_lon) * self.width_px
        y = (self.max_lat - g.lat) / (self.max_lat - self.min_lat) * self.height_px
        return (x, y)

    def unproject(self, px: PixelPoint) -> GeoPoint:
        """Pixel to geo; inverse of :meth:`project` up to float rounding."""
        lon = self.min_lon + px[0] / self.width_px * (self.max_lon - self.min_lon)
        lat = self.max_lat - px[1] / self.height_px * (self.max_lat - self.min_lat)
        return GeoPoint(lat, lon)


def viewport_for(
    traj: Trajectory | Sequence[GeoPoint],
    margin_factor: float = 1.5,
    canvas_px: int = 1000,
    min_side_m: float = 500.0,
) -> Viewport:
    """Square viewport centered on the trajectory's bounding box.

    The geographic side is ``max(bbox_width, bbox_height) * margin_factor``
    in meters, floored at ``min_side_m``; a trajectory whose points all
    coincide therefore still gets a usable ``min_side_m`` view around it.
    """
    pts = traj.points if isinstance(traj, Trajectory) else tuple(traj)
    if not pts:
        raise ValueError("no points")
    lats = [p.lat for p in pts]
    lons = [p.lon for p in pts]
    c_lat = (min(lats) + max(lats)) / 2
    c_lon = (min(lons) + max(lons)) / 2
    if abs(c_lat) > 85.0:
        raise ValueError("viewport construction is not defined near the poles")
    m_per_deg_lon = METERS_PER_DEG_LAT * math.cos(math.radians(c_lat))
    height_m = (max(lats) - min(lats)) * METERS_PER_DEG_LAT
    width_m = (max(lons) - min(lons)) * m_per_deg_lon
    side_m = max(max(width_m, height_m) * margin_factor, min_side_m)
    half_lat = side_m / 2 / METERS_PER_DEG_LAT
    half_lon = side_m / 2 / m_per_deg_lon
    return Viewport(
        min_lat=c_lat - half_lat,
        min_lon=c_lon - half_lon,
        max_lat=c_lat + half_lat,
        max_lon=c_lon + half_lon,
        width_px=canvas_px,
        height_px=canvas_px,
        meters_per_pixel=side_m / canvas_px,
    )


def load_raw_trajectories(path: str | Path) -> dict[str, list[TimedPoint]]:
    """Read raw fixes from CSV or JSON-lines with fields (traj_id, t_seconds, lat, lon).

    Points are grouped by traj_id in file order; timestamp monotonicity is
    checked later, at resampling time.
    """
    path = Path(path)
    groups: dict[str, list[TimedPoint]] = {}
    if path.suffix.lower() == ".csv":
        with path.open(newline="", encoding="utf-8") as f:
            for row in csv.DictReader(f):
                groups.setdefault(str(row["traj_id"]), []).append(
                    TimedPoint(GeoPoint(float(row["lat"]), float(row["lon"])), float(row["t_seconds"]))
                )
    else:
        with path.open(encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                groups.setdefault(str(rec["traj_id"]), []).append(
                    TimedPoint(GeoPoint(float(rec["lat"]), float(rec["lon"])), float(rec["t_seconds"]))
                )
    return groups
