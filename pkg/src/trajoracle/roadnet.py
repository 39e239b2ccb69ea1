"""Road-network ingestion and nearest-road distance queries in pixel space."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .geo import GeoPoint, PixelPoint, Viewport


class ParseError(ValueError):
    """Input document is not usable GeoJSON."""


class EmptyNetwork(ValueError):
    """No line features / segments available."""


Segment = tuple[GeoPoint, GeoPoint]


@dataclass(frozen=True)
class RoadNetwork:
    """Drivable roads as undirected polyline segments."""

    segments: tuple[Segment, ...]
    skipped_features: int = 0

    def __post_init__(self) -> None:
        if not self.segments:
            raise EmptyNetwork("road network has no segments")


def _segments_from_coords(coords: Any, out: list[Segment]) -> None:
    prev: GeoPoint | None = None
    for pos in coords:
        # GeoJSON positions are [lon, lat].
        pt = GeoPoint(float(pos[1]), float(pos[0]))
        if prev is not None and (prev.lat != pt.lat or prev.lon != pt.lon):
            out.append((prev, pt))
        prev = pt


def load_roads(source: Mapping[str, Any] | str | bytes | Path) -> RoadNetwork:
    """Decompose GeoJSON LineString / MultiLineString features into segments.

    Accepts a parsed document, a JSON string/bytes, or a file path. Features
    without line geometry are skipped and counted; zero-length segments are
    dropped. Raises ParseError on malformed input and EmptyNetwork when no
    line features are found.
    """
    if isinstance(source, Path):
        source = source.read_text(encoding="utf-8")
    if isinstance(source, (str, bytes)):
        try:
            doc = json.loads(source)
        except json.JSONDecodeError as e:
            raise ParseError(f"not valid JSON: {e}") from e
    else:
        doc = source
    if not isinstance(doc, Mapping) or "type" not in doc:
        raise ParseError("document has no GeoJSON 'type'")

    kind = doc.get("type")
    if kind == "FeatureCollection":
        geometries = [(f or {}).get("geometry") for f in doc.get("features", [])]
    elif kind == "Feature":
        geometries = [doc.get("geometry")]
    else:
        geometries = [doc]

    segments: list[Segment] = []
    skipped = 0
    for geom in geometries:
        gtype = (geom or {}).get("type")
        try:
            if gtype == "LineString":
                _segments_from_coords(geom["coordinates"], segments)
            elif gtype == "MultiLineString":
                for line in geom["coordinates"]:
                    _segments_from_coords(line, segments)
            else:
                skipped += 1
        except (KeyError, TypeError, IndexError, ValueError) as e:
            raise ParseError(f"malformed {gtype} geometry: {e}") from e
    if not segments:
        raise EmptyNetwork(f"no line features found ({skipped} non-line features skipped)")
    return RoadNetwork(tuple(segments), skipped)


def point_segment_distance(
    px: float, py: float, ax: float, ay: float, bx: float, by: float
) -> float:
    """Euclidean distance from (px, py) to segment (ax, ay)-(bx, by)."""
    dx = bx - ax
    dy = by - ay
    seg_len2 = dx * dx + dy * dy
    if seg_len2 == 0.0:
        return math.hypot(px - ax, py - ay)
    t = ((px - ax) * dx + (py - ay) * dy) / seg_len2
    t = min(max(t, 0.0), 1.0)
    return math.hypot(px - (ax + t * dx), py - (ay + t * dy))


@dataclass
class SegmentIndex:
    """Uniform grid over a viewport's pixel space for nearest-segment queries.

    Each segment is registered in every cell its pixel bbox overlaps; segments
    outside the canvas are clamped into border cells so edge queries stay
    exact. Queries expand cell rings until no unscanned ring can hold a closer
    segment, so the result equals an exhaustive scan (same arithmetic).
    """

    segments_px: list[tuple[float, float, float, float]]
    cell_px: int
    cols: int
    rows: int
    cells: dict[tuple[int, int], list[int]] = field(repr=False)

    def _cell_of(self, x: float, y: float) -> tuple[int, int]:
        cx = min(max(int(x // self.cell_px), 0), self.cols - 1)
        cy = min(max(int(y // self.cell_px), 0), self.rows - 1)
        return cx, cy

    def nearest_distance(self, p: PixelPoint) -> float:
        """Exact minimum point-to-segment distance in pixels over all segments."""
        if not self.segments_px:
            raise EmptyNetwork("index has no segments")
        px, py = float(p[0]), float(p[1])
        cx0, cy0 = self._cell_of(px, py)
        max_ring = max(self.cols, self.rows)
        best = math.inf
        seen: set[int] = set()
        for ring in range(max_ring + 1):
            found_cell = False
            for cx, cy in self._ring_cells(cx0, cy0, ring):
                found_cell = True
                for idx in self.cells.get((cx, cy), ()):
                    if idx in seen:
                        continue
                    seen.add(idx)
                    ax, ay, bx, by = self.segments_px[idx]
                    d = point_segment_distance(px, py, ax, ay, bx, by)
                    if d < best:
                        best = d
            # Any segment in an unscanned ring lies at least ring*cell_px away.
            if best <= ring * self.cell_px:
                break
            if not found_cell and ring > 0:
                break
        return best

    def _ring_cells(self, cx0: int, cy0: int, ring: int):
        if ring == 0:
            yield cx0, cy0
            return
        x_lo, x_hi = cx0 - ring, cx0 + ring
        y_lo, y_hi = cy0 - ring, cy0 + ring
        for cx in range(max(x_lo, 0), min(x_hi, self.cols - 1) + 1):
            if 0 <= y_lo:
                yield cx, y_lo
            if y_hi <= self.rows - 1:
                yield cx, y_hi
        for cy in range(max(y_lo + 1, 0), min(y_hi - 1, self.rows - 1) + 1):
            if 0 <= x_lo:
                yield x_lo, cy
            if x_hi <= self.cols - 1:
                yield x_hi, cy


def index_from_pixel_segments(
    segments_px: list[tuple[float, float, float, float]],
    width_px: int,
    height_px: int,
    cell_px: int = 64,
) -> SegmentIndex:
    """Grid-index segments already expressed in pixel coordinates."""
    if cell_px <= 0:
        raise ValueError("cell_px must be positive")
    cols = max(1, math.ceil(width_px / cell_px))
    rows = max(1, math.ceil(height_px / cell_px))
    cells: dict[tuple[int, int], list[int]] = {}
    for idx, (ax, ay, bx, by) in enumerate(segments_px):
        cx_lo = min(max(int(min(ax, bx) // cell_px), 0), cols - 1)
        cx_hi = min(max(int(max(ax, bx) // cell_px), 0), cols - 1)
        cy_lo = min(max(int(min(ay, by) // cell_px), 0), rows - 1)
        cy_hi = min(max(int(max(ay, by) // cell_px), 0), rows - 1)
        for cx in range(cx_lo, cx_hi + 1):
            for cy in range(cy_lo, cy_hi + 1):
                cells.setdefault((cx, cy), []).append(idx)
    return SegmentIndex(list(segments_px), cell_px, cols, rows, cells)


def build_index(net: RoadNetwork, vp: Viewport, cell_px: int = 64) -> SegmentIndex:
    """Project a network into the viewport's pixel space and grid-index it."""
    segments_px = []
    for a, b in net.segments:
        ax, ay = vp.project(a)
        bx, by = vp.project(b)
        segments_px.append((ax, ay, bx, by))
    return index_from_pixel_segments(segments_px, vp.width_px, vp.height_px, cell_px)


def nearest_road_distance(idx: SegmentIndex, p: PixelPoint) -> float:
    """Pixel distance from ``p`` to the nearest road segment."""
    return idx.nearest_distance(p)
