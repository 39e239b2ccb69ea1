"""Deterministic map rendering: gray roads on white, trajectory arrows,
numbered endpoint dots, and region overlays. No anti-aliasing, no external
font or image libraries, so identical inputs give identical PNG bytes."""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .font5x7 import GLYPH_H, GLYPH_W, glyph_pixels
from .geo import GeoPoint, Viewport
from .roadnet import RoadNetwork

if TYPE_CHECKING:
    from .vgls import PixelRect, SplitSpec

Color = tuple[int, int, int]


@dataclass(frozen=True)
class RenderStyle:
    road_color: Color = (160, 160, 160)
    road_width_px: int = 3
    arrow_color: Color = (0, 0, 0)
    arrow_width_px: int = 2
    endpoint_color: Color = (128, 0, 128)
    endpoint_radius_px: int = 6
    label_size_px: int = 14
    region_blue: Color = (0, 0, 255)
    region_yellow: Color = (255, 215, 0)
    region_alpha: float = 0.35

    def __post_init__(self) -> None:
        if not 0.0 <= self.region_alpha <= 1.0:
            raise ValueError("region_alpha must be in [0, 1]")
        if self.road_width_px <= 0 or self.arrow_width_px <= 0 or self.endpoint_radius_px <= 0:
            raise ValueError("widths and radii must be positive")


@dataclass
class Canvas:
    """RGB pixel buffer, row-major, origin top-left."""

    width: int
    height: int
    pixels: np.ndarray  # (height, width, 3) uint8

    @classmethod
    def blank(cls, width: int, height: int, color: Color = (255, 255, 255)) -> "Canvas":
        buf = np.empty((height, width, 3), dtype=np.uint8)
        buf[:, :] = color
        return cls(width, height, buf)

    def copy(self) -> "Canvas":
        return Canvas(self.width, self.height, self.pixels.copy())


def _stamp_square(canvas: Canvas, x: int, y: int, half_lo: int, half_hi: int, color: Color) -> None:
    x0 = max(x - half_lo, 0)
    x1 = min(x + half_hi, canvas.width)
    y0 = max(y - half_lo, 0)
    y1 = min(y + half_hi, canvas.height)
    if x0 < x1 and y0 < y1:
        canvas.pixels[y0:y1, x0:x1] = color


def draw_line(canvas: Canvas, p0: tuple[float, float], p1: tuple[float, float],
              color: Color, width: int = 1) -> None:
    """Hard-edged Bresenham line; a width x width square is stamped per step."""
    x0, y0 = int(round(p0[0])), int(round(p0[1]))
    x1, y1 = int(round(p1[0])), int(round(p1[1]))
    half_lo = width // 2
    half_hi = width - half_lo
    dx = abs(x1 - x0)
    dy = -abs(y1 - y0)
    sx = 1 if x0 < x1 else -1
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    x, y = x0, y0
    while True:
        _stamp_square(canvas, x, y, half_lo, half_hi, color)
        if x == x1 and y == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x += sx
        if e2 <= dx:
            err += dx
            y += sy


def draw_filled_circle(canvas: Canvas, cx: float, cy: float, radius: int, color: Color) -> None:
    cxi, cyi = int(round(cx)), int(round(cy))
    r2 = radius * radius
    for oy in range(-radius, radius + 1):
        y = cyi + oy
        if not 0 <= y < canvas.height:
            continue
        for ox in range(-radius, radius + 1):
            if ox * ox + oy * oy <= r2:
                x = cxi + ox
                if 0 <= x < canvas.width:
                    canvas.pixels[y, x] = color


def draw_digits(canvas: Canvas, text: str, x: int, y: int, size_px: int, color: Color) -> None:
    """Render a digit string from the embedded 5x7 font, top-left at (x, y)."""
    scale = max(1, size_px // GLYPH_H)
    cursor = x
    for ch in text:
        if ch not in "0123456789":
            continue
        for col, row in glyph_pixels(ch):
            px = cursor + col * scale
            py = y + row * scale
            x0, x1 = max(px, 0), min(px + scale, canvas.width)
            y0, y1 = max(py, 0), min(py + scale, canvas.height)
            if x0 < x1 and y0 < y1:
                canvas.pixels[y0:y1, x0:x1] = color
        cursor += (GLYPH_W + 1) * scale


def render_base_map(vp: Viewport, net: RoadNetwork | None, style: RenderStyle | None = None) -> Canvas:
    """White canvas with all road segments drawn as hard-edged gray lines."""
    style = style or RenderStyle()
    canvas = Canvas.blank(vp.width_px, vp.height_px)
    if net is not None:
        for a, b in net.segments:
            draw_line(canvas, vp.project(a), vp.project(b), style.road_color, style.road_width_px)
    return canvas


def draw_trajectory(canvas: Canvas, vp: Viewport, traj_prefix: Sequence[GeoPoint],
                    style: RenderStyle | None = None) -> Canvas:
    """Arrows between consecutive points plus numbered dots at both ends.

    The first and last prefix points get a purple dot labeled "1" and
    "<prefix length>". Out-of-view geometry is clipped, never an error.
    """
    style = style or RenderStyle()
    if len(traj_prefix) < 2:
        raise ValueError("trajectory prefix needs at least two points")
    px = [vp.project(g) for g in traj_prefix]
    for (x0, y0), (x1, y1) in zip(px, px[1:]):
        draw_line(canvas, (x0, y0), (x1, y1), style.arrow_color, style.arrow_width_px)
        _draw_arrow_head(canvas, (x0, y0), (x1, y1), style)
    for idx in (0, len(px) - 1):
        x, y = px[idx]
        draw_filled_circle(canvas, x, y, style.endpoint_radius_px, style.endpoint_color)
        label = str(idx + 1)
        lx = int(round(x)) + style.endpoint_radius_px + 2
        ly = int(round(y)) - style.endpoint_radius_px - style.label_size_px
        draw_digits(canvas, label, lx, ly, style.label_size_px, style.endpoint_color)
    return canvas


_HEAD_LEN_PX = 10.0
_HEAD_HALF_ANGLE = math.radians(30.0)


def _draw_arrow_head(canvas: Canvas, tail: tuple[float, float], tip: tuple[float, float],
                     style: RenderStyle) -> None:
    dx = tip[0] - tail[0]
    dy = tip[1] - tail[1]
    if dx == 0 and dy == 0:
        return
    theta = math.atan2(dy, dx)
    for sign in (-1.0, 1.0):
        ang = theta + math.pi + sign * _HEAD_HALF_ANGLE
        end = (tip[0] + _HEAD_LEN_PX * math.cos(ang), tip[1] + _HEAD_LEN_PX * math.sin(ang))
        draw_line(canvas, tip, end, style.arrow_color, style.arrow_width_px)


def draw_vgls_overlay(canvas: Canvas, region: "PixelRect", split: "SplitSpec",
                      style: RenderStyle | None = None) -> Canvas:
    """Alpha-blend blue over one half of the region and yellow over the other.

    Blend per channel: out = round((1 - alpha) * base + alpha * color).
    """
    style = style or RenderStyle()
    low, high = split.halves(region)
    blue_rect, yellow_rect = (low, high) if split.blue_half == "low" else (high, low)
    _blend_rect(canvas, blue_rect, style.region_blue, style.region_alpha)
    _blend_rect(canvas, yellow_rect, style.region_yellow, style.region_alpha)
    return canvas


def _blend_rect(canvas: Canvas, rect: "PixelRect", color: Color, alpha: float) -> None:
    x0 = max(rect.x0, 0)
    y0 = max(rect.y0, 0)
    x1 = min(rect.x1, canvas.width)
    y1 = min(rect.y1, canvas.height)
    if x0 >= x1 or y0 >= y1 or alpha == 0.0:
        return
    base = canvas.pixels[y0:y1, x0:x1].astype(np.float64)
    tint = np.array(color, dtype=np.float64)
    canvas.pixels[y0:y1, x0:x1] = np.rint((1.0 - alpha) * base + alpha * tint).astype(np.uint8)


def encode_image(canvas: Canvas) -> bytes:
    """Lossless RGB8 PNG bytes (single IDAT, filter 0, fixed zlib level)."""
    raw = bytearray()
    for row in canvas.pixels:
        raw.append(0)
        raw.extend(row.tobytes())
    out = bytearray(b"\x89PNG\r\n\x1a\n")
    header = struct.pack(">2I5B", canvas.width, canvas.height, 8, 2, 0, 0, 0)
    _write_chunk(out, b"IHDR", header)
    _write_chunk(out, b"IDAT", zlib.compress(bytes(raw), 6))
    _write_chunk(out, b"IEND", b"")
    return bytes(out)


def _write_chunk(out: bytearray, tag: bytes, data: bytes) -> None:
    out.extend(struct.pack(">I", len(data)))
    out.extend(tag)
    out.extend(data)
    out.extend(struct.pack(">I", zlib.crc32(data, zlib.crc32(tag))))
