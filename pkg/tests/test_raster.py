import io
import math
import random

import numpy as np
import pytest
from PIL import Image

from trajoracle.geo import GeoPoint, viewport_for
from trajoracle.raster import (Canvas, RenderStyle, draw_trajectory, draw_vgls_overlay,
                               encode_image, render_base_map)
from trajoracle.roadnet import load_roads
from trajoracle.vgls import PixelRect, SplitSpec

from conftest import BASE_LAT, BASE_LON, grid_geojson, straight_trajectory


def decode_png(data: bytes) -> np.ndarray:
    """Independent decoder (PIL) for round-trip checks."""
    return np.asarray(Image.open(io.BytesIO(data)).convert("RGB"))


def test_blank_canvas_is_white():
    canvas = Canvas.blank(20, 10)
    assert canvas.pixels.shape == (10, 20, 3)
    assert (canvas.pixels == 255).all()


def test_render_no_roads_all_white(viewport):
    canvas = render_base_map(viewport, None)
    assert (canvas.pixels == 255).all()


def test_horizontal_segment_mid_row():
    traj = straight_trajectory()
    vp = viewport_for(traj, canvas_px=200)
    # one horizontal road through the vertical center of the bbox
    mid_lat = (vp.min_lat + vp.max_lat) / 2
    doc = {"type": "LineString",
           "coordinates": [[vp.min_lon, mid_lat], [vp.max_lon, mid_lat]]}
    net = load_roads(doc)
    style = RenderStyle()
    canvas = render_base_map(vp, net, style)
    gray = np.all(canvas.pixels == np.array(style.road_color), axis=2)
    rows_with_gray = np.where(gray.any(axis=1))[0]
    assert len(rows_with_gray) == style.road_width_px
    assert 99 in rows_with_gray or 100 in rows_with_gray
    # the run spans the full canvas width on each painted row
    for r in rows_with_gray:
        assert gray[r].sum() == 200


def test_render_deterministic(roads_doc, traj13):
    vp = viewport_for(traj13, canvas_px=300)
    net = load_roads(roads_doc)
    a = render_base_map(vp, net)
    draw_trajectory(a, vp, traj13.points[:12])
    b = render_base_map(vp, net)
    draw_trajectory(b, vp, traj13.points[:12])
    assert encode_image(a) == encode_image(b)


def _colored_near(canvas, x, y, colors, radius):
    x0, x1 = max(int(x - radius), 0), min(int(x + radius) + 1, canvas.width)
    y0, y1 = max(int(y - radius), 0), min(int(y + radius) + 1, canvas.height)
    patch = canvas.pixels[y0:y1, x0:x1]
    return any(np.all(patch == np.array(c), axis=2).any() for c in colors)


@pytest.mark.parametrize("n_points", [2, 12, 13])
def test_trajectory_marks_every_vertex(n_points, roads_doc):
    traj = straight_trajectory(n=13)
    vp = viewport_for(traj, canvas_px=500)
    style = RenderStyle()
    canvas = render_base_map(vp, None, style)
    draw_trajectory(canvas, vp, traj.points[:n_points], style)
    for g in traj.points[:n_points]:
        x, y = vp.project(g)
        assert _colored_near(canvas, x, y, [style.arrow_color, style.endpoint_color],
                             style.endpoint_radius_px)
    # endpoint dots at first and last points
    for g in (traj.points[0], traj.points[n_points - 1]):
        x, y = vp.project(g)
        assert _colored_near(canvas, x, y, [style.endpoint_color], style.endpoint_radius_px)


def test_trajectory_requires_two_points(viewport):
    canvas = Canvas.blank(100, 100)
    with pytest.raises(ValueError):
        draw_trajectory(canvas, viewport, [GeoPoint(BASE_LAT, BASE_LON)])


def test_out_of_view_geometry_is_clipped_not_an_error(viewport):
    canvas = Canvas.blank(viewport.width_px, viewport.height_px)
    far = [GeoPoint(BASE_LAT + 1.0, BASE_LON + 1.0), GeoPoint(BASE_LAT + 1.1, BASE_LON + 1.0)]
    draw_trajectory(canvas, viewport, far)  # must not raise


def blend_oracle(base, color, alpha):
    """Independent arithmetic for the stated blend."""
    return tuple(round((1 - alpha) * b + alpha * c) for b, c in zip(base, color))


def test_overlay_alpha_zero_unchanged():
    canvas = Canvas.blank(100, 100)
    before = canvas.pixels.copy()
    style = RenderStyle(region_alpha=0.0)
    split = SplitSpec("vertical", 50)
    draw_vgls_overlay(canvas, PixelRect(0, 0, 100, 100), split, style)
    assert (canvas.pixels == before).all()


def test_overlay_alpha_one_pure_colors():
    canvas = Canvas.blank(100, 100)
    style = RenderStyle(region_alpha=1.0)
    split = SplitSpec("vertical", 50)
    draw_vgls_overlay(canvas, PixelRect(0, 0, 100, 100), split, style)
    assert tuple(canvas.pixels[10, 10]) == style.region_blue
    assert tuple(canvas.pixels[10, 80]) == style.region_yellow


def test_overlay_blend_matches_formula():
    canvas = Canvas.blank(100, 100)
    style = RenderStyle(region_alpha=0.35)
    split = SplitSpec("vertical", 50)
    draw_vgls_overlay(canvas, PixelRect(0, 0, 100, 100), split, style)
    want_blue = blend_oracle((255, 255, 255), style.region_blue, 0.35)
    want_yellow = blend_oracle((255, 255, 255), style.region_yellow, 0.35)
    assert tuple(canvas.pixels[10, 10]) == want_blue
    assert tuple(canvas.pixels[10, 80]) == want_yellow
    assert want_blue == (166, 166, 255)


def test_overlay_leaves_outside_untouched():
    canvas = Canvas.blank(100, 100)
    split = SplitSpec("horizontal", 40)
    draw_vgls_overlay(canvas, PixelRect(20, 20, 60, 60), split, RenderStyle())
    assert (canvas.pixels[:20, :] == 255).all()
    assert (canvas.pixels[60:, :] == 255).all()
    assert (canvas.pixels[:, :20] == 255).all()
    assert (canvas.pixels[:, 60:] == 255).all()
    assert not (canvas.pixels[20:60, 20:60] == 255).all()


def test_png_roundtrip_random_canvases():
    rng = np.random.default_rng(42)
    for _ in range(5):
        h, w = int(rng.integers(1, 40)), int(rng.integers(1, 40))
        canvas = Canvas(w, h, rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8))
        decoded = decode_png(encode_image(canvas))
        assert (decoded == canvas.pixels).all()


def test_png_all_white_and_header_dimensions():
    canvas = Canvas.blank(1000, 1000)
    data = encode_image(canvas)
    img = Image.open(io.BytesIO(data))
    assert img.size == (1000, 1000)
    assert (decode_png(data) == 255).all()


def test_label_digits_rendered():
    canvas = Canvas.blank(300, 300)
    traj = straight_trajectory(n=13)
    vp = viewport_for(traj, canvas_px=300)
    style = RenderStyle()
    draw_trajectory(canvas, vp, traj.points, style)
    # some endpoint-colored pixels exist beyond the dot radius: the labels
    purple = np.all(canvas.pixels == np.array(style.endpoint_color), axis=2)
    assert purple.sum() > 2 * math.pi * style.endpoint_radius_px ** 2
