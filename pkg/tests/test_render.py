from __future__ import annotations

import numpy as np
import pytest

from pyseqhand.camera import CameraParams, camera_coords, fit_to_frame_scale, project_weak
from pyseqhand.colors import get_template
from pyseqhand.coords import in_frame, to_pixel
from pyseqhand.errors import InvariantError
from pyseqhand.handmodel import THETA_DIM
from pyseqhand.objectives import loss_mask, mask_lookup
from pyseqhand.render import (
    Raster,
    composite,
    load_image,
    load_mask,
    rasterize,
    rasterize_triangles,
    save_mask_png,
    save_rgb_png,
)

RED = (255, 0, 0)
BLUE = (0, 0, 255)


def _centred_camera(model, width: int = 224, height: int = 224) -> CameraParams:
    scale = fit_to_frame_scale(model.extent, width, height)
    # the rest hand hangs from the wrist along -y; centre its bounding box
    return CameraParams(scale, [width / 2, height / 2 + scale * model.extent / 2], [0, 0, 0])


def test_off_screen_mesh_gives_empty_mask(model):
    mesh = model.mesh_lbs(np.zeros(THETA_DIM))
    raster = rasterize(mesh, CameraParams(1.0, [-5000, -5000], [0, 0, 0]), 64, 64)
    assert not raster.mask.any()
    assert np.all(np.isinf(raster.depth))
    assert raster.coverage == 0.0


@pytest.mark.parametrize("order", [(0, 1), (1, 0)])
def test_nearer_triangle_wins(order):
    points = np.array([[1, 1], [30, 1], [1, 30], [2, 2], [31, 2], [2, 31]], dtype=float)
    depth = np.array([1.0, 1.0, 1.0, 2.0, 2.0, 2.0])
    faces = np.array([[0, 1, 2], [3, 4, 5]])[list(order)]
    colors = np.array([RED, BLUE], dtype=np.uint8)[list(order)]
    raster = rasterize_triangles(points, depth, faces, colors, 40, 40)
    assert tuple(raster.rgb[10, 10]) == RED
    assert raster.depth[10, 10] == pytest.approx(1.0)
    # only the far triangle reaches past the near one's hypotenuse
    assert tuple(raster.rgb[16, 16]) == BLUE
    assert not raster.mask[39, 39]


def test_pixel_on_edge_is_covered():
    points = np.array([[0, 0], [4, 0], [0, 4]], dtype=float)
    raster = rasterize_triangles(points, np.zeros(3), [[0, 1, 2]], [RED], 8, 8)
    assert raster.mask[0, 0] and raster.mask[0, 4] and raster.mask[2, 2]
    assert not raster.mask[3, 3]


def test_centred_rest_hand_coverage(model):
    mesh = model.mesh_lbs(np.zeros(THETA_DIM), template=get_template(0))
    raster = rasterize(mesh, _centred_camera(model), 224, 224)
    assert 0.05 <= raster.coverage <= 0.60
    assert np.isfinite(raster.depth[raster.mask]).all()
    assert np.isinf(raster.depth[~raster.mask]).all()


def test_rendered_vertices_land_on_their_mask(model):
    mesh = model.mesh_lbs(np.zeros(THETA_DIM))
    cam = _centred_camera(model)
    raster = rasterize(mesh, cam, 224, 224)
    points = project_weak(mesh.vertices, cam)
    depth = camera_coords(mesh.vertices, cam)[:, 2]

    # misses only come from the silhouette edge, a few percent of the vertices
    assert loss_mask(points, raster) < 0.15

    pixels = to_pixel(points)
    interior = np.ones(len(points), dtype=bool)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            around = pixels + [dx, dy]
            inside = in_frame(around, 224, 224)
            covered = np.zeros(len(points), dtype=bool)
            covered[inside] = raster.mask[around[inside, 1], around[inside, 0]]
            interior &= covered
    zbuf = np.full(len(points), np.inf)
    zbuf[interior] = raster.depth[pixels[interior, 1], pixels[interior, 0]]
    # front-facing and unoccluded: the z-buffer holds this vertex's own surface
    visible = interior & (np.abs(depth - zbuf) <= 4.0)
    assert visible.sum() >= 84
    assert mask_lookup(points[visible], raster).all()


def test_mask_lookup_follows_pixel_convention():
    mask = np.zeros((4, 6), dtype=bool)
    mask[1, 2] = True
    points = [[2.0, 1.0], [2.49, 0.5], [1.5, 1.0], [2.5, 1.0], [-3.0, 1.0]]
    assert mask_lookup(points, mask).tolist() == [True, True, True, False, False]
    assert loss_mask([[2.0, 1.0], [0.0, 0.0]], mask) == 0.5
    assert loss_mask([[2.0, 1.0]], np.ones((4, 6), dtype=bool)) == 0.0
    assert loss_mask([[2.0, 1.0]], np.zeros((4, 6), dtype=bool)) == 1.0


def test_composite_without_hand_is_the_crop(rng):
    bg = rng.integers(0, 256, size=(50, 60, 3), dtype=np.uint8)
    frame = composite(Raster.blank(20, 10), bg, (7, 3))
    assert np.array_equal(frame, bg[3:13, 7:27])


def test_composite_keeps_hand_pixels(rng):
    bg = rng.integers(0, 256, size=(10, 10, 3), dtype=np.uint8)
    raster = Raster.blank(10, 10, RED)
    raster.mask[4:6, 4:6] = True
    frame = composite(raster, bg, (0, 0))
    assert np.all(frame[4:6, 4:6] == RED)
    assert np.array_equal(frame[0], bg[0])


def test_composite_changes_exactly_the_hand_pixels(model):
    mesh = model.mesh_lbs(np.zeros(THETA_DIM), template=get_template(0))
    raster = rasterize(mesh, _centred_camera(model), 224, 224)
    bg = np.zeros((260, 300, 3), dtype=np.uint8)
    bg[...] = BLUE
    frame = composite(raster, bg, (13, 21))
    changed = np.any(frame != bg[21:245, 13:237], axis=2)
    assert changed.sum() == raster.mask.sum()
    assert np.array_equal(changed, raster.mask)


def test_composite_outside_background(rng):
    bg = np.zeros((10, 10, 3), dtype=np.uint8)
    with pytest.raises(InvariantError):
        composite(Raster.blank(8, 8), bg, (3, 0))


def test_png_round_trip(tmp_path, rng):
    rgb = rng.integers(0, 256, size=(12, 16, 3), dtype=np.uint8)
    mask = rng.uniform(size=(12, 16)) > 0.5
    save_rgb_png(tmp_path / "rgb.png", rgb)
    save_mask_png(tmp_path / "mask.png", mask)
    assert np.array_equal(load_image(tmp_path / "rgb.png"), rgb)
    assert np.array_equal(load_mask(tmp_path / "mask.png"), mask)
