"""psh.render

Software rasterisation of the hand mesh and compositing over a background crop.

Flat shading: each triangle is filled with the mean colour of its three vertices.
Hidden surfaces are removed with a z-buffer on the rotated z (smaller is nearer).
A pixel belongs to a triangle when its centre lies inside or on the triangle's edges.
"""

from __future__ import annotations

from dataclasses import dataclass
from os import PathLike

import numpy as np
from numpy.typing import ArrayLike, NDArray
from PIL import Image

from .camera import CameraParams, camera_coords, project_weak, rodrigues
from .colors import ColorTemplate
from .errors import DimensionError, InvariantError
from .handmodel import HandMesh, HandModel, HandShape
from .poseflow import FlowFrame


@dataclass(eq=False)
class Raster:
    """rgb (H, W, 3) uint8, mask (H, W) bool, depth (H, W) float64 (inf where empty)"""

    width: int
    height: int
    rgb: NDArray[np.uint8]
    mask: NDArray[np.bool_]
    depth: NDArray[np.float64]

    @classmethod
    def blank(cls, width: int, height: int, color: tuple[int, int, int] = (0, 0, 0)) -> Raster:
        if width <= 0 or height <= 0:
            raise InvariantError(f"raster size must be positive, got {width}x{height}")
        rgb = np.empty((height, width, 3), dtype=np.uint8)
        rgb[:] = color
        return cls(
            width,
            height,
            rgb,
            np.zeros((height, width), dtype=bool),
            np.full((height, width), np.inf),
        )

    @property
    def coverage(self) -> float:
        """Fraction of pixels covered by the hand"""
        return float(self.mask.mean())


def rasterize_triangles(
        points2d: ArrayLike,
        depth: ArrayLike,
        faces: ArrayLike,
        face_colors: ArrayLike,
        width: int,
        height: int,
        ) -> Raster:
    """Z-buffered scan over each triangle's bounding box.

    points2d (V, 2) pixel coordinates, depth (V,), faces (F, 3), face_colors (F, 3) uint8.
    """
    points2d = np.asarray(points2d, dtype=np.float64)
    depth = np.asarray(depth, dtype=np.float64)
    faces = np.asarray(faces, dtype=np.int64)
    face_colors = np.asarray(face_colors, dtype=np.uint8)
    if len(face_colors) != len(faces):
        raise DimensionError("face colours", (len(faces), 3), face_colors.shape)
    raster = Raster.blank(width, height)

    tri = points2d[faces]
    lo = np.maximum(np.ceil(tri.min(axis=1)), 0).astype(np.int64)
    hi = np.minimum(np.floor(tri.max(axis=1)), [width - 1, height - 1]).astype(np.int64)
    visible = np.all(hi >= lo, axis=1) & np.all(np.isfinite(tri), axis=(1, 2))

    for f in np.flatnonzero(visible):
        (x0, y0), (x1, y1), (x2, y2) = tri[f]
        area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0)
        if abs(area) < 1e-12:
            continue
        xs = np.arange(lo[f, 0], hi[f, 0] + 1, dtype=np.float64)
        ys = np.arange(lo[f, 1], hi[f, 1] + 1, dtype=np.float64)[:, None]
        w0 = ((x1 - xs) * (y2 - ys) - (x2 - xs) * (y1 - ys)) / area
        w1 = ((x2 - xs) * (y0 - ys) - (x0 - xs) * (y2 - ys)) / area
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        d0, d1, d2 = depth[faces[f]]
        z = w0 * d0 + w1 * d1 + w2 * d2

        rows = slice(lo[f, 1], hi[f, 1] + 1)
        cols = slice(lo[f, 0], hi[f, 0] + 1)
        zbuf = raster.depth[rows, cols]
        win = inside & (z < zbuf)
        zbuf[win] = z[win]
        raster.rgb[rows, cols][win] = face_colors[f]
        raster.mask[rows, cols][win] = True

    return raster


def face_colors(mesh: HandMesh) -> NDArray[np.uint8]:
    colors = mesh.vertex_colors[mesh.faces].astype(np.float64).mean(axis=1)
    return np.clip(np.rint(colors), 0, 255).astype(np.uint8)


def rasterize(mesh: HandMesh, cam: CameraParams, width: int, height: int) -> Raster:
    points2d = project_weak(mesh.vertices, cam)
    depth = camera_coords(mesh.vertices, cam)[:, 2]
    return rasterize_triangles(points2d, depth, mesh.faces, face_colors(mesh), width, height)


def composite(raster: Raster, bg_image: NDArray[np.uint8], bg_offset: tuple[int, int]) -> NDArray[np.uint8]:
    """Hand pixels from the raster, everything else from the background crop at bg_offset = (x, y)"""
    ox, oy = bg_offset
    src_h, src_w = bg_image.shape[:2]
    if ox < 0 or oy < 0 or ox + raster.width > src_w or oy + raster.height > src_h:
        raise InvariantError(
            f"crop {raster.width}x{raster.height} at ({ox}, {oy}) leaves the {src_w}x{src_h} background"
        )
    frame = bg_image[oy:oy + raster.height, ox:ox + raster.width, :3].copy()
    frame[raster.mask] = raster.rgb[raster.mask]
    return frame


def posed_mesh(model: HandModel, frame: FlowFrame, beta: HandShape, template: ColorTemplate) -> HandMesh:
    """Mesh of the frame's pose in the database orientation (theta, then the root rotation)"""
    return model.mesh_lbs(frame.theta, beta, template).transformed(rodrigues(frame.root_orient))


def render_frame(
        model: HandModel,
        frame: FlowFrame,
        beta: HandShape,
        template: ColorTemplate,
        bg_image: NDArray[np.uint8],
        width: int,
        height: int,
        ) -> tuple[NDArray[np.uint8], Raster]:
    mesh = posed_mesh(model, frame, beta, template)
    raster = rasterize(mesh, frame.cam, width, height)
    return composite(raster, bg_image, frame.bg_offset), raster


def save_rgb_png(path: str | PathLike[str], rgb: NDArray[np.uint8]):
    Image.fromarray(np.ascontiguousarray(rgb, dtype=np.uint8)).save(path, format="PNG")


def save_mask_png(path: str | PathLike[str], mask: NDArray[np.bool_]):
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8)).save(path, format="PNG")


def load_image(path: str | PathLike[str]) -> NDArray[np.uint8]:
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)


def load_mask(path: str | PathLike[str]) -> NDArray[np.bool_]:
    with Image.open(path) as img:
        return np.asarray(img.convert("L")) > 127
