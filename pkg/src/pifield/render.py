"""CPU rasterizer: Lambertian RGB, camera-space normals, depth and mask images."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .featext import FeatureImage

AMBIENT = 0.2
DEFAULT_ALBEDO = 0.8


@dataclass
class RenderOutput:
    """``depth`` is distance along the view direction (-Xc.z), +inf on background."""

    rgb: FeatureImage
    normal: FeatureImage
    depth: FeatureImage
    mask: FeatureImage
    triangle_id: np.ndarray


def rasterize(mesh, cam, light_dir=(0.0, 0.0, 1.0), size=None):
    """Z-buffered render of ``mesh`` under ``cam`` with no anti-aliasing.

    ``light_dir`` is a camera-space unit vector pointing toward the light;
    shading is ``albedo * max(0, n.l) + 0.2 * albedo`` with albedo the vertex color
    or 0.8 gray.
    """
    w, h = size if size is not None else cam.image_size
    xy, _ = cam.project(mesh.vertices)
    xc = cam.to_camera(mesh.vertices)
    zbuf, tri_id, bary = _kernels.rasterize_ids(
        np.ascontiguousarray(xy[:, 0]), np.ascontiguousarray(xy[:, 1]),
        np.ascontiguousarray(-xc[:, 2]), mesh.triangles, int(w), int(h))
    mask = tri_id >= 0
    normal = np.zeros((h, w, 3))
    rgb = np.zeros((h, w, 3))
    if mask.any():
        ids = tri_id[mask]
        b = bary[mask]
        corners = mesh.triangles[ids]
        n_cam = mesh.vertex_normals @ cam.rotation.T
        n = np.einsum("pk,pkd->pd", b, n_cam[corners])
        n /= np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
        normal[mask] = n
        if mesh.vertex_colors is not None:
            albedo = np.einsum("pk,pkd->pd", b, mesh.vertex_colors[corners])
        else:
            albedo = np.full((len(ids), 3), DEFAULT_ALBEDO)
        light = np.asarray(light_dir, dtype=np.float64)
        light = light / np.linalg.norm(light)
        lambert = np.maximum(0.0, n @ light)[:, None]
        rgb[mask] = albedo * lambert + AMBIENT * albedo
    return RenderOutput(
        rgb=FeatureImage(rgb.transpose(2, 0, 1)),
        normal=FeatureImage(normal.transpose(2, 0, 1)),
        depth=FeatureImage(zbuf[None]),
        mask=FeatureImage(mask.astype(np.float64)[None]),
        triangle_id=tri_id,
    )
