"""Training subjects: a watertight mesh plus its rendered views."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .camera import fit_camera, yaw_sweep
from .occupancy import OccupancyOracle
from .render import rasterize


@dataclass
class View:
    camera: object
    rgb: object
    mask: object = None
    _pyramids: dict = field(default_factory=dict, repr=False)

    def pyramid(self, extractor):
        key = (extractor.levels, extractor.base_channels)
        if key not in self._pyramids:
            self._pyramids[key] = extractor.pyramid(self.rgb)
        return self._pyramids[key]


@dataclass
class Subject:
    mesh: object
    views: list
    _oracle: object = field(default=None, repr=False)

    @property
    def oracle(self):
        if self._oracle is None:
            self._oracle = OccupancyOracle(self.mesh)
        return self._oracle


def render_views(mesh, cameras, light_dir=(0.0, 0.0, 1.0)):
    views = []
    for cam in cameras:
        r = rasterize(mesh, cam, light_dir)
        views.append(View(cam, r.rgb, r.mask))
    return views


def make_subject(mesh, n_views=4, image_size=(512, 512), margin=0.1, light_dir=(0.0, 0.0, 1.0),
                 yaws=None, camera=None):
    """Render ``mesh`` from a yaw sweep (or explicit ``yaws`` in radians)."""
    base = camera if camera is not None else fit_camera(mesh, image_size, margin)
    if yaws is None:
        cams = yaw_sweep(n_views, base)
    else:
        from dataclasses import replace
        cams = [replace(base, yaw=float(y)) for y in yaws]
    return Subject(mesh, render_views(mesh, cams, light_dir))


def two_tone(mesh, top=(1.0, 0.0, 0.0), bottom=(0.0, 0.0, 1.0), axis=1):
    """Color vertices by the sign of one coordinate."""
    colors = np.where(mesh.vertices[:, axis:axis + 1] >= 0.0, np.asarray(top), np.asarray(bottom))
    return mesh.copy_with(colors=colors)
