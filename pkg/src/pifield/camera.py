"""Weak-perspective camera with a yaw orbit around the world y axis.

Conventions: the camera looks down camera-space -z, so larger ``Xc.z`` is nearer.
Pixel (0, 0) is the center of the top-left pixel and image y grows downward.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np


def yaw_matrix(angle):
    """Rotation by ``angle`` radians about +y (right-handed)."""
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


@dataclass(frozen=True)
class WeakPerspectiveCamera:
    yaw: float = 0.0
    scale: float = 1.0
    principal: tuple = (256.0, 256.0)
    image_size: tuple = (512, 512)
    depth_center: float = 0.0
    depth_half_range: float = 1.0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if not self.depth_half_range > 0:
            raise ValueError("depth_half_range must be positive")
        if min(self.image_size) <= 0:
            raise ValueError("image_size must be positive")
        object.__setattr__(self, "principal", tuple(float(p) for p in self.principal))
        object.__setattr__(self, "image_size", tuple(int(s) for s in self.image_size))

    @property
    def rotation(self):
        """World-to-camera rotation (the subject turned by -yaw)."""
        return yaw_matrix(-self.yaw)

    def to_camera(self, points):
        points = np.asarray(points, dtype=np.float64)
        return points @ self.rotation.T

    def project(self, points):
        """Pixel coordinates [..., 2] and normalized depth [...] for world points."""
        xc = self.to_camera(points)
        px = self.scale * xc[..., 0] + self.principal[0]
        py = -self.scale * xc[..., 1] + self.principal[1]
        z = (xc[..., 2] - self.depth_center) / self.depth_half_range
        return np.stack([px, py], axis=-1), z

    def to_dict(self):
        return {"yaw_deg": math.degrees(self.yaw), "scale": self.scale,
                "principal": list(self.principal), "image_size": list(self.image_size),
                "depth_center": self.depth_center, "depth_half_range": self.depth_half_range}

    @classmethod
    def from_dict(cls, d):
        return cls(yaw=math.radians(d["yaw_deg"]), scale=d["scale"],
                   principal=tuple(d["principal"]), image_size=tuple(d["image_size"]),
                   depth_center=d["depth_center"], depth_half_range=d["depth_half_range"])

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def project(cam, X):
    return cam.project(X)


def yaw_sweep(n_views, base):
    if n_views < 1:
        raise ValueError("n_views must be >= 1")
    if n_views == 1:
        return [base]
    return [replace(base, yaw=2.0 * math.pi * k / n_views) for k in range(n_views)]


def fit_camera(mesh, image_size=(512, 512), margin=0.1):
    """Camera centering ``mesh`` in the image for every yaw.

    The subject's bounding sphere about the world origin fills the image up to
    ``margin``; normalized depth spans [-1, 1] over that sphere.
    """
    radius = float(np.linalg.norm(mesh.vertices, axis=1).max())
    w, h = image_size
    scale = 0.5 * min(w, h) * (1.0 - margin) / radius
    return WeakPerspectiveCamera(yaw=0.0, scale=scale,
                                 principal=((w - 1) / 2.0, (h - 1) / 2.0),
                                 image_size=(w, h), depth_center=0.0,
                                 depth_half_range=radius * (1.0 + margin))
