"""Training-point generation for the surface and texture fields."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import sample_surface


@dataclass
class SampleBatch:
    """Labeled query points.

    ``labels`` is [n] occupancy in {0, 1} or [n, 3] RGB in [0, 1]. For texture
    batches ``source_points`` holds the on-surface point whose color labels each
    offset query point.
    """

    points: np.ndarray
    labels: np.ndarray
    source_points: np.ndarray | None = None

    def __post_init__(self):
        if len(self.points) != len(self.labels):
            raise ValueError("points and labels differ in length")

    def __len__(self):
        return len(self.points)


@dataclass
class SamplingConfig:
    n_points: int = 5000
    sigma_cm: float = 5.0
    mix_ratio: tuple = (16, 1)
    bbox_pad: float = 0.1
    texture_offset_d_cm: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_points <= 0:
            raise ValueError("n_points must be positive")
        if not self.sigma_cm > 0:
            raise ValueError("sigma_cm must be positive")
        self.mix_ratio = tuple(self.mix_ratio)
        if len(self.mix_ratio) != 2 or min(self.mix_ratio) < 0 or sum(self.mix_ratio) == 0:
            raise ValueError("mix_ratio needs two non-negative counts, not both zero")

    def split(self):
        """(adaptive, uniform) point counts; the split is exact, not drawn."""
        a, u = self.mix_ratio
        n_adaptive = int(round(self.n_points * a / (a + u)))
        return n_adaptive, self.n_points - n_adaptive


# named sampling schemes of the sampling ablation
ABLATION_SCHEMES = {
    "uniform": dict(mix_ratio=(0, 1)),
    "sigma=3": dict(sigma_cm=3.0, mix_ratio=(1, 0)),
    "sigma=5": dict(sigma_cm=5.0, mix_ratio=(1, 0)),
    "sigma=15": dict(sigma_cm=15.0, mix_ratio=(1, 0)),
    "sigma=5+uniform": dict(sigma_cm=5.0, mix_ratio=(16, 1)),
}


def sample_occupancy(mesh, oracle, cfg, rng=None):
    """Gaussian-perturbed surface samples plus uniform box samples, labeled by ``oracle``."""
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    n_adaptive, n_uniform = cfg.split()
    surface, _ = sample_surface(mesh, n_adaptive, rng)
    adaptive = surface + rng.normal(0.0, cfg.sigma_cm, size=surface.shape)
    box = mesh.bounds().padded(cfg.bbox_pad)
    uniform = box.min + rng.random((n_uniform, 3)) * box.extent
    points = np.concatenate([adaptive, uniform])
    return SampleBatch(points, oracle.label(points, rng))


def sample_texture(mesh, cfg, rng=None):
    """Colored surface samples pushed off the surface along the normal by N(0, d)."""
    if mesh.vertex_colors is None:
        raise ValueError("texture sampling needs a mesh with vertex colors")
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    points, normals, tri, bary = sample_surface(mesh, cfg.n_points, rng, return_index=True)
    colors = np.einsum("nk,nkc->nc", bary, mesh.vertex_colors[mesh.triangles[tri]])
    eps = rng.normal(0.0, cfg.texture_offset_d_cm, size=len(points))
    return SampleBatch(points + eps[:, None] * normals, np.clip(colors, 0.0, 1.0), points)
