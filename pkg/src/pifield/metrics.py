"""Reconstruction metrics: P2S, Chamfer, normal-map error and lattice IoU."""
from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field

import numpy as np

from .mesh import Bvh, EmptyMeshError, sample_surface
from .render import rasterize

CHAMFER_SAMPLES = 10000


@dataclass
class EvalReport:
    p2s_cm: float
    chamfer_cm: float
    normal_l2: float
    iou: float | None = None
    chamfer_samples: int = CHAMFER_SAMPLES
    seed: int = 0
    extra: dict = field(default_factory=dict)

    def to_json(self):
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    def table(self):
        rows = [("p2s_cm", self.p2s_cm), ("chamfer_cm", self.chamfer_cm),
                ("normal_l2", self.normal_l2), ("iou", self.iou)]
        return "\n".join(f"{k:<12}{'-' if v is None else f'{v:.6f}':>12}" for k, v in rows)


def _nonempty(*meshes):
    for m in meshes:
        if m.is_empty:
            raise EmptyMeshError("metric needs non-empty meshes")


def _bvh(mesh, bvh=None):
    return bvh if bvh is not None else Bvh(mesh)


def p2s(recon, gt, gt_bvh=None):
    """Mean distance from reconstructed vertices to the ground-truth surface."""
    _nonempty(recon, gt)
    _, d, _ = _bvh(gt, gt_bvh).closest(recon.vertices)
    return float(math.fsum(d) / len(d))


# distances under this fraction of the target's extent are rounding noise from
# projecting a sample back onto the plane it was drawn from
SNAP_REL = 1e-12


def _one_sided(src, dst, n, rng, dst_bvh=None):
    pts, _ = sample_surface(src, n, rng)
    _, d, _ = _bvh(dst, dst_bvh).closest(pts)
    d[d < SNAP_REL * max(float(np.linalg.norm(dst.bounds().extent)), 1.0)] = 0.0
    return math.fsum(d) / n


def _mesh_key(mesh):
    # connectivity only, so the stream survives rigid motions of the vertices
    return zlib.crc32(np.ascontiguousarray(mesh.triangles, "<i8").tobytes())


def chamfer(recon, gt, n_samples=CHAMFER_SAMPLES, seed=0):
    """Symmetric mean of unsquared surface-to-surface distances.

    Each side draws ``n_samples`` area-weighted points from a stream keyed by the
    seed and the connectivity of the mesh being sampled, so swapping the arguments
    swaps the two terms exactly.
    """
    _nonempty(recon, gt)
    a = _one_sided(recon, gt, n_samples, np.random.default_rng([seed, _mesh_key(recon)]))
    b = _one_sided(gt, recon, n_samples, np.random.default_rng([seed, _mesh_key(gt)]))
    # sum in sorted order so chamfer(a, b) == chamfer(b, a) bitwise
    lo, hi = sorted((a, b))
    return 0.5 * (lo + hi)


def normal_reprojection(recon, gt, cam, light_dir=(0.0, 0.0, 1.0)):
    """Mean normal-difference norm over the union of the two silhouettes."""
    ra = rasterize(recon, cam, light_dir)
    rb = rasterize(gt, cam, light_dir)
    union = (ra.mask.data[0] > 0) | (rb.mask.data[0] > 0)
    if not union.any():
        return 0.0
    diff = np.linalg.norm(ra.normal.data - rb.normal.data, axis=0)[union]
    return float(math.fsum(diff) / diff.size)


def iou(a, b):
    """IoU of two boolean occupancy arrays; 1 when both are empty."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def occupancy_iou(a, b, bounds=None, resolution=None, rng=None):
    """IoU of two fields thresholded at 0.5 on a shared lattice.

    Each of ``a``/``b`` is a ScalarGrid, an array of lattice values, an
    OccupancyOracle, or a callable mapping points [n, 3] to values.
    """
    def values(f, pts):
        if hasattr(f, "values"):
            return np.asarray(f.values).ravel()
        if hasattr(f, "label"):
            return f.label(pts, np.random.default_rng(0) if rng is None else rng)
        if callable(f):
            return np.asarray(f(pts)).ravel()
        return np.asarray(f, dtype=np.float64).ravel()

    pts = None
    if bounds is not None:
        from .extract import ScalarGrid
        res = (resolution,) * 3 if np.isscalar(resolution) else tuple(resolution)
        pts = ScalarGrid.lattice(bounds, res).points().reshape(-1, 3)
    va, vb = values(a, pts), values(b, pts)
    if va.shape != vb.shape:
        raise ValueError("fields are not on the same lattice")
    return iou(va > 0.5, vb > 0.5)


def evaluate(recon, gt, cam, n_samples=CHAMFER_SAMPLES, seed=0, light_dir=(0.0, 0.0, 1.0),
             iou_value=None):
    gt_bvh = Bvh(gt)
    return EvalReport(p2s_cm=p2s(recon, gt, gt_bvh), chamfer_cm=chamfer(recon, gt, n_samples, seed),
                      normal_l2=normal_reprojection(recon, gt, cam, light_dir),
                      iou=iou_value, chamfer_samples=n_samples, seed=seed)
