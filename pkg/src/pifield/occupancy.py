"""Ground-truth occupancy for watertight meshes.

The production path is BVH ray parity; the generalized winding number is kept as an
independent oracle.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .mesh import Bvh

MAX_RETRIES = 8


class NotWatertightError(ValueError):
    pass


class DegenerateQuery(RuntimeError):
    """Every ray cast from the point grazed an edge, vertex or plane."""


@dataclass(frozen=True)
class WatertightReport:
    watertight: bool
    boundary_edges: int
    nonmanifold_edges: int
    misoriented_edges: int

    def __bool__(self):
        return self.watertight


def is_watertight(mesh):
    """Every undirected edge must bound exactly two triangles with opposite winding."""
    if mesh.is_empty:
        return WatertightReport(False, 0, 0, 0)
    t = mesh.triangles
    directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    undirected = np.sort(directed, axis=1)
    keys, inverse, counts = np.unique(undirected, axis=0, return_inverse=True,
                                      return_counts=True)
    inverse = inverse.ravel()
    boundary = int((counts == 1).sum())
    nonmanifold = int((counts > 2).sum())
    # an edge used twice is consistently oriented iff one use runs each way
    forward = (directed[:, 0] < directed[:, 1]).astype(np.int64)
    n_forward = np.bincount(inverse, weights=forward, minlength=len(keys))
    misoriented = int(((counts == 2) & (n_forward != 1)).sum())
    ok = boundary == 0 and nonmanifold == 0 and misoriented == 0
    return WatertightReport(ok, boundary, nonmanifold, misoriented)


def _random_directions(rng, n):
    d = rng.standard_normal((n, 3))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


class OccupancyOracle:
    """Inside/outside labels f*(X) for a watertight mesh (1 inside, 0 otherwise)."""

    def __init__(self, mesh, bvh=None, eps_surface=1e-4):
        report = is_watertight(mesh)
        if not report:
            raise NotWatertightError(
                f"mesh is not watertight: {report.boundary_edges} boundary, "
                f"{report.nonmanifold_edges} non-manifold, "
                f"{report.misoriented_edges} misoriented edges")
        self.mesh = mesh
        self.bvh = bvh if bvh is not None else Bvh(mesh)
        self.eps_surface = eps_surface

    def classify(self, points, rng, retries=MAX_RETRIES):
        """Ray-parity labels for ``points`` [n, 3]; -1 where all retries were degenerate."""
        points = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        labels = np.full(len(points), -1, dtype=np.int64)
        todo = np.arange(len(points))
        for _ in range(1 + retries):
            if len(todo) == 0:
                break
            hits = self.bvh.ray_crossings(points[todo], _random_directions(rng, len(todo)))
            ok = hits >= 0
            labels[todo[ok]] = hits[ok] % 2
            todo = todo[~ok]
        return labels

    def inside(self, X, rng):
        label = self.classify(np.asarray(X, dtype=np.float64)[None], rng)[0]
        if label < 0:
            raise DegenerateQuery(f"no clean ray from {np.asarray(X).tolist()}")
        return int(label)

    def label(self, points, rng):
        """Occupancy in {0, 1}; degenerate queries fall back to the winding number."""
        labels = self.classify(points, rng)
        bad = labels < 0
        if bad.any():
            labels[bad] = (winding_number(self.mesh, np.asarray(points)[bad]) > 0.5)
        return labels.astype(np.float64)


def inside(oracle, X, rng):
    return oracle.inside(X, rng)


def winding_number(mesh, X):
    """Generalized winding number: signed solid angle of all triangles over 4 pi.

    Brute force over every triangle, deliberately independent of the BVH.
    Accepts a single point or an [n, 3] array.
    """
    X = np.asarray(X, dtype=np.float64)
    pts = np.ascontiguousarray(X.reshape(-1, 3))
    out = _kernels.winding_numbers(pts, mesh.vertices, mesh.triangles)
    return float(out[0]) if X.ndim == 1 else out
