"""Dense field evaluation on a lattice, marching-cubes iso-surfaces and vertex texturing."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import _mc_tables as mc
from .mesh import Aabb, TriMesh
from .parallel import map_chunks

DEFAULT_RESOLUTION = 128
DEFAULT_PAD = 0.05
EVAL_CHUNK = 8192


@dataclass
class ScalarGrid:
    """Field values at lattice points ``bounds.min + k * extent / (res - 1)``."""

    bounds: Aabb
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise ValueError("grid needs at least 2 lattice points per axis")

    @property
    def resolution(self):
        return self.values.shape

    @property
    def spacing(self):
        return self.bounds.extent / (np.array(self.resolution) - 1)

    @classmethod
    def lattice(cls, bounds, resolution):
        return cls(bounds, np.zeros(tuple(int(r) for r in resolution)))

    def axes(self):
        return [np.linspace(self.bounds.min[k], self.bounds.max[k], self.resolution[k])
                for k in range(3)]

    def points(self):
        """World positions of all lattice points, shape [nx, ny, nz, 3]."""
        idx = np.stack(np.meshgrid(*[np.arange(r) for r in self.resolution], indexing="ij"), -1)
        return self.bounds.min + idx * self.spacing

    def bounds_json(self):
        return json.dumps({"min": self.bounds.min.tolist(), "max": self.bounds.max.tolist()})


def grid_bounds(mesh_bounds, pad=DEFAULT_PAD):
    return mesh_bounds.padded(pad)


def marching_cubes(grid, iso=0.5):
    """Polygonize the ``iso`` level set of ``grid``.

    Triangles face toward lower field values. Vertices on shared cell edges are
    welded through a canonical (lattice point, axis) key, so the output does not
    depend on traversal order.
    """
    v = grid.values
    nx, ny, nz = v.shape
    below = v < iso
    case = np.zeros((nx - 1, ny - 1, nz - 1), dtype=np.int64)
    for k, (cx, cy, cz) in enumerate(mc.CORNERS):
        case |= below[cx:nx - 1 + cx, cy:ny - 1 + cy, cz:nz - 1 + cz].astype(np.int64) << k
    active = np.flatnonzero((case != 0) & (case != 255))
    if len(active) == 0:
        return TriMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))
    cells = np.stack(np.unravel_index(active, case.shape), axis=1)
    rows = mc.TRIANGLES[case.ravel()[active]]  # [A, 16]
    n_edges = (rows >= 0).sum(axis=1)
    cell_of = np.repeat(np.arange(len(active)), n_edges)
    local_edge = rows[rows >= 0]

    c0 = mc.CORNERS[mc.EDGES[local_edge, 0]]
    c1 = mc.CORNERS[mc.EDGES[local_edge, 1]]
    lo = cells[cell_of] + np.minimum(c0, c1)
    axis = np.argmax(np.abs(c1 - c0), axis=1)
    key = (np.ravel_multi_index(lo.T, v.shape) * 3 + axis)
    uniq, tri_index = np.unique(key, return_inverse=True)

    u_lo = np.stack(np.unravel_index(uniq // 3, v.shape), axis=1)
    u_axis = uniq % 3
    u_hi = u_lo.copy()
    u_hi[np.arange(len(uniq)), u_axis] += 1
    f_lo = v[tuple(u_lo.T)]
    f_hi = v[tuple(u_hi.T)]
    denom = f_hi - f_lo
    t = np.where(denom != 0, (iso - f_lo) / np.where(denom != 0, denom, 1.0), 0.5)
    pos = u_lo.astype(np.float64)
    pos[np.arange(len(uniq)), u_axis] += t
    verts = grid.bounds.min + pos * grid.spacing

    # with this corner layout the table already winds triangles toward the below-iso side
    return TriMesh(verts, tri_index.reshape(-1, 3))


def _view_features(extractor, view, points):
    xy, z = view.camera.project(points)
    return extractor.extract(view.pyramid(extractor), xy), z


def field_values(net, extractor, views, points, surface_extractor=None):
    """Field output at world ``points`` [n, 3] -> [n, output_dim].

    With ``surface_extractor`` the input is ``concat(F_C, F_V, z)`` (texture nets).
    More than one view goes through the fused path.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if len(views) == 0:
        raise ValueError("need at least one view")

    def run(s, e):
        feats, zs = [], []
        for v in views:
            f, z = _view_features(extractor, v, points[s:e])
            if surface_extractor is not None:
                f = np.concatenate([f, _view_features(surface_extractor, v, points[s:e])[0]], axis=1)
            feats.append(f)
            zs.append(z)
        if len(views) == 1:
            return net.forward(feats[0], zs[0])
        return net.fuse_forward(feats, zs)

    parts = map_chunks(run, len(points), EVAL_CHUNK)
    if not parts:
        return np.zeros((0, net.spec.output_dim))
    return np.concatenate(parts)


def evaluate_grid(net, extractor, views, bounds, resolution=DEFAULT_RESOLUTION):
    """Surface field sampled on the lattice of ``bounds`` (int or per-axis resolution)."""
    res = (resolution,) * 3 if np.isscalar(resolution) else tuple(resolution)
    grid = ScalarGrid.lattice(bounds, res)
    values = field_values(net, extractor, views, grid.points().reshape(-1, 3))
    grid.values = values[:, 0].reshape(res)
    return grid


def texture_vertices(mesh, tex_net, extractor_c, surface_extractor, views):
    """Copy of ``mesh`` colored by the texture field at each vertex, clamped to [0, 1]."""
    rgb = field_values(tex_net, extractor_c, views, mesh.vertices, surface_extractor)
    return mesh.copy_with(colors=np.clip(rgb, 0.0, 1.0))
