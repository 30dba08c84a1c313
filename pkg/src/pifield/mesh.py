"""Triangle meshes: OBJ I/O, normals, area-weighted sampling and BVH queries.

World units are centimeters throughout.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels

log = logging.getLogger(__name__)

DEGENERATE_AREA = 1e-12
BVH_LEAF_SIZE = 4


class ObjParseError(ValueError):
    """Malformed OBJ input; the message carries the offending line number."""


class EmptyMeshError(ValueError):
    pass


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        if lo.shape != (3,) or hi.shape != (3,):
            raise ValueError("bounds must be 3-vectors")
        if np.any(lo > hi):
            raise ValueError(f"inverted bounds: min {lo.tolist()} > max {hi.tolist()}")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @classmethod
    def of_points(cls, points):
        points = np.asarray(points, dtype=np.float64)
        return cls(points.min(axis=0), points.max(axis=0))

    @property
    def extent(self):
        return self.max - self.min

    @property
    def center(self):
        return 0.5 * (self.min + self.max)

    def padded(self, fraction):
        """Grow every side by ``fraction`` of the extent along that axis."""
        pad = fraction * self.extent
        return Aabb(self.min - pad, self.max + pad)

    def contains(self, points):
        points = np.asarray(points)
        return np.all((points >= self.min) & (points <= self.max), axis=-1)


class TriMesh:
    """Indexed triangle mesh with optional per-vertex normals and RGB colors.

    Normals are computed lazily by area-weighted face-normal averaging when the
    mesh was not given any. Treat instances as immutable.
    """

    def __init__(self, vertices, triangles, vertex_normals=None, vertex_colors=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise IndexError("triangle index out of range")
        self._normals = None
        if vertex_normals is not None:
            n = np.asarray(vertex_normals, dtype=np.float64).reshape(-1, 3)
            self._normals = _normalize_rows(n)
        self.vertex_colors = None
        if vertex_colors is not None:
            self.vertex_colors = np.asarray(vertex_colors, dtype=np.float64).reshape(-1, 3)

    def __repr__(self):
        return f"TriMesh({len(self.vertices)} vertices, {len(self.triangles)} triangles)"

    @property
    def is_empty(self):
        return len(self.triangles) == 0

    @property
    def corners(self):
        """Triangle corner positions, shape [m, 3, 3]."""
        return self.vertices[self.triangles]

    def face_normals(self, unit=True):
        c = self.corners
        n = np.cross(c[:, 1] - c[:, 0], c[:, 2] - c[:, 0])
        return _normalize_rows(n) if unit else n

    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals(unit=False), axis=1)

    def area(self):
        return float(self.face_areas().sum())

    @property
    def vertex_normals(self):
        if self._normals is None:
            fn = self.face_normals(unit=False)  # length = 2 * area, so the sum is area-weighted
            acc = np.zeros_like(self.vertices)
            for k in range(3):
                np.add.at(acc, self.triangles[:, k], fn)
            self._normals = _normalize_rows(acc)
        return self._normals

    @property
    def has_explicit_normals(self):
        return self._normals is not None

    def bounds(self):
        return Aabb.of_points(self.vertices)

    def copy_with(self, vertices=None, normals=None, colors=None):
        return TriMesh(self.vertices if vertices is None else vertices,
                       self.triangles,
                       self._normals if normals is None else normals,
                       self.vertex_colors if colors is None else colors)

    def translated(self, t):
        return TriMesh(self.vertices + np.asarray(t, dtype=np.float64), self.triangles,
                       self._normals, self.vertex_colors)

    def scaled(self, s, center=(0.0, 0.0, 0.0)):
        c = np.asarray(center, dtype=np.float64)
        return TriMesh(c + s * (self.vertices - c), self.triangles, self._normals,
                       self.vertex_colors)

    def transformed(self, rotation, translation=(0.0, 0.0, 0.0)):
        """Rigid transform x -> R x + t; normals are rotated, not recomputed."""
        r = np.asarray(rotation, dtype=np.float64)
        v = self.vertices @ r.T + np.asarray(translation, dtype=np.float64)
        return TriMesh(v, self.triangles, self.vertex_normals @ r.T, self.vertex_colors)


def _normalize_rows(a):
    norm = np.linalg.norm(a, axis=1, keepdims=True)
    return np.divide(a, norm, out=np.zeros_like(a), where=norm > 0)


def drop_degenerate(mesh, tol=DEGENERATE_AREA):
    """Remove triangles with area <= ``tol``; returns (mesh, dropped_count)."""
    keep = mesh.face_areas() > tol
    dropped = int((~keep).sum())
    if dropped == 0:
        return mesh, 0
    normals = mesh._normals
    return TriMesh(mesh.vertices, mesh.triangles[keep], normals, mesh.vertex_colors), dropped


# --- OBJ ---------------------------------------------------------------------

def _obj_index(token, count, lineno):
    try:
        i = int(token)
    except ValueError:
        raise ObjParseError(f"line {lineno}: bad index {token!r}") from None
    if i == 0:
        raise ObjParseError(f"line {lineno}: OBJ indices are 1-based, got 0")
    i = i - 1 if i > 0 else count + i
    if not 0 <= i < count:
        raise ObjParseError(f"line {lineno}: index {token} out of range (have {count})")
    return i


def load_obj(path):
    """Read an ASCII OBJ (v / vn / f records; polygons fan-triangulated).

    Six-float ``v`` lines carry an RGB vertex color. Degenerate faces are dropped
    and the count is logged.
    """
    verts, colors, normals = [], [], []
    faces, face_normal_refs = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag == "v":
                    vals = [float(x) for x in parts[1:]]
                    if len(vals) not in (3, 4, 6, 7):
                        raise ObjParseError(f"line {lineno}: expected 3 or 6 floats in v record")
                    verts.append(vals[:3])
                    if len(vals) >= 6:
                        colors.append(vals[3:6] if len(vals) == 6 else vals[4:7])
                elif tag == "vn":
                    if len(parts) != 4:
                        raise ObjParseError(f"line {lineno}: expected 3 floats in vn record")
                    normals.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                if isinstance(exc, ObjParseError):
                    raise
                raise ObjParseError(f"line {lineno}: {exc}") from None
            if tag == "f":
                if len(parts) < 4:
                    raise ObjParseError(f"line {lineno}: face needs at least 3 vertices")
                vi, ni = [], []
                for tok in parts[1:]:
                    fields = tok.split("/")
                    vi.append(_obj_index(fields[0], len(verts), lineno))
                    if len(fields) == 3 and fields[2]:
                        ni.append(_obj_index(fields[2], len(normals), lineno))
                for k in range(1, len(vi) - 1):
                    faces.append((vi[0], vi[k], vi[k + 1]))
                    if len(ni) == len(vi):
                        face_normal_refs.append(((vi[0], ni[0]), (vi[k], ni[k]), (vi[k + 1], ni[k + 1])))
    if colors and len(colors) != len(verts):
        raise ObjParseError("color present on some v records but not all")
    vertex_normals = None
    if normals:
        vn = np.asarray(normals, dtype=np.float64)
        if face_normal_refs and len(face_normal_refs) == len(faces):
            vertex_normals = np.zeros((len(verts), 3))
            seen = np.zeros(len(verts), dtype=bool)
            for refs in face_normal_refs:
                for v, n in refs:
                    vertex_normals[v] = vn[n]
                    seen[v] = True
            if not seen[np.unique(np.asarray(faces).ravel())].all():
                vertex_normals = None
        elif len(normals) == len(verts):
            vertex_normals = vn
    mesh = TriMesh(np.asarray(verts, dtype=np.float64).reshape(-1, 3),
                   np.asarray(faces, dtype=np.int64).reshape(-1, 3),
                   vertex_normals, np.asarray(colors) if colors else None)
    mesh, dropped = drop_degenerate(mesh)
    if dropped:
        log.warning("%s: dropped %d degenerate triangles", path, dropped)
    return mesh


def save_obj(mesh, path):
    """Write ``mesh`` as ASCII OBJ with per-vertex normals (and colors when present)."""
    v = mesh.vertices
    n = mesh.vertex_normals
    lines = ["# pifield mesh"]
    if mesh.vertex_colors is not None:
        c = mesh.vertex_colors
        lines += [f"v {a:.17g} {b:.17g} {d:.17g} {r:.9g} {g:.9g} {bb:.9g}"
                  for (a, b, d), (r, g, bb) in zip(v, c)]
    else:
        lines += [f"v {a:.17g} {b:.17g} {d:.17g}" for a, b, d in v]
    lines += [f"vn {a:.17g} {b:.17g} {d:.17g}" for a, b, d in n]
    lines += [f"f {a}//{a} {b}//{b} {d}//{d}" for a, b, d in mesh.triangles + 1]
    Path(path).write_text("\n".join(lines) + "\n")


# --- sampling ----------------------------------------------------------------

def sample_surface(mesh, n, rng, return_index=False):
    """Area-weighted uniform samples on the surface.

    Returns ``(points, normals)`` where normals are the interpolated vertex normals
    renormalized; with ``return_index`` also the triangle index and barycentrics.
    """
    if mesh.is_empty:
        raise EmptyMeshError("cannot sample an empty mesh")
    areas = mesh.face_areas()
    cdf = np.cumsum(areas)
    tri = np.searchsorted(cdf, rng.random(n) * cdf[-1], side="right")
    tri = np.minimum(tri, len(areas) - 1)
    r = rng.random((n, 2))
    flip = r.sum(axis=1) > 1.0
    r[flip] = 1.0 - r[flip]
    bary = np.column_stack([1.0 - r[:, 0] - r[:, 1], r[:, 0], r[:, 1]])
    idx = mesh.triangles[tri]
    points = np.einsum("nk,nkd->nd", bary, mesh.vertices[idx])
    normals = _normalize_rows(np.einsum("nk,nkd->nd", bary, mesh.vertex_normals[idx]))
    if return_index:
        return points, normals, tri, bary
    return points, normals


# --- BVH ---------------------------------------------------------------------

class Bvh:
    """Binary AABB tree over a mesh's triangles, stored as flat arrays.

    Median split on the longest centroid axis; leaves hold at most
    ``leaf_size`` triangles. Children of an inner node sit at ``left`` and ``left+1``.
    """

    def __init__(self, mesh, leaf_size=BVH_LEAF_SIZE):
        if mesh.is_empty:
            raise EmptyMeshError("cannot build a BVH over an empty mesh")
        self.mesh = mesh
        corners = mesh.corners
        tri_lo = corners.min(axis=1)
        tri_hi = corners.max(axis=1)
        centroid = corners.mean(axis=1)
        order = np.arange(len(corners), dtype=np.int64)

        lo, hi, left, start, count = [], [], [], [], []

        def new_node():
            lo.append(None)
            hi.append(None)
            left.append(-1)
            start.append(0)
            count.append(0)
            return len(lo) - 1

        root = new_node()
        work = [(root, 0, len(order))]
        while work:
            node, s, e = work.pop()
            ids = order[s:e]
            lo[node] = tri_lo[ids].min(axis=0)
            hi[node] = tri_hi[ids].max(axis=0)
            if e - s <= leaf_size:
                start[node], count[node] = s, e - s
                continue
            c = centroid[ids]
            axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
            mid = (e - s) // 2
            # stable sort keeps the tree independent of platform partition details
            local = np.argsort(c[:, axis], kind="stable")
            order[s:e] = ids[local]
            l = new_node()
            r = new_node()
            left[node] = l
            work.append((r, s + mid, e))
            work.append((l, s, s + mid))

        self.node_lo = np.array(lo)
        self.node_hi = np.array(hi)
        self.node_left = np.array(left, dtype=np.int64)
        self.node_start = np.array(start, dtype=np.int64)
        self.node_count = np.array(count, dtype=np.int64)
        self.order = order
        self.tri_valid = mesh.face_areas() > DEGENERATE_AREA

    @property
    def n_nodes(self):
        return len(self.node_count)

    def leaves(self):
        return np.flatnonzero(self.node_count > 0)

    def _arrays(self):
        return (self.node_lo, self.node_hi, self.node_left, self.node_start,
                self.node_count, self.order)

    def closest(self, points):
        """Closest surface points, distances and triangle ids for ``points`` [n, 3]."""
        q = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 3))
        pt, d2, tri = _kernels.closest_points(q, self.mesh.vertices, self.mesh.triangles,
                                              *self._arrays())
        return pt, np.sqrt(d2), tri

    def ray_crossings(self, origins, dirs, edge_tol=1e-9, parallel_tol=1e-12, t_tol=1e-12):
        """Triangle crossings along rays; -1 marks a numerically degenerate ray."""
        o = np.ascontiguousarray(np.asarray(origins, dtype=np.float64).reshape(-1, 3))
        d = np.ascontiguousarray(np.asarray(dirs, dtype=np.float64).reshape(-1, 3))
        return _kernels.ray_parity(o, d, self.mesh.vertices, self.mesh.triangles,
                                   self.tri_valid, self.node_lo, self.node_hi,
                                   self.node_left, self.node_start, self.node_count,
                                   self.order, edge_tol, parallel_tol, t_tol)


def closest_point(bvh, mesh, q):
    """Closest point on ``mesh`` to a single query ``q``: (point, distance)."""
    if bvh.mesh is not mesh:
        raise ValueError("bvh was built for a different mesh")
    pt, dist, _ = bvh.closest(np.asarray(q, dtype=np.float64)[None])
    return pt[0], float(dist[0])
