"""Analytic watertight test shapes, all centered on the origin, with membership tests."""
import numpy as np

from .mesh import TriMesh


def tetrahedron(size=1.0):
    v = size * np.array([[1.0, 1.0, 1.0], [1.0, -1.0, -1.0], [-1.0, 1.0, -1.0], [-1.0, -1.0, 1.0]])
    f = np.array([[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
    return TriMesh(v, f)


def icosphere(subdivisions=3, radius=1.0):
    """Subdivided icosahedron projected onto a sphere (10*4^k + 2 vertices)."""
    t = (1.0 + 5.0 ** 0.5) / 2.0
    verts = [[-1, t, 0], [1, t, 0], [-1, -t, 0], [1, -t, 0],
             [0, -1, t], [0, 1, t], [0, -1, -t], [0, 1, -t],
             [t, 0, -1], [t, 0, 1], [-t, 0, -1], [-t, 0, 1]]
    faces = [[0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
             [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
             [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
             [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1]]
    verts = [np.array(v, dtype=np.float64) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        cache = {}

        def midpoint(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                cache[key] = len(verts) - 1
            return cache[key]

        new_faces = []
        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]
        faces = new_faces
    v = radius * np.array(verts)
    # analytic normals keep sampled normals exact on the sphere
    return TriMesh(v, np.array(faces), vertex_normals=v / radius)


def torus(major=1.0, minor=0.4, n_major=48, n_minor=24, axis="z"):
    """Ring torus around ``axis`` (ring lies in the plane orthogonal to it)."""
    i, j = np.meshgrid(np.arange(n_major), np.arange(n_minor), indexing="ij")
    u = 2 * np.pi * i.ravel() / n_major
    w = 2 * np.pi * j.ravel() / n_minor
    r = major + minor * np.cos(w)
    pts = np.column_stack([r * np.cos(u), r * np.sin(u), minor * np.sin(w)])
    nrm = np.column_stack([np.cos(w) * np.cos(u), np.cos(w) * np.sin(u), np.sin(w)])

    def vid(a, b):
        return (a % n_major) * n_minor + (b % n_minor)

    faces = []
    for a in range(n_major):
        for b in range(n_minor):
            p, q, s, t = vid(a, b), vid(a + 1, b), vid(a + 1, b + 1), vid(a, b + 1)
            faces += [[p, q, s], [p, s, t]]
    perm = _axis_perm(axis)
    return TriMesh(pts[:, perm], np.array(faces), vertex_normals=nrm[:, perm])


def capsule(radius=0.5, half_length=0.5, n_around=32, n_cap=8, axis="y"):
    """Cylinder of ``2*half_length`` capped by hemispheres, long axis along ``axis``."""
    rings = []  # (height, ring radius, normal_r, normal_h)
    for k in range(1, n_cap + 1):
        phi = np.pi / 2 * (1 - k / n_cap)  # from near the top pole down to the equator
        rings.append((half_length + radius * np.sin(phi), radius * np.cos(phi), np.cos(phi), np.sin(phi)))
    for k in range(0, n_cap):
        phi = -np.pi / 2 * k / n_cap
        rings.append((-half_length + radius * np.sin(phi), radius * np.cos(phi), np.cos(phi), np.sin(phi)))
    ang = 2 * np.pi * np.arange(n_around) / n_around
    verts = [[0.0, 0.0, half_length + radius]]
    normals = [[0.0, 0.0, 1.0]]
    for h, rr, nr, nh in rings:
        for a in ang:
            verts.append([rr * np.cos(a), rr * np.sin(a), h])
            normals.append([nr * np.cos(a), nr * np.sin(a), nh])
    verts.append([0.0, 0.0, -half_length - radius])
    normals.append([0.0, 0.0, -1.0])
    n_rings = len(rings)
    bottom = len(verts) - 1

    def vid(ring, a):
        return 1 + ring * n_around + a % n_around

    faces = []
    for a in range(n_around):
        faces.append([0, vid(0, a), vid(0, a + 1)])
    for ring in range(n_rings - 1):
        for a in range(n_around):
            p, q = vid(ring, a), vid(ring, a + 1)
            s, t = vid(ring + 1, a + 1), vid(ring + 1, a)
            faces += [[p, t, s], [p, s, q]]
    for a in range(n_around):
        faces.append([bottom, vid(n_rings - 1, a + 1), vid(n_rings - 1, a)])
    perm = _axis_perm(axis)
    return TriMesh(np.array(verts)[:, perm], np.array(faces),
                   vertex_normals=np.array(normals)[:, perm])


def sphere_union(centers=((-0.45, 0.0, 0.0), (0.45, 0.0, 0.0)), radii=(0.7, 0.6),
                 resolution=40):
    """Union of overlapping spheres, polygonized from its distance field."""
    from .extract import ScalarGrid, marching_cubes
    from .mesh import Aabb

    centers = np.asarray(centers, dtype=np.float64)
    radii = np.asarray(radii, dtype=np.float64)
    lo = (centers - radii[:, None]).min(axis=0)
    hi = (centers + radii[:, None]).max(axis=0)
    # an irrational-ish offset keeps lattice points off the zero set
    bounds = Aabb(lo - 0.1 - 1e-3 * np.pi, hi + 0.1 + 1e-3 * np.e)
    g = ScalarGrid.lattice(bounds, (resolution,) * 3)
    pts = g.points().reshape(-1, 3)
    d = np.min(np.linalg.norm(pts[:, None, :] - centers[None], axis=2) - radii[None], axis=1)
    grid = ScalarGrid(bounds, -d.reshape(g.resolution))
    return marching_cubes(grid, iso=0.0)


def _axis_perm(axis):
    # shapes are built around +z; permute columns so that axis becomes the build axis
    return {"z": [0, 1, 2], "y": [1, 2, 0], "x": [2, 0, 1]}[axis]


# --- analytic membership (ground truth for tests) -----------------------------

def inside_sphere(points, radius=1.0, center=(0.0, 0.0, 0.0)):
    return np.linalg.norm(np.asarray(points) - np.asarray(center), axis=-1) < radius


def inside_torus(points, major=1.0, minor=0.4, axis="z"):
    p = np.asarray(points)[..., np.argsort(_axis_perm(axis))]
    ring = np.hypot(p[..., 0], p[..., 1]) - major
    return np.hypot(ring, p[..., 2]) < minor
