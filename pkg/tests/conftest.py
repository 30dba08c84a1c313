import numpy as np
import pytest

from pifield import shapes


def _segment_dist(p, a, b):
    ab = b - a
    t = np.clip(((p - a) @ ab) / (ab @ ab), 0.0, 1.0)
    return np.linalg.norm(p - (a + t * ab))


def point_triangle_distance(p, a, b, c):
    """Plane projection if it lands inside, otherwise the nearest of the three edges."""
    n = np.cross(b - a, c - a)
    n = n / np.linalg.norm(n)
    h = (p - a) @ n
    q = p - h * n
    # barycentric of q by solving the 2x2 normal equations
    m = np.array([[(b - a) @ (b - a), (b - a) @ (c - a)], [(b - a) @ (c - a), (c - a) @ (c - a)]])
    u, v = np.linalg.solve(m, [(q - a) @ (b - a), (q - a) @ (c - a)])
    if u >= 0 and v >= 0 and u + v <= 1:
        return abs(h)
    return min(_segment_dist(p, a, b), _segment_dist(p, b, c), _segment_dist(p, c, a))


def brute_distance(mesh, p):
    V, T = mesh.vertices, mesh.triangles
    return min(point_triangle_distance(p, V[i], V[j], V[k]) for i, j, k in T)


def vector_brute(q, a, b, c):
    """min over triangles, using the plane/edge split of conftest vectorized over faces."""
    out = np.empty(len(q))
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n, axis=1, keepdims=True)
    e0, e1 = b - a, c - a
    d00 = (e0 * e0).sum(1)
    d01 = (e0 * e1).sum(1)
    d11 = (e1 * e1).sum(1)
    den = d00 * d11 - d01 * d01

    def seg(p, s, t):
        st_ = t - s
        u = np.clip(((p - s) * st_).sum(1) / (st_ * st_).sum(1), 0, 1)
        return np.linalg.norm(p - (s + u[:, None] * st_), axis=1)

    for i, p in enumerate(q):
        h = ((p - a) * n).sum(1)
        w = p - h[:, None] * n - a
        d20 = (w * e0).sum(1)
        d21 = (w * e1).sum(1)
        u = (d11 * d20 - d01 * d21) / den
        v = (d00 * d21 - d01 * d20) / den
        inside = (u >= 0) & (v >= 0) & (u + v <= 1)
        edge = np.minimum(np.minimum(seg(p, a, b), seg(p, b, c)), seg(p, c, a))
        out[i] = np.where(inside, np.abs(h), edge).min()
    return out


@pytest.fixture(scope="session")
def sphere3():
    return shapes.icosphere(3, 1.0)


@pytest.fixture(scope="session")
def sphere4():
    return shapes.icosphere(4, 1.0)


@pytest.fixture(scope="session")
def tet():
    return shapes.tetrahedron()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
