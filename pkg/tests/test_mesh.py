import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pifield import shapes
from pifield.mesh import (Aabb, Bvh, EmptyMeshError, ObjParseError, TriMesh, closest_point,
                          load_obj, sample_surface, save_obj)

from conftest import brute_distance, point_triangle_distance, vector_brute

# frozen from Heron's formula over the 1280 faces of the level-3 icosphere
ICOSPHERE3_AREA = 12.506492733970
# smallest face-plane distance from the origin, same mesh
ICOSPHERE3_INRADIUS = 0.995471632390544


def write(tmp_path, text, name="m.obj"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_obj(tmp_path):
    m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"))
    assert m.triangles.shape == (1, 3)
    assert m.vertex_colors is None


def test_quad_fan(tmp_path):
    m = load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"))
    assert m.triangles.tolist() == [[0, 1, 2], [0, 2, 3]]


def test_face_forms_and_negative_indices(tmp_path):
    text = ("v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\n"
            "f 1/1/1 2/1/1 3/1/1\nf 1//1 2//1 3//1\nf 1/1 2/1 3/1\nf -3 -2 -1\n")
    m = load_obj(write(tmp_path, text))
    assert len(m.triangles) == 4
    assert np.allclose(m.vertex_normals, [0, 0, 1])


def test_unknown_records_ignored(tmp_path):
    m = load_obj(write(tmp_path, "o thing\ng grp\nusemtl x\nv 0 0 0\nv 1 0 0\nv 0 1 0\n"
                                 "s off\nf 1 2 3\n"))
    assert len(m.triangles) == 1


@pytest.mark.parametrize("text, where", [
    ("v 0 0 0\nv 1 0\n", "line 2"),
    ("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n", "line 4"),
    ("v 0 0 0\nf 1 2\n", "line 2"),
])
def test_parse_errors_name_the_line(tmp_path, text, where):
    with pytest.raises(ObjParseError, match=where):
        load_obj(write(tmp_path, text))


def test_index_out_of_range(tmp_path):
    with pytest.raises(ObjParseError, match="out of range"):
        load_obj(write(tmp_path, "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n"))
    with pytest.raises(IndexError):
        TriMesh(np.zeros((3, 3)), [[0, 1, 3]])


def test_degenerate_faces_dropped(tmp_path, caplog):
    text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 2 0 0\nf 1 2 3\nf 1 2 4\n"
    m = load_obj(write(tmp_path, text))
    assert len(m.triangles) == 1
    assert "dropped 1 degenerate" in caplog.text


def test_icosphere_area(tmp_path, sphere3):
    p = tmp_path / "ico.obj"
    save_obj(sphere3, p)
    m = load_obj(p)
    assert len(m.vertices) == 642
    assert m.area() == pytest.approx(ICOSPHERE3_AREA, rel=1e-12)
    assert abs(m.area() / (4 * math.pi) - 1) < 0.01


def test_round_trip_tetrahedron(tmp_path, tet):
    p = tmp_path / "t.obj"
    save_obj(tet, p)
    m = load_obj(p)
    assert np.array_equal(m.vertices, tet.vertices)
    assert np.array_equal(m.triangles, tet.triangles)


def test_colors_written_as_six_floats(tmp_path, tet):
    p = tmp_path / "c.obj"
    save_obj(tet.copy_with(colors=np.full((4, 3), 0.25)), p)
    vlines = [l for l in p.read_text().splitlines() if l.startswith("v ")]
    assert all(len(l.split()) == 7 for l in vlines)
    assert np.allclose(load_obj(p).vertex_colors, 0.25)


def test_round_trip_10k(tmp_path):
    rng = np.random.default_rng(3)
    m = shapes.icosphere(5, 37.0)  # 10242 vertices
    m = m.copy_with(vertices=m.vertices + rng.normal(0, 1e-3, m.vertices.shape))
    p = tmp_path / "big.obj"
    save_obj(m, p)
    back = load_obj(p)
    assert len(m.vertices) > 10000
    assert np.abs(back.vertices - m.vertices).max() < 1e-5
    assert np.array_equal(back.triangles, m.triangles)


def test_normals_unit_and_area_weighted():
    # two triangles sharing vertex 0: areas 1/2 (normal +z) and 2 (normal +x)
    v = [[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 2, 0], [0, 0, 2]]
    m = TriMesh(v, [[0, 1, 2], [0, 3, 4]])
    n0 = m.vertex_normals[0]
    assert np.linalg.norm(n0) == pytest.approx(1.0, abs=1e-12)
    expected = np.array([4.0, 0.0, 1.0]) / math.sqrt(17.0)
    assert np.allclose(n0, expected)


def test_aabb():
    b = Aabb.of_points([[0, 0, 0], [2, 4, 6]])
    assert np.all(b.min <= b.max)
    p = b.padded(0.1)
    assert np.allclose(p.min, [-0.2, -0.4, -0.6])
    assert b.contains(np.array([[1, 1, 1], [3, 0, 0]])).tolist() == [True, False]
    with pytest.raises(ValueError):
        Aabb(np.ones(3), np.zeros(3))


# --- sample_surface ------------------------------------------------------------

def test_sample_zero_and_empty(tet):
    pts, nrm = sample_surface(tet, 0, np.random.default_rng(0))
    assert pts.shape == (0, 3) and nrm.shape == (0, 3)
    with pytest.raises(EmptyMeshError):
        sample_surface(TriMesh(np.zeros((0, 3)), np.zeros((0, 3))), 5, np.random.default_rng(0))


def test_sample_area_fraction():
    # triangle 0 has area 3/2, triangle 1 area 1/2
    v = [[0, 0, 0], [3, 0, 0], [0, 1, 0], [10, 0, 0], [11, 0, 0], [10, 1, 0]]
    m = TriMesh(v, [[0, 1, 2], [3, 4, 5]])
    _, _, tri, _ = sample_surface(m, 40000, np.random.default_rng(1), return_index=True)
    assert abs(np.mean(tri == 0) - 0.75) < 0.01


def test_sample_sphere_radius(sphere4):
    pts, nrm = sample_surface(sphere4, 10000, np.random.default_rng(2))
    r = np.linalg.norm(pts, axis=1)
    # every sample lies between the inscribed facet distance and the vertex radius
    assert r.min() >= 0.995 and r.max() <= 1.0 + 1e-12
    assert abs(r.mean() - 1.0) < 0.004
    assert np.allclose(np.linalg.norm(nrm, axis=1), 1.0)


def test_sample_seed_determinism(sphere3):
    a = sample_surface(sphere3, 500, np.random.default_rng(9))
    b = sample_surface(sphere3, 500, np.random.default_rng(9))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_sample_chi_square(sphere3):
    # area-weighting: Pearson statistic over triangle hit counts
    areas = sphere3.face_areas()
    p = areas / areas.sum()
    for seed in range(5):
        _, _, tri, _ = sample_surface(sphere3, 128000, np.random.default_rng(seed), return_index=True)
        counts = np.bincount(tri, minlength=len(p))
        expected = p * len(tri)
        chi2 = ((counts - expected) ** 2 / expected).sum()
        dof = len(p) - 1
        # Wilson-Hilferty approximation of the 0.999 quantile
        z = 3.090
        crit = dof * (1 - 2 / (9 * dof) + z * math.sqrt(2 / (9 * dof))) ** 3
        assert chi2 < crit


# --- closest point / BVH ---------------------------------------------------------

def test_closest_on_vertex(sphere3):
    bvh = Bvh(sphere3)
    pt, d = closest_point(bvh, sphere3, sphere3.vertices[17])
    assert d == 0.0
    assert np.array_equal(pt, sphere3.vertices[17])


def test_closest_from_center_is_inradius(sphere3):
    bvh = Bvh(sphere3)
    _, d = closest_point(bvh, sphere3, np.zeros(3))
    assert d == pytest.approx(ICOSPHERE3_INRADIUS, abs=1e-12)


def test_closest_outside_point(sphere3):
    _, d = closest_point(Bvh(sphere3), sphere3, np.array([2.0, 0.0, 0.0]))
    assert d == pytest.approx(1.0, abs=1e-12)


def test_bvh_matches_brute_force(sphere3):
    rng = np.random.default_rng(11)
    q = rng.uniform(-1.6, 1.6, (1000, 3))
    _, d, _ = Bvh(sphere3).closest(q)
    # vectorized brute force over all triangles for speed, then a slow spot check
    ref = np.array([brute_distance(sphere3, p) for p in q[:60]])
    assert np.abs(d[:60] - ref).max() < 1e-9
    V, T = sphere3.vertices, sphere3.triangles
    full = vector_brute(q, V[T[:, 0]], V[T[:, 1]], V[T[:, 2]])
    assert np.abs(d - full).max() < 1e-9


def test_bvh_structure(sphere3):
    bvh = Bvh(sphere3)
    leaves = bvh.leaves()
    owned = np.concatenate([bvh.order[bvh.node_start[k]:bvh.node_start[k] + bvh.node_count[k]]
                            for k in leaves])
    assert np.array_equal(np.sort(owned), np.arange(len(sphere3.triangles)))
    for k in range(bvh.n_nodes):
        if bvh.node_count[k] == 0:
            for c in (bvh.node_left[k], bvh.node_left[k] + 1):
                assert np.all(bvh.node_lo[k] <= bvh.node_lo[c])
                assert np.all(bvh.node_hi[k] >= bvh.node_hi[c])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=9, max_size=9))
def test_point_triangle_property(p, corners):
    a, b, c = np.array(corners).reshape(3, 3)
    if np.linalg.norm(np.cross(b - a, c - a)) < 1e-3:
        return
    m = TriMesh([a, b, c], [[0, 1, 2]])
    _, d, _ = Bvh(m).closest(np.array([p]))
    assert d[0] == pytest.approx(point_triangle_distance(np.array(p), a, b, c), abs=1e-9)
