import numpy as np
import pytest

from pifield import shapes
from pifield.extract import (ScalarGrid, evaluate_grid, grid_bounds, marching_cubes,
                             texture_vertices)
from pifield.featext import PyramidExtractor
from pifield.field import FieldNet, surface_spec, texture_spec
from pifield.mesh import Aabb, Bvh
from pifield.occupancy import OccupancyOracle, is_watertight

from helpers import random_views

BOX = Aabb(np.full(3, -1.5), np.full(3, 1.5))


def sphere_field(res, radius=1.0, bounds=BOX):
    g = ScalarGrid.lattice(bounds, (res,) * 3)
    r = np.linalg.norm(g.points(), axis=-1)
    # smooth, radially decreasing, equal to 0.5 on the sphere
    g.values = 1.0 / (1.0 + np.exp(4.0 * (r - radius)))
    return g


def test_lattice_mapping():
    g = ScalarGrid.lattice(Aabb(np.zeros(3), np.array([1.0, 2.0, 4.0])), (3, 5, 9))
    p = g.points()
    assert p.shape == (3, 5, 9, 3)
    assert np.allclose(p[2, 4, 8], [1, 2, 4]) and np.allclose(p[1, 1, 1], [0.5, 0.5, 0.5])
    with pytest.raises(ValueError):
        ScalarGrid(BOX, np.zeros((1, 4, 4)))


def test_empty_when_constant():
    g = ScalarGrid.lattice(BOX, (8, 8, 8))
    assert marching_cubes(g).is_empty
    g.values[:] = 1.0
    assert marching_cubes(g).is_empty


def test_single_corner_cell():
    g = ScalarGrid(Aabb(np.zeros(3), np.ones(3)), np.zeros((2, 2, 2)))
    g.values[0, 0, 0] = 1.0
    m = marching_cubes(g, 0.5)
    assert m.triangles.shape == (1, 3)
    assert sorted(map(tuple, np.round(m.vertices, 12))) == [(0, 0, 0.5), (0, 0.5, 0), (0.5, 0, 0)]
    # the triangle faces away from the high corner
    n = m.face_normals()[0]
    assert n @ (np.array([1 / 6] * 3) - 0.0) > 0


def test_analytic_sphere_watertight_and_close():
    g = sphere_field(64)
    m = marching_cubes(g)
    assert is_watertight(m)
    diag = np.linalg.norm(g.spacing)
    assert np.abs(np.linalg.norm(m.vertices, axis=1) - 1.0).max() < diag
    # outward orientation: normals agree with position
    c = m.corners.mean(axis=1)
    assert np.all((m.face_normals() * c).sum(axis=1) > 0)


@pytest.mark.parametrize("make", [
    lambda: shapes.icosphere(3),
    lambda: shapes.torus(1.0, 0.4),
    lambda: shapes.capsule(),
    lambda: shapes.sphere_union(),
])
def test_oracle_field_extracts_watertight(make):
    mesh = make()
    b = grid_bounds(mesh.bounds(), 0.1)
    g = ScalarGrid.lattice(b, (64, 64, 64))
    g.values = OccupancyOracle(mesh).label(g.points().reshape(-1, 3),
                                           np.random.default_rng(0)).reshape(g.resolution)
    assert is_watertight(marching_cubes(g))


def test_resolution_consistency():
    coarse = marching_cubes(sphere_field(64))
    fine = marching_cubes(sphere_field(128))
    d1 = Bvh(fine).closest(coarse.vertices)[1].max()
    d2 = Bvh(coarse).closest(fine.vertices)[1].max()
    assert max(d1, d2) < np.linalg.norm(sphere_field(64).spacing)


def test_iso_monotone():
    g = sphere_field(48)
    radii = [np.linalg.norm(marching_cubes(g, iso).vertices, axis=1).mean()
             for iso in (0.3, 0.5, 0.7)]
    assert radii[0] > radii[1] > radii[2]


def test_welding_is_complete():
    m = marching_cubes(sphere_field(32))
    keys = {tuple(v) for v in np.round(m.vertices, 12)}
    assert len(keys) == len(m.vertices)


def test_zero_net_grid_is_half():
    ex = PyramidExtractor(2)
    net = FieldNet(surface_spec(ex.feature_dim)).zero_()
    g = evaluate_grid(net, ex, random_views(1), BOX, 6)
    assert g.resolution == (6, 6, 6) and np.all(g.values == 0.5)


def test_one_view_equals_three_identical():
    ex = PyramidExtractor(2, projection_dim=4, seed=1)
    net = FieldNet(surface_spec(4, embed_layer=2), seed=1)
    v = random_views(1)[0]
    a = evaluate_grid(net, ex, [v], BOX, 10)
    b = evaluate_grid(net, ex, [v, v, v], BOX, 10)
    assert np.array_equal(a.values, b.values)


def test_texture_vertices():
    mesh = shapes.icosphere(2, 1.0)
    fc, fv = PyramidExtractor(2), PyramidExtractor(2, projection_dim=3, seed=2)
    net = FieldNet(texture_spec(fc.feature_dim, 3, embed_layer=1)).zero_()
    views = random_views(3)
    out = texture_vertices(mesh, net, fc, fv, views)
    assert np.all(out.vertex_colors == 0.5)
    net = FieldNet(texture_spec(fc.feature_dim, 3, embed_layer=1), seed=3)
    a = texture_vertices(mesh, net, fc, fv, views).vertex_colors
    b = texture_vertices(mesh, net, fc, fv, views[::-1]).vertex_colors
    assert np.array_equal(a, b)
    assert a.min() >= 0 and a.max() <= 1
