import numpy as np
import pytest

from bgtriangle.bezier import bernstein_basis
from bgtriangle.scene import (
    MAP_LAYOUT,
    Scene,
    aspect_ratios,
    flat_net,
    init_from_cube,
    init_from_point_cloud,
    primitive_areas,
    sample_attribute,
    sample_scene_points,
    sample_surface_points,
    visibility_map,
)

from conftest import random_bc


def test_layouts():
    assert (MAP_LAYOUT["rotation"].res, MAP_LAYOUT["rotation"].channels) == (3, 4)
    assert (MAP_LAYOUT["scaling"].res, MAP_LAYOUT["scaling"].channels) == (3, 2)
    assert (MAP_LAYOUT["sh"].res, MAP_LAYOUT["sh"].channels) == (1, 24)
    assert MAP_LAYOUT["rotation"].n_texels == 6
    assert visibility_map().n_texels == 36


def test_point_init_single():
    s = init_from_point_cloud(np.array([[0.3, -0.2, 1.0]]), 1, triangle_size=0.5)
    assert len(s) == 1
    assert np.allclose(s.ctrl[0].mean(0), [0.3, -0.2, 1.0], atol=1e-12)
    # equilateral with the requested edge
    c = s.ctrl[0][[0, 3, 5]]
    edges = [np.linalg.norm(c[i] - c[j]) for i, j in ((0, 1), (1, 2), (2, 0))]
    assert np.allclose(edges, 0.5)


def test_point_init_defaults(rng):
    pts = rng.normal(size=(50, 3))
    s = init_from_point_cloud(pts, 20, triangle_size=0.3, seed=3)
    assert len(s) == 20
    assert np.all(s.color == 0.5)
    assert np.all(s.rotation[..., 0] == 1) and np.all(s.rotation[..., 1:] == 0)
    assert np.all(s.sh == 0)
    assert np.allclose(np.exp(s.scaling), 0.3 / (2 * 3))


def test_point_init_count_capped(rng):
    assert len(init_from_point_cloud(rng.normal(size=(7, 3)), 100)) == 7


def test_point_init_ten_thousand(rng):
    s = init_from_point_cloud(rng.normal(size=(10_000, 3)), 10_000, triangle_size=0.05)
    assert len(s) == 10_000 and len(np.unique(s.ids)) == 10_000


def test_point_init_deterministic(rng):
    pts = rng.normal(size=(200, 3))
    a = init_from_point_cloud(pts, 50, seed=9)
    b = init_from_point_cloud(pts, 50, seed=9)
    for k in Scene.PARAM_GROUPS:
        assert np.array_equal(getattr(a, k), getattr(b, k))


def test_point_init_errors():
    with pytest.raises(ValueError):
        init_from_point_cloud(np.zeros((0, 3)), 1)
    with pytest.raises(ValueError):
        init_from_point_cloud(np.zeros((3, 3)), 0)


@pytest.mark.parametrize("subdiv, count", [(1, 12), (2, 48), (3, 108)])
def test_cube_counts(subdiv, count):
    assert len(init_from_cube(per_face_subdiv=subdiv)) == count


def test_cube_on_shell(rng):
    s = init_from_cube(center=(0.5, 0, -1), edge=3.0, per_face_subdiv=2)
    pts = np.einsum("nm,pmc->pnc", bernstein_basis(random_bc(rng, 50)), s.ctrl).reshape(-1, 3)
    d = np.abs(pts - [0.5, 0, -1]).max(1)
    assert np.abs(d - 1.5).max() < 1e-9


def test_cube_rejects_bad_edge():
    with pytest.raises(ValueError):
        init_from_cube(edge=0)


def _prim(scene, kind, values):
    p = scene.primitive(0)
    p.maps[kind] = values
    return p


def test_sample_attribute_single_texel(rng):
    s = init_from_cube()
    vals = rng.normal(size=(1, 24))
    p = _prim(s, "sh", vals)
    for bc in random_bc(rng, 10):
        assert np.array_equal(sample_attribute(p, "sh", bc), vals[0])


def test_sample_attribute_constant(rng):
    s = init_from_cube()
    p = _prim(s, "scaling", np.tile([0.3, -0.7], (6, 1)))
    out = sample_attribute(p, "scaling", random_bc(rng, 30))
    assert np.allclose(out, [0.3, -0.7], atol=1e-14)


def test_sample_attribute_texel_centers(rng):
    s = init_from_cube()
    vals = rng.normal(size=(6, 2))
    p = _prim(s, "scaling", vals)
    out = sample_attribute(p, "scaling", MAP_LAYOUT["scaling"].texel_coords())
    assert np.allclose(out, vals, atol=1e-14)


def test_sample_attribute_rotation_normalized(rng):
    s = init_from_cube()
    p = _prim(s, "rotation", rng.normal(size=(6, 4)))
    q = sample_attribute(p, "rotation", random_bc(rng, 20))
    assert np.allclose(np.linalg.norm(q, axis=1), 1.0)


def test_sample_attribute_continuous(rng):
    s = init_from_cube()
    vals = rng.uniform(-1, 1, size=(6, 2))
    p = _prim(s, "scaling", vals)
    h = 1e-3
    t = np.arange(0, 1 + h / 2, h)
    for direction in ([1, 0], [0, 1], [1, 1]):
        v = t * direction[0] / sum(direction)
        w = t * direction[1] / sum(direction)
        bc = np.stack([1 - v - w, v, w], 1)
        a = sample_attribute(p, "scaling", bc)
        jump = np.abs(np.diff(a, axis=0)).max()
        bound = 10 * np.ptp(vals) * h * 2
        assert jump < bound


def test_surface_samples_planar(rng):
    a, b, c = rng.normal(size=(3, 3))
    s = init_from_cube()
    s.ctrl[0] = flat_net(a, b, c)
    pts = sample_surface_points(s.primitive(0), 500, seed=1)
    n = np.cross(b - a, c - a)
    n /= np.linalg.norm(n)
    assert np.abs((pts - a) @ n).max() < 1e-12
    assert sample_surface_points(s.primitive(0), 0).shape == (0, 3)


def test_surface_samples_mean_at_centroid():
    s = init_from_cube()
    a, b, c = np.array([0, 0, 0.0]), np.array([1, 0, 0.0]), np.array([0.5, np.sqrt(3) / 2, 0])
    s.ctrl[0] = flat_net(a, b, c)
    pts = sample_surface_points(s.primitive(0), 100_000, seed=2)
    assert np.linalg.norm(pts.mean(0) - (a + b + c) / 3) < 1e-2


def test_scene_points_density():
    s = init_from_cube(per_face_subdiv=1)
    pts = sample_scene_points(s, 100.0)
    assert len(pts) == pytest.approx(24 * 100, rel=0.01)


def test_areas_and_aspect():
    net = flat_net([0, 0, 0], [2, 0, 0], [0, 1, 0])
    assert primitive_areas(net[None])[0] == pytest.approx(1.0, abs=1e-12)
    sliver = flat_net([0, 0, 0], [20, 0, 0], [10, 1, 0])
    assert aspect_ratios(sliver[None])[0] == pytest.approx(20.0, rel=1e-9)


def test_scene_select_extend():
    s = init_from_cube()
    s.select(np.arange(12) < 5)
    assert len(s) == 5
    new = s.extend({k: getattr(s, k)[:2].copy() for k in Scene.PARAM_GROUPS})
    assert list(new) == [12, 13] and len(s) == 7 and len(s.stats.vis_count) == 7


def test_scene_invariants():
    with pytest.raises(ValueError):
        init_from_cube(opacity=0.0)
    with pytest.raises(ValueError):
        init_from_cube(r_b=0.0)
