import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bgtriangle.bezier import (
    SUBDIVISION_CORNERS,
    ContractError,
    bernstein,
    bernstein_basis,
    bernstein_gradient,
    child_to_parent,
    evaluate_generic,
    evaluate_surface,
    multi_indices,
    subdivide_4,
)
from bgtriangle.scene import flat_net

from conftest import random_bc

barycentric = st.tuples(
    st.floats(0, 1, allow_nan=False), st.floats(0, 1, allow_nan=False), st.floats(0, 1, allow_nan=False)
).filter(lambda t: sum(t) > 1e-6).map(lambda t: np.array(t) / sum(t))


def test_storage_order():
    assert [tuple(m) for m in multi_indices(2)] == [(2, 0, 0), (1, 1, 0), (1, 0, 1), (0, 2, 0), (0, 1, 1), (0, 0, 2)]


@pytest.mark.parametrize(
    "idx, bc, expected",
    [
        ((2, 0, 0), (1, 0, 0), 1.0),
        ((1, 1, 0), (1, 0, 0), 0.0),
        ((2, 0, 0), (1 / 3, 1 / 3, 1 / 3), 1 / 9),
        ((1, 1, 0), (1 / 3, 1 / 3, 1 / 3), 2 / 9),
    ],
)
def test_bernstein_values(idx, bc, expected):
    assert bernstein(2, *idx, bc) == pytest.approx(expected, abs=1e-15)


def test_bernstein_index_mismatch():
    with pytest.raises(ContractError):
        bernstein(2, 1, 1, 1, (1, 0, 0))


def test_bernstein_rejects_bad_coordinates():
    with pytest.raises(ContractError):
        bernstein(2, 2, 0, 0, (0.5, 0.6, 0.0))
    with pytest.raises(ContractError):
        bernstein(2, 2, 0, 0, (1.2, -0.2, 0.0))


def test_corner_collapse(rng):
    net = rng.normal(size=(6, 3))
    assert np.array_equal(evaluate_surface(net, (1.0, 0.0, 0.0)), net[0])
    assert np.array_equal(evaluate_surface(net, (0.0, 1.0, 0.0)), net[3])
    assert np.array_equal(evaluate_surface(net, (0.0, 0.0, 1.0)), net[5])


def test_constant_net(rng):
    p = rng.normal(size=3)
    net = np.tile(p, (6, 1))
    for bc in random_bc(rng, 20):
        assert np.allclose(evaluate_surface(net, bc), p, atol=1e-14)


def test_planar_center_weights(rng):
    net = flat_net(*rng.normal(size=(3, 3))) + 0.0
    expected = sum(w * p for w, p in zip([1 / 9, 2 / 9, 2 / 9, 1 / 9, 2 / 9, 1 / 9], net))
    assert np.allclose(evaluate_surface(net, np.full(3, 1 / 3)), expected, atol=1e-14)


def test_generic_matches_surface(rng):
    vals = rng.normal(size=6)
    bc = random_bc(rng, 10)
    manual = np.array([sum(bernstein(2, *m, b) * v for m, v in zip(multi_indices(2), vals)) for b in bc])
    assert np.allclose(evaluate_generic(vals, bc), manual, atol=1e-14)


def test_generic_dimension_mismatch():
    with pytest.raises(ContractError):
        evaluate_generic(np.zeros(5), (1, 0, 0))


def test_gradient_examples():
    assert bernstein_gradient(2, 2, 0, 0, (1, 0, 0)) == (2.0, 0.0, 0.0)
    assert bernstein_gradient(0, 0, 0, 0, (0.2, 0.3, 0.5)) == (0.0, 0.0, 0.0)


def test_gradient_finite_differences(rng):
    # partials treat u, v, w as independent variables of the polynomial
    h = 1e-6
    for bc in random_bc(rng, 100):
        for m in multi_indices(2):
            g = bernstein_gradient(2, *m, bc)
            for axis in range(3):
                e = np.zeros(3)
                e[axis] = h
                f = lambda x: float(bernstein_basis(x)[[tuple(r) for r in multi_indices(2)].index(tuple(m))])
                num = (f(bc + e) - f(bc - e)) / (2 * h)
                assert abs(num - g[axis]) < 1e-8


def test_subdivide_children_exact(rng):
    net = rng.normal(size=(6, 3))
    kids = subdivide_4(net)
    assert len(kids) == 4 and all(k.shape == (6, 3) for k in kids)
    for c, kid in enumerate(kids):
        bc = random_bc(rng, 200)
        child_pts = evaluate_surface(kid, bc)
        parent_pts = evaluate_surface(net, child_to_parent(c, bc))
        assert np.abs(child_pts - parent_pts).max() < 1e-9


def test_subdivide_planar_tiles_parent(rng):
    a, b, c = rng.normal(size=(3, 3))
    net = flat_net(a, b, c)
    normal = np.cross(b - a, c - a)
    kids = subdivide_4(net)
    for kid in kids:
        assert np.abs((kid - a) @ normal).max() < 1e-12
    # child corner areas sum to the parent area
    area = lambda n: 0.5 * np.linalg.norm(np.cross(n[3] - n[0], n[5] - n[0]))
    assert sum(area(k) for k in kids) == pytest.approx(area(net), rel=1e-12)


def test_subdivision_corners_cover_domain():
    # the four sub-triangles have equal parameter area and share the midpoints
    assert SUBDIVISION_CORNERS.shape == (4, 3, 3)
    assert np.allclose(SUBDIVISION_CORNERS.sum(-1), 1.0)


def test_subdivide_unsupported_degree():
    with pytest.raises(ContractError):
        subdivide_4(np.zeros((10, 3)))


@given(barycentric)
def test_partition_of_unity(bc):
    w = bernstein_basis(bc)
    assert abs(w.sum() - 1.0) <= 1e-12
    assert np.all(w >= 0)


@given(barycentric, st.integers(0, 2**32 - 1))
def test_convex_hull(bc, seed):
    net = np.random.default_rng(seed).normal(size=(6, 3))
    p = evaluate_surface(net, bc)
    assert np.all(p >= net.min(0) - 1e-12) and np.all(p <= net.max(0) + 1e-12)
