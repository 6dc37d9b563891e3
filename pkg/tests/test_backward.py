import types

import numpy as np
import pytest

from bgtriangle.backward import (
    LN2,
    GradientBuffers,
    backward,
    backward_blending,
    backward_boundary,
    backward_composite,
    backward_screen,
    backward_to_control_points,
    fd_passes,
    finite_difference_check,
    gamma_prime,
    gradcheck_scene,
    random_selectors,
    write_fd_report,
)
from bgtriangle.camera import Camera
from bgtriangle.render import render
from bgtriangle.scene import Scene, default_maps, flat_net
from bgtriangle.splat import build_gaussian_tiles, composite, composite_direct, gamma
from bgtriangle.train import photometric_loss


def fd(f, x, eps):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[i] += eps
        xm[i] -= eps
        g[i] = (f(xp) - f(xm)) / (2 * eps)
    return g


# ---------------------------------------------------------------------------
# per-pixel formulas


def test_single_gaussian_alpha_gradient():
    dC = np.array([0.3, -0.2, 0.5])
    c, bg = np.array([0.9, 0.4, 0.1]), np.array([0.1, 0.2, 0.3])
    dc, da = backward_composite([0.6], [c], bg, dC)
    assert da[0] == pytest.approx(dC @ (c - bg), abs=1e-15)
    assert np.allclose(dc[0], dC * 0.6)


def test_zero_upstream_gives_zero():
    dc, da = backward_composite([0.2, 0.5], np.ones((2, 3)), [0, 0, 0], np.zeros(3))
    assert not dc.any() and not da.any()


def test_three_gaussian_composite_fd(rng):
    alphas = rng.uniform(0.1, 0.8, 3)
    colors = rng.uniform(0, 1, (3, 3))
    bg = rng.uniform(0, 1, 3)
    dC = rng.normal(size=3)
    dc, da = backward_composite(alphas, colors, bg, dC)
    La = lambda a: dC @ composite_direct(a, colors, bg)[0]  # noqa: E731
    Lc = lambda c: dC @ composite_direct(alphas, c, bg)[0]  # noqa: E731
    assert np.allclose(da, fd(La, alphas, 1e-6), rtol=1e-6, atol=1e-12)
    assert np.allclose(dc, fd(Lc, colors, 1e-6), rtol=1e-6, atol=1e-12)


def test_blending_gradient_identity():
    da = np.array([0.7, -1.2, 0.0])
    alpha = np.array([0.4, 0.25, 0.5])
    assert np.allclose(backward_blending(da, alpha, np.ones(3)), da * alpha)
    assert backward_blending([1.0], [0.0], [0.0])[0] == 0.0


def test_gamma_prime_values():
    s = 1.7
    assert gamma_prime(s / 2, s) == pytest.approx(LN2 / s * 2**-0.5, rel=1e-14)
    assert gamma_prime(s, s) == 0.0 and gamma_prime(3 * s, s) == 0.0
    d = np.linspace(0, s * 0.999, 50)
    g = np.array([gamma(x, s) for x in d])
    assert np.abs(gamma_prime(d, s) - LN2 / s * g).max() < 1e-12


def test_boundary_gradient_cases(rng):
    s = 2.0
    q = np.array([[5.5, 5.5]])
    # clamp region and coincident point
    assert not backward_boundary([1.0], q, q + [[s, 0]], s, [True]).any()
    assert not backward_boundary([1.0], q, q, s, [True]).any()
    for own in (True, False):
        for _ in range(10):
            b = q + rng.uniform(-1.3, 1.3, (1, 2))
            d = np.linalg.norm(q - b)
            if d < 0.05 or d > 0.95 * s:
                continue
            g = backward_boundary([1.0], q, b, s, [own])[0]

            def w(bb):
                x = gamma(float(np.linalg.norm(q - bb)), s)
                return x if own else 1 - x

            num = fd(lambda bb: w(bb.reshape(1, 2)), b.reshape(2), 1e-6)
            assert np.allclose(g, num, rtol=1e-4, atol=1e-10)


def test_boundary_radial_move_changes_w():
    s = 3.0
    q, b = np.array([4.5, 4.5]), np.array([3.5, 4.5])
    u = (q - b) / np.linalg.norm(q - b)
    eps = 1e-6
    g = backward_boundary([1.0], q, b, s, [True])[0]
    dw = gamma(np.linalg.norm(q - (b + eps * u)), s) - gamma(np.linalg.norm(q - b), s)
    assert g @ u * eps == pytest.approx(dw, rel=1e-4)
    assert g @ u < 0


# ---------------------------------------------------------------------------
# screen-space kernel vs finite differences on hand-built Gaussians


class _Proj(types.SimpleNamespace):
    def __len__(self):
        return len(self.mean)


def _screen_setup(rng, mean, conic):
    n = len(mean)
    proj = _Proj(
        mean=mean, conic=conic, color=rng.uniform(0, 1, (n, 3)), owner=np.zeros(n, dtype=np.int64),
        depth=np.arange(n, dtype=np.float64), radius=np.full(n, 12, dtype=np.int64),
    )
    gt = build_gaussian_tiles(proj, 16, 16)
    ids = np.zeros((16, 16), dtype=np.int64)
    bg = np.array([0.2, 0.3, 0.4])
    return proj, gt, ids, bg


def test_exponent_gradients_fd(rng):
    n = 3
    mean0 = rng.uniform(5, 11, (n, 2))
    A = rng.normal(size=(n, 2, 2))
    cov = A @ A.transpose(0, 2, 1) + 2.0 * np.eye(2)
    inv = np.linalg.inv(cov)
    conic0 = np.stack([inv[:, 0, 0], inv[:, 0, 1], inv[:, 1, 1]], 1)
    dC = rng.normal(size=(16, 16, 3))
    opacity = 0.5
    proj, gt, ids, bg = _screen_setup(rng, mean0.copy(), conic0.copy())

    def loss(mean, conic):
        proj.mean, proj.conic = mean, conic
        return float(np.sum(dC * composite(proj, gt, ids, None, None, bg, opacity, blend=False).image))

    loss(mean0, conic0)
    comp = composite(proj, gt, ids, None, None, bg, opacity, blend=False, keep_records=True)
    result = types.SimpleNamespace(
        proj=proj, gtiles=gt, buffers=types.SimpleNamespace(ids=ids), boundary=None, bindex=None,
        comp=comp, blend=False,
    )
    sg = backward_screen(result, dC, opacity, bg)
    g_mean = fd(lambda m: loss(m, conic0), mean0, 1e-6)
    g_conic = fd(lambda c: loss(mean0, c), conic0, 1e-7)
    assert np.allclose(sg.mean, g_mean, rtol=1e-6, atol=1e-9)
    # the off-diagonal conic entry appears twice in the quadratic form
    assert np.allclose(sg.conic, g_conic, rtol=1e-6, atol=1e-9)
    color0 = proj.color.copy()

    def loss_color(c):
        proj.color = c
        return loss(mean0, conic0)

    g_color = fd(loss_color, color0, 1e-6)
    assert np.allclose(sg.color, g_color, rtol=1e-6, atol=1e-9)


# ---------------------------------------------------------------------------
# control-point scatter


def test_scatter_zero():
    g, c = backward_to_control_points(np.zeros((5, 3)), np.zeros((5, 3)), np.full((5, 3), 1 / 3), np.zeros(5, int), 2)
    assert not g.any() and not c.any()


def test_scatter_corner_collapse():
    dS = np.array([[0.3, -1.0, 2.0]])
    g, c = backward_to_control_points(dS, dS, [[1.0, 0.0, 0.0]], [1], 2)
    assert np.array_equal(g[1, 0], dS[0]) and not g[1, 1:].any() and not g[0].any()


def test_scatter_permutation_invariant(rng):
    n = 5000
    dS, dc = rng.normal(size=(n, 3)), rng.normal(size=(n, 3))
    bc = rng.dirichlet(np.ones(3), n)
    rows = rng.integers(0, 4, n)
    p = rng.permutation(n)
    a = backward_to_control_points(dS, dc, bc, rows, 4)
    b = backward_to_control_points(dS[p], dc[p], bc[p], rows[p], 4)
    assert np.abs(a[0] - b[0]).max() < 1e-12 and np.abs(a[1] - b[1]).max() < 1e-12


# ---------------------------------------------------------------------------
# full pipeline


def test_occluded_primitive_has_zero_gradient(rng):
    front = flat_net([-3, -3, 2.0], [3, -3, 2.0], [0, 4, 2.0])
    back = flat_net([-0.2, -0.2, 3.0], [0.2, -0.2, 3.0], [0, 0.2, 3.0])
    m = default_maps(2, 0.5)
    scene = Scene(ids=np.arange(2), ctrl=np.array([front, back]), color=np.full((2, 6, 3), 0.5), **m)
    cam = Camera(R=np.eye(3), t=np.zeros(3), fx=16.0, fy=16.0, cx=8, cy=8, width=16, height=16)
    r = render(scene, cam)
    assert not np.any(r.buffers.ids == 1)
    _, dC = photometric_loss(r.image, rng.uniform(0, 1, r.image.shape))
    g = backward(r, scene, cam, dC)
    assert np.any(g.ctrl[0] != 0)
    for arr in g.as_dict().values():
        assert not np.any(arr[1])


def test_gradients_finite_and_shaped():
    scene, cam = gradcheck_scene(1)
    r = render(scene, cam)
    _, dC = photometric_loss(r.image, np.full(r.image.shape, 0.5))
    g = backward(r, scene, cam, dC)
    g.check_finite()
    for k, v in g.as_dict().items():
        assert v.shape == getattr(scene, k).shape
    assert g.position_norm().shape == (3,)
    with pytest.raises(FloatingPointError):
        bad = GradientBuffers.zeros_like(scene)
        bad.sh[0, 0, 0] = np.nan
        bad.check_finite()


def test_zero_upstream_zero_gradients():
    scene, cam = gradcheck_scene(1)
    r = render(scene, cam)
    g = backward(r, scene, cam, np.zeros_like(r.image))
    assert all(not v.any() for v in g.as_dict().values())


def test_fd_small(tmp_path):
    scene, cam = gradcheck_scene(3)
    target = np.random.default_rng(7).uniform(0, 1, (16, 16, 3))
    sel = random_selectors(scene, 3, np.random.default_rng(0))
    rows = finite_difference_check(scene, cam, target, sel, eps=1e-5)
    kept = [r for r in rows if not r.excluded]
    assert len(kept) >= 10
    assert all(fd_passes(r) for r in kept), [(r.group, r.index, r.analytic, r.numeric) for r in kept if not fd_passes(r)]
    write_fd_report(rows, tmp_path / "fd.csv")
    lines = (tmp_path / "fd.csv").read_text().splitlines()
    assert lines[0].startswith("parameter,analytic,numeric,rel_error") and len(lines) == len(rows) + 1
