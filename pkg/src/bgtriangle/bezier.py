"""Bernstein basis, evaluation and subdivision for Bezier triangles.

Control points of a degree-n net are stored in lexicographic order of
(i, j) descending, i.e. for n = 2::

    (2,0,0) (1,1,0) (1,0,1) (0,2,0) (0,1,1) (0,0,2)

Barycentric coordinates are ``(u, v, w)`` with ``u`` weighting the
``i`` exponent, ``v`` the ``j`` exponent and ``w`` the ``k`` exponent.
"""

from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np

DEGREE = 2


class ContractError(ValueError):
    """Raised when an argument violates an operation's precondition."""


@lru_cache(maxsize=None)
def multi_indices(n: int) -> np.ndarray:
    """All (i, j, k) with i + j + k = n, in storage order."""
    out = []
    for i in range(n, -1, -1):
        for j in range(n - i, -1, -1):
            out.append((i, j, n - i - j))
    arr = np.array(out, dtype=np.int64)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def _multinomials(n: int) -> np.ndarray:
    idx = multi_indices(n)
    c = np.array([factorial(n) / (factorial(i) * factorial(j) * factorial(k)) for i, j, k in idx])
    c.setflags(write=False)
    return c


def n_control_points(n: int) -> int:
    return (n + 1) * (n + 2) // 2


def check_barycentric(bc, atol: float = 1e-12) -> np.ndarray:
    bc = np.asarray(bc, dtype=np.float64)
    if bc.shape[-1] != 3:
        raise ContractError(f"barycentric coordinates need 3 components, got shape {bc.shape}")
    if np.any(bc < -atol) or np.any(np.abs(bc.sum(-1) - 1.0) > atol):
        raise ContractError("barycentric coordinates must be non-negative and sum to 1")
    return bc


def bernstein(n: int, i: int, j: int, k: int, bc) -> float:
    """Single Bernstein weight ``n!/(i!j!k!) u^i v^j w^k``."""
    if i + j + k != n or min(i, j, k) < 0:
        raise ContractError(f"indices ({i},{j},{k}) do not sum to degree {n}")
    u, v, w = check_barycentric(bc)
    coef = factorial(n) / (factorial(i) * factorial(j) * factorial(k))
    return float(coef * u**i * v**j * w**k)


def bernstein_basis(bc, n: int = DEGREE) -> np.ndarray:
    """All Bernstein weights for ``bc`` of shape (..., 3); returns (..., m).

    No validation: callers in the render path pass rasterizer output.
    """
    bc = np.asarray(bc, dtype=np.float64)
    idx = multi_indices(n)
    u = bc[..., 0:1]
    v = bc[..., 1:2]
    w = bc[..., 2:3]
    return _multinomials(n) * u ** idx[:, 0] * v ** idx[:, 1] * w ** idx[:, 2]


def bernstein_basis_grad(bc, n: int = DEGREE) -> np.ndarray:
    """Partials of every basis function; returns (..., m, 3) as (d/du, d/dv, d/dw)."""
    bc = np.asarray(bc, dtype=np.float64)
    idx = multi_indices(n)
    coef = _multinomials(n)
    u = bc[..., 0:1]
    v = bc[..., 1:2]
    w = bc[..., 2:3]

    def _pow(x, e):
        # x**(e-1) with e == 0 contributing nothing
        return np.where(e > 0, x ** np.maximum(e - 1, 0), 0.0)

    i, j, k = idx[:, 0], idx[:, 1], idx[:, 2]
    du = coef * i * _pow(u, i) * v**j * w**k
    dv = coef * j * u**i * _pow(v, j) * w**k
    dw = coef * k * u**i * v**j * _pow(w, k)
    return np.stack([du, dv, dw], axis=-1)


def bernstein_gradient(n: int, i: int, j: int, k: int, bc) -> tuple[float, float, float]:
    if i + j + k != n or min(i, j, k) < 0:
        raise ContractError(f"indices ({i},{j},{k}) do not sum to degree {n}")
    if n == 0:
        return (0.0, 0.0, 0.0)
    g = bernstein_basis_grad(np.asarray(bc, dtype=np.float64), n)
    row = [t for t, m in enumerate(multi_indices(n)) if tuple(m) == (i, j, k)][0]
    return tuple(float(x) for x in g[row])


def degree_of(count: int) -> int:
    n = 0
    while n_control_points(n) < count:
        n += 1
    if n_control_points(n) != count:
        raise ContractError(f"{count} control points do not form a triangular net")
    return n


def evaluate_generic(values, bc) -> np.ndarray:
    """Bernstein-weighted sum of per-control-point values.

    ``values`` has shape (m,) or (m, C); ``bc`` has shape (3,) or (N, 3).
    """
    values = np.asarray(values, dtype=np.float64)
    n = degree_of(values.shape[0])
    bc = check_barycentric(bc, atol=1e-9)
    basis = bernstein_basis(bc, n)
    return np.tensordot(basis, values, axes=([-1], [0]))


def evaluate_surface(net, bc) -> np.ndarray:
    net = np.asarray(net, dtype=np.float64)
    if net.ndim != 2 or net.shape[1] != 3:
        raise ContractError(f"control net must have shape (m, 3), got {net.shape}")
    if not np.all(np.isfinite(net)):
        raise ContractError("control net has non-finite coordinates")
    return evaluate_generic(net, bc)


def surface_partials(nets: np.ndarray, bc: np.ndarray):
    """Tangents along the (v - u) and (w - u) parameter directions.

    ``nets`` (N, m, 3), ``bc`` (N, 3). Returns (dS/dv, dS/dw, basis grads).
    """
    g = bernstein_basis_grad(bc)
    dv = g[..., 1] - g[..., 0]
    dw = g[..., 2] - g[..., 0]
    sv = np.einsum("nm,nmc->nc", dv, nets)
    sw = np.einsum("nm,nmc->nc", dw, nets)
    return sv, sw, dv, dw


def _blossom(values: np.ndarray, args: list[np.ndarray]) -> np.ndarray:
    """Polar form of the net evaluated at barycentric arguments ``args``."""
    cur = values
    n = degree_of(values.shape[0])
    for x in args:
        idx = multi_indices(n)
        lookup = {tuple(t): r for r, t in enumerate(idx)}
        nxt = []
        for i, j, k in multi_indices(n - 1):
            nxt.append(
                x[0] * cur[lookup[(i + 1, j, k)]]
                + x[1] * cur[lookup[(i, j + 1, k)]]
                + x[2] * cur[lookup[(i, j, k + 1)]]
            )
        cur = np.array(nxt)
        n -= 1
    return cur[0]


def restrict(values, corners) -> np.ndarray:
    """Control values of the same polynomial over a sub-triangle.

    ``corners`` is a (3, 3) array of the sub-triangle's corner
    barycentric coordinates in the parent domain (rows map to the
    child's u, v, w corners).
    """
    values = np.asarray(values, dtype=np.float64)
    n = degree_of(values.shape[0])
    corners = np.asarray(corners, dtype=np.float64)
    out = []
    for i, j, k in multi_indices(n):
        args = [corners[0]] * i + [corners[1]] * j + [corners[2]] * k
        out.append(_blossom(values, args))
    return np.array(out)


_U = np.array([1.0, 0.0, 0.0])
_V = np.array([0.0, 1.0, 0.0])
_W = np.array([0.0, 0.0, 1.0])

# Child corner sets for the midpoint split, rows are (u, v, w) corners.
SUBDIVISION_CORNERS = np.array(
    [
        [_U, (_U + _V) / 2, (_U + _W) / 2],
        [(_U + _V) / 2, _V, (_V + _W) / 2],
        [(_U + _W) / 2, (_V + _W) / 2, _W],
        [(_V + _W) / 2, (_U + _W) / 2, (_U + _V) / 2],
    ]
)


def child_to_parent(child: int, bc) -> np.ndarray:
    """Map child-domain barycentric coordinates into the parent domain."""
    return np.asarray(bc, dtype=np.float64) @ SUBDIVISION_CORNERS[child]


def subdivide_4(net) -> list[np.ndarray]:
    """Split a degree-2 net at its edge midpoints into four exact children."""
    net = np.asarray(net, dtype=np.float64)
    if net.shape[0] != n_control_points(DEGREE):
        raise ContractError(f"subdivide_4 supports degree {DEGREE} only")
    return [restrict(net, c) for c in SUBDIVISION_CORNERS]
