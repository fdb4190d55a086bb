"""Reference quadrature rules on the unit triangle and unit tetrahedron.

Points are barycentric coordinates; weights sum to one so that physical
weights are ``measure * w``.
"""
import numpy as np
from scipy.special import roots_jacobi


def _perm3(a, b):
    return [(a, a, b), (a, b, a), (b, a, a)]


def triangle_rule(order):
    """Symmetric rule exact for polynomials of degree ``order`` (1..4)."""
    if order == 1:
        return np.array([[1 / 3, 1 / 3, 1 / 3]]), np.array([1.0])
    if order == 2:
        return np.array(_perm3(1 / 6, 2 / 3)), np.full(3, 1 / 3)
    if order in (3, 4):
        # Dunavant, degree 4, all weights positive
        a1, w1 = 0.445948490915965, 0.223381589678011
        a2, w2 = 0.091576213509771, 0.109951743655322
        pts = _perm3(a1, 1 - 2 * a1) + _perm3(a2, 1 - 2 * a2)
        return np.array(pts), np.array([w1] * 3 + [w2] * 3)
    raise ValueError(f"triangle rule order must be in 1..4, got {order}")


def tet_rule(order):
    """Rule on the tetrahedron exact for degree ``order``.

    Orders 1 and 2 use the centroid and the classic 4-point rule; higher
    orders use a collapsed Gauss-Jacobi product rule.
    """
    if order == 1:
        return np.full((1, 4), 0.25), np.array([1.0])
    if order == 2:
        a, b = 0.5854101966249685, 0.1381966011250105
        pts = np.full((4, 4), b)
        np.fill_diagonal(pts, a)
        return pts, np.full(4, 0.25)
    if order < 1:
        raise ValueError("order must be >= 1")
    n = order // 2 + 1
    x0, w0 = roots_jacobi(n, 2.0, 0.0)
    x1, w1 = roots_jacobi(n, 1.0, 0.0)
    x2, w2 = roots_jacobi(n, 0.0, 0.0)
    a, b, c = (0.5 * (x + 1.0) for x in (x0, x1, x2))
    wa, wb, wc = w0 / 8.0, w1 / 4.0, w2 / 2.0
    A, B, C = np.meshgrid(a, b, c, indexing="ij")
    WA, WB, WC = np.meshgrid(wa, wb, wc, indexing="ij")
    # Duffy map from the unit cube to the reference simplex
    l1 = A
    l2 = (1 - A) * B
    l3 = (1 - A) * (1 - B) * C
    l0 = 1 - l1 - l2 - l3
    pts = np.stack([l0.ravel(), l1.ravel(), l2.ravel(), l3.ravel()], axis=1)
    w = (WA * WB * WC).ravel() * 6.0
    return pts, w
