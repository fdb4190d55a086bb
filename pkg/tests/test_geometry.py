import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from tracephase.errors import DegenerateGradient, NoConvergence
from tracephase.geometry import CELL_BOX, SPHERE_BOX, SPINDLE_BOX, ImplicitSurface

SPHERE = ImplicitSurface.sphere()
SPINDLE = ImplicitSurface.spindle()
CELL = ImplicitSurface.cell()


def fd_gradient(surf, x, h=1e-6):
    g = np.zeros_like(x)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        g[..., k] = (surf.phi(x + e) - surf.phi(x - e)) / (2 * h)
    return g


def test_phi_examples():
    assert SPHERE.phi(np.zeros(3)) == -1.0
    assert SPINDLE.phi(np.array([0.0, 0.25, 0.0])) == pytest.approx(0.0, abs=1e-15)
    assert CELL.phi(np.array([0.0, 1.0, 0.0])) == pytest.approx(0.0, abs=1e-15)


def test_signs_inside_outside():
    for surf, inside, outside in [
        (SPHERE, [0.2, 0, 0], [1.5, 0, 0]),
        (SPINDLE, [0, 0, 0], [0, 0.5, 0]),
        (CELL, [0, 0, 0], [0, 1.2, 0]),
    ]:
        assert surf.phi(np.array(inside)) < 0 < surf.phi(np.array(outside))


def test_sphere_gradient_examples():
    assert np.allclose(SPHERE.grad_phi(np.array([1.0, 0, 0])), [1, 0, 0])
    assert np.allclose(SPHERE.grad_phi(np.array([0, 0, 2.0])), [0, 0, 1])
    assert np.array_equal(SPHERE.grad_phi(np.zeros(3)), np.zeros(3))
    assert SPHERE.is_degenerate(np.zeros(3))
    with pytest.raises(DegenerateGradient):
        SPHERE.normal(np.zeros(3))


def test_spindle_gradient_matches_fd():
    x = np.array([0.0, 0.1, 0.1])
    g = SPINDLE.grad_phi(x)
    assert np.allclose(g, fd_gradient(SPINDLE, x), rtol=1e-6, atol=1e-9)


def test_exact_normal_examples():
    assert np.allclose(SPHERE.normal(np.array([0, 3.0, 0])), [0, 1, 0])
    assert np.allclose(CELL.normal(np.array([2.0, 0, 0])), [1, 0, 0], atol=1e-12)


@pytest.mark.parametrize("surf", [SPHERE, SPINDLE, CELL], ids=["sphere", "spindle", "cell"])
def test_gradient_agrees_with_central_differences_near_surface(surf):
    from scipy.stats import qmc

    lo, hi = surf.lower, surf.upper
    pts = lo + qmc.Sobol(3, seed=1).random(2**17) * (hi - lo)
    # |phi| < 0.1 relative to the gradient scale of each shape
    scale = np.median(np.linalg.norm(surf.grad_phi(pts), axis=1))
    near = pts[np.abs(surf.phi(pts)) < 0.1 * scale]
    # keep away from the spindle tips and the box faces where the clamp bites
    near = near[np.all((near > lo + 1e-3) & (near < hi - 1e-3), axis=1)]
    near = near[:10_000]
    assert len(near) > 1000
    g = surf.grad_phi(near)
    fd = fd_gradient(surf, near)
    rel = np.linalg.norm(g - fd, axis=1) / np.maximum(np.linalg.norm(g, axis=1), 1e-3)
    assert rel.max() <= 1e-6


@pytest.mark.parametrize("surf", [SPHERE, SPINDLE, CELL], ids=["sphere", "spindle", "cell"])
def test_box_clearance_and_gradient_bound(surf):
    assert surf.check_box_clearance()
    assert surf.check_gradient_bound(n_samples=2000) >= surf.c0


def test_default_boxes():
    assert SPHERE.box == pytest.approx(SPHERE_BOX)
    assert SPINDLE.box == (-5.0, 5.0, -4 / 3, 4 / 3, -4 / 3, 4 / 3) == SPINDLE_BOX
    assert CELL.box == CELL_BOX


def test_projection_examples():
    assert np.allclose(SPHERE.project(np.array([2.0, 0, 0])), [1, 0, 0])
    assert np.allclose(SPHERE.project(np.array([0.5, 0, 0])), [1, 0, 0])
    p = SPINDLE.project(np.array([1.0, 0.2, 0.0]), tol=1e-10)
    assert abs(SPINDLE.phi(p)) <= 1e-10
    sp = SPHERE.closest_point(np.array([0, 0, 1.5]))
    assert np.allclose(sp.x, [0, 0, 1]) and np.allclose(sp.n, [0, 0, 1])


def test_projection_no_convergence():
    with pytest.raises(NoConvergence):
        CELL.project(np.array([0.3, 0.9, 0.2]), max_iter=1, tol=1e-15)


def test_custom_surface_and_bad_kind():
    plane = ImplicitSurface.custom(lambda x: x[..., 2] - 0.1,
                                   lambda x: np.broadcast_to([0.0, 0.0, 1.0], x.shape), SPHERE_BOX)
    assert np.allclose(plane.normal(np.array([0.3, 0.2, 0.5])), [0, 0, 1])
    with pytest.raises(ValueError):
        ImplicitSurface.from_kind("torus")
    with pytest.raises(ValueError):
        ImplicitSurface.sphere(radius=-1)


vec = st.tuples(*[st.floats(-1.6, 1.6) for _ in range(3)]).map(np.array)


@given(vec)
def test_sphere_normal_is_radial(x):
    r = np.linalg.norm(x)
    if r < 1e-3:
        return
    n = SPHERE.normal(x)
    assert abs(np.linalg.norm(n) - 1) <= 1e-12
    assert abs(n @ (x / r) - 1) <= 1e-12


@given(vec)
def test_projection_idempotent(x):
    if np.linalg.norm(x) < 0.2:
        return
    p = SPHERE.project(x)
    assert abs(SPHERE.phi(p)) <= 1e-12
    assert np.linalg.norm(SPHERE.project(p) - p) <= 1e-12


@given(st.floats(-4.9, 4.9), st.floats(-0.3, 0.3), st.floats(-0.3, 0.3))
def test_spindle_projection_lands_on_surface(x1, x2, x3):
    x = np.array([x1, x2, x3])
    if np.hypot(x2, x3) < 1e-2:
        return  # the axis is a degenerate direction for the quasi-normal step
    p = SPINDLE.project(x, tol=1e-10)
    assert abs(SPINDLE.phi(p)) <= 1e-10
