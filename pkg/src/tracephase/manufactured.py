"""Closed-form manufactured solutions on the unit sphere.

``u*(x, t) = a(t) (Y + 1)`` with ``a(t) = (1 - 0.8 exp(-0.4 t)) / 2`` and
``Y = x1 x2``, a degree-two spherical harmonic (``Delta_Gamma Y = -6 Y``).
Exact fields are evaluated at ``x / |x|``, i.e. extended constantly along
normals, so they can be sampled anywhere in the band.
"""
import numpy as np

from .models import f0_prime, f0_second


def time_factor(t):
    return 0.5 * (1.0 - 0.8 * np.exp(-0.4 * t))


def time_factor_dt(t):
    return 0.16 * np.exp(-0.4 * t)


def _harmonic(x):
    x = np.asarray(x, dtype=float)
    p = x / np.linalg.norm(x, axis=-1, keepdims=True)
    y = p[..., 0] * p[..., 1]
    grad2 = p[..., 0] ** 2 + p[..., 1] ** 2 - 4.0 * y**2  # |grad_Gamma Y|^2
    return y, grad2


def exact_solution(x, t):
    y, _ = _harmonic(x)
    return time_factor(t) * (y + 1.0)


def manufactured_forcing_ac(x, t, params):
    """Right-hand side making ``exact_solution`` solve the Allen-Cahn equation."""
    y, _ = _harmonic(x)
    a = time_factor(t)
    eta = a * (y + 1.0)
    return time_factor_dt(t) * (y + 1.0) + params.alpha * (
        f0_prime(eta, params.xi) + 6.0 * params.epsilon**2 * a * y
    )


def exact_chemical_potential(x, t, params):
    y, _ = _harmonic(x)
    a = time_factor(t)
    return f0_prime(a * (y + 1.0), params.xi) + 6.0 * params.epsilon**2 * a * y


def manufactured_forcing_ch(x, t, params, mobility=None):
    """Return ``(g_c, mu*)`` for the Cahn-Hilliard equation with mobility ``c (1 - c)``.

    With ``mu* = F(Y)`` one has ``div_Gamma(m grad_Gamma mu*) =
    (m F')' |grad_Gamma Y|^2 + m F' Delta_Gamma Y`` where primes are
    derivatives in ``Y``.
    """
    y, grad2 = _harmonic(x)
    a = time_factor(t)
    c = a * (y + 1.0)
    eps2 = params.epsilon**2
    xi = params.xi
    mu = f0_prime(c, xi) + 6.0 * eps2 * a * y
    F1 = a * f0_second(c, xi) + 6.0 * eps2 * a
    F2 = a**2 * 0.5 * xi * (12.0 * c - 6.0)
    m = c * (1.0 - c)
    m1 = a * (1.0 - 2.0 * c)
    div = (m1 * F1 + m * F2) * grad2 - 6.0 * y * m * F1
    g = params.rho * time_factor_dt(t) * (y + 1.0) - div
    return g, mu
