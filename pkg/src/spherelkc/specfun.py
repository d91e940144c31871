"""Scalar special functions: Legendre, Hermite, Gaussian tails, EC densities."""

import math

import numpy as np
from scipy.special import erfc, gammaln

__all__ = [
    "legendre_p",
    "legendre_table",
    "zonal_pole_derivative",
    "hermite",
    "gaussian_tail",
    "gaussian_minkowski",
    "ec_density",
    "flag_coeff",
    "unit_ball_volume",
]

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _legendre_upto(ell, x):
    """Return (P_ell(x), P_{ell-1}(x)) by the three-term recurrence."""
    p_prev = np.ones_like(x)
    if ell == 0:
        return p_prev, np.zeros_like(x)
    p = x.copy()
    for k in range(2, ell + 1):
        p, p_prev = ((2 * k - 1) * x * p - (k - 1) * p_prev) / k, p
    return p, p_prev


def legendre_p(ell, x, deriv=0):
    """Legendre polynomial P_ell or its first/second derivative.

    Accepts scalar or array ``x`` in [-1, 1]. Endpoint derivatives use the
    closed forms P'(+-1) and P''(+-1), which avoid the 1/(1-x^2) factor.
    """
    if int(ell) != ell or ell < 0:
        raise ValueError(f"ell must be a non-negative integer, got {ell!r}")
    if deriv not in (0, 1, 2):
        raise ValueError(f"deriv must be 0, 1 or 2, got {deriv!r}")
    ell = int(ell)
    scalar = np.ndim(x) == 0
    xa = np.atleast_1d(np.asarray(x, dtype=float))
    if np.any(~np.isfinite(xa)) or np.any(np.abs(xa) > 1.0):
        raise ValueError("x must lie in [-1, 1]")

    p, p_prev = _legendre_upto(ell, xa)
    if deriv == 0:
        out = p
    else:
        out = np.empty_like(xa)
        edge = np.abs(xa) == 1.0
        inner = ~edge
        s = np.sign(xa[edge])
        # parity: P^(k)(-1) = (-1)^(ell+k) P^(k)(1)
        if deriv == 1:
            d1 = ell * (ell + 1) / 2.0
            out[edge] = d1 * s ** (ell + 1)
        else:
            d2 = (ell - 1) * ell * (ell + 1) * (ell + 2) / 8.0
            out[edge] = d2 * s**ell
        xi = xa[inner]
        one_m = 1.0 - xi * xi
        dp = ell * (p_prev[inner] - xi * p[inner]) / one_m if ell else 0.0 * xi
        if deriv == 1:
            out[inner] = dp
        else:
            # Legendre ODE: (1-x^2) P'' = 2x P' - ell(ell+1) P
            out[inner] = (2 * xi * dp - ell * (ell + 1) * p[inner]) / one_m
    return float(out[0]) if scalar else out


def legendre_table(ellmax, x):
    """Array of shape (ellmax+1, len(x)) holding P_0..P_ellmax at x."""
    x = np.asarray(x, dtype=float)
    out = np.empty((ellmax + 1,) + x.shape)
    out[0] = 1.0
    if ellmax >= 1:
        out[1] = x
    for k in range(2, ellmax + 1):
        out[k] = ((2 * k - 1) * x * out[k - 1] - (k - 1) * out[k - 2]) / k
    return out


def zonal_pole_derivative(ell, order):
    """d^k/dtheta^k of P_ell(cos theta) at theta = 0, for k = 0..4.

    Odd orders vanish by symmetry; k = 2 gives -P'(1) and k = 4 gives
    P'(1) + 3 P''(1) (Taylor expansion of cos theta to fourth order).
    """
    if order not in (0, 1, 2, 3, 4):
        raise ValueError(f"order must be in 0..4, got {order!r}")
    if order == 0:
        return 1.0
    if order % 2:
        return 0.0
    d1 = legendre_p(ell, 1.0, 1)
    if order == 2:
        return -d1
    return d1 + 3.0 * legendre_p(ell, 1.0, 2)


def gaussian_tail(u):
    """Standard normal density and upper tail ``(phi(u), 1 - Phi(u))``."""
    u = np.asarray(u, dtype=float)
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * u * u)
    tail = 0.5 * erfc(u / _SQRT2)
    if pdf.ndim == 0:
        return float(pdf), float(tail)
    return pdf, tail


def hermite(q, u):
    """Probabilists' Hermite polynomial He_q(u); q = -1 gives 1 - Phi(u)."""
    if int(q) != q or q < -1:
        raise ValueError(f"Hermite order must be an integer >= -1, got {q!r}")
    q = int(q)
    u = np.asarray(u, dtype=float)
    if q == -1:
        out = 0.5 * erfc(u / _SQRT2)
    else:
        h_prev = np.ones_like(u)
        h = h_prev if q == 0 else u.copy()
        for k in range(1, q):
            h, h_prev = u * h - k * h_prev, h
        out = h
    return float(out) if np.ndim(out) == 0 else out


def gaussian_minkowski(j, u):
    """Gaussian Minkowski functional of the half line [u, inf)."""
    if int(j) != j or j < 0:
        raise ValueError(f"j must be a non-negative integer, got {j!r}")
    pdf, tail = gaussian_tail(u)
    if j == 0:
        return tail
    return hermite(int(j) - 1, u) * pdf


def ec_density(ell, u):
    """Euler characteristic density rho_ell(u) of a unit-variance field."""
    if int(ell) != ell or ell < 0:
        raise ValueError(f"ell must be a non-negative integer, got {ell!r}")
    return (2.0 * math.pi) ** (-ell / 2.0) * gaussian_minkowski(ell, u)


def unit_ball_volume(i):
    """Volume of the unit ball in R^i."""
    return math.exp(0.5 * i * math.log(math.pi) - gammaln(0.5 * i + 1.0))


def flag_coeff(i, ell):
    """Flag coefficient [i+ell; ell] = C(i+ell, ell) w_{i+ell} / (w_i w_ell)."""
    if i < 0 or ell < 0:
        raise ValueError("flag coefficient indices must be non-negative")
    return (
        math.comb(i + ell, ell)
        * unit_ball_volume(i + ell)
        / (unit_ball_volume(i) * unit_ball_volume(ell))
    )
