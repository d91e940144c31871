"""Expected Lipschitz-Killing curvatures of excursion sets on the unit sphere."""

import math
from dataclasses import dataclass

import numpy as np

from .specfun import ec_density, flag_coeff, gaussian_tail

__all__ = [
    "LkcTriple",
    "sphere_lkc",
    "gkf_lkc",
    "expected_lkc_gaussian",
    "expected_lkc_eigen",
    "expected_lkc_h2",
    "expected_lkc_cubic",
    "excursion_prob_approx",
    "EXCURSION_ERROR_CLASS",
]

FOUR_PI = 4.0 * math.pi
_TWO_PI_3_2 = (2.0 * math.pi) ** 1.5

EXCURSION_ERROR_CLASS = "O(exp(-alpha*u^2/2)), alpha>1"


@dataclass(frozen=True)
class LkcTriple:
    """(L0, L1, L2): Euler characteristic, half boundary length, area."""

    l0: float
    l1: float
    l2: float

    @property
    def boundary_length(self):
        return 2.0 * self.l1

    def as_tuple(self):
        return (self.l0, self.l1, self.l2)


def sphere_lkc(i):
    """Euclidean LKCs of the unit sphere: (2, 0, 4 pi)."""
    return (2.0, 0.0, FOUR_PI)[i]


def gkf_lkc(i, u, lam):
    """Expected L_i of {f >= u} by the kinematic formula, summed term by term.

    Independent of the closed forms below; used to cross-check them.
    """
    total = 0.0
    for k in range(0, 3 - i):
        total += flag_coeff(i, k) * lam ** (k / 2.0) * ec_density(k, u) * sphere_lkc(i + k)
    return total


def _check_lambda(lam):
    if not lam > 0 or not math.isfinite(lam):
        raise ValueError(f"second spectral moment must be positive, got {lam!r}")


def _gaussian(v, lam):
    pdf, tail = gaussian_tail(v)
    e = math.exp(-0.5 * v * v)
    return (
        2.0 * tail + FOUR_PI * lam * v * e / _TWO_PI_3_2,
        math.pi * math.sqrt(lam) * e,
        FOUR_PI * tail,
    )


def expected_lkc_gaussian(u, lam):
    """Expected LKCs of the excursion set of a unit-variance isotropic field."""
    _check_lambda(lam)
    return LkcTriple(*_gaussian(float(u), lam))


def expected_lkc_eigen(u, ell):
    """Expected LKCs for a random spherical eigenfunction of degree ``ell``."""
    if int(ell) != ell or ell < 1:
        raise ValueError(f"degree must be a positive integer, got {ell!r}")
    return expected_lkc_gaussian(u, ell * (ell + 1) / 2.0)


def expected_lkc_h2(u, lam):
    """Expected LKCs of {H_2(f) >= u}, i.e. {|f| >= sqrt(u + 1)}.

    ``lam`` is the second spectral moment of the underlying Gaussian field.
    """
    _check_lambda(lam)
    if u < -1.0:
        raise ValueError("H_2 of a unit-variance field is bounded below by -1")
    v = math.sqrt(u + 1.0)
    l0, l1, l2 = _gaussian(v, lam)
    # two disjoint tails, {f >= v} and {f <= -v}
    return LkcTriple(2.0 * l0, 2.0 * l1, 2.0 * l2)


def expected_lkc_cubic(u, lam):
    """Expected LKCs of {f^3 >= u} = {f >= cbrt(u)}."""
    _check_lambda(lam)
    return LkcTriple(*_gaussian(float(np.cbrt(u)), lam))


def excursion_prob_approx(u, lam):
    """Approximation 2(1 - Phi(u)) + 2 u phi(u) lambda to P(sup f > u).

    The error is of class ``EXCURSION_ERROR_CLASS`` for large u; the
    constants are not available in closed form.
    """
    _check_lambda(lam)
    pdf, tail = gaussian_tail(float(u))
    return 2.0 * tail + 2.0 * u * pdf * lam
