"""Wigner 3j symbols, Clebsch-Gordan coefficients and their m=0 convolutions.

All symbols are evaluated in floating point through log-factorials with
explicit sign tracking. The Racah alternating sum is accumulated with
Kahan compensation; this is adequate to ~1e-10 for ell <= 100.
"""

import math
import threading
from functools import lru_cache

__all__ = [
    "wigner3j_zero",
    "wigner3j",
    "clebsch_gordan",
    "cg_convolution",
    "cg_convolution_table",
    "UnsupportedOrderError",
]

MAX_ORDER = 4


class UnsupportedOrderError(ValueError):
    """Raised when a convolution order outside [2, MAX_ORDER] is requested."""


def _lf(n):
    return math.lgamma(n + 1.0)


def _triangle(l1, l2, l3):
    return abs(l1 - l2) <= l3 <= l1 + l2


@lru_cache(maxsize=None)
def wigner3j_zero(l1, l2, l3):
    """3j symbol (l1 l2 l3; 0 0 0) from the closed-form factorial expression."""
    if min(l1, l2, l3) < 0 or not _triangle(l1, l2, l3):
        return 0.0
    big_j = l1 + l2 + l3
    if big_j % 2:
        return 0.0
    g = big_j // 2
    log_val = (
        _lf(g)
        - _lf(g - l1)
        - _lf(g - l2)
        - _lf(g - l3)
        + 0.5 * (_lf(big_j - 2 * l1) + _lf(big_j - 2 * l2) + _lf(big_j - 2 * l3) - _lf(big_j + 1))
    )
    sign = -1.0 if g % 2 else 1.0
    return sign * math.exp(log_val)


def wigner3j(l1, l2, l3, m1, m2, m3):
    """General 3j symbol by the Racah sum; 0 whenever a selection rule fails."""
    if min(l1, l2, l3) < 0:
        return 0.0
    if abs(m1) > l1 or abs(m2) > l2 or abs(m3) > l3:
        return 0.0
    if m1 + m2 + m3 != 0 or not _triangle(l1, l2, l3):
        return 0.0
    if m1 == m2 == m3 == 0:
        return wigner3j_zero(l1, l2, l3)

    # arguments of the denominator factorials, each must be >= 0
    t1 = l3 - l2 + m1
    t2 = l3 - l1 - m2
    t3 = l1 + l2 - l3
    t4 = l1 - m1
    t5 = l2 + m2
    zmin = max(0, -t1, -t2)
    zmax = min(t3, t4, t5)
    if zmin > zmax:
        return 0.0

    log_pref = 0.5 * (
        _lf(l1 + l2 - l3)
        + _lf(l1 - l2 + l3)
        + _lf(-l1 + l2 + l3)
        - _lf(l1 + l2 + l3 + 1)
        + _lf(l1 + m1)
        + _lf(l1 - m1)
        + _lf(l2 + m2)
        + _lf(l2 - m2)
        + _lf(l3 + m3)
        + _lf(l3 - m3)
    )
    terms = []
    for z in range(zmin, zmax + 1):
        log_den = _lf(z) + _lf(t1 + z) + _lf(t2 + z) + _lf(t3 - z) + _lf(t4 - z) + _lf(t5 - z)
        terms.append((-1.0 if z % 2 else 1.0, log_pref - log_den))

    # factor out the largest magnitude before summing
    shift = max(t[1] for t in terms)
    total = 0.0
    comp = 0.0
    for sign, lv in terms:
        y = sign * math.exp(lv - shift) - comp
        t = total + y
        comp = (t - total) - y
        total = t
    phase = -1.0 if (l1 - l2 - m3) % 2 else 1.0
    return phase * total * math.exp(shift)


def clebsch_gordan(l1, m1, l2, m2, l3, m3):
    """Clebsch-Gordan coefficient <l1 m1 l2 m2 | l3 m3>.

    Uses the unitary normalization (-1)^(l3-m3) sqrt(2 l3 + 1) 3j(...; m1 m2 -m3),
    so that sums of squares over (l3, m3) equal one.
    """
    if m3 != m1 + m2:
        return 0.0
    w = wigner3j(l1, l2, l3, m1, m2, -m3)
    if w == 0.0:
        return 0.0
    phase = -1.0 if (l3 - m3) % 2 else 1.0
    return phase * math.sqrt(2 * l3 + 1) * w


def _cg0_sq(l1, l2, l3):
    """{C^{l3 0}_{l1 0 l2 0}}^2 = (2 l3 + 1) 3j(l1 l2 l3; 0 0 0)^2."""
    w = wigner3j_zero(l1, l2, l3)
    return (2 * l3 + 1) * w * w


_conv_lock = threading.Lock()
_conv_cache = {}


def cg_convolution(ells, ell):
    """Generalized convolution C(l_1, ..., l_q, ell) of m=0 CG coefficients.

    For q = 2 this is {C^{ell 0}_{l1 0 l2 0}}^2; for q >= 3 it sums the
    squared chained products over the intermediate couplings.
    """
    ells = tuple(int(v) for v in ells)
    q = len(ells)
    if not 2 <= q <= MAX_ORDER:
        raise UnsupportedOrderError(f"convolution order must be in [2, {MAX_ORDER}], got {q}")
    if ell < 0 or min(ells) < 0:
        raise ValueError("multipoles must be non-negative")
    key = (ells, int(ell))
    val = _conv_cache.get(key)
    if val is None:
        val = _chain(ells, int(ell))
        with _conv_lock:
            _conv_cache[key] = val
    return val


def _chain(ells, ell):
    if len(ells) == 2:
        return _cg0_sq(ells[0], ells[1], ell)
    # distribution over the first coupled multipole, then recurse
    l1, l2 = ells[0], ells[1]
    total = 0.0
    for lam in range(abs(l1 - l2), l1 + l2 + 1, 2):
        w = _cg0_sq(l1, l2, lam)
        if w:
            total += w * _chain((lam,) + ells[2:], ell)
    return total


def cg_convolution_table(ells, ellmax):
    """Values of C(ells, ell) for ell = 0..ellmax as a list."""
    return [cg_convolution(ells, ell) for ell in range(ellmax + 1)]
