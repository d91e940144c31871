"""Excursion-set functionals of a pixelized field on the sphere.

The estimators share one closed complex built on the grid: nodes, ring
edges (periodic in phi), meridian edges between adjacent rings, the
quadrilateral cells between them, and two synthetic pole vertices joined
to the first and last rings by triangular fans. A node is excursed when
its value is >= u, so exact ties count as lying just above the level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "ExcursionSummary",
    "excursion_area",
    "complement_area",
    "boundary_length",
    "euler_characteristic",
    "field_sup",
    "summarize",
]

FOUR_PI = 4.0 * math.pi


@dataclass(frozen=True)
class ExcursionSummary:
    level: float
    area: float
    boundary_length: float
    euler_char: int
    sup_value: float

    @property
    def lkc(self):
        """(L0, L1, L2) with L1 half the boundary length."""
        return (float(self.euler_char), 0.5 * self.boundary_length, self.area)


def _values(fld):
    v = np.asarray(fld.values, dtype=float)
    if v.ndim != 2:
        raise ValueError("estimators take a single field of shape (n_theta, n_phi)")
    return v


def _pole_values(v):
    return v[0].mean(), v[-1].mean()


def excursion_area(fld, grid, u):
    """Quadrature of the indicator of {f >= u}, in steradians."""
    v = _values(fld)
    return float(np.sum(grid.weights, where=v >= u))


def complement_area(fld, grid, u):
    v = _values(fld)
    return float(np.sum(grid.weights, where=v < u))


def euler_characteristic(fld, grid, u):
    """V - E + F of the excursed sub-complex (cells need all corners excursed)."""
    v = _values(fld)
    inside = v >= u
    north, south = _pole_values(v)
    n_in, s_in = north >= u, south >= u
    right = np.roll(inside, -1, axis=1)
    ring_edges = inside & right
    merid_edges = inside[:-1] & inside[1:]
    quads = merid_edges & right[:-1] & right[1:]
    verts = int(inside.sum()) + int(n_in) + int(s_in)
    edges = int(ring_edges.sum()) + int(merid_edges.sum())
    edges += int(n_in) * int(inside[0].sum()) + int(s_in) * int(inside[-1].sum())
    faces = int(quads.sum())
    faces += int(n_in) * int(ring_edges[0].sum()) + int(s_in) * int(ring_edges[-1].sum())
    return verts - edges + faces


def _to_xyz(theta, phi):
    st = np.sin(theta)
    return np.stack([st * np.cos(phi), st * np.sin(phi), np.cos(theta)], axis=-1)


def _fraction(a, b, u):
    # crossing parameter from a toward b; callers only use it where the sides differ
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (u - a) / (b - a)
    return np.clip(np.nan_to_num(t, nan=0.5), 0.0, 1.0)


def _arc(p, q):
    """Great-circle angle between unit vectors, stable for short arcs."""
    cross = np.linalg.norm(np.cross(p, q), axis=-1)
    dot = np.sum(p * q, axis=-1)
    return np.arctan2(cross, dot)


def _crossings(v, grid, u):
    """Level-crossing positions and flags on every edge of the complex."""
    theta = grid.theta
    phi = grid.phi
    n_t, n_p = v.shape
    dphi = 2.0 * math.pi / n_p
    inside = v >= u
    north, south = _pole_values(v)

    right = np.roll(v, -1, axis=1)
    h_flag = inside != np.roll(inside, -1, axis=1)
    t = _fraction(v, right, u)
    h_pts = _to_xyz(np.broadcast_to(theta[:, None], v.shape), phi[None, :] + t * dphi)

    v_flag = inside[:-1] != inside[1:]
    t = _fraction(v[:-1], v[1:], u)
    th = theta[:-1, None] + t * (theta[1:] - theta[:-1])[:, None]
    v_pts = _to_xyz(th, np.broadcast_to(phi[None, :], th.shape))

    n_flag = (north >= u) != inside[0]
    t = _fraction(np.full(n_p, north), v[0], u)
    n_pts = _to_xyz(t * theta[0], phi)
    s_flag = inside[-1] != (south >= u)
    t = _fraction(v[-1], np.full(n_p, south), u)
    s_pts = _to_xyz(theta[-1] + t * (math.pi - theta[-1]), phi)
    return (h_pts, h_flag), (v_pts, v_flag), (n_pts, n_flag), (s_pts, s_flag), inside


def boundary_length(fld, grid, u):
    """Length of the level curve {f = u} by marching squares, in radians.

    Crossings are linearly interpolated along cell edges and joined by
    great-circle arcs. In the ambiguous saddle cells the two excursed
    corners are cut off separately, matching the Euler complex.
    """
    v = _values(fld)
    (hp, hf), (vp, vf), (npnt, nf), (sp, sf), inside = _crossings(v, grid, u)

    # quad (i, k): e0 ring i, e1 meridian k+1, e2 ring i+1, e3 meridian k
    pts = [hp[:-1], np.roll(vp, -1, axis=1), hp[1:], vp]
    flg = [hf[:-1], np.roll(vf, -1, axis=1), hf[1:], vf]
    count = sum(f.astype(int) for f in flg)
    c0 = inside[:-1]
    c1 = np.roll(inside, -1, axis=1)[:-1]
    c2 = np.roll(inside, -1, axis=1)[1:]
    c3 = inside[1:]
    saddle5 = c0 & c2 & ~c1 & ~c3
    saddle10 = c1 & c3 & ~c0 & ~c2

    total = 0.0
    two = count == 2
    for a in range(4):
        for b in range(a + 1, 4):
            m = two & flg[a] & flg[b]
            if m.any():
                total += _arc(pts[a][m], pts[b][m]).sum()
    for a, b, m in ((3, 0, saddle5), (1, 2, saddle5), (0, 1, saddle10), (2, 3, saddle10)):
        if m.any():
            total += _arc(pts[a][m], pts[b][m]).sum()

    # polar fans: triangle (pole, ring k, ring k+1)
    for ring, pole_pts, pole_flag in ((0, npnt, nf), (-1, sp, sf)):
        tri_pts = [pole_pts, np.roll(pole_pts, -1, axis=0), hp[ring]]
        tri_flg = [pole_flag, np.roll(pole_flag, -1), hf[ring]]
        for a, b in ((0, 1), (0, 2), (1, 2)):
            m = tri_flg[a] & tri_flg[b]
            if m.any():
                total += _arc(tri_pts[a][m], tri_pts[b][m]).sum()
    return float(total)


def _parabola_rise(xm, x0, xp, fm, f0, fp):
    """Height of the vertex above f0 for the parabola through three points."""
    h1 = x0 - xm
    h2 = xp - x0
    # f = f0 + b s + c s^2 with s = x - x0
    c = ((fp - f0) / h2 + (fm - f0) / h1) / (h1 + h2)
    b = (fp - f0) / h2 - c * h2
    with np.errstate(divide="ignore", invalid="ignore"):
        shift = -b / (2.0 * c)
        rise = -b * b / (4.0 * c)
    ok = (c < 0) & (shift >= -h1) & (shift <= h2)
    return np.where(ok, rise, 0.0)


def field_sup(fld, grid, refine=True, candidates=8):
    """Supremum estimate: grid maximum, optionally refined by local quadratic fits.

    The refinement fits one parabola along the meridian and one along the
    ring through the best local maxima and adds the two vertex rises.
    Returns ``(refined, grid_max)``.
    """
    v = _values(fld)
    grid_max = float(v.max())
    if not refine:
        return grid_max, grid_max
    n_t, n_p = v.shape
    order = np.argsort(v, axis=None)[::-1][: max(candidates * 4, candidates)]
    theta = grid.theta
    dphi = 2.0 * math.pi / n_p
    best = grid_max
    used = 0
    for flat in order:
        i, k = divmod(int(flat), n_p)
        if i == 0 or i == n_t - 1:
            continue
        f0 = v[i, k]
        nb = v[i - 1 : i + 2, [(k - 1) % n_p, k, (k + 1) % n_p]]
        if f0 < nb.max():
            continue
        rise_t = _parabola_rise(theta[i - 1], theta[i], theta[i + 1], v[i - 1, k], f0, v[i + 1, k])
        rise_p = _parabola_rise(-dphi, 0.0, dphi, v[i, (k - 1) % n_p], f0, v[i, (k + 1) % n_p])
        best = max(best, float(f0 + rise_t + rise_p))
        used += 1
        if used >= candidates:
            break
    return best, grid_max


def summarize(fld, grid, u, sup=None):
    """All functionals of the excursion set at level ``u``."""
    if sup is None:
        sup = field_sup(fld, grid)[0]
    return ExcursionSummary(
        float(u),
        excursion_area(fld, grid, u),
        boundary_length(fld, grid, u),
        euler_characteristic(fld, grid, u),
        sup,
    )
