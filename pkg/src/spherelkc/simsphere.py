"""Band-limited isotropic fields on a Gauss-Legendre x uniform-longitude grid.

Coefficients are stored for m >= 0 only, in an array ``alm[..., ell, m]``;
the m < 0 half follows from a_{ell,-m} = (-1)^m conj(a_{ell,m}). Leading
axes are replicate axes: every transform here broadcasts over them.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .specfun import hermite
from .spectra import field_variance, transformed_spectrum

__all__ = [
    "SphereGrid",
    "HarmonicCoefficients",
    "PixelField",
    "ResolutionError",
    "make_grid",
    "sample_alm",
    "synthesize",
    "analyze",
    "harmonic_filter",
    "pointwise_hermite",
    "build_gjq",
    "build_surrogate",
    "replicate_generator",
    "write_text",
    "write_binary",
    "read_binary",
]

FOUR_PI = 4.0 * math.pi
BINARY_MAGIC = b"SPHF"


class ResolutionError(ValueError):
    """The grid cannot represent or integrate the requested band limit."""


# ---------------------------------------------------------------------------
# grid


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Gauss-Legendre nodes in cos(theta) times equispaced longitudes.

    Rings run from the north pole (theta near 0) to the south pole.
    ``weights`` has shape (n_theta, n_phi) and sums to 4 pi.
    """

    n_theta: int
    n_phi: int
    cos_theta: np.ndarray = field(repr=False)
    ring_weights: np.ndarray = field(repr=False)

    @property
    def theta(self):
        return np.arccos(self.cos_theta)

    @property
    def phi(self):
        return 2.0 * math.pi * np.arange(self.n_phi) / self.n_phi

    @property
    def weights(self):
        return np.repeat(self.ring_weights[:, None] * (2.0 * math.pi / self.n_phi), self.n_phi, axis=1)

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    def unit_vectors(self):
        """Node positions as an (n_theta, n_phi, 3) array."""
        st = np.sqrt(1.0 - self.cos_theta**2)[:, None]
        ph = self.phi[None, :]
        return np.stack(
            [st * np.cos(ph), st * np.sin(ph), np.broadcast_to(self.cos_theta[:, None], self.shape)], axis=-1
        )

    @property
    def max_exact_degree(self):
        """Largest total degree integrated exactly in cos(theta)."""
        return 2 * self.n_theta - 1

    @property
    def max_band(self):
        """Largest band limit that can be synthesized without aliasing."""
        return min(self.n_theta - 1, (self.n_phi - 1) // 2)


def make_grid(n_theta, n_phi):
    """Gauss-Legendre x uniform grid with per-node quadrature weights."""
    if int(n_theta) != n_theta or int(n_phi) != n_phi or n_theta < 2 or n_phi < 2:
        raise ValueError(f"degenerate grid size ({n_theta}, {n_phi})")
    return _make_grid(int(n_theta), int(n_phi))


@lru_cache(maxsize=16)
def _make_grid(n_theta, n_phi):
    x, w = np.polynomial.legendre.leggauss(n_theta)
    order = np.argsort(-x)
    return SphereGrid(n_theta, n_phi, x[order], w[order])


@lru_cache(maxsize=16)
def _lambda_table(grid, ellmax):
    """Normalized associated Legendre values lam[ring, ell, m] (Condon-Shortley phase)."""
    x = grid.cos_theta
    s = np.sqrt(1.0 - x * x)
    L = ellmax
    out = np.zeros((grid.n_theta, L + 1, L + 1))
    pmm = np.full_like(x, 1.0 / math.sqrt(FOUR_PI))
    for m in range(L + 1):
        if m > 0:
            pmm = -math.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm
        out[:, m, m] = pmm
        if m == L:
            break
        p_prev = pmm
        p = math.sqrt(2 * m + 3) * x * pmm
        out[:, m + 1, m] = p
        for ell in range(m + 2, L + 1):
            a = math.sqrt((4.0 * ell * ell - 1.0) / (ell * ell - m * m))
            a_prev = math.sqrt((4.0 * (ell - 1) ** 2 - 1.0) / ((ell - 1) ** 2 - m * m))
            p, p_prev = a * (x * p - p_prev / a_prev), p
            out[:, ell, m] = p
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# containers


@dataclass(frozen=True, eq=False)
class HarmonicCoefficients:
    """Coefficients a_{ell m} for m >= 0, array shape (..., ellmax+1, ellmax+1)."""

    alm: np.ndarray

    @property
    def ellmax(self):
        return self.alm.shape[-1] - 1

    def __getitem__(self, index):
        return HarmonicCoefficients(self.alm[index])

    def coefficient(self, ell, m):
        """a_{ell m} for any -ell <= m <= ell."""
        if abs(m) > ell or ell > self.ellmax:
            raise IndexError(f"(ell, m) = ({ell}, {m}) out of range")
        a = self.alm[..., ell, abs(m)]
        return a if m >= 0 else (-1) ** m * np.conj(a)

    def power(self):
        """Empirical spectrum (1/(2l+1)) sum_m |a_lm|^2."""
        p = np.abs(self.alm) ** 2
        p[..., 1:] *= 2.0
        ell = np.arange(self.ellmax + 1)
        return p.sum(axis=-1) / (2 * ell + 1)


@dataclass(frozen=True, eq=False)
class PixelField:
    """Real field values on a grid, shape (..., n_theta, n_phi).

    ``band`` records the known band limit (None if unknown).
    """

    grid: SphereGrid
    values: np.ndarray
    band: int | None = None

    def __getitem__(self, index):
        return PixelField(self.grid, self.values[index], self.band)

    def integral(self):
        return np.tensordot(self.values, self.grid.weights, axes=([-2, -1], [0, 1]))


# ---------------------------------------------------------------------------
# sampling


def replicate_generator(seed, replicate, stream=0):
    """Counter-based generator keyed by (seed, stream, replicate)."""
    ss = np.random.SeedSequence([int(seed), int(stream), int(replicate)])
    return np.random.Generator(np.random.Philox(ss))


@lru_cache(maxsize=32)
def _draw_layout(ellmax):
    """Map the ell-major draw order onto (ell, m, component) slots.

    Order: for each ell, Re a_{ell 0}, then (Re, Im) for m = 1..ell. A
    prefix of the draw vector therefore always covers a smaller ellmax.
    """
    ell_idx, m_idx, comp = [], [], []
    for ell in range(ellmax + 1):
        ell_idx.append(ell)
        m_idx.append(0)
        comp.append(0)
        for m in range(1, ell + 1):
            ell_idx += [ell, ell]
            m_idx += [m, m]
            comp += [0, 1]
    return np.array(ell_idx), np.array(m_idx), np.array(comp)


def sample_alm(spec, ellmax, seed, replicates=None, stream=0):
    """Gaussian coefficients with E|a_{ell m}|^2 = C_ell.

    ``replicates`` is None (one draw, replicate 0), an int index or an
    iterable of indices; each replicate has its own counter-based stream.
    """
    ellmax = int(ellmax)
    if ellmax > spec.ellmax:
        raise ValueError(f"ellmax {ellmax} beyond spectrum ellmax {spec.ellmax}")
    single = replicates is None or np.ndim(replicates) == 0
    reps = [0 if replicates is None else int(replicates)] if single else [int(r) for r in replicates]
    cl = spec.array(ellmax)
    ell_idx, m_idx, comp = _draw_layout(ellmax)
    scale = np.sqrt(np.where(m_idx == 0, cl[ell_idx], 0.5 * cl[ell_idx]))
    n = len(ell_idx)
    re = np.zeros((len(reps), ellmax + 1, ellmax + 1))
    im = np.zeros_like(re)
    for k, r in enumerate(reps):
        z = replicate_generator(seed, r, stream).standard_normal(n) * scale
        re[k, ell_idx[comp == 0], m_idx[comp == 0]] = z[comp == 0]
        im[k, ell_idx[comp == 1], m_idx[comp == 1]] = z[comp == 1]
    alm = re + 1j * im
    return HarmonicCoefficients(alm[0] if single else alm)


# ---------------------------------------------------------------------------
# transforms


def synthesize(alm, grid):
    """Field sum_{ell m} a_{ell m} Y_{ell m} at every grid node."""
    L = alm.ellmax
    if L > grid.n_theta - 1 or 2 * L + 1 > grid.n_phi:
        raise ResolutionError(f"grid {grid.shape} cannot resolve band limit {L}")
    lam = _lambda_table(grid, L)
    a = alm.alm
    batch = a.shape[:-2]
    a2 = a.reshape((-1, L + 1, L + 1))
    # per-m matrix products: F[m, r, t] = sum_l a[r, l, m] lam[t, l, m]
    am = np.ascontiguousarray(np.moveaxis(a2, 2, 0))  # (m, r, l)
    lm = np.ascontiguousarray(np.transpose(lam, (2, 1, 0)))  # (m, l, t)
    F = (am.real @ lm) + 1j * (am.imag @ lm)  # (m, r, t)
    F = np.moveaxis(F, 0, 2)  # (r, t, m)
    G = np.zeros(F.shape[:2] + (grid.n_phi // 2 + 1,), dtype=complex)
    G[..., : L + 1] = F
    vals = np.fft.irfft(G, n=grid.n_phi, axis=-1) * grid.n_phi
    return PixelField(grid, vals.reshape(batch + grid.shape), L)


def analyze(fld, ellmax):
    """Coefficients up to ``ellmax`` by exact quadrature of a band-limited field."""
    grid = fld.grid
    ellmax = int(ellmax)
    band = ellmax if fld.band is None else fld.band
    if band + ellmax > grid.max_exact_degree or band + ellmax + 1 > grid.n_phi or ellmax > grid.n_theta - 1:
        raise ResolutionError(
            f"grid {grid.shape} cannot analyze a band-{band} field up to ell={ellmax} exactly"
        )
    lam = _lambda_table(grid, ellmax)
    v = fld.values
    batch = v.shape[:-2]
    v2 = v.reshape((-1,) + grid.shape)
    G = np.fft.rfft(v2, axis=-1)[..., : ellmax + 1] * (2.0 * math.pi / grid.n_phi)  # (r, t, m)
    G *= grid.ring_weights[None, :, None]
    Gm = np.ascontiguousarray(np.moveaxis(G, 2, 0))  # (m, r, t)
    lm = np.ascontiguousarray(np.transpose(lam, (2, 0, 1)))  # (m, t, l)
    A = (Gm.real @ lm) + 1j * (Gm.imag @ lm)  # (m, r, l)
    A = np.moveaxis(A, 0, 2)  # (r, l, m)
    return HarmonicCoefficients(A.reshape(batch + (ellmax + 1, ellmax + 1)))


def harmonic_filter(alm, multiplier, ellmax=None):
    """Multiply a_{ell m} by ``multiplier(ell)``; optionally truncate at ``ellmax``.

    ``multiplier`` is a callable of an integer array or an array indexed by ell
    (entries past its length count as zero).
    """
    L = alm.ellmax if ellmax is None else int(ellmax)
    ell = np.arange(L + 1)
    if callable(multiplier):
        mult = np.asarray(multiplier(ell), dtype=float)
    else:
        arr = np.asarray(multiplier, dtype=float)
        mult = np.zeros(L + 1)
        n = min(len(arr), L + 1)
        mult[:n] = arr[:n]
    a = alm.alm
    if L <= alm.ellmax:
        out = a[..., : L + 1, : L + 1] * mult[:, None]
    else:
        out = np.zeros(a.shape[:-2] + (L + 1, L + 1), dtype=complex)
        out[..., : alm.ellmax + 1, : alm.ellmax + 1] = a * mult[: alm.ellmax + 1, None]
    return HarmonicCoefficients(out)


def pointwise_hermite(fld, q, sigma):
    """Node-wise H_q(value / sigma); the band limit grows by a factor q."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    band = None if fld.band is None else q * fld.band
    return PixelField(fld.grid, hermite(int(q), fld.values / sigma), band)


# ---------------------------------------------------------------------------
# subordinated fields


def _check_gjq_grid(grid, band_beta, q, L_K):
    need_theta = max(band_beta + 1, (q * band_beta + L_K + 2) // 2)
    need_phi = max(2 * band_beta + 1, q * band_beta + L_K + 1)
    if grid.n_theta < need_theta or grid.n_phi < need_phi:
        raise ResolutionError(
            f"grid {grid.shape} too coarse for q={q} at band {band_beta}: "
            f"need n_theta >= {need_theta}, n_phi >= {need_phi}"
        )


def build_gjq(spec, w, k, q, grid, seed, replicates=None, ts=None, stream=0, out_grid=None):
    """Smoothed Hermite field g_{j;q} and its unit-variance version.

    Pipeline: sample T, filter by the needlet window, synthesize, apply
    H_q to the normalized values, analyze up to L_K, filter by kappa and
    synthesize. The last synthesis goes to ``out_grid`` when given (g is
    band-limited, so this is exact evaluation at more points, not
    interpolation). Returns ``(g, g_normalized)``.
    """
    band = w.ell_hi
    _check_gjq_grid(grid, band, q, k.L_K)
    if ts is None:
        ts = transformed_spectrum(q, w, spec, k)
    sigma = math.sqrt(field_variance(w, spec))
    alm = sample_alm(spec, band, seed, replicates, stream)
    beta = synthesize(harmonic_filter(alm, w), grid)
    h = pointwise_hermite(beta, q, sigma)
    g_alm = harmonic_filter(analyze(h, k.L_K), k.array())
    g = synthesize(g_alm, grid if out_grid is None else out_grid)
    sd = math.sqrt(ts.variance())
    return g, PixelField(g.grid, g.values / sd, g.band)


def build_surrogate(ts, grid, seed, replicates=None, normalize=True, stream=1):
    """Gaussian field with angular power spectrum ``ts.values``.

    With ``normalize`` the field is divided by its theoretical standard
    deviation (zero spectra are left unscaled).
    """
    L = ts.L_K
    vals = np.clip(np.asarray(ts.values, dtype=float), 0.0, None)
    spec = _MonopoleSpectrum(vals)
    alm = sample_alm(spec, L, seed, replicates, stream)
    f = synthesize(alm, grid)
    var = ts.variance()
    if normalize and var > 0:
        return PixelField(grid, f.values / math.sqrt(var), f.band)
    return f


class _MonopoleSpectrum:
    """Spectrum adapter that keeps the ell = 0 entry (transformed spectra have one)."""

    def __init__(self, values):
        self._values = values
        self.ellmax = len(values) - 1

    def array(self, ellmax=None):
        ellmax = self.ellmax if ellmax is None else ellmax
        return self._values[: ellmax + 1].copy()


# ---------------------------------------------------------------------------
# export


def write_text(fld, path):
    """Write (theta, phi, value) rows for a single field."""
    if fld.values.ndim != 2:
        raise ValueError("text export takes a single field")
    grid = fld.grid
    th, ph = np.meshgrid(grid.theta, grid.phi, indexing="ij")
    np.savetxt(path, np.column_stack([th.ravel(), ph.ravel(), fld.values.ravel()]), fmt="%.17g",
               header="theta phi value")


def write_binary(fld, path):
    """Binary layout: b"SPHF", uint32 n_theta, uint32 n_phi, float64 row-major values (LE)."""
    if fld.values.ndim != 2:
        raise ValueError("binary export takes a single field")
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<II", fld.grid.n_theta, fld.grid.n_phi))
        fh.write(np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def read_binary(path):
    with open(path, "rb") as fh:
        head = fh.read(12)
        if head[:4] != BINARY_MAGIC:
            raise ValueError("not a sphere field file")
        n_theta, n_phi = struct.unpack("<II", head[4:])
        vals = np.frombuffer(fh.read(), dtype="<f8")
    if vals.size != n_theta * n_phi:
        raise ValueError("truncated sphere field file")
    return PixelField(make_grid(n_theta, n_phi), vals.reshape(n_theta, n_phi).copy())
