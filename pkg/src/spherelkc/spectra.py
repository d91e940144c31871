"""Power spectra, needlet windows, smoothing kernels and transformed spectra."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln

from .wigner import MAX_ORDER, UnsupportedOrderError

__all__ = [
    "PowerSpectrum",
    "NeedletWindow",
    "SmoothingKernel",
    "TransformedSpectrum",
    "DegenerateSpectrumError",
    "TruncationError",
    "spectrum_eval",
    "needlet_multiplier",
    "field_variance",
    "spectral_moment",
    "transformed_spectrum",
    "lambda_jq",
    "load_tabulated",
    "wigner3j_zero_table",
]

FOUR_PI = 4.0 * math.pi


class DegenerateSpectrumError(ValueError):
    """A spectral ratio has a vanishing denominator."""


class TruncationError(ValueError):
    """A window reaches multipoles beyond the tabulated spectrum."""


# ---------------------------------------------------------------------------
# angular power spectra


@dataclass(frozen=True)
class PowerSpectrum:
    """Angular power spectrum C_ell on 1 <= ell <= ellmax.

    ``kind`` is one of ``"sachs-wolfe"`` (C = G ell^-alpha), ``"bardeen"``
    (C = G / (ell (ell + 1))) or ``"tabulated"`` (``values[ell]``, the
    ell = 0 entry is ignored). The monopole is always zero.
    """

    kind: str
    ellmax: int
    G: float = 1.0
    alpha: float = 2.0
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("sachs-wolfe", "bardeen", "tabulated"):
            raise ValueError(f"unknown spectrum model {self.kind!r}")
        if self.ellmax < 1:
            raise ValueError("ellmax must be positive")
        if self.kind == "tabulated":
            if len(self.values) < self.ellmax + 1:
                raise ValueError("tabulated spectrum shorter than ellmax + 1")
            if any(not math.isfinite(v) or v < 0 for v in self.values):
                raise ValueError("tabulated spectrum must be finite and non-negative")
        elif not (self.G > 0 and math.isfinite(self.G)):
            raise ValueError("amplitude G must be positive")
        if not math.isfinite(self.alpha):
            raise ValueError("alpha must be finite")

    @classmethod
    def sachs_wolfe(cls, G=1.0, alpha=2.0, ellmax=1024):
        return cls("sachs-wolfe", int(ellmax), G=float(G), alpha=float(alpha))

    @classmethod
    def bardeen(cls, ellmax=1024, G=1.0):
        return cls("bardeen", int(ellmax), G=float(G))

    @classmethod
    def tabulated(cls, values, ellmax=None):
        values = tuple(float(v) for v in values)
        return cls("tabulated", len(values) - 1 if ellmax is None else int(ellmax), values=values)

    def __call__(self, ell):
        return spectrum_eval(self, ell)

    def array(self, ellmax=None):
        """C_0..C_ellmax as an array; C_0 = 0 and entries past ``self.ellmax`` raise."""
        ellmax = self.ellmax if ellmax is None else int(ellmax)
        if ellmax > self.ellmax:
            raise TruncationError(f"spectrum defined up to {self.ellmax}, requested {ellmax}")
        ell = np.arange(ellmax + 1, dtype=float)
        out = np.zeros(ellmax + 1)
        if self.kind == "sachs-wolfe":
            out[1:] = self.G * ell[1:] ** (-self.alpha)
        elif self.kind == "bardeen":
            out[1:] = self.G / (ell[1:] * (ell[1:] + 1.0))
        else:
            out[1:] = self.values[1 : ellmax + 1]
        return out

    def to_dict(self):
        d = {"model": self.kind, "ellmax": self.ellmax}
        if self.kind == "tabulated":
            d["values"] = list(self.values)
        else:
            d["G"] = self.G
            if self.kind == "sachs-wolfe":
                d["alpha"] = self.alpha
        return d


def spectrum_eval(spec, ell):
    """C_ell for 1 <= ell <= spec.ellmax."""
    if int(ell) != ell or not 1 <= ell <= spec.ellmax:
        raise ValueError(f"multipole {ell!r} outside [1, {spec.ellmax}]")
    ell = int(ell)
    if spec.kind == "sachs-wolfe":
        return spec.G * ell ** (-spec.alpha)
    if spec.kind == "bardeen":
        return spec.G / (ell * (ell + 1.0))
    return spec.values[ell]


def load_tabulated(path, ellmax=None):
    """Read a two-column (ell, C_ell) text file into a tabulated spectrum.

    Missing multipoles are filled with zero.
    """
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError("tabulated spectrum file must have two columns")
    ells = data[:, 0]
    if np.any(ells != np.round(ells)) or np.any(ells < 0):
        raise ValueError("first column must hold non-negative integer multipoles")
    top = int(ells.max())
    values = np.zeros(top + 1)
    values[ells.astype(int)] = data[:, 1]
    return PowerSpectrum.tabulated(values, ellmax=ellmax)


# ---------------------------------------------------------------------------
# needlet window

_PROFILE_POINTS = 10_000


@lru_cache(maxsize=1)
def _bump_cdf():
    # normalized integral of exp(-1/(1 - t^2)) over [-1, u]
    t = np.linspace(-1.0, 1.0, _PROFILE_POINTS + 1)
    f = np.zeros_like(t)
    inner = np.abs(t) < 1.0
    f[inner] = np.exp(-1.0 / (1.0 - t[inner] ** 2))
    # trapezoid is spectrally accurate: every derivative vanishes at +-1
    h = t[1] - t[0]
    cum = np.zeros_like(t)
    cum[1:] = np.cumsum(0.5 * h * (f[1:] + f[:-1]))
    cum /= cum[-1]
    return PchipInterpolator(t, np.clip(cum, 0.0, 1.0), extrapolate=False)


def _phi_profile(t, B):
    """Smooth low-pass profile: 1 on [0, 1/B], decreasing to 0 at 1."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    out[t <= 1.0 / B] = 1.0
    mid = (t > 1.0 / B) & (t < 1.0)
    if np.any(mid):
        arg = 1.0 - 2.0 * B / (B - 1.0) * (t[mid] - 1.0 / B)
        out[mid] = _bump_cdf()(np.clip(arg, -1.0, 1.0))
    return out


@dataclass(frozen=True)
class NeedletWindow:
    """Needlet weight b(ell / B^j), supported on B^(j-1) < ell < B^(j+1)."""

    B: float
    j: int

    def __post_init__(self):
        if not self.B > 1.0:
            raise ValueError("bandwidth B must exceed 1")
        if int(self.j) != self.j or self.j < 0:
            raise ValueError("scale j must be a non-negative integer")

    @property
    def ell_lo(self):
        """Smallest multipole with a non-zero weight."""
        return int(math.floor(self.B ** (self.j - 1))) + 1

    @property
    def ell_hi(self):
        """Largest multipole with a non-zero weight."""
        return int(math.ceil(self.B ** (self.j + 1))) - 1

    def b2(self, ell):
        """Squared window b^2(ell / B^j); exactly zero outside the support."""
        xi = np.asarray(ell, dtype=float) / self.B**self.j
        return np.maximum(_phi_profile(xi / self.B, self.B) - _phi_profile(xi, self.B), 0.0)

    def __call__(self, ell):
        return np.sqrt(self.b2(ell))

    def b2_array(self, ellmax):
        return self.b2(np.arange(ellmax + 1))

    def to_dict(self):
        return {"B": self.B, "j": self.j}


def needlet_multiplier(w, ell):
    """b(ell / B^j) for a scalar multipole."""
    return float(w(ell))


# ---------------------------------------------------------------------------
# smoothing kernel


@dataclass(frozen=True)
class SmoothingKernel:
    """Zonal kernel with Legendre coefficients kappa(0..L_K)."""

    kappa: tuple

    def __post_init__(self):
        if len(self.kappa) == 0:
            raise ValueError("empty kernel")
        object.__setattr__(self, "kappa", tuple(float(k) for k in self.kappa))
        if not all(math.isfinite(k) for k in self.kappa):
            raise ValueError("kernel coefficients must be finite")

    @property
    def L_K(self):
        return len(self.kappa) - 1

    @classmethod
    def flat(cls, L_K, monopole=False):
        """kappa = 1 on 1..L_K; the monopole weight is 0 unless requested."""
        return cls((1.0 if monopole else 0.0,) + (1.0,) * int(L_K))

    def array(self, ellmax=None):
        ellmax = self.L_K if ellmax is None else int(ellmax)
        out = np.zeros(ellmax + 1)
        n = min(ellmax, self.L_K) + 1
        out[:n] = self.kappa[:n]
        return out

    def to_dict(self):
        return {"L_K": self.L_K, "kappa": list(self.kappa)}


# ---------------------------------------------------------------------------
# moments of the needlet field


def _beta_weights(w, spec):
    """Multipoles and weights b^2 (2 ell + 1) C_ell / (4 pi) over the support."""
    if w.ell_hi > spec.ellmax:
        raise TruncationError(
            f"window support reaches ell={w.ell_hi} beyond spectrum ellmax={spec.ellmax}"
        )
    ell = np.arange(max(w.ell_lo, 1), w.ell_hi + 1)
    wt = w.b2(ell) * (2 * ell + 1) * spec.array(w.ell_hi)[ell] / FOUR_PI
    return ell, wt


def field_variance(w, spec):
    """Variance of the needlet field, sum of b^2 (2 ell + 1) C_ell / (4 pi)."""
    _, wt = _beta_weights(w, spec)
    return math.fsum(wt)


def spectral_moment(w, spec, induced=False):
    """Second spectral moment lambda_j of the normalized needlet field.

    With ``induced=True`` returns 4 pi lambda_j, the area of the sphere in
    the metric induced by the field.
    """
    ell, wt = _beta_weights(w, spec)
    den = math.fsum(wt)
    if den <= 0.0:
        raise DegenerateSpectrumError("needlet field has zero variance")
    lam = math.fsum(wt * ell * (ell + 1) / 2.0) / den
    return FOUR_PI * lam if induced else lam


# ---------------------------------------------------------------------------
# 3j tables for the spectrum convolutions


def wigner3j_zero_table(l1, l2, l3):
    """Vectorized (l1 l2 l3; 0 0 0) over broadcastable integer arrays."""
    l1, l2, l3 = np.broadcast_arrays(
        np.asarray(l1, dtype=np.int64), np.asarray(l2, dtype=np.int64), np.asarray(l3, dtype=np.int64)
    )
    J = l1 + l2 + l3
    ok = (np.abs(l1 - l2) <= l3) & (l3 <= l1 + l2) & (J % 2 == 0)
    g = J // 2
    with np.errstate(invalid="ignore"):
        a, b, c = (np.where(ok, x, 0) for x in (J - 2 * l1, J - 2 * l2, J - 2 * l3))
        gg = np.where(ok, g, 0)
        logv = (
            gammaln(gg + 1.0)
            - gammaln(a / 2 + 1.0)
            - gammaln(b / 2 + 1.0)
            - gammaln(c / 2 + 1.0)
            + 0.5 * (gammaln(a + 1.0) + gammaln(b + 1.0) + gammaln(c + 1.0) - gammaln(np.where(ok, J, 0) + 2.0))
        )
    sign = np.where((g % 2) == 1, -1.0, 1.0)
    return np.where(ok, sign * np.exp(logv), 0.0)


def _gaunt_square(lam_max, ell_src, ell_max_out):
    """T[l_out, lam, l_src] = (2 l_out + 1) 3j(lam, l_src, l_out; 0 0 0)^2."""
    lo = np.arange(ell_max_out + 1)[:, None, None]
    la = np.arange(lam_max + 1)[None, :, None]
    ls = np.asarray(ell_src)[None, None, :]
    w = wigner3j_zero_table(la, ls, lo)
    return (2 * lo + 1) * w * w


# ---------------------------------------------------------------------------
# transformed spectra


@dataclass(frozen=True)
class TransformedSpectrum:
    """Angular power spectrum C_{ell;j,q} of the smoothed Hermite field, ell = 0..L_K."""

    q: int
    values: np.ndarray = field(repr=False)
    window: NeedletWindow | None = None
    spectrum: PowerSpectrum | None = None
    kernel: SmoothingKernel | None = None

    @property
    def L_K(self):
        return len(self.values) - 1

    @property
    def j(self):
        return None if self.window is None else self.window.j

    def variance(self):
        """Pointwise variance sum (2 ell + 1) C_{ell;j,q} / (4 pi), monopole included."""
        ell = np.arange(self.L_K + 1)
        return math.fsum((2 * ell + 1) * self.values / FOUR_PI)

    def covariance(self, cos_d):
        """Covariance at angular separation arccos(cos_d)."""
        from .specfun import legendre_table

        ell = np.arange(self.L_K + 1)
        P = legendre_table(self.L_K, cos_d)
        coef = (2 * ell + 1) * self.values / FOUR_PI
        return np.tensordot(coef, P, axes=1)


def _normalized_beta(w, spec):
    ell, wt = _beta_weights(w, spec)
    den = math.fsum(wt)
    if den <= 0.0:
        raise DegenerateSpectrumError("needlet field has zero variance")
    return ell, wt / den


def _powspe(ell, v, L_K):
    """q = 2 by direct double sum: 2 (4 pi) sum v1 v2 3j(ell, l1, l2; 000)^2."""
    out = np.zeros(L_K + 1)
    l1 = ell[:, None]
    l2 = ell[None, :]
    vv = v[:, None] * v[None, :]
    for L in range(L_K + 1):
        w3 = wigner3j_zero_table(L, l1, l2)
        out[L] = 2.0 * FOUR_PI * math.fsum((vv * w3 * w3).ravel())
    return out


def _chain_distribution(ell, v, q):
    """D_q(L) = sum_{l_1..l_q} C(l_1..l_q, L) prod v(l_k), L = 0..q ell_max."""
    top = int(ell[-1])
    dist = np.zeros(top + 1)
    dist[ell] = v
    for k in range(2, q + 1):
        T = _gaunt_square(k * top - top, ell, k * top)
        # new[L] = sum_{lam, l} dist[lam] v[l] T[L, lam, l]
        dist = np.einsum("a,b,lab->l", dist, v, T)
    return dist


def transformed_spectrum(q, w, spec, k, method="auto"):
    """Spectrum of g_{j;q} = K * H_q(beta_j / sd), for ell = 0..L_K.

    ``method`` selects the q = 2 route: ``"direct"`` uses the explicit 3j
    double sum, ``"chain"`` the generalized Clebsch-Gordan convolution.
    """
    if int(q) != q or not 1 <= q <= MAX_ORDER:
        raise UnsupportedOrderError(f"Hermite order must be in [1, {MAX_ORDER}], got {q!r}")
    if k is None or len(k.kappa) == 0:
        raise ValueError("empty kernel")
    q = int(q)
    L_K = k.L_K
    kap2 = k.array() ** 2
    ell, v = _normalized_beta(w, spec)
    Ls = np.arange(L_K + 1)

    if q == 1:
        vals = np.zeros(L_K + 1)
        inside = ell[ell <= L_K]
        vals[inside] = v[ell <= L_K] * FOUR_PI / (2 * inside + 1)
    elif q == 2 and method in ("auto", "direct"):
        vals = _powspe(ell, v, L_K)
    else:
        dist = _chain_distribution(ell, v, q)
        vals = np.zeros(L_K + 1)
        n = min(L_K, len(dist) - 1) + 1
        vals[:n] = dist[:n]
        vals *= math.factorial(q) * FOUR_PI / (2 * Ls + 1)
    return TransformedSpectrum(q, kap2 * vals, window=w, spectrum=spec, kernel=k)


def lambda_jq(ts):
    """Second spectral moment of the unit-variance version of g_{j;q}.

    Both sums run over 1 <= ell <= L_K.
    """
    ell = np.arange(1, ts.L_K + 1)
    wt = (2 * ell + 1) / FOUR_PI * ts.values[1:]
    den = math.fsum(wt)
    if not den > 0.0:
        raise DegenerateSpectrumError("transformed spectrum vanishes on ell >= 1")
    return math.fsum(wt * ell * (ell + 1) / 2.0) / den
