"""Monte Carlo harnesses: empirical LKCs, sup probabilities, node cumulants.

Replicate r of every experiment is generated from its own counter-based
stream keyed by (seed, stream, r), so results do not depend on how the
replicates are split across workers. Chunks are reduced in replicate
order. The worker count comes from the ``workers`` argument or the
``SPHERELKC_WORKERS`` environment variable (default 1, in-process).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import kstat

from . import __version__
from .geometry import boundary_length, euler_characteristic, excursion_area, field_sup
from .lkc import excursion_prob_approx, expected_lkc_eigen, expected_lkc_gaussian
from .simsphere import (
    PixelField,
    _check_gjq_grid,
    _lambda_table,
    build_gjq,
    build_surrogate,
    harmonic_filter,
    make_grid,
    sample_alm,
    synthesize,
)
from .specfun import hermite, legendre_table
from .spectra import (
    NeedletWindow,
    PowerSpectrum,
    SmoothingKernel,
    field_variance,
    lambda_jq,
    transformed_spectrum,
)

__all__ = [
    "McConfig",
    "McRow",
    "McReport",
    "CumulantTable",
    "config_hash",
    "mc_validate_lkcs",
    "mc_sup_probability",
    "mc_cumulant_decay",
    "node_cumulants_exact",
    "WORKERS_ENV",
]

WORKERS_ENV = "SPHERELKC_WORKERS"
CSV_COLUMNS = ("level", "stat", "mc_mean", "mc_se", "theory", "z")
MIN_REPLICATES = 50
MIN_CUMULANT_REPLICATES = 5000
CHUNK = 50


def config_hash(d):
    """Short SHA-256 of the canonical JSON form of a plain dict."""
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _workers(workers):
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


@dataclass(frozen=True)
class McConfig:
    """One field model plus its simulation and estimation grids.

    ``kind`` is "subordinated" for g_{j;q} (q = 1 with a flat kernel over
    the window support is the needlet field itself) or "eigen" for a
    unit-variance random eigenfunction of degree ``ell``.
    ``geometry_grid`` defaults to the simulation grid refined to at least
    8 rings per unit of band limit; the field is re-synthesized there.
    """

    spectrum: PowerSpectrum | None = None
    window: NeedletWindow | None = None
    kernel: SmoothingKernel | None = None
    q: int = 2
    grid: tuple = (96, 193)
    geometry_grid: tuple | None = None
    kind: str = "subordinated"
    ell: int | None = None

    def __post_init__(self):
        if self.kind == "eigen":
            if self.ell is None or self.ell < 1:
                raise ValueError("eigen model needs a degree ell >= 1")
        elif self.kind == "subordinated":
            if self.spectrum is None or self.window is None or self.kernel is None:
                raise ValueError("subordinated model needs spectrum, window and kernel")
        else:
            raise ValueError(f"unknown field kind {self.kind!r}")

    @property
    def band(self):
        """Band limit of the field handed to the estimators."""
        return self.ell if self.kind == "eigen" else self.kernel.L_K

    def geometry_shape(self):
        if self.geometry_grid is not None:
            return tuple(self.geometry_grid)
        n = max(self.grid[0], 8 * self.band)
        return (n, max(self.grid[1], 2 * n + 1))

    def to_dict(self):
        d = {"kind": self.kind, "grid": list(self.grid), "geometry_grid": list(self.geometry_shape())}
        if self.kind == "eigen":
            d["ell"] = int(self.ell)
        else:
            d.update(
                spectrum=self.spectrum.to_dict(),
                window=self.window.to_dict(),
                kernel=self.kernel.to_dict(),
                q=int(self.q),
            )
        return d


@dataclass
class _Model:
    """Per-process state derived from a config (spectra, grids, lambda)."""

    config: McConfig

    def __post_init__(self):
        c = self.config
        self.grid = make_grid(*c.grid)
        self.geo = make_grid(*c.geometry_shape())
        if c.kind == "eigen":
            cl = np.zeros(c.ell + 1)
            cl[c.ell] = 4.0 * math.pi / (2 * c.ell + 1)
            self.eigen_spec = PowerSpectrum.tabulated(cl)
            self.ts = None
            self.lam = c.ell * (c.ell + 1) / 2.0
        else:
            self.ts = transformed_spectrum(c.q, c.window, c.spectrum, c.kernel)
            self.lam = lambda_jq(self.ts)

    def theory(self, u):
        c = self.config
        if c.kind == "eigen":
            return expected_lkc_eigen(u, c.ell)
        return expected_lkc_gaussian(u, self.lam)

    def fields(self, seed, reps):
        """Normalized subordinated field and its Gaussian surrogate on the geometry grid."""
        c = self.config
        if c.kind == "eigen":
            alm = sample_alm(self.eigen_spec, c.ell, seed, reps)
            return synthesize(alm, self.geo), None
        _, g = build_gjq(c.spectrum, c.window, c.kernel, c.q, self.grid, seed, reps, ts=self.ts, out_grid=self.geo)
        f = build_surrogate(self.ts, self.geo, seed, reps)
        return g, f


def _chunks(replicates):
    return [(a, min(a + CHUNK, replicates)) for a in range(0, replicates, CHUNK)]


def _map_chunks(fn, args, replicates, workers):
    jobs = [args + (a, b) for a, b in _chunks(replicates)]
    n = _workers(workers)
    if n == 1 or len(jobs) == 1:
        return [fn(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, *zip(*jobs)))


def _per_field_stats(fld, grid, levels):
    """(n_rep, n_levels, 3) array of (EC, boundary length, area) and the sups."""
    vals = fld.values
    out = np.empty((vals.shape[0], len(levels), 3))
    sups = np.empty((vals.shape[0], 2))
    for r in range(vals.shape[0]):
        one = PixelField(grid, vals[r], fld.band)
        for i, u in enumerate(levels):
            out[r, i] = (
                euler_characteristic(one, grid, u),
                boundary_length(one, grid, u),
                excursion_area(one, grid, u),
            )
        sups[r] = field_sup(one, grid)
    return out, sups


def _lkc_chunk(config, levels, seed, surrogate, a, b):
    model = _Model(config)
    g, f = model.fields(seed, range(a, b))
    gs = _per_field_stats(g, model.geo, levels)
    fs = _per_field_stats(f, model.geo, levels) if (surrogate and f is not None) else None
    return gs, fs


def _sup_chunk(config, seed, surrogate, a, b):
    model = _Model(config)
    g, f = model.fields(seed, range(a, b))
    gs = np.array([field_sup(PixelField(model.geo, v, g.band), model.geo) for v in g.values])
    fs = None
    if surrogate and f is not None:
        fs = np.array([field_sup(PixelField(model.geo, v, f.band), model.geo) for v in f.values])
    return gs, fs


@dataclass(frozen=True)
class McRow:
    level: float
    stat: str
    mc_mean: float
    mc_se: float
    theory: float
    z: float


def _z(mean, se, theory):
    d = mean - theory
    if se > 0:
        return d / se
    return 0.0 if d == 0 else math.copysign(math.inf, d)


def _fmt(x):
    if isinstance(x, str):
        return x
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


@dataclass
class McReport:
    """Rows of (level, stat, mc_mean, mc_se, theory, z) plus a run manifest.

    Stat names are ``<field>.<functional>`` with field ``g`` (subordinated),
    ``f`` (Gaussian surrogate) or ``diff`` (g minus f, pooled SE, theory 0).
    ``samples`` keeps the raw per-replicate values and is not serialized.
    """

    rows: list
    replicates: int
    seed: int
    manifest: dict
    warnings: list = field(default_factory=list)
    samples: dict = field(default_factory=dict, repr=False)

    def row(self, stat, level):
        for r in self.rows:
            if r.stat == stat and r.level == level:
                return r
        raise KeyError((stat, level))

    def to_csv(self):
        """CSV text: a ``#`` manifest line, header, rows; LF line endings."""
        buf = io.StringIO()
        m = self.manifest
        buf.write(f"# spherelkc {m['version']} config_hash={m['config_hash']}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([_fmt(r.level), r.stat, _fmt(r.mc_mean), _fmt(r.mc_se), _fmt(r.theory), _fmt(r.z)])
        return buf.getvalue()

    def manifest_text(self):
        lines = [f"{k} = {v}" for k, v in sorted(self.manifest.items())]
        lines += [f"warning = {w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def _manifest(config, replicates, seed, extra=None):
    d = config.to_dict()
    m = {
        "version": __version__,
        "config_hash": config_hash(d),
        "seed": int(seed),
        "replicates": int(replicates),
        "grid": "x".join(map(str, config.grid)),
        "geometry_grid": "x".join(map(str, config.geometry_shape())),
    }
    m.update(extra or {})
    return m


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    return x.mean(axis=0), x.std(axis=0, ddof=1) / math.sqrt(n)


_STATS = ("euler", "boundary", "area")


def mc_validate_lkcs(config, levels, replicates, seed, surrogate=True, workers=None):
    """Empirical (EC, boundary length, area) of the normalized field against theory.

    The theory is the Gaussian closed form at lambda_{j;q} (or ell(ell+1)/2
    for eigenfunctions); ``diff`` rows compare g with its surrogate.
    """
    if replicates < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} replicates, got {replicates}")
    levels = [float(u) for u in levels]
    model = _Model(config)
    _check_estimator_grid(model)
    parts = _map_chunks(_lkc_chunk, (config, levels, int(seed), surrogate), replicates, workers)
    g = np.concatenate([p[0][0] for p in parts])
    samples = {"g": g, "g.sup": np.concatenate([p[0][1] for p in parts])}
    has_f = parts[0][1] is not None
    if has_f:
        samples["f"] = np.concatenate([p[1][0] for p in parts])
        samples["f.sup"] = np.concatenate([p[1][1] for p in parts])

    rows = []
    gm, gse = _mean_se(g)
    if has_f:
        fm, fse = _mean_se(samples["f"])
    for i, u in enumerate(levels):
        th = model.theory(u)
        theory = (th.l0, th.boundary_length, th.l2)
        for s, name in enumerate(_STATS):
            rows.append(McRow(u, f"g.{name}", gm[i, s], gse[i, s], theory[s], _z(gm[i, s], gse[i, s], theory[s])))
        if has_f:
            for s, name in enumerate(_STATS):
                rows.append(McRow(u, f"f.{name}", fm[i, s], fse[i, s], theory[s], _z(fm[i, s], fse[i, s], theory[s])))
            for s, name in enumerate(_STATS):
                d = gm[i, s] - fm[i, s]
                se = math.hypot(gse[i, s], fse[i, s])
                rows.append(McRow(u, f"diff.{name}", d, se, 0.0, _z(d, se, 0.0)))
    man = _manifest(config, replicates, seed, {"lambda": repr(model.lam), "levels": ",".join(map(repr, levels))})
    return McReport(rows, int(replicates), int(seed), man, [], samples)


def _check_estimator_grid(model):
    n = model.geo.n_theta
    if n < 4 * model.config.band:
        raise ValueError(
            f"geometry grid with {n} rings is below 4 x band limit {model.config.band}"
        )


def mc_sup_probability(config, levels, replicates, seed, surrogate=True, workers=None):
    """Empirical P(sup > u) for the normalized field against the excursion approximation.

    ``g.sup_prob`` uses the refined sup, ``g.sup_prob_grid`` the raw grid
    maximum (the gap between them is the reported refinement effect).
    """
    if replicates < MIN_REPLICATES:
        raise ValueError(f"need at least {MIN_REPLICATES} replicates, got {replicates}")
    levels = [float(u) for u in levels]
    model = _Model(config)
    parts = _map_chunks(_sup_chunk, (config, int(seed), surrogate), replicates, workers)
    gs = np.concatenate([p[0] for p in parts])
    samples = {"g.sup": gs}
    has_f = parts[0][1] is not None
    if has_f:
        samples["f.sup"] = np.concatenate([p[1] for p in parts])

    def prob(x, u):
        p = float(np.mean(x > u))
        return p, math.sqrt(p * (1.0 - p) / len(x))

    rows = []
    for u in levels:
        theory = excursion_prob_approx(u, model.lam)
        p, se = prob(gs[:, 0], u)
        rows.append(McRow(u, "g.sup_prob", p, se, theory, _z(p, se, theory)))
        pg, seg = prob(gs[:, 1], u)
        rows.append(McRow(u, "g.sup_prob_grid", pg, seg, theory, _z(pg, seg, theory)))
        if has_f:
            pf, sef = prob(samples["f.sup"][:, 0], u)
            rows.append(McRow(u, "f.sup_prob", pf, sef, theory, _z(pf, sef, theory)))
            se_d = math.hypot(se, sef)
            rows.append(McRow(u, "diff.sup_prob", p - pf, se_d, 0.0, _z(p - pf, se_d, 0.0)))
    man = _manifest(config, replicates, seed, {"lambda": repr(model.lam), "levels": ",".join(map(repr, levels))})
    return McReport(rows, int(replicates), int(seed), man, [], samples)


# ---------------------------------------------------------------------------
# fourth cumulant at a node


def _node_grid(band, q, L_K):
    n_t = max(band + 1, (q * band + L_K + 2) // 2)
    n_p = max(2 * band + 1, q * band + L_K + 1)
    return make_grid(n_t, n_p)


def _node_weights(grid, k):
    """w_n K(x0 . y_n) with x0 the first node of the middle ring."""
    xyz = grid.unit_vectors()
    i0 = grid.n_theta // 2
    x0 = xyz[i0, 0]
    t = np.clip(xyz @ x0, -1.0, 1.0)
    L = k.L_K
    coef = (2 * np.arange(L + 1) + 1) / (4.0 * math.pi) * k.array()
    K = np.tensordot(coef, legendre_table(L, t.ravel()), axes=(0, 0)).reshape(t.shape)
    return grid.weights * K


def _node_chunk(spec, window, kernel, q, seed, a, b):
    band = window.ell_hi
    grid = _node_grid(band, q, kernel.L_K)
    W = _node_weights(grid, kernel)
    sigma = math.sqrt(field_variance(window, spec))
    alm = sample_alm(spec, band, seed, range(a, b))
    beta = synthesize(harmonic_filter(alm, window), grid)
    h = hermite(int(q), beta.values / sigma)
    return np.tensordot(h, W, axes=([-2, -1], [0, 1]))


def node_cumulants_exact(spec, window, kernel, q=2):
    """Exact (variance, normalized cum3, normalized cum4) of g_{j;q} at a point.

    For q = 2 the value is a quadratic form z' M z in the Gaussian
    coefficients, so kappa_p = 2^(p-1) (p-1)! tr(M^p). At the north pole
    the kernel is zonal and M splits into one block per order m.
    """
    if q == 1:
        ts = transformed_spectrum(1, window, spec, kernel)
        return ts.variance(), 0.0, 0.0
    if q != 2:
        raise ValueError("exact node cumulants are implemented for q in {1, 2}")
    L = window.ell_hi
    LK = kernel.L_K
    cl = spec.array(L) * window.b2_array(L) / field_variance(window, spec)
    grid = make_grid((2 * L + LK) // 2 + 2, 3)
    lam = _lambda_table(grid, L)
    wt = grid.ring_weights * 2.0 * math.pi
    coef = (2 * np.arange(LK + 1) + 1) / (4.0 * math.pi) * kernel.array()
    K = coef @ legendre_table(LK, grid.cos_theta)
    c = np.sqrt(cl)
    tr = np.zeros(5)
    for m in range(L + 1):
        phi = lam[:, m:, m] * c[None, m:]
        ev = np.linalg.eigvalsh(phi.T @ (phi * (wt * K)[:, None]))
        mult = 1 if m == 0 else 2
        for p in (2, 3, 4):
            tr[p] += mult * np.sum(ev**p)
    var = 2.0 * tr[2]
    return var, 8.0 * tr[3] / var**1.5, 48.0 * tr[4] / var**2


def _cum4(x):
    k2 = kstat(x, 2)
    return kstat(x, 4) / (k2 * k2)


@dataclass
class CumulantTable:
    """Per-j normalized fourth cumulants at one node and their log-slope."""

    B: float
    rows: list  # dicts: j, replicates, variance, cum4, cum4_se, cum4_exact
    slope: float
    replicates: int
    seed: int
    manifest: dict
    warnings: list = field(default_factory=list)

    @property
    def slope_per_logB(self):
        """Slope of log|cum4| against j log B; the asymptotic rate is -2."""
        return self.slope / math.log(self.B)

    def to_csv(self):
        buf = io.StringIO()
        m = self.manifest
        buf.write(f"# spherelkc {m['version']} config_hash={m['config_hash']}\n")
        w = csv.writer(buf, lineterminator="\n")
        cols = ("j", "replicates", "variance", "cum4", "cum4_se", "cum4_exact")
        w.writerow(cols)
        for r in self.rows:
            w.writerow([r["j"], r["replicates"]] + [_fmt(r[c]) for c in cols[2:]])
        return buf.getvalue()

    def manifest_text(self):
        lines = [f"{k} = {v}" for k, v in sorted(self.manifest.items())]
        lines.append(f"slope = {self.slope!r}")
        lines.append(f"slope_per_logB = {self.slope_per_logB!r}")
        lines += [f"warning = {w}" for w in self.warnings]
        return "\n".join(lines) + "\n"


def mc_cumulant_decay(spectrum, B, kernel, q, j_list, replicates, seed, groups=20, workers=None):
    """Normalized fourth cumulant of g_{j;q}(x0) over replicates, for each j.

    The node value is computed as the quadrature sum of w_n K(x0 . y_n)
    H_q(beta_n), which equals the pipeline value exactly. The standard error
    is a delete-one-group jackknife over ``groups`` contiguous blocks.
    """
    j_list = [int(j) for j in j_list]
    if len(j_list) < 3:
        raise ValueError("need at least three scales")
    warnings = []
    if replicates < MIN_CUMULANT_REPLICATES:
        warnings.append(
            f"replicates={replicates} below {MIN_CUMULANT_REPLICATES}: fourth-moment estimates unstable"
        )
    rows = []
    for j in j_list:
        w = NeedletWindow(B, j)
        _check_gjq_grid(_node_grid(w.ell_hi, q, kernel.L_K), w.ell_hi, q, kernel.L_K)
        parts = _map_chunks(_node_chunk, (spectrum, w, kernel, q, int(seed)), replicates, workers)
        x = np.concatenate(parts)
        est = _cum4(x)
        blocks = np.array_split(np.arange(len(x)), groups)
        jack = np.array([_cum4(np.delete(x, blk)) for blk in blocks])
        se = math.sqrt((groups - 1) / groups * np.sum((jack - jack.mean()) ** 2))
        exact = node_cumulants_exact(spectrum, w, kernel, q)[2] if q in (1, 2) else math.nan
        rows.append(
            {"j": j, "replicates": len(x), "variance": float(kstat(x, 2)), "cum4": float(est),
             "cum4_se": se, "cum4_exact": float(exact)}
        )
    y = np.log(np.abs([r["cum4"] for r in rows]))
    slope = float(np.polyfit(j_list, y, 1)[0])
    d = {"spectrum": spectrum.to_dict(), "B": float(B), "kernel": kernel.to_dict(), "q": int(q), "j": j_list}
    man = {
        "version": __version__,
        "config_hash": config_hash(d),
        "seed": int(seed),
        "replicates": int(replicates),
    }
    return CumulantTable(float(B), rows, slope, int(replicates), int(seed), man, warnings)
