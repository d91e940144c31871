import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spherelkc.geometry import (
    ExcursionSummary,
    boundary_length,
    complement_area,
    euler_characteristic,
    excursion_area,
    field_sup,
    summarize,
)
from spherelkc.simsphere import PixelField, make_grid, sample_alm, synthesize
from spherelkc.spectra import PowerSpectrum


def zonal(grid, fn):
    return PixelField(grid, np.repeat(fn(grid.cos_theta)[:, None], grid.n_phi, axis=1))


def tilted(grid, n):
    """Linear field n . x, whose level sets are circles."""
    return PixelField(grid, grid.unit_vectors() @ np.asarray(n, dtype=float))


GRID = make_grid(48, 97)
Y10 = zonal(GRID, lambda x: math.sqrt(3 / (4 * math.pi)) * x)
Y20 = zonal(GRID, lambda x: 3 * x * x - 1)


def test_equator():
    assert boundary_length(Y10, GRID, 0.0) == pytest.approx(2 * math.pi, rel=5e-3)
    assert euler_characteristic(Y10, GRID, 0.0) == 1
    assert excursion_area(Y10, GRID, 0.0) == pytest.approx(2 * math.pi, rel=1e-12)


def test_caps_and_band():
    top = Y10.values.max()
    assert euler_characteristic(Y10, GRID, 0.5 * top) == 1
    assert euler_characteristic(Y20, GRID, 1.0) == 2  # two polar caps
    assert euler_characteristic(Y20, GRID, -0.5) == 2  # complement is a band, caps glued
    band = zonal(GRID, lambda x: 1 - 3 * x * x)
    assert euler_characteristic(band, GRID, 0.0) == 0  # an annulus
    # cap of angular radius t0 around the pole: length 2 pi sin t0
    c = 0.6
    assert boundary_length(zonal(GRID, lambda x: x), GRID, c) == pytest.approx(2 * math.pi * 0.8, rel=1e-3)


def test_extreme_levels():
    f = synthesize(sample_alm(PowerSpectrum.sachs_wolfe(1, 2, 20), 20, seed=9), GRID)
    lo, hi = f.values.min(), f.values.max()
    s = summarize(f, GRID, lo - 1)
    assert (s.area, s.boundary_length, s.euler_char) == (pytest.approx(4 * math.pi), 0.0, 2)
    s = summarize(f, GRID, hi + 1)
    assert (s.area, s.boundary_length, s.euler_char) == (0.0, 0.0, 0)
    assert isinstance(s, ExcursionSummary)
    assert s.lkc == (0.0, 0.0, 0.0)


def test_constant_field_and_ties():
    const = PixelField(GRID, np.full(GRID.shape, 0.5))
    assert boundary_length(const, GRID, 0.2) == 0.0
    assert boundary_length(const, GRID, 0.8) == 0.0
    # the level itself counts as excursed
    assert excursion_area(const, GRID, 0.5) == pytest.approx(4 * math.pi)
    assert euler_characteristic(const, GRID, 0.5) == 2


@given(st.integers(0, 10_000), st.floats(-2.5, 2.5))
@settings(max_examples=30, deadline=None)
def test_area_additivity(seed, u):
    f = synthesize(sample_alm(PowerSpectrum.sachs_wolfe(1, 2, 20), 12, seed=seed), make_grid(16, 33))
    f = PixelField(f.grid, f.values / f.values.std())
    g = f.grid
    total = excursion_area(f, g, u) + complement_area(f, g, u)
    assert total == pytest.approx(4 * math.pi, rel=1e-13)
    assert 0 <= excursion_area(f, g, u) <= 4 * math.pi
    assert boundary_length(f, g, u) >= 0


def test_boundary_length_converges():
    n_vec = (0.2, 0.0, 1.0)
    c = 0.37
    true = 2 * math.pi * math.sqrt(1 - c * c / 1.04)
    errs = []
    for n in (16, 32, 64):
        g = make_grid(n, 2 * n + 1)
        errs.append(abs(boundary_length(tilted(g, n_vec), g, c) - true))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    # at least first order; linear interpolation plus chords gives about two
    assert np.all(orders >= 0.8)


def test_ec_stable_under_refinement():
    alm = sample_alm(PowerSpectrum.sachs_wolfe(1, 2, 20), 10, seed=4)
    coarse, fine = make_grid(40, 81), make_grid(80, 161)
    fc, ff = synthesize(alm, coarse), synthesize(alm, fine)
    sd = fc.values.std()
    for u in (-1.0, 0.0, 0.7, 1.5):
        lv = u * sd
        ecs = {euler_characteristic(fld, fld.grid, lv + e) for fld in (fc, ff) for e in (-1e-9, 1e-9)}
        assert len(ecs) == 1


def test_sup_refinement():
    g = make_grid(24, 49)
    n_vec = np.array([math.sin(0.9) * math.cos(0.31), math.sin(0.9) * math.sin(0.31), math.cos(0.9)])
    f = tilted(g, n_vec)
    refined, raw = field_sup(f, g)
    assert raw <= refined <= 1.0 + 1e-12
    assert 1.0 - refined < 0.2 * (1.0 - raw)
    assert field_sup(f, g, refine=False) == (raw, raw)


def test_rejects_batches():
    with pytest.raises(ValueError):
        excursion_area(PixelField(GRID, np.zeros((2,) + GRID.shape)), GRID, 0.0)
