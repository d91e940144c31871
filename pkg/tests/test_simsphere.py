import math

import numpy as np
import pytest
from scipy.special import sph_harm_y

from spherelkc.simsphere import (
    HarmonicCoefficients,
    PixelField,
    ResolutionError,
    analyze,
    build_gjq,
    build_surrogate,
    harmonic_filter,
    make_grid,
    pointwise_hermite,
    read_binary,
    replicate_generator,
    sample_alm,
    synthesize,
    write_binary,
    write_text,
)
from spherelkc.spectra import NeedletWindow, PowerSpectrum, SmoothingKernel, transformed_spectrum

SW = PowerSpectrum.sachs_wolfe(1.0, 3.0, 200)


def single_mode(ellmax, ell, m, value=1.0):
    a = np.zeros((ellmax + 1, ellmax + 1), dtype=complex)
    a[ell, m] = value
    return HarmonicCoefficients(a)


def test_grid_basics():
    g = make_grid(16, 33)
    assert g.shape == (16, 33)
    assert g.weights.sum() == pytest.approx(4 * np.pi, rel=1e-14)
    assert np.all(np.diff(g.theta) > 0)
    xyz = g.unit_vectors()
    np.testing.assert_allclose(np.linalg.norm(xyz, axis=-1), 1.0, atol=1e-14)
    assert g.max_exact_degree == 31 and g.max_band == 15
    assert make_grid(16, 33) is g
    with pytest.raises(ValueError):
        make_grid(1, 5)


@pytest.mark.parametrize("ell,m", [(0, 0), (1, 0), (3, 2), (7, 7), (12, 5)])
def test_synthesis_matches_scipy(ell, m):
    g = make_grid(14, 29)
    th, ph = np.meshgrid(g.theta, g.phi, indexing="ij")
    y = sph_harm_y(ell, m, th, ph)
    # real field a Y + conj(a) Y^* for m > 0; Y itself for m = 0
    a = 0.3 - 0.7j if m else 1.0
    want = (a * y + np.conj(a * y)).real if m else y.real
    got = synthesize(single_mode(13, ell, m, a), g).values
    np.testing.assert_allclose(got, want, atol=1e-13)


def test_round_trip_and_parseval():
    g = make_grid(40, 81)
    alm = sample_alm(SW, 32, seed=3)
    f = synthesize(alm, g)
    back = analyze(f, 32)
    np.testing.assert_allclose(back.alm, alm.alm, atol=1e-12)
    norm2 = PixelField(g, f.values**2).integral()
    assert norm2 == pytest.approx(np.sum(alm.power() * (2 * np.arange(33) + 1)), rel=1e-12)


def test_resolution_errors():
    g = make_grid(8, 17)
    with pytest.raises(ResolutionError):
        synthesize(single_mode(8, 8, 0), g)
    f = synthesize(single_mode(7, 7, 0), g)
    analyze(f, 7)  # degree 14 <= 2 * 8 - 1
    with pytest.raises(ResolutionError):
        analyze(PixelField(g, f.values, 9), 7)


def test_sampling_is_deterministic_and_batch_invariant():
    a = sample_alm(SW, 20, seed=11, replicates=range(5))
    b = sample_alm(SW, 20, seed=11, replicates=3)
    np.testing.assert_array_equal(a.alm[3], b.alm)
    c = sample_alm(SW, 20, seed=11, replicates=[3, 4])
    np.testing.assert_array_equal(a.alm[3:5], c.alm)
    d = sample_alm(SW, 10, seed=11, replicates=3)
    np.testing.assert_array_equal(d.alm, b.alm[:11, :11])  # draws are ell-major
    e = sample_alm(SW, 20, seed=12, replicates=3)
    assert not np.allclose(e.alm, b.alm)
    assert replicate_generator(1, 2, 0).random() == replicate_generator(1, 2, 0).random()


def test_sampled_power_and_reality():
    alm = sample_alm(SW, 12, seed=5, replicates=range(2000))
    p = alm.power().mean(axis=0)
    cl = SW.array(12)
    se = cl * np.sqrt(2 / ((2 * np.arange(13) + 1) * 2000))
    assert np.all(np.abs(p[1:] - cl[1:]) < 4 * se[1:])
    assert np.all(alm.alm[..., 0, :] == 0)
    assert np.all(alm.alm[..., :, 0].imag == 0)
    one = alm[0]
    assert one.coefficient(3, -2) == pytest.approx(np.conj(one.coefficient(3, 2)))
    assert one.coefficient(3, -1) == pytest.approx(-np.conj(one.coefficient(3, 1)))
    with pytest.raises(IndexError):
        one.coefficient(3, 4)


def test_filter_and_hermite():
    alm = sample_alm(SW, 10, seed=1)
    f = harmonic_filter(alm, lambda l: (l >= 3).astype(float))
    assert np.all(f.alm[:3] == 0) and np.allclose(f.alm[3:], alm.alm[3:])
    g = harmonic_filter(alm, [1.0, 1.0], ellmax=14)
    assert g.ellmax == 14 and np.all(g.alm[2:] == 0)
    fld = PixelField(make_grid(6, 11), np.full((6, 11), 2.0), band=3)
    h = pointwise_hermite(fld, 2, 2.0)
    assert np.all(h.values == 0.0) and h.band == 6
    with pytest.raises(ValueError):
        pointwise_hermite(fld, 2, 0.0)


def test_gjq_variance_and_resynthesis():
    w = NeedletWindow(2, 3)
    k = SmoothingKernel.flat(6)
    ts = transformed_spectrum(2, w, SW, k)
    grid = make_grid(24, 49)
    g, gn = build_gjq(SW, w, k, 2, grid, seed=2, replicates=range(400), ts=ts)
    var = np.mean(g.values[:, 12, 0] ** 2)
    assert var == pytest.approx(ts.variance(), rel=0.25)
    fine = make_grid(30, 61)
    _, gf = build_gjq(SW, w, k, 2, grid, seed=2, replicates=range(3), ts=ts, out_grid=fine)
    back = analyze(gf, 6)
    again = analyze(PixelField(grid, gn.values[:3], 6), 6)
    np.testing.assert_allclose(back.alm, again.alm, atol=1e-12)
    with pytest.raises(ResolutionError):
        build_gjq(SW, w, k, 2, make_grid(10, 21), seed=0)


def test_surrogate():
    w = NeedletWindow(2, 3)
    k = SmoothingKernel.flat(6, monopole=True)
    ts = transformed_spectrum(2, w, SW, k)
    grid = make_grid(12, 25)
    f = build_surrogate(ts, grid, seed=4, replicates=range(3000))
    assert np.var(f.values[:, 5, 3]) == pytest.approx(1.0, abs=0.08)
    raw = build_surrogate(ts, grid, seed=4, replicates=range(2), normalize=False)
    np.testing.assert_allclose(raw.values / math.sqrt(ts.variance()), f.values[:2], atol=1e-12)


def test_export_round_trip(tmp_path):
    g = make_grid(6, 13)
    f = synthesize(sample_alm(SW, 5, seed=0), g)
    p = tmp_path / "f.bin"
    write_binary(f, p)
    raw = p.read_bytes()
    assert raw[:4] == b"SPHF" and len(raw) == 12 + 8 * 6 * 13
    back = read_binary(p)
    np.testing.assert_array_equal(back.values, f.values)
    assert back.grid is g
    t = tmp_path / "f.txt"
    write_text(f, t)
    rows = np.loadtxt(t)
    assert rows.shape == (78, 3)
    np.testing.assert_array_equal(rows[:, 2], f.values.ravel())
    p.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ValueError):
        read_binary(p)
