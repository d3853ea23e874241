import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from coordtune.modem import (
    constellation_moments,
    generate_symbols,
    ml_baseline_detect,
    onehot,
    qam_constellation,
    qpsk_ser_awgn,
    ser,
)


def test_qpsk_points():
    c = qam_constellation(4)
    expected = {complex(a, b) / math.sqrt(2) for a in (-1, 1) for b in (-1, 1)}
    assert len(c.points) == 4
    for p in c.points:
        assert min(abs(p - e) for e in expected) < 1e-15
    assert np.mean(np.abs(c.points) ** 2) == pytest.approx(1.0, abs=1e-15)


def test_16qam_energy_and_scale():
    c = qam_constellation(16)
    assert abs(np.mean(np.abs(c.points) ** 2) - 1.0) < 1e-12
    # unnormalised levels +-1, +-3 have mean |s|^2 = 10, so the scale is 1/sqrt(10)
    assert np.max(np.abs(c.points.real)) == pytest.approx(3 / math.sqrt(10), abs=1e-15)


def test_row_major_mapping():
    c = qam_constellation(16)
    s = math.sqrt(10)
    assert c.points[0] == pytest.approx(complex(-3, 3) / s)
    assert c.points[3] == pytest.approx(complex(3, 3) / s)
    assert c.points[15] == pytest.approx(complex(3, -3) / s)


def test_non_square_order_rejected():
    with pytest.raises(ValueError):
        qam_constellation(8)


def test_16qam_moments_against_exact_fractions():
    # brute force over the 16 unnormalised points with exact arithmetic
    pts = [(a, b) for a in (-3, -1, 1, 3) for b in (-3, -1, 1, 3)]
    e2 = Fraction(sum(a * a + b * b for a, b in pts), 16)
    mu4 = Fraction(sum((a * a + b * b) ** 2 for a, b in pts), 16) / e2**2
    mu6 = Fraction(sum((a * a + b * b) ** 3 for a, b in pts), 16) / e2**3
    assert (mu4, mu6) == (Fraction(33, 25), Fraction(49, 25))  # 1.32, 1.96
    got = constellation_moments(qam_constellation(16))
    assert got[0] == pytest.approx(float(mu4), abs=1e-12)
    assert got[1] == pytest.approx(float(mu6), abs=1e-12)


def test_constant_modulus_and_jensen():
    assert constellation_moments(qam_constellation(4)) == pytest.approx((1.0, 1.0), abs=1e-12)
    for m in (4, 16, 64):
        assert constellation_moments(qam_constellation(m))[0] >= 1.0 - 1e-12


def test_onehot_row():
    assert onehot(np.array([3]), 4).tolist() == [[0, 0, 0, 1]]


def test_onehot_index_point_round_trip():
    rng = np.random.default_rng(1)
    b = generate_symbols(rng, 16, 500)
    assert np.array_equal(np.argmax(b.onehot, axis=1), b.indices)
    c = qam_constellation(16)
    assert np.array_equal(ml_baseline_detect(b.mapped, c), b.indices)


def test_symbol_frequencies_uniform():
    n, m = 100_000, 16
    b = generate_symbols(np.random.default_rng(7), m, n)
    counts = np.bincount(b.indices, minlength=m)
    sd = math.sqrt(n * (1 / m) * (1 - 1 / m))
    assert np.all(np.abs(counts - n / m) <= 3 * sd)
    assert stats.chisquare(counts).pvalue > 1e-3


def test_same_seed_same_batch():
    a = generate_symbols(np.random.default_rng(3), 16, 100)
    b = generate_symbols(np.random.default_rng(3), 16, 100)
    assert np.array_equal(a.indices, b.indices)


def test_ser_counting():
    x = np.arange(8)
    assert ser(x, x) == 0.0
    assert ser(x, x + 1) == 1.0
    y = x.copy()
    y[:4] += 1
    assert ser(y, x) == 0.5
    assert ser(x, y) == ser(y, x)
    with pytest.raises(ValueError):
        ser(x, x[:3])


def test_ml_detect_noiseless_and_ties():
    c = qam_constellation(4)
    assert np.array_equal(ml_baseline_detect(c.points, c), np.arange(4))
    # origin is equidistant from all four points: lowest index wins
    assert ml_baseline_detect(np.array([0j]), c)[0] == 0
    # midpoint between index 0 (-1+1j) and index 1 (1+1j) on the real axis
    assert ml_baseline_detect(np.array([1j / math.sqrt(2)]), c)[0] == 0


def test_qpsk_closed_form_value():
    # Q(sqrt(10)) = 7.82701129e-4 from the standard normal tail
    q = stats.norm.sf(math.sqrt(10.0))
    assert qpsk_ser_awgn(10.0) == pytest.approx(2 * q - q * q, rel=1e-12)


def test_ml_awgn_qpsk_matches_closed_form():
    n = 100_000
    rng = np.random.default_rng(11)
    c = qam_constellation(4)
    b = generate_symbols(rng, 4, n, c)
    sigma = math.sqrt(0.1 / 2)
    r = b.mapped + sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    p = qpsk_ser_awgn(10.0)
    got = ser(ml_baseline_detect(r, c), b.indices)
    assert abs(got - p) <= 3 * math.sqrt(p * (1 - p) / n)
