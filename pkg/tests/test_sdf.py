import numpy as np
import pytest

from lsamodal.errors import MaskError, ShapeError
from lsamodal.fields import gradient_magnitude
from lsamodal.sdf import (
    as_mask,
    exact_edt,
    mask_from_phi,
    signed_distance,
    smooth_dirac,
    smooth_heaviside,
    zero_crossings,
)
from lsamodal.sdf import _envelope_sq


def brute_edt(mask):
    m = np.asarray(mask, dtype=bool)
    ys, xs = np.nonzero(m)
    fy, fx = np.mgrid[0 : m.shape[0], 0 : m.shape[1]]
    d2 = (fy[..., None] - ys) ** 2 + (fx[..., None] - xs) ** 2
    return np.sqrt(d2.min(axis=-1).astype(np.float64))


def test_edt_row_by_inspection():
    # two identical rows stand in for the 1D case (min mask dims are 2x2)
    m = np.array([[0, 0, 1, 0, 0], [0, 0, 1, 0, 0]], dtype=np.uint8)
    d = exact_edt(m)
    assert np.array_equal(d[0], [2, 1, 0, 1, 2])
    assert np.array_equal(d[1], [2, 1, 0, 1, 2])


def test_edt_center_pixel_corner_distance():
    m = np.zeros((3, 3), dtype=np.uint8)
    m[1, 1] = 1
    d = exact_edt(m)
    assert d[0, 0] == pytest.approx(np.sqrt(2.0), abs=1e-12)
    assert d[1, 1] == 0.0
    assert d[0, 1] == 1.0


def test_edt_all_zero_raises():
    with pytest.raises(MaskError):
        exact_edt(np.zeros((4, 4), dtype=np.uint8))


def test_edt_fuzz_against_brute_force():
    rng = np.random.default_rng(123)
    for _ in range(1000):
        h = int(rng.integers(2, 17))
        w = int(rng.integers(2, 17))
        m = (rng.random((h, w)) < rng.uniform(0.05, 0.6)).astype(np.uint8)
        if not m.any():
            m[rng.integers(0, h), rng.integers(0, w)] = 1
        d = exact_edt(m)
        assert np.allclose(d, brute_edt(m), atol=1e-12)


def test_edt_wide_grid_envelope_path():
    # width > 128 exercises the per-row parabola envelope
    rng = np.random.default_rng(5)
    m = (rng.random((4, 150)) < 0.08).astype(np.uint8)
    m[2, 77] = 1
    assert np.allclose(exact_edt(m), brute_edt(m), atol=1e-12)


def test_envelope_matches_broadcast_row():
    rng = np.random.default_rng(9)
    f = rng.uniform(0.0, 40.0, size=33)
    f[rng.random(33) < 0.3] = np.inf
    f[4] = 0.0
    q = np.arange(33, dtype=np.float64)
    ref = np.min(f[None, :] + (q[:, None] - q[None, :]) ** 2, axis=1)
    assert np.allclose(_envelope_sq(f), ref, atol=1e-12)


def test_signed_distance_row_example():
    m = np.array([[0, 1, 1, 0], [0, 1, 1, 0]], dtype=np.uint8)
    phi = signed_distance(m)
    assert np.allclose(phi[0], [-0.5, 0.5, 0.5, -0.5])
    assert np.allclose(phi[1], [-0.5, 0.5, 0.5, -0.5])


def test_signed_distance_disk_gradient_near_one():
    yy, xx = np.mgrid[0:32, 0:32].astype(np.float64)
    disk = ((xx - 16) ** 2 + (yy - 16) ** 2 <= 64).astype(np.uint8)
    phi = signed_distance(disk)
    gm = gradient_magnitude(phi)
    d_contour = np.abs(phi)
    sel = (d_contour >= 2.0) & np.pad(np.ones((28, 28), bool), 2)
    assert np.all(gm[sel] >= 0.95) and np.all(gm[sel] <= 1.05)


def test_signed_distance_round_trip_and_sign():
    rng = np.random.default_rng(77)
    for _ in range(200):
        h = int(rng.integers(3, 20))
        w = int(rng.integers(3, 20))
        m = (rng.random((h, w)) < 0.5).astype(np.uint8)
        if not m.any() or m.all():
            continue
        phi = signed_distance(m)
        assert np.array_equal(mask_from_phi(phi), m)
        assert np.all(np.sign(phi) == 2.0 * m - 1.0)
        assert np.abs(phi).min() >= 0.5


def test_signed_distance_uniform_raises():
    with pytest.raises(MaskError):
        signed_distance(np.ones((4, 4), dtype=np.uint8))
    with pytest.raises(MaskError):
        signed_distance(np.zeros((4, 4), dtype=np.uint8))


def test_signed_distance_lipschitz_property():
    rng = np.random.default_rng(3)
    m = (rng.random((24, 24)) < 0.3).astype(np.uint8)
    m[0, 0] = 1
    m[5, 5] = 0
    phi = signed_distance(m)
    for _ in range(500):
        y1, x1, y2, x2 = rng.integers(0, 24, size=4)
        lhs = abs(phi[y1, x1] - phi[y2, x2])
        assert lhs <= np.hypot(y1 - y2, x1 - x2) + 1.0 + 1e-9


def test_mask_from_phi_examples():
    assert not mask_from_phi(np.full((3, 3), -1.0)).any()
    row = np.arange(10, dtype=np.float64) - 4.5
    phi = np.stack([row, row])
    expect = np.array([0, 0, 0, 0, 0, 1, 1, 1, 1, 1], dtype=np.uint8)
    assert np.array_equal(mask_from_phi(phi)[0], expect)
    # ties at exactly zero go to background
    assert not mask_from_phi(np.zeros((2, 2))).any()


def test_as_mask_validation():
    with pytest.raises(ShapeError):
        as_mask(np.array([[0, 2], [1, 0]]))
    with pytest.raises(ShapeError):
        as_mask(np.array([[0.5, 0.0], [1.0, 0.0]]))
    ok = as_mask(np.array([[0, 1], [1, 0]], dtype=np.int64))
    assert ok.dtype == np.uint8


def test_smooth_heaviside_examples():
    assert smooth_heaviside(np.zeros((2, 2)), 0.7)[0, 0] == 0.5
    z = np.linspace(-20, 20, 41).reshape(1, -1).repeat(2, axis=0)
    h = smooth_heaviside(z, 1.5)
    assert np.allclose(h + smooth_heaviside(-z, 1.5), 1.0, atol=1e-15)
    assert smooth_heaviside(np.full((2, 2), 1.5), 1.5)[0, 0] == pytest.approx(0.75, abs=1e-12)
    assert np.all(h > 0.0) and np.all(h < 1.0)
    assert np.all(np.diff(h[0]) > 0.0)  # strictly monotone in z


def test_smooth_heaviside_eps_validation():
    with pytest.raises(ValueError):
        smooth_heaviside(np.zeros((2, 2)), 0.0)
    with pytest.raises(ValueError):
        smooth_dirac(np.zeros((2, 2)), -0.5)


def test_smooth_dirac_examples():
    assert smooth_dirac(np.zeros((2, 2)), 1.0)[0, 0] == pytest.approx(1.0 / np.pi, abs=1e-12)
    z = np.linspace(-10, 10, 81)
    f = np.stack([z, z])
    assert np.allclose(smooth_dirac(f, 1.5), smooth_dirac(-f, 1.5), atol=1e-15)


def test_smooth_dirac_matches_heaviside_derivative():
    z = np.linspace(-10.0, 10.0, 201)
    f = np.stack([z, z])
    step = 1e-6
    fd = (smooth_heaviside(f + step, 1.5) - smooth_heaviside(f - step, 1.5)) / (2 * step)
    an = smooth_dirac(f, 1.5)
    rel = np.abs(fd - an) / np.abs(an)
    assert rel.max() < 1e-6


def test_zero_crossings_circle_radius():
    yy, xx = np.mgrid[0:64, 0:64].astype(np.float64)
    phi = 10.0 - np.hypot(xx - 32.0, yy - 32.0)
    pts = zero_crossings(phi)
    r = np.hypot(pts[:, 0] - 32.0, pts[:, 1] - 32.0)
    assert abs(r.mean() - 10.0) < 0.05


def test_zero_crossings_exact_zero_pixels():
    phi = np.array([[1.0, 0.0, -1.0], [1.0, 0.0, -1.0]])
    pts = zero_crossings(phi)
    # the exact-zero column must appear as crossing points
    assert any(p[0] == 1.0 for p in pts)
