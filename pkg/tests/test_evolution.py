import numpy as np
import pytest

from lsamodal.errors import EvolutionError, ShapeError
from lsamodal.evolution import (
    EvolutionConfig,
    constant_velocity,
    curvature_velocity,
    double_well_ratio,
    evolve,
    evolve_step,
    regularizer,
)
from lsamodal.fields import gradient_magnitude
from lsamodal.sdf import mask_from_phi, signed_distance, zero_crossings


def analytic_disk(r, n=64, cx=None, cy=None):
    cx = (n - 1) / 2.0 if cx is None else cx
    cy = (n - 1) / 2.0 if cy is None else cy
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    return r - np.hypot(xx - cx, yy - cy), cx, cy


def measured_radius(phi, cx, cy):
    pts = zero_crossings(phi)
    return float(np.hypot(pts[:, 0] - cx, pts[:, 1] - cy).mean())


def components(mask):
    # 4-connected component count by flood fill (no external dependency)
    m = mask.astype(bool).copy()
    count = 0
    h, w = m.shape
    for sy in range(h):
        for sx in range(w):
            if not m[sy, sx]:
                continue
            count += 1
            stack = [(sy, sx)]
            m[sy, sx] = False
            while stack:
                y, x = stack.pop()
                for ny, nx in ((y - 1, x), (y + 1, x), (y, x - 1), (y, x + 1)):
                    if 0 <= ny < h and 0 <= nx < w and m[ny, nx]:
                        m[ny, nx] = False
                        stack.append((ny, nx))
    return count


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------


def test_config_defaults_and_validation():
    cfg = EvolutionConfig()
    assert cfg.steps == 3 and cfg.dt == 1.0 and cfg.mu == 0.2
    with pytest.raises(ValueError):
        EvolutionConfig(steps=0)
    with pytest.raises(ValueError):
        EvolutionConfig(dt=0.0)
    with pytest.raises(ValueError):
        EvolutionConfig(mu=-0.1)
    with pytest.raises(ValueError):
        EvolutionConfig(heaviside_eps=0.0)


def test_config_stability_bound():
    with pytest.raises(ValueError, match="stability"):
        EvolutionConfig(dt=1.0, mu=0.25)
    with pytest.raises(ValueError, match="stability"):
        EvolutionConfig(dt=2.0, mu=0.2)
    EvolutionConfig(dt=1.0, mu=0.24)  # just inside the bound


# ---------------------------------------------------------------------------
# double-well ratio and regularizer
# ---------------------------------------------------------------------------


def test_double_well_ratio_values():
    s = np.array([0.0, 0.5, 1.0, 2.0, 4.0])
    d = double_well_ratio(s)
    assert d[0] == pytest.approx(1.0)  # analytic limit at s=0
    assert d[1] == pytest.approx(np.sin(np.pi) / np.pi if False else 0.0, abs=1e-12)
    assert d[2] == pytest.approx(0.0, abs=1e-12)  # minimum of the well at s=1
    assert d[3] == pytest.approx(0.5)
    assert d[4] == pytest.approx(0.75)
    # first piece is sin(2 pi s)/(2 pi s)
    s2 = np.array([0.25, 0.75])
    assert np.allclose(double_well_ratio(s2), np.sin(2 * np.pi * s2) / (2 * np.pi * s2))


def test_regularizer_unit_ramp_is_zero():
    xs = np.arange(40, dtype=np.float64)[None, :] * np.ones((40, 1))
    R = regularizer(xs)
    assert np.abs(R).max() < 1e-9


def test_regularizer_scaled_ramps_are_exact_fixed_points():
    # any affine field has spatially constant gradient, so the double-well
    # flux is a constant vector field and its divergence vanishes identically;
    # scaled ramps are therefore exact fixed points of the regularization
    xs = np.arange(40, dtype=np.float64)[None, :] * np.ones((40, 1))
    for c in (2.0, 0.3):
        R = regularizer(c * xs)
        assert np.abs(R).max() < 1e-12
        phi = c * xs
        for _ in range(50):
            phi = phi + 0.2 * regularizer(phi)
        assert np.allclose(phi, c * xs, atol=1e-10)


def test_regularizer_restores_sdf_slope_on_curved_geometry():
    # where the geometry is genuinely curved, regularization-only iteration
    # moves |grad phi| toward 1 from both sides
    yy, xx = np.mgrid[0:64, 0:64].astype(np.float64)
    disk = ((xx - 32) ** 2 + (yy - 32) ** 2 <= 144).astype(np.uint8)
    sdf = signed_distance(disk)
    inner = (slice(4, -4), slice(4, -4))
    for scale in (1.6, 0.55):
        phi = scale * sdf
        err0 = np.abs(gradient_magnitude(phi)[inner] - 1.0).mean()
        for _ in range(120):
            phi = phi + 0.2 * regularizer(phi)
        err1 = np.abs(gradient_magnitude(phi)[inner] - 1.0).mean()
        assert err1 < err0


def test_regularizer_preserves_zero_level():
    yy, xx = np.mgrid[0:64, 0:64].astype(np.float64)
    disk = ((xx - 32) ** 2 + (yy - 32) ** 2 <= 100).astype(np.uint8)
    phi0 = signed_distance(disk)
    phis = evolve(phi0, constant_velocity(0.0), EvolutionConfig(steps=10))
    m0 = mask_from_phi(phi0)
    mT = mask_from_phi(phis[-1])
    sym = np.logical_xor(m0, mT).sum()
    assert sym <= 0.02 * m0.sum()


# ---------------------------------------------------------------------------
# evolve_step
# ---------------------------------------------------------------------------


def test_step_identity():
    rng = np.random.default_rng(0)
    phi = rng.standard_normal((16, 16))
    cfg = EvolutionConfig(mu=0.0)
    out = evolve_step(phi, np.zeros_like(phi), cfg)
    assert np.array_equal(out, phi)


def test_step_input_untouched():
    phi, cx, cy = analytic_disk(10)
    snap = phi.copy()
    evolve_step(phi, np.ones_like(phi), EvolutionConfig())
    assert np.array_equal(phi, snap)


def test_step_disk_shift_outward():
    phi, cx, cy = analytic_disk(10)
    cfg = EvolutionConfig(steps=1, dt=0.5, mu=0.0)
    out = evolve_step(phi, np.full_like(phi, -1.0), cfg)
    assert measured_radius(out, cx, cy) == pytest.approx(10.5, abs=0.1)


def test_step_disk_shift_inward():
    phi, cx, cy = analytic_disk(10)
    cfg = EvolutionConfig(steps=1, dt=0.5, mu=0.0)
    out = evolve_step(phi, np.full_like(phi, 1.0), cfg)
    assert measured_radius(out, cx, cy) == pytest.approx(9.5, abs=0.1)


def test_step_shape_mismatch():
    with pytest.raises(ShapeError):
        evolve_step(np.zeros((8, 8)), np.zeros((8, 9)), EvolutionConfig())


def test_step_nonfinite_detection():
    phi = np.zeros((8, 8))
    v = np.full((8, 8), 1e308)
    with pytest.raises(EvolutionError):
        evolve_step(phi, v * 1e10, EvolutionConfig(mu=0.0))


# ---------------------------------------------------------------------------
# evolve
# ---------------------------------------------------------------------------


def test_evolve_zero_provider_returns_input_copies():
    phi, _, _ = analytic_disk(8)
    cfg = EvolutionConfig(steps=3, mu=0.0)
    outs = evolve(phi, constant_velocity(0.0), cfg)
    assert len(outs) == 3
    for o in outs:
        assert np.array_equal(o, phi)


def test_evolve_cumulative_shift():
    phi, cx, cy = analytic_disk(6)
    cfg = EvolutionConfig(steps=3, dt=1.0, mu=0.0)
    outs = evolve(phi, constant_velocity(-1.0), cfg)
    assert measured_radius(outs[-1], cx, cy) == pytest.approx(9.0, abs=0.15)


def test_evolve_record_intermediate_false():
    phi, _, _ = analytic_disk(6)
    cfg = EvolutionConfig(steps=3, mu=0.0, record_intermediate=False)
    outs = evolve(phi, constant_velocity(-0.5), cfg)
    full = evolve(phi, constant_velocity(-0.5), EvolutionConfig(steps=3, mu=0.0))
    assert len(outs) == 1
    assert np.array_equal(outs[0], full[-1])


def test_evolve_provider_failure_names_step():
    calls = {"n": 0}

    def flaky(phi, ctx):
        if calls["n"] == 2:
            raise RuntimeError("boom")
        calls["n"] += 1
        return np.zeros_like(phi)

    phi, _, _ = analytic_disk(6)
    with pytest.raises(EvolutionError, match="step 2"):
        evolve(phi, flaky, EvolutionConfig(steps=5, mu=0.0))


def test_evolve_provider_bad_shape():
    phi, _, _ = analytic_disk(6)
    with pytest.raises(ShapeError):
        evolve(phi, lambda p, c: np.zeros((4, 4)), EvolutionConfig(steps=1, mu=0.0))


def test_evolve_determinism():
    phi, _, _ = analytic_disk(9)
    cfg = EvolutionConfig(steps=5)
    a = evolve(phi, curvature_velocity(), cfg)
    b = evolve(phi, curvature_velocity(), cfg)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


def test_curvature_flow_tracks_shrinking_circle():
    phi, cx, cy = analytic_disk(10)
    cfg = EvolutionConfig(steps=1, dt=0.5, mu=0.2)
    prov = curvature_velocity()
    t = 0.0
    for _ in range(40):
        phi = evolve(phi, prov, cfg)[-1]
        t += 0.5
        r_true = np.sqrt(100.0 - 2.0 * t)
        if r_true > 4.0:
            r_meas = measured_radius(phi, cx, cy)
            assert abs(r_meas - r_true) / r_true < 0.05


def test_direction_convention_negative_grows():
    phi, _, _ = analytic_disk(8)
    areas = [mask_from_phi(phi).sum()]
    cfg = EvolutionConfig(steps=1, dt=1.0, mu=0.0)
    f = phi
    for _ in range(5):
        f = evolve(f, constant_velocity(-1.0), cfg)[-1]
        areas.append(mask_from_phi(f).sum())
    assert all(b > a for a, b in zip(areas, areas[1:]))
    g = phi
    areas_up = [mask_from_phi(g).sum()]
    for _ in range(5):
        g = evolve(g, constant_velocity(1.0), cfg)[-1]
        areas_up.append(mask_from_phi(g).sum())
    assert all(b <= a for a, b in zip(areas_up, areas_up[1:]))


def test_constant_zero_velocity_keeps_mask():
    phi, _, _ = analytic_disk(7)
    cfg = EvolutionConfig(steps=4, mu=0.0)
    outs = evolve(phi, constant_velocity(0.0), cfg)
    assert np.array_equal(mask_from_phi(outs[-1]), mask_from_phi(phi))


def test_topology_merge_two_disks():
    yy, xx = np.mgrid[0:64, 0:64].astype(np.float64)
    d1 = 6.0 - np.hypot(xx - 20.0, yy - 32.0)
    d2 = 6.0 - np.hypot(xx - 44.0, yy - 32.0)
    phi = np.maximum(d1, d2)
    assert components(mask_from_phi(phi)) == 2
    cfg = EvolutionConfig(steps=1, dt=1.0, mu=0.0)
    merged = False
    for _ in range(10):
        phi = evolve(phi, constant_velocity(-1.0), cfg)[-1]
        if components(mask_from_phi(phi)) == 1:
            merged = True
            break
    assert merged


def test_gradient_stability_classical_providers():
    phi0, _, _ = analytic_disk(10)
    inner = (slice(2, -2), slice(2, -2))
    for prov in (constant_velocity(-1.0), constant_velocity(1.0), curvature_velocity()):
        phis = evolve(phi0, prov, EvolutionConfig(steps=10))
        gm = gradient_magnitude(phis[-1])
        assert np.abs(gm[inner] - 1.0).mean() < 0.25
