import numpy as np
import pytest

from orsim.channels_frequency import (FrequencyFeatureConfig, HarmonicResponder,
                                      build_kernels, complex_gradient,
                                      fourier_orders, frequency_channel_layout,
                                      harmonic_response, invariant_features,
                                      ConfigError)


def small_cfg(m=2, sigma=3):
    return FrequencyFeatureConfig(m=m, sigma=sigma)


def test_config_defaults_and_validation():
    cfg = FrequencyFeatureConfig()
    assert cfg.radii == (0, 6, 12, 18, 24)
    with pytest.raises(ConfigError):
        FrequencyFeatureConfig(m=0)
    with pytest.raises(ConfigError):
        FrequencyFeatureConfig(sigma=2)
    with pytest.raises(ConfigError):
        FrequencyFeatureConfig(radii=(1, 2, 3))
    with pytest.raises(ConfigError):
        FrequencyFeatureConfig(families=("F1", "F9"))


def test_complex_gradient_of_plane_wave():
    yy, xx = np.mgrid[0:12, 0:12].astype(np.float64)
    d = complex_gradient(0.25 * xx + 0.5 * yy)
    interior = d[1:-1, 1:-1]
    assert np.allclose(interior.real, 0.25)
    assert np.allclose(interior.imag, 0.5)


def test_fourier_orders_phase_law():
    rng = np.random.default_rng(0)
    d = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    fks = fourier_orders(d, 3)
    mag = np.abs(d)
    theta = np.angle(d)
    for k in range(4):
        expect = mag * np.exp(-1j * k * theta)
        assert np.allclose(fks[k], expect)


def test_fourier_orders_zero_gradient_pixel():
    d = np.zeros((3, 3), dtype=np.complex128)
    d[1, 1] = 1.0 + 1.0j
    fks = fourier_orders(d, 2)
    assert fks[2][0, 0] == 0.0
    assert abs(np.abs(fks[2][1, 1]) - np.sqrt(2.0)) < 1e-12


def test_kernels_have_no_dc_for_nonzero_order():
    kernels = build_kernels(small_cfg(m=4, sigma=3))
    for (j, k), kern in kernels.items():
        if k != 0:
            assert abs(kern.taps.sum()) < 1e-14
        else:
            assert abs(kern.taps.sum() - 1.0) < 1e-12


def test_kernels_quarter_turn_covariance():
    # rotating the stencil grid by 90 degrees multiplies an order-k kernel
    # by exp(i * k * pi/2)
    kernels = build_kernels(small_cfg(m=3, sigma=3))
    for (j, k), kern in kernels.items():
        rotated = np.rot90(kern.taps)
        phase = np.exp(1j * k * np.pi / 2.0)
        assert np.allclose(rotated, kern.taps * phase, atol=1e-14)


def test_harmonic_response_on_impulse_recovers_kernel():
    kernels = build_kernels(small_cfg(m=1, sigma=3))
    kern = kernels[(1, 1)]
    half = kern.taps.shape[0] // 2
    field = np.zeros((25, 25), dtype=np.complex128)
    field[12, 12] = 1.0
    resp = harmonic_response(field, kern)
    # response(x) = sum_u field(x+u) conj(taps(u)); an impulse at the
    # center reproduces conj(taps) flipped
    patch = resp[12 - half:12 + half + 1, 12 - half:12 + half + 1]
    assert np.allclose(patch, np.conj(kern.taps)[::-1, ::-1], atol=1e-12)


def test_fft_path_matches_direct_path():
    rng = np.random.default_rng(1)
    cfg = small_cfg(m=2, sigma=3)
    kernels = build_kernels(cfg)
    field = rng.normal(size=(40, 37)) + 1j * rng.normal(size=(40, 37))
    responder = HarmonicResponder(kernels, field.shape)
    for key in [(0, 0), (2, -2), (4, 1)]:
        direct = harmonic_response(field, kernels[key])
        fast = responder.response(field, key)
        assert np.max(np.abs(direct - fast)) < 1e-12


def test_layout_is_deterministic_and_counts_match():
    cfg = FrequencyFeatureConfig(m=4, sigma=6)
    layout = frequency_channel_layout(cfg)
    names = [n for n, _ in layout]
    assert names == [n for n, _ in frequency_channel_layout(cfg)]
    n_f1 = 5 * 5
    n_f2 = 5 * 5 * 2
    n_f3 = 4 * (5 * 5 - 1) * 2
    assert len(layout) == n_f1 + n_f2 + n_f3
    assert names[0] == "f1:j0:k0"
    assert names[n_f1] == "f2:j0:k0:re"
    assert names[n_f1 + n_f2] == "f3:j0:k0:kp1:re"


def test_layout_respects_family_subset():
    cfg = FrequencyFeatureConfig(m=2, sigma=3, families=("F2",))
    layout = frequency_channel_layout(cfg)
    assert all(name.startswith("f2:") for name, _ in layout)


def _invariant_stack(img, cfg, kernels):
    d = complex_gradient(img)
    fks = fourier_orders(d, cfg.m)
    return invariant_features(fks, kernels, cfg)


def test_quarter_turn_invariance_of_all_channels():
    # exact (to numerical precision) invariance under a 90-degree rotation,
    # checked away from the reflect borders
    rng = np.random.default_rng(2)
    cfg = small_cfg(m=2, sigma=3)
    kernels = build_kernels(cfg)
    img = rng.random((65, 65))
    a = _invariant_stack(img, cfg, kernels)
    b = _invariant_stack(np.rot90(img).copy(), cfg, kernels)
    margin = 16
    for i in range(a.n_channels):
        rot_back = np.rot90(b.data[i], -1)
        err = np.abs(a.data[i] - rot_back)[margin:-margin, margin:-margin]
        assert err.max() < 1e-10, a.names[i]


def test_f3_channels_have_unit_or_zero_magnitude():
    rng = np.random.default_rng(3)
    cfg = FrequencyFeatureConfig(m=2, sigma=3, families=("F3",))
    kernels = build_kernels(cfg)
    stack = _invariant_stack(rng.random((48, 48)), cfg, kernels)
    # re/im pairs are consecutive in the layout
    for i in range(0, stack.n_channels, 2):
        mag = np.hypot(stack.data[i], stack.data[i + 1])
        ok = (np.abs(mag - 1.0) < 1e-9) | (mag < 1e-9)
        assert np.all(ok)


def _blob_image(n, seed):
    # smooth composite of isotropic bumps: band-limited enough that bilinear
    # rotation barely distorts it, yet with non-trivial gradient structure
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    img = np.zeros((n, n))
    for _ in range(6):
        bx = rng.uniform(0.25 * n, 0.75 * n)
        by = rng.uniform(0.25 * n, 0.75 * n)
        s = rng.uniform(8.0, 16.0)
        a = rng.uniform(0.3, 1.0)
        img += a * np.exp(-((xx - bx) ** 2 + (yy - by) ** 2) / (2 * s * s))
    return img


def _rotate_bilinear(img, angle_deg):
    n = img.shape[0]
    c = (n - 1) / 2.0
    yy, xx = np.mgrid[0:n, 0:n].astype(np.float64)
    ca, sa = np.cos(np.deg2rad(angle_deg)), np.sin(np.deg2rad(angle_deg))
    xs = ca * (xx - c) - sa * (yy - c) + c
    ys = sa * (xx - c) + ca * (yy - c) + c
    x0 = np.clip(np.floor(xs).astype(int), 0, n - 2)
    y0 = np.clip(np.floor(ys).astype(int), 0, n - 2)
    fx = np.clip(xs - x0, 0.0, 1.0)
    fy = np.clip(ys - y0, 0.0, 1.0)
    return (img[y0, x0] * (1 - fx) * (1 - fy) + img[y0, x0 + 1] * fx * (1 - fy)
            + img[y0 + 1, x0] * (1 - fx) * fy + img[y0 + 1, x0 + 1] * fx * fy)


def test_arbitrary_angle_invariance_at_center():
    # rotate by non-grid angles with bilinear resampling; the invariant
    # channel vector at the image center must agree to < 2% relative error
    cfg = small_cfg(m=2, sigma=6)
    kernels = build_kernels(cfg)
    n = 129
    base = _blob_image(n, seed=4)
    a = _invariant_stack(base, cfg, kernels)
    mid = n // 2
    va = a.data[:, mid, mid]
    for angle in (15.0, 30.0, 45.0, 60.0, 75.0):
        b = _invariant_stack(_rotate_bilinear(base, angle), cfg, kernels)
        vb = b.data[:, mid, mid]
        rel = np.linalg.norm(va - vb) / np.linalg.norm(va)
        assert rel < 0.02, (angle, rel)
