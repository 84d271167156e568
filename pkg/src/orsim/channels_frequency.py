"""Rotation-invariant frequency channels built from circular harmonics.

The pixel gradient is packed into a complex field d = dx + i*dy. Its
angular-order representations f_k = |d| * exp(-i*k*theta(d)) respond to an
image rotation by alpha with a pure phase factor exp(-i*k*alpha). Projecting
f_k onto annular harmonic kernels U_{j,k'} = P_j(r) * exp(i*k'*phi) shifts
the order by k', so products whose total order cancels are invariant under
rotation of the input. Three families are emitted:

  F1: annular smoothing of the gradient magnitude (order 0 by construction),
  F2: projection of f_k onto the opposite-order kernel (order k - k = 0),
  F3: phase-only coupling of the same-order projections at two neighbouring
      kernel radii (the common order cancels in the conjugate product).
"""

from dataclasses import dataclass, field

import numpy as np
from scipy import fft as spfft
from scipy.ndimage import correlate

from . import imaging

__all__ = [
    "FrequencyFeatureConfig",
    "HarmonicKernel",
    "complex_gradient",
    "fourier_orders",
    "build_kernels",
    "harmonic_response",
    "HarmonicResponder",
    "invariant_features",
    "frequency_channel_layout",
]

FAMILIES = ("F1", "F2", "F3")
SIGMA_GRID = range(3, 9)

# small-magnitude guard for the F3 phase normalization
F3_DELTA = 1e-8


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class FrequencyFeatureConfig:
    """Parameters of the harmonic channel family.

    m is the maximum angular order, sigma the half-width of the triangular
    radial profiles, radii the annulus centers (strictly increasing, starting
    at 0). Default radii are {0, sigma, ..., 4*sigma}.
    """

    m: int = 4
    sigma: int = 6
    radii: tuple = None
    families: tuple = FAMILIES

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.sigma not in SIGMA_GRID:
            raise ConfigError(f"sigma must be in {list(SIGMA_GRID)}")
        if self.radii is None:
            object.__setattr__(self, "radii",
                               tuple(j * self.sigma for j in range(5)))
        else:
            object.__setattr__(self, "radii", tuple(self.radii))
        if self.radii[0] != 0 or any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ConfigError("radii must be strictly increasing, starting at 0")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad:
            raise ConfigError(f"unknown families {bad}")
        object.__setattr__(self, "families", tuple(self.families))


@dataclass
class HarmonicKernel:
    """Annular stencil P_j(||x||) * exp(i*k*phi(x)) on the pixel grid."""

    j: int
    k: int
    sigma: float
    r: float
    taps: np.ndarray


def complex_gradient(img):
    """Gradient of the luminance channel as a complex field dx + i*dy.

    3-channel input is converted to LUV and the L plane is used; grayscale
    input is used as-is.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        lum = imaging.rgb_to_luv(img)[..., 0]
    else:
        lum = img
    dx, dy = imaging.gradients(lum)
    return dx + 1j * dy


def fourier_orders(d, m):
    """Angular-order fields f_k = |d| * exp(-i*k*theta(d)) for k = 0..m.

    f_0 is the (real-valued) magnitude; pixels with d = 0 give f_k = 0.
    """
    if m < 0:
        raise ValueError("m must be >= 0")
    d = np.asarray(d, dtype=np.complex128)
    mag = np.abs(d)
    safe = np.where(mag > 0, mag, 1.0)
    step = np.where(mag > 0, np.conj(d) / safe, 0.0)  # exp(-i*theta)
    fks = [mag.astype(np.complex128)]
    cur = fks[0]
    for _ in range(m):
        cur = cur * step
        fks.append(cur)
    return fks


def _radial_profile(r_center, sigma, rad):
    return np.maximum(0.0, 1.0 - np.abs(rad - r_center) / sigma)


def build_kernels(cfg):
    """Construct all annular harmonic stencils for orders k in {-m..m}.

    The radial profile is L1-normalized before angular modulation. For
    k != 0 the center tap is zeroed (the angle is undefined there) and any
    residual DC component is projected out against the radial profile, so
    the tap sum vanishes; the profile is 90-degree symmetric on the grid,
    which keeps the stencils exactly covariant under quarter-turn rotations.

    Returns a dict keyed by (j, k).
    """
    kernels = {}
    for j, r_center in enumerate(cfg.radii):
        half = int(r_center + cfg.sigma)
        coords = np.arange(-half, half + 1, dtype=np.float64)
        yy, xx = np.meshgrid(coords, coords, indexing="ij")
        rad = np.hypot(xx, yy)
        prof = _radial_profile(r_center, cfg.sigma, rad)
        total = prof.sum()
        if total <= 0:
            raise ConfigError(f"empty annulus for radius {r_center}, sigma {cfg.sigma}")
        prof = prof / total
        phi = np.arctan2(yy, xx)
        center = (half, half)
        for k in range(-cfg.m, cfg.m + 1):
            taps = prof * np.exp(1j * k * phi)
            if k != 0:
                taps[center] = 0.0
                dc = taps.sum()
                taps = taps - (dc / prof.sum()) * prof
            kernels[(j, k)] = HarmonicKernel(j=j, k=k, sigma=float(cfg.sigma),
                                             r=float(r_center), taps=taps)
    return kernels


def harmonic_response(field, kernel):
    """Project the field onto the kernel at every pixel (direct stencil path).

    response(x) = sum_u field(x + u) * conj(taps(u)), reflect borders. An
    order-k field and an order-k' kernel give an order-(k + k') response.
    """
    field = np.asarray(field, dtype=np.complex128)
    taps = np.conj(kernel.taps)
    rr = correlate(field.real, taps.real, mode="reflect") - \
        correlate(field.imag, taps.imag, mode="reflect")
    ii = correlate(field.real, taps.imag, mode="reflect") + \
        correlate(field.imag, taps.real, mode="reflect")
    return rr + 1j * ii


class HarmonicResponder:
    """FFT path for harmonic_response with cached kernel transforms.

    Matches the direct stencil path to ~1e-12; built once per (image shape,
    kernel set) and reused across fields.
    """

    def __init__(self, kernels, shape):
        self.shape = shape
        h, w = shape
        self.pad = max(k.taps.shape[0] // 2 for k in kernels.values())
        max_side = 2 * self.pad + 1
        self.fft_shape = (spfft.next_fast_len(h + 2 * self.pad + max_side - 1),
                          spfft.next_fast_len(w + 2 * self.pad + max_side - 1))
        self._kfft = {}
        self._offsets = {}
        for key, kern in kernels.items():
            g = np.conj(kern.taps)[::-1, ::-1]  # correlation as convolution
            self._kfft[key] = spfft.fft2(g, self.fft_shape)
            self._offsets[key] = kern.taps.shape[0] // 2
        self._field_cache = {}

    def _field_fft(self, field):
        key = id(field)
        cached = self._field_cache.get(key)
        if cached is not None and cached[0] is field:
            return cached[1]
        padded = np.pad(field, self.pad, mode="symmetric")
        f = spfft.fft2(padded, self.fft_shape)
        if len(self._field_cache) >= 8:
            self._field_cache.pop(next(iter(self._field_cache)))
        self._field_cache[key] = (field, f)
        return f

    def response(self, field, key):
        field = np.asarray(field, dtype=np.complex128)
        f = self._field_fft(field)
        full = spfft.ifft2(f * self._kfft[key])
        h, w = self.shape
        half = self._offsets[key]
        y0 = self.pad + half
        x0 = self.pad + half
        return full[y0:y0 + h, x0:x0 + w]


def frequency_channel_layout(cfg):
    """Deterministic (name, descriptor) list defining the channel order.

    Order is family-major, then radius index j, then order k, then coupled
    order k', with the real part before the imaginary part. Descriptors are
    tuples consumed by invariant_features.
    """
    layout = []
    n_radii = len(cfg.radii)
    if "F1" in cfg.families:
        for j in range(n_radii):
            for k in range(cfg.m + 1):
                layout.append((f"f1:j{j}:k{k}", ("F1", j, k)))
    if "F2" in cfg.families:
        for j in range(n_radii):
            for k in range(cfg.m + 1):
                layout.append((f"f2:j{j}:k{k}:re", ("F2", j, k, "re")))
                layout.append((f"f2:j{j}:k{k}:im", ("F2", j, k, "im")))
    if "F3" in cfg.families:
        for j in range(n_radii - 1):
            for k in range(cfg.m + 1):
                for kp in range(cfg.m + 1):
                    if k + kp == 0:
                        continue
                    layout.append((f"f3:j{j}:k{k}:kp{kp}:re", ("F3", j, k, kp, "re")))
                    layout.append((f"f3:j{j}:k{k}:kp{kp}:im", ("F3", j, k, kp, "im")))
    return layout


def invariant_features(fks, kernels, cfg, responder=None):
    """Compute the rotation-invariant channel stack from the order fields.

    fks is the fourier_orders output; kernels the build_kernels dict. The
    channel order is fixed by frequency_channel_layout and is part of the
    model file contract. Returns a ChannelStack.
    """
    from .channels_spatial import ChannelStack

    shape = fks[0].shape
    for f in fks:
        if f.shape != shape:
            raise ValueError("order fields must share dimensions")
    if responder is None:
        responder = HarmonicResponder(kernels, shape)

    resp_cache = {}

    def resp(k_field, jk):
        key = (k_field, jk)
        if key not in resp_cache:
            resp_cache[key] = responder.response(fks[k_field], jk)
        return resp_cache[key]

    layout = frequency_channel_layout(cfg)
    data = np.empty((len(layout), shape[0], shape[1]), dtype=np.float64)
    names = []
    groups = []
    f3_cache = {}
    for idx, (name, desc) in enumerate(layout):
        fam = desc[0]
        if fam == "F1":
            _, j, k = desc
            data[idx] = resp(0, (j, 0)).real
            groups.append("f1")
        elif fam == "F2":
            _, j, k, part = desc
            z = resp(k, (j, -k))
            data[idx] = z.real if part == "re" else z.imag
            groups.append("f2")
        else:
            _, j, k, kp, part = desc
            ckey = (j, k, kp)
            if ckey not in f3_cache:
                a = resp(k, (j, kp))
                b = resp(k, (j + 1, kp))
                prod = a * np.conj(b)
                mag = np.abs(prod)
                ok = (np.abs(a) >= F3_DELTA) & (np.abs(b) >= F3_DELTA)
                f3_cache[ckey] = np.where(ok, prod / np.where(ok, mag, 1.0), 0.0)
            z = f3_cache[ckey]
            data[idx] = z.real if part == "re" else z.imag
            groups.append("f3")
        names.append(name)
    return ChannelStack(data, names, groups)
