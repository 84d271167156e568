"""Image substrate: I/O, resampling, color conversion, gradients, smoothing.

Images are numpy float64 arrays with values in [0, 1]: shape (H, W) for
grayscale, (H, W, 3) for color. All functions are pure; borders are handled
with replicate padding for derivatives and reflect (symmetric) padding for
convolutions.
"""

import numpy as np
from PIL import Image, UnidentifiedImageError
from scipy.ndimage import correlate1d

__all__ = [
    "load_image",
    "save_pgm",
    "resample",
    "to_color_space",
    "gradients",
    "smooth",
    "tri_smooth",
    "rgb_to_luv",
    "rgb_to_hsv",
]

COLOR_SPACES = ("rgb", "luv", "hsv")

# D65 white point
_XN, _YN, _ZN = 0.95047, 1.0, 1.08883
_UN = 4.0 * _XN / (_XN + 15.0 * _YN + 3.0 * _ZN)
_VN = 9.0 * _YN / (_XN + 15.0 * _YN + 3.0 * _ZN)

# fixed affine ranges mapping LUV into [0,1]: L in [0,100], u in [-134,220],
# v in [-140,122]
_U_LO, _U_SPAN = -134.0, 354.0
_V_LO, _V_SPAN = -140.0, 262.0


class ImageFormatError(ValueError):
    """Unsupported pixel format or bit depth."""


def load_image(path):
    """Load an 8-bit PNG or binary PPM/PGM file as a float array in [0, 1].

    Returns (H, W) for grayscale input and (H, W, 3) for RGB input.
    """
    try:
        with Image.open(path) as im:
            if im.mode not in ("L", "RGB", "P", "1"):
                if im.mode in ("I", "I;16", "F", "RGBA", "LA"):
                    raise ImageFormatError(
                        f"unsupported pixel mode {im.mode!r} in {path}")
                raise ImageFormatError(
                    f"unsupported pixel mode {im.mode!r} in {path}")
            if im.mode in ("P", "1"):
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except UnidentifiedImageError as exc:
        raise IOError(f"cannot read image file {path}: {exc}") from exc
    if arr.ndim not in (2, 3):
        raise ImageFormatError(f"unexpected array rank {arr.ndim} in {path}")
    return arr


def save_pgm(path, channel):
    """Debug dump of a single channel as 8-bit binary PGM, clamped to [0,255]."""
    chan = np.asarray(channel, dtype=np.float64)
    if chan.ndim != 2:
        raise ValueError("save_pgm expects a single channel")
    data = np.clip(np.round(chan * 255.0), 0, 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def _bilinear_axis_coords(n_out, n_in):
    # half-pixel-centered mapping, clamped to valid range
    scale = n_in / n_out
    x = (np.arange(n_out) + 0.5) * scale - 0.5
    x = np.clip(x, 0.0, n_in - 1.0)
    i0 = np.floor(x).astype(np.intp)
    i0 = np.minimum(i0, n_in - 2) if n_in > 1 else np.zeros_like(i0)
    frac = x - i0
    return i0, frac


def resample(img, scale=None, out_shape=None):
    """Bilinear resampling with half-pixel-centered coordinates.

    Either a positive `scale` factor or an explicit `out_shape` (h, w) must
    be given. Output dims are round(dim * scale), at least 1.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape[:2]
    if out_shape is None:
        if scale is None or scale <= 0:
            raise ValueError("scale must be positive")
        out_h = max(1, int(round(h * scale)))
        out_w = max(1, int(round(w * scale)))
    else:
        out_h, out_w = out_shape
        if out_h < 1 or out_w < 1:
            raise ValueError("output dims must be >= 1")
    if (out_h, out_w) == (h, w):
        return img.copy()
    y0, fy = _bilinear_axis_coords(out_h, h)
    x0, fx = _bilinear_axis_coords(out_w, w)
    trail = (1,) * (img.ndim - 2)
    wy = fy.reshape(-1, 1, *trail)
    wx = fx.reshape(1, -1, *trail)
    if h > 1:
        rows = img[y0] * (1.0 - wy) + img[y0 + 1] * wy
    else:
        rows = img[y0].astype(np.float64)
    if w > 1:
        out = rows[:, x0] * (1.0 - wx) + rows[:, x0 + 1] * wx
    else:
        out = rows[:, x0].astype(np.float64)
    return out


def rgb_to_luv(img):
    """RGB (treated as linear, [0,1]) -> CIE LUV, rescaled into [0,1]."""
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    x = 0.412453 * r + 0.357580 * g + 0.180423 * b
    y = 0.212671 * r + 0.715160 * g + 0.072169 * b
    z = 0.019334 * r + 0.119193 * g + 0.950227 * b

    yr = y / _YN
    lum = np.where(yr > (6.0 / 29.0) ** 3,
                   116.0 * np.cbrt(yr) - 16.0,
                   (29.0 / 3.0) ** 3 * yr)
    denom = x + 15.0 * y + 3.0 * z
    safe = denom > 1e-12
    up = np.where(safe, 4.0 * x / np.where(safe, denom, 1.0), _UN)
    vp = np.where(safe, 9.0 * y / np.where(safe, denom, 1.0), _VN)
    u = 13.0 * lum * (up - _UN)
    v = 13.0 * lum * (vp - _VN)

    out = np.empty_like(img)
    out[..., 0] = lum / 100.0
    out[..., 1] = (u - _U_LO) / _U_SPAN
    out[..., 2] = (v - _V_LO) / _V_SPAN
    return np.clip(out, 0.0, 1.0)


def rgb_to_hsv(img):
    """RGB -> HSV with H rescaled by 1/360; S and V already in [0,1]."""
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    v = np.max(img, axis=-1)
    c = v - np.min(img, axis=-1)
    safe_c = np.where(c > 0, c, 1.0)
    h = np.zeros_like(v)
    mask = (v == r) & (c > 0)
    h = np.where(mask, np.mod((g - b) / safe_c, 6.0), h)
    mask = (v == g) & (c > 0) & (v != r)
    h = np.where(mask, (b - r) / safe_c + 2.0, h)
    mask = (v == b) & (c > 0) & (v != r) & (v != g)
    h = np.where(mask, (r - g) / safe_c + 4.0, h)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    out = np.empty_like(img)
    out[..., 0] = h / 6.0
    out[..., 1] = s
    out[..., 2] = v
    return out


def to_color_space(img, space):
    """Convert a 3-channel image into the requested color space.

    Every output channel is affinely rescaled into [0,1] (see rgb_to_luv /
    rgb_to_hsv for the fixed ranges). 'rgb' is the identity.
    """
    space = space.lower()
    if space not in COLOR_SPACES:
        raise ValueError(f"unknown color space {space!r}")
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        if space == "rgb" and img.ndim == 2:
            return img.copy()
        raise ValueError("color conversion needs a 3-channel image")
    if space == "rgb":
        return img.copy()
    if space == "luv":
        return rgb_to_luv(img)
    return rgb_to_hsv(img)


def gradients(channel):
    """Centered-difference gradients of a single channel.

    dx(x, y) = (I(x+1, y) - I(x-1, y)) / 2, replicate-edge padding; dy
    analogous along the vertical axis. Returns (dx, dy).
    """
    chan = np.asarray(channel, dtype=np.float64)
    if chan.ndim != 2:
        raise ValueError("gradients expects a single channel")
    padded = np.pad(chan, 1, mode="edge")
    dx = (padded[1:-1, 2:] - padded[1:-1, :-2]) / 2.0
    dy = (padded[2:, 1:-1] - padded[:-2, 1:-1]) / 2.0
    return dx, dy


def _binomial_kernel(radius):
    k = np.array([1.0])
    for _ in range(2 * radius):
        k = np.convolve(k, [0.5, 0.5])
    return k


def smooth(img, radius):
    """Separable binomial smoothing with reflect borders.

    radius 1 is the [1,2,1]/4 kernel per axis; radius 0 is the identity.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    img = np.asarray(img, dtype=np.float64)
    if radius == 0:
        return img.copy()
    kern = _binomial_kernel(radius)
    out = correlate1d(img, kern, axis=0, mode="reflect")
    out = correlate1d(out, kern, axis=1, mode="reflect")
    return out


def tri_smooth(img, radius):
    """Separable triangular smoothing (reflect borders); radius 0 = identity."""
    if radius < 0:
        raise ValueError("radius must be >= 0")
    img = np.asarray(img, dtype=np.float64)
    if radius == 0:
        return img.copy()
    r = radius
    kern = np.concatenate([np.arange(1, r + 2), np.arange(r, 0, -1)]).astype(np.float64)
    kern /= kern.sum()
    out = correlate1d(img, kern, axis=0, mode="reflect")
    out = correlate1d(out, kern, axis=1, mode="reflect")
    return out
