"""Dense two-frame optical flow via local polynomial expansion.

Each frame is approximated around every pixel by a quadratic polynomial
f(x) ~ x'Ax + b'x + c fitted under a Gaussian applicability window; a
translation d between the two frames then satisfies A d = -(b2 - b1)/2, which
is solved per pixel after aggregating the normal equations over a uniform
window, iterated with warping and refined over an image pyramid.

Identical frames produce bit-identical expansions, so the estimated flow is
exactly zero everywhere by construction.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DimensionError, ValidationError


@dataclass
class FlowParams:
    pyramid_scale: float = 0.5
    levels: int = 3
    window: int = 15
    iterations: int = 3
    poly_n: int = 5
    poly_sigma: float = 1.2

    def validate(self):
        if self.pyramid_scale != 0.5:
            raise ValidationError("only pyramid_scale = 0.5 (decimation by 2) is supported")
        if self.levels < 1 or self.iterations < 1:
            raise ValidationError("levels and iterations must be >= 1")
        if self.window < 3 or self.window % 2 == 0:
            raise ValidationError("window must be an odd size >= 3")
        if self.poly_n < 2 or self.poly_sigma <= 0:
            raise ValidationError("poly_n must be >= 2 and poly_sigma > 0")


def _polynomial_expansion(f, n, sigma):
    """Per-pixel quadratic fit; returns (A, b) with shapes (H, W, 2, 2), (H, W, 2)."""
    off = np.arange(-n, n + 1, dtype=np.float64)
    g = np.exp(-(off ** 2) / (2.0 * sigma ** 2))
    # moments of the separable applicability (odd moments vanish)
    m = [float((g * off ** a).sum()) for a in range(5)]

    def corr(img, ky, kx):
        out = ndimage.correlate1d(img, ky, axis=0, mode="nearest")
        return ndimage.correlate1d(out, kx, axis=1, mode="nearest")

    k0, k1, k2 = g, g * off, g * off ** 2
    s00 = corr(f, k0, k0)
    s10 = corr(f, k0, k1)   # weighted sum of dx * f
    s01 = corr(f, k1, k0)   # weighted sum of dy * f
    s20 = corr(f, k0, k2)
    s02 = corr(f, k2, k0)
    s11 = corr(f, k1, k1)

    # normal matrix over the basis [1, x, y, x^2, y^2, xy]
    G = np.array([
        [m[0] * m[0], 0, 0, m[2] * m[0], m[0] * m[2], 0],
        [0, m[2] * m[0], 0, 0, 0, 0],
        [0, 0, m[0] * m[2], 0, 0, 0],
        [m[2] * m[0], 0, 0, m[4] * m[0], m[2] * m[2], 0],
        [m[0] * m[2], 0, 0, m[2] * m[2], m[0] * m[4], 0],
        [0, 0, 0, 0, 0, m[2] * m[2]],
    ])
    ginv = np.linalg.inv(G)
    s = np.stack([s00, s10, s01, s20, s02, s11], axis=-1)
    r = s @ ginv.T
    b = np.stack([r[..., 1], r[..., 2]], axis=-1)
    A = np.empty(f.shape + (2, 2), dtype=np.float64)
    A[..., 0, 0] = r[..., 3]
    A[..., 1, 1] = r[..., 4]
    A[..., 0, 1] = A[..., 1, 0] = r[..., 5] / 2.0
    return A, b


def _estimate_level(f1, f2, d, params):
    """Refine flow d (H, W, 2, x then y) between two frames at one scale."""
    h, w = f1.shape
    A1, b1 = _polynomial_expansion(f1, params.poly_n, params.poly_sigma)
    A2, b2 = _polynomial_expansion(f2, params.poly_n, params.poly_sigma)
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(params.iterations):
        xs = np.clip(np.rint(xx + d[..., 0]), 0, w - 1).astype(np.intp)
        ys = np.clip(np.rint(yy + d[..., 1]), 0, h - 1).astype(np.intp)
        d_used = np.stack([xs - xx, ys - yy], axis=-1).astype(np.float64)
        A = 0.5 * (A1 + A2[ys, xs])
        db = -0.5 * (b2[ys, xs] - b1) + np.einsum("hwij,hwj->hwi", A, d_used)
        # aggregate the per-pixel normal equations A'A d = A'db over the window
        ata = np.einsum("hwji,hwjk->hwik", A, A)
        atb = np.einsum("hwji,hwj->hwi", A, db)
        size = params.window
        g11 = ndimage.uniform_filter(ata[..., 0, 0], size, mode="nearest")
        g12 = ndimage.uniform_filter(ata[..., 0, 1], size, mode="nearest")
        g22 = ndimage.uniform_filter(ata[..., 1, 1], size, mode="nearest")
        h1 = ndimage.uniform_filter(atb[..., 0], size, mode="nearest")
        h2 = ndimage.uniform_filter(atb[..., 1], size, mode="nearest")
        ridge = 1e-6 * (g11 + g22) + 1e-12  # keeps flat regions solvable (d -> 0)
        det = (g11 + ridge) * (g22 + ridge) - g12 * g12
        d = np.stack([((g22 + ridge) * h1 - g12 * h2) / det,
                      ((g11 + ridge) * h2 - g12 * h1) / det], axis=-1)
    return d


def _decimate(f):
    return ndimage.gaussian_filter(f, sigma=1.0, mode="nearest")[::2, ::2]


def optical_flow(frame_a, frame_b, params=None):
    """Dense flow (2, H, W) mapping frame_a content to frame_b positions.

    flow[0] is the x (column) displacement, flow[1] the y (row) displacement.
    Constant or identical frames yield exactly zero flow.
    """
    params = params or FlowParams()
    params.validate()
    f1 = np.asarray(frame_a, dtype=np.float64)
    f2 = np.asarray(frame_b, dtype=np.float64)
    if f1.ndim != 2 or f2.ndim != 2:
        raise DimensionError("frames must be 2d grayscale arrays")
    if f1.shape != f2.shape:
        raise DimensionError(f"frame shapes differ: {f1.shape} vs {f2.shape}")

    pyr1, pyr2 = [f1], [f2]
    for _ in range(params.levels - 1):
        if min(pyr1[-1].shape) < 2 * params.poly_n + 3:
            break
        pyr1.append(_decimate(pyr1[-1]))
        pyr2.append(_decimate(pyr2[-1]))

    d = np.zeros(pyr1[-1].shape + (2,), dtype=np.float64)
    for level in range(len(pyr1) - 1, -1, -1):
        a, b = pyr1[level], pyr2[level]
        if d.shape[:2] != a.shape:
            d = 2.0 * d.repeat(2, axis=0).repeat(2, axis=1)
            d = d[: a.shape[0], : a.shape[1]]
            pad_y, pad_x = a.shape[0] - d.shape[0], a.shape[1] - d.shape[1]
            if pad_y or pad_x:
                d = np.pad(d, ((0, pad_y), (0, pad_x), (0, 0)), mode="edge")
        d = _estimate_level(a, b, d, params)
    return np.moveaxis(d, -1, 0)


def flow_to_color(flow, max_magnitude=None):
    """Map a (2, H, W) flow field to an RGB uint8 image (angle -> hue,
    magnitude -> value)."""
    from matplotlib.colors import hsv_to_rgb

    flow = np.asarray(flow, dtype=np.float64)
    if flow.ndim != 3 or flow.shape[0] != 2:
        raise DimensionError("flow must have shape (2, H, W)")
    fx, fy = flow[0], flow[1]
    mag = np.hypot(fx, fy)
    scale = max_magnitude if max_magnitude else max(float(mag.max()), 1e-12)
    hsv = np.stack([
        (np.arctan2(fy, fx) / (2.0 * math.pi)) % 1.0,
        np.ones_like(mag),
        np.clip(mag / scale, 0.0, 1.0),
    ], axis=-1)
    return (hsv_to_rgb(hsv) * 255.0).round().astype(np.uint8)
