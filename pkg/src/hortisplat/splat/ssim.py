"""Per-pixel SSIM map with an analytic gradient w.r.t. the first image.

Local statistics use an 11x11 Gaussian window (sigma 1.5) with zero padding,
computed separably. Zero-padded correlation with a symmetric kernel is
self-adjoint, so the backward pass reuses the same filter.
"""
from __future__ import annotations

import numpy as np
from scipy.ndimage import correlate1d

C1 = 0.01 ** 2
C2 = 0.03 ** 2


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - size // 2
    w = np.exp(-(x ** 2) / (2 * sigma ** 2))
    return w / w.sum()


_WIN = gaussian_window()


def _blur(img: np.ndarray) -> np.ndarray:
    out = correlate1d(img, _WIN, axis=0, mode="constant", cval=0.0)
    return correlate1d(out, _WIN, axis=1, mode="constant", cval=0.0)


def ssim_map(x: np.ndarray, y: np.ndarray, with_grad: bool = False):
    """SSIM per pixel and channel for (H, W, ch) images.

    Returns ``(S, backward)`` where ``backward(g)`` maps dL/dS to dL/dx.
    """
    mx, my = _blur(x), _blur(y)
    exx, eyy, exy = _blur(x * x), _blur(y * y), _blur(x * y)
    sxx = exx - mx * mx
    syy = eyy - my * my
    sxy = exy - mx * my
    A1 = 2 * mx * my + C1
    A2 = 2 * sxy + C2
    B1 = mx * mx + my * my + C1
    B2 = sxx + syy + C2
    S = A1 * A2 / (B1 * B2)
    if not with_grad:
        return S, None

    def backward(g: np.ndarray) -> np.ndarray:
        den = B1 * B2
        d_mx = g * ((2 * my * A2 - 2 * my * A1) / den - S * (2 * mx * B2 - 2 * mx * B1) / den)
        d_exy = g * 2 * A1 / den
        d_exx = -g * S / B2
        return _blur(d_mx) + 2 * x * _blur(d_exx) + y * _blur(d_exy)

    return S, backward
