"""Pixel containers, resampling and the filters used by the mixers.

Images are plain ``float64`` numpy arrays shaped ``(H, W, C)`` with values in
``[0, 1]``. Most functions also accept a stack ``(N, H, W, C)``; operations act
on the last three axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

import numpy as np

ImageBuffer = np.ndarray

MORPH_OPS = ("erode", "dilate", "open", "close")


def as_image(data, *, copy: bool = False) -> ImageBuffer:
    """Validate ``data`` as an image and return it as a float64 array.

    A 2-D array is promoted to a single channel image.
    """
    arr = np.array(data, dtype=np.float64, copy=copy) if copy else np.asarray(data, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError(f"expected an (H, W, C) image, got shape {arr.shape}")
    h, w, c = arr.shape
    if h < 1 or w < 1:
        raise ValueError(f"image must be at least 1x1, got {h}x{w}")
    if c not in (1, 3):
        raise ValueError(f"image must have 1 or 3 channels, got {c}")
    if not np.all((arr >= 0.0) & (arr <= 1.0)):
        raise ValueError("image intensities must lie in [0, 1]")
    return arr


def constant_image(height: int, width: int, value: float, channels: int = 3) -> ImageBuffer:
    return np.full((height, width, channels), float(value))


@dataclass(frozen=True)
class ResizeSpec:
    target_width: int
    target_height: int
    method: Literal["bilinear", "nearest"] = "bilinear"

    def __post_init__(self):
        if self.target_width < 1 or self.target_height < 1:
            raise ValueError(
                f"resize target must be at least 1x1, got {self.target_width}x{self.target_height}"
            )
        if self.method not in ("bilinear", "nearest"):
            raise ValueError(f"unknown resize method {self.method!r}")


def _bilinear_taps(src_len: int, dst_len: int):
    """Source indices and the weight of the upper tap along one axis.

    Half-pixel centres: output ``i`` samples source coordinate
    ``(i + 0.5) * src_len / dst_len - 0.5`` clamped to ``[0, src_len - 1]``.
    """
    pos = (np.arange(dst_len) + 0.5) * (src_len / dst_len) - 0.5
    pos = np.clip(pos, 0.0, src_len - 1)
    lo = np.floor(pos).astype(np.intp)
    hi = np.minimum(lo + 1, src_len - 1)
    return lo, hi, pos - lo


def _nearest_taps(src_len: int, dst_len: int):
    idx = np.floor((np.arange(dst_len) + 0.5) * (src_len / dst_len)).astype(np.intp)
    return np.minimum(idx, src_len - 1)


def resize(src: ImageBuffer, spec: ResizeSpec) -> ImageBuffer:
    """Resample ``src`` to ``spec.target_height x spec.target_width``.

    Identity-sized requests return an exact copy.
    """
    src = np.asarray(src, dtype=np.float64)
    h, w = src.shape[-3], src.shape[-2]
    th, tw = spec.target_height, spec.target_width
    if (th, tw) == (h, w):
        return src.copy()

    if spec.method == "nearest":
        rows = _nearest_taps(h, th)
        cols = _nearest_taps(w, tw)
        return src[..., rows, :, :][..., :, cols, :]

    y0, y1, wy = _bilinear_taps(h, th)
    x0, x1, wx = _bilinear_taps(w, tw)
    wy = wy[:, None, None]
    wx = wx[None, :, None]
    top = src[..., y0, :, :]
    bottom = src[..., y1, :, :]
    # a + (b - a) * w per row, then across rows; exact on constants, and the
    # fixed order lets the loop oracle match bit for bit
    a, b = top[..., :, x0, :], top[..., :, x1, :]
    top = a + (b - a) * wx
    a, b = bottom[..., :, x0, :], bottom[..., :, x1, :]
    bottom = a + (b - a) * wx
    out = top + (bottom - top) * wy
    return np.clip(out, 0.0, 1.0)


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Normalized 1-D Gaussian taps on ``[-ceil(3 sigma), ceil(3 sigma)]``."""
    radius = max(1, math.ceil(3.0 * sigma))
    k = np.arange(-radius, radius + 1, dtype=np.float64)
    with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
        # tiny sigma underflows to a delta (0/0 at k=0 is pinned to weight 1)
        taps = np.where(k == 0, 1.0, np.exp(-(k * k) / (2.0 * sigma * sigma)))
    return taps / taps.sum()


def _smooth_axis(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    # written as x + sum_k w_k (x_{i+k} - x_i) so constant regions stay bit-exact
    radius = len(kernel) // 2
    n = img.shape[axis]
    idx = np.arange(n)
    out = img.copy()
    for offset, weight in zip(range(-radius, radius + 1), kernel):
        if offset == 0:
            continue
        shifted = np.take(img, np.clip(idx + offset, 0, n - 1), axis=axis)
        out += weight * (shifted - img)
    return out


def gaussian_blur(src: ImageBuffer, sigma: float) -> ImageBuffer:
    """Separable Gaussian blur with edge-clamped borders."""
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")
    src = np.asarray(src, dtype=np.float64)
    if sigma == 0:
        return src.copy()
    kernel = gaussian_kernel(sigma)
    out = _smooth_axis(src, kernel, axis=src.ndim - 3)
    out = _smooth_axis(out, kernel, axis=src.ndim - 2)
    return np.clip(out, 0.0, 1.0)


def unsharp(src: ImageBuffer, sigma: float, amount: float) -> ImageBuffer:
    src = np.asarray(src, dtype=np.float64)
    if amount == 0:
        return src.copy()
    return np.clip(src + amount * (src - gaussian_blur(src, sigma)), 0.0, 1.0)


def _window_reduce(src: np.ndarray, radius: int, reduce) -> np.ndarray:
    # separable: a square min/max equals row pass then column pass
    out = src
    for axis in (src.ndim - 3, src.ndim - 2):
        n = out.shape[axis]
        idx = np.arange(n)
        acc = out
        for offset in range(-radius, radius + 1):
            if offset == 0:
                continue
            acc = reduce(acc, np.take(out, np.clip(idx + offset, 0, n - 1), axis=axis))
        out = acc
    return out


def morphology(src: ImageBuffer, op: str, radius: int = 1) -> ImageBuffer:
    """Grey-level erosion/dilation/opening/closing with a square window.

    The window is ``(2*radius + 1)`` pixels on a side; borders are
    edge-clamped and channels are processed independently.
    """
    if radius < 1:
        raise ValueError(f"radius must be >= 1, got {radius}")
    src = np.asarray(src, dtype=np.float64)
    erode = lambda x: _window_reduce(x, radius, np.minimum)  # noqa: E731
    dilate = lambda x: _window_reduce(x, radius, np.maximum)  # noqa: E731
    if op == "erode":
        return erode(src)
    if op == "dilate":
        return dilate(src)
    if op == "open":
        return dilate(erode(src))
    if op == "close":
        return erode(dilate(src))
    raise ValueError(f"unknown morphology op {op!r}; expected one of {MORPH_OPS}")


def total_variation(img: ImageBuffer) -> float:
    """Anisotropic total variation: sum of absolute neighbour differences."""
    img = np.asarray(img, dtype=np.float64)
    return float(np.abs(np.diff(img, axis=-3)).sum() + np.abs(np.diff(img, axis=-2)).sum())
