"""Grayscale image primitives: Gaussian blur, Laplacian filtering, crop/resize, PNG I/O.

Images are 2-D float64 arrays of shape (height, width) with luminance in
[0, 1]. Every image-producing operation clamps its output to that range.
The Laplacian response is the one deliberate exception: it is a signed
field and is returned unclamped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .errors import InvalidArgument

# Below this sigma the 3-sigma support rounds down to the identity kernel.
_SIGMA_IDENTITY_CUTOFF = 0.3

_LAPLACIAN_STENCIL = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class Kernel1D:
    """Symmetric, normalized 1-D convolution kernel with support 2*radius+1."""

    radius: int
    weights: np.ndarray


def as_image(arr) -> np.ndarray:
    """Validate and return a (H, W) float64 image array."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise InvalidArgument(f"image must be a 2-D array with positive dims, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise InvalidArgument("image contains non-finite values")
    if a.min() < 0.0 or a.max() > 1.0:
        raise InvalidArgument("image values must lie in [0, 1]")
    return a


def clamp01(arr: np.ndarray) -> np.ndarray:
    return np.clip(arr, 0.0, 1.0)


def gaussian_kernel(sigma: float) -> Kernel1D:
    """Sampled-and-normalized Gaussian kernel with radius ceil(3*sigma)."""
    if not np.isfinite(sigma) or sigma < 0:
        raise InvalidArgument(f"sigma must be a finite nonnegative real, got {sigma!r}")
    if sigma < _SIGMA_IDENTITY_CUTOFF:
        return Kernel1D(radius=0, weights=np.array([1.0]))
    radius = int(math.ceil(3.0 * sigma))
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    w = np.exp(-(offsets**2) / (2.0 * sigma * sigma))
    w /= w.sum()
    return Kernel1D(radius=radius, weights=w)


def _correlate1d(arr: np.ndarray, kernel: Kernel1D, axis: int) -> np.ndarray:
    if kernel.radius == 0:
        return arr * kernel.weights[0]
    r = kernel.radius
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    padded = np.pad(arr, pad, mode="edge")
    out = np.zeros_like(arr)
    n = arr.shape[axis]
    for i, w in enumerate(kernel.weights):
        sl: list[slice] = [slice(None), slice(None)]
        sl[axis] = slice(i, i + n)
        out += w * padded[tuple(sl)]
    return out


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian blur (horizontal then vertical), edge-replicated borders."""
    img = as_image(img)
    k = gaussian_kernel(sigma)
    return clamp01(_correlate1d(_correlate1d(img, k, axis=1), k, axis=0))


def laplacian(img: np.ndarray) -> np.ndarray:
    """3x3 Laplacian response with edge-replicated borders. Unclamped, signed."""
    img = as_image(img)
    h, w = img.shape
    if h < 3 or w < 3:
        raise InvalidArgument(f"laplacian needs at least a 3x3 image, got {w}x{h}")
    p = np.pad(img, 1, mode="edge")
    return p[:-2, 1:-1] + p[2:, 1:-1] + p[1:-1, :-2] + p[1:-1, 2:] - 4.0 * img


def laplacian_variance(img: np.ndarray) -> float:
    """Population variance of the Laplacian response; higher means sharper."""
    return float(np.var(laplacian(img)))


def center_crop(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Centered crop; odd margins are floored on the top/left side."""
    img = as_image(img)
    h, w = img.shape
    if width < 1 or height < 1:
        raise InvalidArgument("crop dims must be >= 1")
    if width > w or height > h:
        raise InvalidArgument(f"crop {width}x{height} exceeds source {w}x{h}")
    x0 = (w - width) // 2
    y0 = (h - height) // 2
    return img[y0 : y0 + height, x0 : x0 + width].copy()


def resize_bilinear(img: np.ndarray, width: int, height: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling."""
    img = as_image(img)
    h, w = img.shape
    if width < 1 or height < 1:
        raise InvalidArgument("target dims must be >= 1")
    if (width, height) == (w, h):
        return img.copy()
    xs = np.linspace(0.0, w - 1.0, width)
    ys = np.linspace(0.0, h - 1.0, height)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    top = img[np.ix_(y0, x0)] * (1.0 - fx) + img[np.ix_(y0, x1)] * fx
    bot = img[np.ix_(y1, x0)] * (1.0 - fx) + img[np.ix_(y1, x1)] * fx
    out = top * (1.0 - fy)[:, None] + bot * fy[:, None]
    return clamp01(out)


def save_png(img: np.ndarray, path) -> None:
    """Write an image as 8-bit grayscale PNG ([0,1] mapped linearly to 0..255)."""
    img = as_image(img)
    data = np.round(img * 255.0).astype(np.uint8)
    PILImage.fromarray(data, mode="L").save(path, format="PNG")


def load_png(path) -> np.ndarray:
    """Read an 8-bit grayscale PNG into a [0,1] image (RGB converted via Rec. 601)."""
    with PILImage.open(path) as im:
        im = im.convert("L")
        data = np.asarray(im, dtype=np.float64)
    return data / 255.0
