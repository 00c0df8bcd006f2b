"""Blur-sensitive feature extraction and per-dimension z-scoring.

A 12-dim hand-crafted feature vector stands in for a learned backbone:
at scales 1, 2 and 4 we measure log variance-of-Laplacian, mean and
90th-percentile gradient magnitude, and a log high-frequency energy
ratio. Multi-scale keeps the vector informative across blur levels that
saturate any single statistic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument
from .imaging import as_image, gaussian_blur, laplacian_variance, resize_bilinear

FEATURE_DIM = 12

_SCALES = (1, 2, 4)
_STD_FLOOR = 1e-8
_HF_EPS = 1e-8


@dataclass(frozen=True)
class FeatureNormalizer:
    """Per-dimension mean/std fitted on training images only."""

    mean: np.ndarray
    std: np.ndarray


def extract_features(img: np.ndarray) -> np.ndarray:
    """Deterministic 12-dim feature vector (3 scales x 4 statistics)."""
    img = as_image(img)
    h, w = img.shape
    if h < 12 or w < 12:
        raise InvalidArgument(f"feature extraction needs at least 12x12, got {w}x{h}")
    values = []
    for s in _SCALES:
        scaled = img if s == 1 else resize_bilinear(img, w // s, h // s)
        lv = laplacian_variance(scaled)
        gy, gx = np.gradient(scaled)
        mag = np.hypot(gx, gy)
        hf_ratio = lv / (laplacian_variance(gaussian_blur(scaled, 1.0)) + _HF_EPS)
        values.extend([np.log1p(lv), float(mag.mean()), float(np.percentile(mag, 90)), np.log1p(hf_ratio)])
    return np.array(values, dtype=np.float64)


def fit_normalizer(train_images) -> FeatureNormalizer:
    """Fit per-dim mean and (floored) population std over training images."""
    feats = [extract_features(im) for im in train_images]
    if len(feats) < 2:
        raise InvalidArgument("normalizer needs at least 2 training images")
    stacked = np.stack(feats)
    return fit_normalizer_from_features(stacked)


def fit_normalizer_from_features(features: np.ndarray) -> FeatureNormalizer:
    """Same as fit_normalizer but from an (n, D) matrix of precomputed features."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2 or features.shape[0] < 2:
        raise InvalidArgument("need an (n >= 2, D) feature matrix")
    mean = features.mean(axis=0)
    std = np.maximum(features.std(axis=0), _STD_FLOOR)
    return FeatureNormalizer(mean=mean, std=std)


def normalize(f: np.ndarray, norm: FeatureNormalizer) -> np.ndarray:
    f = np.asarray(f, dtype=np.float64)
    if f.shape[-1] != norm.mean.shape[0]:
        raise InvalidArgument(f"feature dim {f.shape[-1]} != normalizer dim {norm.mean.shape[0]}")
    return (f - norm.mean) / norm.std
