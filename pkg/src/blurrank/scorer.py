"""Differentiable scoring head: sigmoid(MLP(features)) with analytic gradients.

One tanh hidden layer of width 8 over the 12-dim features. Gradients are
hand-derived and verified against finite differences in the test suite.
Also hosts the optimizer (SGD + momentum + weight decay), the cosine LR
schedule, and the checkpoint format.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import DataError, InvalidArgument
from .features import FEATURE_DIM, FeatureNormalizer

HIDDEN_DIM = 8

CHECKPOINT_FORMAT_VERSION = 1

DEFAULT_WEIGHT_DECAY = 0.0005
DEFAULT_MOMENTUM = 0.9
DEFAULT_LR0 = 0.001


@dataclass
class ScorerParams:
    """MLP parameters; also reused as the container for gradients and velocities."""

    w1: np.ndarray  # (H, D)
    b1: np.ndarray  # (H,)
    w2: np.ndarray  # (H,)
    b2: float

    def zeros_like(self) -> "ScorerParams":
        return ScorerParams(
            w1=np.zeros_like(self.w1),
            b1=np.zeros_like(self.b1),
            w2=np.zeros_like(self.w2),
            b2=0.0,
        )

    def copy(self) -> "ScorerParams":
        return ScorerParams(w1=self.w1.copy(), b1=self.b1.copy(), w2=self.w2.copy(), b2=self.b2)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.w1))
            and np.all(np.isfinite(self.b1))
            and np.all(np.isfinite(self.w2))
            and np.isfinite(self.b2)
        )


@dataclass
class OptState:
    """Momentum buffers plus the step counter driving the LR schedule."""

    velocity: ScorerParams
    t: int
    total_steps: int


class ForwardCache(NamedTuple):
    features: np.ndarray  # (B, D) inputs as forwarded
    hidden: np.ndarray    # (B, H) tanh activations
    score: np.ndarray     # (B,) sigmoid outputs


def init_params(seed: int, dim: int = FEATURE_DIM, hidden: int = HIDDEN_DIM) -> ScorerParams:
    """Glorot-uniform weights, zero biases, deterministic per seed."""
    rng = np.random.default_rng(seed)
    a1 = np.sqrt(6.0 / (dim + hidden))
    a2 = np.sqrt(6.0 / (hidden + 1))
    return ScorerParams(
        w1=rng.uniform(-a1, a1, size=(hidden, dim)),
        b1=np.zeros(hidden),
        w2=rng.uniform(-a2, a2, size=hidden),
        b2=0.0,
    )


def _sigmoid(z):
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-z)), np.exp(z) / (1.0 + np.exp(z)))


def forward_batch(params: ScorerParams, feats: np.ndarray) -> tuple[np.ndarray, ForwardCache]:
    """Score a (B, D) batch of normalized features; returns (B,) scores in (0,1)."""
    feats = np.asarray(feats, dtype=np.float64)
    if feats.ndim != 2 or feats.shape[1] != params.w1.shape[1]:
        raise InvalidArgument(f"expected (B, {params.w1.shape[1]}) features, got {feats.shape}")
    if not np.all(np.isfinite(feats)):
        raise InvalidArgument("non-finite feature values")
    hidden = np.tanh(feats @ params.w1.T + params.b1)
    score = _sigmoid(hidden @ params.w2 + params.b2)
    return score, ForwardCache(features=feats, hidden=hidden, score=score)


def forward(params: ScorerParams, f: np.ndarray) -> tuple[float, ForwardCache]:
    """Score a single feature vector."""
    score, cache = forward_batch(params, np.asarray(f, dtype=np.float64)[None, :])
    return float(score[0]), cache


def backward_batch(params: ScorerParams, cache: ForwardCache, dldy: np.ndarray) -> ScorerParams:
    """Gradients of sum_b dldy[b] * score[b] w.r.t. params (summed over batch)."""
    dldy = np.asarray(dldy, dtype=np.float64)
    if dldy.shape != cache.score.shape:
        raise InvalidArgument(f"dL/dy shape {dldy.shape} != batch shape {cache.score.shape}")
    if cache.hidden.shape != (cache.score.shape[0], params.w2.shape[0]):
        raise InvalidArgument("cache does not match parameter shapes")
    dz2 = dldy * cache.score * (1.0 - cache.score)          # (B,)
    gw2 = dz2 @ cache.hidden                                # (H,)
    gb2 = float(dz2.sum())
    dhidden = dz2[:, None] * params.w2[None, :]             # (B, H)
    dz1 = dhidden * (1.0 - cache.hidden**2)                 # (B, H)
    gw1 = dz1.T @ cache.features                            # (H, D)
    gb1 = dz1.sum(axis=0)
    return ScorerParams(w1=gw1, b1=gb1, w2=gw2, b2=gb2)


def backward(params: ScorerParams, cache: ForwardCache, dldy: float) -> ScorerParams:
    """Single-sample gradient of dldy * score."""
    return backward_batch(params, cache, np.array([dldy]))


def sgd_step(
    params: ScorerParams,
    grads: ScorerParams,
    state: OptState,
    lr: float,
    momentum: float = DEFAULT_MOMENTUM,
    weight_decay: float = DEFAULT_WEIGHT_DECAY,
) -> tuple[ScorerParams, OptState]:
    """g' = g + wd*theta; v <- m*v - lr*g'; theta <- theta + v."""
    if not (params.is_finite() and grads.is_finite() and np.isfinite(lr)):
        raise InvalidArgument("non-finite inputs to sgd_step")
    v = state.velocity
    new_v = ScorerParams(
        w1=momentum * v.w1 - lr * (grads.w1 + weight_decay * params.w1),
        b1=momentum * v.b1 - lr * (grads.b1 + weight_decay * params.b1),
        w2=momentum * v.w2 - lr * (grads.w2 + weight_decay * params.w2),
        b2=momentum * v.b2 - lr * (grads.b2 + weight_decay * params.b2),
    )
    new_params = ScorerParams(
        w1=params.w1 + new_v.w1,
        b1=params.b1 + new_v.b1,
        w2=params.w2 + new_v.w2,
        b2=params.b2 + new_v.b2,
    )
    return new_params, OptState(velocity=new_v, t=state.t + 1, total_steps=state.total_steps)


def cosine_lr(t: int, total_steps: int, lr0: float = DEFAULT_LR0, lr_min: float = 0.0) -> float:
    """Cosine annealing from lr0 at t=0 down to lr_min at t=total_steps."""
    if total_steps < 1:
        raise InvalidArgument("total_steps must be >= 1")
    if t < 0 or t > total_steps:
        raise InvalidArgument(f"step {t} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr0 - lr_min) * (1.0 + np.cos(np.pi * t / total_steps))


# --- checkpoint serialization -------------------------------------------------
#
# A checkpoint is a single JSON document. Python's json writes floats with
# repr (shortest round-trip form), so save/load is bit-exact.

def config_hash(config_dict: dict) -> str:
    canon = json.dumps(config_dict, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def checkpoint_to_dict(params: ScorerParams, normalizer: FeatureNormalizer, config: dict) -> dict:
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "feature_dim": int(params.w1.shape[1]),
        "hidden_dim": int(params.w1.shape[0]),
        "w1": params.w1.tolist(),
        "b1": params.b1.tolist(),
        "w2": params.w2.tolist(),
        "b2": params.b2,
        "normalizer_mean": normalizer.mean.tolist(),
        "normalizer_std": normalizer.std.tolist(),
        "config": config,
        "config_hash": config_hash(config),
    }


def checkpoint_from_dict(doc: dict) -> tuple[ScorerParams, FeatureNormalizer, dict]:
    version = doc.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise DataError(f"unknown checkpoint format version {version!r}")
    params = ScorerParams(
        w1=np.array(doc["w1"], dtype=np.float64),
        b1=np.array(doc["b1"], dtype=np.float64),
        w2=np.array(doc["w2"], dtype=np.float64),
        b2=float(doc["b2"]),
    )
    norm = FeatureNormalizer(
        mean=np.array(doc["normalizer_mean"], dtype=np.float64),
        std=np.array(doc["normalizer_std"], dtype=np.float64),
    )
    return params, norm, doc.get("config", {})


def save_checkpoint(path, params: ScorerParams, normalizer: FeatureNormalizer, config: dict) -> None:
    with open(path, "w") as fh:
        json.dump(checkpoint_to_dict(params, normalizer, config), fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> tuple[ScorerParams, FeatureNormalizer, dict]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    return checkpoint_from_dict(doc)
