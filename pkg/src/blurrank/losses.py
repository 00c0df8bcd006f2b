"""Ranking losses over blur scores, each returning value plus exact score gradients.

The hinge subgradient at an exact kink (argument 0) is taken as 0. The
quadruplet consistency loss treats the clean pair's predicted order as a
constant pseudo-label: no gradient flows to the clean scores.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgument

DEFAULT_MARGIN = 0.05


@dataclass(frozen=True)
class LossOutput:
    value: float
    score_grads: tuple[float, ...]
    skipped: bool = False


def pairwise_ranking_loss(y1: float, y2: float, delta: int, eps: float = DEFAULT_MARGIN) -> LossOutput:
    """Margin hinge on a labeled pair: max(0, (y2 - y1) * delta + eps).

    delta = -1 means the first image is the blurrier one; minimizing the
    loss pushes its score below the second's by at least eps.
    """
    if delta not in (-1, 1):
        raise InvalidArgument(f"delta must be -1 or +1, got {delta!r}")
    if eps < 0:
        raise InvalidArgument("eps must be nonnegative")
    arg = (y2 - y1) * delta + eps
    if arg > 0:
        return LossOutput(value=arg, score_grads=(-float(delta), float(delta)))
    return LossOutput(value=0.0, score_grads=(0.0, 0.0))


def qrc_loss(y1: float, y2: float, y1d: float, y2d: float, eps: float = DEFAULT_MARGIN) -> LossOutput:
    """Quadruplet ranking consistency: hinge on the degraded pair, ordered by the clean pair.

    Pseudo-label is -1 when y1 < y2 (first image scored blurrier), +1
    otherwise; an exact clean-score tie skips the quadruplet. Gradients
    are returned for (y1, y2, y1d, y2d) and are nonzero only on the
    degraded scores.
    """
    if eps < 0:
        raise InvalidArgument("eps must be nonnegative")
    if y1 == y2:
        return LossOutput(value=0.0, score_grads=(0.0, 0.0, 0.0, 0.0), skipped=True)
    delta_hat = -1.0 if y1 < y2 else 1.0
    arg = (y2d - y1d) * delta_hat + eps
    if arg > 0:
        return LossOutput(value=arg, score_grads=(0.0, 0.0, -delta_hat, delta_hat))
    return LossOutput(value=0.0, score_grads=(0.0, 0.0, 0.0, 0.0))


def pairwise_degradation_loss(y: float, yd: float, eps: float = DEFAULT_MARGIN) -> LossOutput:
    """Clean-vs-degraded hinge: the degraded score must fall eps below the clean one."""
    if eps < 0:
        raise InvalidArgument("eps must be nonnegative")
    arg = (yd - y) + eps
    if arg > 0:
        return LossOutput(value=arg, score_grads=(-1.0, 1.0))
    return LossOutput(value=0.0, score_grads=(0.0, 0.0))


def lsep_loss(y: float, yd: float) -> LossOutput:
    """Smooth log-sum-exp surrogate log(1 + exp(yd - y)) for the same ordering."""
    z = yd - y
    value = float(np.log1p(np.exp(-abs(z))) + max(z, 0.0))
    s = float(1.0 / (1.0 + np.exp(-z)))
    return LossOutput(value=value, score_grads=(-s, s))
