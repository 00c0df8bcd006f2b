"""Semi-supervised training loop.

Each step draws a supervised batch of labeled pairs (margin ranking loss)
and, unless running the supervised-only baseline, a self-supervised batch
of quadruplets (QRC) or clean/degraded pairs (RankIQA- or LSEP-style).
Both branches share one parameter set; their gradients are summed and
applied once per step with momentum SGD under a cosine LR schedule.

Every random choice draws from its own named RNG stream (init / val
split / labeled batches / self-supervised sampling / degradation sigmas)
so that disabling one branch leaves the others' sampling untouched and
ablations stay bit-comparable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import losses, scorer
from .data import DEFAULT_SIGMA_D_RANGE, Manifest, PairLabel, make_quadruplet
from .errors import InvalidArgument
from .evaluation import pairwise_accuracy
from .features import FeatureNormalizer, extract_features, fit_normalizer_from_features, normalize
from .imaging import gaussian_blur

MODES = ("baseline", "qrc", "rankiqa", "lsep")

HISTORY_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    mode: str = "baseline"
    epochs: int = 20
    batch_size_pairs: int = 30        # 60 images per supervised batch
    batch_size_quadruplets: int = 15  # 60 images per QRC batch
    batch_size_degpairs: int = 30     # 60 images per RankIQA/LSEP batch
    lr0: float = scorer.DEFAULT_LR0
    lr_min: float = 0.0
    momentum: float = scorer.DEFAULT_MOMENTUM
    weight_decay: float = scorer.DEFAULT_WEIGHT_DECAY
    eps_ranking: float = losses.DEFAULT_MARGIN
    eps_qrc: float = losses.DEFAULT_MARGIN
    lambda_qrc: float = 1.0
    seed: int = 0
    sigma_d_range: tuple[float, float] = DEFAULT_SIGMA_D_RANGE
    val_fraction: float = 0.1
    self_pool_size: int = 240  # pregenerated self-supervised examples per run

    def validate(self) -> None:
        if self.mode not in MODES:
            raise InvalidArgument(f"unknown mode {self.mode!r}")
        for name in ("epochs", "batch_size_pairs", "batch_size_quadruplets", "batch_size_degpairs", "self_pool_size"):
            if getattr(self, name) < 1:
                raise InvalidArgument(f"{name} must be >= 1")
        if not 0.0 <= self.val_fraction < 1.0:
            raise InvalidArgument("val_fraction must be in [0, 1)")
        if self.lambda_qrc < 0:
            raise InvalidArgument("lambda_qrc must be >= 0")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "epochs": self.epochs,
            "batch_size_pairs": self.batch_size_pairs,
            "batch_size_quadruplets": self.batch_size_quadruplets,
            "batch_size_degpairs": self.batch_size_degpairs,
            "lr0": self.lr0,
            "lr_min": self.lr_min,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "eps_ranking": self.eps_ranking,
            "eps_qrc": self.eps_qrc,
            "lambda_qrc": self.lambda_qrc,
            "seed": self.seed,
            "sigma_d_range": list(self.sigma_d_range),
            "val_fraction": self.val_fraction,
            "self_pool_size": self.self_pool_size,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TrainConfig":
        known = dict(doc)
        if "sigma_d_range" in known:
            known["sigma_d_range"] = tuple(known["sigma_d_range"])
        cfg = cls(**known)
        cfg.validate()
        return cfg


@dataclass
class TrainData:
    """Everything the loop needs, decoupled from how it was loaded."""

    pairs: list[PairLabel]
    labeled_image_ids: list[str]
    features: dict[str, np.ndarray]  # raw (unnormalized) features per image id
    unlabeled_image_ids: list[str] = field(default_factory=list)
    image_loader: Optional[Callable[[str], np.ndarray]] = None


@dataclass
class EpochRecord:
    epoch: int
    supervised_loss: float
    self_supervised_loss: float
    val_accuracy: Optional[float]
    lr: float

    def to_dict(self) -> dict:
        return {
            "schema_version": HISTORY_SCHEMA_VERSION,
            "epoch": self.epoch,
            "supervised_loss": self.supervised_loss,
            "self_supervised_loss": self.self_supervised_loss,
            "val_accuracy": self.val_accuracy,
            "lr": self.lr,
        }


@dataclass
class TrainResult:
    params: scorer.ScorerParams
    best_params: scorer.ScorerParams
    best_epoch: int
    normalizer: FeatureNormalizer
    history: list[EpochRecord]
    config: TrainConfig


def compute_feature_table(
    manifest: Manifest, splits: Optional[Sequence[str]] = None, cache_path=None
) -> dict[str, np.ndarray]:
    """Raw features for every image in the given splits, cached to .npz."""
    entries = [e for e in manifest.images if splits is None or e.split in splits]
    wanted = [e.id for e in entries]
    if cache_path is not None:
        cache_path = Path(cache_path)
        if cache_path.exists():
            with np.load(cache_path) as npz:
                if all(i in npz.files for i in wanted):
                    return {i: npz[i] for i in wanted}
    table = {e.id: extract_features(manifest.load_image(e.id)) for e in entries}
    if cache_path is not None:
        np.savez(cache_path, **table)
    return table


def build_train_data(
    manifest: Manifest,
    features: Optional[dict[str, np.ndarray]] = None,
    half_split: bool = False,
) -> TrainData:
    """Assemble TrainData from a manifest; half_split restricts the labeled
    pairs to the recorded label-efficiency subset."""
    pairs = manifest.split_pairs("train_labeled")
    if half_split:
        indices = manifest.provenance.get("half_split_indices")
        if indices is None:
            raise InvalidArgument("manifest has no recorded half split")
        pairs = [pairs[i] for i in indices]
    labeled_ids = [e.id for e in manifest.split_images("train_labeled")]
    unlabeled_ids = [e.id for e in manifest.split_images("unlabeled")]
    if features is None:
        features = compute_feature_table(manifest, splits=("train_labeled",))
    return TrainData(
        pairs=pairs,
        labeled_image_ids=labeled_ids,
        features=features,
        unlabeled_image_ids=unlabeled_ids,
        image_loader=manifest.load_image,
    )


def make_validation_split(
    pairs: Sequence[PairLabel], val_fraction: float, rng: np.random.Generator
) -> tuple[list[PairLabel], list[PairLabel]]:
    """Disjoint (train, val) pair split; val pairs are never trained on."""
    order = rng.permutation(len(pairs))
    n_val = int(round(val_fraction * len(pairs)))
    val = [pairs[i] for i in order[:n_val]]
    train_part = [pairs[i] for i in order[n_val:]]
    assert not (set(val) & set(train_part))
    return train_part, val


def _add_scaled(a: scorer.ScorerParams, b: scorer.ScorerParams, s: float) -> scorer.ScorerParams:
    return scorer.ScorerParams(
        w1=a.w1 + s * b.w1, b1=a.b1 + s * b.b1, w2=a.w2 + s * b.w2, b2=a.b2 + s * b.b2
    )


def _feature_of(data: TrainData, image_id: str) -> np.ndarray:
    f = data.features.get(image_id)
    if f is None:
        if data.image_loader is None:
            raise InvalidArgument(f"no features and no image loader for id {image_id!r}")
        f = extract_features(data.image_loader(image_id))
        data.features[image_id] = f
    return f


def _build_self_pool(config: TrainConfig, data: TrainData, rng_pick, rng_sigma) -> list:
    """Pregenerate the self-supervised example pool.

    qrc entries are (f1, f2, f1d, f2d); rankiqa/lsep entries are (f, fd).
    Raw features; normalization happens at forward time.
    """
    ids = data.unlabeled_image_ids
    if len(ids) < 2:
        raise InvalidArgument("self-supervised modes need a nonempty unlabeled split")
    loaded: dict[str, np.ndarray] = {}

    def image(image_id):
        if image_id not in loaded:
            loaded[image_id] = data.image_loader(image_id)
        return loaded[image_id]

    pool = []
    for _ in range(config.self_pool_size):
        if config.mode == "qrc":
            i, j = rng_pick.choice(len(ids), size=2, replace=False)
            q = make_quadruplet(image(ids[i]), image(ids[j]), config.sigma_d_range, rng_sigma)
            pool.append(
                (
                    _feature_of(data, ids[i]),
                    _feature_of(data, ids[j]),
                    extract_features(q.x1d),
                    extract_features(q.x2d),
                )
            )
        else:
            i = int(rng_pick.integers(len(ids)))
            sigma_d = float(rng_sigma.uniform(*config.sigma_d_range))
            degraded = gaussian_blur(image(ids[i]), sigma_d)
            pool.append((_feature_of(data, ids[i]), extract_features(degraded)))
    return pool


def validate(
    params: scorer.ScorerParams,
    norm: FeatureNormalizer,
    features: dict[str, np.ndarray],
    pairs: Sequence[PairLabel],
) -> float:
    """Pairwise accuracy of the current model on held-out labeled pairs."""
    if not pairs:
        raise InvalidArgument("validation needs a nonempty pair set")
    ids = sorted({i for p in pairs for i in (p.id1, p.id2)})
    feats = np.stack([normalize(features[i], norm) for i in ids])
    y, _ = scorer.forward_batch(params, feats)
    return pairwise_accuracy(dict(zip(ids, y)), pairs)


def train(config: TrainConfig, data: TrainData) -> TrainResult:
    config.validate()
    if not data.pairs:
        raise InvalidArgument("labeled pair set is empty")

    streams = np.random.SeedSequence(config.seed).spawn(5)
    rng_split = np.random.default_rng(streams[1])
    rng_pairs = np.random.default_rng(streams[2])
    rng_self = np.random.default_rng(streams[3])
    rng_sigma = np.random.default_rng(streams[4])

    params = scorer.init_params(streams[0])
    norm = fit_normalizer_from_features(
        np.stack([_feature_of(data, i) for i in data.labeled_image_ids])
    )
    norm_features = {i: normalize(_feature_of(data, i), norm) for i in data.labeled_image_ids}

    # held-out pairs for model selection, disjoint from training pairs
    train_pairs, val_pairs = make_validation_split(data.pairs, config.val_fraction, rng_split)
    if not train_pairs:
        raise InvalidArgument("val_fraction leaves no training pairs")

    self_active = config.mode != "baseline" and config.lambda_qrc > 0.0
    pool = _build_self_pool(config, data, rng_self, rng_sigma) if self_active else []
    pool_feats = None
    if self_active:
        pool_feats = [tuple(normalize(f, norm) for f in entry) for entry in pool]
    self_batch = (
        config.batch_size_quadruplets if config.mode == "qrc" else config.batch_size_degpairs
    )

    steps_per_epoch = math.ceil(len(train_pairs) / config.batch_size_pairs)
    total_steps = config.epochs * steps_per_epoch
    state = scorer.OptState(velocity=params.zeros_like(), t=0, total_steps=total_steps)

    history: list[EpochRecord] = []
    best_params = params.copy()
    best_epoch = 0
    best_acc = -1.0

    for epoch in range(1, config.epochs + 1):
        epoch_order = rng_pairs.permutation(len(train_pairs))
        sup_losses = []
        self_losses = []
        for start in range(0, len(train_pairs), config.batch_size_pairs):
            batch = [train_pairs[i] for i in epoch_order[start : start + config.batch_size_pairs]]
            n = len(batch)
            feats = np.stack([norm_features[i] for p in batch for i in (p.id1, p.id2)])
            y, cache = scorer.forward_batch(params, feats)
            dldy = np.zeros(2 * n)
            batch_loss = 0.0
            for k, p in enumerate(batch):
                out = losses.pairwise_ranking_loss(y[2 * k], y[2 * k + 1], p.delta, config.eps_ranking)
                batch_loss += out.value
                dldy[2 * k] += out.score_grads[0] / n
                dldy[2 * k + 1] += out.score_grads[1] / n
            grads = scorer.backward_batch(params, cache, dldy)
            sup_loss = batch_loss / n
            sup_losses.append(sup_loss)

            self_loss = 0.0
            if self_active:
                picks = rng_self.choice(len(pool_feats), size=self_batch, replace=False)
                entries = [pool_feats[i] for i in picks]
                width = len(entries[0])
                sfeats = np.stack([f for entry in entries for f in entry])
                sy, scache = scorer.forward_batch(params, sfeats)
                sdldy = np.zeros(len(entries) * width)
                m = len(entries)
                total = 0.0
                for k in range(m):
                    ys = sy[k * width : (k + 1) * width]
                    if config.mode == "qrc":
                        out = losses.qrc_loss(ys[0], ys[1], ys[2], ys[3], config.eps_qrc)
                    elif config.mode == "rankiqa":
                        out = losses.pairwise_degradation_loss(ys[0], ys[1], config.eps_qrc)
                    else:
                        out = losses.lsep_loss(ys[0], ys[1])
                    total += out.value
                    for g_idx, g in enumerate(out.score_grads):
                        sdldy[k * width + g_idx] += g / m
                self_loss = total / m
                self_losses.append(self_loss)
                sgrads = scorer.backward_batch(params, scache, sdldy)
                grads = _add_scaled(grads, sgrads, config.lambda_qrc)

            if not np.isfinite(sup_loss + self_loss):
                raise RuntimeError(
                    f"non-finite loss at epoch {epoch}: supervised={sup_loss}, self={self_loss}, "
                    f"batch pairs={[(p.id1, p.id2, p.delta) for p in batch]}"
                )
            lr = scorer.cosine_lr(state.t, total_steps, config.lr0, config.lr_min)
            params, state = scorer.sgd_step(
                params, grads, state, lr, momentum=config.momentum, weight_decay=config.weight_decay
            )

        val_acc = None
        if val_pairs:
            val_feats = {i: _feature_of(data, i) for p in val_pairs for i in (p.id1, p.id2)}
            val_acc = validate(params, norm, val_feats, val_pairs)
            if val_acc > best_acc:
                best_acc = val_acc
                best_params = params.copy()
                best_epoch = epoch
        history.append(
            EpochRecord(
                epoch=epoch,
                supervised_loss=float(np.mean(sup_losses)),
                self_supervised_loss=float(np.mean(self_losses)) if self_losses else 0.0,
                val_accuracy=val_acc,
                lr=float(scorer.cosine_lr(state.t, total_steps, config.lr0, config.lr_min)),
            )
        )

    if best_acc < 0:
        best_params = params.copy()
        best_epoch = config.epochs
    return TrainResult(
        params=params,
        best_params=best_params,
        best_epoch=best_epoch,
        normalizer=norm,
        history=history,
        config=config,
    )


def save_history(history: Sequence[EpochRecord], path) -> None:
    with open(path, "w") as fh:
        for rec in history:
            fh.write(json.dumps(rec.to_dict(), separators=(",", ":")) + "\n")


def save_result(result: TrainResult, checkpoint_path, best_checkpoint_path=None, history_path=None) -> None:
    config = result.config.to_dict()
    scorer.save_checkpoint(checkpoint_path, result.params, result.normalizer, config)
    if best_checkpoint_path is not None:
        scorer.save_checkpoint(
            best_checkpoint_path, result.best_params, result.normalizer,
            {**config, "best_epoch": result.best_epoch},
        )
    if history_path is not None:
        save_history(result.history, history_path)
