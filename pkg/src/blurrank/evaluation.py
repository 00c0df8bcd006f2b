"""Rank-correlation metrics and the Test1/2/3 benchmark runner.

SROCC is computed as the Pearson correlation of fractional (tie-averaged)
ranks, which degrades gracefully under tied scores; without ties it
coincides with the classic 1 - 6*sum(d^2)/(n(n^2-1)) shortcut.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import scorer as scorer_mod
from .data import Manifest, PairLabel
from .errors import InvalidArgument, UndefinedMetric
from .features import FeatureNormalizer, extract_features, normalize

REPORT_SCHEMA_VERSION = 1


def fractional_ranks(values) -> np.ndarray:
    """Ascending 1..n ranks; tied values get the mean of their positions."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise InvalidArgument("need a nonempty 1-D array")
    if not np.all(np.isfinite(v)):
        raise InvalidArgument("non-finite values in rank input")
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        # positions i..j (0-based) share the averaged 1-based rank
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def srocc(pred_scores, gt_values) -> float:
    """Spearman rank correlation, tie-aware."""
    pred = np.asarray(pred_scores, dtype=np.float64)
    gt = np.asarray(gt_values, dtype=np.float64)
    if pred.shape != gt.shape or pred.ndim != 1:
        raise InvalidArgument("pred and gt must be equal-length 1-D arrays")
    if pred.size < 2:
        raise UndefinedMetric("SROCC needs at least 2 samples")
    if np.unique(gt).size < 2:
        raise UndefinedMetric("SROCC undefined for constant ground truth")
    rp = fractional_ranks(pred)
    rg = fractional_ranks(gt)
    rp = rp - rp.mean()
    rg = rg - rg.mean()
    denom = np.sqrt((rp**2).sum() * (rg**2).sum())
    if denom == 0.0:
        raise UndefinedMetric("SROCC undefined: an argument has constant ranks")
    return float((rp * rg).sum() / denom)


def pairwise_accuracy(scores: dict[str, float], pairs: Sequence[PairLabel]) -> float:
    """Fraction of labeled pairs ordered consistently with their labels.

    delta = -1 requires score[id1] < score[id2]; exact score ties count 0.5.
    """
    if not pairs:
        raise InvalidArgument("no pairs given")
    correct = 0.0
    for p in pairs:
        for key in (p.id1, p.id2):
            if key not in scores:
                raise InvalidArgument(f"missing score for image id {key!r}")
        diff = scores[p.id2] - scores[p.id1]
        if diff == 0.0:
            correct += 0.5
        elif (diff > 0.0) == (p.delta == -1):
            correct += 1.0
    return correct / len(pairs)


@dataclass
class SplitResult:
    srocc: Optional[float]
    srocc_error: Optional[str]
    pairwise_accuracy: float
    n_images: int
    n_pairs: int


@dataclass
class BenchmarkReport:
    splits: dict[str, SplitResult]
    provenance: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "splits": {
                name: {
                    "srocc": r.srocc,
                    "srocc_error": r.srocc_error,
                    "pairwise_accuracy": r.pairwise_accuracy,
                    "n_images": r.n_images,
                    "n_pairs": r.n_pairs,
                }
                for name, r in self.splits.items()
            },
            "provenance": self.provenance,
        }

    def format_table(self) -> str:
        header = f"{'split':<8} {'SROCC':>8} {'pair-acc':>9} {'images':>7} {'pairs':>7}"
        lines = [header, "-" * len(header)]
        for name, r in self.splits.items():
            sr = f"{r.srocc:.4f}" if r.srocc is not None else "n/a"
            lines.append(f"{name:<8} {sr:>8} {r.pairwise_accuracy:>9.4f} {r.n_images:>7} {r.n_pairs:>7}")
        return "\n".join(lines)


def score_images(
    params: scorer_mod.ScorerParams,
    norm: FeatureNormalizer,
    images: dict[str, np.ndarray],
    features: Optional[dict[str, np.ndarray]] = None,
) -> dict[str, float]:
    """Model scores per image id; features may be precomputed."""
    out = {}
    for image_id, img in images.items():
        f = features[image_id] if features is not None else extract_features(img)
        y, _ = scorer_mod.forward(params, normalize(f, norm))
        out[image_id] = y
    return out


def _file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def run_benchmark(
    checkpoint_path,
    manifest: Manifest,
    splits: Sequence[str] = ("test1", "test2", "test3"),
    score_fn=None,
    features: Optional[dict[str, np.ndarray]] = None,
    manifest_path=None,
) -> BenchmarkReport:
    """Score every test image and report SROCC against ground-truth sigma
    ordering (negated: higher = sharper) plus pairwise accuracy.

    score_fn, when given, replaces the model (id, image) -> score; used to
    run the variance-of-Laplacian oracle through the same harness.
    """
    params = norm = None
    provenance: dict = {}
    if score_fn is None:
        params, norm, config = scorer_mod.load_checkpoint(checkpoint_path)
        provenance["checkpoint"] = str(checkpoint_path)
        provenance["checkpoint_sha256"] = _file_sha256(checkpoint_path)
        provenance["mode"] = config.get("mode")
    if manifest_path is not None:
        provenance["manifest"] = str(manifest_path)
        provenance["manifest_sha256"] = _file_sha256(manifest_path)
    results: dict[str, SplitResult] = {}
    for split in splits:
        entries = manifest.split_images(split)
        pairs = manifest.split_pairs(split)
        if not entries:
            raise InvalidArgument(f"manifest has no images for split {split!r}")
        images = {e.id: manifest.load_image(e.id) for e in entries}
        if score_fn is not None:
            scores = {image_id: float(score_fn(image_id, img)) for image_id, img in images.items()}
        else:
            scores = score_images(params, norm, images, features=features)
        gt = {e.id: -e.sigma for e in entries if e.sigma is not None}
        sr: Optional[float] = None
        sr_err: Optional[str] = None
        if len(gt) == len(entries):
            ids = sorted(gt)
            try:
                sr = srocc([scores[i] for i in ids], [gt[i] for i in ids])
            except UndefinedMetric as exc:
                sr_err = str(exc)
        else:
            sr_err = "no ground-truth sigma for this split"
        acc = pairwise_accuracy(scores, pairs) if pairs else 0.5
        results[split] = SplitResult(
            srocc=sr,
            srocc_error=sr_err,
            pairwise_accuracy=acc,
            n_images=len(entries),
            n_pairs=len(pairs),
        )
    return BenchmarkReport(splits=results, provenance=provenance)


def save_report(report: BenchmarkReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)
        fh.write("\n")


def load_report(path) -> dict:
    with open(path) as fh:
        return json.load(fh)
