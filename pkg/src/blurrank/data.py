"""Dataset machinery: synthetic corpora with ground-truth blur, pair sampling,
majority-vote label aggregation, quadruplet construction, and manifest I/O.

Pairs are stored canonically with id1 < id2; swapping the members of a
pair flips its rank label. delta = -1 always means "the first image is
the blurrier one".
"""

from __future__ import annotations

import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError, InvalidArgument
from .imaging import clamp01, gaussian_blur, load_png, save_png

MANIFEST_SCHEMA_VERSION = 1
JUDGMENT_SCHEMA_VERSION = 1

SPLITS = ("train_labeled", "unlabeled", "test1", "test2", "test3")
FAMILIES = ("noise_texture", "geometric", "gradient_blobs")

CHOICE_FIRST = "first_blurrier"
CHOICE_SECOND = "second_blurrier"
CHOICE_SKIP = "skip"
CHOICES = (CHOICE_FIRST, CHOICE_SECOND, CHOICE_SKIP)

DEFAULT_SIGMA_D_RANGE = (0.5, 3.0)


@dataclass(frozen=True)
class PairLabel:
    id1: str
    id2: str
    delta: int  # -1: id1 blurrier, +1: id2 blurrier
    split: str = "train_labeled"


@dataclass(frozen=True)
class Judgment:
    pair_id: str
    annotator_id: str
    choice: str
    timestamp: float


@dataclass(frozen=True)
class Quadruplet:
    x1: np.ndarray
    x2: np.ndarray
    x1d: np.ndarray
    x2d: np.ndarray
    sigma_d: float


@dataclass(frozen=True)
class ImageEntry:
    id: str
    path: str  # relative to the manifest's directory
    split: str
    family: str
    sigma: Optional[float] = None  # ground-truth blur, synthetic corpora only


@dataclass
class Manifest:
    images: list[ImageEntry]
    pairs: list[PairLabel]
    provenance: dict = field(default_factory=dict)
    root: Optional[Path] = None  # directory the image paths are relative to

    def image_by_id(self) -> dict[str, ImageEntry]:
        return {e.id: e for e in self.images}

    def split_images(self, split: str) -> list[ImageEntry]:
        return [e for e in self.images if e.split == split]

    def split_pairs(self, split: str) -> list[PairLabel]:
        return [p for p in self.pairs if p.split == split]

    def image_path(self, entry: ImageEntry) -> Path:
        if self.root is None:
            return Path(entry.path)
        return self.root / entry.path

    def load_image(self, image_id: str) -> np.ndarray:
        entry = self.image_by_id()[image_id]
        return load_png(self.image_path(entry))


def pair_id_of(id1: str, id2: str) -> str:
    a, b = sorted((id1, id2))
    return f"{a}::{b}"


def split_pair_id(pair_id: str) -> tuple[str, str]:
    a, _, b = pair_id.partition("::")
    if not a or not b:
        raise InvalidArgument(f"malformed pair id {pair_id!r}")
    return a, b


def canonical_pair(id1: str, id2: str, delta: int, split: str = "train_labeled") -> PairLabel:
    """Store pairs with id1 < id2; swapping members flips delta."""
    if id1 == id2:
        raise InvalidArgument(f"pair members must differ, got {id1!r} twice")
    if delta not in (-1, 1):
        raise InvalidArgument(f"delta must be -1 or +1, got {delta!r}")
    if id1 < id2:
        return PairLabel(id1=id1, id2=id2, delta=delta, split=split)
    return PairLabel(id1=id2, id2=id1, delta=-delta, split=split)


# --- pair sampling ------------------------------------------------------------

def _unrank_pair(index: int, n: int) -> tuple[int, int]:
    # Row-major unranking over unordered pairs (i < j) of range(n).
    i = 0
    remaining = index
    row = n - 1
    while remaining >= row:
        remaining -= row
        i += 1
        row -= 1
    return i, i + 1 + remaining


def sample_pairs(image_ids: Sequence[str], count: int, seed: int) -> list[tuple[str, str]]:
    """Uniform sample of distinct unordered pairs, deterministic per seed."""
    n = len(image_ids)
    if n < 2:
        raise InvalidArgument("need at least 2 images to sample pairs")
    if count < 1:
        raise InvalidArgument("count must be >= 1")
    total = n * (n - 1) // 2
    if count > total:
        raise InvalidArgument(f"requested {count} pairs but only {total} distinct pairs exist")
    rng = np.random.default_rng(seed)
    indices = rng.choice(total, size=count, replace=False)
    out = []
    for idx in indices:
        i, j = _unrank_pair(int(idx), n)
        a, b = image_ids[i], image_ids[j]
        if a > b:
            a, b = b, a
        out.append((a, b))
    return out


def derive_oracle_labels(
    sigma1: float, sigma2: float, noise_prob: float, rng: np.random.Generator
) -> Optional[int]:
    """Ground-truth rank label from blur sigmas, optionally flipped to simulate
    annotator error. Equal sigmas carry no signal and yield None."""
    if sigma1 < 0 or sigma2 < 0:
        raise InvalidArgument("sigmas must be nonnegative")
    if not 0.0 <= noise_prob < 0.5:
        raise InvalidArgument("noise_prob must be in [0, 0.5)")
    if sigma1 == sigma2:
        return None
    delta = -1 if sigma1 > sigma2 else 1
    if noise_prob > 0 and rng.random() < noise_prob:
        delta = -delta
    return delta


# --- majority voting ----------------------------------------------------------

def effective_judgments(judgments: Iterable[Judgment]) -> list[Judgment]:
    """Collapse resubmissions: the last judgment per annotator wins."""
    latest: dict[str, Judgment] = {}
    for j in judgments:
        if j.choice not in CHOICES:
            raise InvalidArgument(f"unknown choice {j.choice!r}")
        latest[j.annotator_id] = j
    return list(latest.values())


def majority_vote(judgments: Iterable[Judgment]) -> Optional[int]:
    """Label a pair when one side holds a strict majority of all effective
    judgments (skips count toward the denominator); otherwise None."""
    effective = effective_judgments(judgments)
    if not effective:
        return None
    total = len(effective)
    first = sum(1 for j in effective if j.choice == CHOICE_FIRST)
    second = sum(1 for j in effective if j.choice == CHOICE_SECOND)
    if first > total / 2:
        return -1
    if second > total / 2:
        return 1
    return None


# --- quadruplets --------------------------------------------------------------

def make_quadruplet(
    x1: np.ndarray,
    x2: np.ndarray,
    sigma_range: tuple[float, float] = DEFAULT_SIGMA_D_RANGE,
    rng: Optional[np.random.Generator] = None,
) -> Quadruplet:
    """Blur both images with one shared kernel; sigma drawn uniformly."""
    rng = rng if rng is not None else np.random.default_rng()
    lo, hi = sigma_range
    if lo < 0 or hi < lo:
        raise InvalidArgument(f"bad sigma range {sigma_range!r}")
    sigma_d = float(rng.uniform(lo, hi))
    return Quadruplet(
        x1=x1,
        x2=x2,
        x1d=gaussian_blur(x1, sigma_d),
        x2d=gaussian_blur(x2, sigma_d),
        sigma_d=sigma_d,
    )


# --- synthetic corpus ---------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    family: str
    base_count: int
    sigma_range: tuple[float, float] = (0.0, 3.0)
    size: int = 96
    seed: int = 0
    label_noise_prob: float = 0.0
    pair_count: int = 0  # 0 = no labeled pairs
    split: str = "train_labeled"

    def validate(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown family {self.family!r}")
        if self.base_count < 2:
            raise InvalidArgument("base_count must be >= 2")
        if self.sigma_range[0] < 0 or self.sigma_range[1] < self.sigma_range[0]:
            raise InvalidArgument(f"bad sigma_range {self.sigma_range!r}")
        if not 0.0 <= self.label_noise_prob < 0.5:
            raise InvalidArgument("label_noise_prob must be in [0, 0.5)")
        if self.split not in SPLITS:
            raise InvalidArgument(f"unknown split {self.split!r}")


def _base_noise_texture(rng: np.random.Generator, size: int) -> np.ndarray:
    """Band-limited noise texture with normalized contrast."""
    noise = rng.standard_normal((size, size))
    tex = gaussian_blur(clamp01(0.5 + 0.18 * noise), 0.5)
    lo, hi = tex.min(), tex.max()
    return clamp01((tex - lo) / (hi - lo + 1e-12))


def _base_geometric(rng: np.random.Generator, size: int) -> np.ndarray:
    """Hard-edged rectangles, disks and lines over a mid-gray background."""
    img = np.full((size, size), 0.5)
    yy, xx = np.mgrid[0:size, 0:size]
    for _ in range(10):
        kind = rng.integers(0, 3)
        val = float(rng.uniform(0.0, 1.0))
        if kind == 0:
            x0, y0 = rng.integers(0, size - 8, size=2)
            w, h = rng.integers(6, size // 2, size=2)
            img[y0 : y0 + h, x0 : x0 + w] = val
        elif kind == 1:
            cx, cy = rng.uniform(8, size - 8, size=2)
            r = rng.uniform(4, size / 4)
            img[(xx - cx) ** 2 + (yy - cy) ** 2 <= r * r] = val
        else:
            # 2-pixel-wide line at a random angle through a random point
            cx, cy = rng.uniform(0, size, size=2)
            theta = rng.uniform(0, np.pi)
            dist = np.abs((xx - cx) * np.sin(theta) - (yy - cy) * np.cos(theta))
            img[dist < 1.0] = val
    return clamp01(img)


def _base_gradient_blobs(rng: np.random.Generator, size: int) -> np.ndarray:
    """Smooth ramps and bumps with sparse speckle and a fine grating overlay."""
    yy, xx = np.mgrid[0:size, 0:size] / (size - 1)
    gx, gy = rng.uniform(-0.5, 0.5, size=2)
    img = 0.5 + gx * (xx - 0.5) + gy * (yy - 0.5)
    for _ in range(4):
        cx, cy = rng.uniform(0, 1, size=2)
        amp = rng.uniform(-0.35, 0.35)
        width = rng.uniform(0.08, 0.3)
        img = img + amp * np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * width**2))
    freq = rng.uniform(18, 30)
    phase = rng.uniform(0, 2 * np.pi)
    angle = rng.uniform(0, np.pi)
    img = img + 0.08 * np.sin(2 * np.pi * freq * (xx * np.cos(angle) + yy * np.sin(angle)) + phase)
    speckle = rng.random((size, size)) < 0.01
    img = np.where(speckle, rng.uniform(0, 1, size=(size, size)), img)
    return clamp01(img)


_BASE_GENERATORS = {
    "noise_texture": _base_noise_texture,
    "geometric": _base_geometric,
    "gradient_blobs": _base_gradient_blobs,
}


def generate_base_image(family: str, rng: np.random.Generator, size: int) -> np.ndarray:
    try:
        gen = _BASE_GENERATORS[family]
    except KeyError:
        raise InvalidArgument(f"unknown family {family!r}") from None
    return gen(rng, size)


def generate_synthetic_corpus(spec: SyntheticSpec, out_dir) -> Manifest:
    """Emit one blurred instance per procedurally generated base image, with the
    applied sigma recorded as ground truth; optionally sample labeled pairs."""
    spec.validate()
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    entries: list[ImageEntry] = []
    prefix = f"{spec.split}_{spec.family}"
    for i in range(spec.base_count):
        base = generate_base_image(spec.family, rng, spec.size)
        sigma = float(rng.uniform(spec.sigma_range[0], spec.sigma_range[1]))
        instance = gaussian_blur(base, sigma)
        image_id = f"{prefix}_{i:05d}"
        rel_path = f"images/{image_id}.png"
        save_png(instance, out_dir / rel_path)
        entries.append(
            ImageEntry(id=image_id, path=rel_path, split=spec.split, family=spec.family, sigma=sigma)
        )
    pairs: list[PairLabel] = []
    if spec.pair_count > 0:
        sigma_of = {e.id: e.sigma for e in entries}
        label_rng = np.random.default_rng(spec.seed + 1)
        sampled = sample_pairs([e.id for e in entries], spec.pair_count, seed=spec.seed + 2)
        for a, b in sampled:
            delta = derive_oracle_labels(sigma_of[a], sigma_of[b], spec.label_noise_prob, label_rng)
            if delta is None:
                continue
            pairs.append(canonical_pair(a, b, delta, split=spec.split))
    provenance = {
        "generator": "blurrank.synthetic",
        "spec": {
            "family": spec.family,
            "base_count": spec.base_count,
            "sigma_range": list(spec.sigma_range),
            "size": spec.size,
            "seed": spec.seed,
            "label_noise_prob": spec.label_noise_prob,
            "pair_count": spec.pair_count,
            "split": spec.split,
        },
    }
    return Manifest(images=entries, pairs=pairs, provenance=provenance, root=out_dir)


def all_pairs_labels(entries: Sequence[ImageEntry], split: str) -> list[PairLabel]:
    """Every distinct pair, labeled from ground-truth sigma (noiseless)."""
    rng = np.random.default_rng(0)
    out = []
    ordered = sorted(entries, key=lambda e: e.id)
    for i in range(len(ordered)):
        for j in range(i + 1, len(ordered)):
            a, b = ordered[i], ordered[j]
            delta = derive_oracle_labels(a.sigma, b.sigma, 0.0, rng)
            if delta is None:
                continue
            out.append(canonical_pair(a.id, b.id, delta, split=split))
    return out


# --- manifest serialization ---------------------------------------------------

def manifest_to_dict(manifest: Manifest) -> dict:
    return {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "images": [
            {
                "id": e.id,
                "path": e.path,
                "split": e.split,
                "family": e.family,
                **({"sigma": e.sigma} if e.sigma is not None else {}),
            }
            for e in manifest.images
        ],
        "pairs": [
            {"id1": p.id1, "id2": p.id2, "delta": p.delta, "split": p.split}
            for p in manifest.pairs
        ],
        "provenance": manifest.provenance,
    }


def save_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    with open(path, "w") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=1)
        fh.write("\n")


def load_manifest(path, check_files: bool = True) -> Manifest:
    path = Path(path)
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read manifest {path}: {exc}") from exc
    version = doc.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise DataError(f"unknown manifest schema version {version!r} in {path}")
    root = path.parent
    images = []
    for rec in doc.get("images", []):
        entry = ImageEntry(
            id=rec["id"],
            path=rec["path"],
            split=rec["split"],
            family=rec.get("family", ""),
            sigma=rec.get("sigma"),
        )
        if entry.split not in SPLITS:
            raise DataError(f"image {entry.id}: unknown split {entry.split!r}")
        images.append(entry)
    known = {e.id for e in images}
    if len(known) != len(images):
        raise DataError("duplicate image ids in manifest")
    pairs = []
    for rec in doc.get("pairs", []):
        for key in ("id1", "id2"):
            if rec[key] not in known:
                raise DataError(f"pair references unknown image id {rec[key]!r}")
        pairs.append(canonical_pair(rec["id1"], rec["id2"], rec["delta"], split=rec["split"]))
    if check_files:
        for e in images:
            p = root / e.path
            if not p.is_file():
                raise DataError(f"image file missing: {p}")
    return Manifest(images=images, pairs=pairs, provenance=doc.get("provenance", {}), root=root)


def manifest_stats(manifest: Manifest) -> dict:
    """Image and labeled-pair counts per split."""
    stats: dict[str, dict[str, int]] = {}
    for split in SPLITS:
        n_images = len(manifest.split_images(split))
        n_pairs = len(manifest.split_pairs(split))
        if n_images or n_pairs:
            stats[split] = {"images": n_images, "pairs": n_pairs}
    return stats


# --- judgment log -------------------------------------------------------------

def append_judgment(path, judgment: Judgment) -> None:
    rec = {
        "schema_version": JUDGMENT_SCHEMA_VERSION,
        "pair_id": judgment.pair_id,
        "annotator_id": judgment.annotator_id,
        "choice": judgment.choice,
        "timestamp": judgment.timestamp,
    }
    with open(path, "a") as fh:
        fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def read_judgment_log(path) -> list[Judgment]:
    path = Path(path)
    if not path.exists():
        return []
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: bad judgment record: {exc}") from exc
            if rec.get("schema_version") != JUDGMENT_SCHEMA_VERSION:
                raise DataError(f"{path}:{lineno}: unknown judgment schema version")
            out.append(
                Judgment(
                    pair_id=rec["pair_id"],
                    annotator_id=rec["annotator_id"],
                    choice=rec["choice"],
                    timestamp=rec["timestamp"],
                )
            )
    return out


def now_timestamp() -> float:
    return time.time()
