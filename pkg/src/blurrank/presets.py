"""Canned corpus layouts.

The fib-desk preset is the desk-scale analogue of the full labeled /
unlabeled / three-test-set layout: a labeled pool from one procedural
family, a larger unlabeled pool from a second family, and three
100-image totally-ordered test sets (4,950 pairs each) from the labeled
family, the unlabeled family, and an entirely unseen third family.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import (
    Manifest,
    SyntheticSpec,
    all_pairs_labels,
    generate_synthetic_corpus,
    save_manifest,
)

FIB_DESK = {
    "labeled_family": "noise_texture",
    "unlabeled_family": "geometric",
    "unseen_family": "gradient_blobs",
    "labeled_images": 600,
    "labeled_pairs": 1000,
    "half_split_pairs": 500,
    "unlabeled_images": 2000,
    "test_images": 100,
    "sigma_range": (0.0, 3.0),
    "size": 96,
    "label_noise_prob": 0.05,
}


def generate_fib_desk(out_dir, seed: int = 0, overrides: dict | None = None) -> Manifest:
    """Generate the fib-desk corpus under out_dir and write manifest.json."""
    cfg = {**FIB_DESK, **(overrides or {})}
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def spec(family, count, split, sub_seed, pair_count=0, noise=0.0):
        return SyntheticSpec(
            family=family,
            base_count=count,
            sigma_range=tuple(cfg["sigma_range"]),
            size=cfg["size"],
            seed=seed * 1000 + sub_seed,
            label_noise_prob=noise,
            pair_count=pair_count,
            split=split,
        )

    parts = [
        generate_synthetic_corpus(
            spec(cfg["labeled_family"], cfg["labeled_images"], "train_labeled", 1,
                 pair_count=cfg["labeled_pairs"], noise=cfg["label_noise_prob"]),
            out_dir,
        ),
        generate_synthetic_corpus(
            spec(cfg["unlabeled_family"], cfg["unlabeled_images"], "unlabeled", 2), out_dir
        ),
        generate_synthetic_corpus(
            spec(cfg["labeled_family"], cfg["test_images"], "test1", 3), out_dir
        ),
        generate_synthetic_corpus(
            spec(cfg["unlabeled_family"], cfg["test_images"], "test2", 4), out_dir
        ),
        generate_synthetic_corpus(
            spec(cfg["unseen_family"], cfg["test_images"], "test3", 5), out_dir
        ),
    ]

    images = [e for part in parts for e in part.images]
    pairs = list(parts[0].pairs)
    for split_part in parts[2:]:
        pairs.extend(all_pairs_labels(split_part.images, split_part.images[0].split))

    half_rng = np.random.default_rng(seed * 1000 + 6)
    n_labeled_pairs = len(parts[0].pairs)
    half = sorted(
        int(i) for i in half_rng.choice(n_labeled_pairs, size=cfg["half_split_pairs"], replace=False)
    )

    manifest = Manifest(
        images=images,
        pairs=pairs,
        provenance={
            "generator": "blurrank.fib_desk",
            "seed": seed,
            "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()},
            "half_split_indices": half,
        },
        root=out_dir,
    )
    save_manifest(manifest, out_dir / "manifest.json")
    return manifest
