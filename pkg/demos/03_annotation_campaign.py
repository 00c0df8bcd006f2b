"""Simulate a three-annotator labeling campaign against the annotation
service and export majority-voted pair labels.

Each simulated annotator answers from the ground-truth blur strengths
with a 10% chance of flipping their answer; majority voting recovers
almost all of the noiseless labels.

Run from the repository root:

    python3 demos/03_annotation_campaign.py
"""

import tempfile
from pathlib import Path

import numpy as np

from blurrank import presets, service
from blurrank.data import load_manifest, pair_id_of, sample_pairs, split_pair_id

OVERRIDES = {
    "labeled_images": 60,
    "labeled_pairs": 30,
    "half_split_pairs": 15,
    "unlabeled_images": 2,
    "test_images": 2,
    "size": 48,
}

with tempfile.TemporaryDirectory() as td:
    root = Path(td)
    presets.generate_fib_desk(root / "data", seed=0, overrides=OVERRIDES)
    manifest = load_manifest(root / "data" / "manifest.json")
    sigma = {e.id: e.sigma for e in manifest.split_images("train_labeled")}

    pairs = sample_pairs(sorted(sigma), 50, seed=1)
    campaign = service.Campaign(
        manifest=manifest,
        pair_ids=[pair_id_of(a, b) for a, b in pairs],
        log_path=root / "judgments.jsonl",
        target_annotators=3,
        seed=1,
    )
    svc = service.AnnotationService(campaign)

    rng = np.random.default_rng(7)
    for annotator in ("alice", "bob", "carol"):
        while (item := svc.next_pair(annotator)) is not None:
            a, b = split_pair_id(item["pair_id"])
            first_blurrier = sigma[a] > sigma[b]
            if rng.random() < 0.1:
                first_blurrier = not first_blurrier
            left_is_first = item["left_image_id"] == a
            choice = "left_blurrier" if first_blurrier == left_is_first else "right_blurrier"
            svc.submit_judgment(annotator, item["pair_id"], choice)

    export = svc.export_labels()
    print("export counts:", export.counts)

    agree = sum(
        1
        for p in export.labels
        if p.delta == (-1 if sigma[p.id1] > sigma[p.id2] else 1)
    )
    print(f"labels agreeing with the noiseless ground truth: {agree}/{len(campaign.pair_ids)}")
    print()
    print("The same flow is available over HTTP via `blurrank serve`, which is")
    print("what the browser annotation UI under frontend/ talks to.")
