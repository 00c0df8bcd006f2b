"""Acceptance suite: one test per release criterion, each printing a verdict line.

The learning criteria (intra-domain level, semi-supervised gain, label
efficiency) share one corpus and one set of multi-seed training runs,
built once per session by the fixtures below.
"""

import itertools
import math

import numpy as np
import pytest
from fastapi.testclient import TestClient

from blurrank import data, evaluation, imaging, losses, presets, scorer, service, trainer
from blurrank.data import load_manifest
from blurrank.features import FEATURE_DIM

SEEDS = (0, 1, 2, 3, 4)
EPOCHS = 100


def _verdict(name, passed, detail):
    print(f"{name}: {'PASS' if passed else 'FAIL'} ({detail})")
    assert passed, f"{name} failed: {detail}"


# -- shared corpus and training runs --------------------------------------


@pytest.fixture(scope="session")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_corpus")
    presets.generate_fib_desk(out, seed=0)
    return out, load_manifest(out / "manifest.json")


@pytest.fixture(scope="session")
def runs(corpus, tmp_path_factory):
    """Mean test SROCC per (mode, label budget), over 5 seeds each."""
    out_dir, manifest = corpus
    ckpt_dir = tmp_path_factory.mktemp("acceptance_runs")
    feats = trainer.compute_feature_table(
        manifest, splits=("train_labeled",), cache_path=out_dir / "features_train.npz"
    )
    results = {}
    for half in (False, True):
        train_data = trainer.build_train_data(manifest, features=dict(feats), half_split=half)
        for mode in ("baseline", "qrc", "rankiqa"):
            if half and mode == "rankiqa":
                continue
            key = (mode, "half" if half else "full")
            rows = []
            for seed in SEEDS:
                cfg = trainer.TrainConfig(mode=mode, epochs=EPOCHS, seed=seed)
                result = trainer.train(cfg, train_data)
                ckpt = ckpt_dir / f"{mode}_{key[1]}_s{seed}.json"
                scorer.save_checkpoint(ckpt, result.best_params, result.normalizer, cfg.to_dict())
                report = evaluation.run_benchmark(ckpt, manifest)
                rows.append({name: r.srocc for name, r in report.splits.items()})
            results[key] = {
                split: float(np.mean([row[split] for row in rows])) for split in rows[0]
            }
    return results


# -- parameter-space finite differences for the gradient criterion ---------


def _param_slots(params):
    for arr in (params.w1, params.b1, params.w2):
        for idx in np.ndindex(arr.shape):
            yield arr, idx
    yield None, None  # the scalar output bias


def _composite(params, feature_rows, loss_fn):
    scores = []
    caches = []
    for f in feature_rows:
        y, cache = scorer.forward(params, f)
        scores.append(y)
        caches.append(cache)
    out = loss_fn(*scores)
    grads = scorer.ScorerParams.zeros_like(params)
    for cache, g in zip(caches, out.score_grads):
        if g != 0.0:
            part = scorer.backward(params, cache, g)
            grads.w1 += part.w1
            grads.b1 += part.b1
            grads.w2 += part.w2
            grads.b2 += part.b2
    return out, grads


def _fd_gradient_check(loss_fn, n_images, kink_fn, n_instances=100, h=1e-5, tol=1e-4):
    """Max relative error between analytic and central-difference gradients."""
    worst = 0.0
    accepted = 0
    trial = 0
    while accepted < n_instances:
        trial += 1
        assert trial < 20 * n_instances, "could not find enough kink-free instances"
        rng = np.random.default_rng(10_000 + trial)
        params = scorer.init_params(int(rng.integers(1 << 30)))
        feats = [rng.normal(size=FEATURE_DIM) for _ in range(n_images)]
        scores = [scorer.forward(params, f)[0] for f in feats]
        if kink_fn(scores):
            continue
        accepted += 1
        _, analytic = _composite(params, feats, loss_fn)
        for arr, idx in _param_slots(params):
            if arr is None:
                params.b2 += h
                up = _composite(params, feats, loss_fn)[0].value
                params.b2 -= 2 * h
                down = _composite(params, feats, loss_fn)[0].value
                params.b2 += h
                a = analytic.b2
            else:
                arr[idx] += h
                up = _composite(params, feats, loss_fn)[0].value
                arr[idx] -= 2 * h
                down = _composite(params, feats, loss_fn)[0].value
                arr[idx] += h
                a = analytic.w1[idx] if arr is params.w1 else (
                    analytic.b1[idx] if arr is params.b1 else analytic.w2[idx]
                )
            fd = (up - down) / (2 * h)
            rel = abs(a - fd) / max(abs(a), abs(fd), 1e-3)
            worst = max(worst, rel)
    return worst


class TestP1GradientFidelity:
    def test_p1_analytic_gradients_match_finite_differences(self):
        eps = 0.05
        cases = {
            "ranking": (
                lambda y1, y2: losses.pairwise_ranking_loss(y1, y2, -1, eps),
                2,
                lambda s: abs((s[1] - s[0]) * -1 + eps) < 1e-3,
            ),
            "consistency": (
                lambda y1, y2, y1d, y2d: losses.qrc_loss(y1, y2, y1d, y2d, eps),
                4,
                lambda s: abs(s[0] - s[1]) < 1e-3
                or abs((s[3] - s[2]) * (-1 if s[0] < s[1] else 1) + eps) < 1e-3,
            ),
            "degradation": (
                lambda y, yd: losses.pairwise_degradation_loss(y, yd, eps),
                2,
                lambda s: abs((s[1] - s[0]) + eps) < 1e-3,
            ),
            "smooth": (
                lambda y, yd: losses.lsep_loss(y, yd),
                2,
                lambda s: False,
            ),
        }
        worst = {
            name: _fd_gradient_check(fn, n, kink) for name, (fn, n, kink) in cases.items()
        }
        detail = ", ".join(f"{k} max rel err {v:.2e}" for k, v in worst.items())
        _verdict("P1 gradient fidelity", max(worst.values()) < 1e-4, detail)


class TestP2RankCorrelationOracle:
    @staticmethod
    def _brute_ranks(values):
        values = np.asarray(values, dtype=np.float64)
        ranks = np.empty(len(values))
        for i, v in enumerate(values):
            below = np.sum(values < v)
            equal = np.sum(values == v)
            ranks[i] = below + (equal + 1) / 2.0
        return ranks

    def test_p2_matches_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        worst = 0.0
        checked = 0
        while checked < 1000:
            n = int(rng.integers(2, 21))
            pred = rng.normal(size=n)
            gt = rng.normal(size=n)
            if rng.random() < 0.5:  # quantize to force ties
                pred = np.round(pred, 0)
                gt = np.round(gt, 0)
            if len(set(gt)) < 2 or len(set(pred)) < 2:
                continue
            checked += 1
            got = evaluation.srocc(pred, gt)
            rp = self._brute_ranks(pred)
            rg = self._brute_ranks(gt)
            expected = float(np.corrcoef(rp, rg)[0, 1])
            worst = max(worst, abs(got - expected))
        # the no-ties shortcut 1 - 6*sum(d^2)/(n*(n^2-1))
        worst_shortcut = 0.0
        for trial in range(1000):
            n = int(rng.integers(2, 21))
            pred = rng.permutation(n).astype(float)
            gt = rng.permutation(n).astype(float)
            d = self._brute_ranks(pred) - self._brute_ranks(gt)
            shortcut = 1.0 - 6.0 * float(np.sum(d * d)) / (n * (n * n - 1))
            worst_shortcut = max(worst_shortcut, abs(evaluation.srocc(pred, gt) - shortcut))
        _verdict(
            "P2 SROCC oracle equivalence",
            worst <= 1e-12 and worst_shortcut <= 1e-12,
            f"oracle max dev {worst:.2e}, shortcut max dev {worst_shortcut:.2e}",
        )


class TestP3LossIdentities:
    GRID = [round(0.1 * k, 1) for k in range(11)]

    def test_p3_identities_on_exhaustive_grids(self):
        eps = 0.1
        ok = True
        for y1, y2 in itertools.product(self.GRID, repeat=2):
            for delta in (-1, 1):
                a = losses.pairwise_ranking_loss(y1, y2, delta, eps)
                b = losses.pairwise_ranking_loss(y2, y1, -delta, eps)
                ok &= a.value == b.value
                ok &= a.score_grads == (b.score_grads[1], b.score_grads[0])
                if (y2 - y1) * delta + eps <= 0:
                    ok &= a.value == 0.0
            ok &= losses.pairwise_ranking_loss(y1, y1, 1, eps).value == eps
        for y1, y2, y1d, y2d in itertools.product(self.GRID, repeat=4):
            a = losses.qrc_loss(y1, y2, y1d, y2d, eps)
            b = losses.qrc_loss(y2, y1, y2d, y1d, eps)
            ok &= a.value == b.value and a.skipped == b.skipped
            g = b.score_grads
            ok &= a.score_grads == (g[1], g[0], g[3], g[2])
        _verdict(
            "P3 loss identities",
            ok,
            "swap symmetry, tie margin, zero beyond margin, pseudo-label order invariance",
        )


class TestP4QuadrupletConsistency:
    def test_p4_shared_degradation_preserves_order(self):
        sigmas = np.linspace(0.0, 5.0, 50)
        degradations = np.linspace(0.0, 6.0, 20)
        formal_ok = all(
            math.hypot(sa, sd) < math.hypot(sb, sd)
            for sa, sb in itertools.combinations(sigmas, 2)
            for sd in degradations
        )
        # empirical: shared-kernel degradation of two blur levels of one
        # texture keeps the variance-of-Laplacian ordering; sigmas start
        # at the kernel's small-sigma identity cutoff because below it the
        # two "differently blurred" images are bit-identical
        rng = np.random.default_rng(4)
        preserved = 0
        n = 1000
        for k in range(n):
            base = np.random.default_rng(40_000 + k % 50).random((96, 96))
            sa, sb = np.sort(rng.uniform(0.3, 3.0, size=2))
            xa = imaging.gaussian_blur(base, sa)
            xb = imaging.gaussian_blur(base, sb)
            q = data.make_quadruplet(xa, xb, rng=rng)
            if imaging.laplacian_variance(q.x1d) > imaging.laplacian_variance(q.x2d):
                preserved += 1
        _verdict(
            "P4 quadruplet consistency",
            formal_ok and preserved / n >= 0.99,
            f"formal grid {'holds' if formal_ok else 'violated'}, "
            f"empirical preservation {preserved / n:.3f} >= 0.99",
        )


class TestP5IntraDomain:
    def test_p5_intra_domain_srocc(self, runs):
        got = runs[("qrc", "full")]["test1"]
        _verdict("P5 intra-domain learning", got >= 0.95, f"mean test1 SROCC {got:.4f} >= 0.95")


class TestP6SemiSupervisedGain:
    def test_p6_unseen_family_gain(self, runs):
        qrc = runs[("qrc", "full")]["test3"]
        base = runs[("baseline", "full")]["test3"]
        rankiqa = runs[("rankiqa", "full")]["test3"]
        _verdict(
            "P6 semi-supervised gain",
            qrc - base > 0 and qrc >= rankiqa,
            f"test3 qrc {qrc:.4f} vs baseline {base:.4f} (gain {qrc - base:+.4f}), "
            f"vs degradation-pair mode {rankiqa:.4f}",
        )


class TestP7LabelEfficiency:
    def test_p7_half_label_budget(self, runs):
        drop_qrc = runs[("qrc", "full")]["test3"] - runs[("qrc", "half")]["test3"]
        drop_base = runs[("baseline", "full")]["test3"] - runs[("baseline", "half")]["test3"]
        _verdict(
            "P7 label efficiency",
            drop_qrc <= drop_base,
            f"test3 SROCC drop at half labels: qrc {drop_qrc:+.4f} <= baseline {drop_base:+.4f}",
        )


class TestP8Determinism:
    def test_p8_bit_identical_checkpoints_and_reports(self, corpus, tmp_path):
        out_dir, manifest = corpus
        feats = trainer.compute_feature_table(
            manifest, splits=("train_labeled",), cache_path=out_dir / "features_train.npz"
        )
        train_data = trainer.build_train_data(manifest, features=dict(feats))
        cfg = trainer.TrainConfig(mode="qrc", epochs=3, seed=7, self_pool_size=40)
        ckpt = tmp_path / "ckpt.json"
        report_path = tmp_path / "report.json"
        blobs = []
        for _ in range(2):
            result = trainer.train(cfg, train_data)
            scorer.save_checkpoint(ckpt, result.best_params, result.normalizer, cfg.to_dict())
            report = evaluation.run_benchmark(
                ckpt, manifest, manifest_path=out_dir / "manifest.json"
            )
            evaluation.save_report(report, report_path)
            blobs.append((ckpt.read_bytes(), report_path.read_bytes()))
        _verdict(
            "P8 determinism",
            blobs[0] == blobs[1],
            "two identically seeded runs: checkpoint and report bytes compared",
        )


class TestP9AggregationCorrectness:
    def test_p9_noisy_campaign_majority_labels(self, corpus, tmp_path):
        _, manifest = corpus
        sigma = {e.id: e.sigma for e in manifest.split_images("train_labeled")}
        ids = sorted(sigma)
        sampled = data.sample_pairs(ids, 1000, seed=9)
        pair_ids = [data.pair_id_of(a, b) for a, b in sampled if sigma[a] != sigma[b]]
        assert len(pair_ids) == 1000
        campaign = service.Campaign(
            manifest=manifest, pair_ids=pair_ids, log_path=tmp_path / "judgments.jsonl",
            target_annotators=3, seed=9,
        )
        svc = service.AnnotationService(campaign)
        client = TestClient(service.create_app(svc))
        rng = np.random.default_rng(99)
        for annotator in ("sim_a", "sim_b", "sim_c"):
            while True:
                doc = client.get("/api/pairs/next", params={"annotator": annotator}).json()
                if doc["done"]:
                    break
                a, b = data.split_pair_id(doc["pair_id"])
                first_blurrier = sigma[a] > sigma[b]
                if rng.random() < 0.1:
                    first_blurrier = not first_blurrier
                left_is_first = doc["left_image_id"] == a
                choice = (
                    "left_blurrier" if first_blurrier == left_is_first else "right_blurrier"
                )
                r = client.post(
                    "/api/judgments",
                    json={"annotator_id": annotator, "pair_id": doc["pair_id"], "choice": choice},
                )
                assert r.status_code == 200
        export = svc.export_labels()
        truth = {
            pid: (-1 if sigma[data.split_pair_id(pid)[0]] > sigma[data.split_pair_id(pid)[1]] else 1)
            for pid in pair_ids
        }
        agree = sum(1 for p in export.labels if p.delta == truth[data.pair_id_of(p.id1, p.id2)])
        rate = agree / len(pair_ids)
        replay = service.AnnotationService(campaign).export_labels()
        replay_ok = replay.labels == export.labels and replay.counts == export.counts
        _verdict(
            "P9 aggregation correctness",
            rate >= 0.95 and replay_ok,
            f"majority agreement {rate:.3f} >= 0.95 on 1000 pairs, "
            f"log replay identical: {replay_ok}",
        )
