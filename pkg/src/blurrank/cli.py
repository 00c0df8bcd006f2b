"""Command-line entry point: gen-data / train / eval / score / serve / export-report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 runtime failure.
Every subcommand prints its resolved configuration before acting, so a
run is reproducible from its own output plus the data directory.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import evaluation, presets, scorer, trainer
from .data import load_manifest, manifest_stats, sample_pairs
from .errors import DataError, InvalidArgument
from .features import extract_features, normalize
from .imaging import load_png

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _print_config(name: str, config: dict) -> None:
    print(f"[{name}] resolved config: {json.dumps(config, sort_keys=True)}")


def _load_manifest_dir(data_dir) -> tuple:
    path = Path(data_dir) / "manifest.json"
    manifest = load_manifest(path)
    return manifest, path


def cmd_gen_data(args) -> int:
    overrides = {}
    if args.spec:
        with open(args.spec) as fh:
            overrides = json.load(fh)
    elif args.preset != "fib-desk":
        raise InvalidArgument(f"unknown preset {args.preset!r}")
    _print_config("gen-data", {"preset": args.preset, "out": str(args.out), "seed": args.seed, "overrides": overrides})
    manifest = presets.generate_fib_desk(args.out, seed=args.seed, overrides=overrides)
    stats = manifest_stats(manifest)
    print(json.dumps(stats, indent=1))
    return EXIT_OK


def cmd_train(args) -> int:
    config_doc = {}
    if args.config:
        with open(args.config) as fh:
            config_doc = json.load(fh)
    for key in ("mode", "epochs", "seed"):
        value = getattr(args, key)
        if value is not None:
            config_doc[key] = value
    config = trainer.TrainConfig.from_dict(config_doc)
    _print_config("train", {**config.to_dict(), "data": str(args.data), "out": str(args.out), "half": args.half})
    manifest, _ = _load_manifest_dir(args.data)
    features = trainer.compute_feature_table(
        manifest, splits=("train_labeled",), cache_path=Path(args.data) / "features_train.npz"
    )
    data = trainer.build_train_data(manifest, features=features, half_split=args.half)
    result = trainer.train(config, data)
    out = Path(args.out)
    trainer.save_result(
        result,
        out,
        best_checkpoint_path=out.with_suffix(".best.json"),
        history_path=out.with_suffix(".history.jsonl"),
    )
    last = result.history[-1]
    print(
        f"trained mode={config.mode} epochs={config.epochs}: "
        f"sup_loss={last.supervised_loss:.4f} self_loss={last.self_supervised_loss:.4f} "
        f"val_acc={last.val_accuracy if last.val_accuracy is not None else 'n/a'} "
        f"best_epoch={result.best_epoch}"
    )
    print(f"checkpoint written to {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    manifest, manifest_path = _load_manifest_dir(args.data)
    splits = tuple(args.splits.split(","))
    rows = []
    for ckpt in args.checkpoint:
        report = evaluation.run_benchmark(ckpt, manifest, splits=splits, manifest_path=manifest_path)
        mode = report.provenance.get("mode") or Path(ckpt).stem
        rows.append((mode, ckpt, report))
        if args.out:
            out_dir = Path(args.out)
            out_dir.mkdir(parents=True, exist_ok=True)
            evaluation.save_report(report, out_dir / f"{Path(ckpt).stem}.report.json")
    _print_config("eval", {"data": str(args.data), "splits": list(splits), "checkpoints": list(args.checkpoint)})
    header = f"{'mode':<10}" + "".join(f"{s:>10}" for s in splits)
    print(header)
    print("-" * len(header))
    for mode, _, report in rows:
        cells = []
        for s in splits:
            r = report.splits[s]
            cells.append(f"{r.srocc:>10.4f}" if r.srocc is not None else f"{'n/a':>10}")
        print(f"{mode:<10}" + "".join(cells))
    for _, ckpt, report in rows:
        print(f"\n[{ckpt}]")
        print(report.format_table())
    return EXIT_OK


def cmd_score(args) -> int:
    _print_config("score", {"checkpoint": str(args.checkpoint), "images": list(args.images)})
    params, norm, _ = scorer.load_checkpoint(args.checkpoint)
    scored = []
    for path in args.images:
        img = load_png(path)
        y, _ = scorer.forward(params, normalize(extract_features(img), norm))
        scored.append((y, path))
    for y, path in sorted(scored):
        print(f"{y:.4f}  {path}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import AnnotationService, Campaign, create_app

    manifest, _ = _load_manifest_dir(args.data)
    split_images = manifest.split_images(args.split)
    if len(split_images) < 2:
        raise DataError(f"split {args.split!r} has fewer than 2 images")
    ids = [e.id for e in split_images]
    sampled = sample_pairs(ids, args.pairs, seed=args.seed)
    pair_ids = [f"{a}::{b}" for a, b in sampled]
    log_path = Path(args.log) if args.log else Path(args.data) / "judgments.jsonl"
    _print_config(
        "serve",
        {"data": str(args.data), "split": args.split, "pairs": args.pairs, "seed": args.seed,
         "port": args.port, "log": str(log_path), "static": args.static},
    )
    campaign = Campaign(
        manifest=manifest, pair_ids=pair_ids, log_path=log_path,
        target_annotators=args.annotators, seed=args.seed,
    )
    app = create_app(AnnotationService(campaign), static_dir=args.static)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def cmd_export_report(args) -> int:
    runs_dir = Path(args.runs)
    reports = sorted(runs_dir.glob("*.report.json"))
    if not reports:
        raise DataError(f"no *.report.json files under {runs_dir}")
    _print_config("export-report", {"runs": str(runs_dir), "n_reports": len(reports)})
    by_mode: dict[str, dict[str, list[float]]] = {}
    for path in reports:
        doc = evaluation.load_report(path)
        mode = doc.get("provenance", {}).get("mode") or path.stem
        cell = by_mode.setdefault(mode, {})
        for split, rec in doc["splits"].items():
            if rec["srocc"] is not None:
                cell.setdefault(split, []).append(rec["srocc"])
    splits = sorted({s for cell in by_mode.values() for s in cell})
    header = f"{'mode':<10}" + "".join(f"{s:>20}" for s in splits)
    print(header)
    print("-" * len(header))
    for mode in sorted(by_mode):
        cells = []
        for s in splits:
            vals = by_mode[mode].get(s, [])
            if vals:
                cells.append(f"{np.mean(vals):>12.4f} ±{np.std(vals):>5.4f}")
            else:
                cells.append(f"{'n/a':>20}")
        print(f"{mode:<10}" + "".join(cells))
        for s in splits:
            vals = by_mode[mode].get(s, [])
            print(f"  {mode}/{s}: n={len(vals)} values={[round(v, 4) for v in vals]}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="blurrank", description="Rank-supervised blur assessment pipeline")
    parser.add_argument("--verbose", action="store_true", help="verbose output")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="generate a synthetic corpus")
    p.add_argument("--preset", default="fib-desk")
    p.add_argument("--spec", help="JSON file of preset overrides")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train a scorer")
    p.add_argument("--config", help="JSON file of TrainConfig fields")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", choices=trainer.MODES)
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--half", action="store_true", help="use the recorded half label split")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="run the test-set benchmark")
    p.add_argument("--checkpoint", action="append", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--splits", default="test1,test2,test3")
    p.add_argument("--out", help="directory to write per-checkpoint report JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="score images with a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("images", nargs="+")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--data", required=True)
    p.add_argument("--split", default="train_labeled")
    p.add_argument("--pairs", type=int, default=20)
    p.add_argument("--annotators", type=int, default=3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--log")
    p.add_argument("--static", help="directory with the built annotation UI")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("export-report", help="aggregate multi-seed eval reports")
    p.add_argument("--runs", required=True)
    p.set_defaults(func=cmd_export_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else EXIT_USAGE
    try:
        return args.func(args)
    except (DataError, InvalidArgument) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
