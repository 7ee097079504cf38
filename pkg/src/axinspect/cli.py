"""Command-line pipeline: synth -> split -> preprocess -> train -> eval ->
threshold -> serve."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path


def _fractions(text: str) -> tuple[float, float, float]:
    parts = tuple(float(p) for p in text.split(","))
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated fractions")
    return parts


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(p) for p in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="axinspect",
                                     description="Follow-up X-ray solder-joint inspection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic dataset")
    p.add_argument("--out", required=True, type=Path)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--joints", type=int, default=1000)
    p.add_argument("--defect-fraction", type=float, default=0.15)
    p.add_argument("--roi-noise", type=float, default=0.0)
    p.add_argument("--image-bound", type=int, default=1024)
    p.add_argument("--board-types", type=int, default=8)

    p = sub.add_parser("split", help="board-disjoint train/val/test split")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--fractions", type=_fractions, default=(0.7, 0.15, 0.15))
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("preprocess", help="extract six-channel patches into a store")
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--store", required=True, type=Path)

    p = sub.add_parser("train", help="train a classifier on a patch store")
    p.add_argument("--train-manifest", required=True, type=Path)
    p.add_argument("--val-manifest", required=True, type=Path)
    p.add_argument("--store", required=True, type=Path)
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--log", type=Path)
    p.add_argument("--arch", choices=("cnn3d", "lstm"), default="cnn3d")
    p.add_argument("--variant", choices=("full", "shrunken"), default="full")
    p.add_argument("--lr", type=float, default=1e-5)
    p.add_argument("--decay", type=float, default=1e-6)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-balance", action="store_true",
                   help="skip benign down-sampling of the training split")

    p = sub.add_parser("eval", help="score a manifest and write the evaluation report")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--manifest", required=True, type=Path)
    p.add_argument("--store", required=True, type=Path)
    p.add_argument("--report", required=True, type=Path)
    p.add_argument("--roc-tsv", type=Path)
    p.add_argument("--grid", type=_floats, default=(0.1, 0.2, 0.3, 0.4, 0.5))

    p = sub.add_parser("threshold", help="pick the operating threshold for a recall target")
    p.add_argument("--report", required=True, type=Path)
    p.add_argument("--target", type=float, required=True)

    p = sub.add_parser("workload", help="Recall-target FPR / filtered-workload table")
    p.add_argument("reports", nargs="+", metavar="NAME=REPORT.json")
    p.add_argument("--targets", type=_floats, default=(0.90, 0.95))

    p = sub.add_parser("serve", help="run the scoring/triage HTTP service")
    p.add_argument("--checkpoint", required=True, type=Path)
    p.add_argument("--threshold", type=float, required=True)
    p.add_argument("--log", required=True, type=Path, help="append-only decision log (JSONL)")
    p.add_argument("--listen", default="127.0.0.1:8000")
    p.add_argument("--ui", type=Path, help="static triage UI bundle to mount")

    return parser


def cmd_synth(args) -> int:
    from .synth import SynthConfig, generate_synthetic

    cfg = SynthConfig(seed=args.seed, joints=args.joints, defect_fraction=args.defect_fraction,
                      roi_noise=args.roi_noise, image_bound=args.image_bound,
                      board_types=args.board_types)
    manifest = generate_synthetic(cfg, args.out)
    pos, neg = manifest.counts()
    print(f"wrote {len(manifest)} joints ({pos} defect / {neg} normal) under {args.out}")
    return 0


def cmd_split(args) -> int:
    from .ingest import parse_manifest, split_by_board, write_manifest

    manifest = parse_manifest(args.manifest)
    splits = split_by_board(manifest, args.fractions, seed=args.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    for name, split in zip(("train", "val", "test"), splits):
        out = args.out_dir / f"{name}.tsv"
        write_manifest(split, out)
        pos, neg = split.counts()
        print(f"{name}: {len(split)} joints ({pos} defect / {neg} normal) "
              f"boards={sorted(split.board_types)} -> {out}")
    return 0


def cmd_preprocess(args) -> int:
    from .ingest import parse_manifest
    from .preprocess import preprocess_dataset

    manifest = parse_manifest(args.manifest)
    written, errors = preprocess_dataset(manifest, args.store)
    print(f"wrote {len(written)} patches to {args.store}")
    for err in errors:
        print(f"error: {err}", file=sys.stderr)
    if not written:
        raise RuntimeError("no patches were written")
    return 0


def cmd_train(args) -> int:
    from .ingest import balance_downsample, parse_manifest
    from .training import TrainConfig, train_from_store

    train_m = parse_manifest(args.train_manifest)
    val_m = parse_manifest(args.val_manifest)
    if not args.no_balance:
        train_m = balance_downsample(train_m, seed=args.seed)
        pos, neg = train_m.counts()
        print(f"balanced training split: {pos} defect / {neg} normal")
    config = TrainConfig(arch=args.arch, variant=args.variant, learning_rate=args.lr,
                         decay=args.decay, batch_size=args.batch_size, epochs=args.epochs,
                         seed=args.seed)
    ck = train_from_store(train_m, val_m, args.store, config, args.checkpoint, args.log)
    print(f"checkpoint -> {args.checkpoint} ({ck.spec.arch}/{ck.spec.variant})")
    return 0


def cmd_eval(args) -> int:
    from .ingest import parse_manifest
    from .metrics import build_report
    from .models import load_checkpoint
    from .preprocess import load_store_patches
    from .training import _prepare, score_inputs

    ck = load_checkpoint(args.checkpoint)
    params = ck.to_params()
    manifest = parse_manifest(args.manifest)
    patches = load_store_patches(manifest, args.store)
    inputs, labels = _prepare(ck.spec, patches)
    report = build_report(score_inputs(params, ck.spec, inputs), labels, grid=args.grid)
    report.save(args.report)
    if args.roc_tsv:
        report.write_roc_tsv(args.roc_tsv)
    print(f"AUROC {report.auroc:.4f} over {report.n_pos} defect / {report.n_neg} normal")
    print("threshold\trecall\tfpr")
    for row in report.grid:
        print(f"{row.threshold:.2f}\t{row.recall:.4f}\t{row.fpr:.4f}")
    return 0


def cmd_threshold(args) -> int:
    from .metrics import EvalReport, select_threshold

    report = EvalReport.load(args.report)
    tau = select_threshold(report, args.target)
    print(f"{tau!r}")
    return 0


def cmd_workload(args) -> int:
    from .metrics import EvalReport, format_workload_table, workload_report

    rows = []
    for spec in args.reports:
        if "=" not in spec:
            raise ValueError(f"expected NAME=REPORT.json, got {spec!r}")
        name, path = spec.split("=", 1)
        rows.append(workload_report(EvalReport.load(path), targets=args.targets, model=name))
    print(format_workload_table(rows, targets=args.targets))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = args.listen.rpartition(":")
    app = create_app(args.checkpoint, args.threshold, args.log, ui_dir=args.ui)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port))
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "split": cmd_split,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "threshold": cmd_threshold,
    "workload": cmd_workload,
    "serve": cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except Exception as exc:  # one-line diagnostic, nonzero exit
        print(f"axinspect {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
