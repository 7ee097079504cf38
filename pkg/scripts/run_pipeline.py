#!/usr/bin/env python3
"""Desk-scale end-to-end experiment: synthetic data -> both models -> report.

Generates a seeded dataset, splits it board-disjoint, trains the shrunken
variants of both architectures, evaluates on the held-out test boards, picks
operating thresholds on validation recall targets, and prints the workload
table.  Writes all artifacts (manifests, patch store, checkpoints, reports,
ROC plot data) under --out.

Usage:
    python scripts/run_pipeline.py --out runs/demo [--joints 2000] [--seed 2026]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from axinspect.ingest import balance_downsample, split_by_board, write_manifest
from axinspect.metrics import (
    build_report,
    confusion_at,
    format_workload_table,
    select_threshold,
    workload_report,
)
from axinspect.preprocess import load_store_patches, preprocess_dataset
from axinspect.synth import SynthConfig, generate_synthetic
from axinspect.training import TrainConfig, train_from_store, _prepare, score_inputs
from axinspect.models import load_checkpoint


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, required=True)
    ap.add_argument("--joints", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=2026)
    ap.add_argument("--image-bound", type=int, default=128)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--cnn3d-epochs", type=int, default=25)
    ap.add_argument("--lstm-epochs", type=int, default=10)
    ap.add_argument("--plot", action="store_true", help="also render roc.png (needs matplotlib)")
    args = ap.parse_args()

    out = args.out
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()

    print("== synth ==")
    synth_cfg = SynthConfig(seed=args.seed, joints=args.joints, defect_fraction=0.15,
                            roi_noise=0.2, image_bound=args.image_bound)
    manifest = generate_synthetic(synth_cfg, out / "data")
    print(f"  {len(manifest)} joints, defect/normal = {manifest.counts()}")

    print("== split (board-disjoint 70/15/15) ==")
    train_m, val_m, test_m = split_by_board(manifest, (0.7, 0.15, 0.15), seed=0)
    train_b = balance_downsample(train_m, seed=0)
    for name, m in (("train(balanced)", train_b), ("val", val_m), ("test", test_m)):
        write_manifest(m, out / f"{name.split('(')[0]}.tsv")
        print(f"  {name}: {len(m)} joints {m.counts()} boards={sorted(m.board_types)}")

    print("== preprocess ==")
    store = out / "store"
    written, errors = preprocess_dataset(manifest, store)
    print(f"  {len(written)} patches, {len(errors)} errors")

    reports = {}
    rows = []
    for arch, epochs in (("cnn3d", args.cnn3d_epochs), ("lstm", args.lstm_epochs)):
        print(f"== train {arch} (shrunken, lr {args.lr}, {epochs} epochs) ==")
        config = TrainConfig(arch=arch, variant="shrunken", learning_rate=args.lr,
                             batch_size=32, epochs=epochs, seed=7)
        ck_path = out / f"{arch}.ck"
        t1 = time.monotonic()
        train_from_store(train_b, val_m, store, config, ck_path, out / f"{arch}.log")
        print(f"  trained in {time.monotonic() - t1:.0f}s -> {ck_path}")

        ck = load_checkpoint(ck_path)
        params = ck.to_params()
        vi, vl = _prepare(ck.spec, load_store_patches(val_m, store))
        ti, tl = _prepare(ck.spec, load_store_patches(test_m, store))
        val_scores = score_inputs(params, ck.spec, vi)
        test_scores = score_inputs(params, ck.spec, ti)
        val_report = build_report(val_scores, vl)
        test_report = build_report(test_scores, tl)
        test_report.save(out / f"{arch}_test_report.json")
        test_report.write_roc_tsv(out / f"{arch}_roc.tsv")
        reports[arch] = test_report

        tau = select_threshold(val_report, 0.90)
        cm = confusion_at(test_scores, tl, tau)
        print(f"  val AUROC {val_report.auroc:.4f}  test AUROC {test_report.auroc:.4f}")
        print(f"  operating threshold (val recall>=0.90): {tau:.4f}")
        print(f"  test @ tau: recall {cm.recall:.4f}  FPR {cm.fpr:.4f}  "
              f"filtered workload {1 - cm.fpr:.2%}")
        rows.append(workload_report(test_report, model=arch))

    print("== workload summary (test split) ==")
    print(format_workload_table(rows))
    print(f"total wall clock: {(time.monotonic() - t0) / 60:.1f} min")

    if args.plot:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(5, 5))
        for arch, report in reports.items():
            xs = [p[0] for p in report.roc]
            ys = [p[1] for p in report.roc]
            ax.plot(xs, ys, label=f"{arch} (AUROC {report.auroc:.3f})")
        ax.plot([0, 1], [0, 1], "k:", lw=0.8)
        ax.set_xlabel("FPR")
        ax.set_ylabel("TPR (recall)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(out / "roc.png", dpi=150)
        print(f"wrote {out / 'roc.png'}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
