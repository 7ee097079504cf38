#!/usr/bin/env python3
"""Render a contact sheet of synthetic joints: one row per class
(normal, void, insufficient, short), one column per slice of the stack.

Usage:
    python scripts/render_samples.py --out samples.png [--seed 0] [--image-bound 128]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from axinspect.synth import SynthConfig, plan_joint, render_joint


def find_examples(cfg: SynthConfig) -> dict:
    wanted = {None: None, "void": None, "insufficient": None, "short": None}
    for i in range(cfg.joints):
        plan = plan_joint(cfg, i)
        if wanted.get(plan.defect, "skip") is None and plan.n_slices >= 4:
            wanted[plan.defect] = (plan, i)
        if all(v is not None for v in wanted.values()):
            break
    missing = [k for k, v in wanted.items() if v is None]
    if missing:
        raise SystemExit(f"no example found for {missing}; raise --joints")
    return wanted


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("samples.png"))
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--image-bound", type=int, default=128)
    ap.add_argument("--joints", type=int, default=500)
    args = ap.parse_args()

    cfg = SynthConfig(seed=args.seed, joints=args.joints, defect_fraction=0.5,
                      roi_noise=0.3, image_bound=args.image_bound)
    examples = find_examples(cfg)

    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from matplotlib.patches import Rectangle

    rows = [(None, "normal"), ("void", "void"), ("insufficient", "insufficient"), ("short", "short")]
    max_slices = max(examples[k][0].n_slices for k, _ in rows)
    fig, axes = plt.subplots(len(rows), max_slices, figsize=(2.2 * max_slices, 2.4 * len(rows)))
    for r, (kind, label) in enumerate(rows):
        plan, idx = examples[kind]
        slices = render_joint(cfg, plan, idx)
        for c in range(max_slices):
            ax = axes[r][c]
            ax.set_xticks([])
            ax.set_yticks([])
            if c >= plan.n_slices:
                ax.set_facecolor("#111")
                ax.text(0.5, 0.5, "padded", color="#777", ha="center", va="center",
                        transform=ax.transAxes, fontsize=9)
                continue
            ax.imshow(slices[c], cmap="gray", vmin=0, vmax=255)
            roi = plan.roi
            ax.add_patch(Rectangle((roi.xmin, roi.ymin), roi.width, roi.height,
                                   fill=False, edgecolor="lime", linewidth=1.0))
            if c == 0:
                ax.set_ylabel(label, color="w", fontsize=11)
            if c == plan.focal_slice:
                ax.set_title("focal", fontsize=8, color="w")
    fig.patch.set_facecolor("#222")
    fig.tight_layout()
    fig.savefig(args.out, dpi=130, facecolor=fig.get_facecolor())
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
