"""Deterministic synthetic AXI dataset generator.

Renders grayscale slice stacks of solder-joint scenes: a bright disk on a
textured board background with neighboring disks, sharpest at a per-joint
focal slice and increasingly blurred away from it.  Defect joints carry one
of three primitives (internal void, insufficient solder, short to a
neighbor).  Recorded ROIs are optionally corrupted (shifted or shrunk) while
ground truth stays joint-level, mimicking unreliable AXI ROIs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .ingest import DatasetManifest, JointRecord, Roi, write_manifest
from .pgm import write_pgm

# Observed production slice-count frequencies for pin through-hole joints
# (1..6 slices); four-slice stacks dominate.
SLICE_COUNT_WEIGHTS = (763, 1694, 7576, 466029, 41345, 945)
DEFAULT_SLICE_DIST = tuple(c / sum(SLICE_COUNT_WEIGHTS) for c in SLICE_COUNT_WEIGHTS)

DEFECT_KINDS = ("void", "insufficient", "short")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    joints: int = 1000
    defect_fraction: float = 0.15
    slice_dist: tuple[float, ...] = DEFAULT_SLICE_DIST
    roi_noise: float = 0.0  # probability the recorded ROI is shifted/shrunk
    image_bound: int = 1024
    board_types: int = 8

    def __post_init__(self):
        if not 0.0 <= self.defect_fraction <= 1.0:
            raise ValueError(f"defect_fraction must be in [0,1], got {self.defect_fraction}")
        if not 0.0 <= self.roi_noise <= 1.0:
            raise ValueError(f"roi_noise must be in [0,1], got {self.roi_noise}")
        if len(self.slice_dist) != 6 or abs(sum(self.slice_dist) - 1.0) > 1e-6:
            raise ValueError("slice_dist needs 6 probabilities summing to 1")
        if self.image_bound < 32:
            raise ValueError(f"image_bound too small: {self.image_bound}")
        if self.joints < 1:
            raise ValueError("need at least one joint")
        if self.board_types < 3:
            raise ValueError("need at least 3 board types (board-disjoint splits)")


@dataclass
class JointPlan:
    """Sampled per-joint scene description (rendering happens separately)."""

    joint_id: str
    board_type: str
    n_slices: int
    focal_slice: int
    defect: str | None
    center: tuple[float, float]
    radius: float
    solder_level: float
    neighbors: list[tuple[float, float, float]]  # (cx, cy, r)
    detail: dict
    roi: Roi
    true_roi: Roi


def _joint_rng(config: SynthConfig, index: int, stream: int) -> np.random.Generator:
    # stream 0: scene sampling, stream 1: pixel noise
    return np.random.default_rng(np.random.SeedSequence((config.seed, index, stream)))


def plan_joint(config: SynthConfig, index: int) -> JointPlan:
    """Sample everything about one joint except the pixels."""
    rng = _joint_rng(config, index, 0)
    s = float(config.image_bound)

    board = f"B{int(rng.integers(config.board_types)):02d}"
    n_slices = int(rng.choice(6, p=np.asarray(config.slice_dist))) + 1
    focal = int(rng.integers(n_slices))
    is_defect = bool(rng.random() < config.defect_fraction)
    kind = str(rng.choice(DEFECT_KINDS)) if is_defect else None

    radius = s * rng.uniform(0.07, 0.11)
    cx = rng.uniform(0.30 * s, 0.70 * s)
    cy = rng.uniform(0.30 * s, 0.70 * s)
    solder = rng.uniform(175.0, 215.0)

    # neighbors sit outside the 1.5x crop window (half-width ~1.7r) so that a
    # bridge is the only bright structure normally reaching the window edge
    neighbors = []
    for _ in range(int(rng.integers(2, 5))):
        ang = rng.uniform(0, 2 * np.pi)
        dist = radius * rng.uniform(3.0, 3.9)
        nr = radius * rng.uniform(0.85, 1.15)
        neighbors.append((cx + dist * np.cos(ang), cy + dist * np.sin(ang), nr))

    detail: dict = {}
    if kind == "void":
        ang = rng.uniform(0, 2 * np.pi)
        off = rng.uniform(0, 0.30) * radius
        detail = {
            "hole_cx": cx + off * np.cos(ang),
            "hole_cy": cy + off * np.sin(ang),
            "hole_r": radius * rng.uniform(0.35, 0.55),
            "darkness": rng.uniform(0.15, 0.35),
        }
    elif kind == "insufficient":
        detail = {"scale": rng.uniform(0.42, 0.58)}  # rendered radius <= 60% of nominal
    elif kind == "short":
        target = min(neighbors, key=lambda n: (n[0] - cx) ** 2 + (n[1] - cy) ** 2)
        detail = {"to": target[:2], "width": radius * rng.uniform(0.40, 0.58)}

    half = 1.15 * radius
    true_roi = _clip_roi(cx - half, cx + half, cy - half, cy + half, config.image_bound)
    roi = true_roi
    if rng.random() < config.roi_noise:
        w, h = true_roi.width, true_roi.height
        if rng.random() < 0.5:  # shift by up to 30% of the box size
            dx = rng.uniform(-0.3, 0.3) * w
            dy = rng.uniform(-0.3, 0.3) * h
            roi = _clip_roi(true_roi.xmin + dx, true_roi.xmax + dx,
                            true_roi.ymin + dy, true_roi.ymax + dy, config.image_bound)
        else:  # shrink to 60% around the center
            mx, my = (true_roi.xmin + true_roi.xmax) / 2, (true_roi.ymin + true_roi.ymax) / 2
            roi = _clip_roi(mx - 0.3 * w, mx + 0.3 * w, my - 0.3 * h, my + 0.3 * h, config.image_bound)

    return JointPlan(
        joint_id=f"J{index:05d}", board_type=board, n_slices=n_slices, focal_slice=focal,
        defect=kind, center=(cx, cy), radius=radius, solder_level=solder,
        neighbors=neighbors, detail=detail, roi=roi, true_roi=true_roi,
    )


def _clip_roi(x0: float, x1: float, y0: float, y1: float, bound: int) -> Roi:
    xmin = int(max(0, min(x0, bound - 2)))
    ymin = int(max(0, min(y0, bound - 2)))
    xmax = int(min(bound, max(x1, xmin + 1)))
    ymax = int(min(bound, max(y1, ymin + 1)))
    return Roi(xmin=xmin, xmax=xmax, ymin=ymin, ymax=ymax)


def plan_dataset(config: SynthConfig) -> list[JointPlan]:
    return [plan_joint(config, i) for i in range(config.joints)]


# ---------------------------------------------------------------------------
# rendering


def _blend_disk(canvas: np.ndarray, cx: float, cy: float, r: float, value: float, edge: float = 1.5):
    """Alpha-blend an antialiased disk onto the canvas (sub-window only)."""
    s = canvas.shape[0]
    x0, x1 = max(0, int(cx - r - 2 * edge)), min(s, int(np.ceil(cx + r + 2 * edge)) + 1)
    y0, y1 = max(0, int(cy - r - 2 * edge)), min(s, int(np.ceil(cy + r + 2 * edge)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    d = np.hypot(xx - cx, yy - cy)
    alpha = np.clip((r - d) / edge + 0.5, 0.0, 1.0).astype(np.float32)
    sub = canvas[y0:y1, x0:x1]
    sub += alpha * (value - sub)


def _blend_capsule(canvas: np.ndarray, p0, p1, width: float, value: float, edge: float = 1.5):
    """Alpha-blend a thick line segment (solder bridge) onto the canvas."""
    s = canvas.shape[0]
    r = width / 2
    x0 = max(0, int(min(p0[0], p1[0]) - r - 2 * edge))
    x1 = min(s, int(np.ceil(max(p0[0], p1[0]) + r + 2 * edge)) + 1)
    y0 = max(0, int(min(p0[1], p1[1]) - r - 2 * edge))
    y1 = min(s, int(np.ceil(max(p0[1], p1[1]) + r + 2 * edge)) + 1)
    if x0 >= x1 or y0 >= y1:
        return
    yy, xx = np.mgrid[y0:y1, x0:x1]
    vx, vy = p1[0] - p0[0], p1[1] - p0[1]
    seg_len2 = max(vx * vx + vy * vy, 1e-9)
    t = np.clip(((xx - p0[0]) * vx + (yy - p0[1]) * vy) / seg_len2, 0.0, 1.0)
    d = np.hypot(xx - (p0[0] + t * vx), yy - (p0[1] + t * vy))
    alpha = np.clip((r - d) / edge + 0.5, 0.0, 1.0).astype(np.float32)
    sub = canvas[y0:y1, x0:x1]
    sub += alpha * (value - sub)


def _board_background(rng: np.random.Generator, side: int, board_index: int) -> np.ndarray:
    base = 26.0 + 4.0 * (board_index % 4)
    amp = 5.0 + 2.0 * (board_index % 3)
    coarse = rng.normal(size=(max(side // 16, 4),) * 2)
    coarse = gaussian_filter(coarse, sigma=1.5)
    # nearest-neighbor upscale is plenty for a soft texture
    reps = int(np.ceil(side / coarse.shape[0]))
    texture = np.kron(coarse, np.ones((reps, reps)))[:side, :side]
    return (base + amp * texture).astype(np.float32)


def render_joint(config: SynthConfig, plan: JointPlan, index: int) -> list[np.ndarray]:
    """Render the slice stack for one joint; deterministic per (config, index)."""
    rng = _joint_rng(config, index, 1)
    side = config.image_bound
    board_index = int(plan.board_type[1:])

    sharp = _board_background(rng, side, board_index)
    cx, cy = plan.center
    for nx, ny, nr in plan.neighbors:
        _blend_disk(sharp, nx, ny, nr, plan.solder_level * 0.92)

    r_drawn = plan.radius
    if plan.defect == "insufficient":
        r_drawn = plan.radius * plan.detail["scale"]
    _blend_disk(sharp, cx, cy, r_drawn, plan.solder_level)

    if plan.defect == "short":
        _blend_capsule(sharp, (cx, cy), plan.detail["to"], plan.detail["width"],
                       plan.solder_level * 0.97)
    if plan.defect == "void":
        hole = np.zeros_like(sharp)
        _blend_disk(hole, plan.detail["hole_cx"], plan.detail["hole_cy"], plan.detail["hole_r"], 1.0)
        sharp = sharp * (1.0 - hole * (1.0 - plan.detail["darkness"]))

    blur_step = max(0.06 * plan.radius, 0.6)
    slices = []
    for i in range(plan.n_slices):
        sigma = blur_step * abs(i - plan.focal_slice)
        img = gaussian_filter(sharp, sigma=sigma) if sigma > 0 else sharp.copy()
        img = img + rng.normal(0.0, 2.0, size=img.shape).astype(np.float32)
        slices.append(np.clip(img, 0.0, 255.0).astype(np.uint8))
    return slices


def generate_synthetic(config: SynthConfig, out_dir: str | Path) -> DatasetManifest:
    """Render the dataset under ``out_dir`` and return its manifest.

    Writes ``images/<joint>_s<k>.pgm`` plus ``manifest.tsv``; byte-identical
    for identical configs.
    """
    out_dir = Path(out_dir)
    images_dir = out_dir / "images"
    images_dir.mkdir(parents=True, exist_ok=True)

    records = []
    for i in range(config.joints):
        plan = plan_joint(config, i)
        slices = render_joint(config, plan, i)
        rel_paths = []
        for k, img in enumerate(slices):
            rel = f"images/{plan.joint_id}_s{k:02d}.pgm"
            write_pgm(out_dir / rel, img)
            rel_paths.append(rel)
        records.append(JointRecord(
            joint_id=plan.joint_id, board_type=plan.board_type, joint_type="pth",
            roi=plan.roi, slice_paths=tuple(rel_paths),
            label="defect" if plan.defect else "normal",
        ))

    manifest = DatasetManifest(records=records, image_bound=config.image_bound, root=out_dir)
    write_manifest(manifest, out_dir / "manifest.tsv")
    return manifest
