"""Joint-level dataset records: manifest parsing, board-disjoint splits,
class balancing.

Manifest format (external interface): UTF-8 lines, tab-separated columns
``joint_id board_type joint_type slice_index xmin xmax ymin ymax label
image_path``, one row per slice, header lines starting with ``#``.  The
first header line may carry ``image_bound=<pixels>``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LABELS = ("normal", "defect")
MAX_SLICES = 6
DEFAULT_IMAGE_BOUND = 1024

_COLUMNS = ("joint_id", "board_type", "joint_type", "slice_index",
            "xmin", "xmax", "ymin", "ymax", "label", "image_path")
_ID_RE = re.compile(r"^[A-Za-z0-9._-]+$")


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class Roi:
    """AXI-reported bounding box of the inspected joint (may be noisy)."""

    xmin: int
    xmax: int
    ymin: int
    ymax: int

    def __post_init__(self):
        if not (self.xmin < self.xmax and self.ymin < self.ymax):
            raise ManifestError(f"degenerate ROI {self}")
        if min(self.xmin, self.ymin) < 0:
            raise ManifestError(f"negative ROI coordinate in {self}")

    @property
    def width(self) -> int:
        return self.xmax - self.xmin

    @property
    def height(self) -> int:
        return self.ymax - self.ymin

    def check_bound(self, image_bound: int) -> None:
        if max(self.xmax, self.ymax) > image_bound:
            raise ManifestError(f"ROI {self} exceeds image bound {image_bound}")


@dataclass(frozen=True)
class JointRecord:
    """One solder joint: identity, ROI and its ordered slice images."""

    joint_id: str
    board_type: str
    joint_type: str
    roi: Roi
    slice_paths: tuple[str, ...]
    label: str

    def __post_init__(self):
        if not 1 <= len(self.slice_paths) <= MAX_SLICES:
            raise ManifestError(
                f"joint {self.joint_id} has {len(self.slice_paths)} slices, allowed 1..{MAX_SLICES}"
            )
        if self.label not in LABELS:
            raise ManifestError(f"joint {self.joint_id}: unknown label {self.label!r}")

    @property
    def is_defect(self) -> bool:
        return self.label == "defect"


@dataclass
class DatasetManifest:
    records: list[JointRecord]
    image_bound: int = DEFAULT_IMAGE_BOUND
    root: Path | None = None  # directory image paths are relative to

    def __len__(self) -> int:
        return len(self.records)

    @property
    def board_types(self) -> set[str]:
        return {r.board_type for r in self.records}

    def counts(self) -> tuple[int, int]:
        """(defect, normal) record counts."""
        pos = sum(1 for r in self.records if r.is_defect)
        return pos, len(self.records) - pos

    def image_path(self, record: JointRecord, slice_index: int) -> Path:
        p = Path(record.slice_paths[slice_index])
        if not p.is_absolute() and self.root is not None:
            p = self.root / p
        return p


def parse_manifest(path: str | Path) -> DatasetManifest:
    """Parse slice-based rows into joint-based records, sorted by joint_id.

    Slice indices of one joint must be distinct and contiguous from 0 (at
    most six); their rows must agree on board type, joint type, ROI and
    label.  Malformed input raises ManifestError naming the line.
    """
    path = Path(path)
    image_bound = DEFAULT_IMAGE_BOUND
    rows: dict[str, dict[int, tuple]] = {}
    meta: dict[str, tuple] = {}

    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.startswith("#"):
                m = re.search(r"image_bound=(\d+)", line)
                if m:
                    image_bound = int(m.group(1))
                continue
            fields = line.split("\t")
            if len(fields) != len(_COLUMNS):
                raise ManifestError(f"{path}:{lineno}: expected {len(_COLUMNS)} fields, got {len(fields)}")
            jid, board, jtype, sidx_s, x0, x1, y0, y1, label, img = fields
            if not _ID_RE.match(jid):
                raise ManifestError(f"{path}:{lineno}: unsupported joint_id {jid!r}")
            try:
                sidx = int(sidx_s)
                roi = Roi(int(x0), int(x1), int(y0), int(y1))
            except (ValueError, ManifestError) as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            if label not in LABELS:
                raise ManifestError(f"{path}:{lineno}: unknown label {label!r}")
            if not 0 <= sidx < MAX_SLICES:
                raise ManifestError(
                    f"{path}:{lineno}: slice index {sidx} out of range 0..{MAX_SLICES - 1} "
                    f"(at most {MAX_SLICES} slices per joint)"
                )
            key = (board, jtype, roi, label)
            if jid in meta and meta[jid][0] != key:
                raise ManifestError(f"{path}:{lineno}: joint {jid} rows disagree on metadata")
            meta.setdefault(jid, (key, lineno))
            slices = rows.setdefault(jid, {})
            if sidx in slices:
                raise ManifestError(f"{path}:{lineno}: duplicate slice index {sidx} for joint {jid}")
            slices[sidx] = img

    records = []
    for jid in sorted(rows):
        slices = rows[jid]
        (board, jtype, roi, label), first_line = meta[jid]
        if sorted(slices) != list(range(len(slices))):
            raise ManifestError(
                f"{path}:{first_line}: joint {jid} slice indices {sorted(slices)} not contiguous from 0"
            )
        roi.check_bound(image_bound)
        records.append(JointRecord(
            joint_id=jid, board_type=board, joint_type=jtype, roi=roi,
            slice_paths=tuple(slices[i] for i in range(len(slices))), label=label,
        ))
    return DatasetManifest(records=records, image_bound=image_bound, root=path.parent)


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    path = Path(path)
    lines = [f"# axi-manifest v1 image_bound={manifest.image_bound}",
             "# " + "\t".join(_COLUMNS)]
    for r in manifest.records:
        for sidx, img in enumerate(r.slice_paths):
            lines.append("\t".join((
                r.joint_id, r.board_type, r.joint_type, str(sidx),
                str(r.roi.xmin), str(r.roi.xmax), str(r.roi.ymin), str(r.roi.ymax),
                r.label, img,
            )))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def split_by_board(
    manifest: DatasetManifest,
    fractions: tuple[float, float, float] = (0.7, 0.15, 0.15),
    seed: int = 0,
) -> tuple[DatasetManifest, DatasetManifest, DatasetManifest]:
    """Assign whole board types to train/val/test by greedy bin-fill.

    Boards are placed largest-first into the split with the largest remaining
    joint-count deficit; equal-sized boards are ordered by a seeded shuffle.
    Once only as many boards remain as there are still-empty splits, those
    splits are filled first so none ends up empty.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions):
        raise ValueError(f"need three positive fractions, got {fractions}")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must sum to 1, got {fractions}")
    counts: dict[str, int] = {}
    for r in manifest.records:
        counts[r.board_type] = counts.get(r.board_type, 0) + 1
    if len(counts) < 3:
        raise ValueError(f"board-disjoint split needs >= 3 board types, got {len(counts)}")

    rng = np.random.default_rng(seed)
    boards = list(sorted(counts))
    rng.shuffle(boards)
    boards.sort(key=lambda b: -counts[b])  # stable: seeded order breaks ties

    total = len(manifest.records)
    targets = [f * total for f in fractions]
    assigned = [0, 0, 0]
    members: list[set[str]] = [set(), set(), set()]
    for pos, board in enumerate(boards):
        remaining = len(boards) - pos
        empty = [i for i in range(3) if not members[i]]
        candidates = empty if empty and len(empty) >= remaining else range(3)
        best = max(candidates, key=lambda i: (targets[i] - assigned[i], -i))
        members[best].add(board)
        assigned[best] += counts[board]

    def subset(keep: set[str]) -> DatasetManifest:
        recs = [r for r in manifest.records if r.board_type in keep]
        return DatasetManifest(records=recs, image_bound=manifest.image_bound, root=manifest.root)

    return subset(members[0]), subset(members[1]), subset(members[2])


def balance_downsample(manifest: DatasetManifest, seed: int = 0) -> DatasetManifest:
    """Subsample normal records (without replacement) down to the defect count.

    Defect records are kept untouched and record order is preserved.  Intended
    for the training split only.
    """
    defects = [r for r in manifest.records if r.is_defect]
    normals = [r for r in manifest.records if not r.is_defect]
    if not defects:
        raise ValueError("cannot balance a split with zero defect records")
    if len(normals) <= len(defects):
        return manifest
    rng = np.random.default_rng(seed)
    keep_idx = set(rng.choice(len(normals), size=len(defects), replace=False).tolist())
    kept_normals = {id(r) for i, r in enumerate(normals) if i in keep_idx}
    records = [r for r in manifest.records if r.is_defect or id(r) in kept_normals]
    return DatasetManifest(records=records, image_bound=manifest.image_bound, root=manifest.root)
