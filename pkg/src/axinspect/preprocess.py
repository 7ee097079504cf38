"""Channel-wise pre-processing: fixed six-channel patches from slice stacks.

Per joint: pad the stack with zero slices up to six, crop every slice with
one square window of side 1.5x the larger ROI side centered on the ROI
(zero-filled where the window leaves the image), resize to 128x128 with
bilinear interpolation, scale to [0,1] and stack channel-wise.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .ingest import DatasetManifest, JointRecord, Roi
from .pgm import PgmError, read_pgm

PATCH_SIDE = 128
PATCH_CHANNELS = 6
PATCH_MAGIC = b"AXPT"
PATCH_VERSION = 1
_LABEL_BYTE = {"normal": 0, "defect": 1}
_BYTE_LABEL = {v: k for k, v in _LABEL_BYTE.items()}


class PatchError(RuntimeError):
    """Extraction failure carrying the joint and slice it happened on."""

    def __init__(self, joint_id: str, slice_index: int | None, message: str):
        self.joint_id = joint_id
        self.slice_index = slice_index
        where = joint_id if slice_index is None else f"{joint_id} slice {slice_index}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class CropWindow:
    """Square crop in image coordinates; may extend past the image bounds."""

    cxmin: int
    cymin: int
    cxmax: int
    cymax: int

    def __post_init__(self):
        if self.cxmax - self.cxmin != self.cymax - self.cymin:
            raise ValueError(f"crop window must be square, got {self}")

    @property
    def side(self) -> int:
        return self.cxmax - self.cxmin


@dataclass
class Patch:
    """Normalized 128x128x6x1 float32 stack plus provenance.

    ``window``/``n_slices`` are extraction provenance; patches read back from
    a store carry ``window=None`` and ``n_slices=-1`` (not persisted).
    """

    joint_id: str
    label: str
    window: CropWindow | None
    n_slices: int
    data: np.ndarray  # (PATCH_SIDE, PATCH_SIDE, PATCH_CHANNELS, 1) float32 in [0,1]


def round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def compute_crop(roi: Roi) -> CropWindow:
    """Square window of side round(1.5 * max(roi sides)) centered on the ROI."""
    side = round_half_up(1.5 * max(roi.width, roi.height))
    center_x = roi.width / 2.0 + roi.xmin
    center_y = roi.height / 2.0 + roi.ymin
    cxmin = round_half_up(center_x - side / 2.0)
    cymin = round_half_up(center_y - side / 2.0)
    return CropWindow(cxmin=cxmin, cymin=cymin, cxmax=cxmin + side, cymax=cymin + side)


def crop_zero_pad(image: np.ndarray, window: CropWindow) -> np.ndarray:
    """Cut the window out of the image, zero-filling outside [0, bound)."""
    bound_y, bound_x = image.shape
    out = np.zeros((window.side, window.side), dtype=np.float32)
    x0, x1 = max(window.cxmin, 0), min(window.cxmax, bound_x)
    y0, y1 = max(window.cymin, 0), min(window.cymax, bound_y)
    if x0 < x1 and y0 < y1:
        out[y0 - window.cymin : y1 - window.cymin, x0 - window.cxmin : x1 - window.cxmin] = \
            image[y0:y1, x0:x1]
    return out


def resize_bilinear(image: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resize with corner-aligned sampling (exact identity when sizes match)."""
    in_h, in_w = image.shape
    img = image.astype(np.float32, copy=False)
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()
    ys = np.linspace(0.0, in_h - 1.0, out_h)
    xs = np.linspace(0.0, in_w - 1.0, out_w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    wy = (ys - y0).astype(np.float32)[:, None]
    wx = (xs - x0).astype(np.float32)[None, :]
    # lerp form a + w*(b-a): exact where neighboring pixels are equal
    tl, tr = img[np.ix_(y0, x0)], img[np.ix_(y0, x1)]
    bl, br = img[np.ix_(y1, x0)], img[np.ix_(y1, x1)]
    top = tl + wx * (tr - tl)
    bot = bl + wx * (br - bl)
    return top + wy * (bot - top)


def extract_patch(record: JointRecord, images: list[np.ndarray], image_bound: int) -> Patch:
    """Build the six-channel patch for one joint from its loaded slice images."""
    if not 1 <= len(images) <= PATCH_CHANNELS:
        raise PatchError(record.joint_id, None, f"got {len(images)} slices, allowed 1..{PATCH_CHANNELS}")
    window = compute_crop(record.roi)
    channels = np.zeros((PATCH_SIDE, PATCH_SIDE, PATCH_CHANNELS), dtype=np.float32)
    for k, img in enumerate(images):
        if img.shape != (image_bound, image_bound):
            raise PatchError(record.joint_id, k,
                             f"slice shape {img.shape} != image bound {image_bound}")
        cropped = crop_zero_pad(img.astype(np.float32, copy=False), window)
        channels[:, :, k] = resize_bilinear(cropped, PATCH_SIDE, PATCH_SIDE) / 255.0
    return Patch(
        joint_id=record.joint_id, label=record.label, window=window,
        n_slices=len(images), data=channels[..., None],
    )


def load_patch(manifest: DatasetManifest, record: JointRecord) -> Patch:
    """Read the record's slice PGMs and extract its patch."""
    images = []
    for k in range(len(record.slice_paths)):
        path = manifest.image_path(record, k)
        try:
            images.append(read_pgm(path))
        except (OSError, PgmError) as exc:
            raise PatchError(record.joint_id, k, f"unreadable image {path}: {exc}") from exc
    return extract_patch(record, images, manifest.image_bound)


# ---------------------------------------------------------------------------
# patch store: one binary file per joint


def write_patch(store_dir: str | Path, patch: Patch) -> Path:
    path = Path(store_dir) / f"{patch.joint_id}.patch"
    jid = patch.joint_id.encode("utf-8")
    header = PATCH_MAGIC + struct.pack("<HH", PATCH_VERSION, len(jid)) + jid
    header += struct.pack("<B", _LABEL_BYTE[patch.label])
    payload = patch.data.reshape(PATCH_SIDE, PATCH_SIDE, PATCH_CHANNELS)
    path.write_bytes(header + payload.astype("<f4").tobytes())
    return path


def read_patch(path: str | Path) -> Patch:
    raw = Path(path).read_bytes()
    if raw[:4] != PATCH_MAGIC:
        raise ValueError(f"{path}: not a patch file")
    version, id_len = struct.unpack_from("<HH", raw, 4)
    if version != PATCH_VERSION:
        raise ValueError(f"{path}: unsupported patch version {version}")
    off = 8
    joint_id = raw[off : off + id_len].decode("utf-8")
    off += id_len
    label = _BYTE_LABEL[raw[off]]
    off += 1
    expected = PATCH_SIDE * PATCH_SIDE * PATCH_CHANNELS * 4
    if len(raw) - off != expected:
        raise ValueError(f"{path}: payload is {len(raw) - off} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", offset=off).reshape(PATCH_SIDE, PATCH_SIDE, PATCH_CHANNELS)
    return Patch(joint_id=joint_id, label=label, window=None, n_slices=-1, data=data[..., None].copy())


def preprocess_dataset(manifest: DatasetManifest, store_dir: str | Path) -> tuple[list[str], list[PatchError]]:
    """Extract and persist one patch per record, continuing past failures.

    Returns (joint ids written in manifest order, extraction errors).
    """
    store_dir = Path(store_dir)
    store_dir.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    errors: list[PatchError] = []
    for record in manifest.records:
        try:
            patch = load_patch(manifest, record)
        except PatchError as exc:
            errors.append(exc)
            continue
        write_patch(store_dir, patch)
        written.append(record.joint_id)
    return written, errors


def load_store_patches(manifest: DatasetManifest, store_dir: str | Path) -> list[Patch]:
    """Patches for every manifest record, in manifest order."""
    store_dir = Path(store_dir)
    return [read_patch(store_dir / f"{r.joint_id}.patch") for r in manifest.records]
