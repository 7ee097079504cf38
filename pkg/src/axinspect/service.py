"""Scoring and triage HTTP service.

Loads one checkpoint plus operating threshold at startup.  Joints scoring at
or above the threshold are enqueued for the specialist; queue state is
event-sourced from a single append-only JSONL log, so a restart replays the
log and reconstructs the exact queue.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .ingest import ManifestError, Roi
from .models import load_checkpoint, score_patch
from .pgm import PgmError, decode_pgm, encode_pgm
from .preprocess import PATCH_CHANNELS, PATCH_SIDE, PatchError, compute_crop, extract_patch
from .ingest import JointRecord

VERDICTS = ("confirmed_defect", "overridden_normal")


class RoiBody(BaseModel):
    xmin: int
    xmax: int
    ymin: int
    ymax: int


class ScoreRequest(BaseModel):
    slices: list[str] = Field(min_length=1, description="base64-encoded binary PGM slices")
    roi: RoiBody
    joint_id: str | None = None
    board_type: str = "unknown"


class DecisionRequest(BaseModel):
    verdict: Literal["confirmed_defect", "overridden_normal"]
    operator: str


class EventLog:
    """Append-only JSONL event log; replaying it rebuilds the queue."""

    def __init__(self, path: str | Path):
        self.path = Path(path)

    def replay(self) -> list[dict]:
        if not self.path.exists():
            return []
        events = []
        with open(self.path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    events.append(json.loads(line))
        return events

    def append(self, event: dict) -> None:
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")


class TriageState:
    """In-memory queue view derived from the event log (single writer)."""

    def __init__(self, log: EventLog):
        self.log = log
        self.items: dict[str, dict] = {}
        self.order: list[str] = []  # enqueue order, oldest first
        self.lock = threading.Lock()
        for event in log.replay():
            self._apply(event)

    def _apply(self, event: dict) -> None:
        if event["type"] == "enqueue":
            item = event["item"]
            jid = item["joint_id"]
            if jid not in self.items:
                self.items[jid] = item
                self.order.append(jid)
        elif event["type"] == "decision":
            item = self.items[event["joint_id"]]
            item["status"] = event["verdict"]
            item["decided_by"] = event["operator"]
            item["decided_at"] = event["decided_at"]

    def enqueue(self, item: dict) -> None:
        with self.lock:
            if item["joint_id"] in self.items:
                return  # idempotent re-score of a known joint
            event = {"type": "enqueue", "item": item}
            self.log.append(event)
            self._apply(event)

    def decide(self, joint_id: str, verdict: str, operator: str) -> dict:
        with self.lock:
            if joint_id not in self.items:
                raise KeyError(joint_id)
            item = self.items[joint_id]
            if item["status"] != "pending":
                raise ValueError(f"joint {joint_id} already decided: {item['status']}")
            event = {"type": "decision", "joint_id": joint_id, "verdict": verdict,
                     "operator": operator, "decided_at": time.time()}
            self.log.append(event)
            self._apply(event)
            return dict(item)


def _summary(item: dict) -> dict:
    keys = ("joint_id", "board_type", "score", "threshold", "status",
            "enqueued_at", "decided_by", "decided_at", "n_slices")
    return {k: item.get(k) for k in keys}


def create_app(checkpoint_path: str | Path, threshold: float,
               log_path: str | Path, ui_dir: str | Path | None = None) -> FastAPI:
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0,1], got {threshold}")
    ck = load_checkpoint(checkpoint_path)
    params = ck.to_params()
    state = TriageState(EventLog(log_path))

    app = FastAPI(title="axinspect triage service")

    @app.get("/api/health")
    def health():
        return {"status": "ok", "arch": ck.spec.arch, "variant": ck.spec.variant,
                "threshold": threshold, "pending": sum(1 for i in state.items.values()
                                                       if i["status"] == "pending")}

    @app.post("/api/score")
    def score(req: ScoreRequest):
        if len(req.slices) > PATCH_CHANNELS:
            raise HTTPException(status_code=400,
                                detail=f"at most {PATCH_CHANNELS} slices per joint, got {len(req.slices)}")
        images = []
        for k, payload in enumerate(req.slices):
            try:
                images.append(decode_pgm(base64.b64decode(payload, validate=True)))
            except (ValueError, PgmError) as exc:
                raise HTTPException(status_code=400, detail=f"slice {k}: {exc}") from exc
        side = images[0].shape[0]
        for k, img in enumerate(images):
            if img.shape != (side, side):
                raise HTTPException(status_code=400,
                                    detail=f"slice {k} shape {img.shape} differs from slice 0 {(side, side)}")
        try:
            roi = Roi(xmin=req.roi.xmin, xmax=req.roi.xmax, ymin=req.roi.ymin, ymax=req.roi.ymax)
            roi.check_bound(side)
        except ManifestError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

        joint_id = req.joint_id or "req-" + hashlib.sha1(
            json.dumps([req.slices, req.roi.model_dump()], sort_keys=True).encode()
        ).hexdigest()[:16]
        record = JointRecord(joint_id=joint_id, board_type=req.board_type, joint_type="pth",
                             roi=roi, slice_paths=tuple("inline" for _ in images), label="normal")
        try:
            patch = extract_patch(record, images, image_bound=side)
        except PatchError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc

        probability = score_patch(params, ck.spec, patch.data)
        flagged = probability >= threshold
        window = patch.window
        if flagged:
            state.enqueue({
                "joint_id": joint_id,
                "board_type": req.board_type,
                "score": probability,
                "threshold": threshold,
                "status": "pending",
                "enqueued_at": time.time(),
                "decided_by": None,
                "decided_at": None,
                "n_slices": len(images),
                "roi": req.roi.model_dump(),
                "crop_window": {"cxmin": window.cxmin, "cymin": window.cymin,
                                "cxmax": window.cxmax, "cymax": window.cymax},
                "channels": _encode_channels(patch.data),
            })
        return {
            "joint_id": joint_id,
            "probability": probability,
            "flagged": flagged,
            "threshold": threshold,
            "n_slices": len(images),
            "crop_window": {"cxmin": window.cxmin, "cymin": window.cymin,
                            "cxmax": window.cxmax, "cymax": window.cymax},
        }

    @app.get("/api/queue")
    def queue(status: str = "pending", page: int = 1, page_size: int = 20):
        if status not in ("pending", "decided", "all"):
            raise HTTPException(status_code=400, detail=f"unknown status filter {status!r}")
        if page < 1 or page_size < 1:
            raise HTTPException(status_code=400, detail="page and page_size are 1-based")
        with state.lock:  # consistent snapshot under concurrent decisions
            newest_first = [dict(state.items[j]) for j in reversed(state.order)]
        if status == "pending":
            rows = [i for i in newest_first if i["status"] == "pending"]
        elif status == "decided":
            rows = [i for i in newest_first if i["status"] != "pending"]
        else:
            rows = newest_first
        start = (page - 1) * page_size
        return {
            "items": [_summary(i) for i in rows[start : start + page_size]],
            "page": page,
            "page_size": page_size,
            "total": len(rows),
            "has_more": start + page_size < len(rows),
        }

    @app.get("/api/joint/{joint_id}")
    def joint_detail(joint_id: str):
        with state.lock:
            item = state.items.get(joint_id)
            detail = None if item is None else dict(item)
        if detail is None:
            raise HTTPException(status_code=404, detail=f"unknown joint {joint_id}")
        detail["padded"] = [k >= item["n_slices"] for k in range(PATCH_CHANNELS)]
        detail["roi_in_patch"] = _roi_in_patch(item)
        return detail

    @app.post("/api/joint/{joint_id}/decision")
    def decide(joint_id: str, req: DecisionRequest):
        try:
            item = state.decide(joint_id, req.verdict, req.operator)
        except KeyError:
            raise HTTPException(status_code=404, detail=f"unknown joint {joint_id}") from None
        except ValueError as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from None
        return _summary(item)

    if ui_dir is not None:
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app


def _encode_channels(patch_data: np.ndarray) -> list[str]:
    """Patch channels as base64 PGMs for the triage UI."""
    out = []
    for k in range(PATCH_CHANNELS):
        img = np.clip(patch_data[:, :, k, 0] * 255.0, 0, 255).astype(np.uint8)
        out.append(base64.b64encode(encode_pgm(img)).decode("ascii"))
    return out


def _roi_in_patch(item: dict) -> dict:
    """Map the original ROI into 128x128 patch pixel coordinates."""
    win = item["crop_window"]
    roi = item["roi"]
    scale = PATCH_SIDE / (win["cxmax"] - win["cxmin"])

    def clamp(v):
        return max(0.0, min(float(PATCH_SIDE), v))

    return {
        "x0": clamp((roi["xmin"] - win["cxmin"]) * scale),
        "y0": clamp((roi["ymin"] - win["cymin"]) * scale),
        "x1": clamp((roi["xmax"] - win["cxmin"]) * scale),
        "y1": clamp((roi["ymax"] - win["cymin"]) * scale),
    }
