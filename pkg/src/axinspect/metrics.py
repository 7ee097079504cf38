"""Recall/FPR tables, ROC curves, AUROC, and operating-threshold selection.

Scores are P(defect) probabilities in [0,1]; positive means defect.  A joint
is predicted defect iff its score >= the threshold, so threshold 0 flags
everything.  Candidate thresholds are the unique observed scores plus the
sentinels {0,1}; the fixed 0.1-grid rows reported alongside are a view, not
the selection domain.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_GRID = (0.1, 0.2, 0.3, 0.4, 0.5)
DEFAULT_TARGETS = (0.90, 0.95)


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError(f"negative confusion count: {self}")

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn)

    @property
    def fpr(self) -> float:
        return self.fp / (self.fp + self.tn)


@dataclass(frozen=True)
class ThresholdRow:
    threshold: float
    recall: float
    fpr: float


@dataclass(frozen=True)
class ChosenThreshold:
    target: float
    threshold: float
    recall: float
    fpr: float


@dataclass
class EvalReport:
    n_pos: int
    n_neg: int
    auroc: float
    grid: list[ThresholdRow]
    curve: list[ThresholdRow]  # every candidate threshold, descending
    roc: list[tuple[float, float]]  # (FPR, TPR), FPR ascending
    chosen: list[ChosenThreshold] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "auroc": self.auroc,
            "grid": [asdict(r) for r in self.grid],
            "curve": [asdict(r) for r in self.curve],
            "roc": [list(p) for p in self.roc],
            "chosen": [asdict(c) for c in self.chosen],
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        doc = json.loads(text)
        return cls(
            n_pos=doc["n_pos"], n_neg=doc["n_neg"], auroc=doc["auroc"],
            grid=[ThresholdRow(**r) for r in doc["grid"]],
            curve=[ThresholdRow(**r) for r in doc["curve"]],
            roc=[tuple(p) for p in doc["roc"]],
            chosen=[ChosenThreshold(**c) for c in doc["chosen"]],
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json() + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "EvalReport":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))

    def write_roc_tsv(self, path: str | Path) -> None:
        """Plot-data file of (FPR, TPR) pairs for external ROC plotting."""
        lines = ["# fpr\ttpr"] + [f"{float(f)!r}\t{float(t)!r}" for f, t in self.roc]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _check_scores(scores: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f"scores/labels must be equal-length vectors, got {scores.shape}/{labels.shape}")
    if scores.size and (scores.min() < 0.0 or scores.max() > 1.0):
        raise ValueError("scores must be probabilities in [0,1]")
    if not set(np.unique(labels)) <= {0, 1}:
        raise ValueError("labels must be 0 (normal) or 1 (defect)")
    return scores, labels.astype(np.int64)


def confusion_at(scores, labels, threshold: float) -> ConfusionCounts:
    scores, labels = _check_scores(scores, labels)
    pred = scores >= threshold
    return ConfusionCounts(
        tp=int(np.sum(pred & (labels == 1))),
        fp=int(np.sum(pred & (labels == 0))),
        tn=int(np.sum(~pred & (labels == 0))),
        fn=int(np.sum(~pred & (labels == 1))),
    )


def _curve(scores: np.ndarray, labels: np.ndarray) -> list[ThresholdRow]:
    """Recall/FPR at every candidate threshold, descending threshold."""
    pos = np.sort(scores[labels == 1])
    neg = np.sort(scores[labels == 0])
    taus = np.unique(np.concatenate([scores, [0.0, 1.0]]))[::-1]
    rows = []
    for tau in taus:
        tp = int(pos.size - np.searchsorted(pos, tau, side="left"))
        fp = int(neg.size - np.searchsorted(neg, tau, side="left"))
        rows.append(ThresholdRow(threshold=float(tau), recall=tp / pos.size, fpr=fp / neg.size))
    return rows


def build_report(scores, labels, grid=DEFAULT_GRID, targets=DEFAULT_TARGETS) -> EvalReport:
    """Score set -> threshold table, ROC, AUROC, and operating thresholds."""
    scores, labels = _check_scores(scores, labels)
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"need both classes to evaluate, got {n_pos} defect / {n_neg} normal")

    curve = _curve(scores, labels)
    roc = [(0.0, 0.0)] + [(r.fpr, r.recall) for r in curve]
    roc.sort()  # already FPR-ascending by construction; sort is a no-op guard
    auroc = float(np.trapezoid([t for _, t in roc], [f for f, _ in roc]))

    grid_rows = []
    for t in grid:
        cm = confusion_at(scores, labels, t)
        grid_rows.append(ThresholdRow(threshold=float(t), recall=cm.recall, fpr=cm.fpr))
    report = EvalReport(n_pos=n_pos, n_neg=n_neg, auroc=auroc,
                        grid=grid_rows, curve=curve, roc=roc)
    for target in targets:
        tau = select_threshold(report, target)
        row = next(r for r in report.curve if r.threshold == tau)
        report.chosen.append(ChosenThreshold(target=float(target), threshold=tau,
                                             recall=row.recall, fpr=row.fpr))
    return report


def select_threshold(report: EvalReport, target: float) -> float:
    """Largest candidate threshold whose recall still meets the target.

    Recall is non-increasing in the threshold, so the largest qualifying
    threshold minimizes FPR subject to the recall constraint.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"recall target must be in [0,1], got {target}")
    for row in report.curve:  # descending threshold
        if row.recall >= target:
            return row.threshold
    raise ValueError(f"recall target {target} unattainable even at threshold 0")


def auroc_pair_oracle(scores, labels) -> float:
    """Mann-Whitney statistic: P(random defect scores above random normal), ties 1/2."""
    scores, labels = _check_scores(scores, labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        raise ValueError("need both classes")
    wins = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                wins += 1.0
            elif p == n:
                wins += 0.5
    return wins / (pos.size * neg.size)


# ---------------------------------------------------------------------------
# workload reporting


@dataclass(frozen=True)
class WorkloadRow:
    model: str
    auroc: float
    per_target: dict  # target -> {"threshold","fpr","filtered"}


def workload_report(report: EvalReport, targets=DEFAULT_TARGETS, model: str = "model") -> WorkloadRow:
    """FPR at each recall target plus the workload fraction filtered out (1-FPR)."""
    per_target = {}
    for target in targets:
        tau = select_threshold(report, target)
        row = next(r for r in report.curve if r.threshold == tau)
        per_target[float(target)] = {
            "threshold": tau,
            "fpr": row.fpr,
            "filtered": 1.0 - row.fpr,
        }
    return WorkloadRow(model=model, auroc=report.auroc, per_target=per_target)


def format_workload_table(rows: list[WorkloadRow], targets=DEFAULT_TARGETS) -> str:
    """Text table with one row per model: AUROC and FPR@target columns."""
    headers = ["Model", "AUROC"] + [f"FPR@{int(t * 100)}%Recall" for t in targets]
    lines = [" | ".join(headers)]
    for row in rows:
        cells = [row.model, f"{row.auroc:.4f}"]
        cells += [f"{row.per_target[float(t)]['fpr']:.4f}" for t in targets]
        lines.append(" | ".join(cells))
    return "\n".join(lines)
