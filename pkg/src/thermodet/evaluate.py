"""Detection evaluation: greedy matching, per-class AP, mAP@0.5, P/R/F1 sweeps."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .bench import BenchStats
from .imaging import LabelBox
from .postprocess import Detections, iou_matrix

F1_GRID = np.linspace(0.0, 1.0, 101)


@dataclass
class EvalReport:
    per_class_ap: dict[str, float]
    map50: float
    precision: float
    recall: float
    f1_curve: list[tuple[float, float]]           # (confidence, f1)
    best_f1: float
    best_confidence: float
    pr_curve: list[tuple[float, float]] = field(default_factory=list)  # (recall, precision)
    conf_threshold: float = 0.25
    iou_match: float = 0.5
    timing: BenchStats | None = None

    def to_dict(self) -> dict:
        d = {
            "per_class_ap": dict(self.per_class_ap),
            "map50": self.map50,
            "precision": self.precision,
            "recall": self.recall,
            "f1_curve": [list(p) for p in self.f1_curve],
            "best_f1": self.best_f1,
            "best_confidence": self.best_confidence,
            "pr_curve": [list(p) for p in self.pr_curve],
            "conf_threshold": self.conf_threshold,
            "iou_match": self.iou_match,
        }
        if self.timing is not None:
            d["timing"] = self.timing.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        timing = BenchStats.from_dict(d["timing"]) if "timing" in d else None
        return cls(
            per_class_ap={k: float(v) for k, v in d["per_class_ap"].items()},
            map50=d["map50"],
            precision=d["precision"],
            recall=d["recall"],
            f1_curve=[tuple(p) for p in d["f1_curve"]],
            best_f1=d["best_f1"],
            best_confidence=d["best_confidence"],
            pr_curve=[tuple(p) for p in d["pr_curve"]],
            conf_threshold=d["conf_threshold"],
            iou_match=d["iou_match"],
            timing=timing,
        )


def match_detections(
    dets: Detections,
    gts: list[LabelBox],
    frame_size: tuple[int, int],
    iou_match: float = 0.5,
) -> np.ndarray:
    """Greedy TP/FP assignment in descending-score order.

    A detection is a TP iff some unmatched ground-truth box of the same
    class overlaps it with IoU >= iou_match; each ground truth is consumed
    by at most one detection.
    """
    if not 0.0 < iou_match <= 1.0:
        raise ValueError("iou_match must lie in (0, 1]")
    d = Detections.from_list(dets)
    order = np.lexsort((np.arange(len(d)), -d.scores))
    tp = np.zeros(len(d), dtype=bool)
    if not gts or len(d) == 0:
        return tp
    w, h = frame_size
    gt_boxes = np.array([g.corners(w, h) for g in gts], dtype=np.float32)
    gt_cls = np.array([g.class_id for g in gts])
    gt_used = np.zeros(len(gts), dtype=bool)
    ov = iou_matrix(d.boxes, gt_boxes)
    for i in order:
        cand = np.flatnonzero((gt_cls == d.class_ids[i]) & ~gt_used & (ov[i] >= iou_match))
        if len(cand):
            best = cand[np.argmax(ov[i][cand])]
            gt_used[best] = True
            tp[i] = True
    return tp


def average_precision(tp_flags: np.ndarray, scores: np.ndarray, num_gt: int) -> float:
    """All-point-interpolated area under the precision-recall curve."""
    if num_gt < 0:
        raise ValueError("num_gt must be >= 0")
    tp_flags = np.asarray(tp_flags, dtype=bool)
    scores = np.asarray(scores, dtype=np.float64)
    if num_gt == 0:
        return 0.0
    if len(tp_flags) == 0:
        return 0.0
    order = np.lexsort((np.arange(len(scores)), -scores))
    tp = tp_flags[order].astype(np.float64)
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(1.0 - tp)
    recall = cum_tp / num_gt
    precision = cum_tp / (cum_tp + cum_fp)
    # precision envelope, then rectangle areas over recall steps
    prec_env = np.maximum.accumulate(precision[::-1])[::-1]
    prev_r = 0.0
    ap = 0.0
    for r, p in zip(recall, prec_env):
        if r > prev_r:
            ap += (r - prev_r) * p
            prev_r = r
    return float(ap)


def _pooled_pr(
    scores: np.ndarray, tps: np.ndarray, num_gt: int, conf: float
) -> tuple[float, float]:
    sel = scores >= conf
    n_det = int(sel.sum())
    n_tp = int(tps[sel].sum())
    precision = n_tp / n_det if n_det else 0.0
    recall = n_tp / num_gt if num_gt else 0.0
    return precision, recall


def evaluate(
    dets_by_frame: dict[str, Detections],
    gts_by_frame: dict[str, list[LabelBox]],
    frame_sizes: dict[str, tuple[int, int]] | tuple[int, int],
    class_names: tuple[str, ...],
    conf_threshold: float = 0.25,
    iou_match: float = 0.5,
    timing: BenchStats | None = None,
) -> EvalReport:
    """Score detections against ground truth.

    Per-class AP uses all detections (no confidence cut); the operating
    precision/recall and the F1/PR sweeps pool detections across classes
    (micro-average). Classes absent from the ground truth are excluded
    from mAP.
    """
    frames = sorted(set(dets_by_frame) | set(gts_by_frame))
    all_scores, all_tp, all_cls = [], [], []
    gt_count = np.zeros(len(class_names), dtype=np.int64)
    for fid in frames:
        dets = Detections.from_list(dets_by_frame.get(fid, Detections.empty()))
        gts = gts_by_frame.get(fid, [])
        size = frame_sizes[fid] if isinstance(frame_sizes, dict) else frame_sizes
        tp = match_detections(dets, gts, size, iou_match)
        all_scores.append(dets.scores)
        all_tp.append(tp)
        all_cls.append(dets.class_ids)
        for g in gts:
            gt_count[g.class_id] += 1
    scores = np.concatenate(all_scores) if all_scores else np.zeros(0)
    tps = np.concatenate(all_tp) if all_tp else np.zeros(0, dtype=bool)
    clss = np.concatenate(all_cls) if all_cls else np.zeros(0, dtype=np.int64)

    per_class_ap: dict[str, float] = {}
    aps = []
    for ci, cname in enumerate(class_names):
        if gt_count[ci] == 0:
            continue
        sel = clss == ci
        ap = average_precision(tps[sel], scores[sel], int(gt_count[ci]))
        per_class_ap[cname] = ap
        aps.append(ap)
    map50 = float(np.mean(aps)) if aps else 0.0

    total_gt = int(gt_count.sum())
    precision, recall = _pooled_pr(scores, tps, total_gt, conf_threshold)

    f1_curve, pr_curve = [], []
    for conf in F1_GRID:
        p, r = _pooled_pr(scores, tps, total_gt, conf)
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        f1_curve.append((float(conf), float(f1)))
        pr_curve.append((float(r), float(p)))
    f1_vals = np.array([f for _, f in f1_curve])
    best_i = int(np.argmax(f1_vals))

    return EvalReport(
        per_class_ap=per_class_ap,
        map50=map50,
        precision=float(precision),
        recall=float(recall),
        f1_curve=f1_curve,
        best_f1=float(f1_vals[best_i]),
        best_confidence=float(F1_GRID[best_i]),
        pr_curve=pr_curve,
        conf_threshold=float(conf_threshold),
        iou_match=float(iou_match),
        timing=timing,
    )


# ---------------------------------------------------------------------------
# Report writers
# ---------------------------------------------------------------------------

TABLE_COLUMNS = (
    "Confidence and Iou Threshold",
    "mAP (all classes) %",
    "Classwise mAP %",
    "Average inference time/frame (ms)",
    "Minimum inference time (ms)",
    "FPS",
)


def write_report(r: EvalReport, path: str | Path, format: str = "structured") -> None:
    path = Path(path)
    if format == "structured":
        path.write_text(json.dumps(r.to_dict(), indent=2, sort_keys=True) + "\n")
    elif format == "tabular":
        _write_tabular(r, path)
    elif format == "pr_plot":
        path.write_text(render_pr_plot(r))
    else:
        raise ValueError(f"unknown report format {format!r}")


def read_report(path: str | Path) -> EvalReport:
    return EvalReport.from_dict(json.loads(Path(path).read_text()))


def _write_tabular(r: EvalReport, path: Path) -> None:
    classwise = "; ".join(f"{k}: {100 * v:.1f}" for k, v in sorted(r.per_class_ap.items()))
    if r.timing is not None:
        avg, mn, fps = f"{r.timing.avg_ms:.1f}", f"{r.timing.min_ms:.1f}", f"{r.timing.fps:.1f}"
    else:
        avg = mn = fps = ""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(TABLE_COLUMNS)
        w.writerow(
            [
                f"{r.conf_threshold:.2g}, {r.iou_match:.2g}",
                f"{100 * r.map50:.1f}",
                classwise,
                avg,
                mn,
                fps,
            ]
        )


def _polyline(points: list[tuple[float, float]], w: int, h: int, pad: int) -> str:
    pts = " ".join(
        f"{pad + x * (w - 2 * pad):.2f},{h - pad - y * (h - 2 * pad):.2f}" for x, y in points
    )
    return pts


def render_pr_plot(r: EvalReport, width: int = 640, height: int = 360) -> str:
    """Standalone SVG with the pooled PR curve and the F1/confidence sweep."""
    pad = 40
    pr = sorted(r.pr_curve)
    f1 = r.f1_curve
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{2 * width}" height="{height}">',
        f'<g transform="translate(0,0)">',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle">precision vs recall</text>',
        f'<polyline id="pr" fill="none" stroke="crimson" stroke-width="1.5" '
        f'points="{_polyline(pr, width, height, pad)}"/>',
        "</g>",
        f'<g transform="translate({width},0)">',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="black"/>',
        f'<text x="{width / 2:.0f}" y="20" text-anchor="middle">'
        f"F1 vs confidence (best {r.best_f1:.2f} @ {r.best_confidence:.3f})</text>",
        f'<polyline id="f1" fill="none" stroke="steelblue" stroke-width="1.5" '
        f'points="{_polyline(f1, width, height, pad)}"/>',
        "</g>",
        "</svg>",
    ]
    return "\n".join(parts) + "\n"
