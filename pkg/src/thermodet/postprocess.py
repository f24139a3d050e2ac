"""Decode raw head tensors, filter by confidence, class-aware NMS."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .anchors import AnchorSet
from .imaging import LetterboxMap
from .kernels import sigmoid
from .tensor import Tensor


@dataclass(frozen=True)
class Detection:
    x1: float
    y1: float
    x2: float
    y2: float
    class_id: int
    score: float

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError("detection box must have positive extent")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError("score must lie in [0, 1]")


class Detections(Sequence):
    """Array-backed sequence of detections (cheap for thousands of boxes)."""

    __slots__ = ("boxes", "scores", "class_ids")

    def __init__(self, boxes: np.ndarray, scores: np.ndarray, class_ids: np.ndarray):
        self.boxes = np.asarray(boxes, dtype=np.float32).reshape(-1, 4)
        self.scores = np.asarray(scores, dtype=np.float32).reshape(-1)
        self.class_ids = np.asarray(class_ids, dtype=np.int64).reshape(-1)
        if not (len(self.boxes) == len(self.scores) == len(self.class_ids)):
            raise ValueError("field lengths disagree")

    @classmethod
    def empty(cls) -> "Detections":
        return cls(np.zeros((0, 4)), np.zeros(0), np.zeros(0, dtype=np.int64))

    @classmethod
    def from_list(cls, dets: Sequence[Detection]) -> "Detections":
        if isinstance(dets, Detections):
            return dets
        return cls(
            np.array([[d.x1, d.y1, d.x2, d.y2] for d in dets], dtype=np.float32).reshape(-1, 4),
            np.array([d.score for d in dets], dtype=np.float32),
            np.array([d.class_id for d in dets], dtype=np.int64),
        )

    def __len__(self) -> int:
        return len(self.scores)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Detections(self.boxes[i], self.scores[i], self.class_ids[i])
        b = self.boxes[i]
        return Detection(float(b[0]), float(b[1]), float(b[2]), float(b[3]),
                         int(self.class_ids[i]), float(self.scores[i]))

    def select(self, idx: np.ndarray) -> "Detections":
        return Detections(self.boxes[idx], self.scores[idx], self.class_ids[idx])


def decode_head(
    head: Tensor, anchors: np.ndarray, stride: int, num_classes: int
) -> Detections:
    """Decode one raw (pre-sigmoid) head tensor into box candidates.

    Per anchor a and cell (i, j):
        bx = (2*sig(tx) - 0.5 + j) * stride      bw = (2*sig(tw))^2 * aw
        by = (2*sig(ty) - 0.5 + i) * stride      bh = (2*sig(th))^2 * ah
    score = sig(t_obj) * max_c sig(t_c), class = argmax_c.
    """
    anchors = np.asarray(anchors, dtype=np.float32).reshape(3, 2)
    n, c, gh, gw = head.dims
    no = 5 + num_classes
    if c != 3 * no:
        raise ValueError(f"head has {c} channels, expected {3 * no} for {num_classes} classes")
    if n != 1:
        raise ValueError("decode expects batch size 1")

    x = sigmoid(head.data.reshape(3, no, gh, gw))
    jj = np.arange(gw, dtype=np.float32)[None, None, :]
    ii = np.arange(gh, dtype=np.float32)[None, :, None]
    bx = (2.0 * x[:, 0] - 0.5 + jj) * stride
    by = (2.0 * x[:, 1] - 0.5 + ii) * stride
    bw = (2.0 * x[:, 2]) ** 2 * anchors[:, 0, None, None]
    bh = (2.0 * x[:, 3]) ** 2 * anchors[:, 1, None, None]
    cls_p = x[:, 5:]
    best_cls = cls_p.argmax(axis=1)
    best_p = cls_p.max(axis=1)
    score = x[:, 4] * best_p

    boxes = np.stack(
        [bx - bw / 2, by - bh / 2, bx + bw / 2, by + bh / 2], axis=-1
    ).reshape(-1, 4)
    return Detections(boxes, score.reshape(-1), best_cls.reshape(-1))


def iou(a: Detection, b: Detection) -> float:
    """Intersection-over-union of two corner boxes."""
    ix = max(0.0, min(a.x2, b.x2) - max(a.x1, b.x1))
    iy = max(0.0, min(a.y2, b.y2) - max(a.y1, b.y1))
    inter = ix * iy
    union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (N,4) vs (M,4) corner boxes."""
    a = np.asarray(a, dtype=np.float32).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float32).reshape(-1, 4)
    tl = np.maximum(a[:, None, :2], b[None, :, :2])
    br = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(br - tl, 0.0, None)
    inter = wh[:, :, 0] * wh[:, :, 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.where(union > 0, inter / union, 0.0)


def nms(
    dets: Sequence[Detection] | Detections,
    iou_threshold: float,
    max_out: int = 300,
) -> Detections:
    """Greedy class-aware NMS.

    Within each class, detections are visited by descending score (ties by
    original index); a detection is suppressed iff a kept same-class box
    overlaps it with IoU strictly above the threshold. Output is sorted by
    descending score (ties by index) and capped at `max_out`.
    """
    if not 0.0 <= iou_threshold <= 1.0:
        raise ValueError("iou_threshold must lie in [0, 1]")
    d = Detections.from_list(dets)
    keep: list[int] = []
    for cls in np.unique(d.class_ids):
        idx = np.flatnonzero(d.class_ids == cls)
        order = idx[np.lexsort((idx, -d.scores[idx]))]
        boxes = d.boxes[order]
        alive = np.ones(len(order), dtype=bool)
        for i in range(len(order)):
            if not alive[i]:
                continue
            keep.append(int(order[i]))
            rest = np.flatnonzero(alive[i + 1 :]) + i + 1
            if len(rest):
                ov = iou_matrix(boxes[i : i + 1], boxes[rest])[0]
                alive[rest[ov > iou_threshold]] = False
    keep_arr = np.array(keep, dtype=np.int64)
    keep_arr = keep_arr[np.lexsort((keep_arr, -d.scores[keep_arr]))]
    return d.select(keep_arr[:max_out])


def postprocess_pipeline(
    heads: Sequence[Tensor],
    anchors: AnchorSet,
    conf_threshold: float,
    iou_threshold: float,
    lb_map: LetterboxMap | None = None,
    max_out: int = 300,
    num_classes: int | None = None,
) -> Detections:
    """Decode all heads, confidence-filter, NMS, then map boxes back to
    original frame coordinates (clipped to the frame)."""
    if not (0.0 <= conf_threshold <= 1.0 and 0.0 <= iou_threshold <= 1.0):
        raise ValueError("thresholds must lie in [0, 1]")
    parts = []
    for head, stride in zip(heads, anchors.strides):
        if num_classes is None:
            num_classes = head.c // 3 - 5
        parts.append(decode_head(head, anchors.for_stride(stride), stride, num_classes))
    boxes = np.concatenate([p.boxes for p in parts])
    scores = np.concatenate([p.scores for p in parts])
    classes = np.concatenate([p.class_ids for p in parts])

    finite = np.isfinite(boxes).all(axis=1) & np.isfinite(scores)
    ok = finite & (scores >= conf_threshold) & (boxes[:, 0] < boxes[:, 2]) & (boxes[:, 1] < boxes[:, 3])
    cands = Detections(boxes[ok], scores[ok], classes[ok])
    kept = nms(cands, iou_threshold, max_out)

    if lb_map is not None and len(kept):
        b = kept.boxes.copy()
        b[:, [0, 2]] = (b[:, [0, 2]] - lb_map.pad_left) / lb_map.scale
        b[:, [1, 3]] = (b[:, [1, 3]] - lb_map.pad_top) / lb_map.scale
        b[:, [0, 2]] = np.clip(b[:, [0, 2]], 0.0, lb_map.orig_w)
        b[:, [1, 3]] = np.clip(b[:, [1, 3]], 0.0, lb_map.orig_h)
        good = (b[:, 0] < b[:, 2]) & (b[:, 1] < b[:, 3])
        kept = Detections(b[good], kept.scores[good], kept.class_ids[good])
    return kept


def format_detections(frame_id: str, dets: Detections) -> str:
    """Text record: frame id line, then one 'class_id score x1 y1 x2 y2' per box."""
    lines = [frame_id]
    for i in range(len(dets)):
        b = dets.boxes[i]
        lines.append(
            f"{int(dets.class_ids[i])} {dets.scores[i]:.6f} "
            f"{b[0]:.2f} {b[1]:.2f} {b[2]:.2f} {b[3]:.2f}"
        )
    return "\n".join(lines) + "\n"


def parse_detections(text: str) -> tuple[str, Detections]:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty detection record")
    frame_id = lines[0].strip()
    rows = []
    for ln in lines[1:]:
        parts = ln.split()
        rows.append([float(v) for v in parts])
    if not rows:
        return frame_id, Detections.empty()
    arr = np.array(rows, dtype=np.float64)
    return frame_id, Detections(arr[:, 2:6], arr[:, 1], arr[:, 0].astype(np.int64))
