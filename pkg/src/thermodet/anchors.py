"""Auto-anchor: fit scoring, k-means estimation and the keep-or-recompute rule."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

STRIDES = (8, 16, 32)

# widely used nano/small anchor table, in pixels at 640 input
_DEFAULT_640 = np.array(
    [
        [[10, 13], [16, 30], [33, 23]],     # stride 8
        [[30, 61], [62, 45], [59, 119]],    # stride 16
        [[116, 90], [156, 198], [373, 326]] # stride 32
    ],
    dtype=np.float32,
)


@dataclass(frozen=True)
class AnchorSet:
    """3 scales x 3 (w, h) anchor pairs in pixels at network input resolution."""

    anchors: np.ndarray  # (3, 3, 2) float32
    strides: tuple[int, int, int] = STRIDES

    def __post_init__(self):
        a = np.ascontiguousarray(self.anchors, dtype=np.float32)
        if a.shape != (3, 3, 2):
            raise ValueError(f"anchors must have shape (3, 3, 2), got {a.shape}")
        if not np.all(a > 0):
            raise ValueError("anchor dimensions must be positive")
        object.__setattr__(self, "anchors", a)
        object.__setattr__(self, "strides", tuple(int(s) for s in self.strides))

    @property
    def flat(self) -> np.ndarray:
        """All 9 (w, h) pairs, group-major."""
        return self.anchors.reshape(9, 2)

    def for_stride(self, stride: int) -> np.ndarray:
        return self.anchors[self.strides.index(stride)]

    @classmethod
    def from_flat(cls, pairs: np.ndarray) -> "AnchorSet":
        """Regroup 9 pairs by area ascending into the 3 stride groups."""
        pairs = np.asarray(pairs, dtype=np.float32).reshape(9, 2)
        order = np.argsort(pairs[:, 0] * pairs[:, 1], kind="stable")
        return cls(pairs[order].reshape(3, 3, 2))


def default_anchors(input_size: int) -> AnchorSet:
    """Stock anchor table rescaled from its native 640 resolution."""
    return AnchorSet(_DEFAULT_640 * (input_size / 640.0))


@dataclass(frozen=True)
class AnchorFitReport:
    bpr: float                # best possible recall in [0, 1]
    anchors_per_target: float
    ratio_threshold: float

    def __post_init__(self):
        if not (0.0 <= self.bpr <= 1.0 and np.isfinite(self.anchors_per_target)):
            raise ValueError("malformed fit report")


def _fit_matrix(labels: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """fit[i, j] = max(w/aw, aw/w, h/ah, ah/h) for label i vs anchor j."""
    r = labels[:, None, :] / anchors[None, :, :]  # (N, K, 2)
    return np.maximum(r, 1.0 / r).max(axis=2)


def anchor_fit(
    labels: np.ndarray, a: AnchorSet, ratio_threshold: float = 4.0
) -> AnchorFitReport:
    """Score how well an anchor set covers a set of label (w, h) pairs.

    A label is matched by an anchor when the worst per-dimension ratio is
    below `ratio_threshold`; bpr is the fraction of labels matched by at
    least one anchor.
    """
    labels = np.asarray(labels, dtype=np.float32).reshape(-1, 2)
    if labels.size == 0:
        raise ValueError("labels must be nonempty")
    if ratio_threshold <= 1.0:
        raise ValueError("ratio_threshold must be > 1")
    fit = _fit_matrix(labels, a.flat)
    matched = fit < ratio_threshold
    return AnchorFitReport(
        bpr=float(matched.any(axis=1).mean()),
        anchors_per_target=float(matched.sum(axis=1).mean()),
        ratio_threshold=float(ratio_threshold),
    )


def _pair_iou(labels: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """IoU of co-centered boxes: labels (N,2) vs centers (K,2) -> (N,K)."""
    mins = np.minimum(labels[:, None, :], centers[None, :, :])
    inter = mins[:, :, 0] * mins[:, :, 1]
    area_l = labels[:, 0] * labels[:, 1]
    area_c = centers[:, 0] * centers[:, 1]
    return inter / (area_l[:, None] + area_c[None, :] - inter)


def kmeans_anchors(
    labels: np.ndarray,
    k: int,
    seed: int = 0,
    max_iters: int = 300,
    history: list | None = None,
) -> np.ndarray:
    """Lloyd's k-means over (w, h) pairs under 1 - IoU of co-centered boxes.

    The objective (mean distance to the nearest centroid) is kept
    non-increasing: if a mean-update step would raise it, the previous
    centroids are returned.
    """
    labels = np.asarray(labels, dtype=np.float32).reshape(-1, 2)
    if len(labels) < k:
        raise ValueError(f"need at least k={k} labels, got {len(labels)}")
    rng = np.random.default_rng(seed)
    centers = labels[rng.choice(len(labels), size=k, replace=False)].copy()

    def objective(c: np.ndarray) -> tuple[float, np.ndarray]:
        dist = 1.0 - _pair_iou(labels, c)
        assign = dist.argmin(axis=1)
        return float(dist.min(axis=1).mean()), assign

    best_obj, assign = objective(centers)
    if history is not None:
        history.append(best_obj)
    for _ in range(max_iters):
        new_centers = centers.copy()
        for j in range(k):
            members = labels[assign == j]
            if len(members):
                new_centers[j] = members.mean(axis=0)
        obj, new_assign = objective(new_centers)
        if obj > best_obj + 1e-12:
            break  # IoU distance is not guaranteed monotone under mean updates
        converged = np.allclose(new_centers, centers, atol=1e-6)
        centers, assign, best_obj = new_centers, new_assign, obj
        if history is not None:
            history.append(best_obj)
        if converged:
            break
    return centers


def _fitness(labels: np.ndarray, pairs: np.ndarray, ratio_threshold: float) -> float:
    """Mean over labels of the best inverse fit, zeroed past the threshold."""
    best = (1.0 / _fit_matrix(labels, pairs)).max(axis=1)
    return float((best * (best > 1.0 / ratio_threshold)).mean())


def autoanchor(
    labels: np.ndarray,
    current: AnchorSet,
    bpr_keep: float = 0.98,
    seed: int = 0,
    ratio_threshold: float = 4.0,
    generations: int = 1000,
    mutate_prob: float = 0.9,
    mutate_span: float = 0.1,
) -> AnchorSet:
    """Keep `current` when its BPR is already good; otherwise recompute.

    Recomputation is k-means (k=9) followed by genetic refinement:
    each generation mutates every dimension by a uniform factor in
    [1-span, 1+span] with probability `mutate_prob` and keeps the mutation
    iff mean fitness improves. The returned set never has a lower BPR than
    `current`.
    """
    if not 0.0 < bpr_keep <= 1.0:
        raise ValueError("bpr_keep must be in (0, 1]")
    labels = np.asarray(labels, dtype=np.float32).reshape(-1, 2)
    current_report = anchor_fit(labels, current, ratio_threshold)
    if current_report.bpr >= bpr_keep:
        return current

    rng = np.random.default_rng(seed)
    pairs = kmeans_anchors(labels, 9, seed=seed)
    fit = _fitness(labels, pairs, ratio_threshold)
    for _ in range(generations):
        mask = rng.random(pairs.shape) < mutate_prob
        factor = np.where(mask, rng.uniform(1 - mutate_span, 1 + mutate_span, pairs.shape), 1.0)
        candidate = (pairs * factor).astype(np.float32)
        cand_fit = _fitness(labels, candidate, ratio_threshold)
        if cand_fit > fit:
            pairs, fit = candidate, cand_fit

    new_set = AnchorSet.from_flat(pairs)
    new_report = anchor_fit(labels, new_set, ratio_threshold)
    if new_report.bpr < current_report.bpr:
        return current
    return new_set
