"""Thermal frame ingestion, letterbox preprocessing, augmentation and splits.

Frames are single-channel; the network input replicates the gray channel
three times. Augmentations use nearest-neighbor resampling (exact and easy
to verify); inference letterboxing uses bilinear.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .tensor import Tensor

PAD_GRAY = 114  # mid-gray pad value, matches pretrained-weight statistics
MIN_BOX_AREA_PX = 2.0  # clipped boxes below this area are dropped


class ImageFormatError(ValueError):
    """Raised for unsupported or corrupt image files."""


@dataclass(frozen=True)
class Frame:
    width: int
    height: int
    pixels: np.ndarray  # (height, width) uint8 or uint16
    source_id: str = ""

    def __post_init__(self):
        px = np.ascontiguousarray(self.pixels)
        if px.dtype not in (np.dtype(np.uint8), np.dtype(np.uint16)):
            raise ValueError(f"frame pixels must be uint8 or uint16, got {px.dtype}")
        if px.shape != (self.height, self.width):
            raise ValueError(
                f"pixel buffer shape {px.shape} does not match {self.height}x{self.width}"
            )
        object.__setattr__(self, "pixels", px)


@dataclass(frozen=True)
class LabelBox:
    """Normalized center-size box with class id."""

    class_id: int
    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (0.0 <= self.cx <= 1.0 and 0.0 <= self.cy <= 1.0):
            raise ValueError(f"box center out of range: ({self.cx}, {self.cy})")
        if not (0.0 < self.w <= 1.0 and 0.0 < self.h <= 1.0):
            raise ValueError(f"box size out of range: ({self.w}, {self.h})")

    def corners(self, img_w: float, img_h: float) -> tuple[float, float, float, float]:
        """Denormalized (x1, y1, x2, y2) in pixels."""
        return (
            (self.cx - self.w / 2) * img_w,
            (self.cy - self.h / 2) * img_h,
            (self.cx + self.w / 2) * img_w,
            (self.cy + self.h / 2) * img_h,
        )


def box_from_corners(
    class_id: int, x1: float, y1: float, x2: float, y2: float, img_w: float, img_h: float
) -> LabelBox | None:
    """Clip a pixel-space box to the image; None if the clipped area is tiny."""
    x1c, x2c = max(x1, 0.0), min(x2, img_w)
    y1c, y2c = max(y1, 0.0), min(y2, img_h)
    if (x2c - x1c) * (y2c - y1c) < MIN_BOX_AREA_PX:
        return None
    return LabelBox(
        class_id=class_id,
        cx=(x1c + x2c) / 2 / img_w,
        cy=(y1c + y2c) / 2 / img_h,
        w=(x2c - x1c) / img_w,
        h=(y2c - y1c) / img_h,
    )


@dataclass(frozen=True)
class LetterboxMap:
    """Forward map original -> letterboxed: p' = p * scale + pad."""

    scale: float
    pad_left: int
    pad_top: int
    out_size: int
    orig_w: int
    orig_h: int

    def to_letterbox(self, x: float, y: float) -> tuple[float, float]:
        return x * self.scale + self.pad_left, y * self.scale + self.pad_top

    def to_original(self, x: float, y: float) -> tuple[float, float]:
        return (x - self.pad_left) / self.scale, (y - self.pad_top) / self.scale


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------


def _normalize_16bit(px: np.ndarray) -> np.ndarray:
    lo, hi = int(px.min()), int(px.max())
    if hi == lo:
        return np.zeros(px.shape, dtype=np.uint8)  # degenerate range rule
    return np.round((px.astype(np.float64) - lo) * (255.0 / (hi - lo))).astype(np.uint8)


def _read_pgm(data: bytes, path: str) -> np.ndarray:
    if not data.startswith(b"P5"):
        raise ImageFormatError(f"{path}: only binary (P5) PGM is supported")
    # header: magic, width, height, maxval; '#' comments allowed
    pos, fields = 2, []
    while len(fields) < 3:
        m = re.match(rb"(\s+(#[^\n]*\n?)*)*(\d+)", data[pos:])
        if not m:
            raise ImageFormatError(f"{path}: corrupt PGM header")
        fields.append(int(m.group(3)))
        pos += m.end()
    pos += 1  # single whitespace after maxval
    w, h, maxval = fields
    if maxval < 1 or maxval > 65535:
        raise ImageFormatError(f"{path}: bad maxval {maxval}")
    dt = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
    need = w * h * dt.itemsize
    raw = data[pos : pos + need]
    if len(raw) < need:
        raise ImageFormatError(f"{path}: truncated PGM pixel data")
    px = np.frombuffer(raw, dtype=dt).reshape(h, w)
    if dt.itemsize == 2:
        return _normalize_16bit(px)
    return px.copy()


def _read_png(path: Path) -> np.ndarray:
    try:
        with Image.open(path) as im:
            im.load()
            if im.mode == "L":
                return np.asarray(im, dtype=np.uint8)
            if im.mode in ("I", "I;16", "I;16B"):
                return _normalize_16bit(np.asarray(im).astype(np.uint32))
            raise ImageFormatError(f"{path}: unsupported PNG mode {im.mode}, want grayscale")
    except ImageFormatError:
        raise
    except Exception as e:
        raise ImageFormatError(f"{path}: cannot decode PNG ({e})") from e


def load_frame(path: str | Path) -> Frame:
    """Read an 8/16-bit grayscale PGM (P5) or PNG; 16-bit data is min-max
    normalized to 8-bit."""
    path = Path(path)
    data = path.read_bytes()
    if data[:2] == b"P5":
        px = _read_pgm(data, str(path))
    elif data[:8] == b"\x89PNG\r\n\x1a\n":
        px = _read_png(path)
    else:
        raise ImageFormatError(f"{path}: unsupported format (want PGM P5 or PNG)")
    h, w = px.shape
    return Frame(width=w, height=h, pixels=px, source_id=path.stem)


def save_frame(frame: Frame, path: str | Path) -> None:
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        hdr = f"P5\n{frame.width} {frame.height}\n255\n".encode()
        path.write_bytes(hdr + frame.pixels.astype(np.uint8).tobytes())
    else:
        Image.fromarray(frame.pixels.astype(np.uint8), mode="L").save(path)


# ---------------------------------------------------------------------------
# Label file I/O (one text file per frame, lines "class cx cy w h")
# ---------------------------------------------------------------------------


def read_labels(path: str | Path) -> list[LabelBox]:
    labels = []
    for ln, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"{path}:{ln}: expected 'class cx cy w h'")
        labels.append(
            LabelBox(int(parts[0]), float(parts[1]), float(parts[2]),
                     float(parts[3]), float(parts[4]))
        )
    return labels


def write_labels(path: str | Path, labels: list[LabelBox]) -> None:
    lines = [f"{b.class_id} {b.cx:.6f} {b.cy:.6f} {b.w:.6f} {b.h:.6f}" for b in labels]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


# ---------------------------------------------------------------------------
# Resampling
# ---------------------------------------------------------------------------


def _resize_bilinear(px: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = px.shape
    src = px.astype(np.float32)
    ys = (np.arange(out_h, dtype=np.float64) + 0.5) * (h / out_h) - 0.5
    xs = (np.arange(out_w, dtype=np.float64) + 0.5) * (w / out_w) - 0.5
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, h - 1)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, w - 1)
    y1 = np.clip(y0 + 1, 0, h - 1)
    x1 = np.clip(x0 + 1, 0, w - 1)
    fy = np.clip(ys - y0, 0.0, 1.0).astype(np.float32)[:, None]
    fx = np.clip(xs - x0, 0.0, 1.0).astype(np.float32)[None, :]
    tl = src[np.ix_(y0, x0)]
    tr = src[np.ix_(y0, x1)]
    bl = src[np.ix_(y1, x0)]
    br = src[np.ix_(y1, x1)]
    top = tl + (tr - tl) * fx
    bot = bl + (br - bl) * fx
    return top + (bot - top) * fy


def _resize_nearest(px: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    h, w = px.shape
    ys = np.clip(((np.arange(out_h) + 0.5) * (h / out_h)).astype(np.int64), 0, h - 1)
    xs = np.clip(((np.arange(out_w) + 0.5) * (w / out_w)).astype(np.int64), 0, w - 1)
    return px[np.ix_(ys, xs)]


def _letterbox_geometry(w: int, h: int, target: int) -> tuple[float, int, int, int, int]:
    scale = target / max(w, h)
    new_w, new_h = int(round(w * scale)), int(round(h * scale))
    pad_left = (target - new_w) // 2
    pad_top = (target - new_h) // 2
    return scale, new_w, new_h, pad_left, pad_top


def _remap_labels(labels, m: LetterboxMap) -> list[LabelBox]:
    out = []
    for b in labels:
        x1, y1, x2, y2 = b.corners(m.orig_w, m.orig_h)
        x1, y1 = m.to_letterbox(x1, y1)
        x2, y2 = m.to_letterbox(x2, y2)
        nb = box_from_corners(b.class_id, x1, y1, x2, y2, m.out_size, m.out_size)
        if nb is not None:
            out.append(nb)
    return out


def letterbox(
    frame: Frame, target: int, labels: list[LabelBox] = ()
) -> tuple[Tensor, list[LabelBox], LetterboxMap]:
    """Aspect-preserving bilinear resize to max side = target, padded with
    gray 114; returns a (1,3,target,target) tensor in [0,1] plus remapped
    labels and the coordinate map."""
    if target % 32:
        raise ValueError("target must be a multiple of 32")
    if frame.pixels.dtype != np.uint8:
        raise ValueError("letterbox expects an 8-bit frame")
    scale, new_w, new_h, pad_left, pad_top = _letterbox_geometry(
        frame.width, frame.height, target
    )
    resized = _resize_bilinear(frame.pixels, new_h, new_w)
    canvas = np.full((target, target), float(PAD_GRAY), dtype=np.float32)
    canvas[pad_top : pad_top + new_h, pad_left : pad_left + new_w] = resized
    chw = np.broadcast_to(canvas / np.float32(255.0), (3, target, target))
    m = LetterboxMap(scale, pad_left, pad_top, target, frame.width, frame.height)
    return Tensor(chw[None].copy()), _remap_labels(labels, m), m


def letterbox_pixels(frame: Frame, target: int) -> tuple[np.ndarray, LetterboxMap]:
    """Nearest-neighbor letterbox in the pixel domain (augmentation path)."""
    scale, new_w, new_h, pad_left, pad_top = _letterbox_geometry(
        frame.width, frame.height, target
    )
    canvas = np.full((target, target), PAD_GRAY, dtype=np.uint8)
    canvas[pad_top : pad_top + new_h, pad_left : pad_left + new_w] = _resize_nearest(
        frame.pixels, new_h, new_w
    )
    return canvas, LetterboxMap(scale, pad_left, pad_top, target, frame.width, frame.height)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------


def _flip_h(frame: Frame, labels) -> tuple[Frame, list[LabelBox]]:
    px = np.ascontiguousarray(frame.pixels[:, ::-1])
    out = [LabelBox(b.class_id, 1.0 - b.cx, b.cy, b.w, b.h) for b in labels]
    return Frame(frame.width, frame.height, px, frame.source_id), out


def _rotate(frame: Frame, labels, angle_deg: float) -> tuple[Frame, list[LabelBox]]:
    """Rotate content about the frame center; canvas size unchanged,
    out-of-frame areas filled with gray. Boxes become the axis-aligned hull
    of their rotated corners."""
    w, h = frame.width, frame.height
    theta = np.deg2rad(angle_deg)
    cos_t, sin_t = np.cos(theta), np.sin(theta)
    cx_c, cy_c = w / 2.0, h / 2.0

    # inverse map output pixel centers back into the source
    ys, xs = np.mgrid[0:h, 0:w]
    px_out = xs + 0.5 - cx_c
    py_out = ys + 0.5 - cy_c
    sx = cos_t * px_out + sin_t * py_out + cx_c
    sy = -sin_t * px_out + cos_t * py_out + cy_c
    ix = np.floor(sx).astype(np.int64)
    iy = np.floor(sy).astype(np.int64)
    valid = (ix >= 0) & (ix < w) & (iy >= 0) & (iy < h)
    out_px = np.full((h, w), PAD_GRAY, dtype=np.uint8)
    out_px[valid] = frame.pixels[iy[valid], ix[valid]]

    out_labels = []
    for b in labels:
        x1, y1, x2, y2 = b.corners(w, h)
        corners = np.array([[x1, y1], [x2, y1], [x2, y2], [x1, y2]], dtype=np.float64)
        rel = corners - [cx_c, cy_c]
        rot = np.column_stack(
            [cos_t * rel[:, 0] - sin_t * rel[:, 1], sin_t * rel[:, 0] + cos_t * rel[:, 1]]
        ) + [cx_c, cy_c]
        nb = box_from_corners(
            b.class_id, rot[:, 0].min(), rot[:, 1].min(), rot[:, 0].max(), rot[:, 1].max(), w, h
        )
        if nb is not None:
            out_labels.append(nb)
    return Frame(w, h, out_px, frame.source_id), out_labels


def _scale_crop(frame: Frame, labels, scale: float) -> tuple[Frame, list[LabelBox]]:
    """Resize by `scale` (nearest) then center-crop or center-pad back to
    the original canvas."""
    w, h = frame.width, frame.height
    sw, sh = max(int(round(w * scale)), 1), max(int(round(h * scale)), 1)
    resized = _resize_nearest(frame.pixels, sh, sw)
    ox, oy = (w - sw) // 2, (h - sh) // 2
    canvas = np.full((h, w), PAD_GRAY, dtype=np.uint8)
    src_x1, src_y1 = max(-ox, 0), max(-oy, 0)
    dst_x1, dst_y1 = max(ox, 0), max(oy, 0)
    cw = min(sw - src_x1, w - dst_x1)
    ch = min(sh - src_y1, h - dst_y1)
    canvas[dst_y1 : dst_y1 + ch, dst_x1 : dst_x1 + cw] = resized[
        src_y1 : src_y1 + ch, src_x1 : src_x1 + cw
    ]
    fx, fy = sw / w, sh / h
    out_labels = []
    for b in labels:
        x1, y1, x2, y2 = b.corners(w, h)
        nb = box_from_corners(
            b.class_id, x1 * fx + ox, y1 * fy + oy, x2 * fx + ox, y2 * fy + oy, w, h
        )
        if nb is not None:
            out_labels.append(nb)
    return Frame(w, h, canvas, frame.source_id), out_labels


def _mosaic4(frames, labels_per, size: int, rng) -> tuple[Frame, list[LabelBox]]:
    """Join 4 letterboxed tiles around a random center on a 2x canvas, then
    center-crop back to `size`."""
    t = size
    canvas = np.full((2 * t, 2 * t), PAD_GRAY, dtype=np.uint8)
    # center sampled uniformly in the middle half of the canvas
    xc = int(rng.integers(t // 2, 3 * t // 2 + 1))
    yc = int(rng.integers(t // 2, 3 * t // 2 + 1))
    placed: list[LabelBox] = []
    origins = [(xc - t, yc - t), (xc, yc - t), (xc - t, yc), (xc, yc)]
    crop0 = t // 2
    for (ox, oy), frame, labels in zip(origins, frames, labels_per):
        tile, m = letterbox_pixels(frame, t)
        dst_x1, dst_y1 = max(ox, 0), max(oy, 0)
        dst_x2, dst_y2 = min(ox + t, 2 * t), min(oy + t, 2 * t)
        canvas[dst_y1:dst_y2, dst_x1:dst_x2] = tile[
            dst_y1 - oy : dst_y2 - oy, dst_x1 - ox : dst_x2 - ox
        ]
        for b in labels:
            x1, y1, x2, y2 = b.corners(m.orig_w, m.orig_h)
            x1, y1 = m.to_letterbox(x1, y1)
            x2, y2 = m.to_letterbox(x2, y2)
            nb = box_from_corners(
                b.class_id,
                x1 + ox - crop0, y1 + oy - crop0,
                x2 + ox - crop0, y2 + oy - crop0,
                t, t,
            )
            if nb is not None:
                placed.append(nb)
    out = np.ascontiguousarray(canvas[crop0 : crop0 + t, crop0 : crop0 + t])
    return Frame(t, t, out, frames[0].source_id + "_mosaic"), placed


AUGMENT_KINDS = ("mosaic4", "flip_h", "scale_crop", "rotate")


def augment(
    frames: list[Frame],
    labels: list[list[LabelBox]],
    kind: str,
    params: dict | None = None,
    seed: int = 0,
) -> tuple[Frame, list[LabelBox]]:
    """Apply a label-preserving geometric augmentation.

    mosaic4 takes exactly 4 frame/label sets; the others take 1. Boxes are
    mapped through the pixel transform, clipped, and dropped when the
    clipped area falls below 2 px². Deterministic for a fixed seed.
    """
    params = dict(params or {})
    rng = np.random.default_rng(seed)
    if kind == "mosaic4":
        if len(frames) != 4 or len(labels) != 4:
            raise ValueError("mosaic4 requires exactly 4 frame/label sets")
        return _mosaic4(frames, labels, int(params.get("size", 640)), rng)
    if len(frames) != 1 or len(labels) != 1:
        raise ValueError(f"{kind} takes exactly 1 frame/label set")
    if kind == "flip_h":
        return _flip_h(frames[0], labels[0])
    if kind == "rotate":
        angle = params.get("angle")
        if angle is None:
            angle = float(rng.uniform(-10.0, 10.0))
        return _rotate(frames[0], labels[0], float(angle))
    if kind == "scale_crop":
        scale = params.get("scale")
        if scale is None:
            lo, hi = params.get("scale_range", (0.5, 1.5))
            scale = float(rng.uniform(lo, hi))
        if scale <= 0:
            raise ValueError("scale must be positive")
        return _scale_crop(frames[0], labels[0], float(scale))
    raise ValueError(f"unknown augmentation kind {kind!r}")


# ---------------------------------------------------------------------------
# Dataset split
# ---------------------------------------------------------------------------


def split_dataset(
    items: list[str], train_fraction: float, seed: int = 0
) -> tuple[list[str], list[str]]:
    """Disjoint, exhaustive split with |train| = round(fraction * N)."""
    if not items:
        raise ValueError("cannot split an empty item list")
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(items))
    n_train = int(round(train_fraction * len(items)))
    train = [items[i] for i in order[:n_train]]
    val = [items[i] for i in order[n_train:]]
    return train, val
