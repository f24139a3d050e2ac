"""Rectangle-and-digits overlay rendering for detection output frames."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .postprocess import Detections

CLASS_COLORS = (
    (255, 64, 64),
    (64, 255, 64),
    (96, 96, 255),
    (255, 224, 32),
    (255, 64, 255),
    (64, 255, 255),
)

# 3x5 raster digits, row-major bitmasks
_GLYPHS = {
    "0": ("111", "101", "101", "101", "111"),
    "1": ("010", "110", "010", "010", "111"),
    "2": ("111", "001", "111", "100", "111"),
    "3": ("111", "001", "111", "001", "111"),
    "4": ("101", "101", "111", "001", "001"),
    "5": ("111", "100", "111", "001", "111"),
    "6": ("111", "100", "111", "101", "111"),
    "7": ("111", "001", "010", "010", "010"),
    "8": ("111", "101", "111", "101", "111"),
    "9": ("111", "101", "111", "001", "111"),
    ".": ("000", "000", "000", "000", "010"),
}


def _draw_text(img: np.ndarray, x: int, y: int, text: str, color) -> None:
    h, w = img.shape[:2]
    for ch in text:
        glyph = _GLYPHS.get(ch)
        if glyph is None:
            x += 4
            continue
        for gy, row in enumerate(glyph):
            for gx, bit in enumerate(row):
                if bit == "1" and 0 <= y + gy < h and 0 <= x + gx < w:
                    img[y + gy, x + gx] = color
        x += 4


def _draw_rect(img: np.ndarray, x1: int, y1: int, x2: int, y2: int, color) -> None:
    h, w = img.shape[:2]
    x1, x2 = max(x1, 0), min(x2, w - 1)
    y1, y2 = max(y1, 0), min(y2, h - 1)
    if x1 > x2 or y1 > y2:
        return
    img[y1, x1 : x2 + 1] = color
    img[y2, x1 : x2 + 1] = color
    img[y1 : y2 + 1, x1] = color
    img[y1 : y2 + 1, x2] = color


def render_detections(pixels: np.ndarray, dets: Detections) -> np.ndarray:
    """Gray frame + detections -> RGB image with 1-px class-colored boxes
    and the score baked in as raster digits."""
    rgb = np.repeat(pixels[:, :, None], 3, axis=2).astype(np.uint8)
    for i in range(len(dets)):
        x1, y1, x2, y2 = (int(round(v)) for v in dets.boxes[i])
        color = CLASS_COLORS[int(dets.class_ids[i]) % len(CLASS_COLORS)]
        _draw_rect(rgb, x1, y1, x2, y2, color)
        _draw_text(rgb, x1 + 2, max(y1 - 7, 0), f"{dets.scores[i]:.2f}", color)
    return rgb


def save_annotated(pixels: np.ndarray, dets: Detections, path: str | Path) -> None:
    Image.fromarray(render_detections(pixels, dets), mode="RGB").save(path)
