import numpy as np
import pytest

from thermodet.graph import build_yolov5n
from thermodet.imaging import Frame, LabelBox


@pytest.fixture(scope="session")
def desk_model():
    """Small fixed-weight nano graph used across integration tests."""
    return build_yolov5n(6, 160, seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_frame(width=64, height=48, seed=0, source_id="frame"):
    r = np.random.default_rng(seed)
    px = r.integers(0, 256, size=(height, width), dtype=np.uint8)
    return Frame(width=width, height=height, pixels=px, source_id=source_id)


def make_textured_frame(width, height, seed=0, source_id="frame"):
    """Smooth blobs over noise; more calibration-representative than white noise."""
    r = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    img = 40.0 + 10.0 * r.standard_normal((height, width))
    for _ in range(4):
        cx, cy = r.uniform(0, width), r.uniform(0, height)
        s = r.uniform(4, max(width, height) / 3)
        amp = r.uniform(60, 180)
        img += amp * np.exp(-(((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * s * s)))
    return Frame(width=width, height=height,
                 pixels=np.clip(img, 0, 255).astype(np.uint8), source_id=source_id)


@pytest.fixture
def frame_640x480():
    return make_frame(640, 480, seed=3, source_id="f640")


def random_labels(n, seed=0):
    r = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        w = float(r.uniform(0.05, 0.4))
        h = float(r.uniform(0.05, 0.4))
        cx = float(r.uniform(w / 2, 1 - w / 2))
        cy = float(r.uniform(h / 2, 1 - h / 2))
        out.append(LabelBox(int(r.integers(0, 6)), cx, cy, w, h))
    return out
