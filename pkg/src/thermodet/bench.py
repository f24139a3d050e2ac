"""Latency/throughput harness: monotonic per-call timing with warmup."""

from __future__ import annotations

import platform
import time
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor


def host_note() -> str:
    return f"{platform.platform()} / python {platform.python_version()} / single-thread timing"


@dataclass
class BenchStats:
    avg_ms: float
    min_ms: float
    p50_ms: float
    p95_ms: float
    fps: float
    runs: int
    warmup_runs: int
    environment: str = ""
    stages: dict[str, float] = field(default_factory=dict)  # avg ms per stage

    def __post_init__(self):
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not (self.min_ms <= self.p50_ms <= self.p95_ms and self.min_ms <= self.avg_ms):
            raise ValueError("inconsistent timing stats")
        # fps is defined as 1000/avg only; other Hz readings are not reported
        if abs(self.fps - 1000.0 / self.avg_ms) > 1e-6 * self.fps:
            raise ValueError("fps must equal 1000/avg_ms")

    @classmethod
    def from_times(
        cls, times_ms: list[float], warmup_runs: int, environment: str = "",
        stages: dict[str, float] | None = None,
    ) -> "BenchStats":
        t = np.asarray(times_ms, dtype=np.float64)
        avg = float(t.mean())
        return cls(
            avg_ms=avg,
            min_ms=float(t.min()),
            p50_ms=float(np.percentile(t, 50)),
            p95_ms=float(np.percentile(t, 95)),
            fps=1000.0 / avg,
            runs=len(t),
            warmup_runs=warmup_runs,
            environment=environment or host_note(),
            stages=dict(stages or {}),
        )

    def to_dict(self) -> dict:
        return {
            "avg_ms": self.avg_ms,
            "min_ms": self.min_ms,
            "p50_ms": self.p50_ms,
            "p95_ms": self.p95_ms,
            "fps": self.fps,
            "runs": self.runs,
            "warmup_runs": self.warmup_runs,
            "environment": self.environment,
            "stages": dict(self.stages),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BenchStats":
        return cls(**d)

    def table_line(self) -> str:
        return (
            f"avg {self.avg_ms:.2f} ms | min {self.min_ms:.2f} ms | p50 {self.p50_ms:.2f} ms "
            f"| p95 {self.p95_ms:.2f} ms | fps {self.fps:.2f} (= 1000/avg)"
        )


def _forward_fn(model):
    """Size-agnostic forward callable for float or quantized models."""
    from .graph import ModelGraph, run_program_f32
    from .quantize import QuantizedModel

    if isinstance(model, ModelGraph):
        prog = model.program()
        return lambda x: run_program_f32(prog, x)
    if isinstance(model, QuantizedModel):
        return lambda x: model.run_raw(x)
    raise TypeError(f"cannot bench {type(model).__name__}")


def bench_forward(
    model, input_size: int | None = None, runs: int = 50, warmup: int = 10, seed: int = 0
) -> BenchStats:
    """Time bare forward passes on one fixed random input (batch size 1)."""
    if runs < 1 or warmup < 0:
        raise ValueError("need runs >= 1 and warmup >= 0")
    size = input_size or model.input_size
    rng = np.random.default_rng(seed)
    x = rng.random((1, 3, size, size), dtype=np.float32)
    fn = _forward_fn(model)
    for _ in range(warmup):
        fn(x)
    times = []
    for _ in range(runs):
        t0 = time.perf_counter()
        fn(x)
        times.append((time.perf_counter() - t0) * 1000.0)
    return BenchStats.from_times(times, warmup)


def bench_pipeline(
    model,
    frames: list,
    conf_threshold: float = 0.25,
    iou_threshold: float = 0.45,
    warmup: int = 3,
) -> BenchStats:
    """Time the full per-frame path: letterbox + forward + postprocess."""
    from .imaging import letterbox
    from .postprocess import postprocess_pipeline
    from .tensor import Tensor as _T

    if not frames:
        raise ValueError("need at least one frame")
    fn = _forward_fn(model)
    size = model.input_size
    anchors = model.anchors
    nc = model.num_classes

    def one(frame):
        t0 = time.perf_counter()
        tensor, _, m = letterbox(frame, size)
        t1 = time.perf_counter()
        heads = fn(tensor.data)
        t2 = time.perf_counter()
        postprocess_pipeline(
            [h if isinstance(h, _T) else _T(h) for h in heads],
            anchors, conf_threshold, iou_threshold, m, num_classes=nc,
        )
        t3 = time.perf_counter()
        return (t1 - t0, t2 - t1, t3 - t2, t3 - t0)

    for _ in range(warmup):
        one(frames[0])
    stage_names = ("letterbox", "forward", "postprocess")
    stage_sums = dict.fromkeys(stage_names, 0.0)
    totals = []
    for frame in frames:
        lb, fw, pp, total = one(frame)
        for k, v in zip(stage_names, (lb, fw, pp)):
            stage_sums[k] += v * 1000.0
        totals.append(total * 1000.0)
    stages = {k: v / len(frames) for k, v in stage_sums.items()}
    return BenchStats.from_times(totals, warmup, stages=stages)
