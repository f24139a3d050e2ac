"""Post-training int8 quantization: calibration, affine parameters, integer
convolution with requantization, and the TYQ1 quantized-model format.

Scheme: per-channel symmetric int8 weights, per-tensor asymmetric int8
activations, int32 biases at scale w_scale * in_scale. Requantization uses a
float multiplier with round-half-to-even. SiLU runs through a 256-entry
lookup table; detect-head convolutions stay in f32.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .anchors import AnchorSet
from .graph import (
    INPUT_NAME,
    ModelGraph,
    PrimAdd,
    PrimConcat,
    PrimConv,
    PrimPool,
    PrimUpsample,
    Program,
    run_program_f32,
)
from .kernels import conv2d_raw, maxpool2d_raw, silu, upsample_nearest2x_raw
from .modelio import (
    MAGIC as TYM_MAGIC,
    ModelFormatError,
    node_desc,
    node_from,
    pack_container,
    unpack_container,
)
from .tensor import ConvSpec, QuantParams, Tensor

TYQ_MAGIC = b"TYQ1"
HIST_BINS = 2048
QMIN, QMAX = -128, 127


# ---------------------------------------------------------------------------
# Affine parameter derivation and tensor-level quantize/dequantize
# ---------------------------------------------------------------------------


def qparams_from_range(rmin: float, rmax: float) -> QuantParams:
    """Per-tensor asymmetric params; the range is widened to include zero so
    that 0.0 is exactly representable."""
    rmin, rmax = min(float(rmin), 0.0), max(float(rmax), 0.0)
    if rmax == rmin:
        return QuantParams(scale=1.0, zero_point=0)
    scale = (rmax - rmin) / (QMAX - QMIN)
    zp = int(np.clip(np.round(QMIN - rmin / scale), QMIN, QMAX))
    return QuantParams(scale=scale, zero_point=zp)


def quantize_array(x: np.ndarray, qp: QuantParams) -> np.ndarray:
    if qp.per_channel:
        shape = [1] * x.ndim
        shape[qp.axis] = -1
        scale = qp.scale.reshape(shape)
        q = np.round(x / scale)
    else:
        q = np.round(x / qp.scale) + qp.zero_point
    return np.clip(q, QMIN, QMAX).astype(np.int8)


def dequantize_array(q: np.ndarray, qp: QuantParams) -> np.ndarray:
    if qp.per_channel:
        shape = [1] * q.ndim
        shape[qp.axis] = -1
        return (q.astype(np.float32)) * qp.scale.reshape(shape)
    return ((q.astype(np.float32)) - np.float32(qp.zero_point)) * np.float32(qp.scale)


def quantize_tensor(x: Tensor, qp: QuantParams) -> Tensor:
    """q = clamp(round(x / scale) + zero_point, -128, 127), round half to even."""
    if x.dtype != "f32":
        raise ValueError("quantize_tensor expects an f32 tensor")
    return Tensor(quantize_array(x.data, qp), qp)


def dequantize(q: Tensor) -> Tensor:
    if q.dtype != "i8":
        raise ValueError("dequantize expects an int8 tensor")
    return Tensor(dequantize_array(q.data, q.qparams))


def weight_qparams(w: np.ndarray, axis: int = 0) -> QuantParams:
    """Per-channel symmetric scales along `axis` (zero points all 0)."""
    reduce_axes = tuple(i for i in range(w.ndim) if i != axis)
    absmax = np.abs(w).max(axis=reduce_axes)
    scale = np.maximum(absmax, 1e-12) / QMAX
    return QuantParams(scale=scale.astype(np.float32),
                       zero_point=np.zeros(scale.shape, dtype=np.int32), axis=axis)


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


@dataclass
class TensorStats:
    """Running min/max plus an absolute-value histogram (for percentile mode).

    The histogram cap grows by doubling, merging bin pairs, so merges of
    independently collected stats stay exact.
    """

    min: float = np.inf
    max: float = -np.inf
    hist: np.ndarray | None = None
    cap: float = 0.0

    def update(self, arr: np.ndarray, with_hist: bool) -> None:
        self.min = min(self.min, float(arr.min()))
        self.max = max(self.max, float(arr.max()))
        if not with_hist:
            return
        a = np.abs(arr).ravel()
        amax = float(a.max())
        if self.hist is None:
            self.hist = np.zeros(HIST_BINS, dtype=np.int64)
            self.cap = amax if amax > 0 else 1.0
        while amax > self.cap:
            folded = self.hist.reshape(-1, 2).sum(axis=1)
            self.hist = np.concatenate([folded, np.zeros(HIST_BINS // 2, dtype=np.int64)])
            self.cap *= 2.0
        counts, _ = np.histogram(a, bins=HIST_BINS, range=(0.0, self.cap))
        self.hist += counts

    def merge(self, other: "TensorStats") -> None:
        self.min = min(self.min, other.min)
        self.max = max(self.max, other.max)
        if other.hist is None:
            return
        if self.hist is None:
            self.hist = other.hist.copy()
            self.cap = other.cap
            return
        while self.cap < other.cap:
            folded = self.hist.reshape(-1, 2).sum(axis=1)
            self.hist = np.concatenate([folded, np.zeros(HIST_BINS // 2, dtype=np.int64)])
            self.cap *= 2.0
        o_hist, o_cap = other.hist, other.cap
        while o_cap < self.cap:
            folded = o_hist.reshape(-1, 2).sum(axis=1)
            o_hist = np.concatenate([folded, np.zeros(HIST_BINS // 2, dtype=np.int64)])
            o_cap *= 2.0
        self.hist += o_hist

    def abs_percentile(self, p: float) -> float:
        """Upper edge of the bin containing the p-th percentile of |x|."""
        if self.hist is None:
            return max(abs(self.min), abs(self.max))
        total = self.hist.sum()
        target = total * (p / 100.0)
        cum = np.cumsum(self.hist)
        idx = int(np.searchsorted(cum, target))
        idx = min(idx, HIST_BINS - 1)
        return (idx + 1) * self.cap / HIST_BINS


@dataclass
class CalibrationStats:
    tensors: dict[str, TensorStats] = field(default_factory=dict)
    frame_count: int = 0
    mode: str = "minmax"
    percentile: float = 99.99

    def observer(self, with_hist: bool):
        def record(name: str, arr: np.ndarray):
            self.tensors.setdefault(name, TensorStats()).update(arr, with_hist)
        return record

    def merge(self, other: "CalibrationStats") -> None:
        for name, ts in other.tensors.items():
            if name in self.tensors:
                self.tensors[name].merge(ts)
            else:
                self.tensors[name] = ts
        self.frame_count += other.frame_count

    def range_of(self, name: str) -> tuple[float, float]:
        ts = self.tensors[name]
        if self.mode == "percentile":
            t = ts.abs_percentile(self.percentile)
            return max(ts.min, -t), min(ts.max, t)
        return ts.min, ts.max


def calibrate(
    g: ModelGraph,
    frames: list,
    mode: str = "minmax",
    percentile: float = 99.99,
) -> CalibrationStats:
    """Run the f32 model over representative frames, recording every
    activation tensor's range (conv pre-activations included)."""
    if mode not in ("minmax", "percentile"):
        raise ValueError(f"unknown calibration mode {mode!r}")
    if not frames:
        raise ValueError("calibration needs at least one frame")
    from .imaging import letterbox

    stats = CalibrationStats(mode=mode, percentile=percentile)
    program = g.program()
    rec = stats.observer(with_hist=(mode == "percentile"))
    for frame in frames:
        tensor, _, _ = letterbox(frame, g.input_size)
        run_program_f32(program, tensor.data, observer=rec)
        stats.frame_count += 1
    return stats


# ---------------------------------------------------------------------------
# Quantized program
# ---------------------------------------------------------------------------


@dataclass
class QConvSpec:
    """Integer convolution: int8 weights, per-channel scales, int32 bias."""

    name: str
    input: str
    in_ch: int
    out_ch: int
    kernel: tuple[int, int]
    stride: int
    padding: int
    groups: int
    act: str
    weights_q: np.ndarray   # int8 (out_ch, in_ch/groups, kh, kw)
    w_scale: np.ndarray     # f32 (out_ch,)
    bias_q: np.ndarray      # int32 (out_ch,)
    in_params: QuantParams
    raw_params: QuantParams   # conv output before the nonlinearity
    out_params: QuantParams   # after the nonlinearity (== raw when act none)
    lut: np.ndarray | None = None  # int8 (256,) SiLU table

    def build_lut(self) -> None:
        if self.act != "silu":
            self.lut = None
            return
        q = np.arange(QMIN, QMAX + 1, dtype=np.float32)
        x = (q - self.raw_params.zero_point) * self.raw_params.scale
        self.lut = quantize_array(silu(x), self.out_params)


@dataclass(frozen=True)
class QHeadConv:
    """Detect-head conv kept in f32; consumes a dequantized activation."""

    name: str
    input: str
    spec: ConvSpec


def qconv2d(x: Tensor, spec: QConvSpec) -> Tensor:
    """Integer conv: int32 accumulation of (q_in - z_in) * q_w plus int32
    bias, requantized to the raw-output params by float multiplier, then the
    activation lookup table if present."""
    if x.dtype != "i8":
        raise ValueError("qconv2d expects an int8 tensor")
    xp = x.qparams
    ip = spec.in_params
    if xp.per_channel or abs(xp.scale - ip.scale) > 1e-12 * ip.scale or xp.zero_point != ip.zero_point:
        raise ValueError(f"{spec.name}: input qparams do not match the layer's expected params")
    raw = qconv2d_raw(x.data, spec)
    if spec.lut is not None:
        out = spec.lut[raw.astype(np.int16) + 128]
        return Tensor(out, spec.out_params)
    return Tensor(raw, spec.raw_params)


def qconv2d_raw(q_in: np.ndarray, spec: QConvSpec) -> np.ndarray:
    """Raw-output int8 array (pre-activation)."""
    from .kernels import im2col

    n, c, h, w = q_in.shape
    if c != spec.in_ch:
        raise ValueError(f"{spec.name}: input has {c} channels, expected {spec.in_ch}")
    kh, kw = spec.kernel
    p, s = spec.padding, spec.stride
    oh = (h + 2 * p - kh) // s + 1
    ow = (w + 2 * p - kw) // s + 1
    if oh <= 0 or ow <= 0:
        raise ValueError("zero-sized output")
    # subtracting the zero point first makes zero padding correct
    arr = q_in.astype(np.int32) - np.int32(spec.in_params.zero_point)
    if p:
        arr = np.pad(arr, ((0, 0), (0, 0), (p, p), (p, p)))
    if spec.groups == 1:
        cols = im2col(arr, kh, kw, s, oh, ow)
        wmat = spec.weights_q.reshape(spec.out_ch, -1).astype(np.int32)
        acc = np.matmul(wmat, cols)
    else:
        cg = spec.in_ch // spec.groups
        og = spec.out_ch // spec.groups
        parts = []
        for g in range(spec.groups):
            cols = im2col(arr[:, g * cg : (g + 1) * cg], kh, kw, s, oh, ow)
            wmat = spec.weights_q[g * og : (g + 1) * og].reshape(og, -1).astype(np.int32)
            parts.append(np.matmul(wmat, cols))
        acc = np.concatenate(parts, axis=1)
    acc += spec.bias_q[None, :, None]
    mult = (
        np.float64(spec.in_params.scale)
        * spec.w_scale.astype(np.float64)
        / np.float64(spec.raw_params.scale)
    )
    q = np.round(acc.astype(np.float64) * mult[None, :, None]) + spec.raw_params.zero_point
    return np.clip(q, QMIN, QMAX).astype(np.int8).reshape(n, spec.out_ch, oh, ow)


def requantize(q: np.ndarray, src: QuantParams, dst: QuantParams) -> np.ndarray:
    if (src.scale, src.zero_point) == (dst.scale, dst.zero_point):
        return q
    x = (q.astype(np.float64) - src.zero_point) * (src.scale / dst.scale)
    return np.clip(np.round(x) + dst.zero_point, QMIN, QMAX).astype(np.int8)


@dataclass
class QuantizedModel:
    ops: list           # QConvSpec | QHeadConv | PrimPool | PrimUpsample | PrimConcat | PrimAdd
    act_params: dict[str, QuantParams]
    heads: tuple[str, str, str]
    node_descs: list[dict]  # structural graph description (batch norm folded away)
    num_classes: int
    input_size: int
    anchors: AnchorSet
    class_names: tuple[str, ...]

    def run_raw(self, x: np.ndarray) -> list[np.ndarray]:
        """Quantize the f32 input, execute the integer program, return f32 heads."""
        env: dict[str, np.ndarray] = {
            INPUT_NAME: quantize_array(x.astype(np.float32), self.act_params[INPUT_NAME])
        }
        fenv: dict[str, np.ndarray] = {}
        for op in self.ops:
            if isinstance(op, QConvSpec):
                t = qconv2d(Tensor(env[op.input], self.act_params[op.input]), op)
                env[op.name] = t.data
            elif isinstance(op, QHeadConv):
                x32 = dequantize_array(env[op.input], self.act_params[op.input])
                fenv[op.name] = conv2d_raw(x32, op.spec)
            elif isinstance(op, PrimPool):
                env[op.name] = maxpool2d_raw(env[op.input], op.k, op.stride, op.pad,
                                             pad_value=QMIN)
            elif isinstance(op, PrimUpsample):
                env[op.name] = upsample_nearest2x_raw(env[op.input])
            elif isinstance(op, PrimConcat):
                dst = self.act_params[op.name]
                parts = [requantize(env[i], self.act_params[i], dst) for i in op.inputs]
                env[op.name] = np.concatenate(parts, axis=1)
            elif isinstance(op, PrimAdd):
                pa, pb = self.act_params[op.a], self.act_params[op.b]
                dst = self.act_params[op.name]
                x64 = (env[op.a].astype(np.float64) - pa.zero_point) * pa.scale + (
                    env[op.b].astype(np.float64) - pb.zero_point
                ) * pb.scale
                env[op.name] = np.clip(
                    np.round(x64 / dst.scale) + dst.zero_point, QMIN, QMAX
                ).astype(np.int8)
            else:  # pragma: no cover
                raise TypeError(f"unknown op {op!r}")
        return [fenv[h] for h in self.heads]

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        s = self.input_size
        if x.dims != (1, 3, s, s):
            raise ValueError(f"expected input dims (1, 3, {s}, {s}), got {x.dims}")
        return tuple(Tensor(h) for h in self.run_raw(x.data))  # type: ignore[return-value]


def quantized_forward(qm: QuantizedModel, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
    return qm.forward(x)


# ---------------------------------------------------------------------------
# Model quantization
# ---------------------------------------------------------------------------


def _strip_bn(desc: dict) -> dict:
    """Node desc with batch norm marked folded away."""
    out = {}
    for k, v in desc.items():
        if isinstance(v, dict):
            out[k] = _strip_bn(v)
        elif isinstance(v, list):
            out[k] = [_strip_bn(i) if isinstance(i, dict) else i for i in v]
        else:
            out[k] = v
    if out.get("bn") is True:
        out["bn"] = False
        out.pop("eps", None)
    return out


def quantize_model(g: ModelGraph, stats: CalibrationStats) -> QuantizedModel:
    """Turn a float graph plus calibration statistics into an int8 model."""
    program = g.program()
    needed = [INPUT_NAME]
    for op in program.ops:
        if isinstance(op, PrimConv) and not op.is_head:
            if op.act != "none":
                needed.append(f"{op.name}.raw")
            needed.append(op.name)
        elif isinstance(op, (PrimConcat, PrimAdd)):
            needed.append(op.name)
    missing = [n for n in needed if n not in stats.tensors]
    if missing:
        raise ValueError(f"calibration stats missing for: {', '.join(missing[:5])}")

    act: dict[str, QuantParams] = {}
    for name in needed:
        act[name] = qparams_from_range(*stats.range_of(name))
    # pools and upsamples pass their input's params through unchanged
    for op in program.ops:
        if isinstance(op, (PrimPool, PrimUpsample)):
            act[op.name] = act[op.input]

    ops: list = []
    for op in program.ops:
        if isinstance(op, PrimConv):
            if op.is_head:
                ops.append(QHeadConv(op.name, op.input, op.spec))
                continue
            wq = weight_qparams(op.spec.weights)
            in_p = act[op.input]
            raw_p = act[f"{op.name}.raw"] if op.act != "none" else act[op.name]
            out_p = act[op.name]
            bias_scale = wq.scale.astype(np.float64) * np.float64(in_p.scale)
            q = QConvSpec(
                name=op.name,
                input=op.input,
                in_ch=op.spec.in_ch,
                out_ch=op.spec.out_ch,
                kernel=op.spec.kernel,
                stride=op.spec.stride,
                padding=op.spec.padding,
                groups=op.spec.groups,
                act=op.act,
                weights_q=quantize_array(op.spec.weights, wq),
                w_scale=wq.scale,
                bias_q=np.round(op.spec.bias.astype(np.float64) / bias_scale).astype(np.int32),
                in_params=in_p,
                raw_params=raw_p,
                out_params=out_p,
            )
            q.build_lut()
            ops.append(q)
        else:
            ops.append(op)

    return QuantizedModel(
        ops=ops,
        act_params=act,
        heads=program.heads,
        node_descs=[_strip_bn(node_desc(n)) for n in g.nodes],
        num_classes=g.num_classes,
        input_size=g.input_size,
        anchors=g.anchors,
        class_names=g.class_names,
    )


def dequantize_model(qm: QuantizedModel) -> ModelGraph:
    """Float graph with the quantized weights expanded back to f32 (no BN)."""
    arrays: dict[str, np.ndarray] = {}
    for op in qm.ops:
        if isinstance(op, QConvSpec):
            w = op.weights_q.astype(np.float32) * op.w_scale[:, None, None, None]
            b = (
                op.bias_q.astype(np.float64)
                * op.w_scale.astype(np.float64)
                * np.float64(op.in_params.scale)
            ).astype(np.float32)
            arrays[f"{op.name}.w"] = w
            arrays[f"{op.name}.b"] = b
        elif isinstance(op, QHeadConv):
            arrays[f"{op.name}.w"] = op.spec.weights.copy()
            arrays[f"{op.name}.b"] = op.spec.bias.copy()
    # detect node arrays are named n{id}.m{i}.* in descs but n{id}.h{stride} in prims
    for desc in qm.node_descs:
        if desc["kind"] == "Detect":
            for i, stride in enumerate(qm.anchors.strides):
                pn = f"n{desc['id']}.h{stride}"
                arrays[f"n{desc['id']}.m{i}.w"] = arrays.pop(f"{pn}.w")
                arrays[f"n{desc['id']}.m{i}.b"] = arrays.pop(f"{pn}.b")
    nodes = [node_from(d, arrays) for d in qm.node_descs]
    return ModelGraph(
        nodes=nodes,
        num_classes=qm.num_classes,
        anchors=qm.anchors,
        input_size=qm.input_size,
        class_names=qm.class_names,
    )


# ---------------------------------------------------------------------------
# TYQ1 serialization
# ---------------------------------------------------------------------------


def _qp_pair(qp: QuantParams) -> list:
    return [float(qp.scale), int(qp.zero_point)]


def save_quantized(qm: QuantizedModel, path: str | Path) -> None:
    op_descs = []
    blobs: list[tuple[str, np.ndarray, str]] = []
    for op in qm.ops:
        if isinstance(op, QConvSpec):
            op_descs.append(
                {
                    "op": "qconv",
                    "name": op.name,
                    "input": op.input,
                    "in": op.in_ch,
                    "out": op.out_ch,
                    "k": list(op.kernel),
                    "s": op.stride,
                    "p": op.padding,
                    "g": op.groups,
                    "act": op.act,
                    "in_qp": _qp_pair(op.in_params),
                    "raw_qp": _qp_pair(op.raw_params),
                    "out_qp": _qp_pair(op.out_params),
                }
            )
            blobs.append((f"{op.name}.w", op.weights_q, "i8"))
            blobs.append((f"{op.name}.ws", op.w_scale, "f32"))
            blobs.append((f"{op.name}.b", op.bias_q, "i32"))
        elif isinstance(op, QHeadConv):
            op_descs.append(
                {
                    "op": "hconv",
                    "name": op.name,
                    "input": op.input,
                    "in": op.spec.in_ch,
                    "out": op.spec.out_ch,
                    "k": list(op.spec.kernel),
                    "s": op.spec.stride,
                    "p": op.spec.padding,
                    "g": op.spec.groups,
                }
            )
            blobs.append((f"{op.name}.w", op.spec.weights, "f32"))
            blobs.append((f"{op.name}.b", op.spec.bias, "f32"))
        elif isinstance(op, PrimPool):
            op_descs.append({"op": "pool", "name": op.name, "input": op.input,
                             "k": op.k, "s": op.stride, "p": op.pad})
        elif isinstance(op, PrimUpsample):
            op_descs.append({"op": "upsample", "name": op.name, "input": op.input})
        elif isinstance(op, PrimConcat):
            op_descs.append({"op": "concat", "name": op.name, "inputs": list(op.inputs)})
        elif isinstance(op, PrimAdd):
            op_descs.append({"op": "add", "name": op.name, "a": op.a, "b": op.b})
    header = {
        "format": "TYQ1",
        "num_classes": qm.num_classes,
        "input_size": qm.input_size,
        "class_names": list(qm.class_names),
        "anchors": qm.anchors.anchors.tolist(),
        "strides": list(qm.anchors.strides),
        "heads": list(qm.heads),
        "nodes": qm.node_descs,
        "qprogram": op_descs,
        "act_params": {k: _qp_pair(v) for k, v in sorted(qm.act_params.items())},
    }
    Path(path).write_bytes(pack_container(TYQ_MAGIC, header, blobs))


def load_quantized(path: str | Path) -> QuantizedModel:
    header, arrays = unpack_container(Path(path).read_bytes(), TYQ_MAGIC)
    act = {
        k: QuantParams(scale=v[0], zero_point=v[1])
        for k, v in header["act_params"].items()
    }
    ops: list = []
    for d in header["qprogram"]:
        kind = d["op"]
        if kind == "qconv":
            q = QConvSpec(
                name=d["name"],
                input=d["input"],
                in_ch=d["in"],
                out_ch=d["out"],
                kernel=tuple(d["k"]),
                stride=d["s"],
                padding=d["p"],
                groups=d["g"],
                act=d["act"],
                weights_q=arrays[f"{d['name']}.w"],
                w_scale=arrays[f"{d['name']}.ws"],
                bias_q=arrays[f"{d['name']}.b"],
                in_params=QuantParams(scale=d["in_qp"][0], zero_point=d["in_qp"][1]),
                raw_params=QuantParams(scale=d["raw_qp"][0], zero_point=d["raw_qp"][1]),
                out_params=QuantParams(scale=d["out_qp"][0], zero_point=d["out_qp"][1]),
            )
            q.build_lut()
            ops.append(q)
        elif kind == "hconv":
            spec = ConvSpec(
                in_ch=d["in"], out_ch=d["out"], kernel=tuple(d["k"]),
                stride=d["s"], padding=d["p"], groups=d["g"],
                weights=arrays[f"{d['name']}.w"], bias=arrays[f"{d['name']}.b"],
            )
            ops.append(QHeadConv(d["name"], d["input"], spec))
        elif kind == "pool":
            ops.append(PrimPool(d["name"], d["input"], d["k"], d["s"], d["p"]))
        elif kind == "upsample":
            ops.append(PrimUpsample(d["name"], d["input"]))
        elif kind == "concat":
            ops.append(PrimConcat(d["name"], tuple(d["inputs"])))
        elif kind == "add":
            ops.append(PrimAdd(d["name"], d["a"], d["b"]))
        else:
            raise ModelFormatError(f"unknown program op {kind!r}")
    return QuantizedModel(
        ops=ops,
        act_params=act,
        heads=tuple(header["heads"]),
        node_descs=header["nodes"],
        num_classes=header["num_classes"],
        input_size=header["input_size"],
        anchors=AnchorSet(np.array(header["anchors"], dtype=np.float32),
                          tuple(header["strides"])),
        class_names=tuple(header["class_names"]),
    )


def load_any_model(path: str | Path):
    """Open a TYM1 or TYQ1 file by magic."""
    from .modelio import load_model

    data = Path(path).read_bytes()[:4]
    if data == TYM_MAGIC:
        return load_model(path)
    if data == TYQ_MAGIC:
        return load_quantized(path)
    raise ModelFormatError(f"{path}: bad magic: not a TYM1/TYQ1 model file")
