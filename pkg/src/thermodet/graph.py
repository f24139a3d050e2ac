"""Nano detection network as an explicit node graph.

The graph stores composite nodes (ConvBNAct, C3, SPPF, ...) with their raw
training-era parameters (batch norm unfolded). For execution it lowers once
into a flat program of primitive steps with batch norm folded into the conv
weights; the same program drives float inference, calibration and the int8
path.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .anchors import AnchorSet, default_anchors
from .kernels import (
    conv2d_raw,
    fold_block,
    maxpool2d_raw,
    silu,
    upsample_nearest2x_raw,
)
from .tensor import BatchNorm, ConvSpec, Tensor

NODE_KINDS = ("ConvBNAct", "Bottleneck", "C3", "SPPF", "Upsample", "Concat", "Detect")

THERMAL_CLASS_NAMES = ("person", "car", "pole", "bike", "bus", "bicycle")


@dataclass
class ConvBlock:
    """Convolution + optional batch norm + activation."""

    conv: ConvSpec
    bn: BatchNorm | None
    act: str = "silu"  # "silu" or "none"


@dataclass
class BottleneckParams:
    cv1: ConvBlock
    cv2: ConvBlock
    add: bool


@dataclass
class C3Params:
    cv1: ConvBlock
    cv2: ConvBlock
    cv3: ConvBlock
    blocks: list[BottleneckParams]


@dataclass
class SPPFParams:
    cv1: ConvBlock
    cv2: ConvBlock
    pool_k: int = 5


@dataclass
class DetectParams:
    convs: list[ConvSpec]  # one 1x1 conv (with bias, no BN) per scale


@dataclass
class NodeSpec:
    id: int
    kind: str
    inputs: list[int]
    params: object | None = None


# ---------------------------------------------------------------------------
# Lowered primitive program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PrimConv:
    name: str
    input: str
    spec: ConvSpec  # batch norm already folded in
    act: str  # "silu" or "none"
    is_head: bool = False


@dataclass(frozen=True)
class PrimPool:
    name: str
    input: str
    k: int
    stride: int
    pad: int


@dataclass(frozen=True)
class PrimUpsample:
    name: str
    input: str


@dataclass(frozen=True)
class PrimConcat:
    name: str
    inputs: tuple[str, ...]


@dataclass(frozen=True)
class PrimAdd:
    name: str
    a: str
    b: str


PrimOp = PrimConv | PrimPool | PrimUpsample | PrimConcat | PrimAdd

INPUT_NAME = "input"


@dataclass(frozen=True)
class Program:
    ops: tuple[PrimOp, ...]
    heads: tuple[str, str, str]  # outputs for strides 8, 16, 32


def _lower_block(ops: list, name: str, inp: str, blk: ConvBlock, is_head: bool = False) -> str:
    ops.append(PrimConv(name, inp, fold_block(blk.conv, blk.bn), blk.act, is_head))
    return name


def _lower_bottleneck(ops: list, prefix: str, inp: str, bp: BottleneckParams) -> str:
    y1 = _lower_block(ops, f"{prefix}.cv1", inp, bp.cv1)
    y2 = _lower_block(ops, f"{prefix}.cv2", y1, bp.cv2)
    if bp.add:
        ops.append(PrimAdd(f"{prefix}.out", inp, y2))
        return f"{prefix}.out"
    return y2


def lower_graph(g: "ModelGraph") -> Program:
    """Flatten composite nodes into primitive steps, folding batch norm."""
    ops: list[PrimOp] = []
    out_of: dict[int, str] = {-1: INPUT_NAME}  # -1 denotes the graph input
    heads: tuple[str, str, str] | None = None

    def src(node: NodeSpec, i: int = 0) -> str:
        return out_of[node.inputs[i]]

    for node in g.nodes:
        nm = f"n{node.id}"
        if node.kind == "ConvBNAct":
            out_of[node.id] = _lower_block(ops, nm, src(node), node.params)
        elif node.kind == "Bottleneck":
            out_of[node.id] = _lower_bottleneck(ops, nm, src(node), node.params)
        elif node.kind == "C3":
            p: C3Params = node.params
            y = _lower_block(ops, f"{nm}.cv1", src(node), p.cv1)
            for i, bp in enumerate(p.blocks):
                y = _lower_bottleneck(ops, f"{nm}.m{i}", y, bp)
            y2 = _lower_block(ops, f"{nm}.cv2", src(node), p.cv2)
            ops.append(PrimConcat(f"{nm}.cat", (y, y2)))
            out_of[node.id] = _lower_block(ops, f"{nm}.cv3", f"{nm}.cat", p.cv3)
        elif node.kind == "SPPF":
            p: SPPFParams = node.params
            y = _lower_block(ops, f"{nm}.cv1", src(node), p.cv1)
            pools = []
            prev = y
            for i in range(3):
                pool = f"{nm}.p{i + 1}"
                ops.append(PrimPool(pool, prev, p.pool_k, 1, p.pool_k // 2))
                pools.append(pool)
                prev = pool
            ops.append(PrimConcat(f"{nm}.cat", (y, *pools)))
            out_of[node.id] = _lower_block(ops, f"{nm}.cv2", f"{nm}.cat", p.cv2)
        elif node.kind == "Upsample":
            ops.append(PrimUpsample(nm, src(node)))
            out_of[node.id] = nm
        elif node.kind == "Concat":
            ops.append(PrimConcat(nm, tuple(out_of[i] for i in node.inputs)))
            out_of[node.id] = nm
        elif node.kind == "Detect":
            p: DetectParams = node.params
            names = []
            for i, (stride, spec) in enumerate(zip(g.anchors.strides, p.convs)):
                hn = f"{nm}.h{stride}"
                ops.append(
                    PrimConv(hn, src(node, i), spec, "none", is_head=True)
                )
                names.append(hn)
            heads = tuple(names)
            out_of[node.id] = names[0]
        else:
            raise ValueError(f"unknown node kind {node.kind!r}")

    assert heads is not None
    return Program(tuple(ops), heads)


def run_program_f32(
    program: Program, x: np.ndarray, observer=None
) -> list[np.ndarray]:
    """Execute the lowered program in float32.

    `observer(name, array)` is called for every produced activation,
    including the graph input and each conv's pre-activation (as
    "<name>.raw") when the conv has a nonlinearity.
    """
    env: dict[str, np.ndarray] = {INPUT_NAME: x}
    if observer is not None:
        observer(INPUT_NAME, x)
    for op in program.ops:
        if isinstance(op, PrimConv):
            raw = conv2d_raw(env[op.input], op.spec)
            if op.act == "silu":
                if observer is not None:
                    observer(f"{op.name}.raw", raw)
                out = silu(raw)
            else:
                out = raw
        elif isinstance(op, PrimPool):
            out = maxpool2d_raw(env[op.input], op.k, op.stride, op.pad)
        elif isinstance(op, PrimUpsample):
            out = upsample_nearest2x_raw(env[op.input])
        elif isinstance(op, PrimConcat):
            out = np.concatenate([env[i] for i in op.inputs], axis=1)
        elif isinstance(op, PrimAdd):
            out = env[op.a] + env[op.b]
        else:  # pragma: no cover
            raise TypeError(f"unknown op {op!r}")
        env[op.name] = out
        if observer is not None:
            observer(op.name, out)
    return [env[h] for h in program.heads]


# ---------------------------------------------------------------------------
# Graph container
# ---------------------------------------------------------------------------


@dataclass
class ModelGraph:
    nodes: list[NodeSpec]
    num_classes: int
    anchors: AnchorSet
    input_size: int
    class_names: tuple[str, ...] = THERMAL_CLASS_NAMES
    _program: Program | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if len(self.class_names) != self.num_classes:
            self.class_names = tuple(f"class{i}" for i in range(self.num_classes))
        self.validate()

    def validate(self) -> None:
        detects = [n for n in self.nodes if n.kind == "Detect"]
        seen: set[int] = set()
        for n in self.nodes:
            if n.kind not in NODE_KINDS:
                raise ValueError(f"node {n.id}: unknown kind {n.kind!r}")
            for i in n.inputs:
                # -1 refers to the graph input for the first node chain
                if i >= 0 and i not in seen:
                    raise ValueError(f"node {n.id} reads node {i} before it is defined")
            seen.add(n.id)
        if self.nodes:
            if len(detects) != 1:
                raise ValueError(f"graph must contain exactly one Detect node, found {len(detects)}")
            if len(detects[0].inputs) != 3:
                raise ValueError("Detect must consume exactly 3 feature maps")

    def program(self) -> Program:
        if self._program is None:
            self._program = lower_graph(self)
        return self._program

    def forward(self, x: Tensor) -> tuple[Tensor, Tensor, Tensor]:
        s = self.input_size
        if x.dims != (1, 3, s, s):
            raise ValueError(f"expected input dims (1, 3, {s}, {s}), got {x.dims}")
        heads = run_program_f32(self.program(), x.data)
        return tuple(Tensor(h) for h in heads)  # type: ignore[return-value]

    def param_arrays(self):
        """Yield (name, array) for every stored parameter, in a fixed order."""
        for node in self.nodes:
            yield from node_param_arrays(node)


def _block_arrays(prefix: str, blk: ConvBlock):
    yield f"{prefix}.w", blk.conv.weights
    yield f"{prefix}.b", blk.conv.bias
    if blk.bn is not None:
        yield f"{prefix}.bn.gamma", blk.bn.gamma
        yield f"{prefix}.bn.beta", blk.bn.beta
        yield f"{prefix}.bn.mean", blk.bn.mean
        yield f"{prefix}.bn.var", blk.bn.var


def node_param_arrays(node: NodeSpec):
    nm = f"n{node.id}"
    if node.kind == "ConvBNAct":
        yield from _block_arrays(nm, node.params)
    elif node.kind == "Bottleneck":
        yield from _block_arrays(f"{nm}.cv1", node.params.cv1)
        yield from _block_arrays(f"{nm}.cv2", node.params.cv2)
    elif node.kind == "C3":
        p: C3Params = node.params
        yield from _block_arrays(f"{nm}.cv1", p.cv1)
        yield from _block_arrays(f"{nm}.cv2", p.cv2)
        for i, bp in enumerate(p.blocks):
            yield from _block_arrays(f"{nm}.m{i}.cv1", bp.cv1)
            yield from _block_arrays(f"{nm}.m{i}.cv2", bp.cv2)
        yield from _block_arrays(f"{nm}.cv3", p.cv3)
    elif node.kind == "SPPF":
        yield from _block_arrays(f"{nm}.cv1", node.params.cv1)
        yield from _block_arrays(f"{nm}.cv2", node.params.cv2)
    elif node.kind == "Detect":
        for i, spec in enumerate(node.params.convs):
            yield f"{nm}.m{i}.w", spec.weights
            yield f"{nm}.m{i}.b", spec.bias


def count_params(g: ModelGraph) -> int:
    """Total stored weight/bias/batch-norm element count (pre-folding)."""
    return sum(int(a.size) for _, a in g.param_arrays())


def zero_weights(g: ModelGraph) -> None:
    """Zero all weights/biases (BN variance kept at 1 so folding stays finite)."""
    for name, arr in g.param_arrays():
        if name.endswith(".bn.var"):
            arr.fill(1.0)
        else:
            arr.fill(0.0)
    g._program = None


# ---------------------------------------------------------------------------
# Nano topology builder
# ---------------------------------------------------------------------------

DEPTH_MULTIPLE = 0.33
WIDTH_MULTIPLE = 0.25
_BASE_WIDTHS = {64: 64, 128: 128, 256: 256, 512: 512, 1024: 1024}


def _make_divisible(x: float, divisor: int = 8) -> int:
    return max(divisor, int(round(x / divisor) * divisor))


def scaled_width(base: int) -> int:
    return _make_divisible(base * WIDTH_MULTIPLE)


def scaled_depth(n: int) -> int:
    return max(round(n * DEPTH_MULTIPLE), 1) if n > 1 else n


class _Init:
    """Deterministic He-style weight initializer."""

    def __init__(self, seed: int):
        self.rng = np.random.default_rng(seed)

    def conv(self, c1: int, c2: int, k: int, s: int, p: int | None = None,
             bias: bool = False, gain: float = 1.0) -> ConvSpec:
        if p is None:
            p = k // 2
        fan_in = c1 * k * k
        w = self.rng.standard_normal((c2, c1, k, k)) * np.sqrt(2.0 / fan_in) * gain
        b = self.rng.standard_normal(c2) * 0.1 if bias else np.zeros(c2)
        return ConvSpec(c1, c2, (k, k), s, p,
                        weights=w.astype(np.float32), bias=b.astype(np.float32))

    def block(self, c1: int, c2: int, k: int, s: int, p: int | None = None) -> ConvBlock:
        return ConvBlock(self.conv(c1, c2, k, s, p), BatchNorm.identity(c2), "silu")

    def bottleneck(self, c1: int, c2: int, shortcut: bool) -> BottleneckParams:
        c_ = c2  # expansion 1.0 inside C3
        return BottleneckParams(
            cv1=self.block(c1, c_, 1, 1),
            cv2=self.block(c_, c2, 3, 1),
            add=shortcut and c1 == c2,
        )

    def c3(self, c1: int, c2: int, n: int, shortcut: bool = True) -> C3Params:
        c_ = c2 // 2
        return C3Params(
            cv1=self.block(c1, c_, 1, 1),
            cv2=self.block(c1, c_, 1, 1),
            cv3=self.block(2 * c_, c2, 1, 1),
            blocks=[self.bottleneck(c_, c_, shortcut) for _ in range(n)],
        )

    def sppf(self, c1: int, c2: int, k: int = 5) -> SPPFParams:
        c_ = c1 // 2
        return SPPFParams(cv1=self.block(c1, c_, 1, 1),
                          cv2=self.block(c_ * 4, c2, 1, 1), pool_k=k)


def build_yolov5n(
    num_classes: int,
    input_size: int,
    anchors: AnchorSet | None = None,
    seed: int = 0,
) -> ModelGraph:
    """Build the nano-scale detector graph (depth x0.33, width x0.25).

    Stem is a 6x6 stride-2 conv; C3 backbone with an SPPF tail; PAN neck;
    three 1x1 detect convs over strides 8/16/32. Weights are He-initialized
    from `seed`.
    """
    if num_classes < 1:
        raise ValueError("num_classes must be >= 1")
    if input_size % 32:
        raise ValueError("input_size must be a multiple of 32")
    if anchors is None:
        anchors = default_anchors(input_size)

    init = _Init(seed)
    w = scaled_width
    c64, c128, c256, c512, c1024 = w(64), w(128), w(256), w(512), w(1024)
    n3, n6, n9 = scaled_depth(3), scaled_depth(6), scaled_depth(9)

    nodes: list[NodeSpec] = []

    def add(kind: str, inputs: list[int], params=None) -> int:
        nid = len(nodes)
        nodes.append(NodeSpec(nid, kind, inputs, params))
        return nid

    # backbone
    n0 = add("ConvBNAct", [-1], init.block(3, c64, 6, 2, 2))           # P1/2
    n1 = add("ConvBNAct", [n0], init.block(c64, c128, 3, 2))           # P2/4
    n2 = add("C3", [n1], init.c3(c128, c128, n3))
    n3_ = add("ConvBNAct", [n2], init.block(c128, c256, 3, 2))         # P3/8
    n4 = add("C3", [n3_], init.c3(c256, c256, n6))
    n5 = add("ConvBNAct", [n4], init.block(c256, c512, 3, 2))          # P4/16
    n6_ = add("C3", [n5], init.c3(c512, c512, n9))
    n7 = add("ConvBNAct", [n6_], init.block(c512, c1024, 3, 2))        # P5/32
    n8 = add("C3", [n7], init.c3(c1024, c1024, n3))
    n9_ = add("SPPF", [n8], init.sppf(c1024, c1024))

    # neck (PAN)
    n10 = add("ConvBNAct", [n9_], init.block(c1024, c512, 1, 1))
    n11 = add("Upsample", [n10])
    n12 = add("Concat", [n11, n6_])
    n13 = add("C3", [n12], init.c3(c1024, c512, n3, shortcut=False))
    n14 = add("ConvBNAct", [n13], init.block(c512, c256, 1, 1))
    n15 = add("Upsample", [n14])
    n16 = add("Concat", [n15, n4])
    n17 = add("C3", [n16], init.c3(c512, c256, n3, shortcut=False))    # P3 out
    n18 = add("ConvBNAct", [n17], init.block(c256, c256, 3, 2))
    n19 = add("Concat", [n18, n14])
    n20 = add("C3", [n19], init.c3(c512, c512, n3, shortcut=False))    # P4 out
    n21 = add("ConvBNAct", [n20], init.block(c512, c512, 3, 2))
    n22 = add("Concat", [n21, n10])
    n23 = add("C3", [n22], init.c3(c1024, c1024, n3, shortcut=False))  # P5 out

    no = 3 * (5 + num_classes)
    detect = DetectParams(
        convs=[
            init.conv(c256, no, 1, 1, 0, bias=True),
            init.conv(c512, no, 1, 1, 0, bias=True),
            init.conv(c1024, no, 1, 1, 0, bias=True),
        ]
    )
    add("Detect", [n17, n20, n23], detect)

    return ModelGraph(
        nodes=nodes,
        num_classes=num_classes,
        anchors=anchors,
        input_size=input_size,
        class_names=THERMAL_CLASS_NAMES if num_classes == 6 else tuple(),
    )
