"""TYM1 model file format: JSON-described header plus raw little-endian blobs.

Layout:
    magic "TYM1" | u32 version | u32 header_len | header (UTF-8 JSON)
    | payload (arrays back to back) | u32 CRC32 of payload

The header describes the node list, dims, anchors and class names; the
payload carries every parameter array in graph order, f32 little-endian.
Round-trips are bit-exact.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .anchors import AnchorSet
from .graph import (
    BottleneckParams,
    C3Params,
    ConvBlock,
    DetectParams,
    ModelGraph,
    NodeSpec,
    SPPFParams,
)
from .tensor import BatchNorm, ConvSpec

MAGIC = b"TYM1"
VERSION = 1

_DTYPES = {"f32": "<f4", "i8": "i1", "i32": "<i4"}


class ModelFormatError(ValueError):
    """Raised for malformed model files (bad magic, truncation, checksum)."""


def _conv_desc(spec: ConvSpec) -> dict:
    return {
        "in": spec.in_ch,
        "out": spec.out_ch,
        "k": list(spec.kernel),
        "s": spec.stride,
        "p": spec.padding,
        "g": spec.groups,
    }


def _conv_from(desc: dict, w: np.ndarray, b: np.ndarray) -> ConvSpec:
    return ConvSpec(
        in_ch=desc["in"],
        out_ch=desc["out"],
        kernel=tuple(desc["k"]),
        stride=desc["s"],
        padding=desc["p"],
        groups=desc["g"],
        weights=w,
        bias=b,
    )


def _block_desc(blk: ConvBlock) -> dict:
    d = {"conv": _conv_desc(blk.conv), "act": blk.act, "bn": blk.bn is not None}
    if blk.bn is not None:
        d["eps"] = blk.bn.eps
    return d


def _block_from(desc: dict, prefix: str, arrays: dict) -> ConvBlock:
    conv = _conv_from(desc["conv"], arrays[f"{prefix}.w"], arrays[f"{prefix}.b"])
    bn = None
    if desc["bn"]:
        bn = BatchNorm(
            gamma=arrays[f"{prefix}.bn.gamma"],
            beta=arrays[f"{prefix}.bn.beta"],
            mean=arrays[f"{prefix}.bn.mean"],
            var=arrays[f"{prefix}.bn.var"],
            eps=desc["eps"],
        )
    return ConvBlock(conv, bn, desc["act"])


def node_desc(node: NodeSpec) -> dict:
    d = {"id": node.id, "kind": node.kind, "inputs": list(node.inputs)}
    p = node.params
    if node.kind == "ConvBNAct":
        d["block"] = _block_desc(p)
    elif node.kind == "Bottleneck":
        d.update(cv1=_block_desc(p.cv1), cv2=_block_desc(p.cv2), add=p.add)
    elif node.kind == "C3":
        d.update(
            cv1=_block_desc(p.cv1),
            cv2=_block_desc(p.cv2),
            cv3=_block_desc(p.cv3),
            blocks=[
                {"cv1": _block_desc(bp.cv1), "cv2": _block_desc(bp.cv2), "add": bp.add}
                for bp in p.blocks
            ],
        )
    elif node.kind == "SPPF":
        d.update(cv1=_block_desc(p.cv1), cv2=_block_desc(p.cv2), pool_k=p.pool_k)
    elif node.kind == "Detect":
        d["convs"] = [_conv_desc(c) for c in p.convs]
    return d


def node_from(desc: dict, arrays: dict) -> NodeSpec:
    nid, kind = desc["id"], desc["kind"]
    nm = f"n{nid}"
    params = None
    if kind == "ConvBNAct":
        params = _block_from(desc["block"], nm, arrays)
    elif kind == "Bottleneck":
        params = BottleneckParams(
            cv1=_block_from(desc["cv1"], f"{nm}.cv1", arrays),
            cv2=_block_from(desc["cv2"], f"{nm}.cv2", arrays),
            add=desc["add"],
        )
    elif kind == "C3":
        params = C3Params(
            cv1=_block_from(desc["cv1"], f"{nm}.cv1", arrays),
            cv2=_block_from(desc["cv2"], f"{nm}.cv2", arrays),
            cv3=_block_from(desc["cv3"], f"{nm}.cv3", arrays),
            blocks=[
                BottleneckParams(
                    cv1=_block_from(b["cv1"], f"{nm}.m{i}.cv1", arrays),
                    cv2=_block_from(b["cv2"], f"{nm}.m{i}.cv2", arrays),
                    add=b["add"],
                )
                for i, b in enumerate(desc["blocks"])
            ],
        )
    elif kind == "SPPF":
        params = SPPFParams(
            cv1=_block_from(desc["cv1"], f"{nm}.cv1", arrays),
            cv2=_block_from(desc["cv2"], f"{nm}.cv2", arrays),
            pool_k=desc["pool_k"],
        )
    elif kind == "Detect":
        params = DetectParams(
            convs=[
                _conv_from(c, arrays[f"{nm}.m{i}.w"], arrays[f"{nm}.m{i}.b"])
                for i, c in enumerate(desc["convs"])
            ]
        )
    return NodeSpec(nid, kind, list(desc["inputs"]), params)


def pack_container(magic: bytes, header: dict, blobs: list[tuple[str, np.ndarray, str]]) -> bytes:
    """Assemble magic|version|header|payload|crc. blobs: (name, array, dtype key)."""
    manifest = []
    payload = bytearray()
    for name, arr, dt in blobs:
        manifest.append({"name": name, "shape": list(arr.shape), "dtype": dt})
        payload += np.ascontiguousarray(arr).astype(_DTYPES[dt]).tobytes()
    header = dict(header)
    header["arrays"] = manifest
    hbytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    out = bytearray()
    out += magic
    out += struct.pack("<II", VERSION, len(hbytes))
    out += hbytes
    out += payload
    out += struct.pack("<I", zlib.crc32(bytes(payload)))
    return bytes(out)


def unpack_container(data: bytes, magic: bytes) -> tuple[dict, dict]:
    """Parse a container; returns (header, arrays by name)."""
    if len(data) < 12 or data[:4] != magic:
        raise ModelFormatError(f"bad magic: expected {magic!r}")
    version, hlen = struct.unpack_from("<II", data, 4)
    if version != VERSION:
        raise ModelFormatError(f"unsupported version {version}")
    if len(data) < 12 + hlen + 4:
        raise ModelFormatError("truncated file: header extends past end")
    try:
        header = json.loads(data[12 : 12 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelFormatError(f"corrupt header: {e}") from e
    payload = data[12 + hlen : -4]
    (crc,) = struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != crc:
        raise ModelFormatError("checksum mismatch")
    arrays = {}
    off = 0
    for m in header["arrays"]:
        dt = np.dtype(_DTYPES[m["dtype"]])
        count = int(np.prod(m["shape"])) if m["shape"] else 1
        nbytes = count * dt.itemsize
        if off + nbytes > len(payload):
            raise ModelFormatError("truncated file: payload shorter than manifest")
        arrays[m["name"]] = (
            np.frombuffer(payload, dtype=dt, count=count, offset=off)
            .reshape(m["shape"])
            .copy()
        )
        off += nbytes
    if off != len(payload):
        raise ModelFormatError("payload longer than manifest")
    return header, arrays


def graph_header(g: ModelGraph) -> dict:
    return {
        "format": "TYM1",
        "num_classes": g.num_classes,
        "input_size": g.input_size,
        "class_names": list(g.class_names),
        "anchors": g.anchors.anchors.tolist(),
        "strides": list(g.anchors.strides),
        "nodes": [node_desc(n) for n in g.nodes],
    }


def save_model(g: ModelGraph, path: str | Path) -> None:
    blobs = [(name, arr, "f32") for name, arr in g.param_arrays()]
    Path(path).write_bytes(pack_container(MAGIC, graph_header(g), blobs))


def load_model(path: str | Path) -> ModelGraph:
    header, arrays = unpack_container(Path(path).read_bytes(), MAGIC)
    nodes = [node_from(d, arrays) for d in header["nodes"]]
    return ModelGraph(
        nodes=nodes,
        num_classes=header["num_classes"],
        anchors=AnchorSet(
            np.array(header["anchors"], dtype=np.float32),
            tuple(header["strides"]),
        ),
        input_size=header["input_size"],
        class_names=tuple(header["class_names"]),
    )
