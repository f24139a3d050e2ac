"""Optimized float kernels for the nano network (im2col conv, pooling, fusion)."""

from __future__ import annotations

import numpy as np

from .tensor import BatchNorm, ConvSpec, Tensor, check_kernel_input


def sigmoid(x: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def silu(x: np.ndarray) -> np.ndarray:
    return x * sigmoid(x)


def activation(t: Tensor, kind: str) -> Tensor:
    """Elementwise activation, dims unchanged. kind is 'silu' or 'sigmoid'."""
    check_kernel_input(t)
    if t.dtype != "f32":
        raise ValueError("activation expects an f32 tensor")
    if kind == "silu":
        return Tensor(silu(t.data))
    if kind == "sigmoid":
        return Tensor(sigmoid(t.data))
    raise ValueError(f"unknown activation kind {kind!r}")


def im2col(arr: np.ndarray, kh: int, kw: int, stride: int, oh: int, ow: int) -> np.ndarray:
    """Gather conv patches of an already-padded (n,c,h,w) array into
    (n, c*kh*kw, oh*ow) columns."""
    n, c, _, _ = arr.shape
    sn, sc, sh, sw = arr.strides
    view = np.lib.stride_tricks.as_strided(
        arr,
        shape=(n, c, kh, kw, oh, ow),
        strides=(sn, sc, sh, sw, stride * sh, stride * sw),
        writeable=False,
    )
    return view.reshape(n, c * kh * kw, oh * ow)


def conv2d_raw(arr: np.ndarray, spec: ConvSpec) -> np.ndarray:
    """Cross-correlation plus bias on an (n,c,h,w) float32 array."""
    n, c, h, w = arr.shape
    if c != spec.in_ch:
        raise ValueError(f"input has {c} channels, spec expects {spec.in_ch}")
    kh, kw = spec.kernel
    oh, ow = spec.out_hw(h, w)
    if oh <= 0 or ow <= 0:
        raise ValueError(f"zero-sized output for input {h}x{w} with {spec.kernel} stride {spec.stride}")
    p = spec.padding
    if p:
        arr = np.pad(arr, ((0, 0), (0, 0), (p, p), (p, p)))
    if spec.groups == 1:
        cols = im2col(arr, kh, kw, spec.stride, oh, ow)
        wmat = spec.weights.reshape(spec.out_ch, -1)
        out = np.matmul(wmat, cols)
    else:
        cg = spec.in_ch // spec.groups
        og = spec.out_ch // spec.groups
        parts = []
        for g in range(spec.groups):
            cols = im2col(arr[:, g * cg : (g + 1) * cg], kh, kw, spec.stride, oh, ow)
            wmat = spec.weights[g * og : (g + 1) * og].reshape(og, -1)
            parts.append(np.matmul(wmat, cols))
        out = np.concatenate(parts, axis=1)
    out += spec.bias[None, :, None]
    return out.reshape(n, spec.out_ch, oh, ow).astype(np.float32, copy=False)


def conv2d(t: Tensor, spec: ConvSpec) -> Tensor:
    """2-D convolution (deep-learning convention: no kernel flip)."""
    check_kernel_input(t)
    if t.dtype != "f32":
        raise ValueError("conv2d expects an f32 tensor")
    return Tensor(conv2d_raw(t.data, spec))


def maxpool2d_raw(arr: np.ndarray, k: int, stride: int, pad: int, pad_value=-np.inf) -> np.ndarray:
    n, c, h, w = arr.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    if oh <= 0 or ow <= 0:
        raise ValueError("zero-sized max-pool output")
    if pad:
        # default -inf so padding never becomes a maximum
        arr = np.pad(arr, ((0, 0), (0, 0), (pad, pad), (pad, pad)), constant_values=pad_value)
    sn, sc, sh, sw = arr.strides
    view = np.lib.stride_tricks.as_strided(
        arr,
        shape=(n, c, oh, ow, k, k),
        strides=(sn, sc, stride * sh, stride * sw, sh, sw),
        writeable=False,
    )
    return view.max(axis=(4, 5)).astype(arr.dtype, copy=False)


def maxpool2d(t: Tensor, k: int, stride: int, pad: int) -> Tensor:
    """k x k max pooling; padded cells behave as -inf."""
    check_kernel_input(t)
    if k < 1:
        raise ValueError("pool kernel must be >= 1")
    return Tensor(maxpool2d_raw(t.data, k, stride, pad))


def upsample_nearest2x_raw(arr: np.ndarray) -> np.ndarray:
    return np.repeat(np.repeat(arr, 2, axis=2), 2, axis=3)


def upsample_nearest2x(t: Tensor) -> Tensor:
    """Replicate each pixel into a 2x2 block: (n,c,h,w) -> (n,c,2h,2w)."""
    check_kernel_input(t)
    if t.dtype != "f32":
        raise ValueError("upsample expects an f32 tensor")
    return Tensor(upsample_nearest2x_raw(t.data))


def concat_channels(a: Tensor, b: Tensor) -> Tensor:
    """Channel concatenation; `a` first. n/h/w must agree."""
    check_kernel_input(a)
    check_kernel_input(b)
    if (a.n, a.h, a.w) != (b.n, b.h, b.w):
        raise ValueError(f"spatial mismatch: {a.dims} vs {b.dims}")
    return Tensor(np.concatenate([a.data, b.data], axis=1))


def fold_batchnorm(
    spec: ConvSpec,
    gamma: np.ndarray,
    beta: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    eps: float,
) -> ConvSpec:
    """Fold inference-time batch norm into the preceding convolution.

    The returned spec satisfies conv(x, folded) == BN(conv(x, spec)).
    """
    gamma, beta, mean, var = (
        np.asarray(a, dtype=np.float32) for a in (gamma, beta, mean, var)
    )
    if not (gamma.shape == beta.shape == mean.shape == var.shape == (spec.out_ch,)):
        raise ValueError("batch-norm arrays must have length out_ch")
    if np.any(var < 0):
        raise ValueError("variance must be nonnegative")
    factor = gamma / np.sqrt(var + np.float32(eps))
    w = spec.weights * factor[:, None, None, None]
    b = (spec.bias - mean) * factor + beta
    return ConvSpec(
        in_ch=spec.in_ch,
        out_ch=spec.out_ch,
        kernel=spec.kernel,
        stride=spec.stride,
        padding=spec.padding,
        groups=spec.groups,
        weights=w.astype(np.float32),
        bias=b.astype(np.float32),
    )


def fold_block(spec: ConvSpec, bn: BatchNorm | None) -> ConvSpec:
    return spec if bn is None else fold_batchnorm(spec, bn.gamma, bn.beta, bn.mean, bn.var, bn.eps)
