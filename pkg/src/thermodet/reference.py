"""Naive loop implementations of the float kernels.

These are the independent oracles the optimized kernels are checked
against; they trade all speed for obviousness and share no code with
kernels.py.
"""

from __future__ import annotations

import math

import numpy as np

from .tensor import ConvSpec


def conv2d_naive(arr: np.ndarray, spec: ConvSpec) -> np.ndarray:
    n, c, h, w = arr.shape
    assert c == spec.in_ch
    kh, kw = spec.kernel
    s, p = spec.stride, spec.padding
    oh = (h + 2 * p - kh) // s + 1
    ow = (w + 2 * p - kw) // s + 1
    cg = spec.in_ch // spec.groups
    og = spec.out_ch // spec.groups
    out = np.zeros((n, spec.out_ch, oh, ow), dtype=np.float64)
    for b in range(n):
        for oc in range(spec.out_ch):
            g = oc // og
            for i in range(oh):
                for j in range(ow):
                    acc = float(spec.bias[oc])
                    for ic in range(cg):
                        for ki in range(kh):
                            for kj in range(kw):
                                y = i * s + ki - p
                                x = j * s + kj - p
                                if 0 <= y < h and 0 <= x < w:
                                    acc += float(arr[b, g * cg + ic, y, x]) * float(
                                        spec.weights[oc, ic, ki, kj]
                                    )
                    out[b, oc, i, j] = acc
    return out.astype(np.float32)


def maxpool2d_naive(arr: np.ndarray, k: int, stride: int, pad: int) -> np.ndarray:
    n, c, h, w = arr.shape
    oh = (h + 2 * pad - k) // stride + 1
    ow = (w + 2 * pad - k) // stride + 1
    out = np.empty((n, c, oh, ow), dtype=arr.dtype)
    for b in range(n):
        for ch in range(c):
            for i in range(oh):
                for j in range(ow):
                    best = -math.inf
                    for ki in range(k):
                        for kj in range(k):
                            y = i * stride + ki - pad
                            x = j * stride + kj - pad
                            if 0 <= y < h and 0 <= x < w:
                                v = arr[b, ch, y, x]
                                if v > best:
                                    best = v
                    out[b, ch, i, j] = best
    return out


def silu_naive(arr: np.ndarray) -> np.ndarray:
    out = np.empty(arr.shape, dtype=np.float32)
    flat_in = arr.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.size):
        x = float(flat_in[i])
        flat_out[i] = x / (1.0 + math.exp(-x))
    return out


def sigmoid_naive(arr: np.ndarray) -> np.ndarray:
    out = np.empty(arr.shape, dtype=np.float32)
    flat_in = arr.ravel()
    flat_out = out.ravel()
    for i in range(flat_in.size):
        flat_out[i] = 1.0 / (1.0 + math.exp(-float(flat_in[i])))
    return out


def upsample_nearest2x_naive(arr: np.ndarray) -> np.ndarray:
    n, c, h, w = arr.shape
    out = np.empty((n, c, 2 * h, 2 * w), dtype=arr.dtype)
    for b in range(n):
        for ch in range(c):
            for i in range(2 * h):
                for j in range(2 * w):
                    out[b, ch, i, j] = arr[b, ch, i // 2, j // 2]
    return out


def concat_channels_naive(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n, ca, h, w = a.shape
    cb = b.shape[1]
    out = np.empty((n, ca + cb, h, w), dtype=a.dtype)
    for bi in range(n):
        for ch in range(ca):
            out[bi, ch] = a[bi, ch]
        for ch in range(cb):
            out[bi, ca + ch] = b[bi, ch]
    return out


def batchnorm_apply(
    arr: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    mean: np.ndarray,
    var: np.ndarray,
    eps: float,
) -> np.ndarray:
    """Plain inference batch norm; composition oracle for fold_batchnorm."""
    g = gamma[None, :, None, None]
    b = beta[None, :, None, None]
    m = mean[None, :, None, None]
    v = var[None, :, None, None]
    return (g * (arr - m) / np.sqrt(v + np.float32(eps)) + b).astype(np.float32)
