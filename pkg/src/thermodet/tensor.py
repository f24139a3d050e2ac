"""Dense 4-D tensors and the parameter records carried by network layers."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

F32 = np.float32
I8 = np.int8


@dataclass(frozen=True)
class QuantParams:
    """Affine int8 quantization parameters.

    Per-tensor: scalar scale / zero_point with axis None.
    Per-channel: 1-D arrays along `axis`; zero points are all zero
    (symmetric scheme).
    """

    scale: float | np.ndarray
    zero_point: int | np.ndarray
    axis: int | None = None

    def __post_init__(self):
        if self.axis is None:
            s = float(self.scale)
            z = int(self.zero_point)
            if not (s > 0.0 and np.isfinite(s)):
                raise ValueError(f"scale must be positive and finite, got {s}")
            if not -128 <= z <= 127:
                raise ValueError(f"zero_point out of int8 range: {z}")
            object.__setattr__(self, "scale", s)
            object.__setattr__(self, "zero_point", z)
        else:
            s = np.asarray(self.scale, dtype=np.float32)
            z = np.asarray(self.zero_point, dtype=np.int32)
            if s.ndim != 1 or z.shape != s.shape:
                raise ValueError("per-channel params must be matching 1-D arrays")
            if not (np.all(s > 0.0) and np.all(np.isfinite(s))):
                raise ValueError("per-channel scales must be positive and finite")
            if np.any(z != 0):
                raise ValueError("per-channel zero points must all be 0")
            object.__setattr__(self, "scale", s)
            object.__setattr__(self, "zero_point", z)

    @property
    def per_channel(self) -> bool:
        return self.axis is not None


class Tensor:
    """Dense (n, c, h, w) tensor in f32 or int8.

    Data is contiguous and treated as immutable once constructed; int8
    tensors always carry quantization parameters, f32 tensors never do.
    """

    __slots__ = ("data", "qparams")

    def __init__(self, data: np.ndarray, qparams: QuantParams | None = None):
        arr = np.ascontiguousarray(data)
        if arr.ndim != 4:
            raise ValueError(f"tensor must be 4-D (n,c,h,w), got shape {arr.shape}")
        if arr.dtype == np.float64:
            arr = arr.astype(np.float32)
        if arr.dtype not in (np.dtype(np.float32), np.dtype(np.int8)):
            raise ValueError(f"unsupported dtype {arr.dtype}, want float32 or int8")
        if (arr.dtype == np.int8) != (qparams is not None):
            raise ValueError("qparams must be present iff dtype is int8")
        self.data = arr
        self.qparams = qparams

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape  # type: ignore[return-value]

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def c(self) -> int:
        return self.data.shape[1]

    @property
    def h(self) -> int:
        return self.data.shape[2]

    @property
    def w(self) -> int:
        return self.data.shape[3]

    @property
    def dtype(self) -> str:
        return "i8" if self.data.dtype == np.int8 else "f32"

    def __repr__(self) -> str:
        return f"Tensor(dims={self.dims}, dtype={self.dtype})"


def check_kernel_input(t: Tensor) -> None:
    """Kernels require strictly positive dims."""
    if min(t.dims) <= 0:
        raise ValueError(f"kernel input must have all dims > 0, got {t.dims}")


@dataclass
class ConvSpec:
    """2-D convolution parameters: weights [out_ch, in_ch/groups, kh, kw] plus bias."""

    in_ch: int
    out_ch: int
    kernel: tuple[int, int]
    stride: int
    padding: int
    groups: int = 1
    weights: np.ndarray = field(default=None)  # type: ignore[assignment]
    bias: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        kh, kw = self.kernel
        if self.groups < 1 or self.in_ch % self.groups or self.out_ch % self.groups:
            raise ValueError("in_ch and out_ch must be divisible by groups")
        wshape = (self.out_ch, self.in_ch // self.groups, kh, kw)
        if self.weights is None:
            self.weights = np.zeros(wshape, dtype=np.float32)
        else:
            self.weights = np.ascontiguousarray(self.weights, dtype=np.float32)
            if self.weights.shape != wshape:
                raise ValueError(
                    f"weight buffer shape {self.weights.shape} does not match {wshape}"
                )
        if self.bias is None:
            self.bias = np.zeros(self.out_ch, dtype=np.float32)
        else:
            self.bias = np.ascontiguousarray(self.bias, dtype=np.float32)
            if self.bias.shape != (self.out_ch,):
                raise ValueError("bias length must equal out_ch")

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        kh, kw = self.kernel
        oh = (h + 2 * self.padding - kh) // self.stride + 1
        ow = (w + 2 * self.padding - kw) // self.stride + 1
        return oh, ow

    def param_count(self) -> int:
        return self.weights.size + self.bias.size


@dataclass
class BatchNorm:
    """Per-channel batch-norm statistics, stored unfolded."""

    gamma: np.ndarray
    beta: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    eps: float = 1e-3

    def __post_init__(self):
        arrs = []
        for a in (self.gamma, self.beta, self.mean, self.var):
            arrs.append(np.ascontiguousarray(a, dtype=np.float32))
        self.gamma, self.beta, self.mean, self.var = arrs
        n = self.gamma.shape
        if any(a.shape != n for a in (self.beta, self.mean, self.var)):
            raise ValueError("batch-norm arrays must share one per-channel length")
        if np.any(self.var < 0):
            raise ValueError("variance must be nonnegative")

    @classmethod
    def identity(cls, channels: int, eps: float = 1e-3) -> "BatchNorm":
        return cls(
            gamma=np.ones(channels, dtype=np.float32),
            beta=np.zeros(channels, dtype=np.float32),
            mean=np.zeros(channels, dtype=np.float32),
            var=np.ones(channels, dtype=np.float32),
            eps=eps,
        )

    def param_count(self) -> int:
        return self.gamma.size + self.beta.size + self.mean.size + self.var.size
