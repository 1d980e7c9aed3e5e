"""
Layer kinds and their hand-derived forward/backward passes.

Every layer works on a leading batch axis. Image tensors are (B, C, H, W),
feature tensors are (B, F). Backward passes accumulate into Param.grad and
return the gradient with respect to the layer input.
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from distance_forward.core.params import DEFAULT_DTYPE, Param
from distance_forward.exceptions import ConfigurationError, DimensionError

logger = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.9

Shape = Tuple[int, ...]


class LayerKind(str, Enum):
    """Supported layer kinds"""
    DENSE = "dense"
    CONV2D = "conv2d"
    BATCHNORM = "batchnorm"
    RELU = "relu"
    AVGPOOL = "avgpool"
    FLATTEN = "flatten"


PARAMETERIZED_KINDS = (LayerKind.DENSE, LayerKind.CONV2D)


class LayerSpec(BaseModel):
    """
    Declarative description of one layer.

    Input-side dimensions (in_features, in_channels, num_features) may be left
    out; they are inferred from the previous layer and checked when given.
    """
    model_config = ConfigDict(extra="forbid")

    kind: LayerKind
    in_features: Optional[int] = Field(None, ge=1)
    out_features: Optional[int] = Field(None, ge=1)
    in_channels: Optional[int] = Field(None, ge=1)
    out_channels: Optional[int] = Field(None, ge=1)
    kernel_size: Optional[int] = Field(None, ge=1)
    stride: Optional[int] = Field(None, ge=1)
    padding: int = Field(0, ge=0)
    num_features: Optional[int] = Field(None, ge=1)


# ---------------------------------------------------------------------------
# Functional forward passes
# ---------------------------------------------------------------------------

def _param_value(p):
    return p.value if isinstance(p, Param) else np.asarray(p)


def forward_dense(x: np.ndarray, W, b) -> np.ndarray:
    """out[i, j] = sum_k W[j, k] * x[i, k] + b[j]"""
    W = _param_value(W)
    b = _param_value(b)
    if x.ndim != 2 or W.ndim != 2 or x.shape[1] != W.shape[1] or b.shape != (W.shape[0],):
        raise DimensionError(
            f"dense: input {x.shape} incompatible with weight {W.shape} / bias {b.shape}"
        )
    return x @ W.T + b


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def _windows(xp: np.ndarray, k: int, stride: int) -> np.ndarray:
    """Strided (B, C, Ho, Wo, k, k) view of the padded input"""
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def conv_output_size(size: int, kernel: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - kernel) // stride + 1


def forward_conv2d(x: np.ndarray, kernel, bias, stride: int = 1, padding: int = 0) -> np.ndarray:
    """
    Cross-correlation of x (B, C, H, W) with kernel (O, C, k, k).

    Output spatial size is floor((H + 2p - k) / s) + 1.
    """
    kernel = _param_value(kernel)
    bias = _param_value(bias)
    if x.ndim != 4 or kernel.ndim != 4 or x.shape[1] != kernel.shape[1]:
        raise DimensionError(f"conv2d: input {x.shape} incompatible with kernel {kernel.shape}")
    k = kernel.shape[2]
    if k > x.shape[2] + 2 * padding or kernel.shape[3] > x.shape[3] + 2 * padding:
        raise DimensionError(
            f"conv2d: kernel {kernel.shape} larger than padded input {x.shape} (padding={padding})"
        )
    win = _windows(_pad(x, padding), k, stride)
    out = np.tensordot(win, kernel, axes=([1, 4, 5], [1, 2, 3]))  # (B, Ho, Wo, O)
    out += bias
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


@dataclass
class RunningStats:
    """Batch-norm running mean / variance, per feature or channel"""
    mean: np.ndarray
    var: np.ndarray

    def astype(self, dtype) -> "RunningStats":
        return RunningStats(self.mean.astype(dtype), self.var.astype(dtype))


def _bn_axes(x: np.ndarray) -> Tuple[Tuple[int, ...], Shape]:
    if x.ndim == 2:
        return (0,), (1, x.shape[1])
    if x.ndim == 4:
        return (0, 2, 3), (1, x.shape[1], 1, 1)
    raise DimensionError(f"batchnorm: expected a 2-D or 4-D input, got {x.shape}")


def _batchnorm(x, gamma, beta, stats: RunningStats, train: bool,
               eps: float = BN_EPS, momentum: float = BN_MOMENTUM):
    axes, bshape = _bn_axes(x)
    if gamma.shape[0] != x.shape[1]:
        raise DimensionError(f"batchnorm: input {x.shape} incompatible with gamma {gamma.shape}")
    if train:
        if x.shape[0] < 2:
            raise ConfigurationError("batchnorm in train mode needs a batch of at least 2")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        stats.mean *= momentum
        stats.mean += (1.0 - momentum) * mean
        stats.var *= momentum
        stats.var += (1.0 - momentum) * var
    else:
        mean, var = stats.mean, stats.var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.reshape(bshape) * xhat + beta.reshape(bshape)
    return out.astype(x.dtype, copy=False), xhat, inv_std


def forward_batchnorm(x: np.ndarray, gamma, beta, running_stats: RunningStats,
                      mode: str = "train") -> np.ndarray:
    """
    Batch normalization; train mode uses (and records) batch statistics,
    eval mode uses the running statistics.
    """
    if mode not in ("train", "eval"):
        raise ConfigurationError(f"batchnorm mode must be 'train' or 'eval', got {mode!r}")
    out, _, _ = _batchnorm(x, _param_value(gamma), _param_value(beta), running_stats, mode == "train")
    return out


# ---------------------------------------------------------------------------
# Layer objects
# ---------------------------------------------------------------------------

class Layer(ABC):
    """
    One layer of a Model.

    Subclasses implement forward (returning the output and the cache needed by
    backward) and backward (accumulating parameter gradients).
    """

    kind: LayerKind

    def __init__(self, spec: LayerSpec, input_shape: Shape):
        self.spec = spec
        self.input_shape = tuple(input_shape)

    @property
    @abstractmethod
    def output_shape(self) -> Shape:
        """Per-sample output shape"""
        pass

    @property
    def params(self) -> List[Param]:
        return []

    @property
    def is_parameterized(self) -> bool:
        return self.kind in PARAMETERIZED_KINDS

    @abstractmethod
    def forward(self, x: np.ndarray, train: bool) -> Tuple[np.ndarray, Dict]:
        pass

    @abstractmethod
    def backward(self, grad_out: np.ndarray, cache: Dict, need_input_grad: bool = True) -> Optional[np.ndarray]:
        pass

    def cache_elements(self, batch: int) -> int:
        """Number of elements stored by forward for the backward pass"""
        return 0

    def cache_bytes(self, batch: int, itemsize: int) -> int:
        return self.cache_elements(batch) * itemsize

    def input_bytes(self, batch: int, itemsize: int) -> int:
        return batch * int(np.prod(self.input_shape)) * itemsize

    def backward_work_bytes(self, batch: int, itemsize: int, need_input_grad: bool) -> int:
        """Bytes of fresh arrays alive at the peak of backward, the returned gradient included"""
        return 0

    def _cast(self, dtype) -> None:
        pass

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.input_shape} -> {self.output_shape})"


def _uniform_fan_in(rng: np.random.Generator, shape: Shape, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Dense(Layer):
    kind = LayerKind.DENSE

    def __init__(self, spec: LayerSpec, input_shape: Shape, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__(spec, input_shape)
        if len(input_shape) != 1:
            raise DimensionError(f"dense expects a flat input, got per-sample shape {input_shape}")
        if spec.out_features is None:
            raise ConfigurationError("dense layer requires out_features")
        m = input_shape[0]
        if spec.in_features is not None and spec.in_features != m:
            raise DimensionError(f"dense declares in_features={spec.in_features} but receives {input_shape}")
        n = spec.out_features
        self.weight = Param("weight", _uniform_fan_in(rng, (n, m), m, dtype))
        self.bias = Param("bias", np.zeros(n, dtype=dtype))

    @property
    def output_shape(self) -> Shape:
        return (self.spec.out_features,)

    @property
    def params(self) -> List[Param]:
        return [self.weight, self.bias]

    def forward(self, x, train):
        return forward_dense(x, self.weight, self.bias), {"x": x}

    def backward(self, grad_out, cache, need_input_grad=True):
        x = cache["x"]
        self.weight.grad += grad_out.T @ x
        self.bias.grad += grad_out.sum(axis=0)
        return grad_out @ self.weight.value if need_input_grad else None

    def cache_elements(self, batch):
        return batch * self.input_shape[0]

    def backward_work_bytes(self, batch, itemsize, need_input_grad):
        weight_grad = self.weight.size * itemsize
        return max(weight_grad, self.input_bytes(batch, itemsize) if need_input_grad else 0)

    def _cast(self, dtype):
        self.weight = self.weight.astype(dtype)
        self.bias = self.bias.astype(dtype)


class Conv2d(Layer):
    kind = LayerKind.CONV2D

    def __init__(self, spec: LayerSpec, input_shape: Shape, rng: np.random.Generator, dtype=DEFAULT_DTYPE):
        super().__init__(spec, input_shape)
        if len(input_shape) != 3:
            raise DimensionError(f"conv2d expects a (C, H, W) input, got per-sample shape {input_shape}")
        if spec.out_channels is None or spec.kernel_size is None:
            raise ConfigurationError("conv2d layer requires out_channels and kernel_size")
        c, h, w = input_shape
        if spec.in_channels is not None and spec.in_channels != c:
            raise DimensionError(f"conv2d declares in_channels={spec.in_channels} but receives {input_shape}")
        self.k = spec.kernel_size
        self.stride = spec.stride or 1
        self.padding = spec.padding
        if self.k > h + 2 * self.padding or self.k > w + 2 * self.padding:
            raise DimensionError(f"conv2d kernel {self.k} larger than padded input {input_shape}")
        o = spec.out_channels
        fan_in = c * self.k * self.k
        self.weight = Param("weight", _uniform_fan_in(rng, (o, c, self.k, self.k), fan_in, dtype))
        self.bias = Param("bias", np.zeros(o, dtype=dtype))

    @property
    def output_shape(self) -> Shape:
        _, h, w = self.input_shape
        return (
            self.spec.out_channels,
            conv_output_size(h, self.k, self.stride, self.padding),
            conv_output_size(w, self.k, self.stride, self.padding),
        )

    @property
    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, train):
        out = forward_conv2d(x, self.weight, self.bias, self.stride, self.padding)
        return out, {"xp": _pad(x, self.padding)}

    def backward(self, grad_out, cache, need_input_grad=True):
        xp = cache["xp"]
        k, s = self.k, self.stride
        win = _windows(xp, k, s)
        self.weight.grad += np.tensordot(grad_out, win, axes=([0, 2, 3], [0, 2, 3]))
        self.bias.grad += grad_out.sum(axis=(0, 2, 3))
        if not need_input_grad:
            return None

        ho, wo = grad_out.shape[2], grad_out.shape[3]
        dxp = np.zeros_like(xp)
        W = self.weight.value
        for i in range(k):
            for j in range(k):
                contrib = np.tensordot(grad_out, W[:, :, i, j], axes=([1], [0]))  # (B, Ho, Wo, C)
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += contrib.transpose(0, 3, 1, 2)
        p = self.padding
        if p:
            dxp = dxp[:, :, p:-p, p:-p]
        return np.ascontiguousarray(dxp)

    def cache_elements(self, batch):
        c, h, w = self.input_shape
        p = self.padding
        return batch * c * (h + 2 * p) * (w + 2 * p)

    def backward_work_bytes(self, batch, itemsize, need_input_grad):
        c = self.input_shape[0]
        _, ho, wo = self.output_shape
        columns = batch * ho * wo * c * self.k * self.k * itemsize
        if not need_input_grad:
            return columns
        contrib = batch * ho * wo * c * itemsize
        cropped = self.input_bytes(batch, itemsize) if self.padding else 0
        return max(columns, self.cache_bytes(batch, itemsize) + contrib + cropped)

    def _cast(self, dtype):
        self.weight = self.weight.astype(dtype)
        self.bias = self.bias.astype(dtype)


class BatchNorm(Layer):
    kind = LayerKind.BATCHNORM

    def __init__(self, spec: LayerSpec, input_shape: Shape, dtype=DEFAULT_DTYPE):
        super().__init__(spec, input_shape)
        if len(input_shape) not in (1, 3):
            raise DimensionError(f"batchnorm expects (F,) or (C, H, W) inputs, got {input_shape}")
        f = input_shape[0]
        if spec.num_features is not None and spec.num_features != f:
            raise DimensionError(f"batchnorm declares num_features={spec.num_features} but receives {input_shape}")
        self.gamma = Param("gamma", np.ones(f, dtype=dtype))
        self.beta = Param("beta", np.zeros(f, dtype=dtype))
        self.running = RunningStats(np.zeros(f, dtype=dtype), np.ones(f, dtype=dtype))

    @property
    def output_shape(self):
        return self.input_shape

    @property
    def params(self):
        return [self.gamma, self.beta]

    def forward(self, x, train):
        out, xhat, inv_std = _batchnorm(x, self.gamma.value, self.beta.value, self.running, train)
        return out, {"xhat": xhat, "inv_std": inv_std, "train": train}

    def backward(self, grad_out, cache, need_input_grad=True):
        xhat = cache["xhat"]
        axes, bshape = _bn_axes(grad_out)
        self.gamma.grad += (grad_out * xhat).sum(axis=axes)
        self.beta.grad += grad_out.sum(axis=axes)
        if not need_input_grad:
            return None
        dxhat = grad_out * self.gamma.value.reshape(bshape)
        inv_std = cache["inv_std"].reshape(bshape)
        if not cache["train"]:
            return dxhat * inv_std
        n = grad_out.size // grad_out.shape[1]
        sum_d = dxhat.sum(axis=axes).reshape(bshape)
        sum_dx = (dxhat * xhat).sum(axis=axes).reshape(bshape)
        return (inv_std / n) * (n * dxhat - sum_d - xhat * sum_dx)

    def cache_elements(self, batch):
        return batch * int(np.prod(self.input_shape)) + self.input_shape[0]

    def backward_work_bytes(self, batch, itemsize, need_input_grad):
        # dxhat plus three live temporaries of the input-gradient expression
        return self.input_bytes(batch, itemsize) * (4 if need_input_grad else 1)

    def _cast(self, dtype):
        self.gamma = self.gamma.astype(dtype)
        self.beta = self.beta.astype(dtype)
        self.running = self.running.astype(dtype)


class ReLU(Layer):
    kind = LayerKind.RELU

    @property
    def output_shape(self):
        return self.input_shape

    def forward(self, x, train):
        mask = x > 0
        return x * mask, {"mask": mask}

    def backward(self, grad_out, cache, need_input_grad=True):
        return grad_out * cache["mask"] if need_input_grad else None

    def cache_elements(self, batch):
        return batch * int(np.prod(self.input_shape))

    def cache_bytes(self, batch, itemsize):
        return self.cache_elements(batch)  # boolean mask

    def backward_work_bytes(self, batch, itemsize, need_input_grad):
        return self.input_bytes(batch, itemsize) if need_input_grad else 0


class AvgPool(Layer):
    kind = LayerKind.AVGPOOL

    def __init__(self, spec: LayerSpec, input_shape: Shape):
        super().__init__(spec, input_shape)
        if len(input_shape) != 3:
            raise DimensionError(f"avgpool expects a (C, H, W) input, got {input_shape}")
        if spec.kernel_size is None:
            raise ConfigurationError("avgpool layer requires kernel_size")
        self.k = spec.kernel_size
        self.stride = spec.stride or spec.kernel_size
        if self.k > input_shape[1] or self.k > input_shape[2]:
            raise DimensionError(f"avgpool kernel {self.k} larger than input {input_shape}")

    @property
    def output_shape(self):
        c, h, w = self.input_shape
        return (c, conv_output_size(h, self.k, self.stride, 0), conv_output_size(w, self.k, self.stride, 0))

    def forward(self, x, train):
        out = _windows(x, self.k, self.stride).mean(axis=(-2, -1))
        return np.ascontiguousarray(out), {}

    def backward(self, grad_out, cache, need_input_grad=True):
        if not need_input_grad:
            return None
        k, s = self.k, self.stride
        ho, wo = grad_out.shape[2], grad_out.shape[3]
        dx = np.zeros((grad_out.shape[0],) + self.input_shape, dtype=grad_out.dtype)
        share = grad_out / (k * k)
        for i in range(k):
            for j in range(k):
                dx[:, :, i:i + s * ho:s, j:j + s * wo:s] += share
        return dx

    def backward_work_bytes(self, batch, itemsize, need_input_grad):
        if not need_input_grad:
            return 0
        return self.input_bytes(batch, itemsize) + batch * int(np.prod(self.output_shape)) * itemsize


class Flatten(Layer):
    kind = LayerKind.FLATTEN

    @property
    def output_shape(self):
        return (int(np.prod(self.input_shape)),)

    def forward(self, x, train):
        return x.reshape(x.shape[0], -1), {}

    def backward(self, grad_out, cache, need_input_grad=True):
        if not need_input_grad:
            return None
        return grad_out.reshape((grad_out.shape[0],) + self.input_shape)


def build_layer(spec: LayerSpec, input_shape: Shape, rng: np.random.Generator, dtype=DEFAULT_DTYPE) -> Layer:
    """Instantiate a layer from its spec, validating it against the incoming shape"""
    if spec.kind == LayerKind.DENSE:
        return Dense(spec, input_shape, rng, dtype)
    if spec.kind == LayerKind.CONV2D:
        return Conv2d(spec, input_shape, rng, dtype)
    if spec.kind == LayerKind.BATCHNORM:
        return BatchNorm(spec, input_shape, dtype)
    if spec.kind == LayerKind.RELU:
        return ReLU(spec, input_shape)
    if spec.kind == LayerKind.AVGPOOL:
        return AvgPool(spec, input_shape)
    if spec.kind == LayerKind.FLATTEN:
        return Flatten(spec, input_shape)
    raise ConfigurationError(f"Unknown layer kind: {spec.kind}")
