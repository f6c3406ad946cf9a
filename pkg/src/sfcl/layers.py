"""Parameterized building blocks: convolutions, linear maps, batch norm.

Each layer owns its tensors and reports them through ``trainables`` (updated
by the optimizer) and ``buffers`` (non-trainable state such as batch-norm
running statistics; serialized but never optimized). Construction order is
deterministic given the RNG, which keeps whole-model initialization
reproducible from a single seed.
"""

from __future__ import annotations

from typing import List, Optional, Tuple

import numpy as np

from . import tensor as T
from .tensor import Tensor


def he_normal(rng: np.random.Generator, shape: tuple, fan_in: int, dtype) -> np.ndarray:
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Layer:
    """Minimal parameter-container protocol."""

    def trainables(self, prefix: str) -> List[Tuple[str, Tensor]]:
        return []

    def buffers(self, prefix: str) -> List[Tuple[str, np.ndarray]]:
        return []


class Conv2dLayer(Layer):
    """Bias-free 2D convolution; follow with batch norm for the shift."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, pad: int,
                 rng: np.random.Generator, dtype=np.float32):
        fan_in = c_in * kernel * kernel
        self.w = Tensor(he_normal(rng, (c_out, c_in, kernel, kernel), fan_in, dtype),
                        requires_grad=True)
        self.stride = stride
        self.pad = pad

    def forward(self, x: Tensor) -> Tensor:
        return T.conv2d(x, self.w, stride=self.stride, pad=self.pad)

    def trainables(self, prefix):
        return [(prefix + ".w", self.w)]


class DepthwiseConv2dLayer(Layer):
    def __init__(self, channels: int, kernel: int, stride: int, pad: int,
                 rng: np.random.Generator, dtype=np.float32):
        fan_in = kernel * kernel
        self.w = Tensor(he_normal(rng, (channels, kernel, kernel), fan_in, dtype),
                        requires_grad=True)
        self.stride = stride
        self.pad = pad

    def forward(self, x: Tensor) -> Tensor:
        return T.depthwise_conv2d(x, self.w, stride=self.stride, pad=self.pad)

    def trainables(self, prefix):
        return [(prefix + ".w", self.w)]


class Conv3dDepthLayer(Layer):
    """Depth-only 3D convolution (kernel spans the band axis, spatial 1x1)."""

    def __init__(self, c_in: int, c_out: int, kernel_d: int, stride_d: int,
                 rng: np.random.Generator, dtype=np.float32):
        fan_in = c_in * kernel_d
        self.w = Tensor(he_normal(rng, (c_out, c_in, kernel_d), fan_in, dtype),
                        requires_grad=True)
        self.stride_d = stride_d

    def forward(self, x: Tensor) -> Tensor:
        return T.conv3d(x, self.w, stride_d=self.stride_d)

    def trainables(self, prefix):
        return [(prefix + ".w", self.w)]


class LinearLayer(Layer):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator,
                 dtype=np.float32, bias: bool = True, zero_init: bool = False):
        if zero_init:
            w = np.zeros((d_in, d_out), dtype=dtype)
        else:
            w = he_normal(rng, (d_in, d_out), d_in, dtype)
        self.w = Tensor(w, requires_grad=True)
        self.b = Tensor(np.zeros(d_out, dtype=dtype), requires_grad=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.w, self.b)

    def trainables(self, prefix):
        out = [(prefix + ".w", self.w)]
        if self.b is not None:
            out.append((prefix + ".b", self.b))
        return out


class BatchNormLayer(Layer):
    """Per-channel batch norm with running statistics (momentum 0.1, eps 1e-5)."""

    def __init__(self, channels: int, dtype=np.float32):
        self.gamma = Tensor(np.ones(channels, dtype=dtype), requires_grad=True)
        self.beta = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True)
        self.running_mean = np.zeros(channels, dtype=dtype)
        self.running_var = np.ones(channels, dtype=dtype)

    def forward(self, x: Tensor, mode: str, update_running: Optional[bool] = None) -> Tensor:
        return T.batchnorm(x, self.gamma, self.beta, self.running_mean,
                           self.running_var, mode=mode, update_running=update_running)

    def trainables(self, prefix):
        return [(prefix + ".gamma", self.gamma), (prefix + ".beta", self.beta)]

    def buffers(self, prefix):
        return [(prefix + ".running_mean", self.running_mean),
                (prefix + ".running_var", self.running_var)]


class ConvBnRelu(Layer):
    """conv -> BN -> relu, the stock block for the spatial stages."""

    def __init__(self, c_in: int, c_out: int, kernel: int, stride: int, pad: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.conv = Conv2dLayer(c_in, c_out, kernel, stride, pad, rng, dtype)
        self.bn = BatchNormLayer(c_out, dtype)

    def forward(self, x: Tensor, mode: str, update_running=None) -> Tensor:
        return T.relu(self.bn.forward(self.conv.forward(x), mode, update_running))

    def trainables(self, prefix):
        return self.conv.trainables(prefix + ".conv") + self.bn.trainables(prefix + ".bn")

    def buffers(self, prefix):
        return self.bn.buffers(prefix + ".bn")


class SeparableBlock(Layer):
    """Depthwise 3x3 then pointwise 1x1, each followed by BN and relu."""

    def __init__(self, c_in: int, c_out: int, stride: int,
                 rng: np.random.Generator, dtype=np.float32):
        self.depthwise = DepthwiseConv2dLayer(c_in, 3, stride, 1, rng, dtype)
        self.bn1 = BatchNormLayer(c_in, dtype)
        self.pointwise = Conv2dLayer(c_in, c_out, 1, 1, 0, rng, dtype)
        self.bn2 = BatchNormLayer(c_out, dtype)

    def forward(self, x: Tensor, mode: str, update_running=None) -> Tensor:
        h = T.relu(self.bn1.forward(self.depthwise.forward(x), mode, update_running))
        return T.relu(self.bn2.forward(self.pointwise.forward(h), mode, update_running))

    def trainables(self, prefix):
        return (self.depthwise.trainables(prefix + ".dw")
                + self.bn1.trainables(prefix + ".bn1")
                + self.pointwise.trainables(prefix + ".pw")
                + self.bn2.trainables(prefix + ".bn2"))

    def buffers(self, prefix):
        return self.bn1.buffers(prefix + ".bn1") + self.bn2.buffers(prefix + ".bn2")


def global_avg_pool(x: Tensor) -> Tensor:
    """[N,C,H,W] -> [N,C] spatial mean."""
    return T.reduce_mean(x, axes=(2, 3))
