"""Local frequency branch: spectral band convolutions plus the frequency CNN.

The band-convolution stack (SBCM) slides depth-only 3D kernels along the 64
zigzag bands, shrinking them to a depth-3, 64-channel spectral feature while
never mixing spatial block positions. Flattening its first two axes gives a
192-channel map that the separable-convolution frequency network (CNN-F)
turns into a fixed-length feature vector.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .layers import (BatchNormLayer, Conv3dDepthLayer, Layer, SeparableBlock,
                     global_avg_pool)
from .tensor import Tensor

SBCM_INPUT_BANDS = 64


def _depth_chain(start: int, kernels: Sequence[int], strides: Sequence[int]) -> List[int]:
    chain = [start]
    d = start
    for k, s in zip(kernels, strides):
        if k > d:
            raise ConfigError(f"band kernel {k} exceeds remaining depth {d}")
        d = (d - k) // s + 1
        chain.append(d)
    return chain


@dataclass
class SbcmConfig:
    """Three depth-only 3D conv layers reducing 64 bands to exactly 3."""
    kernels: tuple = (7, 5, 3)
    strides: tuple = (3, 2, 2)
    widths: tuple = (3, 16, 32, 64)
    batchnorm: bool = True

    def __post_init__(self):
        if not (len(self.kernels) == len(self.strides) == len(self.widths) - 1):
            raise ConfigError("kernels, strides and widths-1 must have equal length")
        chain = _depth_chain(SBCM_INPUT_BANDS, self.kernels, self.strides)
        if chain[-1] != 3:
            raise ConfigError(
                f"band-depth chain {chain} must end at 3 (kernels {self.kernels}, strides {self.strides})")
        if self.widths[-1] != 64:
            raise ConfigError(f"final channel width must be 64, got {self.widths[-1]}")

    @property
    def depth_chain(self) -> List[int]:
        return _depth_chain(SBCM_INPUT_BANDS, self.kernels, self.strides)


@dataclass
class CnnfConfig:
    """Separable-conv stack on the 192-channel flattened spectral map.

    ``widths``/``strides`` describe the blocks; after global average pooling
    the output length equals the last width (2048 by default).
    """
    widths: tuple = (192, 256, 728, 2048)
    strides: tuple = (2, 2, 1)

    def __post_init__(self):
        if len(self.widths) - 1 != len(self.strides):
            raise ConfigError("widths-1 and strides must have equal length")
        if self.widths[0] != 192:
            raise ConfigError(f"input channel width must be 192, got {self.widths[0]}")

    @property
    def output_dim(self) -> int:
        return self.widths[-1]


class Sbcm(Layer):
    """Stacked band convolutions: [N,3,64,Hb,Wb] -> [N,64,3,Hb,Wb]."""

    def __init__(self, cfg: SbcmConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.convs = []
        self.bns = []
        for i, (k, s) in enumerate(zip(cfg.kernels, cfg.strides)):
            self.convs.append(Conv3dDepthLayer(cfg.widths[i], cfg.widths[i + 1], k, s, rng, dtype))
            self.bns.append(BatchNormLayer(cfg.widths[i + 1], dtype) if cfg.batchnorm else None)

    def forward(self, x: Tensor, mode: str = "infer", update_running=None) -> Tensor:
        if x.shape[-3] != SBCM_INPUT_BANDS:
            raise ShapeError(f"band axis must be {SBCM_INPUT_BANDS}, got input shape {x.shape}")
        squeeze = x.ndim == 4
        h = T.reshape(x, (1,) + x.shape) if squeeze else x
        for conv, bn in zip(self.convs, self.bns):
            h = conv.forward(h)
            if bn is not None:
                h = bn.forward(h, mode, update_running)
            h = T.relu(h)
        return T.reshape(h, h.shape[1:]) if squeeze else h

    def trainables(self, prefix):
        out = []
        for i, (conv, bn) in enumerate(zip(self.convs, self.bns)):
            out += conv.trainables(f"{prefix}.conv{i}")
            if bn is not None:
                out += bn.trainables(f"{prefix}.bn{i}")
        return out

    def buffers(self, prefix):
        out = []
        for i, bn in enumerate(self.bns):
            if bn is not None:
                out += bn.buffers(f"{prefix}.bn{i}")
        return out


def flatten_bands(x: Tensor) -> Tensor:
    """[...,64,3,Hb,Wb] -> [...,192,Hb,Wb], channel-major (64 outer, 3 inner).

    Element (c, d, i, j) lands at flat channel c*3 + d, so each spatial
    location keeps its 192-long feature vector contiguous.
    """
    if x.shape[-4:-2] != (64, 3):
        raise ShapeError(f"flatten_bands expects [...,64,3,Hb,Wb], got {x.shape}")
    lead = x.shape[:-4]
    hb, wb = x.shape[-2:]
    return T.reshape(x, lead + (192, hb, wb))


class CnnF(Layer):
    """Separable-conv frequency network: [N,192,Hb,Wb] -> [N, output_dim]."""

    def __init__(self, cfg: CnnfConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        self.blocks = [SeparableBlock(cfg.widths[i], cfg.widths[i + 1], s, rng, dtype)
                       for i, s in enumerate(cfg.strides)]

    def forward(self, x: Tensor, mode: str = "infer", update_running=None) -> Tensor:
        if x.shape[-3] != self.cfg.widths[0]:
            raise ShapeError(f"expected {self.cfg.widths[0]} input channels, got shape {x.shape}")
        squeeze = x.ndim == 3
        h = T.reshape(x, (1,) + x.shape) if squeeze else x
        for i, block in enumerate(self.blocks):
            if h.shape[-1] < 1 or h.shape[-2] < 1:
                raise ConfigError(f"spatial dims collapsed before block {i}: shape {h.shape}")
            h = block.forward(h, mode, update_running)
        pooled = global_avg_pool(h)
        return T.reshape(pooled, pooled.shape[1:]) if squeeze else pooled

    def trainables(self, prefix):
        out = []
        for i, block in enumerate(self.blocks):
            out += block.trainables(f"{prefix}.block{i}")
        return out

    def buffers(self, prefix):
        out = []
        for i, block in enumerate(self.blocks):
            out += block.buffers(f"{prefix}.block{i}")
        return out
