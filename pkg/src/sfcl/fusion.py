"""Cross-modal fusion: shallow attention enhancement and deep gated attention.

The shallow stage (FAAE) builds an attention map over spatial positions from
concatenated frequency/spatial query-key projections and injects gated
frequency context back into the spatial features through a residual path
whose strength a learnable scalar controls. The deep stage (HCMA) projects
both branch vectors into a shared embedding, runs multi-head attention with
spatial queries over frequency keys/values, adds a normalized residual, and
modulates the result with a sigmoid gate computed from the global
differential statistics descriptor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from . import tensor as T
from .errors import ConfigError, ShapeError
from .layers import BatchNormLayer, Layer, LinearLayer
from .sida import DESCRIPTOR_LENGTH
from .tensor import Tensor


def _tokens(x: Tensor) -> Tensor:
    """[N,C,H,W] -> [N, H*W, C] token sequence (row-major spatial order)."""
    n, c, h, w = x.shape
    return T.reshape(T.transpose(x, (0, 2, 3, 1)), (n, h * w, c))


def _untokens(t: Tensor, h: int, w: int) -> Tensor:
    n, hw, c = t.shape
    return T.transpose(T.reshape(t, (n, h, w, c)), (0, 3, 1, 2))


@dataclass
class FaaeConfig:
    freq_channels: int = 192
    spatial_channels: int = 64
    attn_dim: int = 64          # per-modality projection width d_a
    zero_init_out: bool = True  # zero output projection => exact identity at start


class Faae(Layer):
    """Frequency-aware attention enhancement of shallow spatial features.

    All projections are 1x1 (token-wise); nothing mixes spatial positions
    except the attention application itself.
    """

    def __init__(self, cfg: FaaeConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        ca, cf, cs = cfg.attn_dim, cfg.freq_channels, cfg.spatial_channels
        self.q_f = LinearLayer(cf, ca, rng, dtype, bias=False)
        self.q_s = LinearLayer(cs, ca, rng, dtype, bias=False)
        self.k_f = LinearLayer(cf, ca, rng, dtype, bias=False)
        self.k_s = LinearLayer(cs, ca, rng, dtype, bias=False)
        self.v_f = LinearLayer(cf, cs, rng, dtype, bias=False)
        self.out = LinearLayer(cs, cs, rng, dtype, bias=False, zero_init=cfg.zero_init_out)
        self.bn = BatchNormLayer(cs, dtype)
        self.gamma_s = Tensor(np.zeros((), dtype=dtype), requires_grad=True)

    def attention(self, x_f: Tensor, x_s: Tensor) -> Tensor:
        """Cross-modal attention over spatial positions: [N, HW, HW] rows sum to 1."""
        if x_f.shape[-2:] != x_s.shape[-2:]:
            raise ShapeError(
                f"spatial dims differ: frequency {x_f.shape} vs spatial {x_s.shape}; no silent resampling")
        tf, ts = _tokens(x_f), _tokens(x_s)
        m_query = T.concat([T.matmul(tf, self.q_f.w), T.matmul(ts, self.q_s.w)], axis=2)
        m_key = T.concat([T.matmul(tf, self.k_f.w), T.matmul(ts, self.k_s.w)], axis=2)
        scale = 1.0 / math.sqrt(2 * self.cfg.attn_dim)
        scores = T.mul(T.matmul(m_query, T.transpose(m_key, (0, 2, 1))), scale)
        return T.softmax_rows(scores)

    def enhance(self, x_s: Tensor, x_f: Tensor, alpha: Tensor, mode: str = "infer",
                update_running=None) -> Tensor:
        """Residual injection of gated frequency context: returns Y_S, same shape as X_S."""
        n, cs, h, w = x_s.shape
        values = T.matmul(_tokens(x_f), self.v_f.w)          # [N, HW, Cs]
        context = T.matmul(alpha, values)                    # attention application
        context = T.mul(context, T.sigmoid(self.gamma_s))
        context = T.matmul(context, self.out.w)
        residual = self.bn.forward(_untokens(context, h, w), mode, update_running)
        return T.add(x_s, residual)

    def forward(self, x_f: Tensor, x_s: Tensor, mode: str = "infer", update_running=None) -> Tensor:
        return self.enhance(x_s, x_f, self.attention(x_f, x_s), mode, update_running)

    def trainables(self, prefix):
        out = []
        for name, lay in (("q_f", self.q_f), ("q_s", self.q_s), ("k_f", self.k_f),
                          ("k_s", self.k_s), ("v_f", self.v_f), ("out", self.out)):
            out += lay.trainables(f"{prefix}.{name}")
        out += self.bn.trainables(f"{prefix}.bn")
        out.append((f"{prefix}.gamma_s", self.gamma_s))
        return out

    def buffers(self, prefix):
        return self.bn.buffers(f"{prefix}.bn")


@dataclass
class HcmaConfig:
    """Deep fusion geometry.

    The projected vectors are read as ``tokens`` x ``embed_dim/tokens`` token
    sequences; ``tokens=1`` is the documented degenerate mode in which the
    attention output equals the value tokens exactly.
    """
    spatial_dim: int = 1792
    freq_dim: int = 2048
    embed_dim: int = 1024
    heads: int = 8
    tokens: int = 16

    def __post_init__(self):
        if self.embed_dim % self.heads:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by heads {self.heads}")
        if self.embed_dim % self.tokens:
            raise ConfigError(f"embed_dim {self.embed_dim} not divisible by tokens {self.tokens}")
        if self.token_dim % self.heads:
            raise ConfigError(
                f"token_dim {self.token_dim} not divisible by heads {self.heads}")

    @property
    def token_dim(self) -> int:
        return self.embed_dim // self.tokens


class Hcma(Layer):
    """Gated multi-head cross-modal fusion producing the fused embedding."""

    def __init__(self, cfg: HcmaConfig, rng: np.random.Generator, dtype=np.float32):
        self.cfg = cfg
        de, dt = cfg.embed_dim, cfg.token_dim
        self.proj_s = LinearLayer(cfg.spatial_dim, de, rng, dtype)
        self.proj_f = LinearLayer(cfg.freq_dim, de, rng, dtype)
        self.w_q = LinearLayer(dt, dt, rng, dtype, bias=False)
        self.w_k = LinearLayer(dt, dt, rng, dtype, bias=False)
        self.w_v = LinearLayer(dt, dt, rng, dtype, bias=False)
        self.residual = LinearLayer(de, de, rng, dtype, bias=False)
        self.bn = BatchNormLayer(de, dtype)
        self.gate = LinearLayer(DESCRIPTOR_LENGTH, de, rng, dtype)

    def _split_heads(self, x: Tensor) -> Tensor:
        n, t, dt = x.shape
        h = self.cfg.heads
        dh = dt // h
        return T.reshape(T.transpose(T.reshape(x, (n, t, h, dh)), (0, 2, 1, 3)), (n * h, t, dh))

    def _merge_heads(self, x: Tensor, n: int) -> Tensor:
        h = self.cfg.heads
        _, t, dh = x.shape
        return T.reshape(T.transpose(T.reshape(x, (n, h, t, dh)), (0, 2, 1, 3)), (n, t * dh * h))

    def fuse(self, s: Tensor, f: Tensor, d: Tensor, mode: str = "infer",
             update_running=None, use_gate: bool = True,
             internals: Optional[Dict[str, Tensor]] = None) -> Tensor:
        """S [N,spatial_dim], F [N,freq_dim], D [N,2304] -> fused [N,embed_dim]."""
        if d.shape[-1] != DESCRIPTOR_LENGTH:
            raise ShapeError(f"descriptor length must be {DESCRIPTOR_LENGTH}, got {d.shape}")
        cfg = self.cfg
        n = s.shape[0]
        s1 = self.proj_s.forward(s)
        f1 = self.proj_f.forward(f)
        sq = T.reshape(s1, (n, cfg.tokens, cfg.token_dim))
        fk = T.reshape(f1, (n, cfg.tokens, cfg.token_dim))
        q = self._split_heads(T.matmul(sq, self.w_q.w))
        k = self._split_heads(T.matmul(fk, self.w_k.w))
        v = self._split_heads(T.matmul(fk, self.w_v.w))
        scale = 1.0 / math.sqrt(cfg.embed_dim / cfg.heads)
        alpha = T.softmax_rows(T.mul(T.matmul(q, T.transpose(k, (0, 2, 1))), scale))
        attended = T.matmul(alpha, v)
        a_flat = self._merge_heads(attended, n)
        res = self.bn.forward(self.residual.forward(s1), mode, update_running)
        a_res = T.add(a_flat, res)
        if use_gate:
            g = T.sigmoid(self.gate.forward(d))
            fused = T.mul(a_res, g)
        else:
            g = None
            fused = a_res
        if internals is not None:
            internals.update(alpha=alpha, attended=a_flat,
                             values=self._merge_heads(v, n), gate=g, residual_sum=a_res)
        return fused

    def trainables(self, prefix):
        out = []
        for name, lay in (("proj_s", self.proj_s), ("proj_f", self.proj_f),
                          ("w_q", self.w_q), ("w_k", self.w_k), ("w_v", self.w_v),
                          ("residual", self.residual), ("gate", self.gate)):
            out += lay.trainables(f"{prefix}.{name}")
        return out + self.bn.trainables(f"{prefix}.bn")

    def buffers(self, prefix):
        return self.bn.buffers(f"{prefix}.bn")


class Classifier(Layer):
    """Linear head with sigmoid output; exposes the logit for loss computation."""

    def __init__(self, d_in: int, rng: np.random.Generator, dtype=np.float32):
        self.head = LinearLayer(d_in, 1, rng, dtype)

    def forward(self, fused: Tensor) -> Tuple[Tensor, Tensor]:
        """Returns (logits [N], probabilities [N])."""
        logits = T.reshape(self.head.forward(fused), (fused.shape[0],))
        return logits, T.sigmoid(logits)

    def trainables(self, prefix):
        return self.head.trainables(f"{prefix}.head")
