"""Transformer building blocks: attention, feed-forward, encoders, positions.

All blocks are bias-free.  Sublayers are post-norm: LayerNorm(x + dropout(f(x))).
Encoders iterate a single weight set L times, so depth adds compute, not
parameters; gradient accumulation in the tensor engine sums the L
contributions automatically.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, Sequence

import numpy as np

from .tensor import (
    RngStream,
    Tensor,
    add,
    concat_cols,
    dropout,
    gelu,
    layer_norm,
    matmul,
    scale,
    softmax_rows,
    transpose,
)

__all__ = [
    "AttentionWeights",
    "FfnWeights",
    "LayerNormParams",
    "SaLayerWeights",
    "CaLayerWeights",
    "scaled_dot_attention",
    "multi_head_attention",
    "position_wise_ffn",
    "sublayer",
    "sa_encoder_forward",
    "ca_encoder_forward",
    "sinusoidal_positional_encoding",
    "encoder_trace",
]


@dataclass
class LayerNormParams:
    gamma: Tensor
    beta: Tensor


@dataclass
class FfnWeights:
    """Two bias-free projections; w1 widens d -> 4d, w2 narrows back."""

    w1: Tensor
    w2: Tensor

    def __post_init__(self):
        d, hidden = self.w1.data.shape
        if hidden != 4 * d or self.w2.data.shape != (hidden, d):
            raise ValueError(
                f"ffn weights must be (d, 4d) and (4d, d), got {self.w1.data.shape} "
                f"and {self.w2.data.shape}"
            )


@dataclass
class AttentionWeights:
    """Per-head query/key/value projections plus the output projection.

    Each head projects width d_w down to d_k = d_w / h; the output
    projection maps the h*d_k concatenation back to d_w.
    """

    w_q: Sequence[Tensor]
    w_k: Sequence[Tensor]
    w_v: Sequence[Tensor]
    w_o: Tensor

    def __post_init__(self):
        h = len(self.w_q)
        if h == 0 or len(self.w_k) != h or len(self.w_v) != h:
            raise ValueError("attention needs the same nonzero head count for q/k/v")
        d_w, d_k = self.w_q[0].data.shape
        for group in (self.w_q, self.w_k, self.w_v):
            for t in group:
                if t.data.shape != (d_w, d_k):
                    raise ValueError(
                        f"every head projection must be {(d_w, d_k)}, got {t.data.shape}"
                    )
        if h * d_k != d_w:
            raise ValueError(f"head width {d_k} times {h} heads must equal d_w={d_w}")
        if self.w_o.data.shape != (h * d_k, d_w):
            raise ValueError(
                f"output projection must be {(h * d_k, d_w)}, got {self.w_o.data.shape}"
            )

    @property
    def n_heads(self) -> int:
        return len(self.w_q)

    @property
    def d_w(self) -> int:
        return self.w_q[0].data.shape[0]


@dataclass
class SaLayerWeights:
    """One self-attention encoder layer: MHA + FFN with their two norms."""

    mha: AttentionWeights
    ffn: FfnWeights
    ln1: LayerNormParams
    ln2: LayerNormParams


@dataclass
class CaLayerWeights:
    """One cross-attention encoder layer: self MHA, cross MHA, FFN, three norms."""

    mha_self: AttentionWeights
    mha_cross: AttentionWeights
    ffn: FfnWeights
    ln1: LayerNormParams
    ln2: LayerNormParams
    ln3: LayerNormParams


# ---------------------------------------------------------------------------
# tracing (debug instrumentation; off unless the context manager is active)

_trace: dict | None = None


@contextmanager
def encoder_trace() -> Iterator[dict]:
    """Collect attention probability maps and cross-encoder memories.

    Yields a dict with keys "attention_rows" (softmax outputs, one per
    attention evaluation, in call order) and "cross_memory" (the memory
    array fed to each cross-attention layer iteration).
    """
    global _trace
    prev = _trace
    _trace = {"attention_rows": [], "cross_memory": []}
    try:
        yield _trace
    finally:
        _trace = prev


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor) -> Tensor:
    """softmax(q k^T / sqrt(d_k)) v with row-wise softmax."""
    if q.data.ndim != 2 or k.data.ndim != 2 or v.data.ndim != 2:
        raise ValueError("scaled_dot_attention needs 2-D q, k, v")
    if q.data.shape[1] != k.data.shape[1]:
        raise ValueError(
            f"q/k width mismatch: {q.data.shape} vs {k.data.shape}"
        )
    if k.data.shape[0] != v.data.shape[0]:
        raise ValueError(
            f"k/v row mismatch: {k.data.shape} vs {v.data.shape}"
        )
    d_k = q.data.shape[1]
    probs = softmax_rows(scale(matmul(q, transpose(k)), 1.0 / math.sqrt(d_k)))
    if _trace is not None:
        _trace["attention_rows"].append(probs.data)
    return matmul(probs, v)


def multi_head_attention(j: Tensor, m: Tensor, w: AttentionWeights) -> Tensor:
    """Attend queries j over memory m with h parallel heads, then project.

    j supplies the queries, m the keys and values; self-attention is the
    m = j case.  Output keeps j's row count and width d_w.
    """
    if j.data.ndim != 2 or m.data.ndim != 2:
        raise ValueError("multi_head_attention needs 2-D inputs")
    if j.data.shape[1] != w.d_w or m.data.shape[1] != w.d_w:
        raise ValueError(
            f"input width must be d_w={w.d_w}, got query {j.data.shape} "
            f"and memory {m.data.shape}"
        )
    heads = [
        scaled_dot_attention(matmul(j, wq), matmul(m, wk), matmul(m, wv))
        for wq, wk, wv in zip(w.w_q, w.w_k, w.w_v)
    ]
    stacked = heads[0] if len(heads) == 1 else concat_cols(heads)
    return matmul(stacked, w.w_o)


def position_wise_ffn(x: Tensor, w: FfnWeights) -> Tensor:
    """GELU(x w1) w2, applied to each row independently."""
    if x.data.ndim != 2 or x.data.shape[1] != w.w1.data.shape[0]:
        raise ValueError(
            f"ffn input width mismatch: {x.data.shape} vs {w.w1.data.shape}"
        )
    return matmul(gelu(matmul(x, w.w1)), w.w2)


def sublayer(
    x: Tensor,
    block_out: Tensor,
    ln: LayerNormParams,
    rate: float,
    mode: str,
    rng: RngStream | None = None,
    eps: float = 1e-5,
) -> Tensor:
    """Post-norm residual wrapper: LayerNorm(x + dropout(block_out))."""
    return layer_norm(add(x, dropout(block_out, rate, mode, rng)), ln.gamma, ln.beta, eps)


def sa_encoder_forward(
    j: Tensor,
    w: SaLayerWeights,
    layers: int,
    rate: float,
    mode: str,
    rng: RngStream | None = None,
    eps: float = 1e-5,
) -> Tensor:
    """Iterate one shared self-attention layer ``layers`` times."""
    if layers < 1:
        raise ValueError(f"encoder needs layers >= 1, got {layers}")
    for _ in range(layers):
        a = sublayer(j, multi_head_attention(j, j, w.mha), w.ln1, rate, mode, rng, eps)
        j = sublayer(a, position_wise_ffn(a, w.ffn), w.ln2, rate, mode, rng, eps)
    return j


def ca_encoder_forward(
    j: Tensor,
    m: Tensor,
    w: CaLayerWeights,
    layers: int,
    rate: float,
    mode: str,
    rng: RngStream | None = None,
    eps: float = 1e-5,
) -> Tensor:
    """Iterate one shared cross-attention layer ``layers`` times.

    The memory m is held fixed at its original value for every iteration;
    only the query stream evolves.
    """
    if layers < 1:
        raise ValueError(f"encoder needs layers >= 1, got {layers}")
    for _ in range(layers):
        if _trace is not None:
            _trace["cross_memory"].append(m.data)
        a = sublayer(j, multi_head_attention(j, j, w.mha_self), w.ln1, rate, mode, rng, eps)
        b = sublayer(a, multi_head_attention(a, m, w.mha_cross), w.ln2, rate, mode, rng, eps)
        j = sublayer(b, position_wise_ffn(b, w.ffn), w.ln3, rate, mode, rng, eps)
    return j


@lru_cache(maxsize=64)
def _pe_table(n_positions: int, d_w: int) -> np.ndarray:
    positions = np.arange(n_positions, dtype=np.float64)[:, None]
    exponents = np.arange(0, d_w, 2, dtype=np.float64) / d_w
    angles = positions / np.power(10000.0, exponents)[None, :]
    table = np.empty((n_positions, d_w), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


def sinusoidal_positional_encoding(n_positions: int, d_w: int) -> Tensor:
    """Fixed sin/cos position table, positions 0..n-1, width d_w (even).

    Even columns are sines, odd columns cosines, wavelengths a geometric
    progression from 2*pi to 10000*2*pi.  Cached; treat as read-only.
    """
    if n_positions < 1:
        raise ValueError("positional encoding needs n_positions >= 1")
    if d_w < 2 or d_w % 2 != 0:
        raise ValueError(f"positional encoding needs even d_w >= 2, got {d_w}")
    return Tensor(_pe_table(n_positions, d_w))
