"""Dyadformer model family: configs, parameters, forward passes, checkpoints.

One ParamStore backs both participants and every layer iteration, so
anything shared is shared by construction.  Variants:

  TF_V       per-participant self-attention over video only
  DF_XM      cross-modal: audio self-encoded, video cross-attends to it
  DF_XS      cross-subject: video self-encoded, streams cross-attend
  DF_XM_XS   cross-modal stage feeding the cross-subject stage
  BERT_BASELINE  token-concatenation baseline with segment embeddings

The input embedding block (video/audio/metadata projections) is
instantiated for every variant even when a variant's forward pass ignores
audio; unused projections simply keep zero gradients.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from .blocks import (
    AttentionWeights,
    CaLayerWeights,
    FfnWeights,
    LayerNormParams,
    SaLayerWeights,
    ca_encoder_forward,
    sa_encoder_forward,
    sinusoidal_positional_encoding,
)
from .tensor import (
    ParamStore,
    RngStream,
    Tensor,
    add,
    add_rows,
    concat_rows,
    dropout,
    gelu,
    matmul,
    mean_rows,
    slice_rows,
    vecmat,
)

__all__ = [
    "ModelVariant",
    "ModelConfig",
    "DyadInput",
    "EmbeddingWeights",
    "HeadWeights",
    "PARTICIPANTS",
    "N_TRAITS",
    "parameter_shapes",
    "init_params",
    "count_parameters",
    "embed_stream",
    "cross_modal_stage",
    "cross_subject_stage",
    "regression_head",
    "forward",
    "save_checkpoint",
    "load_checkpoint",
]

PARTICIPANTS = ("A", "B")
N_TRAITS = 5


class ModelVariant(Enum):
    TF_V = "tf_v"
    DF_XM = "df_xm"
    DF_XS = "df_xs"
    DF_XM_XS = "df_xm_xs"
    BERT_BASELINE = "bert"

    @classmethod
    def from_string(cls, name: str) -> "ModelVariant":
        try:
            return cls(name.lower())
        except ValueError:
            valid = ", ".join(v.value for v in cls)
            raise ValueError(f"unknown variant {name!r}; choose one of {valid}") from None


# layer-count fields each variant actually consumes
_VARIANT_LAYER_FIELDS = {
    ModelVariant.TF_V: ("L_sbj",),
    ModelVariant.DF_XM: ("L_aud", "L_xm"),
    ModelVariant.DF_XS: ("L_sbj", "L_xs"),
    ModelVariant.DF_XM_XS: ("L_aud", "L_xm", "L_sbj", "L_xs"),
    ModelVariant.BERT_BASELINE: ("L_bm", "L_bs"),
}


@dataclass(frozen=True)
class ModelConfig:
    """Architecture hyperparameters.

    d_w is the shared token width (even, divisible by h); L_* are layer
    iteration counts, only the ones listed for the variant matter.  The
    full-scale profile is d_w=768, h=12; the desk profile shrinks widths
    so everything runs in seconds on a CPU.
    """

    variant: ModelVariant = ModelVariant.DF_XM_XS
    d_w: int = 768
    h: int = 12
    L_aud: int = 1
    L_xm: int = 1
    L_sbj: int = 1
    L_xs: int = 1
    L_bm: int = 1
    L_bs: int = 1
    d_v: int = 512
    d_a: int = 128
    d_m: int = 21
    dropout: float = 0.2
    use_metadata: bool = True
    head_activation: str = "none"
    ln_eps: float = 1e-5
    xs_include_audio: bool = False

    def __post_init__(self):
        if isinstance(self.variant, str):  # tolerate plain strings in configs
            object.__setattr__(self, "variant", ModelVariant.from_string(self.variant))
        if self.d_w < 2 or self.d_w % 2 != 0:
            raise ValueError(f"d_w must be even and >= 2, got {self.d_w}")
        if self.h < 1 or self.d_w % self.h != 0:
            raise ValueError(f"h={self.h} must divide d_w={self.d_w}")
        for name in ("d_v", "d_a", "d_m"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not (0.0 <= self.dropout < 1.0):
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")
        if self.head_activation not in ("none", "gelu"):
            raise ValueError(
                f"head_activation must be 'none' or 'gelu', got {self.head_activation!r}"
            )
        if self.ln_eps < 0:
            raise ValueError("ln_eps must be >= 0")
        for name in _VARIANT_LAYER_FIELDS[self.variant]:
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1 for variant {self.variant.value}")

    @property
    def d_k(self) -> int:
        return self.d_w // self.h

    @classmethod
    def preset(cls, variant: ModelVariant | str, L_xm: int = 1, L_xs: int = 1, **kw) -> "ModelConfig":
        """Convenience constructor tying L_aud to L_xm and L_sbj to L_xs."""
        return cls(variant=variant, L_aud=L_xm, L_xm=L_xm, L_sbj=L_xs, L_xs=L_xs, **kw)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = v.value if isinstance(v, ModelVariant) else v
        return out

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**dict(d))


@dataclass
class EmbeddingWeights:
    """Input projections into token width d_w."""

    video: Tensor
    audio: Tensor
    meta: Tensor


@dataclass
class HeadWeights:
    """Two stacked projections d_w -> 4*d_w -> 5 trait outputs."""

    fc1: Tensor
    fc2: Tensor


@dataclass
class DyadInput:
    """One dyad sample: per-participant video/audio chunk sequences + metadata.

    video[p] is T x d_v, audio[p] is T x d_a (same T), metadata[p] is a
    length-d_m vector.  Participants are keyed "A" and "B".
    """

    video: dict[str, Tensor]
    audio: dict[str, Tensor]
    metadata: dict[str, Tensor]

    def __post_init__(self):
        for d in (self.video, self.audio, self.metadata):
            if set(d) != set(PARTICIPANTS):
                raise ValueError(f"dyad input needs participants {PARTICIPANTS}")
        rows = {self.video[p].data.shape[0] for p in PARTICIPANTS}
        rows |= {self.audio[p].data.shape[0] for p in PARTICIPANTS}
        if len(rows) != 1:
            raise ValueError(f"all four chunk sequences must share T, got lengths {sorted(rows)}")

    @property
    def n_chunks(self) -> int:
        return self.video["A"].data.shape[0]

    def swapped(self) -> "DyadInput":
        """Return the same dyad with participants A and B exchanged."""
        flip = {"A": "B", "B": "A"}
        return DyadInput(
            video={flip[p]: t for p, t in self.video.items()},
            audio={flip[p]: t for p, t in self.audio.items()},
            metadata={flip[p]: t for p, t in self.metadata.items()},
        )


# ---------------------------------------------------------------------------
# parameter layout


def _sa_layer_shapes(prefix: str, d_w: int, h: int) -> dict[str, tuple]:
    d_k = d_w // h
    shapes: dict[str, tuple] = {}
    for role in ("q", "k", "v"):
        for i in range(h):
            shapes[f"{prefix}.mha.{role}{i}"] = (d_w, d_k)
    shapes[f"{prefix}.mha.out"] = (h * d_k, d_w)
    shapes[f"{prefix}.ffn.w1"] = (d_w, 4 * d_w)
    shapes[f"{prefix}.ffn.w2"] = (4 * d_w, d_w)
    for ln in ("ln1", "ln2"):
        shapes[f"{prefix}.{ln}.gamma"] = (d_w,)
        shapes[f"{prefix}.{ln}.beta"] = (d_w,)
    return shapes


def _ca_layer_shapes(prefix: str, d_w: int, h: int) -> dict[str, tuple]:
    d_k = d_w // h
    shapes: dict[str, tuple] = {}
    for block in ("self", "cross"):
        for role in ("q", "k", "v"):
            for i in range(h):
                shapes[f"{prefix}.{block}.{role}{i}"] = (d_w, d_k)
        shapes[f"{prefix}.{block}.out"] = (h * d_k, d_w)
    shapes[f"{prefix}.ffn.w1"] = (d_w, 4 * d_w)
    shapes[f"{prefix}.ffn.w2"] = (4 * d_w, d_w)
    for ln in ("ln1", "ln2", "ln3"):
        shapes[f"{prefix}.{ln}.gamma"] = (d_w,)
        shapes[f"{prefix}.{ln}.beta"] = (d_w,)
    return shapes


def parameter_shapes(config: ModelConfig) -> dict[str, tuple]:
    """Every trainable tensor's name and shape, in canonical order.

    Shared between init_params and count_parameters so the two can never
    disagree.
    """
    d_w, h = config.d_w, config.h
    shapes: dict[str, tuple] = {
        "embed.video": (config.d_v, d_w),
        "embed.audio": (config.d_a, d_w),
        "embed.meta": (config.d_m, d_w),
    }
    v = config.variant
    if v is ModelVariant.TF_V:
        shapes.update(_sa_layer_shapes("sa_sbj", d_w, h))
    elif v is ModelVariant.DF_XM:
        shapes.update(_sa_layer_shapes("sa_aud", d_w, h))
        shapes.update(_ca_layer_shapes("ca_vid", d_w, h))
    elif v is ModelVariant.DF_XS:
        shapes.update(_sa_layer_shapes("sa_sbj", d_w, h))
        shapes.update(_ca_layer_shapes("ca_sbj", d_w, h))
    elif v is ModelVariant.DF_XM_XS:
        shapes.update(_sa_layer_shapes("sa_aud", d_w, h))
        shapes.update(_ca_layer_shapes("ca_vid", d_w, h))
        shapes.update(_sa_layer_shapes("sa_sbj", d_w, h))
        shapes.update(_ca_layer_shapes("ca_sbj", d_w, h))
    elif v is ModelVariant.BERT_BASELINE:
        shapes["seg.modality.video"] = (d_w,)
        shapes["seg.modality.audio"] = (d_w,)
        shapes["seg.subject.own"] = (d_w,)
        shapes["seg.subject.other"] = (d_w,)
        shapes.update(_sa_layer_shapes("bert_pair", d_w, h))
        shapes.update(_sa_layer_shapes("bert_dyad", d_w, h))
    shapes["head.fc1"] = (d_w, 4 * d_w)
    shapes["head.fc2"] = (4 * d_w, N_TRAITS)
    return shapes


def count_parameters(config: ModelConfig) -> int:
    """Total scalar parameter count for the variant."""
    return sum(int(np.prod(s)) for s in parameter_shapes(config).values())


def init_params(config: ModelConfig, rng: RngStream) -> ParamStore:
    """Fresh parameters: uniform +-sqrt(6/(fan_in+fan_out)) for weights,
    gamma=1 / beta=0 for the norms.  Draw order is the canonical shape
    order, so one seed pins every value."""
    store = ParamStore()
    for name, shape in parameter_shapes(config).items():
        if name.endswith(".gamma"):
            data = np.ones(shape)
        elif name.endswith(".beta"):
            data = np.zeros(shape)
        else:
            fan_in, fan_out = (1, shape[0]) if len(shape) == 1 else shape
            bound = np.sqrt(6.0 / (fan_in + fan_out))
            data = rng.uniform(-bound, bound, shape)
        store.add(name, Tensor(data, requires_grad=True))
    return store


# weight binding: typed views over the flat store


def _attn(store: ParamStore, prefix: str, h: int) -> AttentionWeights:
    return AttentionWeights(
        w_q=[store[f"{prefix}.q{i}"] for i in range(h)],
        w_k=[store[f"{prefix}.k{i}"] for i in range(h)],
        w_v=[store[f"{prefix}.v{i}"] for i in range(h)],
        w_o=store[f"{prefix}.out"],
    )


def _ln(store: ParamStore, prefix: str) -> LayerNormParams:
    return LayerNormParams(gamma=store[f"{prefix}.gamma"], beta=store[f"{prefix}.beta"])


def _ffn(store: ParamStore, prefix: str) -> FfnWeights:
    return FfnWeights(w1=store[f"{prefix}.w1"], w2=store[f"{prefix}.w2"])


def _sa(store: ParamStore, prefix: str, h: int) -> SaLayerWeights:
    return SaLayerWeights(
        mha=_attn(store, f"{prefix}.mha", h),
        ffn=_ffn(store, f"{prefix}.ffn"),
        ln1=_ln(store, f"{prefix}.ln1"),
        ln2=_ln(store, f"{prefix}.ln2"),
    )


def _ca(store: ParamStore, prefix: str, h: int) -> CaLayerWeights:
    return CaLayerWeights(
        mha_self=_attn(store, f"{prefix}.self", h),
        mha_cross=_attn(store, f"{prefix}.cross", h),
        ffn=_ffn(store, f"{prefix}.ffn"),
        ln1=_ln(store, f"{prefix}.ln1"),
        ln2=_ln(store, f"{prefix}.ln2"),
        ln3=_ln(store, f"{prefix}.ln3"),
    )


def _embed_weights(store: ParamStore) -> EmbeddingWeights:
    return EmbeddingWeights(
        video=store["embed.video"], audio=store["embed.audio"], meta=store["embed.meta"]
    )


def _head_weights(store: ParamStore) -> HeadWeights:
    return HeadWeights(fc1=store["head.fc1"], fc2=store["head.fc2"])


# ---------------------------------------------------------------------------
# forward pieces


def embed_stream(
    features: Tensor,
    meta: Tensor,
    proj: Tensor,
    metaproj: Tensor,
    use_metadata: bool,
    rate: float,
    mode: str,
    rng: RngStream | None = None,
) -> Tensor:
    """Project chunk features to d_w, add positions and the metadata vector.

    The projected metadata is one vector added to every timestep; dropout
    is applied once to the finished sum.
    """
    n = features.data.shape[0]
    e = matmul(features, proj)
    e = add(e, sinusoidal_positional_encoding(n, proj.data.shape[1]))
    if use_metadata:
        e = add_rows(e, vecmat(meta, metaproj))
    return dropout(e, rate, mode, rng)


def cross_modal_stage(
    x_emb: Tensor,
    u_emb: Tensor,
    sa_aud: SaLayerWeights,
    ca_vid: CaLayerWeights,
    L_aud: int,
    L_xm: int,
    rate: float,
    mode: str,
    rng: RngStream | None = None,
    eps: float = 1e-5,
) -> Tensor:
    """Self-encode audio, then let video cross-attend to the result."""
    u_hat = sa_encoder_forward(u_emb, sa_aud, L_aud, rate, mode, rng, eps)
    return ca_encoder_forward(x_emb, u_hat, ca_vid, L_xm, rate, mode, rng, eps)


def cross_subject_stage(
    in_a: Tensor,
    in_b: Tensor,
    sa_sbj: SaLayerWeights,
    ca_sbj: CaLayerWeights,
    L_sbj: int,
    L_xs: int,
    rate: float,
    mode: str,
    rng: RngStream | None = None,
    eps: float = 1e-5,
) -> tuple[Tensor, Tensor]:
    """Self-encode each stream, then each cross-attends to the other.

    Both directions run through the same weights, so the stage is
    symmetric under exchanging the streams.
    """
    s_a = sa_encoder_forward(in_a, sa_sbj, L_sbj, rate, mode, rng, eps)
    s_b = sa_encoder_forward(in_b, sa_sbj, L_sbj, rate, mode, rng, eps)
    out_a = ca_encoder_forward(s_a, s_b, ca_sbj, L_xs, rate, mode, rng, eps)
    out_b = ca_encoder_forward(s_b, s_a, ca_sbj, L_xs, rate, mode, rng, eps)
    return out_a, out_b


def regression_head(tokens: Tensor, head: HeadWeights, activation: str = "none") -> Tensor:
    """Mean-pool tokens over time, then two stacked projections to 5 traits."""
    z = vecmat(mean_rows(tokens), head.fc1)
    if activation == "gelu":
        z = gelu(z)
    elif activation != "none":
        raise ValueError(f"unknown head activation {activation!r}")
    return vecmat(z, head.fc2)


# ---------------------------------------------------------------------------
# full forward passes


def forward(
    inputs: DyadInput,
    config: ModelConfig,
    store: ParamStore,
    mode: str = "eval",
    rng: RngStream | None = None,
    participants: tuple[str, ...] = PARTICIPANTS,
) -> dict[str, Tensor]:
    """Predict the 5 trait scores for the requested participants.

    Returns {"A": Tensor(5,), ...}.  In train mode an RngStream must be
    supplied when dropout is nonzero; eval mode never draws randomness.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    unknown = set(participants) - set(PARTICIPANTS)
    if unknown or not participants:
        raise ValueError(f"participants must be a nonempty subset of {PARTICIPANTS}")
    rate = config.dropout if mode == "train" else 0.0
    emb = _embed_weights(store)
    head = _head_weights(store)
    eps = config.ln_eps
    v = config.variant

    def embed_video(p: str) -> Tensor:
        return embed_stream(
            inputs.video[p], inputs.metadata[p], emb.video, emb.meta,
            config.use_metadata, rate, mode, rng,
        )

    def embed_audio(p: str) -> Tensor:
        return embed_stream(
            inputs.audio[p], inputs.metadata[p], emb.audio, emb.meta,
            config.use_metadata, rate, mode, rng,
        )

    preds: dict[str, Tensor] = {}

    if v is ModelVariant.TF_V:
        sa = _sa(store, "sa_sbj", config.h)
        for p in participants:
            enc = sa_encoder_forward(embed_video(p), sa, config.L_sbj, rate, mode, rng, eps)
            preds[p] = regression_head(enc, head, config.head_activation)
        return preds

    if v is ModelVariant.DF_XM:
        sa_aud = _sa(store, "sa_aud", config.h)
        ca_vid = _ca(store, "ca_vid", config.h)
        for p in participants:
            x_hat = cross_modal_stage(
                embed_video(p), embed_audio(p), sa_aud, ca_vid,
                config.L_aud, config.L_xm, rate, mode, rng, eps,
            )
            preds[p] = regression_head(x_hat, head, config.head_activation)
        return preds

    if v is ModelVariant.DF_XS:
        sa_sbj = _sa(store, "sa_sbj", config.h)
        ca_sbj = _ca(store, "ca_sbj", config.h)
        streams = {}
        for p in PARTICIPANTS:
            e = embed_video(p)
            if config.xs_include_audio:
                e = concat_rows([e, embed_audio(p)])
            streams[p] = e
        out_a, out_b = cross_subject_stage(
            streams["A"], streams["B"], sa_sbj, ca_sbj,
            config.L_sbj, config.L_xs, rate, mode, rng, eps,
        )
        outs = {"A": out_a, "B": out_b}
        for p in participants:
            preds[p] = regression_head(outs[p], head, config.head_activation)
        return preds

    if v is ModelVariant.DF_XM_XS:
        sa_aud = _sa(store, "sa_aud", config.h)
        ca_vid = _ca(store, "ca_vid", config.h)
        sa_sbj = _sa(store, "sa_sbj", config.h)
        ca_sbj = _ca(store, "ca_sbj", config.h)
        fused = {}
        for p in PARTICIPANTS:
            fused[p] = cross_modal_stage(
                embed_video(p), embed_audio(p), sa_aud, ca_vid,
                config.L_aud, config.L_xm, rate, mode, rng, eps,
            )
        out_a, out_b = cross_subject_stage(
            fused["A"], fused["B"], sa_sbj, ca_sbj,
            config.L_sbj, config.L_xs, rate, mode, rng, eps,
        )
        outs = {"A": out_a, "B": out_b}
        for p in participants:
            preds[p] = regression_head(outs[p], head, config.head_activation)
        return preds

    return _bert_forward(inputs, config, store, mode, rng, participants)


def _bert_forward(
    inputs: DyadInput,
    config: ModelConfig,
    store: ParamStore,
    mode: str,
    rng: RngStream | None,
    participants: tuple[str, ...],
) -> dict[str, Tensor]:
    """Token-concatenation baseline.

    Stage 1 joins each participant's video and audio tokens along time
    (2T tokens) with learned modality segment vectors and self-encodes
    them; both participants use the same stage-1 weights.  Stage 2 joins
    the two participants' stage-1 outputs (4T tokens) with subject segment
    vectors assigned own-first relative to the participant being pooled,
    runs once per pooled participant, and the head reads the mean of that
    participant's own video positions.
    """
    rate = config.dropout if mode == "train" else 0.0
    eps = config.ln_eps
    emb = _embed_weights(store)
    head = _head_weights(store)
    pair = _sa(store, "bert_pair", config.h)
    dyad = _sa(store, "bert_dyad", config.h)
    n = inputs.n_chunks

    seg_video = store["seg.modality.video"]
    seg_audio = store["seg.modality.audio"]
    seg_own = store["seg.subject.own"]
    seg_other = store["seg.subject.other"]

    encoded: dict[str, Tensor] = {}
    for p in PARTICIPANTS:
        xv = embed_stream(
            inputs.video[p], inputs.metadata[p], emb.video, emb.meta,
            config.use_metadata, rate, mode, rng,
        )
        xa = embed_stream(
            inputs.audio[p], inputs.metadata[p], emb.audio, emb.meta,
            config.use_metadata, rate, mode, rng,
        )
        tokens = concat_rows(
            [add_rows(xv, seg_video), add_rows(xa, seg_audio)]
        )
        encoded[p] = sa_encoder_forward(tokens, pair, config.L_bm, rate, mode, rng, eps)

    other = {"A": "B", "B": "A"}
    preds: dict[str, Tensor] = {}
    for p in participants:
        q = other[p]
        joint = concat_rows(
            [add_rows(encoded[p], seg_own), add_rows(encoded[q], seg_other)]
        )
        fused = sa_encoder_forward(joint, dyad, config.L_bs, rate, mode, rng, eps)
        own_video = slice_rows(fused, 0, n)
        preds[p] = regression_head(own_video, head, config.head_activation)
    return preds


# ---------------------------------------------------------------------------
# checkpoints

_CKPT_MAGIC = b"DYCK"
_CKPT_VERSION = 1


def save_checkpoint(path: str | Path, config: ModelConfig, store: ParamStore) -> None:
    """Write config + parameters to one self-describing binary file.

    Layout: magic, version, JSON config block, then per parameter its
    name, dims, and row-major float64 little-endian payload.  The bytes
    are a pure function of (config, parameter values).
    """
    path = Path(path)
    cfg_bytes = json.dumps(config.to_dict(), sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<I", _CKPT_VERSION))
        fh.write(struct.pack("<I", len(cfg_bytes)))
        fh.write(cfg_bytes)
        fh.write(struct.pack("<I", len(store)))
        for name, t in store.items():
            name_b = name.encode()
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", t.data.ndim))
            for dim in t.data.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(np.ascontiguousarray(t.data, dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, ParamStore]:
    """Read a checkpoint back; values round-trip bitwise."""
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != _CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", raw, 4)
    if version != _CKPT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    (cfg_len,) = struct.unpack_from("<I", raw, 8)
    off = 12
    config = ModelConfig.from_dict(json.loads(raw[off : off + cfg_len].decode()))
    off += cfg_len
    (n_params,) = struct.unpack_from("<I", raw, off)
    off += 4
    store = ParamStore()
    for _ in range(n_params):
        (name_len,) = struct.unpack_from("<H", raw, off)
        off += 2
        name = raw[off : off + name_len].decode()
        off += name_len
        ndim = raw[off]
        off += 1
        shape = struct.unpack_from(f"<{ndim}I", raw, off)
        off += 4 * ndim
        count = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(raw, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        store.add(name, Tensor(data.copy(), requires_grad=True))
    expected = parameter_shapes(config)
    if list(expected) != store.names():
        raise ValueError(f"{path}: parameter names do not match the stored config")
    for name, shape in expected.items():
        if store[name].data.shape != shape:
            raise ValueError(f"{path}: shape mismatch for {name!r}")
    return config, store
