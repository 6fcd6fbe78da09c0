"""A walk through the attention building blocks.

Run with:  python3 demos/01_attention_basics.py

Shows that attention maps are row-stochastic, that a self-attention
encoder treats its input as a bag of tokens until positional encodings
are added, and that a cross-attention encoder keeps its memory fixed
while the query stream evolves.
"""

import numpy as np

from dyadformer.blocks import (
    AttentionWeights,
    CaLayerWeights,
    FfnWeights,
    LayerNormParams,
    SaLayerWeights,
    ca_encoder_forward,
    encoder_trace,
    sa_encoder_forward,
    scaled_dot_attention,
    sinusoidal_positional_encoding,
)
from dyadformer.tensor import RngStream, Tensor

rng = RngStream(0)

print("== scaled dot-product attention ==")
T, d_k = 4, 6
q = Tensor(rng.normal((T, d_k)))
k = Tensor(rng.normal((T, d_k)))
v = Tensor(rng.normal((T, d_k)))
with encoder_trace() as tr:
    out = scaled_dot_attention(q, k, v)
weights = tr["attention_rows"][0]
print(f"attention map shape {weights.shape}, output shape {out.shape}")
print("each row is a probability distribution over the memory positions:")
print(np.round(weights, 3))
print("row sums:", weights.sum(axis=1))
print()


def rand_attn(d_w, h):
    d_kh = d_w // h
    mk = lambda s: Tensor(rng.normal(s, scale=0.5), requires_grad=True)
    return AttentionWeights(
        w_q=[mk((d_w, d_kh)) for _ in range(h)],
        w_k=[mk((d_w, d_kh)) for _ in range(h)],
        w_v=[mk((d_w, d_kh)) for _ in range(h)],
        w_o=mk((d_w, d_w)),
    )


def ln(d_w):
    return LayerNormParams(Tensor(np.ones(d_w), requires_grad=True),
                           Tensor(np.zeros(d_w), requires_grad=True))


def rand_ffn(d_w):
    return FfnWeights(w1=Tensor(rng.normal((d_w, 4 * d_w), scale=0.5), requires_grad=True),
                      w2=Tensor(rng.normal((4 * d_w, d_w), scale=0.5), requires_grad=True))


d_w, h = 8, 2
sa = SaLayerWeights(mha=rand_attn(d_w, h), ffn=rand_ffn(d_w), ln1=ln(d_w), ln2=ln(d_w))

print("== permutation equivariance ==")
x = rng.normal((5, d_w))
perm = rng.permutation(5)
out = sa_encoder_forward(Tensor(x), sa, 2, 0.0, "eval").data
out_p = sa_encoder_forward(Tensor(x[perm]), sa, 2, 0.0, "eval").data
print("shuffle the tokens, run the encoder, unshuffle the output:")
print(f"  max difference without positions: {np.abs(out[perm] - out_p).max():.2e}")

pe = sinusoidal_positional_encoding(5, d_w).data
out = sa_encoder_forward(Tensor(x + pe), sa, 2, 0.0, "eval").data
out_p = sa_encoder_forward(Tensor(x[perm] + pe), sa, 2, 0.0, "eval").data
print(f"  max difference with positions:    {np.abs(out[perm] - out_p).max():.2e}")
print("positional encodings are what give the model a notion of time")
print()

print("== cross-attention keeps its memory fixed ==")
ca = CaLayerWeights(mha_self=rand_attn(d_w, h), mha_cross=rand_attn(d_w, h),
                    ffn=rand_ffn(d_w), ln1=ln(d_w), ln2=ln(d_w), ln3=ln(d_w))
mem = Tensor(rng.normal((3, d_w)))
with encoder_trace() as tr:
    ca_encoder_forward(Tensor(rng.normal((5, d_w))), mem, ca, 4, 0.0, "eval")
same = all(entry is mem.data for entry in tr["cross_memory"])
print(f"4 layer iterations, memory identical each time: {same}")
print("the query stream is refined layer by layer against the same memory,")
print("which is how one modality (or one person) attends to the other")
