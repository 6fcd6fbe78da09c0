"""Where the parameters live, and what weight sharing buys.

Run with:  python3 demos/05_parameter_budgets.py
"""

import math
from collections import defaultdict

from dyadformer.model import ModelConfig, ModelVariant, count_parameters, parameter_shapes


def full(variant, **kw):
    return ModelConfig(variant=variant, d_w=768, h=12, d_v=512, d_a=128, d_m=21, **kw)


print("== full-scale profile (d_w=768, h=12) ==")
print(f"{'variant':10s} {'params':>12s}")
for v in ModelVariant:
    print(f"{v.value:10s} {count_parameters(full(v.value)):>12,d}")
print()

print("== breakdown by component (df_xm_xs) ==")
groups = defaultdict(int)
for name, shape in parameter_shapes(full("df_xm_xs")).items():
    groups[name.split(".")[0]] += math.prod(shape)
for g, n in sorted(groups.items(), key=lambda kv: -kv[1]):
    print(f"  {g:8s} {n:>12,d}")
print()

print("== sharing: depth is free ==")
print("one parameter set is iterated for every layer of an encoder, so the")
print("count does not move with depth:")
for L in (1, 2, 4, 8):
    n = count_parameters(full("tf_v", L_sbj=L))
    print(f"  tf_v with {L} layer(s): {n:,d}")
unshared = 8 * sum(
    math.prod(s) for n, s in parameter_shapes(full("tf_v")).items()
    if n.startswith("sa_sbj.")
)
print(f"8 independent encoder layers would cost {unshared:,d} on their own")
print()

print("== desk-scale profile (d_w=32, h=4) ==")
desk = dict(d_w=32, h=4, d_v=12, d_a=8, d_m=6)
for v in ModelVariant:
    n = count_parameters(ModelConfig(variant=v.value, **desk))
    print(f"{v.value:10s} {n:>8,d}")
print()
print("the desk profile trains in seconds on a CPU; the full profile keeps")
print("the reference shape for counting and forward-pass checks")
