"""Dense float64 tensors with reverse-mode automatic differentiation.

Deliberately small engine: values live in C-order numpy arrays, every
differentiable op records a backward closure, and gradients accumulate
additively so a parameter used in several places (shared layers, tied
streams) receives the sum of all its contributions.  No broadcasting
beyond what the ops here spell out.
"""

from __future__ import annotations

import math
from contextlib import contextmanager
from typing import Callable, Iterator

import numpy as np
from scipy.special import ndtr

__all__ = [
    "Tensor",
    "RngStream",
    "ParamStore",
    "no_grad",
    "matmul",
    "transpose",
    "add",
    "sub",
    "mul",
    "scale",
    "add_rows",
    "broadcast_rows",
    "concat_rows",
    "concat_cols",
    "slice_rows",
    "mean_rows",
    "sum_all",
    "vecmat",
    "softmax_rows",
    "layer_norm",
    "gelu",
    "dropout",
    "backward",
    "grad_check",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)

_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block; ops return bare values."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """A dense float64 array plus an optional gradient buffer.

    ``data`` is always C-contiguous float64.  ``grad`` is either None or an
    array of the same shape; backward() accumulates into it with ``+=`` so
    repeated uses of one tensor sum up.  Leaf tensors are created directly;
    interior nodes are produced by the ops below and carry the closures
    needed to propagate gradients to their parents.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_bw", "_done")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor values must be finite")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple = ()
        self._bw = None
        self._done = False

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a scalar, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def _plain(data: np.ndarray) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = data
    t.requires_grad = False
    t.grad = None
    t._parents = ()
    t._bw = None
    t._done = False
    return t


def _node(data: np.ndarray, parents: tuple, bw: Callable) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = data
    t.requires_grad = True
    t.grad = None
    t._parents = parents
    t._bw = bw
    t._done = False
    return t


def _accum(t: Tensor, g) -> None:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _recording(*ts: Tensor) -> bool:
    return _grad_enabled and any(t.requires_grad for t in ts)


# ---------------------------------------------------------------------------
# ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D matrix product a @ b."""
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.data.shape} @ {b.data.shape}")
    out = a.data @ b.data
    if not _recording(a, b):
        return _plain(out)

    def bw(g):
        if a.requires_grad:
            _accum(a, g @ b.data.T)
        if b.requires_grad:
            _accum(b, a.data.T @ g)

    return _node(out, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    if a.data.ndim != 2:
        raise ValueError(f"transpose needs a 2-D tensor, got shape {a.data.shape}")
    out = a.data.T
    if not _recording(a):
        return _plain(out)

    def bw(g):
        _accum(a, g.T)

    return _node(out, (a,), bw)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = a.data + b.data
    if not _recording(a, b):
        return _plain(out)

    def bw(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, g)

    return _node(out, (a, b), bw)


def sub(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"sub shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = a.data - b.data
    if not _recording(a, b):
        return _plain(out)

    def bw(g):
        if a.requires_grad:
            _accum(a, g)
        if b.requires_grad:
            _accum(b, -g)

    return _node(out, (a, b), bw)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product of same-shape tensors."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"mul shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = a.data * b.data
    if not _recording(a, b):
        return _plain(out)

    def bw(g):
        if a.requires_grad:
            _accum(a, g * b.data)
        if b.requires_grad:
            _accum(b, g * a.data)

    return _node(out, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    out = a.data * c
    if not _recording(a):
        return _plain(out)

    def bw(g):
        _accum(a, g * c)

    return _node(out, (a,), bw)


def add_rows(x: Tensor, v: Tensor) -> Tensor:
    """Add a length-d vector to every row of a T x d matrix."""
    if x.data.ndim != 2 or v.data.ndim != 1 or x.data.shape[1] != v.data.shape[0]:
        raise ValueError(f"add_rows shape mismatch: {x.data.shape} + {v.data.shape}")
    out = x.data + v.data
    if not _recording(x, v):
        return _plain(out)

    def bw(g):
        if x.requires_grad:
            _accum(x, g)
        if v.requires_grad:
            _accum(v, g.sum(axis=0))

    return _node(out, (x, v), bw)


def broadcast_rows(v: Tensor, rows: int) -> Tensor:
    """Tile a length-d vector into a rows x d matrix."""
    if v.data.ndim != 1:
        raise ValueError(f"broadcast_rows needs a 1-D tensor, got shape {v.data.shape}")
    if rows < 1:
        raise ValueError("broadcast_rows needs rows >= 1")
    out = np.tile(v.data, (rows, 1))
    if not _recording(v):
        return _plain(out)

    def bw(g):
        _accum(v, g.sum(axis=0))

    return _node(out, (v,), bw)


def _concat(ts, axis: int) -> Tensor:
    ts = tuple(ts)
    if not ts:
        raise ValueError("concat needs at least one tensor")
    for t in ts:
        if t.data.ndim != 2:
            raise ValueError(f"concat needs 2-D tensors, got shape {t.data.shape}")
    out = np.concatenate([t.data for t in ts], axis=axis)
    if not _recording(*ts):
        return _plain(out)
    sizes = [t.data.shape[axis] for t in ts]

    def bw(g):
        off = 0
        for t, n in zip(ts, sizes):
            if t.requires_grad:
                piece = g[off : off + n] if axis == 0 else g[:, off : off + n]
                _accum(t, piece)
            off += n

    return _node(out, ts, bw)


def concat_rows(ts) -> Tensor:
    """Stack 2-D tensors along the row (time) axis."""
    return _concat(ts, axis=0)


def concat_cols(ts) -> Tensor:
    """Stack 2-D tensors along the column (feature) axis."""
    return _concat(ts, axis=1)


def slice_rows(x: Tensor, start: int, stop: int) -> Tensor:
    if x.data.ndim != 2:
        raise ValueError(f"slice_rows needs a 2-D tensor, got shape {x.data.shape}")
    n = x.data.shape[0]
    if not (0 <= start < stop <= n):
        raise ValueError(f"slice_rows range [{start}, {stop}) invalid for {n} rows")
    out = x.data[start:stop].copy()
    if not _recording(x):
        return _plain(out)

    def bw(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        _accum(x, full)

    return _node(out, (x,), bw)


def mean_rows(x: Tensor) -> Tensor:
    """Average a T x d matrix over rows, giving a length-d vector."""
    if x.data.ndim != 2:
        raise ValueError(f"mean_rows needs a 2-D tensor, got shape {x.data.shape}")
    rows = x.data.shape[0]
    out = x.data.mean(axis=0)
    if not _recording(x):
        return _plain(out)

    def bw(g):
        _accum(x, np.broadcast_to(g / rows, x.data.shape))

    return _node(out, (x,), bw)


def sum_all(x: Tensor) -> Tensor:
    """Sum every element into a scalar (shape ())."""
    out = np.asarray(x.data.sum())
    if not _recording(x):
        return _plain(out)

    def bw(g):
        _accum(x, np.broadcast_to(g, x.data.shape))

    return _node(out, (x,), bw)


def vecmat(v: Tensor, w: Tensor) -> Tensor:
    """Row-vector times matrix: (d,) @ (d x k) -> (k,)."""
    if v.data.ndim != 1 or w.data.ndim != 2 or v.data.shape[0] != w.data.shape[0]:
        raise ValueError(f"vecmat shape mismatch: {v.data.shape} @ {w.data.shape}")
    out = v.data @ w.data
    if not _recording(v, w):
        return _plain(out)

    def bw(g):
        if v.requires_grad:
            _accum(v, w.data @ g)
        if w.requires_grad:
            _accum(w, np.outer(v.data, g))

    return _node(out, (v, w), bw)


def softmax_rows(a: Tensor) -> Tensor:
    """Row-wise softmax of a 2-D tensor; rows sum to 1.

    Shift-stabilized, so large equal logits do not overflow.  Non-finite
    input is rejected rather than silently propagated.
    """
    if a.data.ndim != 2:
        raise ValueError(f"softmax_rows needs a 2-D tensor, got shape {a.data.shape}")
    if not np.all(np.isfinite(a.data)):
        raise ValueError("softmax_rows input must be finite")
    shifted = a.data - a.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=1, keepdims=True)
    if not _recording(a):
        return _plain(out)

    def bw(g):
        _accum(a, out * (g - (g * out).sum(axis=1, keepdims=True)))

    return _node(out, (a,), bw)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize each row of x to zero mean / unit variance, then affine.

    Variance is the population variance (divide by d).  eps=0 is allowed
    but requires non-degenerate rows.
    """
    if x.data.ndim != 2:
        raise ValueError(f"layer_norm needs a 2-D tensor, got shape {x.data.shape}")
    d = x.data.shape[1]
    if gamma.data.shape != (d,) or beta.data.shape != (d,):
        raise ValueError(
            f"layer_norm affine shape mismatch: x width {d}, "
            f"gamma {gamma.data.shape}, beta {beta.data.shape}"
        )
    if eps < 0:
        raise ValueError("layer_norm eps must be >= 0")
    mu = x.data.mean(axis=1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xh = xc * inv
    out = gamma.data * xh + beta.data
    if not _recording(x, gamma, beta):
        return _plain(out)

    def bw(g):
        if gamma.requires_grad:
            _accum(gamma, (g * xh).sum(axis=0))
        if beta.requires_grad:
            _accum(beta, g.sum(axis=0))
        if x.requires_grad:
            dxh = g * gamma.data
            term = dxh.mean(axis=1, keepdims=True)
            proj = (dxh * xh).mean(axis=1, keepdims=True)
            _accum(x, inv * (dxh - term - xh * proj))

    return _node(out, (x, gamma, beta), bw)


def gelu(x: Tensor) -> Tensor:
    """Exact Gaussian-CDF GELU: x * Phi(x)."""
    phi_cdf = ndtr(x.data)
    out = x.data * phi_cdf
    if not _recording(x):
        return _plain(out)

    def bw(g):
        pdf = np.exp(-0.5 * x.data * x.data) * _INV_SQRT_2PI
        _accum(x, g * (phi_cdf + x.data * pdf))

    return _node(out, (x,), bw)


def dropout(x: Tensor, rate: float, mode: str, rng: "RngStream | None" = None) -> Tensor:
    """Inverted dropout.

    Train mode zeroes each element with probability ``rate`` and rescales
    the survivors by 1/(1-rate) so the expectation is unchanged.  Eval mode
    (or rate 0) returns x untouched.
    """
    if not (0.0 <= rate < 1.0):
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"dropout mode must be 'train' or 'eval', got {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode needs an RngStream")
    keep = (rng.random(x.data.shape) >= rate) / (1.0 - rate)
    out = x.data * keep
    if not _recording(x):
        return _plain(out)

    def bw(g):
        _accum(x, g * keep)

    return _node(out, (x,), bw)


# ---------------------------------------------------------------------------
# backward engine


def backward(loss: Tensor) -> None:
    """Reverse-mode sweep from a scalar loss.

    Gradients accumulate (+=) into every reachable tensor with
    requires_grad, so shared parameters collect one contribution per use.
    A graph can only be swept once; rebuild the forward pass to sweep again.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    if loss._done:
        raise RuntimeError(
            "backward was already run on this graph; rebuild the forward pass first"
        )
    loss._done = True

    topo: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    _accum(loss, np.ones_like(loss.data))
    for node in reversed(topo):
        if node._bw is not None and node.grad is not None:
            node._bw(node.grad)
            if node is not loss:
                node.grad = None  # interior buffers are transient


# ---------------------------------------------------------------------------
# randomness


class RngStream:
    """Deterministic random stream: identical seeds, identical draws.

    Thin wrapper over numpy's PCG64 generator.  fork(key) derives an
    independent child stream reproducibly, without consuming this one.
    """

    __slots__ = ("seed", "_gen")

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def random(self, shape=None) -> np.ndarray:
        return self._gen.random(shape)

    def normal(self, shape=None, scale: float = 1.0) -> np.ndarray:
        return self._gen.normal(0.0, scale, shape)

    def uniform(self, low: float, high: float, shape=None) -> np.ndarray:
        return self._gen.uniform(low, high, shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def fork(self, key: int) -> "RngStream":
        words = np.random.SeedSequence([self.seed, int(key)]).generate_state(2)
        return RngStream((int(words[0]) << 32) | int(words[1]))


# ---------------------------------------------------------------------------
# parameters


class ParamStore:
    """Ordered mapping from unique names to trainable tensors."""

    def __init__(self):
        self._entries: dict[str, Tensor] = {}

    def add(self, name: str, t: Tensor) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter name: {name!r}")
        if not t.requires_grad:
            raise ValueError(f"parameter {name!r} must have requires_grad=True")
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(self._entries)

    def names(self):
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def tensors(self):
        return self._entries.values()

    def n_scalars(self) -> int:
        return sum(t.data.size for t in self._entries.values())

    def zero_grads(self) -> None:
        """Give every parameter a zeroed gradient buffer."""
        for t in self._entries.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)
            else:
                t.grad.fill(0.0)

    def clear_grads(self) -> None:
        for t in self._entries.values():
            t.grad = None

    def copy(self) -> "ParamStore":
        """Deep copy of values; gradients are not carried over."""
        out = ParamStore()
        for name, t in self._entries.items():
            out.add(name, Tensor(t.data.copy(), requires_grad=True))
        return out

    def load_values(self, other: "ParamStore") -> None:
        """Overwrite values in place from a store with identical names/shapes."""
        if other.names() != self.names():
            raise ValueError("parameter stores have different entries")
        for name, t in self._entries.items():
            src = other[name]
            if src.data.shape != t.data.shape:
                raise ValueError(f"shape mismatch for {name!r}")
            t.data[...] = src.data


# ---------------------------------------------------------------------------
# gradient checking


def grad_check(
    f: Callable[[], Tensor], store: ParamStore, eps: float = 1e-4,
    scale_floor: float = 1e-3,
) -> float:
    """Compare analytic gradients of f against central-difference estimates.

    f must rebuild its graph on every call, close over the tensors in
    ``store``, be deterministic, and return a scalar.  Each element's
    estimate Richardson-combines the central differences at steps eps and
    2*eps, (4*cd(eps) - cd(2*eps)) / 3, which cancels the O(eps^2)
    truncation term; with the plain two-point formula the deeper models'
    small-gradient elements bottom out near 1e-5 relative error from
    float64 cancellation alone.  Returns the maximum relative error over
    every parameter element.  Error denominators are floored at
    ``scale_floor`` times the largest gradient magnitude (with a 1e-12
    absolute guard): a central difference carries rounding noise of order
    eps_mach * |f| / eps however small the true derivative is, so an
    element far below the gradient's overall scale would otherwise report
    that noise as disagreement.  At the defaults the floor still amounts
    to an absolute tolerance orders of magnitude below any plausible
    formula error.
    """
    if not (1e-7 <= eps <= 1e-4):
        raise ValueError(f"grad_check eps must lie in [1e-7, 1e-4], got {eps}")
    if not (0.0 <= scale_floor < 1.0):
        raise ValueError(f"scale_floor must lie in [0, 1), got {scale_floor}")
    with no_grad():
        v1 = float(f().data)
        v2 = float(f().data)
    if v1 != v2:
        raise RuntimeError(
            f"grad_check needs a deterministic function; two evaluations gave {v1} and {v2}"
        )

    store.zero_grads()
    backward(f())
    g_max = 0.0
    for t in store.tensors():
        if t.grad.size:
            g_max = max(g_max, float(np.abs(t.grad).max()))
    floor = max(1e-12, scale_floor * g_max)
    max_rel = 0.0
    with no_grad():
        for name, t in store.items():
            flat = t.data.reshape(-1)
            gflat = t.grad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                fp1 = float(f().data)
                flat[i] = orig - eps
                fm1 = float(f().data)
                flat[i] = orig + 2.0 * eps
                fp2 = float(f().data)
                flat[i] = orig - 2.0 * eps
                fm2 = float(f().data)
                flat[i] = orig
                cd1 = (fp1 - fm1) / (2.0 * eps)
                cd2 = (fp2 - fm2) / (4.0 * eps)
                cd = (4.0 * cd1 - cd2) / 3.0
                a = gflat[i]
                rel = abs(a - cd) / max(abs(a), abs(cd), floor)
                if rel > max_rel:
                    max_rel = rel
    return max_rel
