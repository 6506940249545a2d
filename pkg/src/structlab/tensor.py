"""Dense-tensor arithmetic with reverse-mode autodiff.

Tensors wrap numpy arrays (float32 storage by default; pass float64 arrays
for verification-grade accumulation). Every op records a backward closure;
``backward(loss)`` runs the closures in reverse topological order and
accumulates gradients into the ``grad`` slot of each tensor created with
``requires_grad=True``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """A dense array plus an optional gradient slot and graph linkage."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, _parents=(), _backward=None):
        self.data = np.asarray(data)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float32)
        if any(d == 0 for d in self.data.shape):
            raise ValueError(f"zero-sized dimension in shape {self.data.shape}")
        self.requires_grad = requires_grad
        self.grad = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _tracked(*tensors) -> bool:
    return any(t.requires_grad or t._parents for t in tensors)


def _accum(t: Tensor, g: np.ndarray):
    """Add g into t's gradient slot (lazily allocated)."""
    if not (t.requires_grad or t._parents):
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape` (reverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def backward(loss: Tensor):
    """Reverse-mode pass from a scalar loss; fills .grad on reachable tensors."""
    if loss.data.size != 1:
        raise ValueError(f"backward requires a scalar loss, got shape {loss.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ---------------------------------------------------------------------------
# elementwise / broadcast ops
# ---------------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data + b.data
    if not _tracked(a, b):
        return Tensor(out_data)

    def bwd(g):
        _accum(a, _unbroadcast(g, a.shape))
        _accum(b, _unbroadcast(g, b.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data * b.data
    if not _tracked(a, b):
        return Tensor(out_data)

    def bwd(g):
        _accum(a, _unbroadcast(g * b.data, a.shape))
        _accum(b, _unbroadcast(g * a.data, b.shape))

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


def scale(a: Tensor, s: float) -> Tensor:
    out_data = a.data * s
    if not _tracked(a):
        return Tensor(out_data)

    def bwd(g):
        _accum(a, g * s)

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def gelu(a: Tensor) -> Tensor:
    """y = x * Phi(x), exact normal-CDF form."""
    x = a.data
    cdf = 0.5 * (1.0 + erf(x * _INV_SQRT2))
    out_data = (x * cdf).astype(x.dtype)
    if not _tracked(a):
        return Tensor(out_data)

    def bwd(g):
        pdf = np.exp(-0.5 * x * x) * _INV_SQRT2PI
        _accum(a, g * (cdf + x * pdf).astype(x.dtype))

    return Tensor(out_data, _parents=(a,), _backward=bwd)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """a (n,k) @ b (k,m) -> (n,m)."""
    a, b = _as_tensor(a), _as_tensor(b)
    out_data = a.data @ b.data
    if not _tracked(a, b):
        return Tensor(out_data)

    def bwd(g):
        _accum(a, g @ b.data.T)
        _accum(b, a.data.T @ g)

    return Tensor(out_data, _parents=(a, b), _backward=bwd)


def transpose(a: Tensor) -> Tensor:
    out_data = a.data.T
    if not _tracked(a):
        return Tensor(out_data)

    def bwd(g):
        _accum(a, g.T)

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def gather_rows(a: Tensor, idx) -> Tensor:
    """Select rows a[idx]; backward scatter-adds. Used for embedding lookup too."""
    idx = np.asarray(idx, dtype=np.intp)
    out_data = a.data[idx]
    if not _tracked(a):
        return Tensor(out_data)

    def bwd(g):
        ga = np.zeros_like(a.data)
        np.add.at(ga, idx, g)
        _accum(a, ga)

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def embedding(table: Tensor, ids) -> Tensor:
    return gather_rows(table, ids)


# ---------------------------------------------------------------------------
# normalization / reductions / loss
# ---------------------------------------------------------------------------


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale + shift."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = (xhat * gain.data + bias.data).astype(x.dtype)
    if not _tracked(a, gain, bias):
        return Tensor(out_data)

    def bwd(g):
        n = x.shape[-1]
        _accum(gain, _unbroadcast(g * xhat, gain.shape))
        _accum(bias, _unbroadcast(g, bias.shape))
        gx_hat = g * gain.data
        # d/dx of (x - mu) * inv with mu, inv functions of x
        term = gx_hat - gx_hat.mean(axis=-1, keepdims=True) - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True)
        _accum(a, (term * inv).astype(x.dtype))

    return Tensor(out_data, _parents=(a, gain, bias), _backward=bwd)


def mean_all(a: Tensor) -> Tensor:
    out_data = np.asarray(a.data.mean(), dtype=a.data.dtype)
    if not _tracked(a):
        return Tensor(out_data)

    def bwd(g):
        _accum(a, np.full_like(a.data, g / a.data.size))

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def sum_all(a: Tensor) -> Tensor:
    out_data = np.asarray(a.data.sum(), dtype=a.data.dtype)
    if not _tracked(a):
        return Tensor(out_data)

    def bwd(g):
        _accum(a, np.full_like(a.data, g))

    return Tensor(out_data, _parents=(a,), _backward=bwd)


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Stable row softmax on a plain array (no graph)."""
    m = x.max(axis=-1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: Tensor, targets) -> tuple[Tensor, np.ndarray]:
    """Mean cross-entropy of logits (n, c) against integer targets (n,).

    Returns (scalar loss, probs array) -- probs are detached, handy for
    accuracy bookkeeping.
    """
    targets = np.asarray(targets, dtype=np.intp)
    if logits.data.ndim != 2 or targets.shape != (logits.data.shape[0],):
        raise ValueError("logits must be (n, c) with targets (n,)")
    n = logits.data.shape[0]
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    ez = np.exp(z - m)
    sez = ez.sum(axis=1, keepdims=True)
    probs = ez / sez
    logp = (z - m) - np.log(sez)
    nll = -logp[np.arange(n), targets]
    out_data = np.asarray(nll.mean(), dtype=z.dtype)
    if not _tracked(logits):
        return Tensor(out_data), probs

    def bwd(g):
        gl = probs.copy()
        gl[np.arange(n), targets] -= 1.0
        _accum(logits, (gl * (g / n)).astype(z.dtype))

    return Tensor(out_data, _parents=(logits,), _backward=bwd), probs


# ---------------------------------------------------------------------------
# attention and dropout
# ---------------------------------------------------------------------------


def attention(q: Tensor, k: Tensor, v: Tensor, key_mask: np.ndarray, n_heads: int) -> Tensor:
    """Bidirectional multi-head attention.

    q, k, v: (B*T, H) row-flattened projections; key_mask: (B, T) bool,
    True where the position is a real token. Keys at masked positions get
    -inf logits; padded query rows still produce (ignored) outputs.
    """
    batch, seqlen = key_mask.shape
    n, hidden = q.data.shape
    if n != batch * seqlen or hidden % n_heads != 0:
        raise ValueError("attention shape mismatch")
    dh = hidden // n_heads
    dt = q.data.dtype
    sc = 1.0 / math.sqrt(dh)

    qh = q.data.reshape(batch, seqlen, n_heads, dh)
    kh = k.data.reshape(batch, seqlen, n_heads, dh)
    vh = v.data.reshape(batch, seqlen, n_heads, dh)
    # scores (B, A, Tq, Tk)
    scores = np.einsum("bqhd,bkhd->bhqk", qh, kh) * sc
    neg = np.asarray(np.finfo(dt).min, dtype=dt)
    scores = np.where(key_mask[:, None, None, :], scores, neg)
    weights = softmax_rows(scores)
    out = np.einsum("bhqk,bkhd->bqhd", weights, vh)
    out_data = out.reshape(n, hidden).astype(dt)
    if not _tracked(q, k, v):
        return Tensor(out_data)

    def bwd(g):
        gh = g.reshape(batch, seqlen, n_heads, dh)
        gw = np.einsum("bqhd,bkhd->bhqk", gh, vh)
        gs = weights * (gw - (weights * gw).sum(axis=-1, keepdims=True))
        gq = np.einsum("bhqk,bkhd->bqhd", gs, kh) * sc
        gk = np.einsum("bhqk,bqhd->bkhd", gs, qh) * sc
        gv = np.einsum("bhqk,bqhd->bkhd", weights, gh)
        _accum(q, gq.reshape(n, hidden).astype(dt))
        _accum(k, gk.reshape(n, hidden).astype(dt))
        _accum(v, gv.reshape(n, hidden).astype(dt))

    return Tensor(out_data, _parents=(q, k, v), _backward=bwd)


def dropout(a: Tensor, rate: float, rng: np.random.Generator | None) -> Tensor:
    """Inverted dropout; identity when rng is None (eval mode) or rate == 0."""
    if rng is None or rate <= 0.0:
        return a
    keep = (rng.random(a.data.shape) >= rate).astype(a.data.dtype) / (1.0 - rate)
    return mul(a, Tensor(keep))


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x (n, in) @ w (in, out) + b (out,)."""
    return add(matmul(x, w), b)
