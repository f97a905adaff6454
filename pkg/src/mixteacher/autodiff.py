"""Reverse-mode automatic differentiation over numpy arrays.

A small tape: `Tensor` wraps an ndarray and remembers how it was produced;
`backward()` walks the graph in reverse topological order. Only the ops the
detector needs are implemented. Gradients accumulate in `.grad` for tensors
created with ``requires_grad=True``. Wrap teacher-side inference in
`no_grad()` to skip graph construction entirely.
"""

import contextlib

import numpy as np

from . import kernels

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient over axes that were broadcast in the forward op."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def backward(self) -> None:
        """Accumulate gradients of this (scalar or any-shape) tensor's sum."""
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(topo):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node.requires_grad:
                node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None:
                    continue
                if id(parent) in grads:
                    grads[id(parent)] = grads[id(parent)] + pg
                else:
                    grads[id(parent)] = pg

    # -- operator sugar -------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)

    def reshape(self, *shape):
        return reshape(self, shape)

    def sum(self, axis=None, keepdims=False):
        return reduce_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return reduce_mean(self, axis, keepdims)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn) -> Tensor:
    out = Tensor(data)
    if _grad_enabled and any(
            p.requires_grad or p._parents for p in parents):
        out._parents = parents
        out._backward = backward_fn
    return out


# -- elementwise ---------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data + b.data
    return _node(data, (a, b), lambda g: (
        _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    data = a.data * b.data
    return _node(data, (a, b), lambda g: (
        _unbroadcast(g * b.data, a.data.shape),
        _unbroadcast(g * a.data, b.data.shape)))


def power(a, exponent: float) -> Tensor:
    a = as_tensor(a)
    data = a.data ** exponent
    return _node(data, (a,),
                 lambda g: (g * exponent * a.data ** (exponent - 1.0),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(np.where(mask, a.data, 0.0).astype(a.data.dtype),
                 (a,), lambda g: (g * mask,))


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    s = np.empty_like(a.data)
    pos = a.data >= 0
    s[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ez = np.exp(a.data[~pos])
    s[~pos] = ez / (1.0 + ez)
    return _node(s, (a,), lambda g: (g * s * (1.0 - s),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    data = np.exp(a.data)
    return _node(data, (a,), lambda g: (g * data,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    data = np.sqrt(a.data)
    return _node(data, (a,), lambda g: (g * 0.5 / data,))


# -- shape ops ------------------------------------------------------------

def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.data.shape
    return _node(a.data.reshape(shape), (a,),
                 lambda g: (g.reshape(old),))


def transpose(a, axes) -> Tensor:
    a = as_tensor(a)
    inv = np.argsort(axes)
    return _node(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                 lambda g: (g.transpose(inv),))


def concat(tensors, axis=0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(g):
        return tuple(np.split(g, splits, axis=axis))

    return _node(np.concatenate([t.data for t in tensors], axis=axis),
                 tuple(tensors), backward)


def take(a, idx) -> Tensor:
    """Index/slice; integer-array indexing scatters gradients with add.at."""
    a = as_tensor(a)
    data = a.data[idx]

    def backward(g):
        out = np.zeros_like(a.data)
        np.add.at(out, idx, g)
        return (out,)

    return _node(data.copy() if isinstance(data, np.ndarray) else data,
                 (a,), backward)


def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            return (np.broadcast_to(g, a.data.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.data.shape).copy(),)

    return _node(data, (a,), backward)


def reduce_mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.data.size
    elif isinstance(axis, tuple):
        count = int(np.prod([a.data.shape[ax] for ax in axis]))
    else:
        count = a.data.shape[axis]
    return mul(reduce_sum(a, axis, keepdims), 1.0 / count)


# -- linear algebra / conv ------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data @ b.data, (a, b), lambda g: (
        g @ b.data.T, a.data.T @ g))


def linear(x, w, b=None) -> Tensor:
    """x (N,Din) @ w (Din,Dout) + b."""
    out = matmul(x, w)
    if b is not None:
        out = add(out, b)
    return out


def conv2d(x, w, b=None, stride=1, pad=0) -> Tensor:
    """2-d convolution via im2col; x (B,C,H,W), w (Cout,Cin,k,k), b (Cout,)."""
    x, w = as_tensor(x), as_tensor(w)
    bs, cin, h, wid = x.data.shape
    cout, _, k, _ = w.data.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wid + 2 * pad - k) // stride + 1
    cols = kernels.im2col(x.data, k, stride, pad)
    w2d = w.data.reshape(cout, -1).T
    out2d = cols @ w2d
    data = out2d.reshape(bs, ho, wo, cout).transpose(0, 3, 1, 2)

    def backward(g):
        g2d = np.ascontiguousarray(g.transpose(0, 2, 3, 1)).reshape(-1, cout)
        dw = (cols.T @ g2d).T.reshape(w.data.shape)
        dx = kernels.col2im(g2d @ w2d.T, x.data.shape, k, stride, pad)
        return dx, dw

    out = _node(np.ascontiguousarray(data), (x, w), backward)
    if b is not None:
        out = add(out, reshape(as_tensor(b), (1, cout, 1, 1)))
    return out


def upsample2x(a) -> Tensor:
    """Nearest-neighbor 2x spatial upsampling of (B,C,H,W)."""
    a = as_tensor(a)
    data = a.data.repeat(2, axis=2).repeat(2, axis=3)
    bs, c, h, w = a.data.shape

    def backward(g):
        return (g.reshape(bs, c, h, 2, w, 2).sum(axis=(3, 5)),)

    return _node(data, (a,), backward)


def roi_align(feat, rois: np.ndarray, out_size: int) -> Tensor:
    """Differentiable-in-features region pooling; roi boxes are constants."""
    feat = as_tensor(feat)
    rois = np.ascontiguousarray(rois, dtype=feat.data.dtype)
    data = kernels.roi_align(feat.data, rois, out_size)

    def backward(g):
        return (kernels.roi_align_grad(np.ascontiguousarray(g),
                                       feat.data.shape, rois),)

    return _node(data, (feat,), backward)


def group_norm(x, gamma, beta, num_groups: int, eps: float = 1e-5) -> Tensor:
    """Group normalization over (B,C,H,W), built from primitive ops."""
    bs, c, h, w = x.data.shape if isinstance(x, Tensor) else np.shape(x)
    g = num_groups
    xg = reshape(x, (bs, g, (c // g) * h * w))
    mu = reduce_mean(xg, axis=2, keepdims=True)
    diff = xg - mu
    var = reduce_mean(mul(diff, diff), axis=2, keepdims=True)
    norm = mul(diff, power(add(var, eps), -0.5))
    norm = reshape(norm, (bs, c, h, w))
    return add(mul(norm, reshape(gamma, (1, c, 1, 1))),
               reshape(beta, (1, c, 1, 1)))


# -- fused losses ----------------------------------------------------------

def softmax(logits: np.ndarray) -> np.ndarray:
    """Plain-numpy softmax over the last axis (inference helper)."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits, labels: np.ndarray) -> Tensor:
    """Per-row cross entropy; logits (N,K), integer labels (N,) -> (N,)."""
    logits = as_tensor(logits)
    n = logits.data.shape[0]
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1))
    data = lse - z[np.arange(n), labels]

    def backward(g):
        p = np.exp(z)
        p /= p.sum(axis=1, keepdims=True)
        p[np.arange(n), labels] -= 1.0
        return (p * g[:, None],)

    return _node(data, (logits,), backward)


def bce_with_logits(logits, targets: np.ndarray) -> Tensor:
    """Elementwise binary cross entropy on logits; targets in [0,1]."""
    logits = as_tensor(logits)
    z = logits.data
    targets = np.asarray(targets, dtype=z.dtype)
    data = np.maximum(z, 0) - z * targets + np.log1p(np.exp(-np.abs(z)))

    def backward(g):
        s = np.empty_like(z)
        pos = z >= 0
        s[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
        ez = np.exp(z[~pos])
        s[~pos] = ez / (1.0 + ez)
        return (g * (s - targets),)

    return _node(data, (logits,), backward)


def smooth_l1(pred, target: np.ndarray, beta: float = 1.0) -> Tensor:
    """Elementwise smooth-L1 (Huber) loss against a constant target."""
    pred = as_tensor(pred)
    diff = pred.data - np.asarray(target, dtype=pred.data.dtype)
    ad = np.abs(diff)
    data = np.where(ad < beta, 0.5 * diff * diff / beta, ad - 0.5 * beta)

    def backward(g):
        return (g * np.clip(diff / beta, -1.0, 1.0),)

    return _node(data, (pred,), backward)
