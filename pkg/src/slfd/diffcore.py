"""Reverse-mode automatic differentiation over dense float64 arrays.

Every backward rule is written in terms of the same differentiable ops, so
running a backward pass with ``create_graph=True`` records the gradient
computation itself. Differentiating a function of those gradients gives exact
second-order mixed derivatives, which is what gradient matching needs.

Nodes get a monotonically increasing id when they are created. Inputs are
always created before outputs, so sorting by id is a topological order.
"""
from __future__ import annotations

import itertools
import threading
from contextlib import contextmanager

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

__all__ = [
    "Tensor", "ShapeError", "GradError", "tensor", "parameter", "as_tensor",
    "no_grad", "enable_grad", "is_grad_enabled", "grad", "grad_of_grad",
    "forward_op", "OPS", "trace",
    "add", "sub", "neg", "mul", "div", "power", "exp", "log", "sqrt", "relu",
    "tanh", "sigmoid", "softplus", "matmul", "affine", "sum", "mean",
    "reshape", "transpose", "swap_last", "broadcast_to", "sum_to", "concat",
    "stack", "take", "softmax", "logsumexp", "log_softmax", "dot", "l2norm",
    "conv2d", "conv2d_weight_grad", "flip_kernel", "avgpool2", "upsample2",
    "cross_entropy",
]

_ids = itertools.count()
_mode = threading.local()


class ShapeError(ValueError):
    """Raised when an op receives inputs whose shapes do not conform."""

    def __init__(self, op, *shapes, detail=""):
        self.op = op
        self.shapes = shapes
        msg = f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class GradError(RuntimeError):
    """Raised for invalid gradient requests."""


def is_grad_enabled():
    return getattr(_mode, "enabled", True)


@contextmanager
def _grad_mode(flag):
    prev = is_grad_enabled()
    _mode.enabled = flag
    try:
        yield
    finally:
        _mode.enabled = prev


def no_grad():
    return _grad_mode(False)


def enable_grad():
    return _grad_mode(True)


class Tensor:
    """A float64 array that may carry a differentiation history.

    ``parents`` and ``backward_fn`` are only populated when the tensor was
    produced while grad mode was on and at least one input required grad.
    """

    __slots__ = ("data", "requires_grad", "parents", "backward_fn", "op",
                 "node_id", "higher", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.parents = ()
        self.backward_fn = None
        self.op = "leaf"
        self.node_id = next(_ids)
        # set on tensors that depend on a create_graph backward pass
        self.higher = False
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self.backward_fn is None

    def numpy(self):
        return self.data

    def item(self):
        if self.data.size != 1:
            raise ValueError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        tag = f", name={self.name!r}" if self.name else ""
        rg = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{rg}{tag})"

    def __len__(self):
        return len(self.data)

    # operator sugar
    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __pow__(self, p): return power(self, p)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, idx): return take(self, idx)

    def sum(self, axis=None, keepdims=False): return sum(self, axis, keepdims)
    def mean(self, axis=None, keepdims=False): return mean(self, axis, keepdims)
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)
    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)
    def relu(self): return relu(self)
    def exp(self): return exp(self)
    def log(self): return log(self)


def tensor(data, requires_grad=False, name=None):
    return Tensor(data, requires_grad=requires_grad, name=name)


def parameter(data, name=None):
    """A trainable leaf."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, backward_fn, op):
    out = Tensor(data)
    out.op = op
    if any(p.higher for p in parents):
        out.higher = True
    if any(p.requires_grad for p in parents) and is_grad_enabled():
        out.requires_grad = True
        out.parents = parents
        out.backward_fn = backward_fn
    return out


# --------------------------------------------------------------------------
# broadcasting helpers


def _reduce_axes(from_shape, to_shape):
    """Axes to sum (and keep) so that ``from_shape`` reduces to ``to_shape``."""
    lead = len(from_shape) - len(to_shape)
    if lead < 0:
        raise ShapeError("sum_to", from_shape, to_shape)
    axes = list(range(lead))
    for i, n in enumerate(to_shape):
        if n == 1 and from_shape[lead + i] != 1:
            axes.append(lead + i)
        elif n != from_shape[lead + i] and n != 1:
            raise ShapeError("sum_to", from_shape, to_shape)
    return tuple(axes), lead


def sum_to(x, shape):
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    axes, lead = _reduce_axes(x.shape, shape)
    data = x.data.sum(axis=axes, keepdims=True)
    if lead:
        data = data.reshape(shape)
    in_shape = x.shape

    def backward(g, needs):
        return (broadcast_to(g, in_shape),)

    return _node(data, (x,), backward, "sum_to")


def broadcast_to(x, shape):
    x = as_tensor(x)
    shape = tuple(shape)
    if x.shape == shape:
        return x
    try:
        data = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError("broadcast", x.shape, shape) from None
    in_shape = x.shape

    def backward(g, needs):
        return (sum_to(g, in_shape),)

    return _node(data, (x,), backward, "broadcast")


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape) from None


# --------------------------------------------------------------------------
# elementwise


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape

    def backward(g, needs):
        return (sum_to(g, sa) if needs[0] else None,
                sum_to(g, sb) if needs[1] else None)

    return _node(a.data + b.data, (a, b), backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape

    def backward(g, needs):
        return (sum_to(g, sa) if needs[0] else None,
                sum_to(neg(g), sb) if needs[1] else None)

    return _node(a.data - b.data, (a, b), backward, "sub")


def neg(a):
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g, needs: (neg(g),), "neg")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)

    def backward(g, needs):
        return (sum_to(mul(g, b), a.shape) if needs[0] else None,
                sum_to(mul(g, a), b.shape) if needs[1] else None)

    return _node(a.data * b.data, (a, b), backward, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("div", a, b)

    def backward(g, needs):
        ga = sum_to(div(g, b), a.shape) if needs[0] else None
        gb = None
        if needs[1]:
            gb = sum_to(neg(div(mul(g, a), mul(b, b))), b.shape)
        return ga, gb

    return _node(a.data / b.data, (a, b), backward, "div")


def power(a, p):
    """Elementwise ``a ** p`` for a constant real exponent."""
    a = as_tensor(a)
    p = float(p)

    def backward(g, needs):
        if p == 1.0:
            return (g,)
        return (mul(g, mul(p, power(a, p - 1.0))),)

    return _node(a.data ** p, (a,), backward, "pow")


def exp(a):
    a = as_tensor(a)
    out = None

    def backward(g, needs):
        return (mul(g, out),)

    out = _node(np.exp(a.data), (a,), backward, "exp")
    return out


def log(a):
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g, needs: (div(g, a),), "log")


def sqrt(a):
    a = as_tensor(a)
    out = None

    def backward(g, needs):
        return (div(mul(g, 0.5), out),)

    out = _node(np.sqrt(a.data), (a,), backward, "sqrt")
    return out


def relu(a):
    a = as_tensor(a)
    mask = (a.data > 0).astype(np.float64)
    return _node(a.data * mask, (a,), lambda g, needs: (mul(g, mask),), "relu")


def tanh(a):
    a = as_tensor(a)
    out = None

    def backward(g, needs):
        return (mul(g, sub(1.0, mul(out, out))),)

    out = _node(np.tanh(a.data), (a,), backward, "tanh")
    return out


def sigmoid(a):
    a = as_tensor(a)
    out = None

    def backward(g, needs):
        return (mul(g, mul(out, sub(1.0, out))),)

    x = a.data
    data = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                    np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = _node(data, (a,), backward, "sigmoid")
    return out


def softplus(a):
    a = as_tensor(a)
    x = a.data
    data = np.maximum(x, 0.0) + np.log1p(np.exp(-np.abs(x)))
    return _node(data, (a,), lambda g, needs: (mul(g, sigmoid(a)),), "softplus")


# --------------------------------------------------------------------------
# linear algebra and reductions


def swap_last(a):
    a = as_tensor(a)
    if a.ndim < 2:
        raise ShapeError("swap_last", a.shape, detail="need at least 2 dims")
    return _node(np.swapaxes(a.data, -1, -2), (a,),
                 lambda g, needs: (swap_last(g),), "swap_last")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError("matmul", a.shape, b.shape)
    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape) from None

    def backward(g, needs):
        ga = sum_to(matmul(g, swap_last(b)), a.shape) if needs[0] else None
        gb = sum_to(matmul(swap_last(a), g), b.shape) if needs[1] else None
        return ga, gb

    return _node(data, (a, b), backward, "matmul")


def affine(x, weight, bias=None):
    """``x @ weight + bias`` over the last axis of ``x``."""
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-1] != weight.shape[0]:
        raise ShapeError("affine", x.shape, weight.shape)
    out = matmul(x, weight)
    return out if bias is None else add(out, bias)


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(a % ndim for a in axis))


def sum(a, axis=None, keepdims=False):  # noqa: A001
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    data = a.data.sum(axis=axes, keepdims=keepdims)
    in_shape = a.shape
    kept = tuple(1 if i in axes else n for i, n in enumerate(in_shape))

    def backward(g, needs):
        if not keepdims:
            g = reshape(g, kept)
        return (broadcast_to(g, in_shape),)

    return _node(data, (a,), backward, "sum")


def mean(a, axis=None, keepdims=False):
    a = as_tensor(a)
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    return mul(sum(a, axis, keepdims), 1.0 / count)


def dot(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError("dot", a.shape, b.shape)
    return sum(mul(a, b))


def l2norm(a):
    return sqrt(dot(a, a))


# --------------------------------------------------------------------------
# shape manipulation


def reshape(a, shape):
    a = as_tensor(a)
    shape = tuple(shape)
    try:
        data = a.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", a.shape, shape) from None
    in_shape = a.shape
    return _node(data, (a,), lambda g, needs: (reshape(g, in_shape),), "reshape")


def transpose(a, axes=None):
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError("transpose", a.shape, detail=f"axes {axes}")
    inverse = tuple(np.argsort(axes))
    return _node(np.transpose(a.data, axes), (a,),
                 lambda g, needs: (transpose(g, inverse),), "transpose")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError("concat", *(t.shape for t in tensors)) from None
    ax = axis % data.ndim
    bounds = np.cumsum([0] + [t.shape[ax] for t in tensors])

    def backward(g, needs):
        out = []
        for i, need in enumerate(needs):
            if not need:
                out.append(None)
                continue
            idx = (slice(None),) * ax + (slice(int(bounds[i]), int(bounds[i + 1])),)
            out.append(take(g, idx))
        return tuple(out)

    return _node(data, tuple(tensors), backward, "concat")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError("stack", *(t.shape for t in tensors))
    ax = axis % (tensors[0].ndim + 1)
    expanded = [reshape(t, t.shape[:ax] + (1,) + t.shape[ax:]) for t in tensors]
    return concat(expanded, axis=ax)


def _is_basic_index(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer)) or i is None or i is Ellipsis
               for i in items)


def take(a, idx):
    """Differentiable ``a[idx]`` for basic and integer-array indexing."""
    a = as_tensor(a)
    try:
        data = a.data[idx]
    except IndexError as exc:
        raise ShapeError("index", a.shape, detail=str(exc)) from None
    if not isinstance(data, np.ndarray):
        data = np.asarray(data)
    else:
        data = data.copy()
    in_shape = a.shape
    return _node(data, (a,), lambda g, needs: (_index_add(g, idx, in_shape),), "index")


def _index_add(g, idx, shape):
    """Adjoint of ``take``: scatter-add ``g`` into zeros of ``shape``."""
    g = as_tensor(g)
    data = np.zeros(shape)
    if _is_basic_index(idx):
        data[idx] = g.data
    else:
        np.add.at(data, idx, g.data)
    return _node(data, (g,), lambda h, needs: (take(h, idx),), "index_add")


# --------------------------------------------------------------------------
# normalizers


def softmax(a, axis=-1):
    a = as_tensor(a)
    x = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(x)
    data = e / e.sum(axis=axis, keepdims=True)
    out = None

    def backward(g, needs):
        inner = sum(mul(g, out), axis=axis, keepdims=True)
        return (mul(out, sub(g, inner)),)

    out = _node(data, (a,), backward, "softmax")
    return out


def logsumexp(a, axis=-1, keepdims=False):
    a = as_tensor(a)
    m = a.data.max(axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    data = np.log(np.exp(a.data - m).sum(axis=axis, keepdims=True)) + m
    if not keepdims:
        data = np.squeeze(data, axis=axis)
    in_shape = a.shape
    ax = axis % a.ndim
    kept = in_shape[:ax] + (1,) + in_shape[ax + 1:]

    def backward(g, needs):
        if not keepdims:
            g = reshape(g, kept)
        return (mul(g, softmax(a, axis=ax)),)

    return _node(data, (a,), backward, "logsumexp")


def log_softmax(a, axis=-1):
    a = as_tensor(a)
    return sub(a, logsumexp(a, axis=axis, keepdims=True))


def cross_entropy(logits, labels):
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError("cross_entropy", logits.shape, labels.shape)
    logp = log_softmax(logits, axis=-1)
    picked = take(logp, (np.arange(len(labels)), labels))
    return neg(mean(picked))


# --------------------------------------------------------------------------
# convolution and resampling (NCHW)


def _windows3(x):
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    return sliding_window_view(xp, (3, 3), axis=(2, 3))  # N,C,H,W,3,3


def conv2d(x, w):
    """3x3 cross-correlation, stride 1, zero padding 1. x: N,C,H,W; w: O,C,3,3."""
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 4 or w.ndim != 4 or w.shape[2:] != (3, 3) or x.shape[1] != w.shape[1]:
        raise ShapeError("conv2d-3x3", x.shape, w.shape)
    cols = _windows3(x.data)
    data = np.tensordot(cols, w.data, axes=([1, 4, 5], [1, 2, 3]))
    data = np.ascontiguousarray(data.transpose(0, 3, 1, 2))

    def backward(g, needs):
        gx = conv2d(g, flip_kernel(w)) if needs[0] else None
        gw = conv2d_weight_grad(x, g) if needs[1] else None
        return gx, gw

    return _node(data, (x, w), backward, "conv2d-3x3")


def conv2d_weight_grad(x, g):
    """Kernel gradient of ``conv2d``: sum over n,i,j of g[n,o,i,j] * xpad[n,c,i+a,j+b]."""
    x, g = as_tensor(x), as_tensor(g)
    if x.ndim != 4 or g.ndim != 4 or x.shape[0] != g.shape[0] or x.shape[2:] != g.shape[2:]:
        raise ShapeError("conv2d-wgrad", x.shape, g.shape)
    cols = _windows3(x.data)
    data = np.tensordot(g.data, cols, axes=([0, 2, 3], [0, 2, 3]))

    def backward(h, needs):
        gx = conv2d(g, flip_kernel(h)) if needs[0] else None
        gg = conv2d(x, h) if needs[1] else None
        return gx, gg

    return _node(data, (x, g), backward, "conv2d-wgrad")


def flip_kernel(w):
    """Swap in/out channels and rotate 180 degrees; this map is its own adjoint."""
    w = as_tensor(w)
    data = np.ascontiguousarray(w.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return _node(data, (w,), lambda g, needs: (flip_kernel(g),), "flip_kernel")


def avgpool2(x):
    x = as_tensor(x)
    if x.ndim != 4 or x.shape[2] % 2 or x.shape[3] % 2:
        raise ShapeError("avgpool2", x.shape)
    n, c, h, w = x.shape
    data = x.data.reshape(n, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return _node(data, (x,), lambda g, needs: (mul(upsample2(g), 0.25),), "avgpool2")


def upsample2(x):
    """Nearest-neighbour 2x upsampling."""
    x = as_tensor(x)
    if x.ndim != 4:
        raise ShapeError("upsample2", x.shape)
    data = x.data.repeat(2, axis=2).repeat(2, axis=3)
    return _node(data, (x,), lambda g, needs: (mul(avgpool2(g), 4.0),), "upsample2")


# --------------------------------------------------------------------------
# dispatch

OPS = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg, "pow": power,
    "matmul": matmul, "relu": relu, "tanh": tanh, "sigmoid": sigmoid,
    "softplus": softplus, "conv2d-3x3": conv2d, "avgpool2": avgpool2,
    "upsample2": upsample2, "affine": affine, "softmax-lastdim": softmax,
    "log": log, "exp": exp, "sqrt": sqrt, "sum": sum, "mean": mean, "dot": dot,
    "l2norm": l2norm, "logsumexp-lastdim": logsumexp, "broadcast": broadcast_to,
    "reshape": reshape, "transpose": transpose, "concat": concat, "index": take,
}


def forward_op(kind, inputs, **kwargs):
    """Apply the op named ``kind`` to ``inputs``.

    List-valued ops (``concat``) take the whole list; shape-valued ops take
    their target shape as a keyword (``shape=``).
    """
    try:
        fn = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    if kind == "concat":
        return fn(inputs, **kwargs)
    return fn(*inputs, **kwargs)


# --------------------------------------------------------------------------
# backward passes


def trace(root):
    """Nodes reachable from ``root`` that require grad, in topological order."""
    seen = {}
    stack = [root]
    while stack:
        t = stack.pop()
        if id(t) in seen or not t.requires_grad:
            continue
        seen[id(t)] = t
        stack.extend(t.parents)
    return sorted(seen.values(), key=lambda t: t.node_id)


def grad(loss, leaves, create_graph=False, allow_unused=False):
    """Gradients of scalar ``loss`` with respect to each tensor in ``leaves``.

    With ``create_graph`` the returned gradients are themselves recorded and
    can be differentiated again. Otherwise they are plain constants.
    """
    if isinstance(leaves, Tensor):
        leaves = [leaves]
    leaves = list(leaves)
    if loss.size != 1:
        raise GradError(f"loss must be scalar, got shape {loss.shape}")
    for i, leaf in enumerate(leaves):
        if not leaf.requires_grad:
            raise GradError(f"leaf {i} ({leaf!r}) does not require grad")
    if not loss.requires_grad:
        if allow_unused:
            return [Tensor(np.zeros(leaf.shape)) for leaf in leaves]
        raise GradError("loss is not on the tape of any leaf")

    nodes = trace(loss)
    wanted = {id(leaf) for leaf in leaves}
    # only propagate into nodes that have some requested leaf upstream
    relevant = set()
    for t in nodes:
        if id(t) in wanted or any(id(p) in relevant for p in t.parents):
            relevant.add(id(t))
    missing = [i for i, leaf in enumerate(leaves) if id(leaf) not in relevant]
    if missing and not allow_unused:
        raise GradError(f"leaves {missing} are not on the tape of the loss")

    grads = {id(loss): Tensor(np.ones(loss.shape))}
    found = {}
    with _grad_mode(create_graph):
        for t in reversed(nodes):
            if id(t) not in relevant:
                continue
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if id(t) in wanted:
                found[id(t)] = g
            if t.backward_fn is None:
                continue
            needs = tuple(id(p) in relevant for p in t.parents)
            if not any(needs):
                continue
            pgrads = t.backward_fn(g, needs)
            for p, pg, need in zip(t.parents, pgrads, needs):
                if not need or pg is None:
                    continue
                prev = grads.get(id(p))
                grads[id(p)] = pg if prev is None else add(prev, pg)

    out = []
    for leaf in leaves:
        g = found.get(id(leaf))
        if g is None:
            g = Tensor(np.zeros(leaf.shape))
        elif create_graph:
            g.higher = True
        else:
            g = Tensor(g.data)
        out.append(g)
    return out


def grad_of_grad(outer, leaf):
    """Derivative of a scalar built from ``create_graph`` gradients."""
    if not outer.higher:
        raise GradError("outer was not built from gradients taken with create_graph=True")
    if not outer.requires_grad:
        raise GradError("outer does not depend on any tracked leaf")
    return grad(outer, [leaf])[0]
