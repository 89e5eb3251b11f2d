"""Differentiable array primitives.

Every op accepts either ``tape.Node`` operands or raw numpy arrays (python
scalars count as arrays).  With at least one Node operand the result is
recorded on that Node's tape; with raw operands the op is plain numpy.  This
lets the same formula code serve training (on tape) and monitoring/export
(numeric).
"""

import numpy as np

from apacnet.tape import Node


def value_of(x):
    return x.value if isinstance(x, Node) else np.asarray(x, dtype=np.float64)


def _tape(*xs):
    for x in xs:
        if isinstance(x, Node):
            return x.tape
    return None


def _as_node(tape, x):
    return x if isinstance(x, Node) else tape.constant(x)


def _unbroadcast(g, shape):
    """Reduce cotangent ``g`` back to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _binary(a, b, fwd, vjp_a, vjp_b):
    t = _tape(a, b)
    av, bv = value_of(a), value_of(b)
    out = fwd(av, bv)
    if t is None:
        return out
    an, bn = _as_node(t, a), _as_node(t, b)

    def vjp(g):
        ga = _unbroadcast(vjp_a(g, av, bv), av.shape) if an.requires_grad else None
        gb = _unbroadcast(vjp_b(g, av, bv), bv.shape) if bn.requires_grad else None
        return ga, gb

    return t.record(out, (an, bn), vjp)


def _unary(a, fwd, vjp_fn):
    if not isinstance(a, Node):
        return fwd(value_of(a))
    av = a.value
    out = fwd(av)
    return a.tape.record(out, (a,), lambda g: (vjp_fn(g, av, out),))


def add(a, b):
    return _binary(a, b, lambda x, y: x + y,
                   lambda g, x, y: g, lambda g, x, y: g)


def sub(a, b):
    return _binary(a, b, lambda x, y: x - y,
                   lambda g, x, y: g, lambda g, x, y: -g)


def mul(a, b):
    return _binary(a, b, lambda x, y: x * y,
                   lambda g, x, y: g * y, lambda g, x, y: g * x)


def neg(a):
    return _unary(a, lambda x: -x, lambda g, x, out: -g)


def square(a):
    return _unary(a, lambda x: x * x, lambda g, x, out: 2.0 * x * g)


def sqrt(a):
    return _unary(a, np.sqrt, lambda g, x, out: 0.5 * g / out)


def powc(a, p):
    """a ** p for a constant exponent p."""
    return _unary(a, lambda x: x ** p, lambda g, x, out: p * x ** (p - 1.0) * g)


def log(a):
    return _unary(a, np.log, lambda g, x, out: g / x)


def exp(a):
    return _unary(a, np.exp, lambda g, x, out: g * out)


def sin(a):
    return _unary(a, np.sin, lambda g, x, out: g * np.cos(x))


def cos(a):
    return _unary(a, np.cos, lambda g, x, out: -g * np.sin(x))


def tanh(a):
    return _unary(a, np.tanh, lambda g, x, out: g * (1.0 - out * out))


def relu(a):
    return _unary(a, lambda x: np.maximum(x, 0.0),
                  lambda g, x, out: g * (x > 0.0))


def absval(a):
    return _unary(a, np.abs, lambda g, x, out: g * np.sign(x))


def maximum_const(a, c):
    """max(a, c) elementwise; gradient passes only where a > c."""
    return _unary(a, lambda x: np.maximum(x, c),
                  lambda g, x, out: g * (x > c))


def sum_last(a):
    return _unary(a, lambda x: x.sum(axis=-1),
                  lambda g, x, out: np.broadcast_to(g[..., None], x.shape))


def sum_axis(a, axis):
    def fwd(x):
        return x.sum(axis=axis)

    def vjp(g, x, out):
        return np.broadcast_to(np.expand_dims(g, axis), x.shape)

    return _unary(a, fwd, vjp)


def mean_axis(a, axis):
    def fwd(x):
        return x.mean(axis=axis)

    def vjp(g, x, out):
        return np.broadcast_to(np.expand_dims(g, axis), x.shape) / x.shape[axis]

    return _unary(a, fwd, vjp)


def mean_all(a):
    def vjp(g, x, out):
        return np.full(x.shape, float(g) / x.size)

    return _unary(a, lambda x: np.asarray(x.mean()), vjp)


def reshape(a, shape):
    return _unary(a, lambda x: x.reshape(shape),
                  lambda g, x, out: g.reshape(x.shape))


def slice_last(a, lo, hi):
    def vjp(g, x, out):
        full = np.zeros_like(x)
        full[..., lo:hi] = g
        return full

    return _unary(a, lambda x: x[..., lo:hi], vjp)


def slice_first(a, lo, hi):
    def vjp(g, x, out):
        full = np.zeros_like(x)
        full[lo:hi] = g
        return full

    return _unary(a, lambda x: x[lo:hi], vjp)


def transpose2(a):
    """Transpose of a 2-D array."""
    return _unary(a, lambda x: np.ascontiguousarray(x.T),
                  lambda g, x, out: np.ascontiguousarray(g.T))


def take_last(a, idx):
    """Gather columns ``idx`` of the last axis."""
    idx = np.asarray(idx, dtype=np.intp)

    def vjp(g, x, out):
        full = np.zeros_like(x)
        np.add.at(full, (..., idx), g)
        return full

    return _unary(a, lambda x: x[..., idx], vjp)


def scatter_last(a, idx, width):
    """Spread the last-axis entries of ``a`` into a zero array of width ``width``."""
    idx = np.asarray(idx, dtype=np.intp)

    def fwd(x):
        full = np.zeros(x.shape[:-1] + (width,), dtype=np.float64)
        full[..., idx] = x
        return full

    return _unary(a, fwd, lambda g, x, out: g[..., idx])


def concat_last(parts):
    t = _tape(*parts)
    vals = [value_of(p) for p in parts]
    out = np.concatenate(vals, axis=-1)
    if t is None:
        return out
    nodes = [_as_node(t, p) for p in parts]
    offsets = [0]
    for v in vals:
        offsets.append(offsets[-1] + v.shape[-1])

    def vjp(g):
        return tuple(
            g[..., offsets[i]:offsets[i + 1]] if n.requires_grad else None
            for i, n in enumerate(nodes)
        )

    return t.record(out, nodes, vjp)


def dot_const(a, M):
    """a @ M for a constant matrix M."""
    M = np.asarray(M, dtype=np.float64)
    return _unary(a, lambda x: x @ M, lambda g, x, out: g @ M.T)


def linear(x, W, b=None):
    """x @ W.T (+ b); any operand may be a Node."""
    t = _tape(x, W, b)
    xv, Wv = value_of(x), value_of(W)
    out = xv @ Wv.T
    if b is not None:
        out = out + value_of(b)
    if t is None:
        return out
    xn, Wn = _as_node(t, x), _as_node(t, W)
    parents = [xn, Wn]
    if b is not None:
        parents.append(_as_node(t, b))

    def vjp(g):
        gx = g @ Wv if xn.requires_grad else None
        gW = g.T @ xv if Wn.requires_grad else None
        if b is None:
            return gx, gW
        gb = g.sum(axis=0) if parents[2].requires_grad else None
        return gx, gW, gb

    return t.record(out, parents, vjp)
