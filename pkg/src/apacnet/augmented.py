"""Augmented forward propagation: value, input-Jacobian, and spatial Laplacian.

An :class:`AugState` carries, for each unit of a layer, the triple
(value, jac, lap): ``jac[k]`` holds exact derivatives w.r.t. the k-th of the
K = d+1 network inputs (d spatial coordinates, then time) and ``lap`` is the
trace of the Hessian over the spatial coordinates only.  For the network
input itself jac is the identity basis and lap is zero.

``augmented_affine`` and ``augmented_activation`` push such states through
the layers of a residual network, recording everything on the tape so one
reverse sweep yields gradients of any function of (value, jac, lap) with
respect to parameters *and* inputs.  Backpropagating through the lap
pushforward of an activation differentiates its sigma'' factor, which is
why third-order activation derivatives exist here.  Affine pushforwards are
matmul-shaped and use BLAS; the fused activation kernels come from the
selected backend in :mod:`apacnet.kernels`.
"""

from dataclasses import dataclass

import numpy as np

from apacnet import kernels
from apacnet import ops
from apacnet.ops import value_of
from apacnet.tape import Node

TANH = kernels.TANH
RELU = kernels.RELU


@dataclass(frozen=True)
class ActivationKind:
    """Scalar activation with derivative evaluators of orders 0..3."""

    name: str
    kind: int

    def deriv(self, v, order):
        if not 0 <= order <= 3:
            raise ValueError("derivative order must be in 0..3")
        from apacnet import _kernels_np

        return _kernels_np._act_derivs(self.kind, np.asarray(v, dtype=np.float64), order)


TANH_ACT = ActivationKind("tanh", TANH)
RELU_ACT = ActivationKind("relu", RELU)


@dataclass
class AugState:
    """Per-unit (value, jac, lap) arrays or tape nodes for one layer."""

    val: object  # (B, n)
    jac: object  # (K, B, n)
    lap: object  # (B, n)
    spatial_dim: int

    @property
    def width(self):
        return value_of(self.val).shape[1]


def input_state(x, t_col, spatial_dim):
    """AugState of the network input (x, t): identity jac, zero lap."""
    val = ops.concat_last([x, t_col])
    b, k = value_of(val).shape
    if k != spatial_dim + 1:
        raise ValueError(f"input has {k} columns, expected spatial_dim+1={spatial_dim + 1}")
    jac = np.ascontiguousarray(np.broadcast_to(np.eye(k)[:, None, :], (k, b, k)))
    lap = np.zeros((b, k))
    return AugState(val, jac, lap, spatial_dim)


def _any_node(*xs):
    return any(isinstance(x, Node) for x in xs)


def _affine_fwd(Wv, bv, vv, jv, lv, skip_weight, sv, sj, sl):
    k, b, n = jv.shape
    out_v = vv @ Wv.T + bv
    out_j = (jv.reshape(k * b, n) @ Wv.T).reshape(k, b, Wv.shape[0])
    out_l = lv @ Wv.T
    if sv is not None:
        out_v += skip_weight * sv
        out_j += skip_weight * sj
        out_l += skip_weight * sl
    return out_v, out_j, out_l


def augmented_affine(W, b, state, skip_weight=0.0, skip=None):
    """Affine layer applied to an AugState: out = W*in + b (+ skip_weight*skip)."""
    Wv, bv = value_of(W), value_of(b)
    vv, jv, lv = value_of(state.val), value_of(state.jac), value_of(state.lap)
    if Wv.shape[1] != vv.shape[1]:
        raise ValueError(f"weight shape {Wv.shape} does not match input width {vv.shape[1]}")
    if skip is not None:
        sv, sj, sl = value_of(skip.val), value_of(skip.jac), value_of(skip.lap)
        if sv.shape[1] != Wv.shape[0]:
            raise ValueError(f"skip width {sv.shape[1]} does not match output width {Wv.shape[0]}")
    else:
        sv = sj = sl = None

    out_v, out_j, out_l = _affine_fwd(Wv, bv, vv, jv, lv, skip_weight, sv, sj, sl)

    operands = [W, b, state.val, state.jac, state.lap]
    if skip is not None:
        operands += [skip.val, skip.jac, skip.lap]
    if not _any_node(*operands):
        return AugState(out_v, out_j, out_l, state.spatial_dim)

    t = ops._tape(*operands)
    Wn, bn = ops._as_node(t, W), ops._as_node(t, b)
    vn, jn, ln = (ops._as_node(t, state.val), ops._as_node(t, state.jac),
                  ops._as_node(t, state.lap))

    def skip_w_g(g, node):
        return skip_weight * g if node.requires_grad else None

    # value output: parents (W, b, val[, skip.val])
    def vjp_val(g):
        gW = g.T @ vv if Wn.requires_grad else None
        gb = g.sum(axis=0) if bn.requires_grad else None
        gx = g @ Wv if vn.requires_grad else None
        out = [gW, gb, gx]
        if skip is not None:
            out.append(skip_w_g(g, svn))
        return tuple(out)

    # jac output: parents (W, jac[, skip.jac])
    def vjp_jac(g):
        k, bsz, m = g.shape
        g2 = g.reshape(k * bsz, m)
        gW = g2.T @ jv.reshape(k * bsz, -1) if Wn.requires_grad else None
        gx = (g2 @ Wv).reshape(k, bsz, -1) if jn.requires_grad else None
        out = [gW, gx]
        if skip is not None:
            out.append(skip_w_g(g, sjn))
        return tuple(out)

    # lap output: parents (W, lap[, skip.lap])
    def vjp_lap(g):
        gW = g.T @ lv if Wn.requires_grad else None
        gx = g @ Wv if ln.requires_grad else None
        out = [gW, gx]
        if skip is not None:
            out.append(skip_w_g(g, sln))
        return tuple(out)

    if skip is not None:
        svn, sjn, sln = ops._as_node(t, skip.val), ops._as_node(t, skip.jac), ops._as_node(t, skip.lap)
        node_v = t.record(out_v, (Wn, bn, vn, svn), vjp_val)
        node_j = t.record(out_j, (Wn, jn, sjn), vjp_jac)
        node_l = t.record(out_l, (Wn, ln, sln), vjp_lap)
    else:
        node_v = t.record(out_v, (Wn, bn, vn), vjp_val)
        node_j = t.record(out_j, (Wn, jn), vjp_jac)
        node_l = t.record(out_l, (Wn, ln), vjp_lap)
    return AugState(node_v, node_j, node_l, state.spatial_dim)


def augmented_activation(act, state):
    """Elementwise activation pushed through an AugState.

    val' = s(v); jac' = s'(v)*jac; lap' = s''(v)*sum_spatial(jac^2) + s'(v)*lap.
    """
    kind = act.kind if isinstance(act, ActivationKind) else int(act)
    d = state.spatial_dim
    vv, jv, lv = value_of(state.val), value_of(state.jac), value_of(state.lap)
    out_v, out_j, out_l = kernels.act_aug_fwd(kind, d, vv, jv, lv)

    if not _any_node(state.val, state.jac, state.lap):
        return AugState(out_v, out_j, out_l, d)

    t = ops._tape(state.val, state.jac, state.lap)
    vn = ops._as_node(t, state.val)
    jn = ops._as_node(t, state.jac)
    ln = ops._as_node(t, state.lap)

    # the backward kernels rebuild the derivative ladder from a = sigma(v)
    def vjp_val(g):
        return (kernels.act_bwd_val(kind, out_v, g),)

    def vjp_jac(g):
        return kernels.act_bwd_jac(kind, out_v, jv, g, vn.requires_grad, jn.requires_grad)

    def vjp_lap(g):
        return kernels.act_bwd_lap(kind, d, out_v, jv, lv, g,
                                   vn.requires_grad, jn.requires_grad, ln.requires_grad)

    node_v = t.record(out_v, (vn,), vjp_val)
    node_j = t.record(out_j, (vn, jn), vjp_jac)
    node_l = t.record(out_l, (vn, jn, ln), vjp_lap)
    return AugState(node_v, node_j, node_l, d)


# ---------------------------------------------------------------------------
# AugState algebra built from generic primitives (used by wrappers and tests)

def aug_add(a, b):
    return AugState(ops.add(a.val, b.val), ops.add(a.jac, b.jac),
                    ops.add(a.lap, b.lap), a.spatial_dim)


def aug_mul(a, b):
    """Product of two scalar fields per unit; lap uses the spatial product rule."""
    d = a.spatial_dim
    val = ops.mul(a.val, b.val)
    av3 = ops.reshape(a.val, (1,) + value_of(a.val).shape)
    bv3 = ops.reshape(b.val, (1,) + value_of(b.val).shape)
    jac = ops.add(ops.mul(av3, b.jac), ops.mul(bv3, a.jac))
    cross = ops.sum_axis(ops.mul(ops.slice_first(a.jac, 0, d),
                                 ops.slice_first(b.jac, 0, d)), 0)
    lap = ops.add(ops.add(ops.mul(a.val, b.lap), ops.mul(b.val, a.lap)),
                  ops.mul(2.0, cross))
    return AugState(val, jac, lap, d)


def aug_sum_units(a):
    """Sum a width-n AugState into a single scalar field."""
    return AugState(ops.sum_axis(a.val, 1), ops.sum_axis(a.jac, 2),
                    ops.sum_axis(a.lap, 1), a.spatial_dim)
