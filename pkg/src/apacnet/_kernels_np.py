"""Pure-numpy implementation of the hot activation kernels.

Shared contract with the compiled backend (``apacnet._kernels``): every
function takes and returns C-contiguous float64 arrays.  An "augmented"
quantity is the triple (val, jac, lap) of a layer's units, where

* ``val``  has shape (B, n)       -- unit values,
* ``jac``  has shape (K, B, n)    -- derivatives w.r.t. the K = d+1 network
  inputs (d spatial coordinates followed by time); leading-axis layout so
  affine pushforwards are single contiguous matmuls,
* ``lap``  has shape (B, n)       -- spatial Laplacian (trace of the Hessian
  over the first d inputs only).

Activation kinds: 0 = tanh, 1 = relu (relu derivative at 0 is 0).  Backward
kernels take the forward output a = sigma(v) instead of v: the whole
derivative ladder is arithmetic in a (for tanh, sigma' = 1 - a^2), so the
reverse sweep needs no transcendentals.
"""

import numpy as np

TANH = 0
RELU = 1


def _act_derivs(kind, v, order):
    """sigma^(order)(v) for order in 0..3, evaluated from the preactivation."""
    if kind == TANH:
        return _ladder(kind, np.tanh(v), order)[order]
    if kind == RELU:
        return _ladder(kind, np.maximum(v, 0.0), order)[order]
    raise ValueError(f"unknown activation kind {kind}")


def _ladder(kind, a, up_to):
    """[sigma, sigma', ...] computed from the activation value a = sigma(v)."""
    if kind == TANH:
        out = [a]
        if up_to >= 1:
            d1 = 1.0 - a * a
            out.append(d1)
        if up_to >= 2:
            d2 = -2.0 * a * d1
            out.append(d2)
        if up_to >= 3:
            out.append(-2.0 * (d1 * d1 + a * d2))
        return out
    if kind == RELU:
        out = [a]
        if up_to >= 1:
            out.append((a > 0.0).astype(np.float64))
        for _ in range(2, up_to + 1):
            out.append(np.zeros_like(a))
        return out
    raise ValueError(f"unknown activation kind {kind}")


def act_aug_fwd(kind, d_spatial, v, jac, lap):
    a = np.tanh(v) if kind == TANH else np.maximum(v, 0.0)
    _, d1, d2 = _ladder(kind, a, 2)
    out_j = d1[None, :, :] * jac
    js = jac[:d_spatial]
    s = np.einsum("kbn,kbn->bn", js, js)
    out_l = d2 * s + d1 * lap
    return a, out_j, out_l


def act_bwd_val(kind, a, g):
    return g * _ladder(kind, a, 1)[1]


def act_bwd_jac(kind, a, jac, g, need_v=True, need_jac=True):
    _, d1, d2 = _ladder(kind, a, 2)
    gv = np.einsum("kbn,kbn->bn", g, jac) * d2 if need_v else None
    gjac = d1[None, :, :] * g if need_jac else None
    return gv, gjac


def act_bwd_lap(kind, d_spatial, a, jac, lap, g, need_v=True, need_jac=True,
                need_lap=True):
    _, d1, d2, d3 = _ladder(kind, a, 3)
    gv = None
    if need_v:
        js = jac[:d_spatial]
        s = np.einsum("kbn,kbn->bn", js, js)
        gv = g * (d3 * s + d2 * lap)
    gjac = None
    if need_jac:
        gjac = np.zeros_like(jac)
        gjac[:d_spatial] = (2.0 * g * d2)[None, :, :] * jac[:d_spatial]
    glap = g * d1 if need_lap else None
    return gv, gjac, glap
