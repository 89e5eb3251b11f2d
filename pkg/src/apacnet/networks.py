"""The two players: value field and sample generator.

Both are small residual networks.  Boundary conditions are built into
wrappers so that the value field equals the terminal cost at t = T exactly,
and the generator reproduces its input at t = 0 exactly:

    phi(x, t) = (1 - t/T) * N_value(x, t) + (t/T) * g(x)
    G(z, t)   = (1 - t/T) * z            + (t/T) * N_gen(z, t)

With T = 1 (the default everywhere except the quadcopter environment) these
reduce to the plain convex-in-t interpolations.
"""

import struct
from dataclasses import dataclass

import numpy as np

from apacnet import ops
from apacnet.augmented import (RELU_ACT, TANH_ACT, augmented_activation,
                               augmented_affine, input_state)
from apacnet.ops import value_of

ROLE_VALUE = "value"
ROLE_GENERATOR = "generator"


@dataclass(frozen=True)
class ResNetConfig:
    input_dim: int
    output_dim: int
    width: int = 100
    hidden_layers: int = 3
    skip_weight: float = 0.5
    activation: str = "tanh"

    def layer_shapes(self):
        shapes = [(self.width, self.input_dim)]
        shapes += [(self.width, self.width)] * (self.hidden_layers - 1)
        shapes.append((self.output_dim, self.width))
        return shapes


def _layer_views(cfg, buffer):
    """Per-layer (W, b) views into the flat parameter buffer (W row-major, then b)."""
    layers = []
    off = 0
    for out_dim, in_dim in cfg.layer_shapes():
        W = buffer[off:off + out_dim * in_dim].reshape(out_dim, in_dim)
        off += out_dim * in_dim
        b = buffer[off:off + out_dim]
        off += out_dim
        layers.append((W, b))
    if off != buffer.size:
        raise ValueError(f"buffer holds {buffer.size} values, layout needs {off}")
    return layers


class NetworkParams:
    """Flat float64 parameter vector with per-layer (W, b) views."""

    def __init__(self, cfg, buffer, role, seed=0):
        self.cfg = cfg
        self.buffer = np.ascontiguousarray(buffer, dtype=np.float64)
        self.layers = _layer_views(cfg, self.buffer)
        self.role = role
        self.seed = seed

    def copy(self):
        return NetworkParams(self.cfg, self.buffer.copy(), self.role, self.seed)

    def flat(self):
        return self.buffer

    def n_params(self):
        return self.buffer.size


def init_params(cfg, seed, role):
    """Uniform(-sqrt(1/fan_in), sqrt(1/fan_in)) weights, zero biases."""
    rng = np.random.default_rng(seed)
    size = sum(o * i + o for o, i in cfg.layer_shapes())
    params = NetworkParams(cfg, np.zeros(size), role,
                           seed if isinstance(seed, int) else 0)
    for W, b in params.layers:
        bound = np.sqrt(1.0 / W.shape[1])
        W[:] = rng.uniform(-bound, bound, size=W.shape)
    return params


def _activation(cfg):
    return TANH_ACT if cfg.activation == "tanh" else RELU_ACT


def register_params(tape, params, trainable=True):
    """Put parameter arrays on a tape; returns layer list of (W, b) nodes."""
    mk = tape.leaf if trainable else tape.constant
    return [(mk(W), mk(b)) for W, b in params.layers]


def resnet_aug(layers, state0, act, skip_weight):
    """Augmented forward pass; hidden blocks are h <- skip_w*h + W*act(h) + b."""
    W0, b0 = layers[0]
    h = augmented_affine(W0, b0, state0)
    for W, b in layers[1:-1]:
        h = augmented_affine(W, b, augmented_activation(act, h), skip_weight, skip=h)
    W_out, b_out = layers[-1]
    return augmented_affine(W_out, b_out, augmented_activation(act, h))


def resnet_plain(layers, u, act, skip_weight):
    """Value-only forward pass (same architecture, no derivative tracking)."""
    act_fn = ops.tanh if act.name == "tanh" else ops.relu
    W0, b0 = layers[0]
    h = ops.linear(u, W0, b0)
    for W, b in layers[1:-1]:
        h = ops.add(ops.mul(skip_weight, h), ops.linear(act_fn(h), W, b))
    W_out, b_out = layers[-1]
    return ops.linear(act_fn(h), W_out, b_out)


@dataclass
class ValueBundle:
    """phi and its exact derivatives at a batch of points, all shape (B,) / (B, d)."""

    phi: object
    dt: object
    grad: object
    lap: object


def value_eval(layers, cfg, terminal, x, t, horizon=1.0):
    """Wrapped value field with exact dt/grad/lap on the tape.

    ``x`` may be a tape node (generator output) or a plain array; ``t`` is a
    plain (B,) array of times in [0, horizon].
    """
    d = cfg.input_dim - 1
    t = np.asarray(t, dtype=np.float64)
    b = value_of(x).shape[0]
    st = input_state(x, t.reshape(-1, 1), d)
    out = resnet_aug(layers, st, _activation(cfg), cfg.skip_weight)

    n = ops.reshape(out.val, (b,))
    jac = ops.reshape(out.jac, (d + 1, b))
    n_lap = ops.reshape(out.lap, (b,))
    g_val, g_grad, g_lap = terminal.aug(x)

    tau = t / horizon
    rem = 1.0 - tau
    phi = ops.add(ops.mul(rem, n), ops.mul(tau, g_val))
    n_dt = ops.reshape(ops.slice_first(jac, d, d + 1), (b,))
    dt = ops.add(ops.mul(rem, n_dt), ops.mul(1.0 / horizon, ops.sub(g_val, n)))
    grad = ops.add(ops.mul(rem[:, None], ops.transpose2(ops.slice_first(jac, 0, d))),
                   ops.mul(tau[:, None], g_grad))
    lap = ops.add(ops.mul(rem, n_lap), ops.mul(tau, g_lap))
    return ValueBundle(phi, dt, grad, lap)


def value_eval_plain(layers, cfg, terminal, x, t, horizon=1.0):
    """phi values only (no derivative propagation)."""
    t = np.asarray(t, dtype=np.float64)
    b = value_of(x).shape[0]
    u = ops.concat_last([x, t.reshape(-1, 1)])
    n = ops.reshape(resnet_plain(layers, u, _activation(cfg), cfg.skip_weight), (b,))
    tau = t / horizon
    if not np.any(tau):
        return n
    g_val = terminal.aug(x)[0]
    return ops.add(ops.mul(1.0 - tau, n), ops.mul(tau, g_val))


def generator_eval(layers, cfg, z, t, horizon=1.0):
    """Pushforward map G(z, t); exact identity at t = 0."""
    z = np.asarray(z, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    u = ops.concat_last([z, t.reshape(-1, 1)])
    n = resnet_plain(layers, u, _activation(cfg), cfg.skip_weight)
    tau = (t / horizon)[:, None]
    return ops.add(ops.mul(1.0 - tau, z), ops.mul(tau, n))


def generator_forward(params, z, t, horizon=1.0):
    """Numeric generator pushforward (no tape)."""
    return generator_eval(params.layers, params.cfg, z, t, horizon)


# ---------------------------------------------------------------------------
# checkpoint format (documented in README): little-endian
#   magic "APC1" | u32 role | u32 input_dim | u32 width | u32 hidden_layers
#   | u32 output_dim | u32 activation | f64 skip_weight | u64 seed
#   | u64 iteration | u64 n_params | f64[n_params]
# parameter payload: per layer, W in row-major order then b.

_MAGIC = b"APC1"
_HEADER = struct.Struct("<4sIIIIIIdQQQ")
_ROLES = {ROLE_VALUE: 0, ROLE_GENERATOR: 1}
_ACTS = {"tanh": 0, "relu": 1}


def save_params(path, params, iteration=0):
    cfg = params.cfg
    payload = params.flat()
    header = _HEADER.pack(_MAGIC, _ROLES[params.role], cfg.input_dim, cfg.width,
                          cfg.hidden_layers, cfg.output_dim, _ACTS[cfg.activation],
                          cfg.skip_weight, params.seed, iteration, payload.size)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(payload.astype("<f8").tobytes())


def load_params(path):
    """Returns (NetworkParams, iteration)."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) != _HEADER.size:
            raise ValueError(f"{path}: truncated checkpoint header")
        (magic, role_id, input_dim, width, hidden, output_dim, act_id,
         skip_w, seed, iteration, n_params) = _HEADER.unpack(raw)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        payload = np.frombuffer(fh.read(8 * n_params), dtype="<f8").astype(np.float64)
    if payload.size != n_params:
        raise ValueError(f"{path}: expected {n_params} parameters, found {payload.size}")
    role = {v: k for k, v in _ROLES.items()}[role_id]
    act = {v: k for k, v in _ACTS.items()}[act_id]
    cfg = ResNetConfig(input_dim, output_dim, width, hidden, skip_w, act)
    expected = sum(o * i + o for o, i in cfg.layer_shapes())
    if expected != n_params:
        raise ValueError(f"{path}: parameter count mismatch ({expected} != {n_params})")
    return NetworkParams(cfg, payload, role, seed), iteration


def value_net_config(dim, width=100, hidden_layers=3, skip_weight=0.5):
    return ResNetConfig(dim + 1, 1, width, hidden_layers, skip_weight, "tanh")


def generator_net_config(dim, width=100, hidden_layers=3, skip_weight=0.5):
    return ResNetConfig(dim + 1, dim, width, hidden_layers, skip_weight, "relu")
