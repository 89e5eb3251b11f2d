"""Problem instances: dynamics costs, interaction costs, terminal costs, samplers.

All cost formulas accept tape nodes or plain arrays (see :mod:`apacnet.ops`),
so the same code serves training and monitoring.  Planar obstacle and
congestion costs touch only the first two state coordinates; the hover-craft
costs touch only its three spatial position slots.
"""

from dataclasses import dataclass

import numpy as np

from apacnet import ops
from apacnet.ops import value_of

DENSITY_FLOOR = 1e-300


# ---------------------------------------------------------------------------
# terminal costs

class SmoothedNormTerminal:
    """g(x) = sqrt(|x[idx] - center|^2 + eps^2): smooth everywhere, bias O(eps)."""

    def __init__(self, indices, center, eps=1e-3):
        self.indices = tuple(indices)
        self.center = np.asarray(center, dtype=np.float64)
        self.eps = float(eps)

    def aug(self, x):
        """Returns (g, grad_x g, lap_x g) over the full state width."""
        width = value_of(x).shape[-1]
        diff = ops.sub(ops.take_last(x, self.indices), self.center)
        r2 = ops.sum_last(ops.square(diff))
        q = ops.add(r2, self.eps ** 2)
        val = ops.sqrt(q)
        inv = ops.powc(q, -0.5)
        grad = ops.scatter_last(ops.mul(diff, ops.reshape(inv, value_of(inv).shape + (1,))),
                                self.indices, width)
        lap = ops.sub(ops.mul(float(len(self.indices)), inv),
                      ops.mul(r2, ops.powc(q, -1.5)))
        return val, grad, lap


class QuadraticTerminal:
    """g(x) = a/2 |x|^2 + offset (all coordinates)."""

    def __init__(self, alpha, offset):
        self.alpha = float(alpha)
        self.offset = float(offset)

    def aug(self, x):
        b, d = value_of(x).shape
        val = ops.add(ops.mul(0.5 * self.alpha, ops.sum_last(ops.square(x))), self.offset)
        grad = ops.mul(self.alpha, x)
        lap = ops.add(ops.mul(0.0, val), self.alpha * d)
        return val, grad, lap


# ---------------------------------------------------------------------------
# dynamics costs

def hamiltonian_norm(c, p, eps):
    """c*sqrt(|p|^2 + eps^2) - c*eps, shifted so the value at p = 0 is 0."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    return ops.mul(c, ops.sub(ops.sqrt(ops.add(ops.sum_last(ops.square(p)), eps * eps)), eps))


QUAD_STATE_DIM = 12
# state layout: (x1, x2, y1, y2, z1, z2, psi1, psi2, th1, th2, ph1, ph2)
_QUAD_POS = (0, 2, 4)
_QUAD_VEL_OF_POS = (1, 3, 5)
_QUAD_ANG_VEL = (7, 9, 11)
_QUAD_ANG = (6, 8, 10)


def _quad_thrust_factors(x):
    """Direction cosines of the thrust axis from the yaw/pitch/roll slots."""
    psi = ops.take_last(x, [6])
    th = ops.take_last(x, [8])
    ph = ops.take_last(x, [10])
    a1 = ops.add(ops.mul(ops.sin(ph), ops.sin(psi)),
                 ops.mul(ops.mul(ops.cos(ph), ops.cos(psi)), ops.sin(th)))
    a2 = ops.add(ops.neg(ops.mul(ops.cos(psi), ops.sin(ph))),
                 ops.mul(ops.mul(ops.cos(ph), ops.sin(th)), ops.sin(psi)))
    a3 = ops.mul(ops.cos(th), ops.cos(ph))
    return a1, a2, a3


def quadcopter_hamiltonian(x, p, mass, gravity):
    """Legendre transform of the hover-craft dynamics with cost |u|^2/2.

    H(x, p) = -p . f0(x) + |B(x)^T p|^2 / 2, where f0 is the control-free
    drift and B has one thrust column and three unit torque columns.
    """
    squeeze = value_of(x).ndim == 1
    if squeeze:
        x = value_of(x).reshape(1, -1)
        p = value_of(p).reshape(1, -1)
    if value_of(x).shape[-1] != QUAD_STATE_DIM or value_of(p).shape[-1] != QUAD_STATE_DIM:
        raise ValueError(f"hover-craft state/costate must have width {QUAD_STATE_DIM}")

    # -p . f0: drift feeds velocity slots into position slots, gravity into z2
    vel = ops.take_last(x, _QUAD_VEL_OF_POS + _QUAD_ANG_VEL)
    p_pos = ops.take_last(p, _QUAD_POS + _QUAD_ANG)
    drift = ops.sub(ops.sum_last(ops.mul(p_pos, vel)),
                    ops.mul(gravity, ops.reshape(ops.take_last(p, [5]), (-1,))))
    a1, a2, a3 = _quad_thrust_factors(x)
    p_acc = ops.take_last(p, _QUAD_VEL_OF_POS)  # (B, 3)
    thrust = ops.mul(1.0 / mass,
                     ops.reshape(ops.sum_last(ops.mul(ops.concat_last([a1, a2, a3]), p_acc)), (-1,)))
    torque2 = ops.sum_last(ops.square(ops.take_last(p, _QUAD_ANG_VEL)))
    h = ops.add(ops.neg(drift), ops.mul(0.5, ops.add(ops.square(thrust), torque2)))
    if squeeze:
        return float(value_of(h)[0])
    return h


def quadcopter_drift_and_columns(x):
    """Numeric (f0, B) of the hover-craft dynamics; used by brute-force checks."""
    x = np.asarray(x, dtype=np.float64)
    psi, th, ph = x[6], x[8], x[10]
    a1 = np.sin(ph) * np.sin(psi) + np.cos(ph) * np.cos(psi) * np.sin(th)
    a2 = -np.cos(psi) * np.sin(ph) + np.cos(ph) * np.sin(th) * np.sin(psi)
    a3 = np.cos(th) * np.cos(ph)
    f0 = np.zeros(QUAD_STATE_DIM)
    f0[[0, 2, 4, 6, 8, 10]] = x[[1, 3, 5, 7, 9, 11]]
    return f0, (a1, a2, a3)


def make_quadcopter_hamiltonian(mass, gravity, variant="derived"):
    if variant == "paper":
        return lambda x, p, t: ops.mul(0.5, ops.sum_last(ops.square(p)))
    if variant == "derived":
        return lambda x, p, t: quadcopter_hamiltonian(x, p, mass, gravity)
    raise ValueError(f"unknown hamiltonian variant {variant!r}")


# ---------------------------------------------------------------------------
# interaction costs (batch estimators; per-sample values of shape (B,))

@dataclass
class InteractionContext:
    """Per-step constants the interaction estimators consume."""

    aux_points: object = None  # second generated batch at shared times, detached
    kde: object = None         # density estimator fit on the generated batch


class NoInteraction:
    needs_aux = False
    needs_kde = False

    def per_sample(self, x, ctx):
        return np.zeros(value_of(x).shape[0])


class ObstacleInteraction:
    """Planar obstacle penalty; positive inside the obstacle regions only."""

    needs_aux = False
    needs_kde = False

    def __init__(self, variant, gamma_obst):
        if variant not in ("twin", "bottleneck", "symmetric"):
            raise ValueError(f"unknown obstacle variant {variant!r}")
        self.variant = variant
        self.gamma = float(gamma_obst)

    def per_sample(self, x, ctx=None):
        return obstacle_cost(self.variant, x, self.gamma)


def _rotation(theta):
    return np.array([[np.cos(theta), -np.sin(theta)],
                     [np.sin(theta), np.cos(theta)]])


def obstacle_cost(variant, x, gamma_obst=5.0):
    """Per-sample obstacle cost; only the first two coordinates matter."""
    if value_of(x).shape[-1] < 2:
        raise ValueError("obstacle costs need at least two coordinates")
    xy = ops.slice_last(x, 0, 2)
    if variant == "twin":
        rot = _rotation(np.pi / 5.0)
        v = ops.dot_const(ops.sub(xy, np.array([-2.0, 0.5])), rot)
        w = ops.dot_const(ops.sub(xy, np.array([2.0, -0.5])), rot)
        # Q = diag(5, 0), b = (0, 2)
        f1 = ops.sub(ops.neg(ops.add(ops.mul(5.0, ops.square(ops.reshape(ops.slice_last(v, 0, 1), (-1,)))),
                                     ops.mul(2.0, ops.reshape(ops.slice_last(v, 1, 2), (-1,))))), 1.0)
        f2 = ops.sub(ops.add(ops.neg(ops.mul(5.0, ops.square(ops.reshape(ops.slice_last(w, 0, 1), (-1,))))),
                             ops.mul(2.0, ops.reshape(ops.slice_last(w, 1, 2), (-1,)))), 1.0)
        return ops.mul(gamma_obst, ops.add(ops.relu(f1), ops.relu(f2)))
    x1 = ops.reshape(ops.slice_last(xy, 0, 1), (-1,))
    x2 = ops.reshape(ops.slice_last(xy, 1, 2), (-1,))
    if variant == "bottleneck":
        # -v' diag(5, -1) v - 0.1 clamped below at 0
        q = ops.sub(ops.square(x2), ops.mul(5.0, ops.square(x1)))
        return ops.mul(gamma_obst, ops.relu(ops.sub(q, 0.1)))
    if variant == "symmetric":
        # Q = [[1, 0.8], [0.8, 1]]
        q = ops.add(ops.add(ops.square(x1), ops.square(x2)),
                    ops.mul(1.6, ops.mul(x1, x2)))
        return ops.mul(gamma_obst, ops.relu(ops.add(ops.neg(q), 0.1)))
    raise ValueError(f"unknown obstacle variant {variant!r}")


def congestion_pairs(batch_a, batch_b):
    """Row-paired bounded inverse squared planar distance, one value per pair."""
    av, bv = value_of(batch_a), value_of(batch_b)
    if av.shape[0] != bv.shape[0]:
        raise ValueError(f"batch sizes differ: {av.shape[0]} vs {bv.shape[0]}")
    diff = ops.sub(ops.slice_last(batch_a, 0, 2), value_of(ops.slice_last(batch_b, 0, 2)))
    return ops.powc(ops.add(ops.sum_last(ops.square(diff)), 1.0), -1.0)


def congestion_estimate(batch_a, batch_b):
    """Mean over pairs (the double-integral estimator)."""
    return ops.mean_all(congestion_pairs(batch_a, batch_b))


class PairedCongestion:
    needs_aux = True
    needs_kde = False

    def per_sample(self, x, ctx):
        return congestion_pairs(x, ctx.aux_points)


def gaussian_congestion_pairs(batch_a, batch_b, gamma_cong):
    av, bv = value_of(batch_a), value_of(batch_b)
    if av.shape[-1] != QUAD_STATE_DIM or bv.shape[-1] != QUAD_STATE_DIM:
        raise ValueError(f"gaussian congestion expects width-{QUAD_STATE_DIM} states")
    if av.shape[0] != bv.shape[0]:
        raise ValueError(f"batch sizes differ: {av.shape[0]} vs {bv.shape[0]}")
    diff = ops.sub(ops.take_last(batch_a, _QUAD_POS), value_of(ops.take_last(batch_b, _QUAD_POS)))
    d2 = ops.sum_last(ops.square(diff))
    return ops.mul(gamma_cong * (2.0 * np.pi) ** -1.5, ops.exp(ops.mul(-0.5, d2)))


def gaussian_congestion(batch_a, batch_b, gamma_cong):
    return ops.mean_all(gaussian_congestion_pairs(batch_a, batch_b, gamma_cong))


class GaussianCongestion:
    needs_aux = True
    needs_kde = False

    def __init__(self, gamma_cong):
        self.gamma_cong = float(gamma_cong)

    def per_sample(self, x, ctx):
        return gaussian_congestion_pairs(x, ctx.aux_points, self.gamma_cong)


def entropy_interaction(query, kde, gamma):
    """gamma * ln(max(rho_hat(query), floor)) per query point."""
    if gamma < 0:
        raise ValueError("gamma must be nonnegative")
    if gamma == 0.0:
        return np.zeros(value_of(query).shape[0])
    dens = kde.density_op(query)
    return ops.mul(gamma, ops.log(ops.maximum_const(dens, DENSITY_FLOOR)))


class EntropyInteraction:
    needs_aux = False

    def __init__(self, gamma):
        self.gamma = float(gamma)

    @property
    def needs_kde(self):
        return self.gamma > 0.0

    def per_sample(self, x, ctx):
        if self.gamma == 0.0:
            return np.zeros(value_of(x).shape[0])
        return entropy_interaction(x, ctx.kde, self.gamma)


class CompositeInteraction:
    def __init__(self, parts):
        self.parts = list(parts)

    @property
    def needs_aux(self):
        return any(p.needs_aux for p in self.parts)

    @property
    def needs_kde(self):
        return any(p.needs_kde for p in self.parts)

    def per_sample(self, x, ctx):
        total = self.parts[0].per_sample(x, ctx)
        for p in self.parts[1:]:
            total = ops.add(total, p.per_sample(x, ctx))
        return total


# ---------------------------------------------------------------------------
# environments

@dataclass
class Environment:
    name: str
    dim: int
    nu: float
    horizon: float
    hamiltonian: object          # callable (x, p, t) -> (B,)
    interaction: object
    terminal: object
    rho0_center: np.ndarray
    rho0_std: np.ndarray         # per-coordinate; zero entries are deterministic
    speed_c: float = 0.0
    gamma: float = 0.0           # entropy interaction weight
    beta: float = 0.0            # analytic confinement strength
    kde_sigma: float = 0.0       # KDE scale; sqrt(gamma/nu) when gamma > 0

    def __post_init__(self):
        if self.nu < 0:
            raise ValueError("nu must be nonnegative")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if np.any(self.rho0_std < 0) or not np.any(self.rho0_std > 0):
            raise ValueError("rho0 std must be nonnegative with a positive entry")


@dataclass
class BatchSample:
    z: np.ndarray  # (B, d) draws from rho0
    t: np.ndarray  # (B,) times uniform on [0, horizon]


def sample_batch(env, batch_size, rng):
    if batch_size < 1:
        raise ValueError("batch size must be at least 1")
    z = env.rho0_center + env.rho0_std * rng.standard_normal((batch_size, env.dim))
    t = rng.uniform(0.0, env.horizon, size=batch_size)
    return BatchSample(z, t)


def sample_rho0(env, n, rng):
    return env.rho0_center + env.rho0_std * rng.standard_normal((n, env.dim))


def _planar_center(dim, x1, x2):
    c = np.zeros(dim)
    c[0], c[1] = x1, x2
    return c


def make_environment(cfg):
    """Build the named environment from a resolved run configuration."""
    name, d, nu = cfg.experiment, cfg.dim, cfg.nu
    eps = cfg.smoothing_eps
    std = np.full(d, 1.0 / np.sqrt(10.0))

    if name in ("nu_sweep", "obstacle", "symmetric"):
        center = _planar_center(d, -2.0, -2.0)
        terminal = SmoothedNormTerminal((0, 1), (2.0, 2.0), eps)
        if name == "obstacle":
            inter = ObstacleInteraction("twin", cfg.gamma_obst)
        elif name == "symmetric":
            inter = ObstacleInteraction("symmetric", cfg.gamma_obst)
        else:
            inter = NoInteraction()
        ham = lambda x, p, t: hamiltonian_norm(cfg.speed_c, p, eps)
        return Environment(name, d, nu, cfg.horizon, ham, inter, terminal, center, std,
                           speed_c=cfg.speed_c)

    if name in ("congestion", "bottleneck"):
        center = np.full(d, -2.0)
        if d >= 2:
            center[1] = 0.0
        terminal = SmoothedNormTerminal((0, 1), (2.0, 0.0), eps)
        inter = PairedCongestion()
        if name == "bottleneck":
            inter = CompositeInteraction([inter, ObstacleInteraction("bottleneck", cfg.gamma_obst)])
        ham = lambda x, p, t: hamiltonian_norm(cfg.speed_c, p, eps)
        return Environment(name, d, nu, cfg.horizon, ham, inter, terminal, center, std,
                           speed_c=cfg.speed_c)

    if name == "analytic":
        from apacnet.validation import AnalyticSolution

        if nu <= 0:
            raise ValueError("the analytic environment requires nu > 0")
        sol = AnalyticSolution(cfg.gamma, nu, cfg.beta, d)
        terminal = QuadraticTerminal(sol.alpha, -sol.time_slope * cfg.horizon)
        beta = cfg.beta
        ham = lambda x, p, t: ops.sub(ops.mul(0.5, ops.sum_last(ops.square(p))),
                                      ops.mul(0.5 * beta, ops.sum_last(ops.square(x))))
        std = np.full(d, np.sqrt(nu / sol.alpha))
        sigma = np.sqrt(cfg.gamma / nu) if cfg.gamma > 0 else 0.0
        return Environment(name, d, nu, cfg.horizon, ham, EntropyInteraction(cfg.gamma),
                           terminal, np.zeros(d), std, gamma=cfg.gamma, beta=beta,
                           kde_sigma=sigma)

    if name == "quadcopter":
        if d != QUAD_STATE_DIM:
            raise ValueError(f"quadcopter requires dim={QUAD_STATE_DIM}, got {d}")
        center = np.zeros(d)
        center[list(_QUAD_POS)] = -2.0
        std = np.zeros(d)
        std[list(_QUAD_POS)] = 0.5
        terminal = SmoothedNormTerminal((0, 2, 4, 1, 3, 5), (2.0, 2.0, 2.0, 0.0, 0.0, 0.0), eps)
        ham = make_quadcopter_hamiltonian(cfg.mass, cfg.gravity, cfg.hamiltonian_variant)
        return Environment(name, d, nu, cfg.horizon, ham, GaussianCongestion(cfg.gamma_cong),
                           terminal, center, std)

    raise ValueError(f"unknown experiment {name!r}")
