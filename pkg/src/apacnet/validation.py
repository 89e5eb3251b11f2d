"""Closed-form reference solution, kernel density estimation, error metrics."""

from dataclasses import dataclass

import numpy as np

from apacnet import ops
from apacnet.ops import value_of


@dataclass(frozen=True)
class AnalyticSolution:
    """Stationary-in-space reference pair (value field, density).

    phi(x, t) = a|x|^2/2 - (nu*d*a + (gamma*d/2) ln(a/(2 pi nu))) t
    rho(x, t) = (a/(2 pi nu))^{d/2} exp(-a|x|^2/(2 nu))
    with a solving a^2 + gamma*a/nu = beta.
    """

    gamma: float
    nu: float
    beta: float
    dim: int

    def __post_init__(self):
        if self.nu <= 0 or self.beta <= 0 or self.gamma < 0:
            raise ValueError("requires nu > 0, beta > 0, gamma >= 0")

    @property
    def alpha(self):
        g, nu, b = self.gamma, self.nu, self.beta
        return (-g + np.sqrt(g * g + 4.0 * nu * nu * b)) / (2.0 * nu)

    @property
    def time_slope(self):
        """Coefficient of -t in phi."""
        a = self.alpha
        return self.nu * self.dim * a + 0.5 * self.gamma * self.dim * np.log(a / (2.0 * np.pi * self.nu))

    def phi(self, x, t):
        x = np.asarray(x, dtype=np.float64)
        r2 = np.sum(x * x, axis=-1)
        return 0.5 * self.alpha * r2 - self.time_slope * np.asarray(t)

    def rho(self, x, t=None):
        x = np.asarray(x, dtype=np.float64)
        a = self.alpha
        r2 = np.sum(x * x, axis=-1)
        return (a / (2.0 * np.pi * self.nu)) ** (0.5 * self.dim) * np.exp(-0.5 * a * r2 / self.nu)

    def phi_dt(self, x, t):
        return np.full(np.asarray(x).shape[:-1], -self.time_slope)

    def phi_grad(self, x, t):
        return self.alpha * np.asarray(x, dtype=np.float64)

    def phi_lap(self, x, t):
        return np.full(np.asarray(x).shape[:-1], self.alpha * self.dim)

    def rho0_std(self):
        return np.sqrt(self.nu / self.alpha)


def analytic_phi_rho(sol, x, t):
    """Closed-form (value, density) pair at a point or batch."""
    return sol.phi(x, t), sol.rho(x, t)


def scott_bandwidth(n_samples, dim):
    return float(n_samples) ** (-1.0 / (dim + 4))


class KdeEstimator:
    """Gaussian kernel density estimate over a fixed sample set.

    rho_hat(q) = (1/B) sum_j (sqrt(2 pi) w)^(-d) exp(-|q - z_j|^2 / (2 w^2))
    with kernel width w = h * sigma and h the B^(-1/(d+4)) rule.
    """

    def __init__(self, samples, sigma=None, bandwidth=None):
        self.samples = np.ascontiguousarray(samples, dtype=np.float64)
        if self.samples.ndim != 2 or self.samples.shape[0] == 0:
            raise ValueError("KDE needs a nonempty (B, d) sample set")
        b, d = self.samples.shape
        self.h = scott_bandwidth(b, d)
        if bandwidth is not None:
            self.width = float(bandwidth)
        elif sigma is not None:
            self.width = self.h * float(sigma)
        else:
            raise ValueError("provide sigma or bandwidth")
        if self.width <= 0:
            raise ValueError("kernel width must be positive")
        self.norm = (np.sqrt(2.0 * np.pi) * self.width) ** (-d)

    def density(self, query, chunk=8192):
        """Numeric densities at (N, d) query points."""
        query = np.atleast_2d(np.asarray(query, dtype=np.float64))
        out = np.empty(query.shape[0])
        inv = -0.5 / (self.width * self.width)
        s2 = (self.samples * self.samples).sum(axis=1)
        for lo in range(0, query.shape[0], chunk):
            q = query[lo:lo + chunk]
            # |q - z|^2 via the inner-product expansion; clamp fp negatives
            d2 = (q * q).sum(axis=1)[:, None] + s2[None, :] - 2.0 * (q @ self.samples.T)
            np.maximum(d2, 0.0, out=d2)
            out[lo:lo + chunk] = self.norm * np.exp(inv * d2, out=d2).mean(axis=1)
        return out

    def density_op(self, query):
        """Density as a differentiable op (gradients flow through the query)."""
        n, d = value_of(query).shape
        q3 = ops.reshape(query, (n, 1, d))
        d2 = ops.sum_last(ops.square(ops.sub(q3, self.samples[None, :, :])))
        k = ops.exp(ops.mul(-0.5 / (self.width * self.width), d2))
        return ops.mul(self.norm, ops.mean_axis(k, 1))


def kde_density(est, query):
    return est.density(query)


def relative_error(pred, truth):
    """Global l2 relative error |pred - truth| / |truth|."""
    pred = np.asarray(pred, dtype=np.float64).ravel()
    truth = np.asarray(truth, dtype=np.float64).ravel()
    if pred.shape != truth.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {truth.shape}")
    denom = np.linalg.norm(truth)
    if denom == 0.0:
        raise ValueError("reference values are identically zero")
    return float(np.linalg.norm(pred - truth) / denom)


GRID_SPATIAL = 32
GRID_TIMES = 16
GRID_BOX = 2.0
SAMPLE_POINTS = 4096


def build_validation_points(sol, mode, seed=0):
    """Fixed evaluation set: (points (N, d), times (N,)).

    grid2d: 32x32 lattice on [-2, 2]^2 crossed with 16 uniform times in [0, 1].
    samples: 4096 draws from the reference initial density with uniform times.
    """
    if mode == "grid2d":
        if sol.dim != 2:
            raise ValueError("grid2d validation is only defined for dim=2")
        axis = np.linspace(-GRID_BOX, GRID_BOX, GRID_SPATIAL)
        xx, yy = np.meshgrid(axis, axis, indexing="ij")
        spatial = np.column_stack([xx.ravel(), yy.ravel()])
        times = np.linspace(0.0, 1.0, GRID_TIMES)
        pts = np.tile(spatial, (GRID_TIMES, 1))
        tt = np.repeat(times, spatial.shape[0])
        return pts, tt
    if mode == "samples":
        rng = np.random.default_rng(seed)
        pts = sol.rho0_std() * rng.standard_normal((SAMPLE_POINTS, sol.dim))
        tt = rng.uniform(0.0, 1.0, size=SAMPLE_POINTS)
        return pts, tt
    raise ValueError(f"unknown validation mode {mode!r}")
