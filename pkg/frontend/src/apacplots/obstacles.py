"""Obstacle cost formulas, re-evaluated from the solver's documented forms.

Only the sign of the cost matters here (hatched region = cost > 0); the
formulas match the solver README word for word.  All variants act on the
first two coordinates only.
"""

import numpy as np

VARIANTS = ("twin", "bottleneck", "symmetric")


def _rotation(theta):
    return np.array([[np.cos(theta), -np.sin(theta)],
                     [np.sin(theta), np.cos(theta)]])


def obstacle_cost(variant, xy, gamma_obst=None):
    """Cost at (N, 2) planar points; positive exactly inside the obstacles."""
    xy = np.atleast_2d(np.asarray(xy, dtype=np.float64))
    if variant == "twin":
        gamma = 5.0 if gamma_obst is None else gamma_obst
        rot = _rotation(np.pi / 5.0)
        v = (xy - np.array([-2.0, 0.5])) @ rot
        w = (xy - np.array([2.0, -0.5])) @ rot
        f1 = -5.0 * v[:, 0] ** 2 - 2.0 * v[:, 1] - 1.0
        f2 = -5.0 * w[:, 0] ** 2 + 2.0 * w[:, 1] - 1.0
        return gamma * (np.maximum(f1, 0.0) + np.maximum(f2, 0.0))
    if variant == "bottleneck":
        gamma = 5.0 if gamma_obst is None else gamma_obst
        q = -5.0 * xy[:, 0] ** 2 + xy[:, 1] ** 2
        return gamma * np.maximum(q - 0.1, 0.0)
    if variant == "symmetric":
        gamma = 20.0 if gamma_obst is None else gamma_obst
        q = xy[:, 0] ** 2 + 1.6 * xy[:, 0] * xy[:, 1] + xy[:, 1] ** 2
        return gamma * np.maximum(0.1 - q, 0.0)
    raise ValueError(f"unknown obstacle variant {variant!r}")


def region_mask(variant, x_axis, y_axis):
    """Boolean grid (len(y), len(x)) of points strictly inside the obstacle."""
    xx, yy = np.meshgrid(x_axis, y_axis)
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    return (obstacle_cost(variant, pts) > 0.0).reshape(xx.shape)
