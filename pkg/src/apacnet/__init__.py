"""Adversarial solver for stochastic mean-field games.

Two small residual networks play the saddle-point form of the game: one
represents the agent value function (trained with exact time-derivative,
gradient, and Laplacian information from the augmented tape), the other
pushes initial-density samples forward in time to represent the population.
"""

__version__ = "0.1.0"


def backend():
    """Name of the active kernel backend ('cython' or 'numpy')."""
    from apacnet import kernels

    return kernels.BACKEND
