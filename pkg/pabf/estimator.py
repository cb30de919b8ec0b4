"""
Binned running estimator of the mean force F_t and of the density of xi.

Samples accumulate over the whole run (no window). A bin's force estimate is
ramped in linearly until it holds n_min samples.
"""

import logging

import numpy as np

from pabf.errors import CorruptedStateError
from pabf.rcgrid import ScalarField, VectorField, bin_index

logger = logging.getLogger(__name__)


class BiasState:
    """Per-bin occupancy counts and local-mean-force sums."""

    def __init__(self, grid, n_min=50, eps_density=1e-3):
        if n_min < 1:
            raise ValueError("n_min must be at least 1")
        if eps_density <= 0:
            raise ValueError("eps_density must be positive")
        self.grid = grid
        self.n_min = n_min
        self.eps_density = eps_density
        self.count = np.zeros(grid.shape, dtype=np.int64)
        self.sum1 = np.zeros(grid.shape)
        self.sum2 = np.zeros(grid.shape)

    @property
    def total(self):
        return int(self.count.sum())

    def deposit(self, z, f):
        """
        Add local-mean-force samples to their bins.

        Args:
            z: Reaction-coordinate values, shape (2,) or (M, 2).
            f: Local mean force samples of the same shape.

        Returns:
            This BiasState.

        Raises:
            CorruptedStateError: If a force sample is non-finite.
        """
        z = np.atleast_2d(np.asarray(z, dtype=float))
        f = np.atleast_2d(np.asarray(f, dtype=float))
        if not np.all(np.isfinite(f)):
            raise CorruptedStateError("non-finite local mean force sample")
        bins = bin_index(self.grid, z)
        index = (bins[:, 1], bins[:, 0])
        np.add.at(self.count, index, 1)
        np.add.at(self.sum1, index, f[:, 0])
        np.add.at(self.sum2, index, f[:, 1])
        return self

    def merge(self, other):
        """Add another worker's partial accumulators into this state."""
        if other.grid != self.grid:
            raise ValueError("cannot merge estimators on different grids")
        self.count += other.count
        self.sum1 += other.sum1
        self.sum2 += other.sum2
        return self

    def ramp(self):
        """Per-bin weight min(count / n_min, 1)."""
        return np.minimum(self.count / self.n_min, 1.0)

    def force_field(self):
        """
        Current estimate F_t.

        Returns:
            VectorField with F_k = ramp(count) * sum_k / max(count, 1).
        """
        scale = self.ramp() / np.maximum(self.count, 1)
        return VectorField(grid=self.grid, comp1=(scale * self.sum1).ravel(), comp2=(scale * self.sum2).ravel())

    def density_field(self, floored=True):
        """
        Histogram density of xi, normalized to integrate to one.

        Args:
            floored: Apply the eps_density floor used inside the projection.

        Returns:
            ScalarField; uniform 1/area when no sample has been deposited.
        """
        g = self.grid
        total = self.total
        if total == 0:
            psi = np.full(g.shape, 1.0 / g.area)
        else:
            psi = self.count / (total * g.h1 * g.h2)
        if floored:
            psi = np.maximum(psi, self.eps_density)
        return ScalarField(grid=g, values=psi.ravel())
