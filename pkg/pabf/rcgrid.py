"""
Periodic two-dimensional reaction-coordinate grid.

Bin k on axis i covers [k*h_i, (k+1)*h_i); its node value lives at the bin
center (k + 1/2)*h_i. Flat field arrays are row-major with axis 1 fastest, so
the 2-D view has shape (n2, n1) and is indexed [j, i].
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from pabf.errors import CorruptedStateError


class RCGrid(BaseModel):
    """Uniform periodic grid over the reaction-coordinate torus."""

    model_config = ConfigDict(frozen=True)

    n1: int = Field(ge=4)
    n2: int = Field(ge=4)
    L1: float = Field(1.0, gt=0)
    L2: float = Field(1.0, gt=0)

    @property
    def h1(self):
        return self.L1 / self.n1

    @property
    def h2(self):
        return self.L2 / self.n2

    @property
    def shape(self):
        return (self.n2, self.n1)

    @property
    def size(self):
        return self.n1 * self.n2

    @property
    def area(self):
        return self.L1 * self.L2

    def nodes(self):
        """Node coordinates along each axis (bin centers)."""
        z1 = (np.arange(self.n1) + 0.5) * self.h1
        z2 = (np.arange(self.n2) + 0.5) * self.h2
        return z1, z2

    def mesh(self):
        """Node coordinates as two (n2, n1) arrays."""
        z1, z2 = self.nodes()
        return np.meshgrid(z1, z2)

    def reshape(self, values):
        return np.asarray(values, dtype=float).reshape(self.shape)

    def sample(self, func):
        """
        Evaluate func(z1, z2) at every node.

        Args:
            func: Vectorized callable taking two (n2, n1) coordinate arrays.

        Returns:
            ScalarField of the sampled values.
        """
        z1, z2 = self.mesh()
        return ScalarField(grid=self, values=np.broadcast_to(func(z1, z2), self.shape).ravel())


def _as_flat(values, info):
    name = info.field_name
    array = np.array(values, dtype=float).ravel()
    grid = info.data.get("grid")
    if grid is None:
        raise ValueError("field needs a valid grid")
    if array.size != grid.size:
        raise ValueError(f"{name} has {array.size} entries, grid has {grid.size}")
    if not np.all(np.isfinite(array)):
        raise ValueError(f"{name} has non-finite entries")
    array.setflags(write=False)
    return array


class ScalarField(BaseModel):
    """Per-node scalar values on an RCGrid."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: RCGrid
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _check(cls, values, info):
        return _as_flat(values, info)

    @property
    def array(self):
        return self.values.reshape(self.grid.shape)


class VectorField(BaseModel):
    """Per-node two-component vectors on an RCGrid."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: RCGrid
    comp1: np.ndarray
    comp2: np.ndarray

    @field_validator("comp1", "comp2", mode="before")
    @classmethod
    def _check(cls, values, info):
        return _as_flat(values, info)

    @property
    def arrays(self):
        return self.comp1.reshape(self.grid.shape), self.comp2.reshape(self.grid.shape)

    @classmethod
    def zeros(cls, grid):
        return cls(grid=grid, comp1=np.zeros(grid.size), comp2=np.zeros(grid.size))


def wrap(g, z):
    """Map reaction-coordinate values onto [0, L1) x [0, L2)."""
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise CorruptedStateError("non-finite reaction-coordinate value")
    periods = np.array([g.L1, g.L2])
    return np.mod(z, periods)


def bin_index(g, z):
    """
    Bin holding a reaction-coordinate value, after periodic wrapping.

    Args:
        g: The grid.
        z: Array of shape (..., 2).

    Returns:
        Integer array of shape (..., 2) holding (i, j) per point.

    Raises:
        CorruptedStateError: If any coordinate is non-finite.
    """
    w = wrap(g, z)
    i = np.floor(w[..., 0] / g.h1).astype(np.int64) % g.n1
    j = np.floor(w[..., 1] / g.h2).astype(np.int64) % g.n2
    return np.stack([i, j], axis=-1)


def integrate(f):
    """Midpoint-rule integral of a scalar field over the torus."""
    return float(f.grid.h1 * f.grid.h2 * np.sum(f.values))


def inner(a, b):
    """Integrate-weighted dot product of two scalar or two vector fields."""
    weight = a.grid.h1 * a.grid.h2
    if isinstance(a, VectorField):
        return float(weight * (np.dot(a.comp1, b.comp1) + np.dot(a.comp2, b.comp2)))
    return float(weight * np.dot(a.values, b.values))


def gradient_array(a, h1, h2):
    """Centered periodic differences of a (n2, n1) array."""
    d1 = (np.roll(a, -1, axis=1) - np.roll(a, 1, axis=1)) / (2.0 * h1)
    d2 = (np.roll(a, -1, axis=0) - np.roll(a, 1, axis=0)) / (2.0 * h2)
    return d1, d2


def divergence_array(v1, v2, h1, h2):
    """Centered periodic divergence of two (n2, n1) component arrays."""
    return (np.roll(v1, -1, axis=1) - np.roll(v1, 1, axis=1)) / (2.0 * h1) + (
        np.roll(v2, -1, axis=0) - np.roll(v2, 1, axis=0)
    ) / (2.0 * h2)


def gradient(f):
    """Discrete gradient of a scalar field (second-order, periodic)."""
    g = f.grid
    d1, d2 = gradient_array(f.array, g.h1, g.h2)
    return VectorField(grid=g, comp1=d1.ravel(), comp2=d2.ravel())


def divergence(v):
    """Discrete divergence of a vector field, the negative adjoint of gradient."""
    g = v.grid
    v1, v2 = v.arrays
    return ScalarField(grid=g, values=divergence_array(v1, v2, g.h1, g.h2).ravel())


def interpolate(g, arrays, z):
    """
    Periodic bilinear interpolation of node values.

    Args:
        g: The grid.
        arrays: Sequence of (n2, n1) node-value arrays sharing the grid.
        z: Points of shape (..., 2).

    Returns:
        Array of shape (..., len(arrays)).
    """
    w = wrap(g, z)
    s1 = w[..., 0] / g.h1 - 0.5
    s2 = w[..., 1] / g.h2 - 0.5
    f1 = np.floor(s1)
    f2 = np.floor(s2)
    t1 = s1 - f1
    t2 = s2 - f2
    i0 = f1.astype(np.int64) % g.n1
    j0 = f2.astype(np.int64) % g.n2
    i1 = (i0 + 1) % g.n1
    j1 = (j0 + 1) % g.n2
    out = []
    for a in arrays:
        out.append(
            (1 - t1) * (1 - t2) * a[j0, i0]
            + t1 * (1 - t2) * a[j0, i1]
            + (1 - t1) * t2 * a[j1, i0]
            + t1 * t2 * a[j1, i1]
        )
    return np.stack(out, axis=-1)
