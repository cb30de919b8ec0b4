"""
Tests for the periodic reaction-coordinate grid and its stencils.
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from pabf.errors import CorruptedStateError
from pabf.rcgrid import (
    RCGrid,
    ScalarField,
    VectorField,
    bin_index,
    divergence,
    gradient,
    inner,
    integrate,
    interpolate,
)


def test_nodes_sit_at_bin_centers():
    g = RCGrid(n1=4, n2=8)
    z1, z2 = g.nodes()
    np.testing.assert_allclose(z1, [0.125, 0.375, 0.625, 0.875])
    assert z2[0] == pytest.approx(1.0 / 16.0)
    assert g.shape == (8, 4)
    assert g.size == 32


def test_bin_index_wraps_periodically():
    g = RCGrid(n1=4, n2=4)
    bins = bin_index(g, np.array([[0.0, 0.999], [1.0, -0.01], [0.26, 0.5]]))
    assert bins.tolist() == [[0, 3], [0, 3], [1, 2]]


def test_bin_index_rejects_non_finite():
    g = RCGrid(n1=4, n2=4)
    with pytest.raises(CorruptedStateError):
        bin_index(g, np.array([math.nan, 0.5]))


def test_integrate_constant_is_area(grid):
    assert integrate(ScalarField(grid=grid, values=np.ones(grid.size))) == pytest.approx(1.0)


def test_field_length_and_finiteness_are_validated(grid):
    with pytest.raises(ValidationError):
        ScalarField(grid=grid, values=np.ones(grid.size - 1))
    values = np.ones(grid.size)
    values[3] = math.inf
    with pytest.raises(ValidationError):
        ScalarField(grid=grid, values=values)


def test_field_values_are_read_only(grid):
    field = ScalarField(grid=grid, values=np.zeros(grid.size))
    with pytest.raises(ValueError):
        field.values[0] = 1.0


def test_gradient_of_sine_matches_centered_difference(grid):
    f = grid.sample(lambda z1, z2: np.sin(2 * np.pi * z1) + 0 * z2)
    grad = gradient(f)
    z1, _ = grid.mesh()
    expected = np.cos(2 * np.pi * z1) * np.sin(2 * np.pi * grid.h1) / grid.h1
    np.testing.assert_allclose(grad.arrays[0], expected, atol=1e-12)
    np.testing.assert_allclose(grad.comp2, 0.0, atol=1e-12)


def test_gradient_of_constant_vanishes(grid):
    grad = gradient(ScalarField(grid=grid, values=np.full(grid.size, 3.5)))
    assert np.all(grad.comp1 == 0.0) and np.all(grad.comp2 == 0.0)


def test_divergence_is_negative_adjoint_of_gradient():
    rng = np.random.default_rng(0)
    g = RCGrid(n1=12, n2=20, L1=2.0)
    a = ScalarField(grid=g, values=rng.standard_normal(g.size))
    v = VectorField(grid=g, comp1=rng.standard_normal(g.size), comp2=rng.standard_normal(g.size))
    lhs = inner(gradient(a), v)
    rhs = -inner(a, divergence(v))
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_interpolate_reproduces_node_values(grid):
    f = grid.sample(lambda z1, z2: np.cos(2 * np.pi * z1) * np.sin(4 * np.pi * z2))
    z1, z2 = grid.mesh()
    points = np.stack([z1.ravel(), z2.ravel()], axis=-1)
    values = interpolate(grid, [f.array], points)[:, 0]
    np.testing.assert_allclose(values, f.values, atol=1e-12)


def test_interpolate_is_continuous_across_the_periodic_seam(grid):
    f = grid.sample(lambda z1, z2: z1 * (1 - z1) + z2)
    inside = interpolate(grid, [f.array], np.array([[0.0, 0.3], [1.0 - 1e-13, 0.3]]))
    wrapped = interpolate(grid, [f.array], np.array([[1.0, 0.3], [-1e-13, 0.3]]))
    np.testing.assert_allclose(inside, wrapped, atol=1e-9)
