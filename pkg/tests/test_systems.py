"""
Tests for the particle systems.
"""

import math

import numpy as np
import pytest

from pabf import systems
from pabf.checks import check_forces, check_xi_jacobian
from pabf.errors import BrokenConfigurationError, UnsupportedSystemError
from pabf.models import SystemKind, SystemSpec
from pabf.rcgrid import RCGrid


def test_toy_energy_examples(cosine_spec):
    zero = np.zeros((3, 1))
    assert systems.energy(cosine_spec, zero) == pytest.approx(0.0)
    shifted = zero.copy()
    shifted[0, 0] = 0.5
    assert systems.energy(cosine_spec, shifted) == pytest.approx(2.0)
    np.testing.assert_array_equal(systems.forces(cosine_spec, zero), np.zeros((3, 1)))


def test_toy_xi_is_scaled_coordinate_projection():
    spec = SystemSpec(kind=SystemKind.TOY, box_length=2.0)
    positions = np.array([[0.5], [1.5], [0.3]])
    value = systems.xi(spec, positions)
    np.testing.assert_allclose(value.z, [0.25, 0.75])
    assert np.count_nonzero(value.jac1) == 1
    assert value.jac1[0, 0] == 0.5
    assert value.jac2[1, 0] == 0.5


def test_toy_local_mean_force_is_closed_form(cosine_spec):
    positions = np.array([[0.25], [0.0], [0.0]])
    f = systems.local_mean_force_sample(cosine_spec, positions)
    assert f[0] == pytest.approx(2 * math.pi * math.sin(math.pi / 2), abs=1e-12)
    assert f[1] == pytest.approx(0.0, abs=1e-12)


def test_toy_is_periodic_in_every_coordinate():
    spec = SystemSpec(kind=SystemKind.TOY, N=4)
    rng = np.random.default_rng(3)
    positions = rng.uniform(0, 1, size=(4, 1))
    shifted = positions.copy()
    shifted[2, 0] += spec.box_length
    assert systems.energy(spec, shifted) == pytest.approx(systems.energy(spec, positions), abs=1e-12)
    np.testing.assert_allclose(systems.forces(spec, shifted), systems.forces(spec, positions), atol=1e-12)


def test_analytic_free_energy_of_cosine_wells(cosine_spec, grid):
    A = systems.analytic_free_energy(cosine_spec, grid)
    z1, z2 = grid.mesh()
    np.testing.assert_allclose(A.array, -np.cos(2 * np.pi * z1) - np.cos(2 * np.pi * z2), atol=1e-12)


def test_analytic_free_energy_matches_quadrature_over_spectators():
    spec = SystemSpec(kind=SystemKind.TOY, N=3, beta=2.0)
    g = RCGrid(n1=8, n2=8)
    A = systems.analytic_free_energy(spec, g).array

    x3 = (np.arange(4000) + 0.5) / 4000
    z1, z2 = g.mesh()
    points = np.stack(
        [np.broadcast_to(z1[..., None], z1.shape + x3.shape), np.broadcast_to(z2[..., None], z2.shape + x3.shape),
         np.broadcast_to(x3, z1.shape + x3.shape)],
        axis=-1,
    )[..., None]
    weights = np.exp(-spec.beta * systems.energy(spec, points))
    numeric = -np.log(weights.mean(axis=-1)) / spec.beta
    np.testing.assert_allclose(A, numeric - numeric.mean(), atol=1e-8)


def test_analytic_free_energy_needs_toy_system(trimer_spec, grid):
    with pytest.raises(UnsupportedSystemError):
        systems.analytic_free_energy(trimer_spec, grid)


def test_batches_broadcast_like_single_configurations():
    spec = SystemSpec(kind=SystemKind.TOY, N=5)
    batch = np.random.default_rng(1).uniform(0, 1, size=(3, 5, 1))
    energies = systems.energy(spec, batch)
    assert energies.shape == (3,)
    for k in range(3):
        assert energies[k] == pytest.approx(systems.energy(spec, batch[k]))
    assert systems.local_mean_force_sample(spec, batch).shape == (3, 2)


def test_lennard_jones_pair_at_sigma_is_minus_shift(trimer_spec):
    shift = 4.0 * (2.5**-12 - 2.5**-6)
    energy, _ = systems._lj_pair(trimer_spec, np.array(1.0))
    assert float(energy) == pytest.approx(-shift, abs=1e-14)


def test_lennard_jones_force_vanishes_at_cutoff(trimer_spec):
    energy, deriv = systems._lj_pair(trimer_spec, np.array(trimer_spec.r_cut))
    assert float(energy) == 0.0
    assert float(deriv) == 0.0


def test_overlapping_particles_give_finite_energy(trimer_spec):
    positions = systems.initial_configuration(trimer_spec)
    positions[50] = positions[60] + 1e-3
    assert math.isfinite(systems.energy(trimer_spec, positions))
    assert np.all(np.isfinite(systems.forces(trimer_spec, positions)))


def _three_particle_trimer(r1, r2):
    spec = SystemSpec(kind=SystemKind.TRIMER, N=3, box_length=10.0)
    positions = np.array([[1.0, 5.0], [1.0 + r1, 5.0], [1.0 + r1 + r2, 5.0]])
    return spec, positions


def test_trimer_xi_maps_wells_to_delta_and_one_minus_delta():
    spec = SystemSpec(kind=SystemKind.TRIMER, N=3, box_length=10.0)
    _, positions = _three_particle_trimer(spec.r_compact, spec.r_stretched)
    z = systems.xi(spec, positions).z
    assert z[0] == pytest.approx(spec.xi_delta, abs=1e-12)
    assert z[1] == pytest.approx(1.0 - spec.xi_delta, abs=1e-12)


def test_trimer_zero_length_bond_is_broken():
    spec, positions = _three_particle_trimer(1.0, 1.2)
    positions[1] = positions[0]
    with pytest.raises(BrokenConfigurationError):
        systems.xi(spec, positions)


def test_trimer_forces_sum_to_zero(trimer_spec):
    rng = np.random.default_rng(5)
    positions = systems.initial_configuration(trimer_spec) + rng.uniform(-0.1, 0.1, size=(100, 2))
    total = systems.forces(trimer_spec, positions).sum(axis=0)
    np.testing.assert_allclose(total, 0.0, atol=1e-10)


def test_trimer_translation_invariance(trimer_spec):
    rng = np.random.default_rng(6)
    positions = systems.wrap_positions(
        trimer_spec, systems.initial_configuration(trimer_spec) + rng.uniform(-0.1, 0.1, size=(100, 2))
    )
    moved = systems.wrap_positions(trimer_spec, positions + np.array([0.37, 4.3]))
    e0 = systems.energy(trimer_spec, positions)
    assert systems.energy(trimer_spec, moved) == pytest.approx(e0, rel=1e-10)
    np.testing.assert_allclose(
        systems.forces(trimer_spec, moved), systems.forces(trimer_spec, positions), rtol=1e-8, atol=1e-9
    )


def test_trimer_local_mean_force_at_straight_rest_geometry():
    spec, positions = _three_particle_trimer(2.0 ** (1 / 6) + 0.5, 2.0 ** (1 / 6) + 0.5)
    f = systems.local_mean_force_sample(spec, positions)
    slope = (1 - 2 * spec.xi_delta) / (2 * spec.well_width)
    r = positions[1, 0] - positions[0, 0]
    # barrier top of both wells and no bend: only the entropic term remains
    np.testing.assert_allclose(f, -1.0 / (spec.beta * r * slope) * np.ones(2), atol=1e-10)


@pytest.mark.parametrize("kind", [SystemKind.TOY, SystemKind.TRIMER])
def test_forces_match_finite_differences(kind):
    result = check_forces(SystemSpec(kind=kind), configurations=5)
    assert result.passed, result.detail


def test_trimer_xi_jacobian_matches_finite_differences(trimer_spec):
    result = check_xi_jacobian(trimer_spec, configurations=3)
    assert result.passed, result.detail


def test_toy_local_mean_force_averages_to_the_mean_force_at_every_node():
    spec = SystemSpec(kind=SystemKind.TOY, N=6)
    g = RCGrid(n1=8, n2=8)
    z1, z2 = g.mesh()
    exact1, exact2 = systems.analytic_mean_force(spec, g)
    rng = np.random.default_rng(0)
    # many spectator draws per node; the conditional average over them is the mean force
    draws = 50
    positions = rng.uniform(0.0, spec.box_length, size=(draws, g.size, 6, 1))
    positions[:, :, 0, 0] = z1.ravel() * spec.box_length
    positions[:, :, 1, 0] = z2.ravel() * spec.box_length
    f = systems.local_mean_force_sample(spec, positions.reshape(draws * g.size, 6, 1))
    average = f.reshape(draws, g.size, 2).mean(axis=0)
    np.testing.assert_allclose(average[:, 0], exact1.ravel(), atol=1e-10)
    np.testing.assert_allclose(average[:, 1], exact2.ravel(), atol=1e-10)
