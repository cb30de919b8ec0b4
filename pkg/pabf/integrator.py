"""
Euler-Maruyama integration of biased overdamped Langevin dynamics.

An Ensemble holds M replicas advanced in lockstep under one frozen bias.
Each replica draws its Gaussian increments from its own generator seeded
from (master seed, replica index), so the trajectory of a replica does not
depend on how the replicas are scheduled.
"""

import logging
import math

import numpy as np
from scipy import integrate as quadrature

from pabf import systems
from pabf.errors import IntegratorBlowupError, UnsupportedSystemError
from pabf.models import Mode, MomentReport, SystemKind
from pabf.rcgrid import VectorField, interpolate

logger = logging.getLogger(__name__)


class Ensemble:
    """M replica configurations sharing one SystemSpec."""

    def __init__(self, positions, seed, steps=0, dt=None):
        self.positions = np.array(positions, dtype=float)
        if self.positions.ndim != 3 or self.positions.shape[0] < 1:
            raise ValueError("ensemble positions must have shape (M, N, d) with M >= 1")
        self.seed = int(seed)
        self.generators = [
            np.random.default_rng([self.seed, replica]) for replica in range(self.positions.shape[0])
        ]
        self.steps = steps
        self.time = 0.0 if dt is None else steps * dt

    @classmethod
    def create(cls, spec, replicas, seed):
        """
        Start M replicas from the system's initial configuration.

        Args:
            spec: SystemSpec.
            replicas: Number of replicas M.
            seed: Master seed of the per-replica streams.

        Returns:
            A new Ensemble at time 0.
        """
        start = systems.initial_configuration(spec)
        return cls(np.repeat(start[None], replicas, axis=0), seed)

    @property
    def size(self):
        return self.positions.shape[0]

    def draw_noise(self):
        """One standard normal increment per coordinate, replica by replica."""
        shape = self.positions.shape[1:]
        return np.stack([rng.standard_normal(shape) for rng in self.generators])


class BiasForceView:
    """
    Frozen bias applied during one sweep.

    In PABF mode the field is the projected gradient grad A_t, in ABF mode it
    is the raw estimate F_t. Either way it is interpolated bilinearly at each
    replica's reaction-coordinate value.
    """

    def __init__(self, mode, field):
        if not (np.all(np.isfinite(field.comp1)) and np.all(np.isfinite(field.comp2))):
            raise ValueError("bias field has non-finite entries")
        self.mode = Mode(mode)
        self.field = field

    @classmethod
    def pabf(cls, grad_a):
        return cls(Mode.PABF, grad_a)

    @classmethod
    def abf(cls, force_estimate):
        return cls(Mode.ABF, force_estimate)

    @classmethod
    def zero(cls, grid, mode=Mode.PABF):
        return cls(mode, VectorField.zeros(grid))

    def evaluate(self, z):
        """Bias components B_k at reaction-coordinate values of shape (..., 2)."""
        return interpolate(self.field.grid, self.field.arrays, z)

    def force(self, xi_value):
        """Biasing force sum_k B_k(xi) grad xi_k on every particle."""
        values = self.evaluate(xi_value.z)
        return values[..., 0, None, None] * xi_value.jac1 + values[..., 1, None, None] * xi_value.jac2


def step(spec, ensemble, bias, dt, xi_value=None, force=None, noise=True):
    """
    Advance every replica by one Euler-Maruyama step.

    X <- wrap(X + (F_phys + F_bias) dt + sqrt(2 dt / beta) G)

    Args:
        spec: SystemSpec.
        ensemble: Ensemble, advanced in place.
        bias: BiasForceView or None for unbiased dynamics.
        dt: Time step.
        xi_value: Precomputed xi at the current positions, optional.
        force: Precomputed physical forces at the current positions, optional.
        noise: Set False for the zero-temperature limit.

    Returns:
        The same ensemble.

    Raises:
        IntegratorBlowupError: If any position becomes non-finite.
    """
    if dt <= 0:
        raise ValueError(f"time step must be positive, got {dt}")

    positions = ensemble.positions
    drift = systems.forces(spec, positions) if force is None else force
    if bias is not None:
        if xi_value is None:
            xi_value = systems.xi(spec, positions)
        drift = drift + bias.force(xi_value)

    updated = positions + drift * dt
    if noise:
        updated += math.sqrt(2.0 * dt / spec.beta) * ensemble.draw_noise()

    bad = ~np.all(np.isfinite(updated), axis=(1, 2))
    if np.any(bad):
        replica = int(np.flatnonzero(bad)[0])
        logger.error(f"Integrator blowup in replica {replica} at step {ensemble.steps + 1}")
        raise IntegratorBlowupError(replica, ensemble.steps + 1)

    ensemble.positions = systems.wrap_positions(spec, updated)
    ensemble.steps += 1
    ensemble.time = ensemble.steps * dt
    return ensemble


def boltzmann_reference(spec):
    """E[cos(2 pi x1 / box)] under the Boltzmann marginal of the first toy coordinate."""
    def weight(z):
        return math.exp(-spec.beta * float(systems.toy_potential(spec, z)))

    numerator = quadrature.quad(lambda z: math.cos(2.0 * math.pi * z) * weight(z), 0.0, 1.0, limit=200)[0]
    denominator = quadrature.quad(weight, 0.0, 1.0, limit=200)[0]
    return numerator / denominator


def sample_boltzmann_check(spec, steps, dt, seed, replicas=16, batches=10):
    """
    Compare a time average of the unbiased dynamics with its quadrature value.

    Runs `replicas` independent unbiased trajectories of the toy system and
    time-averages cos(2 pi x1 / box). The standard error comes from batch
    means over all replicas.

    Args:
        spec: SystemSpec of kind toy-separable.
        steps: Steps per replica.
        dt: Time step.
        seed: Master seed.
        replicas: Independent trajectories.
        batches: Batches per trajectory for the batch-means error.

    Returns:
        MomentReport; passed is True when the estimate lies within three
        standard errors of the reference.
    """
    if spec.kind != SystemKind.TOY:
        raise UnsupportedSystemError("the Boltzmann moment check needs the toy-separable system")
    if steps < batches:
        raise ValueError("need at least one step per batch")

    logger.info(f"Boltzmann moment check: {replicas} replicas x {steps} steps, dt={dt}")
    ensemble = Ensemble.create(spec, replicas, seed)
    per_batch = steps // batches
    sums = np.zeros((batches, replicas))
    for k in range(per_batch * batches):
        step(spec, ensemble, None, dt)
        x1 = ensemble.positions.reshape(replicas, -1)[:, 0]
        sums[k // per_batch] += np.cos(2.0 * math.pi * x1 / spec.box_length)

    batch_means = (sums / per_batch).ravel()
    estimate = float(batch_means.mean())
    std_error = float(batch_means.std(ddof=1) / math.sqrt(batch_means.size))
    reference = boltzmann_reference(spec)
    z_score = (estimate - reference) / std_error if std_error > 0 else math.inf
    report = MomentReport(
        steps=per_batch * batches,
        replicas=replicas,
        estimate=estimate,
        std_error=std_error,
        reference=reference,
        z_score=z_score,
        passed=abs(z_score) <= 3.0,
    )
    logger.info(f"Boltzmann moment: estimate {estimate:.5f} +- {std_error:.5f}, reference {reference:.5f}")
    return report
