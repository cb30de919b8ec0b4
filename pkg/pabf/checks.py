"""
Built-in numerical correctness suite behind `pabf check`.

Every check returns a CheckResult instead of raising, so the command can list
all outcomes before deciding on the exit code.
"""

import logging
import math

import numpy as np
from scipy import special

from pabf import systems
from pabf.estimator import BiasState
from pabf.integrator import sample_boltzmann_check
from pabf.models import CheckResult, SystemKind, SystemSpec
from pabf.projection import apply_weighted_laplacian, project
from pabf.rcgrid import RCGrid, ScalarField, VectorField, divergence, gradient, inner

logger = logging.getLogger(__name__)

FD_STEP = 1e-6
FD_TOLERANCE = 1e-5
ADJOINT_TOLERANCE = 1e-10
CHUNK = 40


def _finite_difference_forces(spec, positions):
    """Central differences of the energy, all coordinates of one configuration."""
    n = positions.size
    out = np.empty(n)
    for start in range(0, n, CHUNK):
        idx = np.arange(start, min(start + CHUNK, n))
        shifts = np.zeros((idx.size, n))
        shifts[np.arange(idx.size), idx] = FD_STEP
        plus = positions.ravel()[None] + shifts
        minus = positions.ravel()[None] - shifts
        e_plus = systems.energy(spec, plus.reshape((-1,) + positions.shape))
        e_minus = systems.energy(spec, minus.reshape((-1,) + positions.shape))
        out[idx] = -(e_plus - e_minus) / (2.0 * FD_STEP)
    return out.reshape(positions.shape)


def _random_configuration(spec, rng):
    if spec.kind == SystemKind.TOY:
        return rng.uniform(0.0, spec.box_length, size=(spec.N, spec.d))
    start = systems.initial_configuration(spec)
    spacing = spec.box_length / math.ceil(math.sqrt(spec.N))
    positions = start + rng.uniform(-0.1, 0.1, size=start.shape) * spacing

    # bond lengths spread over the whole compact-to-stretched range, bend up to 0.5 rad
    a, b, c = spec.trimer_indices
    r1, r2 = rng.uniform(spec.r_compact, spec.r_stretched, size=2)
    theta1 = rng.uniform(0.0, 2.0 * math.pi)
    theta2 = theta1 + rng.uniform(-0.5, 0.5)
    positions[b] = positions[a] + r1 * np.array([math.cos(theta1), math.sin(theta1)])
    positions[c] = positions[b] + r2 * np.array([math.cos(theta2), math.sin(theta2)])
    return systems.wrap_positions(spec, positions)


def _relative_error(estimate, exact):
    return float(np.max(np.abs(estimate - exact)) / max(np.max(np.abs(exact)), 1.0))


def check_forces(spec, configurations=100, seed=0):
    """Forces against central finite differences of the energy."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(configurations):
        positions = _random_configuration(spec, rng)
        worst = max(worst, _relative_error(_finite_difference_forces(spec, positions), systems.forces(spec, positions)))
    return CheckResult(
        name=f"forces-vs-finite-differences[{spec.kind.value}]",
        passed=worst <= FD_TOLERANCE,
        detail=f"max relative error {worst:.3e} over {configurations} configurations",
    )


def check_xi_jacobian(spec, configurations=100, seed=1):
    """Jacobians of xi against finite differences, away from the clamped range."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = 0
    for _ in range(configurations):
        positions = _random_configuration(spec, rng)
        value = systems.xi(spec, positions)
        if np.any(value.z <= 0.0) or np.any(value.z >= 0.999):
            continue
        checked += 1
        flat = positions.ravel()
        fd = np.empty((2, flat.size))
        for k in range(flat.size):
            step = np.zeros_like(flat)
            step[k] = FD_STEP
            up = systems.xi(spec, (flat + step).reshape(positions.shape)).z
            down = systems.xi(spec, (flat - step).reshape(positions.shape)).z
            fd[:, k] = (up - down) / (2.0 * FD_STEP)
        exact = np.stack([value.jac1.ravel(), value.jac2.ravel()])
        worst = max(worst, _relative_error(fd, exact))
    return CheckResult(
        name=f"xi-jacobian[{spec.kind.value}]",
        passed=checked > 0 and worst <= FD_TOLERANCE,
        detail=f"max relative error {worst:.3e} over {checked} configurations",
    )


def _smooth_weight(grid):
    return grid.sample(lambda z1, z2: 1.0 + 0.5 * np.sin(2 * np.pi * z1) * np.cos(2 * np.pi * z2))


def check_adjointness(n=32, seed=2):
    """<grad a, v> = -<a, div v> and symmetry of the weighted Laplacian."""
    rng = np.random.default_rng(seed)
    grid = RCGrid(n1=n, n2=n + 4)
    a = ScalarField(grid=grid, values=rng.standard_normal(grid.size))
    b = ScalarField(grid=grid, values=rng.standard_normal(grid.size))
    v = VectorField(grid=grid, comp1=rng.standard_normal(grid.size), comp2=rng.standard_normal(grid.size))

    grad_a = gradient(a)
    gap = abs(inner(grad_a, v) + inner(a, divergence(v)))
    scale = math.sqrt(inner(grad_a, grad_a) * inner(v, v))

    psi = _smooth_weight(grid)
    la = ScalarField(grid=grid, values=apply_weighted_laplacian(psi, a.array).ravel())
    lb = ScalarField(grid=grid, values=apply_weighted_laplacian(psi, b.array).ravel())
    symmetry = abs(inner(la, b) - inner(a, lb)) / math.sqrt(inner(la, la) * inner(b, b))

    worst = max(gap / scale, symmetry)
    return CheckResult(
        name="operator-adjointness",
        passed=worst <= ADJOINT_TOLERANCE,
        detail=f"gradient/divergence {gap / scale:.3e}, weighted laplacian {symmetry:.3e}",
    )


def check_idempotence(n=16, tol=1e-8, seed=3):
    """Projecting a projected gradient reproduces it."""
    rng = np.random.default_rng(seed)
    grid = RCGrid(n1=n, n2=n)
    F = VectorField(grid=grid, comp1=rng.standard_normal(grid.size), comp2=rng.standard_normal(grid.size))
    psi = _smooth_weight(grid)
    first = project(F, psi, tol=tol)
    second = project(first.gradA, psi, tol=tol)
    diff = np.hypot(second.gradA.comp1 - first.gradA.comp1, second.gradA.comp2 - first.gradA.comp2)
    norm = np.hypot(first.gradA.comp1, first.gradA.comp2)
    error = float(np.linalg.norm(diff) / np.linalg.norm(norm))
    return CheckResult(
        name="projection-idempotence",
        passed=error <= 10.0 * tol,
        detail=f"relative change {error:.3e} (limit {10.0 * tol:.1e})",
    )


def check_boltzmann(steps=100000, seed=4):
    """Unbiased toy dynamics against the von Mises mean resultant I1(beta)/I0(beta)."""
    spec = SystemSpec(kind=SystemKind.TOY, beta=1.0, toy_b=0.0)
    report = sample_boltzmann_check(spec, steps=steps, dt=5e-4, seed=seed)
    exact = float(special.i1(spec.beta) / special.i0(spec.beta))
    return CheckResult(
        name="boltzmann-moment",
        passed=report.passed and abs(report.reference - exact) <= 1e-8,
        detail=f"estimate {report.estimate:.5f} +- {report.std_error:.5f}, exact {exact:.5f}, z={report.z_score:.2f}",
    )


def check_deposit_conservation(samples=10000, seed=5):
    """Every deposited sample lands in exactly one bin."""
    rng = np.random.default_rng(seed)
    state = BiasState(RCGrid(n1=64, n2=64))
    z = rng.uniform(0.0, 1.0, size=(samples, 2))
    state.deposit(z, rng.standard_normal((samples, 2)))
    half = samples // 2
    split = BiasState(state.grid)
    split.deposit(z[:half], np.zeros((half, 2)))
    split.merge(BiasState(state.grid).deposit(z[half:], np.zeros((samples - half, 2))))
    passed = state.total == samples and np.array_equal(split.count, state.count)
    return CheckResult(
        name="deposit-conservation",
        passed=bool(passed),
        detail=f"{state.total} of {samples} samples counted",
    )


def run_checks(quick=False):
    """
    Run the whole suite.

    Args:
        quick: Use fewer configurations and shorter trajectories.

    Returns:
        List of CheckResult in execution order.
    """
    configurations = 10 if quick else 100
    toy = SystemSpec(kind=SystemKind.TOY)
    trimer = SystemSpec(kind=SystemKind.TRIMER)
    suite = [
        lambda: check_forces(toy, configurations),
        lambda: check_forces(trimer, configurations),
        lambda: check_xi_jacobian(trimer, configurations),
        lambda: check_adjointness(),
        lambda: check_idempotence(),
        lambda: check_boltzmann(steps=20000 if quick else 100000),
        lambda: check_deposit_conservation(),
    ]
    results = []
    for check in suite:
        result = check()
        log = logger.info if result.passed else logger.error
        log(f"{result.name}: {'pass' if result.passed else 'FAIL'} ({result.detail})")
        results.append(result)
    return results
