"""
Diagnostics: cross-run variances, free-energy error and xi marginals.
"""

import math

import numpy as np

from pabf.errors import DegenerateReferenceError, InsufficientReplicationError
from pabf.models import VarianceVerdict
from pabf.rcgrid import ScalarField, integrate

REDUCTION_FRACTION = 0.95


def _stack_components(fields):
    if len(fields) < 2:
        raise InsufficientReplicationError(f"need at least 2 runs, got {len(fields)}")
    grid = fields[0].grid
    if any(field.grid != grid for field in fields):
        raise ValueError("fields live on different grids")
    comp1 = np.stack([field.comp1 for field in fields])
    comp2 = np.stack([field.comp2 for field in fields])
    return grid, comp1, comp2


def integrated_variance(fields):
    """
    Integral of Var(F^1) + Var(F^2) across independent runs.

    Args:
        fields: R >= 2 VectorFields on one grid, one per run.

    Returns:
        integrate of the per-bin unbiased sample variances, summed over components.
    """
    grid, comp1, comp2 = _stack_components(fields)
    per_bin = comp1.var(axis=0, ddof=1) + comp2.var(axis=0, ddof=1)
    return integrate(ScalarField(grid=grid, values=per_bin))


def integrated_norm_variance(fields):
    """Integral of the cross-run sample variance of the Euclidean norm |F|."""
    grid, comp1, comp2 = _stack_components(fields)
    norms = np.hypot(comp1, comp2)
    return integrate(ScalarField(grid=grid, values=norms.var(axis=0, ddof=1)))


def variance_standard_error(value, runs):
    """Standard error of a sample variance from `runs` roughly Gaussian samples."""
    if runs < 2:
        raise InsufficientReplicationError(f"need at least 2 runs, got {runs}")
    return value * math.sqrt(2.0 / (runs - 1))


def variance_reduction_holds(var_projected, var_raw, runs, allowance=2.0):
    """
    The projected variance does not exceed the raw one beyond `allowance`
    standard errors of their difference.
    """
    se = math.hypot(variance_standard_error(var_projected, runs), variance_standard_error(var_raw, runs))
    return var_projected <= var_raw + allowance * se


def variance_verdict(var_projected, var_raw, runs, fraction=REDUCTION_FRACTION, allowance=2.0):
    """
    Variance-reduction verdict over paired integrated variances.

    The projected variance must not exceed the raw one at `fraction` of the
    matched times or more, and every excess must stay within `allowance`
    standard errors.

    Args:
        var_projected: Integrated variances of the projected field, one per time.
        var_raw: Integrated variances of the raw field at the same times.
        runs: Number of independent runs behind each variance.
        fraction: Share of times at which the raw inequality must hold.
        allowance: Standard errors tolerated for the remaining times.

    Returns:
        VarianceVerdict.
    """
    pairs = list(zip(var_projected, var_raw, strict=True))
    if not pairs:
        raise ValueError("no snapshot times to compare")
    reduced = sum(1 for g, f in pairs if g <= f)
    within = sum(1 for g, f in pairs if variance_reduction_holds(g, f, runs, allowance))
    share = reduced / len(pairs)
    return VarianceVerdict(
        times=len(pairs),
        reduced=reduced,
        within_allowance=within,
        fraction_reduced=share,
        passed=share >= fraction and within == len(pairs),
    )


def _centered(field):
    return field.values - field.values.mean()


def l2_error(A_est, A_ref):
    """
    Normalized L2 distance between two free energies, ignoring constants.

    Returns:
        sqrt(integrate((A_est - A_ref)^2) / integrate(A_ref^2)) after mean shifts.

    Raises:
        DegenerateReferenceError: If A_ref is constant.
    """
    if A_est.grid != A_ref.grid:
        raise ValueError("free energies live on different grids")
    g = A_ref.grid
    ref = _centered(A_ref)
    diff = _centered(A_est) - ref
    norm = integrate(ScalarField(grid=g, values=ref * ref))
    if norm <= 0.0:
        raise DegenerateReferenceError("reference free energy is constant")
    return math.sqrt(integrate(ScalarField(grid=g, values=diff * diff)) / norm)


def weighted_force_error(grad_est, grad_ref, psi):
    """Integral of |grad_est - grad_ref|^2 psi over the torus."""
    g = psi.grid
    d1 = grad_est.comp1 - grad_ref.comp1
    d2 = grad_est.comp2 - grad_ref.comp2
    return integrate(ScalarField(grid=g, values=(d1 * d1 + d2 * d2) * psi.values))


def marginals(psi):
    """
    Marginal densities of xi_1 and xi_2.

    Returns:
        (m1, m2) with m1[i] = h2 * sum_j psi[j, i] and m2[j] = h1 * sum_i psi[j, i].
    """
    g = psi.grid
    a = psi.array
    return g.h2 * a.sum(axis=0), g.h1 * a.sum(axis=1)


def flatness(m):
    """Population variance of a marginal about its mean; zero iff uniform."""
    return float(np.var(np.asarray(m, dtype=float)))


def neg_log_flatness(value):
    return -math.log(max(value, 1e-300))


def time_to_flatness(snapshots, threshold):
    """
    First snapshot time at which both marginals are flatter than threshold.

    Args:
        snapshots: Snapshot records of one run, in time order.
        threshold: Flatness level to reach.

    Returns:
        The time, or math.inf when never reached.
    """
    for snapshot in snapshots:
        if snapshot.flatness1 <= threshold and snapshot.flatness2 <= threshold:
            return snapshot.t
    return math.inf
