"""
Particle systems: potential energy, forces, reaction coordinate and local
mean force.

Two kinds are supported. The toy-separable system has an analytic free
energy and serves as an oracle. The trimer system is a two-dimensional
Lennard-Jones fluid holding one trimer whose two bond lengths form the
reaction coordinate.

All functions accept a single configuration of shape (N, d) or a batch of
shape (M, N, d) and broadcast over the leading axes.
"""

import logging

import numpy as np
from pydantic import BaseModel, ConfigDict

from pabf.errors import BrokenConfigurationError, UnsupportedSystemError
from pabf.models import SystemKind
from pabf.rcgrid import ScalarField

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
Z_UPPER = np.nextafter(1.0, 0.0)


class XiValue(BaseModel):
    """Reaction coordinate and its gradients at one or more configurations."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    z: np.ndarray  # (..., 2), in [0, 1)
    jac1: np.ndarray  # (..., N, d)
    jac2: np.ndarray  # (..., N, d)
    div1: np.ndarray  # (...,) divergence of jac1 / |jac1|^2
    div2: np.ndarray


def wrap_positions(spec, positions):
    """Wrap coordinates into [0, box_length)."""
    return np.mod(positions, spec.box_length)


def minimum_image(spec, delta):
    return delta - spec.box_length * np.round(delta / spec.box_length)


def initial_configuration(spec):
    """
    Deterministic starting configuration.

    Toy: all coordinates at the potential minimum 0. Trimer: square lattice
    filled row by row, so the trimer sits on consecutive sites of the first
    row when its indices are consecutive.

    Args:
        spec: SystemSpec.

    Returns:
        Array of shape (N, d).
    """
    if spec.kind == SystemKind.TOY:
        return np.zeros((spec.N, spec.d))

    per_row = int(np.ceil(np.sqrt(spec.N)))
    spacing = spec.box_length / per_row
    index = np.arange(spec.N)
    lattice = np.stack([index % per_row, index // per_row], axis=-1).astype(float)
    positions = (lattice + 0.5) * spacing

    # move the trimer onto consecutive sites so its bonds start short and straight
    a, b, c = spec.trimer_indices
    order = [a, b, c] + [k for k in range(spec.N) if k not in (a, b, c)]
    placed = np.empty_like(positions)
    placed[order] = positions
    return placed


# ---------------------------------------------------------------------------
# toy-separable system


def _toy_w(spec, z):
    a, b = spec.toy_amplitude, spec.toy_b
    return a * ((1.0 - np.cos(TWO_PI * z)) + b * (1.0 - np.cos(2.0 * TWO_PI * z)))


def _toy_dw(spec, z):
    """Derivative of W with respect to the normalized coordinate z."""
    a, b = spec.toy_amplitude, spec.toy_b
    return a * (TWO_PI * np.sin(TWO_PI * z) + 2.0 * TWO_PI * b * np.sin(2.0 * TWO_PI * z))


def _toy_energy(spec, positions):
    flat = positions.reshape(positions.shape[:-2] + (-1,))
    z = flat / spec.box_length
    energy = _toy_w(spec, z[..., 0]) + _toy_w(spec, z[..., 1])
    energy = energy + spec.toy_u_amplitude * np.sum(1.0 - np.cos(TWO_PI * z[..., 2:]), axis=-1)
    return energy


def _toy_forces(spec, positions):
    flat = positions.reshape(positions.shape[:-2] + (-1,))
    z = flat / spec.box_length
    grad = spec.toy_u_amplitude * TWO_PI * np.sin(TWO_PI * z) / spec.box_length
    grad[..., 0] = _toy_dw(spec, z[..., 0]) / spec.box_length
    grad[..., 1] = _toy_dw(spec, z[..., 1]) / spec.box_length
    return -grad.reshape(positions.shape)


def _toy_xi(spec, positions):
    flat = positions.reshape(positions.shape[:-2] + (-1,))
    z = np.mod(flat[..., :2] / spec.box_length, 1.0)
    z = np.minimum(z, Z_UPPER)
    jac1 = np.zeros_like(flat)
    jac2 = np.zeros_like(flat)
    jac1[..., 0] = 1.0 / spec.box_length
    jac2[..., 1] = 1.0 / spec.box_length
    zero = np.zeros(flat.shape[:-1])
    return XiValue(
        z=z,
        jac1=jac1.reshape(positions.shape),
        jac2=jac2.reshape(positions.shape),
        div1=zero,
        div2=zero,
    )


# ---------------------------------------------------------------------------
# trimer system


def _lj_pair(spec, r):
    """Truncated-shifted Lennard-Jones energy and dE/dr, quadratic below r_min."""
    eps, sig = spec.epsilon, spec.sigma

    def raw(x):
        s6 = (sig / x) ** 6
        return 4.0 * eps * (s6 * s6 - s6)

    def d1(x):
        s6 = (sig / x) ** 6
        return 4.0 * eps * (-12.0 * s6 * s6 + 6.0 * s6) / x

    def d2(x):
        s6 = (sig / x) ** 6
        return 4.0 * eps * (156.0 * s6 * s6 - 42.0 * s6) / (x * x)

    shift = raw(spec.r_cut)
    e_min, d_min, c_min = raw(spec.r_min) - shift, d1(spec.r_min), d2(spec.r_min)

    inside = r < spec.r_cut
    clamped = r < spec.r_min
    safe = np.where(clamped | ~inside, spec.r_min, r)
    delta = r - spec.r_min

    energy = np.where(clamped, e_min + d_min * delta + 0.5 * c_min * delta * delta, raw(safe) - shift)
    deriv = np.where(clamped, d_min + c_min * delta, d1(safe))
    return np.where(inside, energy, 0.0), np.where(inside, deriv, 0.0)


def _double_well(spec, r):
    """Bond energy D(1 - q^2)^2 with q = (r - r0 - w)/w, and dE/dr."""
    w = spec.well_width
    q = (r - spec.r0 - w) / w
    one_minus = 1.0 - q * q
    return spec.well_depth * one_minus**2, -4.0 * spec.well_depth * q * one_minus / w


def _lj_mask(spec):
    mask = ~np.eye(spec.N, dtype=bool)
    a, b, c = spec.trimer_indices
    for i, j in ((a, b), (b, c)):
        mask[i, j] = mask[j, i] = False
    return mask


def _bond_vectors(spec, positions):
    a, b, c = spec.trimer_indices
    b1 = minimum_image(spec, positions[..., b, :] - positions[..., a, :])
    b2 = minimum_image(spec, positions[..., c, :] - positions[..., b, :])
    r1 = np.linalg.norm(b1, axis=-1)
    r2 = np.linalg.norm(b2, axis=-1)
    if np.any(r1 == 0.0) or np.any(r2 == 0.0):
        raise BrokenConfigurationError("trimer bond of zero length")
    return b1, b2, r1, r2


def _angle_terms(spec, positions):
    """
    Angle energy and its gradients with respect to the two arm vectors.

    The deviation from a straight angle is the signed angle between
    u = x_a - x_b and -v = -(x_c - x_b), smooth around theta = pi.
    """
    a, b, c = spec.trimer_indices
    u = minimum_image(spec, positions[..., a, :] - positions[..., b, :])
    v = minimum_image(spec, positions[..., c, :] - positions[..., b, :])
    cross = u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]
    dot = np.sum(u * v, axis=-1)
    x, y = -dot, -cross
    alpha = np.arctan2(y, x)
    den = (x * x + y * y)[..., None]

    dalpha_du = (x[..., None] * np.stack([-v[..., 1], v[..., 0]], axis=-1) + y[..., None] * v) / den
    dalpha_dv = (x[..., None] * np.stack([u[..., 1], -u[..., 0]], axis=-1) + y[..., None] * u) / den
    dE = (spec.k_theta * alpha)[..., None]
    return 0.5 * spec.k_theta * alpha**2, dE * dalpha_du, dE * dalpha_dv


def _trimer_energy(spec, positions):
    delta = minimum_image(spec, positions[..., None, :, :] - positions[..., :, None, :])
    r = np.linalg.norm(delta, axis=-1)
    mask = _lj_mask(spec)
    pair_energy, _ = _lj_pair(spec, np.where(mask, r, spec.r_cut))
    energy = 0.5 * np.sum(np.where(mask, pair_energy, 0.0), axis=(-1, -2))

    _, _, r1, r2 = _bond_vectors(spec, positions)
    energy = energy + _double_well(spec, r1)[0] + _double_well(spec, r2)[0]
    return energy + _angle_terms(spec, positions)[0]


def _trimer_forces(spec, positions):
    a, b, c = spec.trimer_indices
    # delta[..., i, j, :] = x_j - x_i
    delta = minimum_image(spec, positions[..., None, :, :] - positions[..., :, None, :])
    r = np.linalg.norm(delta, axis=-1)
    mask = _lj_mask(spec)
    safe_r = np.where(mask, r, spec.r_cut)
    _, deriv = _lj_pair(spec, safe_r)
    coef = np.where(mask, deriv / safe_r, 0.0)
    forces = np.sum(coef[..., None] * delta, axis=-2)

    b1, b2, r1, r2 = _bond_vectors(spec, positions)
    g1 = (_double_well(spec, r1)[1] / r1)[..., None] * b1
    g2 = (_double_well(spec, r2)[1] / r2)[..., None] * b2
    forces[..., a, :] += g1
    forces[..., b, :] -= g1
    forces[..., b, :] += g2
    forces[..., c, :] -= g2

    _, grad_u, grad_v = _angle_terms(spec, positions)
    forces[..., a, :] -= grad_u
    forces[..., c, :] -= grad_v
    forces[..., b, :] += grad_u + grad_v
    return forces


def _trimer_xi(spec, positions):
    a, b, c = spec.trimer_indices
    b1, b2, r1, r2 = _bond_vectors(spec, positions)
    slope = (1.0 - 2.0 * spec.xi_delta) / (spec.r_stretched - spec.r_compact)

    def affine(r):
        return np.clip(spec.xi_delta + slope * (r - spec.r_compact), 0.0, Z_UPPER)

    e1 = b1 / r1[..., None]
    e2 = b2 / r2[..., None]
    jac1 = np.zeros(positions.shape)
    jac2 = np.zeros(positions.shape)
    jac1[..., a, :] = -slope * e1
    jac1[..., b, :] = slope * e1
    jac2[..., b, :] = -slope * e2
    jac2[..., c, :] = slope * e2

    # div(grad xi / |grad xi|^2) for a bond length shared by two particles
    dims = spec.d - 1
    return XiValue(
        z=np.stack([affine(r1), affine(r2)], axis=-1),
        jac1=jac1,
        jac2=jac2,
        div1=dims / (r1 * slope),
        div2=dims / (r2 * slope),
    )


# ---------------------------------------------------------------------------
# public operations


def energy(spec, positions):
    """
    Total potential energy V.

    Args:
        spec: SystemSpec.
        positions: Array of shape (N, d) or (M, N, d).

    Returns:
        Energy as a float, or an (M,) array for a batch.
    """
    positions = np.asarray(positions, dtype=float)
    if spec.kind == SystemKind.TOY:
        return _toy_energy(spec, positions)
    return _trimer_energy(spec, positions)


def forces(spec, positions):
    """
    Exact forces -grad V, same shape as positions.

    Args:
        spec: SystemSpec.
        positions: Array of shape (N, d) or (M, N, d).

    Returns:
        Force array of the input's shape.
    """
    positions = np.asarray(positions, dtype=float)
    if spec.kind == SystemKind.TOY:
        return _toy_forces(spec, positions)
    return _trimer_forces(spec, positions)


def xi(spec, positions):
    """
    Normalized reaction coordinate in [0, 1)^2 with its jacobians.

    Raises:
        BrokenConfigurationError: If a trimer bond has zero length.
    """
    positions = np.asarray(positions, dtype=float)
    if spec.kind == SystemKind.TOY:
        return _toy_xi(spec, positions)
    return _trimer_xi(spec, positions)


def local_mean_force_sample(spec, positions, xi_value=None, force=None):
    """
    Local mean force f_k = grad V . w_k - div(w_k)/beta with w_k = grad xi_k / |grad xi_k|^2.

    Its conditional average given xi = z is the mean force dA/dz_k.

    Args:
        spec: SystemSpec.
        positions: Array of shape (N, d) or (M, N, d).
        xi_value: Precomputed xi(spec, positions), optional.
        force: Precomputed forces(spec, positions), optional.

    Returns:
        Array of shape (..., 2).
    """
    positions = np.asarray(positions, dtype=float)
    if xi_value is None:
        xi_value = xi(spec, positions)
    if force is None:
        force = forces(spec, positions)

    samples = []
    for jac, div in ((xi_value.jac1, xi_value.div1), (xi_value.jac2, xi_value.div2)):
        norm2 = np.sum(jac * jac, axis=(-1, -2))
        projected = -np.sum(force * jac, axis=(-1, -2)) / norm2
        samples.append(projected - div / spec.beta)
    return np.stack(samples, axis=-1)


def analytic_free_energy(spec, g):
    """
    Exact free energy of the toy-separable system on the grid nodes.

    A(z1, z2) = W(z1) + W(z2) up to a constant; the remaining coordinates only
    contribute an additive constant. Returned mean-shifted to zero.

    Args:
        spec: SystemSpec of kind toy-separable.
        g: RCGrid over the normalized coordinate.

    Returns:
        ScalarField with zero mean.

    Raises:
        UnsupportedSystemError: For any other kind.
    """
    if spec.kind != SystemKind.TOY:
        raise UnsupportedSystemError(f"no analytic free energy for {spec.kind.value} systems")
    values = g.sample(lambda z1, z2: _toy_w(spec, z1) + _toy_w(spec, z2)).values
    return ScalarField(grid=g, values=values - values.mean())


def analytic_mean_force(spec, g):
    """
    Exact mean force dA/dz of the toy-separable system on the grid nodes.

    Returns:
        (comp1, comp2) arrays of shape (n2, n1).
    """
    if spec.kind != SystemKind.TOY:
        raise UnsupportedSystemError(f"no analytic mean force for {spec.kind.value} systems")
    z1, z2 = g.mesh()
    return _toy_dw(spec, z1), _toy_dw(spec, z2)


def toy_potential(spec, z):
    """The one-dimensional toy potential W at normalized coordinates z."""
    return _toy_w(spec, np.asarray(z, dtype=float))
