"""
File persistence for the PABF toolkit.

This module reads and writes the CSV formats of grid fields, marginals,
estimator checkpoints, configurations and time series, plus the run manifest.
Floats are written with 17 significant digits so they read back bit-exactly.
"""

import csv
import logging
import math
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from pabf import __version__
from pabf.config import format_config
from pabf.diagnostics import marginals
from pabf.estimator import BiasState
from pabf.rcgrid import RCGrid, ScalarField, VectorField

logger = logging.getLogger(__name__)

SCALAR_HEADER = ["i", "j", "z1", "z2", "value"]
VECTOR_HEADER = ["i", "j", "z1", "z2", "v1", "v2"]
MARGINAL_HEADER = ["axis", "index", "z", "value"]
BIAS_STATE_HEADER = ["i", "j", "count", "sum1", "sum2"]
TIMESERIES_HEADER = ["t", "int_var_F", "int_var_gradA", "l2_error", "neg_log_flatness1", "neg_log_flatness2"]
SUMMARY_HEADER = TIMESERIES_HEADER + [
    "int_var_F_se",
    "int_var_gradA_se",
    "int_norm_var_F",
    "int_norm_var_gradA",
    "variance_reduction_ok",
    "variance_reduced",
]


def fmt(value):
    """Format a number the way every CSV of the toolkit does."""
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    value = float(value)
    if math.isnan(value):
        return "nan"
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.17g}"


@contextmanager
def open_output(path):
    """
    Context manager for output files.

    Creates missing parent directories and yields a text handle.

    Yields:
        Writable file object.
    """
    path = Path(path)
    handle = None
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        logger.debug(f"Writing {path}")
        handle = open(path, "w", newline="", encoding="utf-8")
        yield handle
    except OSError as e:
        logger.error(f"Error writing {path}: {e}", exc_info=True)
        raise
    finally:
        if handle:
            handle.close()


def write_rows(path, header, rows):
    """Write a CSV with a header row; every cell goes through fmt unless it is a string."""
    with open_output(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else fmt(cell) for cell in row])


def _read_rows(path, header):
    with open(path, "r", newline="", encoding="utf-8") as handle:
        reader = csv.reader(handle)
        found = next(reader, None)
        if found != header:
            raise ValueError(f"{path}: expected header {','.join(header)}, found {found}")
        return [row for row in reader if row]


def _node_rows(grid):
    z1, z2 = grid.nodes()
    for j in range(grid.n2):
        for i in range(grid.n1):
            yield i, j, z1[i], z2[j]


def write_scalar_field(path, field):
    """Dump a ScalarField as `i,j,z1,z2,value`, row-major with axis 1 fastest."""
    values = field.values
    rows = (
        (i, j, z1, z2, values[j * field.grid.n1 + i]) for i, j, z1, z2 in _node_rows(field.grid)
    )
    write_rows(path, SCALAR_HEADER, rows)


def write_vector_field(path, field):
    """Dump a VectorField as `i,j,z1,z2,v1,v2`."""
    n1 = field.grid.n1
    rows = (
        (i, j, z1, z2, field.comp1[j * n1 + i], field.comp2[j * n1 + i])
        for i, j, z1, z2 in _node_rows(field.grid)
    )
    write_rows(path, VECTOR_HEADER, rows)


def _grid_from_rows(path, rows):
    i = np.array([int(row[0]) for row in rows])
    j = np.array([int(row[1]) for row in rows])
    n1, n2 = int(i.max()) + 1, int(j.max()) + 1
    if len(rows) != n1 * n2:
        raise ValueError(f"{path}: {len(rows)} rows do not cover a {n1}x{n2} grid")
    last = next(row for row in rows if int(row[0]) == n1 - 1 and int(row[1]) == n2 - 1)
    h1 = float(last[2]) / (n1 - 0.5)
    h2 = float(last[3]) / (n2 - 0.5)
    # periods are written through the node centers, so snap away the last-digit noise
    grid = RCGrid(n1=n1, n2=n2, L1=round(h1 * n1, 12), L2=round(h2 * n2, 12))
    return grid, j * n1 + i


def read_scalar_field(path):
    """Read a scalar field dump; the grid is recovered from the node columns."""
    rows = _read_rows(path, SCALAR_HEADER)
    grid, flat = _grid_from_rows(path, rows)
    values = np.empty(grid.size)
    values[flat] = [float(row[4]) for row in rows]
    return ScalarField(grid=grid, values=values)


def read_vector_field(path):
    """Read a vector field dump."""
    rows = _read_rows(path, VECTOR_HEADER)
    grid, flat = _grid_from_rows(path, rows)
    comp1 = np.empty(grid.size)
    comp2 = np.empty(grid.size)
    comp1[flat] = [float(row[4]) for row in rows]
    comp2[flat] = [float(row[5]) for row in rows]
    return VectorField(grid=grid, comp1=comp1, comp2=comp2)


def write_marginals(path, psi):
    """Dump both marginals of a density as `axis,index,z,value`."""
    m1, m2 = marginals(psi)
    z1, z2 = psi.grid.nodes()
    rows = [(1, k, z1[k], m1[k]) for k in range(len(m1))]
    rows += [(2, k, z2[k], m2[k]) for k in range(len(m2))]
    write_rows(path, MARGINAL_HEADER, rows)


def write_bias_state(path, state):
    """Checkpoint a BiasState as `i,j,count,sum1,sum2`."""
    g = state.grid
    rows = (
        (i, j, state.count[j, i], state.sum1[j, i], state.sum2[j, i])
        for j in range(g.n2)
        for i in range(g.n1)
    )
    write_rows(path, BIAS_STATE_HEADER, rows)


def read_bias_state(path, grid, n_min=50, eps_density=1e-3):
    """
    Restore a BiasState checkpoint bit-exactly.

    Args:
        path: Checkpoint written by write_bias_state.
        grid: Grid the checkpoint was taken on.
        n_min: Ramp threshold of the restored state.
        eps_density: Density floor of the restored state.

    Returns:
        BiasState holding the checkpointed accumulators.
    """
    state = BiasState(grid, n_min=n_min, eps_density=eps_density)
    for row in _read_rows(path, BIAS_STATE_HEADER):
        i, j = int(row[0]), int(row[1])
        state.count[j, i] = int(row[2])
        state.sum1[j, i] = float(row[3])
        state.sum2[j, i] = float(row[4])
    logger.info(f"Restored estimator checkpoint from {path} ({state.total} samples)")
    return state


def write_configuration(path, positions):
    """Dump one configuration as `particle,coord0,...`."""
    positions = np.asarray(positions)
    header = ["particle"] + [f"coord{k}" for k in range(positions.shape[-1])]
    write_rows(path, header, ((p, *positions[p]) for p in range(positions.shape[0])))


def write_timeseries(path, rows):
    """Write TimeseriesRow records with the standard header."""
    write_rows(path, TIMESERIES_HEADER, ([getattr(row, name) for name in TIMESERIES_HEADER] for row in rows))


def write_summary(path, rows):
    """Write SummaryRow records: the timeseries columns plus standard errors and norm variances."""
    def cells(row):
        values = (getattr(row, name) for name in SUMMARY_HEADER)
        return [int(value) if isinstance(value, bool) else value for value in values]

    write_rows(path, SUMMARY_HEADER, (cells(row) for row in rows))


def write_manifest(path, spec, extra=None):
    """
    Write the run manifest: the RunSpec as parseable `key = value` text.

    Args:
        path: Manifest path.
        spec: RunSpec of the run.
        extra: Optional mapping of informational entries, written as comments.
    """
    with open_output(path) as handle:
        handle.write(f"# pabf {__version__} run manifest\n")
        for key, value in (extra or {}).items():
            handle.write(f"# {key} = {value}\n")
        handle.write(format_config(spec))
