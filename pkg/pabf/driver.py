"""
Coupled ABF / PABF simulation loop.

Each sweep freezes a bias from the current estimator (the projected gradient
in PABF mode, the raw estimate in ABF mode), then advances the ensemble
k_sub steps, depositing one local-mean-force sample per replica per step.
Snapshots are taken at the start of a sweep, once its bias is frozen, and
once more at the end of the run.
"""

import logging
import math
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict

from pabf import diagnostics, storage, systems
from pabf.errors import InsufficientReplicationError, PABFError, ProjectionSolverError
from pabf.estimator import BiasState
from pabf.integrator import BiasForceView, Ensemble, step
from pabf.models import Mode, RunSpec, SummaryRow, SystemKind, TimeseriesRow, Weighting
from pabf.projection import ProjectionResult, project, uniform_weight
from pabf.rcgrid import RCGrid, ScalarField, VectorField

logger = logging.getLogger(__name__)

TIME_SLACK = 1e-9


class Snapshot(BaseModel):
    """Fields and scalar diagnostics recorded at one time."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    t: float
    sweep: int
    F: VectorField
    bias: VectorField
    gradA: VectorField
    A: ScalarField
    psi: ScalarField
    flatness1: float
    flatness2: float
    l2_error: float = math.nan
    force_error: float = math.nan
    iterations: int = 0


class RunOutput(BaseModel):
    """Everything one run produced."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    spec: RunSpec
    snapshots: List[Snapshot]
    state: BiasState
    final_positions: np.ndarray

    def timeseries(self):
        """Per-run timeseries rows; cross-run variance columns stay NaN."""
        return [
            TimeseriesRow(
                t=snap.t,
                l2_error=snap.l2_error,
                neg_log_flatness1=diagnostics.neg_log_flatness(snap.flatness1),
                neg_log_flatness2=diagnostics.neg_log_flatness(snap.flatness2),
            )
            for snap in self.snapshots
        ]


def make_grid(spec):
    return RCGrid(n1=spec.grid.n1, n2=spec.grid.n2)


def derive_seed(master_seed, index):
    """Independent 64-bit seed for run `index` of a replicated experiment."""
    sequence = np.random.SeedSequence([int(master_seed), int(index)])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def _weight(spec, state):
    if spec.solver.weighting == Weighting.UNIFORM:
        return uniform_weight(state.grid)
    return state.density_field(floored=True)


def _project(spec, state, warm=None):
    return project(
        state.force_field(),
        _weight(spec, state),
        tol=spec.solver.tol,
        max_iter=spec.solver.max_iter,
        x0=None if warm is None else warm.A,
        jacobi=spec.solver.jacobi,
    )


def freeze_bias(spec, state, warm=None):
    """
    Bias for the next sweep.

    Args:
        spec: RunSpec.
        state: Current BiasState.
        warm: Previous ProjectionResult, used as the CG initial guess.

    Returns:
        (BiasForceView, ProjectionResult or None). ABF mode skips the solve.
    """
    if spec.mode == Mode.PABF:
        result = _project(spec, state, warm)
        return BiasForceView.pabf(result.gradA), result
    return BiasForceView.abf(state.force_field()), None


def _advance(spec, ensemble, state, view):
    system = spec.system
    for _ in range(spec.dynamics.k_sub):
        positions = ensemble.positions
        xi_value = systems.xi(system, positions)
        force = systems.forces(system, positions)
        samples = systems.local_mean_force_sample(system, positions, xi_value, force)
        state.deposit(xi_value.z, samples)
        step(system, ensemble, view, spec.dynamics.dt, xi_value=xi_value, force=force)


class _References:
    """Analytic oracles, available for the toy-separable system only."""

    def __init__(self, spec, grid):
        self.A = None
        self.grad = None
        if spec.system.kind == SystemKind.TOY:
            A = systems.analytic_free_energy(spec.system, grid)
            # a flat landscape has no normalized error
            self.A = A if np.ptp(A.values) > 0.0 else None
            comp1, comp2 = systems.analytic_mean_force(spec.system, grid)
            self.grad = VectorField(grid=grid, comp1=comp1.ravel(), comp2=comp2.ravel())


def _record(spec, state, view, projection, references, t, sweep):
    if projection is None:
        projection = _project(spec, state)
    psi = state.density_field(floored=False)
    m1, m2 = diagnostics.marginals(psi)
    snapshot = Snapshot(
        t=t,
        sweep=sweep,
        F=state.force_field(),
        bias=view.field,
        gradA=projection.gradA,
        A=projection.A,
        psi=psi,
        flatness1=diagnostics.flatness(m1),
        flatness2=diagnostics.flatness(m2),
        iterations=projection.iterations,
    )
    if references.A is not None:
        snapshot.l2_error = diagnostics.l2_error(projection.A, references.A)
        snapshot.force_error = diagnostics.weighted_force_error(projection.gradA, references.grad, psi)
    logger.info(
        f"Snapshot t={t:.6g} sweep={sweep}: flatness=({snapshot.flatness1:.3e}, {snapshot.flatness2:.3e}) "
        f"l2_error={snapshot.l2_error:.4g}"
    )
    return snapshot


def run(spec: RunSpec) -> RunOutput:
    """
    Execute one ABF or PABF run.

    Args:
        spec: Validated RunSpec.

    Returns:
        RunOutput holding the snapshots, final estimator and final positions.

    Raises:
        PABFError: Any toolkit error raised while sweeping, with the sweep
            index attached as `sweep`.
    """
    dyn = spec.dynamics
    logger.info(
        f"Starting {spec.mode.value} run: {spec.system.kind.value}, grid {spec.grid.n1}x{spec.grid.n2}, "
        f"M={dyn.M}, {dyn.n_sweeps} sweeps x {dyn.k_sub} steps, dt={dyn.dt}, seed={spec.seed}"
    )
    grid = make_grid(spec)
    ensemble = Ensemble.create(spec.system, dyn.M, spec.seed)
    state = BiasState(grid, n_min=spec.estimator.n_min, eps_density=spec.estimator.eps_density)
    references = _References(spec, grid)
    schedule = deque(spec.snapshots.schedule(spec.t_end))
    snapshots = []
    projection: Optional[ProjectionResult] = None

    for sweep in range(dyn.n_sweeps):
        try:
            view, projection = freeze_bias(spec, state, projection)
            t = sweep * dyn.k_sub * dyn.dt
            if schedule and t >= schedule[0] - TIME_SLACK:
                snapshots.append(_record(spec, state, view, projection, references, t, sweep))
                while schedule and schedule[0] <= t + TIME_SLACK:
                    schedule.popleft()
            _advance(spec, ensemble, state, view)
        except PABFError as e:
            e.sweep = sweep
            e.add_note(f"during sweep {sweep}")
            logger.error(f"Run failed in sweep {sweep}: {str(e)}", exc_info=True)
            raise

    if dyn.n_sweeps > 0:
        try:
            view, projection = freeze_bias(spec, state, projection)
        except ProjectionSolverError as e:
            e.sweep = dyn.n_sweeps
            e.add_note(f"during final projection after sweep {dyn.n_sweeps - 1}")
            raise
        snapshots.append(_record(spec, state, view, projection, references, spec.t_end, dyn.n_sweeps))

    logger.info(f"Finished {spec.mode.value} run: {state.total} deposits, {len(snapshots)} snapshots")
    return RunOutput(spec=spec, snapshots=snapshots, state=state, final_positions=ensemble.positions)


def run_replicated(spec, replicas, workers=1):
    """
    Independent runs with seeds derived from (spec.seed, run index).

    Args:
        spec: RunSpec shared by all runs apart from the seed.
        replicas: Number of runs R >= 2.
        workers: Worker processes; results do not depend on it.

    Returns:
        List of RunOutput in run order.
    """
    if replicas < 2:
        raise InsufficientReplicationError(f"need at least 2 runs, got {replicas}")
    specs = [spec.model_copy(update={"seed": derive_seed(spec.seed, r)}) for r in range(replicas)]
    logger.info(f"Replicated {spec.mode.value} experiment: {replicas} runs, {workers} workers")
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, specs))
    return [run(s) for s in specs]


def summarize(outputs):
    """
    Cross-run timeseries aligned on snapshot times.

    Args:
        outputs: R >= 2 RunOutputs of one mode with identical schedules.

    Returns:
        List of SummaryRow, one per snapshot.
    """
    if len(outputs) < 2:
        raise InsufficientReplicationError(f"need at least 2 runs, got {len(outputs)}")
    count = len(outputs[0].snapshots)
    if any(len(out.snapshots) != count for out in outputs):
        raise ValueError("runs have different snapshot schedules")

    rows = []
    runs = len(outputs)
    for k in range(count):
        snaps = [out.snapshots[k] for out in outputs]
        if any(abs(s.t - snaps[0].t) > TIME_SLACK for s in snaps):
            raise ValueError(f"snapshot {k} is not aligned across runs")
        var_f = diagnostics.integrated_variance([s.F for s in snaps])
        var_g = diagnostics.integrated_variance([s.gradA for s in snaps])
        rows.append(
            SummaryRow(
                t=snaps[0].t,
                int_var_F=var_f,
                int_var_gradA=var_g,
                l2_error=float(np.mean([s.l2_error for s in snaps])),
                neg_log_flatness1=float(np.mean([diagnostics.neg_log_flatness(s.flatness1) for s in snaps])),
                neg_log_flatness2=float(np.mean([diagnostics.neg_log_flatness(s.flatness2) for s in snaps])),
                int_var_F_se=diagnostics.variance_standard_error(var_f, runs),
                int_var_gradA_se=diagnostics.variance_standard_error(var_g, runs),
                int_norm_var_F=diagnostics.integrated_norm_variance([s.F for s in snaps]),
                int_norm_var_gradA=diagnostics.integrated_norm_variance([s.gradA for s in snaps]),
                variance_reduction_ok=diagnostics.variance_reduction_holds(var_g, var_f, runs),
                variance_reduced=var_g <= var_f,
            )
        )
    return rows


def compare(spec, replicas, workers=1):
    """
    Replicated ABF and PABF experiments sharing every setting but the mode.

    Returns:
        Dict mapping Mode to its list of RunOutput.
    """
    return {
        mode: run_replicated(spec.model_copy(update={"mode": mode}), replicas, workers)
        for mode in (Mode.ABF, Mode.PABF)
    }


# ---------------------------------------------------------------------------
# output directories

SNAPSHOT_SUMMARY_HEADER = ["t", "sweep", "l2_error", "force_error", "flatness1", "flatness2", "iterations"]


def write_run_output(output, out_dir):
    """
    Write one run's manifest, timeseries, snapshot fields and checkpoint.

    Args:
        output: RunOutput.
        out_dir: Target directory, created if missing.
    """
    out = Path(out_dir)
    logger.info(f"Writing run output to {out}")
    storage.write_manifest(out / "manifest.txt", output.spec, {"snapshots": len(output.snapshots)})
    storage.write_timeseries(out / "timeseries.csv", output.timeseries())
    storage.write_rows(
        out / "snapshots.csv",
        SNAPSHOT_SUMMARY_HEADER,
        (
            (s.t, s.sweep, s.l2_error, s.force_error, s.flatness1, s.flatness2, s.iterations)
            for s in output.snapshots
        ),
    )
    for k, snap in enumerate(output.snapshots):
        prefix = out / "snapshots" / f"{k:03d}"
        storage.write_vector_field(f"{prefix}_F.csv", snap.F)
        storage.write_vector_field(f"{prefix}_bias.csv", snap.bias)
        storage.write_vector_field(f"{prefix}_gradA.csv", snap.gradA)
        storage.write_scalar_field(f"{prefix}_A.csv", snap.A)
        storage.write_scalar_field(f"{prefix}_psi.csv", snap.psi)
        storage.write_marginals(f"{prefix}_marginals.csv", snap.psi)
    storage.write_bias_state(out / "bias_state.csv", output.state)
    storage.write_configuration(out / "final_configuration.csv", output.final_positions[0])


def write_replicated_output(outputs, out_dir):
    """Write every run under run_NNN/ plus the aggregated timeseries.csv and summary.csv."""
    out = Path(out_dir)
    for r, output in enumerate(outputs):
        write_run_output(output, out / f"run_{r:03d}")
    rows = summarize(outputs)
    storage.write_timeseries(out / "timeseries.csv", rows)
    storage.write_summary(out / "summary.csv", rows)
    return rows


COMPARISON_HEADER = [
    "t",
    "abf_int_var_F",
    "abf_int_var_gradA",
    "pabf_int_var_F",
    "pabf_int_var_gradA",
    "pabf_int_var_F_se",
    "pabf_int_var_gradA_se",
    "abf_l2_error",
    "pabf_l2_error",
    "abf_neg_log_flatness1",
    "abf_neg_log_flatness2",
    "pabf_neg_log_flatness1",
    "pabf_neg_log_flatness2",
    "pabf_variance_reduced",
    "pabf_variance_reduction_ok",
    "cross_variance_reduced",
    "cross_variance_reduction_ok",
]

VERDICT_HEADER = ["comparison", "times", "reduced", "within_allowance", "fraction_reduced", "passed"]


def comparison_verdicts(rows, runs):
    """
    Variance-reduction verdicts of a comparison.

    `within-mode` pits PABF's gradA against its own raw estimate F,
    `cross-mode` pits PABF's gradA against ABF's F.

    Args:
        rows: Comparison rows as returned by write_comparison().
        runs: Independent runs per mode.

    Returns:
        Dict mapping comparison name to VarianceVerdict.
    """
    projected = [row["pabf_int_var_gradA"] for row in rows]
    return {
        "within-mode": diagnostics.variance_verdict(projected, [row["pabf_int_var_F"] for row in rows], runs),
        "cross-mode": diagnostics.variance_verdict(projected, [row["abf_int_var_F"] for row in rows], runs),
    }


def write_comparison(results, out_dir, flatness_threshold=0.01):
    """
    Write both modes' replicated outputs and the joint comparison files.

    Args:
        results: Output of compare().
        out_dir: Target directory.
        flatness_threshold: Level used for flatness_times.csv.

    Returns:
        List of comparison rows (dicts keyed by COMPARISON_HEADER).
    """
    out = Path(out_dir)
    abf_rows = write_replicated_output(results[Mode.ABF], out / "abf")
    pabf_rows = write_replicated_output(results[Mode.PABF], out / "pabf")
    runs = len(results[Mode.PABF])

    rows = []
    for a, p in zip(abf_rows, pabf_rows):
        rows.append(
            {
                "t": p.t,
                "abf_int_var_F": a.int_var_F,
                "abf_int_var_gradA": a.int_var_gradA,
                "pabf_int_var_F": p.int_var_F,
                "pabf_int_var_gradA": p.int_var_gradA,
                "pabf_int_var_F_se": p.int_var_F_se,
                "pabf_int_var_gradA_se": p.int_var_gradA_se,
                "abf_l2_error": a.l2_error,
                "pabf_l2_error": p.l2_error,
                "abf_neg_log_flatness1": a.neg_log_flatness1,
                "abf_neg_log_flatness2": a.neg_log_flatness2,
                "pabf_neg_log_flatness1": p.neg_log_flatness1,
                "pabf_neg_log_flatness2": p.neg_log_flatness2,
                "pabf_variance_reduced": int(p.variance_reduced),
                "pabf_variance_reduction_ok": int(p.variance_reduction_ok),
                "cross_variance_reduced": int(p.int_var_gradA <= a.int_var_F),
                "cross_variance_reduction_ok": int(
                    diagnostics.variance_reduction_holds(p.int_var_gradA, a.int_var_F, runs)
                ),
            }
        )
    storage.write_rows(out / "comparison.csv", COMPARISON_HEADER, ([row[k] for k in COMPARISON_HEADER] for row in rows))

    storage.write_rows(
        out / "flatness_times.csv",
        ["run", "abf_time", "pabf_time"],
        (
            (
                r,
                diagnostics.time_to_flatness(results[Mode.ABF][r].snapshots, flatness_threshold),
                diagnostics.time_to_flatness(results[Mode.PABF][r].snapshots, flatness_threshold),
            )
            for r in range(runs)
        ),
    )

    verdicts = comparison_verdicts(rows, runs)
    storage.write_rows(
        out / "verdict.csv",
        VERDICT_HEADER,
        (
            (name, v.times, v.reduced, v.within_allowance, v.fraction_reduced, int(v.passed))
            for name, v in verdicts.items()
        ),
    )
    for name, v in verdicts.items():
        log = logger.info if v.passed else logger.warning
        log(
            f"{name} variance reduction: raw inequality at {v.reduced}/{v.times} times, "
            f"{v.within_allowance}/{v.times} within allowance"
        )
    return rows
