"""
Tests for the coupled ABF / PABF driver.
"""

import math

import numpy as np
import pytest

from pabf import diagnostics, driver
from pabf.errors import InsufficientReplicationError, IntegratorBlowupError
from pabf.integrator import step as real_step
from pabf.models import Mode, RunSpec


def test_run_records_scheduled_and_final_snapshots(small_run_spec):
    output = driver.run(small_run_spec)
    assert [s.t for s in output.snapshots] == pytest.approx([0.01, 0.05, 0.1])
    assert [s.sweep for s in output.snapshots] == [2, 10, 20]
    assert output.state.total == 8 * 20 * 5
    assert output.final_positions.shape == (8, 3, 1)


def test_pabf_bias_is_the_projected_gradient(small_run_spec):
    output = driver.run(small_run_spec)
    for snap in output.snapshots:
        np.testing.assert_array_equal(snap.bias.comp1, snap.gradA.comp1)
        assert abs(snap.A.values.mean()) <= 1e-10
        assert math.isfinite(snap.l2_error)
        assert math.isfinite(snap.force_error)


def test_abf_bias_is_the_raw_estimate(small_run_spec):
    spec = small_run_spec.model_copy(update={"mode": Mode.ABF})
    output = driver.run(spec)
    snap = output.snapshots[-1]
    np.testing.assert_array_equal(snap.bias.comp1, snap.F.comp1)
    assert math.isfinite(snap.l2_error)


def test_runs_are_deterministic(small_run_spec):
    first = driver.run(small_run_spec)
    second = driver.run(small_run_spec)
    np.testing.assert_array_equal(first.final_positions, second.final_positions)
    for a, b in zip(first.snapshots, second.snapshots):
        np.testing.assert_array_equal(a.F.comp1, b.F.comp1)
        np.testing.assert_array_equal(a.A.values, b.A.values)


def test_zero_sweeps_produce_no_snapshots(small_run_spec):
    spec = small_run_spec.model_copy(
        update={"dynamics": small_run_spec.dynamics.model_copy(update={"n_sweeps": 0})}
    )
    output = driver.run(spec)
    assert output.snapshots == []
    assert output.state.total == 0


def test_blowup_reports_the_sweep(small_run_spec, monkeypatch):
    def exploding(spec, ensemble, bias, dt, **kwargs):
        if ensemble.steps == 12:
            raise IntegratorBlowupError(0, ensemble.steps + 1)
        return real_step(spec, ensemble, bias, dt, **kwargs)

    monkeypatch.setattr(driver, "step", exploding)
    with pytest.raises(IntegratorBlowupError) as info:
        driver.run(small_run_spec)
    assert info.value.sweep == 2
    assert info.value.step == 13


def test_timeseries_leaves_cross_run_columns_empty(small_run_spec):
    rows = driver.run(small_run_spec).timeseries()
    assert len(rows) == 3
    assert math.isnan(rows[0].int_var_F)
    assert math.isfinite(rows[0].neg_log_flatness1)


def test_derived_seeds_are_distinct_and_stable():
    seeds = [driver.derive_seed(7, r) for r in range(4)]
    assert len(set(seeds)) == 4
    assert seeds == [driver.derive_seed(7, r) for r in range(4)]
    assert all(0 <= s < 2**64 for s in seeds)


def test_replication_needs_two_runs(small_run_spec):
    with pytest.raises(InsufficientReplicationError):
        driver.run_replicated(small_run_spec, 1)


def test_replicated_runs_summarize(small_run_spec):
    outputs = driver.run_replicated(small_run_spec, 3)
    assert len({out.spec.seed for out in outputs}) == 3
    rows = driver.summarize(outputs)
    assert [row.t for row in rows] == pytest.approx([0.01, 0.05, 0.1])
    for row in rows:
        assert row.int_var_F > 0.0
        assert row.int_var_gradA >= 0.0
        assert row.int_var_F_se == pytest.approx(row.int_var_F)


def test_worker_count_does_not_change_results(small_run_spec):
    serial = driver.run_replicated(small_run_spec, 2, workers=1)
    parallel = driver.run_replicated(small_run_spec, 2, workers=2)
    for a, b in zip(serial, parallel):
        np.testing.assert_array_equal(a.final_positions, b.final_positions)


def test_run_output_files_are_byte_identical(tmp_path, small_run_spec):
    for name in ("a", "b"):
        driver.write_run_output(driver.run(small_run_spec), tmp_path / name)
    for relative in ("timeseries.csv", "snapshots.csv", "bias_state.csv", "snapshots/001_gradA.csv",
                     "final_configuration.csv", "manifest.txt"):
        assert (tmp_path / "a" / relative).read_bytes() == (tmp_path / "b" / relative).read_bytes()
    assert (tmp_path / "a" / "snapshots" / "002_marginals.csv").exists()


def test_comparison_outputs(tmp_path, small_run_spec):
    results = driver.compare(small_run_spec, 2)
    rows = driver.write_comparison(results, tmp_path)
    assert len(rows) == 3
    header = (tmp_path / "comparison.csv").read_text().splitlines()[0]
    assert header.split(",") == driver.COMPARISON_HEADER
    for mode in ("abf", "pabf"):
        assert (tmp_path / mode / "timeseries.csv").exists()
        assert (tmp_path / mode / "summary.csv").exists()
        assert (tmp_path / mode / "run_001" / "manifest.txt").exists()
    assert len((tmp_path / "flatness_times.csv").read_text().splitlines()) == 3


@pytest.fixture(scope="module")
def toy_pabf_run():
    """A toy PABF run long enough to flatten the histogram (t_end = 6)."""
    spec = RunSpec.model_validate(
        {
            "grid": {"n1": 16, "n2": 16},
            "dynamics": {"dt": 2e-3, "n_sweeps": 300, "k_sub": 10, "M": 64},
            "seed": 2024,
        }
    )
    return driver.run(spec)


def test_pabf_free_energy_error_decays_on_the_toy_system(toy_pabf_run):
    errors = [s.l2_error for s in toy_pabf_run.snapshots]
    assert errors[0] > 0.25
    assert errors[-1] <= 0.1
    settled = next(k for k, e in enumerate(errors) if e <= 0.25)
    for previous, current in zip(errors[settled:], errors[settled + 1:]):
        assert current <= 1.2 * previous


def test_pabf_flattens_both_marginals_tenfold(toy_pabf_run):
    first, last = toy_pabf_run.snapshots[0], toy_pabf_run.snapshots[-1]
    assert last.flatness1 <= 0.1 * first.flatness1
    assert last.flatness2 <= 0.1 * first.flatness2


def test_uniform_projection_never_raises_the_cross_run_variance():
    spec = RunSpec.model_validate(
        {
            "grid": {"n1": 16, "n2": 16},
            "dynamics": {"dt": 2e-3, "n_sweeps": 40, "k_sub": 5, "M": 16},
            "estimator": {"n_min": 20},
            "solver": {"weighting": "uniform"},
            "seed": 5,
        }
    )
    rows = driver.summarize(driver.run_replicated(spec, 8))
    assert len(rows) == 5
    # one fixed orthogonal projection for every run
    assert all(row.variance_reduced for row in rows)
    verdict = diagnostics.variance_verdict([r.int_var_gradA for r in rows], [r.int_var_F for r in rows], runs=8)
    assert verdict.passed
    assert verdict.fraction_reduced == 1.0


def test_comparison_verdicts_match_the_per_time_flags(tmp_path, small_run_spec):
    results = driver.compare(small_run_spec, 8)
    rows = driver.write_comparison(results, tmp_path)
    verdicts = driver.comparison_verdicts(rows, 8)

    within, cross = verdicts["within-mode"], verdicts["cross-mode"]
    assert within.times == cross.times == len(rows)
    assert within.reduced == sum(row["pabf_variance_reduced"] for row in rows)
    assert within.within_allowance == sum(row["pabf_variance_reduction_ok"] for row in rows)
    assert cross.reduced == sum(row["cross_variance_reduced"] for row in rows)
    assert cross.within_allowance == sum(row["cross_variance_reduction_ok"] for row in rows)
    for row in rows:
        assert row["cross_variance_reduced"] == int(row["pabf_int_var_gradA"] <= row["abf_int_var_F"])

    lines = (tmp_path / "verdict.csv").read_text().splitlines()
    assert lines[0] == ",".join(driver.VERDICT_HEADER)
    assert [line.split(",")[0] for line in lines[1:]] == ["within-mode", "cross-mode"]
