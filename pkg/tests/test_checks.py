"""
Tests for the built-in correctness suite.
"""

from pabf import checks


def test_adjointness_check_passes():
    result = checks.check_adjointness(n=16)
    assert result.passed, result.detail


def test_idempotence_check_passes():
    result = checks.check_idempotence()
    assert result.passed, result.detail


def test_deposit_conservation_check_passes():
    result = checks.check_deposit_conservation(samples=2000)
    assert result.passed, result.detail


def test_quick_suite_lists_every_check():
    names = [result.name for result in checks.run_checks(quick=True)]
    assert names == [
        "forces-vs-finite-differences[toy-separable]",
        "forces-vs-finite-differences[trimer]",
        "xi-jacobian[trimer]",
        "operator-adjointness",
        "projection-idempotence",
        "boltzmann-moment",
        "deposit-conservation",
    ]
