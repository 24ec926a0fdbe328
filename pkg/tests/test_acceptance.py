"""Acceptance suite: every criterion at its stated tolerance, one pass/fail line each.

Models are trained once per session at the default desk budget (about 8
minutes on one core). Lines are printed as each criterion finishes and again
in the terminal summary.
"""

import pytest

from icd.acceptance import Lab, run_criterion

RESULTS: dict[int, object] = {}


@pytest.fixture(scope="session")
def lab():
    return Lab()


def _check(lab, number, capsys):
    res = run_criterion(lab, number)
    RESULTS[number] = res
    with capsys.disabled():
        print("\n" + res.line())
    assert res.passed, res.line()


def test_criterion_01_autodiff_soundness(lab, capsys):
    _check(lab, 1, capsys)


def test_criterion_02_solver_identity_and_affinity(lab, capsys):
    _check(lab, 2, capsys)


def test_criterion_03_oracle_roundtrip(lab, capsys):
    _check(lab, 3, capsys)


def test_criterion_04_boundary_tables(lab, capsys):
    _check(lab, 4, capsys)


def test_criterion_06_guidance_distillation_fidelity(lab, capsys):
    _check(lab, 6, capsys)


def test_criterion_07_latent_nll_ordering(lab, capsys):
    _check(lab, 7, capsys)


def test_criterion_08_threshold_sweep_trend(lab, capsys):
    _check(lab, 8, capsys)


def test_criterion_09_roundtrip_ordering(lab, capsys):
    _check(lab, 9, capsys)


def test_criterion_10_editing(lab, capsys):
    _check(lab, 10, capsys)


def test_criterion_12_stochastic_vs_deterministic(lab, capsys):
    _check(lab, 12, capsys)


# these two inspect every student trained above, so they run last


def test_criterion_05_boundary_identity(lab, capsys):
    _check(lab, 5, capsys)


def test_criterion_11_determinism_and_persistence(lab, capsys):
    _check(lab, 11, capsys)
