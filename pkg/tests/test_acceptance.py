"""One test per acceptance criterion; each prints a PASS/FAIL line."""

import pytest

from gtct import acceptance as acc


def _check(result, capsys):
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.detail


def test_criterion_1_oracle_equivalence(capsys):
    _check(acc._timed(1, "oracle equivalence", acc.oracle_equivalence, limit=60), capsys)


def test_criterion_2_gradient_checks(capsys):
    _check(acc._timed(2, "gradient checks", acc.gradient_checks, limit=60), capsys)


def test_criterion_3_closed_form_uniform(capsys):
    _check(acc._timed(3, "closed-form uniform lattice", acc.closed_form_uniform), capsys)


def test_criterion_4_per_frame_posterior_totals(capsys):
    _check(acc._timed(4, "per-frame posterior totals", acc.step_consistency), capsys)


def test_criterion_5_ctc_reduction(capsys):
    _check(acc._timed(5, "CTC reduction", acc.ctc_reduction), capsys)


def test_criterion_6_decoder_invariants(capsys):
    _check(acc._timed(6, "decoder invariants", acc.decoder_invariants), capsys)


def test_criterion_7_hallucination(capsys):
    _check(acc._timed(7, "hallucination demo", acc.hallucination), capsys)


@pytest.fixture(scope="module")
def study():
    import time

    t0 = time.time()
    out = acc.training_study()
    out["wall_seconds"] = time.time() - t0
    return out


@pytest.mark.slow
def test_criterion_8_training_strategy_ordering(study, capsys):
    r = acc._timed(8, "training-strategy ordering", lambda: acc.strategy_ordering(study))
    r.seconds = study["wall_seconds"]
    _check(r, capsys)


@pytest.mark.slow
def test_criterion_9_shallow_fusion(study, capsys):
    _check(acc._timed(9, "shallow fusion sanity", lambda: acc.shallow_fusion(study)), capsys)
