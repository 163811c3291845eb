import pytest

from burstsr.checks import SUITES, run_suite, scan_oracle_equivalence, suite_ssm


@pytest.mark.parametrize("suite", list(SUITES))
def test_each_suite_passes(suite):
    results = run_suite(suite, seed=0)
    assert results
    for res in results:
        assert res.passed, f"{suite}: {res.name} failed ({res.detail})"


def test_all_runs_every_suite():
    combined = run_suite("all", seed=0)
    total = sum(len(run_suite(s, seed=0)) for s in SUITES)
    assert len(combined) == total


def test_unknown_suite():
    with pytest.raises(ValueError):
        run_suite("nope")


def test_fault_injection_is_caught():
    # a sign flip in the discretized input factor must blow the oracle check
    worst, tol = scan_oracle_equivalence(n_cases=5, seed=1, fault_bbar_sign=True)
    assert worst > tol
    results = suite_ssm(seed=1, n_cases=5, fault_bbar_sign=True)
    oracle_checks = [r for r in results if "oracle" in r.name]
    assert oracle_checks and not oracle_checks[0].passed
