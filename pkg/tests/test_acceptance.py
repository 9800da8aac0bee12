"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -s`` to see the lines. Tolerances
are pinned in :mod:`mobile_consensus.acceptance` (1e-9 absolute on ranges,
exact equality for the reduce/num oracle, 1000 runs per configuration).
"""

from mobile_consensus import acceptance


def report(result):
    print(result.line())
    for line in result.failures[:6]:
        print(f"    {line}")
    assert result.passed, result.line()


def test_criterion_1_validity():
    report(acceptance.criterion_1(acceptance.RUNS))


def test_criterion_2_convergence_rate():
    report(acceptance.criterion_2(acceptance.RUNS))


def test_criterion_3_integrity():
    report(acceptance.criterion_3(acceptance.RUNS))


def test_criterion_4_pairwise_limit():
    report(acceptance.criterion_4(acceptance.RUNS))


def test_criterion_5_lower_bound_reproduction():
    report(acceptance.criterion_5())


def test_criterion_6_small_case():
    report(acceptance.criterion_6(acceptance.RUNS))


def test_criterion_7_reduce_num_oracle():
    report(acceptance.criterion_7())


def test_criterion_8_determinism():
    report(acceptance.criterion_8())
