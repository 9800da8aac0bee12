import dataclasses
from itertools import product

import pytest
from hypothesis import given
from hypothesis import strategies as st

from mobile_consensus.adversary import GENERAL_PURPOSE, Adversary
from mobile_consensus.checks import (
    check_halving,
    check_integrity,
    check_num_bound,
    check_pairwise_limit,
    check_validity,
    halving_holds,
    run_all_checks,
)
from mobile_consensus.config import ScenarioConfig, load_config, threshold
from mobile_consensus.harness import CURED, FAULTY, HEALTHY, ScenarioError, Simulator, run
from mobile_consensus.protocol import ConfessionMsg, build_R


def cfg(**data):
    base = {"n": 8, "f": 2, "inputs": {"uniform": [0, 100]}}
    base.update(data)
    return ScenarioConfig.from_dict(base)


# -- basic runs ---------------------------------------------------------------


def test_fault_free_run_converges_in_one_phase():
    result = run(cfg(n=5, f=0, inputs=[0, 1, 2, 3, 4]))
    assert result.convergence_phase == 1
    assert set(result.trace.phases[0].v_after) == {2.0}
    assert result.verdict == "ok"


@pytest.mark.parametrize("adversary", GENERAL_PURPOSE)
def test_fixed_point_holds_under_every_adversary(adversary):
    result = run(cfg(n=5, f=1, inputs=[3.3] * 5, adversary=adversary, min_phases=4))
    for p in result.trace.phases:
        assert {p.v_after[i] for i in p.confession.nodes(HEALTHY)} == {3.3}


def test_split_endorse_on_unit_interval_halves():
    result = run(cfg(inputs={"uniform": [0, 1]}, adversary="split_endorse", min_phases=4))
    assert result.converged
    assert check_halving(result.trace).ok


def test_lower_bound_stalls_at_seven_and_converges_at_eight():
    stalled = run(load_config("theorem2"))
    assert stalled.verdict == "non_converged"
    assert {p.healthy_range for p in stalled.trace.phases} == {1.0}
    assert len(stalled.trace.rounds) == 200
    fine = run(load_config("theorem2", n=8))
    assert fine.converged and fine.convergence_phase <= 8


def test_empty_after_trim_is_a_failed_run():
    # n=4, f=1 is one short of the threshold; a full swap can leave two values and num=1
    for seed in range(20):
        result = run(cfg(n=4, f=1, adversary="full_swap", allow_below_threshold=True, seed=seed))
        if result.failure:
            assert result.verdict == "failed"
            assert "empty_after_trim" in result.failure
            assert len(result.trace.rounds) % 2 == 0
            return
    pytest.fail("no seed produced an empty trim")


class Greedy(Adversary):
    def select_faulty(self, view):
        return frozenset(range(view.f + 1))


class Forger(Adversary):
    def select_faulty(self, view):
        return frozenset({0})

    def forge_messages(self, view):
        return {(1, 2): 5.0}


def test_fault_model_violations_raise():
    with pytest.raises(ScenarioError):
        Simulator(cfg(), Greedy(__import__("random").Random(0))).run()
    with pytest.raises(ScenarioError):
        Simulator(cfg(), Forger(__import__("random").Random(0))).run()


def test_initial_faulty_is_honoured():
    result = run(cfg(adversary="random", initial_faulty=[4, 6], initial_cured=[0]))
    first = result.trace.rounds[0]
    assert first.faulty == {4, 6}
    assert first.statuses[0] is CURED


# -- structural invariants ----------------------------------------------------


@given(st.sampled_from(GENERAL_PURPOSE), st.integers(1, 3), st.integers(0, 2**32))
def test_lockstep_and_recovery(adversary, f, seed):
    n = threshold(f)
    result = run(cfg(n=n, f=f, adversary=adversary, seed=seed, min_phases=3, initial_cured=list(range(f))))
    trace = result.trace
    for k, p in enumerate(trace.phases):
        conf = p.confession
        # every R table is built from this round's deliveries only
        for j, R in conf.R.items():
            inbox = [ConfessionMsg(s, m) for (s, r), m in sorted(conf.messages.items()) if r == j]
            assert R == build_R(inbox, n)
        for i in conf.nodes(CURED):
            assert not conf.corrupted[i]
        if k + 1 < len(trace.phases):
            nxt = trace.phases[k + 1].collection
            for i in conf.nodes(CURED):
                if nxt.statuses[i] is HEALTHY:
                    assert nxt.messages[(i, 0)] == conf.v[i]


@given(st.sampled_from(GENERAL_PURPOSE), st.integers(1, 4), st.integers(0, 2), st.integers(0, 2**32))
def test_validity_and_integrity_hold_at_threshold(adversary, f, extra, seed):
    result = run(cfg(n=threshold(f) + extra, f=f, adversary=adversary, seed=seed, min_phases=3))
    reports = run_all_checks(result.trace)
    assert reports["validity"].ok
    assert reports["integrity"].ok
    assert reports["pairwise"].ok
    assert reports["num"].ok


# -- checkers -----------------------------------------------------------------


def test_halving_sequences():
    assert halving_holds([8, 4, 2, 1]) == []
    assert halving_holds([8, 5]) == [1]


def doctor(trace, round_index, **changes):
    rounds = list(trace.rounds)
    rounds[round_index] = dataclasses.replace(rounds[round_index], **changes)
    return dataclasses.replace(trace, rounds=rounds)


def test_validity_negative_control():
    trace = run(cfg(adversary="extreme", min_phases=2)).trace
    assert check_validity(trace).ok
    conf = trace.rounds[1]
    i = conf.nodes(HEALTHY)[0]
    _, high = trace.input_bounds()
    v = list(conf.v)
    v[i] = high + 1
    assert not check_validity(doctor(trace, 1, v=tuple(v))).ok


def test_integrity_full_swap_phase():
    trace = run(cfg(adversary="full_swap", seed=0)).trace
    p = trace.phases[0]
    # both Integrity II (healthy then faulty) and IV (cured in confession) occur
    assert any(p.collection.statuses[i] is HEALTHY and p.confession.statuses[i] is FAULTY for i in range(8))
    assert p.confession.nodes(CURED)
    assert check_integrity(trace, 1).ok
    assert check_integrity(run(cfg(n=5, f=0)).trace, 1).ok


def test_integrity_negative_control():
    trace = run(cfg(adversary="full_swap", seed=0)).trace
    conf = trace.rounds[1]
    cured = conf.nodes(CURED)[0]
    j = conf.nodes(HEALTHY)[0]
    V = dict(conf.V)
    row = list(V[j])
    row[cured] = 42.0
    V[j] = tuple(row)
    report = check_integrity(doctor(trace, 1, V=V), 1)
    assert not report.ok
    assert any(line.startswith("IV") for line in report.violations)


@pytest.mark.parametrize("adversary", ["static", "full_swap"])
def test_pairwise_zero_without_partial_moves(adversary):
    for seed in range(10):
        trace = run(cfg(adversary=adversary, seed=seed, min_phases=3)).trace
        for p in trace.phases:
            assert check_pairwise_limit(trace, p.phase).detail["max_difference"] == 0


def max_disagreement(n, f):
    """Exhaustive search over phase plans for the largest pairwise disagreement.

    A plan keeps ``s`` faults in place across the phase. For a stayer j, two
    fault-free receivers disagree on j only if each of two values u, u' reaches
    n - f supporters: the fault-free non-confessing nodes that j showed u (g_u),
    every confession-round faulty node (f) and the f - s confessors. The
    fault-free non-confessing pool has n - 2f + s nodes, so g_u + g_u' is
    bounded by it. Disagreements are counted per stayer.
    """
    best = 0
    for s in range(f + 1):
        pool = n - 2 * f + s
        need = n - f - f - (f - s)
        feasible = any(
            g1 >= need and g2 >= need and g1 > 0 and g2 > 0 for g1, g2 in product(range(pool + 1), repeat=2) if g1 + g2 <= pool
        )
        if feasible:
            best = max(best, s)
    return best


def test_exhaustive_plan_search():
    assert max_disagreement(15, 4) == 1
    assert max_disagreement(8, 2) == 0
    assert max_disagreement(12, 3) == 0
    assert max_disagreement(6, 2) == 2
    for f in range(1, 6):
        assert max_disagreement(threshold(f), f) <= max(0, f // 2 - 1)


def test_partial_move_reaches_the_bound_at_f4():
    worst = 0
    for seed in range(5):
        trace = run(cfg(n=15, f=4, adversary="partial_move", seed=seed, min_phases=2)).trace
        for p in trace.phases:
            worst = max(worst, check_pairwise_limit(trace, p.phase).detail["max_difference"])
    assert worst == max_disagreement(15, 4) == 1


def test_num_bound_checker():
    clean = run(cfg(n=5, f=0)).trace
    assert check_num_bound(clean, 1).detail["max_faulty_values"] == 0
    swap = run(cfg(adversary="full_swap")).trace
    assert check_num_bound(swap, 1).detail["max_faulty_values"] == 0
    stay = run(cfg(adversary="split_endorse", min_phases=3)).trace
    for p in stay.phases:
        report = check_num_bound(stay, p.phase)
        assert report.ok and report.detail["max_faulty_values"] <= 2


def test_below_threshold_reports_are_informational():
    result = run(load_config("theorem2", round_budget=4))
    assert not result.reports["halving"].ok
    assert not result.reports["halving"].applicable
    assert result.lemmas_hold


# -- the gap in the halving argument ------------------------------------------


def test_per_receiver_confessions_stall_even_f_at_threshold():
    """Faults that were healthy in the collection round may confess to some
    receivers and not others. At n = 7f/2 + 1 with even f this keeps the
    fault-free range from shrinking at all, although every integrity and
    pairwise check passes."""
    result = run(cfg(adversary="hide_split", seed=1))
    ranges = [p.range for p in result.trace.phases]
    assert len(set(ranges)) == 1 and ranges[0] > 0
    assert result.verdict == "lemma_violation" and not result.converged
    reports = result.reports
    assert reports["validity"].ok and reports["integrity"].ok and reports["pairwise"].ok and reports["num"].ok
    # with two more nodes the same strategy is harmless
    assert run(cfg(n=10, adversary="hide_split", seed=1)).verdict == "ok"
