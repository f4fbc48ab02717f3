import itertools
import json

import numpy as np
import pytest

from tlmt.automaton import (
    CompilationError, Dfa, accepts, compile_dfa, empty_suffix_accepts, from_json, ltlf_eval,
    minimize, progress, run, to_dot, to_json,
)
from tlmt.syntax import Always, And, Or, Top, parse_prop, print_formula

from conftest import all_traces, random_prop

PHI1 = parse_prop("F (p0 && X F p1)")
P0, P1 = 0b01, 0b10


def test_next_and_weak_next():
    assert ltlf_eval(parse_prop("X p0"), [0, P0])
    assert not ltlf_eval(parse_prop("X p0"), [P0, 0])
    assert not ltlf_eval(parse_prop("X p0"), [P0])
    assert ltlf_eval(parse_prop("WX p0"), [0])
    assert not ltlf_eval(parse_prop("WX p0"), [0, 0])


def test_phi1_semantics():
    assert ltlf_eval(PHI1, [0, P0, 0, P1])
    assert not ltlf_eval(PHI1, [P1, P0])
    # same-step p0 and p1 does not count: the goal must come strictly later
    assert not ltlf_eval(PHI1, [P0 | P1])


def _phi1_table(w):
    # independent tabulation: some i < j with p0 at i and p1 at j
    return any(w[i] & P0 and w[j] & P1 for i in range(len(w)) for j in range(i + 1, len(w)))


def test_phi1_exhaustive_against_tabulation():
    for w in all_traces(2, 4):
        assert ltlf_eval(PHI1, w) == _phi1_table(w)


def test_empty_trace_rejected():
    with pytest.raises(ValueError):
        ltlf_eval(PHI1, [])


def test_until_and_always():
    f = parse_prop("p0 U p1")
    assert ltlf_eval(f, [P0, P0, P1])
    assert not ltlf_eval(f, [P0, 0, P1])
    assert not ltlf_eval(f, [P0, P0])
    g = parse_prop("G p0")
    assert ltlf_eval(g, [P0, P0]) and not ltlf_eval(g, [P0, 0])


def _language_equal(f, g, letters=2, max_len=5):
    return all(ltlf_eval(f, w) == ltlf_eval(g, w) for w in all_traces(letters, max_len))


def test_progress_examples():
    f = parse_prop("F p0")
    assert progress(f, P0) == Top()
    # the residual constrains the remaining suffix, which must be nonempty for F
    assert progress(f, 0) == parse_prop("X F p0")
    r = progress(PHI1, P0)
    expected = parse_prop("X F p1 || X F (p0 && X F p1)")
    # residual applied at position 0 of the remaining trace, i.e. one step later
    for w in all_traces(2, 5):
        assert ltlf_eval(r, [0] + list(w)) == ltlf_eval(PHI1, [P0] + list(w))
        assert ltlf_eval(r, [0] + list(w)) == ltlf_eval(expected, [0] + list(w))


def test_empty_suffix():
    assert not empty_suffix_accepts(parse_prop("F p0"))
    assert empty_suffix_accepts(And(Always(parse_prop("p0")), Top()))
    assert not empty_suffix_accepts(parse_prop("F p1 || F (p0 && X F p1)"))
    assert empty_suffix_accepts(parse_prop("WX p0"))
    assert not empty_suffix_accepts(parse_prop("X p0"))


def test_compile_F():
    d = compile_dfa(parse_prop("F p0"))
    assert d.num_states == 2 and len(d.accepting) == 1
    acc = next(iter(d.accepting))
    assert all(d.delta[acc] == acc)
    for w in all_traces(1, 6):
        assert accepts(d, w) == any(nu & 1 for nu in w)


def test_compile_phi1_three_states():
    d = compile_dfa(PHI1)
    assert d.num_states == 3
    assert minimize(d).num_states == 3
    for w in all_traces(2, 5):
        assert accepts(d, w) == ltlf_eval(PHI1, w)


def test_compile_true():
    d = compile_dfa(Top())
    assert d.num_states == 1 and d.accepting == {0}
    assert d.delta.tolist() == [[0]]


def test_trailing_obligations():
    # these are where "X a -> a" progression would accept too early
    for text in ["X G p0", "WX p0", "X p0", "X (p0 U p1)", "G (p0 || X p1)"]:
        f = parse_prop(text)
        d = compile_dfa(f, num_letters=2)
        for w in all_traces(2, 5):
            assert accepts(d, w) == ltlf_eval(f, w), (text, w)


def test_delta_total_and_in_range():
    d = compile_dfa(parse_prop("(p0 U p1) || G p2"))
    assert d.delta.shape == (d.num_states, 8)
    assert d.delta.min() >= 0 and d.delta.max() < d.num_states


def test_state_cap():
    with pytest.raises(CompilationError, match="cap of 2"):
        compile_dfa(PHI1, state_cap=2)


def test_letter_outside_alphabet():
    with pytest.raises(CompilationError):
        compile_dfa(parse_prop("F p2"), num_letters=2)


def test_minimize_idempotent_and_equivalent(rng):
    for _ in range(40):
        f = random_prop(rng, 2, 3)
        d = compile_dfa(f, num_letters=2)
        m = minimize(d)
        assert m.num_states <= d.num_states
        assert minimize(m).num_states == m.num_states
        assert m.metadata["states_before_minimization"] == d.num_states
        for w in all_traces(2, 4):
            assert accepts(m, w) == accepts(d, w)


def test_minimize_merges_equivalent_states():
    # F p0 || F p0 && G true may produce redundant residuals; minimization must shrink F-ish formulas to 2
    d = compile_dfa(parse_prop("F p0 || (F p0 && G true)"))
    assert minimize(d).num_states == 2


def test_run_results():
    d = compile_dfa(PHI1)
    r = run(d, [P0, P1])
    assert r.accepted and r.first_accept_index == 1
    assert not run(d, [P1, P0]).accepted
    empty = run(d, [])
    assert empty.final == d.initial and not empty.accepted and empty.first_accept_index is None
    t = run(compile_dfa(Top()), [])
    assert t.accepted and t.first_accept_index == 0
    with pytest.raises(ValueError):
        run(d, [4])


def test_json_round_trip_and_bit_contract():
    d = compile_dfa(PHI1)
    doc = json.loads(to_json(d, ["A", "G"]))
    assert doc["letters"] == [{"name": "p0", "formula": "A"}, {"name": "p1", "formula": "G"}]
    assert doc["num_states"] == 3 and doc["initial"] == d.initial
    assert len(doc["transitions"]) == 3 * 4
    for tr in doc["transitions"]:
        assert d.delta[tr["from"], tr["on"]] == tr["to"]
    back = from_json(to_json(d))
    assert np.array_equal(back.delta, d.delta) and back.accepting == d.accepting
    assert [print_formula(r) for r in back.residuals] == [print_formula(r) for r in d.residuals]


def test_dot_export():
    text = to_dot(compile_dfa(PHI1))
    assert text.startswith("digraph")
    assert text.count("doublecircle") == 1
    # edges grouped by target: at most one edge per (source, target) pair
    edges = [l.split("[")[0].strip() for l in text.splitlines() if "->" in l and "start" not in l]
    assert len(edges) == len(set(edges))


def test_monotone_acceptance_for_reach_tasks():
    d = compile_dfa(PHI1)
    for q in d.accepting:
        assert all(d.delta[q] == q)


def test_dfa_validation():
    with pytest.raises(ValueError):
        Dfa(1, 0, frozenset(), np.zeros((1, 3), dtype=int))
    with pytest.raises(ValueError):
        Dfa(1, 0, frozenset({5}), np.zeros((1, 2), dtype=int))


def test_random_equivalence_small(rng):
    for _ in range(30):
        f = random_prop(rng, 2, 4)
        d = compile_dfa(f, num_letters=2)
        for w in all_traces(2, 4):
            assert accepts(d, w) == ltlf_eval(f, w), (print_formula(f), w)
