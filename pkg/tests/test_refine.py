import copy

import pytest
from corpus import ACK1_WITNESS, LEFT_FLAT, ZERO_EFFECT, ZERO_EFFECT_WITNESS
from generators import SEARCH, yes_instances
from hypothesis import given, settings
from hypothesis import strategies as st

from tgvas.derivation import Node, parse_tree, serialize_tree
from tgvas.fixtures import fixture
from tgvas.grammar import parse_grammar
from tgvas.klm import klm_from_json, klm_to_json, tree_rank
from tgvas.oracle import bounded_reach
from tgvas.refine import (InfeasibleSystem, NotPerfect, PipelineBounds, check_perfect, check_state, clean,
                          decide_orthogonality, decompose_combinatorial, expanded_witness, initial_state,
                          reconstruct_tree, refinement_pipeline, scc_split, validate_reconstruction,
                          verify_certificate)

BOUNDS = PipelineBounds(oracle=SEARCH)


def pipeline(g, s, t, witness=None):
    witness = witness or bounded_reach(g, (s,), (t,)).witness
    return refinement_pipeline(g, (s,), (t,), witness)


def test_split_into_repeat_closed_runs():
    chain = [Node(x) for x in "XYXYZWZW"]
    pieces = scc_split(chain)
    assert [(p.label, q.label) for p, q in pieces] == [("X", "Y"), ("Z", "W")]
    assert pieces[0][1] is chain[3] and pieces[1][0] is chain[4]
    assert [(p.label, q.label) for p, q in scc_split([Node(x) for x in "ABC"])] == \
        [("A", "A"), ("B", "B"), ("C", "C")]


def test_initial_state_is_consistent():
    state = initial_state(fixture("ack1"), (3,), (6,), parse_tree(ACK1_WITNESS))
    assert check_state(state) == []
    assert state.rank_trace == [state.rank()] == [(0, 1)]


def test_refinement_rejects_higher_dimensions():
    g = parse_grammar("gvas 2\nstart S\nS -> 0 0\n")
    with pytest.raises(ValueError):
        initial_state(g, (0, 0), (0, 0), parse_tree("(S 0 0)"))


def test_trivial_grammar_needs_no_refinement():
    result = pipeline(fixture("triv"), 4, 4)
    assert result.report.perfect
    assert not [e for e in result.trace if e.operator.startswith("Decomp")]
    verdict = verify_certificate(result.klm, fixture("triv"), (4,), (4,))
    assert verdict.kind == "Accept"


def test_ackermann_one_becomes_perfect():
    g = fixture("ack1")
    result = pipeline(g, 3, 6, parse_tree(ACK1_WITNESS))
    ops = [e.operator for e in result.trace if e.operator.startswith("Decomp")]
    assert ops == ["DecompA"]
    assert result.rank_trace == [(0, 1), (0, 0)]
    assert result.report.perfect and check_state(result.state) == []
    assert verify_certificate(result.klm, g, (3,), (6,)).kind == "Accept"


def test_ackermann_two_refines_and_accepts():
    g = fixture("ack2")
    result = pipeline(g, 2, 4)
    assert any(e.operator.startswith("Decomp") for e in result.trace)
    ranks = result.rank_trace
    assert all(a > b for a, b in zip(ranks, ranks[1:]))
    verdict = verify_certificate(result.klm, g, (2,), (4,))
    assert verdict.kind == "Accept"


def test_combinatorial_decomposition_encodes_the_side():
    state = initial_state(fixture("ack1"), (3,), (6,), parse_tree(ACK1_WITNESS))
    clean(state)
    before = state.rank()
    decompose_combinatorial(state, 0, "left")
    assert state.rank() < before
    assert check_state(state) == []
    encoded = sorted(n for n, info in state.klm.symbols.items() if info.kind == "encoded")
    assert {"(_0X1)", "(_1X1)", "(_2X1)", "(_3X1)"} <= set(encoded)
    assert {state.klm.symbols[n].base for n in encoded} == {"X1", "R1"}
    assert expanded_witness(state).root.label == "X1"


def test_orthogonality_detection():
    g = parse_grammar(LEFT_FLAT)
    w = bounded_reach(g, (2,), (5,)).witness
    comp = initial_state(g, (2,), (5,), w).klm.components[0]
    evidence = decide_orthogonality(comp, "left")
    assert evidence is not None and evidence.uniform_displacements == {"A": (0,)}
    assert decide_orthogonality(comp, "right") is None


def test_orthogonalization_encodes_and_certifies():
    g = parse_grammar(LEFT_FLAT)
    result = pipeline(g, 2, 5)
    assert "Ortho" in [e.operator for e in result.trace]
    symbols = result.klm.symbols
    assert symbols["A[2:2]"].kind == "certificate"
    assert {"(_2S)", "(_2U)"} <= set(symbols)
    verdict = verify_certificate(result.klm, g, (2,), (5,))
    assert verdict.kind == "Accept"
    assert verdict.tree.size() == 20


def test_zero_effect_cycle_is_reconstructed_with_the_small_repetition_counts():
    g = parse_grammar(ZERO_EFFECT)
    result = pipeline(g, 0, 0, parse_tree(ZERO_EFFECT_WITNESS))
    kt = result.klm
    report = check_perfect(kt, BOUNDS)
    assert report.perfect
    rep = [r for r in report.components.values()][0]
    assert rep.forward is not None and serialize_tree(rep.forward.cycle) == "(S (A 1) (U S (B -1)))"
    small = reconstruct_tree(kt, g, BOUNDS, report=report, minimize=True)
    assert validate_reconstruction(kt, g, small) == []
    assert small.tree.size() == 20


def test_zero_effect_cycle_full_constants():
    g = parse_grammar(ZERO_EFFECT)
    result = pipeline(g, 0, 0, parse_tree(ZERO_EFFECT_WITNESS))
    full = reconstruct_tree(result.klm, g)
    assert full.constants == {"b1": 8, "b2": 8, "b3": 72, "b4": 427, "b5": 435, "b": 31320}
    assert full.tree.size() == 187928
    assert validate_reconstruction(result.klm, g, full) == []


def test_reconstruction_requires_a_feasible_system():
    g = fixture("ack1")
    kt = copy.deepcopy(pipeline(g, 3, 6).klm)
    kt.components[0].constraints["r_src"] = (7,)
    with pytest.raises(InfeasibleSystem):
        reconstruct_tree(kt, g)


def test_reconstruction_requires_perfectness():
    g = fixture("ack1")
    state = initial_state(g, (3,), (6,), parse_tree(ACK1_WITNESS))
    clean(state)
    with pytest.raises(NotPerfect):
        reconstruct_tree(state.klm, g)


def test_wrong_instance_is_rejected():
    g = fixture("ack1")
    kt = pipeline(g, 3, 6).klm
    verdict = verify_certificate(kt, g, (3,), (7,))
    assert verdict.kind == "Reject" and "root constraint" in verdict.reason


def test_foreign_rule_is_rejected():
    g = fixture("ack1")
    data = klm_to_json(pipeline(g, 3, 6).klm)
    leaf = data["root"]["children"][0]
    leaf["exit_rule"], leaf["children"] = "N -> -2", [{"kind": "terminal", "vector": [-2]}]
    verdict = verify_certificate(klm_from_json(data), g, (3,), (6,))
    assert verdict.kind == "Reject" and "not in the grammar" in verdict.reason


def test_changed_root_target_is_rejected():
    g = fixture("ack1")
    kt = copy.deepcopy(pipeline(g, 3, 6).klm)
    kt.components[0].constraints["r_src"] = (7,)
    assert verify_certificate(kt, g, (3,), (7,)).kind == "Reject"


def test_certificates_survive_serialization():
    g = fixture("ack2")
    kt = pipeline(g, 2, 4).klm
    again = klm_from_json(klm_to_json(kt))
    assert klm_to_json(again) == klm_to_json(kt)
    assert tree_rank(again, 3, 1) == tree_rank(kt, 3, 1)


@pytest.mark.parametrize("inst", yes_instances(40, seed=11), ids=lambda i: f"seed{i.seed}")
def test_random_instances_refine_and_verify(inst):
    result = refinement_pipeline(inst.grammar, inst.source, inst.target, inst.witness, BOUNDS)
    ranks = result.rank_trace
    assert all(a > b for a, b in zip(ranks, ranks[1:]))
    verdict = verify_certificate(result.klm, inst.grammar, inst.source, inst.target, BOUNDS)
    assert verdict.kind in ("Accept", "Unknown")
    if verdict.kind == "Unknown":
        assert "budget" in verdict.reason or "inconclusive" in verdict.reason


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_refinement_preserves_capture(seed):
    inst = yes_instances(1, seed=seed)[0]
    result = refinement_pipeline(inst.grammar, inst.source, inst.target, inst.witness, BOUNDS, check=True)
    # every step re-checked capture; the working tree still spells the witness
    assert check_state(result.state) == []
    assert serialize_tree(expanded_witness(result.state)) == serialize_tree(inst.witness)
