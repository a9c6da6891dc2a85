import json
import random

import pytest
from corpus import ACK1_WITNESS, TWO_CYCLES, TWO_CYCLES_WITNESS
from generators import yes_instances

from tgvas.derivation import parse_tree, small_division
from tgvas.diophantine import minimal_solution
from tgvas.fixtures import fixture
from tgvas.grammar import Rule, parse_grammar
from tgvas.klm import (CaptureError, KlmComponent, RankError, capture_component,
                       certificate_name, char_system, check_capture, component_index, encoded_name,
                       geometric_dimension, initial_klm_tree, klm_from_json, klm_to_json, rule_var,
                       solution_from_tree, tree_rank)


def ack1_tree(s=3, t=6):
    return initial_klm_tree(fixture("ack1"), (s,), (t,), parse_tree(ACK1_WITNESS))


def test_running_example_capture():
    example = fixture("running")
    inner = "(Z (C (P 1) (Q 1)) (D (C (P 1) (Q 1)) (Q 1)))"
    t = parse_tree(f"(X (A 1) (Y (B 1) (Z (X (A 1) (Y (B 1) {inner})) (F (S 1) (E 1)))))")
    t.check_grammar(example)
    (p, q), *_ = small_division(t).segments
    comp = capture_component(p, q)
    assert comp.scc_symbols() == {"X", "Y", "Z"}
    assert comp.left_rules == {Rule.leaf("A", (1,)), Rule.leaf("B", (1,))}
    assert comp.exit_rule == Rule.binary("Z", "C", "D")
    assert check_capture(comp, p, q)
    # the left side alone has index 1; the right side F -> S E has index 2
    assert component_index(KlmComponent(comp.source, comp.target, comp.scc_rules, comp.left_rules,
                                        frozenset(), comp.exit_rule)) == 1
    assert component_index(comp) == 2


def test_trivial_capture():
    t = parse_tree("(Z (C (P 1) (Q 1)) (D (C (P 1) (Q 1)) (Q 1)))")
    comp = capture_component(t.root, t.root)
    assert comp.is_trivial and comp.exit_rule == Rule.binary("Z", "C", "D")


def test_missing_side_rule_breaks_capture():
    t = parse_tree(ACK1_WITNESS)
    (p, q), *_ = small_division(t).segments
    comp = capture_component(p, q)
    broken = KlmComponent(comp.source, comp.target, comp.scc_rules, frozenset(), comp.right_rules,
                          comp.exit_rule)
    assert not check_capture(broken, p, q)


def test_not_strongly_connected_segment():
    t = parse_tree("(X (A 1) (Y (B 1) (Z (C (P 1) (Q 1)) (D (C (P 1) (Q 1)) (Q 1)))))")
    z = t.root.children[1].children[1]
    with pytest.raises(CaptureError):
        capture_component(t.root, z)


def test_ackermann_component():
    kt, alignment, _ = ack1_tree()
    comp = kt.components[0]
    assert comp.scc_rules == {Rule.binary("X1", "N", "R1"), Rule.binary("R1", "X1", "T")}
    assert comp.left_rules == {Rule.leaf("N", (-1,))}
    assert comp.right_rules == {Rule.leaf("T", (2,))}
    assert comp.exit_rule == Rule.leaf("X1", (0,))
    assert geometric_dimension(comp) == 1
    assert component_index(comp) == 1
    assert tree_rank(kt, 2, 1) == (0, 1)


def test_single_terminal_tree_is_one_trivial_component():
    kt, _, _ = initial_klm_tree(fixture("triv"), (0,), (0,), parse_tree("(S 0)"))
    assert len(kt.components) == 1 and kt.components[0].is_trivial
    sol = minimal_solution(char_system(kt))
    assert sol["c0.l_src.0"] == sol["c0.r_tgt.0"] == 0
    assert tree_rank(kt, 1, 1) == ()


def test_char_system_of_ackermann_witness():
    kt, alignment, _ = ack1_tree()
    system = char_system(kt)
    sol = solution_from_tree(kt, alignment)
    assert system.satisfied_by(sol)
    assert sol[rule_var(0, "scc", Rule.binary("X1", "N", "R1"))] == 3
    assert minimal_solution(system) is not None


def test_char_system_rejects_unreachable_target():
    kt, _, _ = ack1_tree()
    kt.components[0].constraints["r_src"] = (8,)
    assert minimal_solution(char_system(kt)) is None


def test_two_independent_cycle_effects():
    g = parse_grammar(TWO_CYCLES)
    kt, alignment, _ = initial_klm_tree(g, (1,), (4,), parse_tree(TWO_CYCLES_WITNESS))
    ranks = [(c.source, geometric_dimension(c)) for c in kt.components if not c.is_trivial]
    assert ranks == [("S", 2), ("W", 1)]
    assert tree_rank(kt, 2, 1) == (1, 1)
    assert char_system(kt).satisfied_by(solution_from_tree(kt, alignment))


def test_rank_outside_classes():
    kt, _, _ = ack1_tree()
    with pytest.raises(RankError):
        tree_rank(kt, 1, 1)


def test_side_grammar_of_index_two():
    g = parse_grammar("gvas 1\nstart X\nX -> X C\nX -> 1\nC -> P D\nC -> P Q\nD -> C Q\nP -> 1\nQ -> 1\n")
    t = parse_tree("(X (X (X 1) (C (P 1) (Q 1))) (C (P 1) (D (C (P 1) (Q 1)) (Q 1))))")
    t.check_grammar(g)
    (p, q), *_ = small_division(t).segments
    comp = capture_component(p, q)
    assert component_index(comp) == 2


def test_annotated_symbol_names():
    assert encoded_name("X", "left", (3,)) == "(_3X)"
    assert encoded_name("X", "right", (5,)) == "(X_5)"
    assert certificate_name("A", (3,), (5,)) == "A[3:5]"


def test_serialization_round_trip():
    kt, _, _ = ack1_tree()
    data = klm_to_json(kt)
    assert set(data["root"]) >= {"kind", "source", "target", "scc_rules", "left_rules", "right_rules",
                                 "exit_rule", "annotation", "constraints", "children"}
    again = klm_from_json(json.loads(json.dumps(data)))
    assert klm_to_json(again) == data


@pytest.mark.parametrize("instance", yes_instances(25, seed=5), ids=lambda ins: f"seed{ins.seed}")
def test_capture_round_trip_on_random_divisions(instance):
    g = instance.grammar
    kt, alignment, tree = initial_klm_tree(g, instance.source, instance.target, instance.witness)
    for comp, (p, q) in zip(kt.components, alignment.segments):
        assert check_capture(capture_component(p, q), p, q)
        assert check_capture(comp, p, q)
    assert char_system(kt).satisfied_by(solution_from_tree(kt, alignment))
    for comp in kt.components:
        if not comp.is_trivial:
            assert geometric_dimension(comp) >= 1


def test_rank_order_is_lexicographic():
    rng = random.Random(3)
    vectors = [tuple(rng.randint(0, 2) for _ in range(4)) for _ in range(60)]
    for a in vectors:
        assert not a < a
        for b in vectors:
            if a < b:
                assert not b < a
            for c in vectors:
                if a < b and b < c:
                    assert a < c
