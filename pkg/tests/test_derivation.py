from collections import Counter

import pytest
from corpus import ACK1_WITNESS

from tgvas.derivation import (Anchor, DerivationTree, Division, InconsistentAnchor, Node, NodeBudgetExceeded,
                              TreeError, UnrealizableParikh, append_segment, check_most_simplified,
                              copy_tree, cycle_effect, displacement, duplicate_cycle, is_nonnegative,
                              mirror_tree, parse_tree, path, preorder, propagate_configurations,
                              realize_parikh, same_tree, serialize_tree, small_division,
                              tree_from_rule_sequence)
from tgvas.fixtures import fixture
from tgvas.grammar import Rule

ACK1_CYCLE = "(X1 (N -1) (R1 X1 (T 2)))"


def configs(tree):
    return [(n.label, n.left[0], n.right[0]) for n in preorder(tree.root)]


def nested_ack1(depth):
    text = "(X1 0)"
    for _ in range(depth):
        text = f"(X1 (N -1) (R1 {text} (T 2)))"
    return parse_tree(text)


def test_leaf_rule_copies_configuration():
    t = propagate_configurations(parse_tree("(S 0)"), Anchor(root=((5,), (5,))), 1)
    assert configs(t) == [("S", 5, 5), ((0,), 5, 5)]


def test_single_descent_run():
    t = propagate_configurations(nested_ack1(1), Anchor(root=((1,), (2,))), 1)
    runs = [(n.left[0], n.right[0]) for n in preorder(t.root) if n.is_terminal]
    # the counter goes 1 -> 0 -> 0 -> 2 along the three terminals
    assert runs == [(1, 0), (0, 0), (0, 2)]


def test_leaf_anchor_propagates_upwards():
    t = propagate_configurations(parse_tree(ACK1_CYCLE), Anchor(leaf=((1,), (4,))), 1)
    # one -1 before the open leaf and one +2 after it
    assert (t.root.left, t.root.right) == ((2,), (6,))
    assert (t.hole().left, t.hole().right) == ((1,), (4,))


def test_anchor_contradiction():
    with pytest.raises(InconsistentAnchor):
        propagate_configurations(parse_tree("(S 0)"), Anchor(root=((1,), (2,))), 1)


def test_nonnegativity():
    w = propagate_configurations(parse_tree(ACK1_WITNESS), Anchor(root=((3,), None)), 1)
    assert is_nonnegative(w) and w.root.right == (6,)
    deep = propagate_configurations(nested_ack1(4), Anchor(root=((3,), None)), 1)
    assert not is_nonnegative(deep)
    assert is_nonnegative(propagate_configurations(parse_tree("(S 0)"), Anchor(root=((0,), None)), 1))


def test_most_simplified():
    w = propagate_configurations(parse_tree(ACK1_WITNESS), Anchor(root=((3,), None)), 1)
    assert check_most_simplified(w)
    loop = parse_tree("(S (A 0) (U (S 0) (B 0)))")
    loop = propagate_configurations(loop, Anchor(root=((0,), None)), 1)
    assert not check_most_simplified(loop)


def test_displacements():
    assert displacement(nested_ack1(4)) == (4,)
    assert displacement(parse_tree("(S 0)")) == (0,)
    t = parse_tree(ACK1_WITNESS)
    assert displacement(mirror_tree(t)) == (-3,)
    assert cycle_effect(parse_tree(ACK1_CYCLE)) == ((-1,), (2,))


def test_duplication():
    cycle = parse_tree(ACK1_CYCLE)
    assert same_tree(duplicate_cycle(cycle, 1).root, cycle.root)
    triple = duplicate_cycle(cycle, 3)
    assert cycle_effect(triple) == ((-3,), (6,))
    assert same_tree(append_segment(cycle, cycle).root, duplicate_cycle(cycle, 2).root)
    with pytest.raises(TreeError):
        append_segment(cycle, parse_tree("(R1 X1 (T 2))"))


def test_duplication_interpolates_configurations():
    # copy i of an m-fold duplication sits between the first and last copies
    m = 4
    seg = duplicate_cycle(parse_tree(ACK1_CYCLE), m)
    seg = propagate_configurations(seg, Anchor(root=((10,), (5,))), 1)
    chain = [n for n in path(seg.root, seg.hole()) if n.label == "X1"]
    lefts = [n.left[0] for n in chain]
    rights = [n.right[0] for n in chain]
    assert lefts == [10 - i for i in range(m + 1)]
    assert rights == [5 - 2 * i for i in range(m + 1)]


def test_small_division_reassembles():
    g = fixture("ack2")
    w = parse_tree("(X2 (N -1) (R2 (X2 1) (X1 (N -1) (R1 (X1 0) (T 2)))))")
    w.check_grammar(g)
    div = small_division(w)
    assert same_tree(div.reassemble().root, w.root)
    # hanging subtrees stay inside the segment that descends through X2
    assert [(p.label, q.label) for p, q in div.segments] == [("X2", "X2")]
    assert small_division(DerivationTree(Node((0,)))).segments == []


def test_fully_degenerate_root_is_a_trivial_segment():
    example = fixture("running")
    t = parse_tree("(X 1)")
    t.check_grammar(example)
    div = small_division(t)
    assert [(p.label, q.label) for p, q in div.segments] == [("X", "X")]


def test_exit_of_running_example_segment():
    example = fixture("running")
    inner = "(Z (C (P 1) (Q 1)) (D (C (P 1) (Q 1)) (Q 1)))"
    t = parse_tree(f"(X (A 1) (Y (B 1) (Z (X (A 1) (Y (B 1) {inner})) (F (S 1) (E 1)))))")
    t.check_grammar(example)
    div = small_division(t)
    (p, q), *rest = div.segments
    assert (p.label, q.label, q.rule()) == ("X", "Z", Rule.binary("Z", "C", "D"))
    assert [(a.label, b.label) for a, b in rest[:3]] == [("C", "C"), ("P", "P"), ("Q", "Q")]
    assert same_tree(div.reassemble().root, t.root)


def test_acyclic_tree_divides_at_every_node():
    example = fixture("running")
    t = parse_tree("(X (A 1) (Y (B 1) (Z (C (P 1) (Q 1)) (D (C (P 1) (Q 1)) (Q 1)))))")
    t.check_grammar(example)
    div = small_division(t)
    assert all(p is q for p, q in div.segments)
    assert len(div.segments) == sum(1 for n in preorder(t.root) if not n.is_terminal)


def test_rule_sequence_round_trip():
    w = parse_tree(ACK1_WITNESS)
    rules = [n.rule() for n in preorder(w.root) if not n.is_terminal]
    assert same_tree(tree_from_rule_sequence("X1", rules).root, w.root)


def test_serialization_round_trip():
    w = parse_tree(ACK1_WITNESS)
    assert serialize_tree(w) == ACK1_WITNESS
    assert serialize_tree(parse_tree(ACK1_CYCLE)) == ACK1_CYCLE
    copy, mapping = copy_tree(w.root)
    assert same_tree(copy, w.root) and mapping[w.root] is copy


def test_realize_parikh_simple_cycle():
    counts = Counter({Rule.binary("X1", "N", "R1"): 3, Rule.binary("R1", "X1", "T"): 3,
                      Rule.leaf("N", (-1,)): 3, Rule.leaf("T", (2,)): 3})
    seg = realize_parikh(counts, "X1", "X1")
    assert seg.hole().label == "X1"
    assert cycle_effect(seg) == ((-3,), (6,))
    assert Counter(n.rule() for n in preorder(seg.root) if n.children) == counts


def test_realize_parikh_rejects_unbalanced_counts():
    with pytest.raises(UnrealizableParikh):
        realize_parikh({Rule.binary("X1", "N", "R1"): 1, Rule.leaf("N", (-1,)): 1}, "X1", "X1")


def test_realize_parikh_budget():
    counts = {Rule.binary("X1", "N", "R1"): 50, Rule.binary("R1", "X1", "T"): 50,
              Rule.leaf("N", (-1,)): 50, Rule.leaf("T", (2,)): 50}
    with pytest.raises(NodeBudgetExceeded):
        realize_parikh(counts, "X1", "X1", budget=100)


def test_division_parent_links():
    w = parse_tree(ACK1_WITNESS)
    div = Division(w, small_division(w).segments)
    links = div.parent_links()
    assert links[0] is None and all(v == 0 for k, v in links.items() if k)
