import pytest

from tgvas.fixtures import fixture, fixture_text
from tgvas.grammar import (EmptyGrammarError, GrammarError, Rule, grammar_size, induced_sub_gvas,
                           make_proper, mirror, parse_grammar)


def test_running_example_parses_with_all_rules():
    g = fixture("running")
    assert len(g.rules) == 18
    assert g.start == "X"
    # 13 distinct nonterminals appear in the rule table
    assert set(g.nonterminals) == set("XYZCDEFABPQST")


def test_minimal_grammar():
    g = parse_grammar("gvas 1\nstart S\nS -> 0\n")
    assert g.nonterminals == ("S",)
    assert g.terminals == ((0,),)


@pytest.mark.parametrize("text, fragment", [
    ("gvas 1\nstart X\nX -> A B C\nA -> 0\nB -> 0\nC -> 0\n", "binary body"),
    ("start X\n", "gvas"),
    ("gvas 1\nstart X\nX -> A B\nA -> 0\n", "undeclared symbol B"),
    ("gvas 2\nstart X\nX -> 1\n", "dimension mismatch"),
    ("gvas 1\nstart X\nX -> A 1\nA -> 0\n", "mixes"),
    ("gvas 1\nstart X\nX -> 0\nX -> 0\n", "duplicate rule"),
])
def test_parse_errors_name_the_line(text, fragment):
    with pytest.raises(GrammarError) as info:
        parse_grammar(text)
    assert fragment in str(info.value)
    if "start X\n" in text and fragment != "gvas":
        assert info.value.line is not None


def test_rule_order_is_preserved():
    g = parse_grammar("gvas 1\nstart S\nS -> 2\nS -> A S\nA -> -1\nS -> 0\n")
    assert [str(r) for r in g.rules] == ["S -> 2", "S -> A S", "A -> -1", "S -> 0"]


def test_make_proper_keeps_running_example():
    g = fixture("running")
    assert make_proper(g) == g


def test_make_proper_drops_unreachable():
    g = parse_grammar("gvas 1\nstart S\nS -> 0\nU -> 1\n")
    assert make_proper(g).nonterminals == ("S",)


def test_make_proper_rejects_unproductive_start():
    with pytest.raises(EmptyGrammarError):
        make_proper(parse_grammar("gvas 1\nstart S\nS -> S S\n"))


def test_induced_sub_grammar_of_c():
    sub = induced_sub_gvas(fixture("running"), "C")
    assert set(sub.nonterminals) == {"C", "D", "P", "Q"}
    assert {str(r) for r in sub.rules} == {"C -> P D", "C -> P Q", "D -> C Q", "P -> 1", "Q -> 1"}
    leaf = induced_sub_gvas(fixture("running"), "A")
    assert [str(r) for r in leaf.rules] == ["A -> 1"]


def test_induced_sub_grammar_at_start_is_make_proper():
    g = fixture("ack2")
    assert induced_sub_gvas(g, g.start) == make_proper(g)


def test_mirror_examples():
    g = parse_grammar("gvas 1\nstart S\nS -> -1\n")
    assert mirror(g).rules == (Rule.leaf("S", (1,)),)
    g = parse_grammar("gvas 1\nstart S\nS -> A B\nA -> 2\nB -> -3\n")
    assert {str(r) for r in mirror(g).rules} == {"S -> B A", "A -> -2", "B -> 3"}
    example = fixture("running")
    assert mirror(mirror(example)) == example


def test_grammar_size():
    s = grammar_size(parse_grammar("gvas 1\nstart S\nS -> 0\n"))
    assert (s.symbol_count, s.max_norm, s.size) == (3, 0, 3)
    assert grammar_size(parse_grammar("gvas 1\nstart S\nS -> -5\n")).max_norm == 5
    example = grammar_size(fixture("running"))
    # 13 nonterminals, terminals {1, -1}, 18 rules
    assert (example.symbol_count, example.max_norm, example.size) == (33, 1, 33)


def test_text_round_trip():
    for name in ("running", "ack1", "ack2", "triv"):
        g = fixture(name)
        assert parse_grammar(g.to_text()) == g
    assert "gvas 1" in fixture_text("ack1")
