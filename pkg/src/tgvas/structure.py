"""Production graphs, rule classes, thinness and the index of a grammar."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import networkx as nx

from .grammar import Grammar, GrammarError, Rule


class RuleClass(str, Enum):
    LEAF = "Leaf"
    NONDEGENERATE = "Nondegenerate"
    LEFT_DEGENERATE = "LeftDegenerate"
    RIGHT_DEGENERATE = "RightDegenerate"
    FULLY_DEGENERATE = "FullyDegenerate"


class NotThin(ValueError):
    def __init__(self, rule: Rule):
        self.rule = rule
        super().__init__(f"grammar is not thin: {rule} is nondegenerate")


@dataclass(frozen=True)
class ProductionGraph:
    grammar: Grammar
    graph: nx.DiGraph
    scc_id: dict
    members: tuple[tuple[str, ...], ...]
    condensation: nx.DiGraph

    def same_scc(self, a, b) -> bool:
        return self.scc_id[a] == self.scc_id[b]

    def is_nontrivial(self, scc: int) -> bool:
        names = self.members[scc]
        if len(names) > 1:
            return True
        return self.graph.has_edge(names[0], names[0])

    def nontrivial_sccs(self) -> list[tuple[str, ...]]:
        return [m for i, m in enumerate(self.members) if self.is_nontrivial(i)]


def production_graph(grammar: Grammar) -> ProductionGraph:
    graph = nx.DiGraph()
    graph.add_nodes_from(grammar.nonterminals)
    for rule in grammar.rules:
        if rule.is_leaf:
            graph.add_edge(rule.head, rule.vector)
        else:
            graph.add_edge(rule.head, rule.left)
            graph.add_edge(rule.head, rule.right)
    components = list(nx.strongly_connected_components(graph))
    owner = {}
    for i, comp in enumerate(components):
        for v in comp:
            owner[v] = i
    # number SCCs by the first nonterminal of each in declaration order
    renumber = {}
    for x in grammar.nonterminals:
        renumber.setdefault(owner[x], len(renumber))
    for terminal in grammar.terminals:
        renumber.setdefault(owner[terminal], len(renumber))
    scc_id = {v: renumber[owner[v]] for v in graph.nodes}
    order = {x: i for i, x in enumerate(grammar.nonterminals)}
    members = [[] for _ in renumber]
    for v in graph.nodes:
        members[scc_id[v]].append(v)
    members = tuple(tuple(sorted(m, key=lambda v: order.get(v, len(order)) if isinstance(v, str)
                                 else len(order))) for m in members)
    condensation = nx.DiGraph()
    condensation.add_nodes_from(range(len(members)))
    for a, b in graph.edges:
        if scc_id[a] != scc_id[b]:
            condensation.add_edge(scc_id[a], scc_id[b])
    return ProductionGraph(grammar, graph, scc_id, members, condensation)


def classify_rule(pg: ProductionGraph, rule: Rule) -> RuleClass:
    if rule not in pg.grammar.rule_index:
        raise GrammarError(f"rule {rule} does not belong to the grammar")
    if rule.is_leaf:
        return RuleClass.LEAF
    left_in = pg.same_scc(rule.head, rule.left)
    right_in = pg.same_scc(rule.head, rule.right)
    if left_in and right_in:
        return RuleClass.NONDEGENERATE
    if right_in:
        return RuleClass.LEFT_DEGENERATE
    if left_in:
        return RuleClass.RIGHT_DEGENERATE
    return RuleClass.FULLY_DEGENERATE


def is_thin(grammar: Grammar) -> bool:
    pg = production_graph(grammar)
    return all(classify_rule(pg, r) is not RuleClass.NONDEGENERATE for r in grammar.rules)


@dataclass(frozen=True)
class IndexTable:
    index: dict[str, int]
    grammar_index: int

    def __getitem__(self, symbol: str) -> int:
        return self.index[symbol]


def index_table(grammar: Grammar, pg: ProductionGraph | None = None) -> IndexTable:
    pg = pg or production_graph(grammar)
    classes = {r: classify_rule(pg, r) for r in grammar.rules}
    for rule, cls in classes.items():
        if cls is RuleClass.NONDEGENERATE:
            raise NotThin(rule)
    by_scc: dict[int, list[Rule]] = {}
    for rule in grammar.rules:
        by_scc.setdefault(pg.scc_id[rule.head], []).append(rule)
    value: dict[int, int] = {}
    # children before parents
    for scc in reversed(list(nx.topological_sort(pg.condensation))):
        if not any(isinstance(v, str) for v in pg.members[scc]):
            continue
        k = 1
        for rule in by_scc.get(scc, ()):
            cls = classes[rule]
            if cls is RuleClass.LEFT_DEGENERATE:
                k = max(k, value[pg.scc_id[rule.left]] + 1)
            elif cls is RuleClass.RIGHT_DEGENERATE:
                k = max(k, value[pg.scc_id[rule.right]] + 1)
            elif cls is RuleClass.FULLY_DEGENERATE:
                a, b = value[pg.scc_id[rule.left]], value[pg.scc_id[rule.right]]
                k = max(k, a + 1 if a == b else max(a, b))
        value[scc] = k
    index = {x: value[pg.scc_id[x]] for x in grammar.nonterminals}
    return IndexTable(index, index[grammar.start])
