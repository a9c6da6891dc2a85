"""Refinement of KLM trees into perfect certificates, and reconstruction of
derivation trees from perfect certificates.

The pipeline keeps a working copy of the witness whose labels follow the
refinements: path nodes of orthogonalised segments carry encoded symbols and
their hanging subtrees on that side are collapsed into certificate leaves.
Every component stays aligned with the segment it captures, so capture can
be re-checked after each step.  Certificate checking never looks at a
witness.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator

import networkx as nx

from .derivation import (DEFAULT_NODE_BUDGET, Anchor, DerivationTree, Division, InconsistentAnchor, Node,
                         NodeBudgetExceeded, TreeError, UnrealizableParikh, copy_tree, divide_subtree,
                         is_nonnegative, path, preorder, propagate_configurations, realize_parikh,
                         same_tree)
from .diophantine import Support, homogeneous_support, minimal_solution
from .grammar import EmptyGrammarError, Grammar, GrammarError, Rule, Vector, induced_sub_gvas
from .klm import (CONFIG_NAMES, SIDES, Alignment, CaptureError, KlmComponent, KlmTree, RankError, SymbolInfo,
                  base_rule, base_symbol, build_klm_tree, certificate_name, char_system, check_capture,
                  config_var, cycle_generators, encoded_name, implied_constraints,
                  initial_klm_tree, node_consistent, rule_var, segment_parts, solution_from_tree, tree_rank)
from .oracle import (OracleBounds, OracleInconclusive, PumpingCycle, bounded_reach, find_pumping_cycle)
from .structure import index_table

SRC = {"left": "l_src", "right": "r_src"}
TGT = {"left": "l_tgt", "right": "r_tgt"}


class NotPerfect(ValueError):
    pass


class InfeasibleSystem(ValueError):
    pass


class PipelineAborted(RuntimeError):
    """The pipeline could not continue; ``state`` holds the last consistent state."""

    def __init__(self, message: str, state: "RefinementState"):
        super().__init__(message)
        self.state = state


@dataclass(frozen=True)
class PipelineBounds:
    oracle: OracleBounds = field(default_factory=OracleBounds)
    pump_length_bound: int = 64
    delta_cap: int = 4096
    node_budget: int = DEFAULT_NODE_BUDGET
    max_iterations: int = 10_000

    def __post_init__(self):
        if min(self.pump_length_bound, self.delta_cap, self.node_budget, self.max_iterations) <= 0:
            raise ValueError("bounds must be positive")


@dataclass(frozen=True)
class TraceEntry:
    operator: str
    component: int | None
    rank_before: tuple
    rank_after: tuple
    note: str = ""

    def to_json(self):
        return {"operator": self.operator, "component": self.component,
                "rank_before": list(self.rank_before), "rank_after": list(self.rank_after),
                "note": self.note}

    def __str__(self):
        where = "-" if self.component is None else str(self.component)
        text = f"{self.operator} component={where} rank={list(self.rank_before)}->{list(self.rank_after)}"
        return f"{text} {self.note}".rstrip()


@dataclass
class RefinementState:
    grammar: Grammar
    source: Vector
    target: Vector
    witness: DerivationTree
    work: DerivationTree
    klm: KlmTree
    alignment: Alignment
    k: int
    expansions: dict = field(default_factory=dict)
    rank_trace: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    @property
    def division(self) -> Division:
        return Division(self.work, list(self.alignment.segments))

    def rank(self) -> tuple:
        return tree_rank(self.klm, self.k, self.grammar.dim)


def initial_state(grammar: Grammar, s, t, witness: DerivationTree) -> RefinementState:
    if grammar.dim != 1:
        raise ValueError("the refinement pipeline handles one-dimensional grammars")
    k = index_table(grammar).grammar_index
    kt, alignment, work = initial_klm_tree(grammar, tuple(s), tuple(t), witness)
    state = RefinementState(grammar, tuple(s), tuple(t), witness.copy(), work, kt, alignment, k)
    state.rank_trace.append(state.rank())
    return state


# -- invariants -------------------------------------------------------------------

def expanded_witness(state: RefinementState) -> DerivationTree:
    """The working tree with certificate leaves expanded and labels decoded."""
    root, mapping = copy_tree(state.work.root)
    inverse = {new: old for old, new in mapping.items()}
    stack = [root]
    while stack:
        node = stack.pop()
        original = inverse.get(node)
        if original in state.expansions:
            sub, sub_map = copy_tree(state.expansions[original])
            node.label, node.children = sub.label, sub.children
            for old, new in sub_map.items():
                inverse[new] = old
        if not node.is_terminal:
            node.label = base_symbol(state.klm.symbols, node.label)
        stack.extend(node.children)
    return DerivationTree(root)


def check_state(state: RefinementState) -> list[str]:
    """Capture, solution and reassembly checks; returns the problems found."""
    problems = []
    kt, symbols = state.klm, state.klm.symbols
    for i, (comp, (p, q)) in enumerate(zip(kt.components, state.alignment.segments)):
        if not check_capture(comp, p, q, symbols):
            problems.append(f"component {i} does not capture its segment")
    if not all(node_consistent(n, symbols) for n in preorder(state.work.root)):
        problems.append("annotated labels disagree with configurations")
    sol = solution_from_tree(kt, state.alignment)
    if not char_system(kt).satisfied_by(sol):
        problems.append("witness solution violates the characteristic system")
    if not same_tree(state.division.reassemble().root, state.work.root, configs=True):
        problems.append("division does not reassemble the working tree")
    if not same_tree(expanded_witness(state).root, state.witness.root):
        problems.append("working tree no longer expands to the witness")
    return problems


# -- bookkeeping ------------------------------------------------------------------

def _constraints_by_segment(state: RefinementState) -> dict:
    return {seg: dict(c.constraints) for seg, c in zip(state.alignment.segments, state.klm.components)}


def _rebuild(state: RefinementState, segments, constraints: dict) -> None:
    order = {n: i for i, n in enumerate(preorder(state.work.root))}
    segments = sorted(segments, key=lambda seg: order[seg[0]])
    kt, alignment = build_klm_tree(Division(state.work, segments), state.klm.dim, state.klm.symbols)
    for comp, seg in zip(kt.components, alignment.segments):
        comp.constraints.update(constraints.get(seg, {}))
        for name, value in implied_constraints(comp, kt.symbols).items():
            if comp.constraints.setdefault(name, value) != value:
                raise CaptureError(f"constraint {name} contradicts an encoded symbol")
    state.klm, state.alignment = kt, alignment


def _register(state: RefinementState, name: str, info: SymbolInfo) -> None:
    symbols = state.klm.symbols
    if name in state.grammar.nonterminals:
        raise CaptureError(f"annotated symbol {name} clashes with a grammar symbol")
    if symbols.setdefault(name, info) != info:
        raise CaptureError(f"annotated symbol {name} registered twice with different meanings")


def _encode_chain(state: RefinementState, chain: list[Node], side: str) -> dict[Node, str]:
    previous = {}
    for node in chain:
        value = tuple(node.left if side == "left" else node.right)
        name = encoded_name(node.label, side, value)
        _register(state, name, SymbolInfo("encoded", node.label, side, value=value))
        previous[node] = node.label
        node.label = name
    return previous


def _collapse_side(state: RefinementState, chain: list[Node], side: str) -> None:
    """Replace hanging subtrees on ``side`` by certificate leaves."""
    on_chain = set(chain)
    for node in chain[:-1]:
        first, second = node.children
        if side == "left" and second in on_chain:
            idx = 0
        elif side == "right" and first in on_chain:
            idx = 1
        else:
            continue
        child = node.children[idx]
        start, end = tuple(child.left), tuple(child.right)
        name = certificate_name(child.label, start, end)
        _register(state, name, SymbolInfo("certificate", child.label, side, start=start, end=end))
        leaf = Node(name)
        term = Node(tuple(b - a for a, b in zip(start, end)))
        leaf.left = term.left = start
        leaf.right = term.right = end
        leaf.children = [term]
        node.children[idx] = leaf
        state.expansions[leaf] = child


def scc_split(chain: list[Node]) -> list[tuple[Node, Node]]:
    """Cut a path into maximal runs closed under repeated labels."""
    last = {}
    for i, node in enumerate(chain):
        last[node.label] = i
    pieces = []
    i = 0
    while i < len(chain):
        end = last[chain[i].label]
        j = i
        while j < end:
            j += 1
            end = max(end, last[chain[j].label])
        pieces.append((chain[i], chain[end]))
        i = end + 1
    return pieces


def _completion(pieces, covered: set, skip: Node) -> list[tuple[Node, Node]]:
    extra = []
    for _, exit_node in pieces:
        if exit_node is skip:
            continue
        for child in exit_node.children:
            if not child.is_terminal and child not in covered:
                extra.extend(divide_subtree(child))
    return extra


def _replace_component(state: RefinementState, i: int, pieces, operator: str, note: str = "") -> None:
    p, q = state.alignment.segments[i]
    constraints = _constraints_by_segment(state)
    old = constraints.pop((p, q))
    for a, b in pieces:
        slot = constraints.setdefault((a, b), {})
        if a is p:
            slot.update({k: v for k, v in old.items() if k in ("l_src", "r_src")})
        if b is q:
            slot.update({k: v for k, v in old.items() if k in ("l_tgt", "r_tgt")})
    others = [seg for j, seg in enumerate(state.alignment.segments) if j != i]
    covered = {a for a, _ in others} | {a for a, _ in pieces}
    extra = _completion(pieces, covered, q)
    before = state.rank()
    _rebuild(state, others + list(pieces) + extra, constraints)
    after = state.rank()
    if not after < before:
        raise RankError(f"{operator} did not decrease the rank: {before} -> {after}")
    state.trace.append(TraceEntry(operator, i, before, after, note))
    state.rank_trace.append(after)


# -- cleaning -------------------------------------------------------------------------

def constrain(state: RefinementState, support: Support | None = None) -> RefinementState:
    kt = state.klm
    system = char_system(kt)
    sol = solution_from_tree(kt, state.alignment)
    if not system.satisfied_by(sol):
        raise CaptureError("witness solution violates the characteristic system")
    support = support or homogeneous_support(system)
    added = 0
    for i, comp in enumerate(kt.components):
        for which in CONFIG_NAMES:
            names = [config_var(i, which, k) for k in range(kt.dim)]
            if any(n in support.unbounded for n in names):
                continue
            value = tuple(sol[n] for n in names)
            if which in comp.constraints:
                if comp.constraints[which] != value:
                    raise CaptureError(f"component {i}: {which} constraint contradicts the witness")
                continue
            comp.constraints[which] = value
            added += 1
    if added:
        rank = state.rank()
        state.trace.append(TraceEntry("Constr", None, rank, rank, f"fixed {added} variables"))
    return state


@dataclass(frozen=True)
class OrthogonalityEvidence:
    side: str
    uniform_displacements: dict[str, Vector]
    uniform_offsets: dict[str, Vector]

    def config_at(self, symbol: str, source_value: Vector) -> Vector:
        """Uniform configuration of a path symbol given the source's value on this side."""
        offset = self.uniform_offsets[symbol]
        sign = 1 if self.side == "left" else -1
        return tuple(a + sign * o for a, o in zip(source_value, offset))


def decide_orthogonality(comp: KlmComponent, side: str, dim: int = 1) -> OrthogonalityEvidence | None:
    """Evidence that every top cycle has zero effect on ``side``, or None.

    Holds exactly when the side rules have no displacement variation and the
    path graph weighted by uniform side displacements has zero cycle sums.
    """
    if comp.is_trivial:
        raise ValueError("orthogonality is defined for nontrivial components")
    span = cycle_generators(comp, dim)
    part = slice(0, dim) if side == "left" else slice(dim, 2 * dim)
    if any(any(g[part]) for g in span.generators):
        return None
    completion = span.left_completion if side == "left" else span.right_completion
    roots = {a for _, a in comp.side_roots()[side]}
    k = 0 if side == "left" else 1
    return OrthogonalityEvidence(side, {a: completion[a] for a in sorted(roots)},
                                 {x: pot[k] for x, pot in span.potential.items()})


def orthogonalize(state: RefinementState) -> bool:
    """Encode every orthogonal side with bounded end configurations.  Returns True on change."""
    kt = state.klm
    notes = []
    for i, comp in enumerate(kt.components):
        if comp.is_trivial:
            continue
        for side in SIDES:
            if any(a.side == side for a in comp.annotation):
                continue
            if SRC[side] not in comp.constraints or TGT[side] not in comp.constraints:
                continue
            evidence = decide_orthogonality(comp, side, kt.dim)
            if evidence is None:
                continue
            p, q = state.alignment.segments[i]
            chain = path(p, q)
            src_value = comp.constraints[SRC[side]]
            for node in chain:
                actual = tuple(node.left if side == "left" else node.right)
                if evidence.config_at(node.label, src_value) != actual:
                    raise CaptureError(f"component {i}: uniform {side} configurations are inconsistent")
            _collapse_side(state, chain, side)
            _encode_chain(state, chain, side)
            notes.append(f"{i}:{side}")
    if not notes:
        return False
    before = state.rank()
    _rebuild(state, state.alignment.segments, _constraints_by_segment(state))
    after = state.rank()
    if after > before:
        raise RankError(f"Ortho increased the rank: {before} -> {after}")
    state.trace.append(TraceEntry("Ortho", None, before, after, "encoded " + ",".join(notes)))
    return True


def clean(state: RefinementState) -> RefinementState:
    while True:
        constrain(state)
        if not orthogonalize(state):
            return state


# -- decompositions ---------------------------------------------------------------------

def _segment_preorder(p: Node, q: Node) -> Iterator[Node]:
    stack = [p]
    while stack:
        node = stack.pop()
        yield node
        if node is not q:
            stack.extend(reversed(node.children))


def _virtual_tree(p: Node, q: Node, marked: set[Node]):
    """LCA closure of ``marked`` inside the segment, with virtual parents."""
    order = {n: i for i, n in enumerate(_segment_preorder(p, q))}
    up = {}
    depth = {p: 0}
    for node in _segment_preorder(p, q):
        if node is q:
            continue
        for child in node.children:
            up[child] = node
            depth[child] = depth[node] + 1

    def lca(a, b):
        while depth[a] > depth[b]:
            a = up[a]
        while depth[b] > depth[a]:
            b = up[b]
        while a is not b:
            a, b = up[a], up[b]
        return a

    ordered = sorted(marked, key=order.__getitem__)
    closure = set(ordered)
    for a, b in zip(ordered, ordered[1:]):
        closure.add(lca(a, b))
    vparent, toward = {}, {}
    for v in closure:
        below, node = v, up.get(v)
        while node is not None and node not in closure:
            below, node = node, up.get(node)
        vparent[v] = node
        toward[v] = below
    return sorted(closure, key=order.__getitem__), vparent, toward


def bounded_rule_nodes(state: RefinementState, i: int, support: Support) -> set[Node]:
    p, q = state.alignment.segments[i]
    chain, left_roots, right_roots = segment_parts(p, q)
    marked = set()
    for node in chain[:-1]:
        if rule_var(i, "scc", node.rule()) not in support.unbounded:
            marked.add(node)
    for part, roots in (("L", left_roots), ("R", right_roots)):
        for r in roots:
            for node in preorder(r):
                if node.children and rule_var(i, part, node.rule()) not in support.unbounded:
                    marked.add(node)
    return marked


def decompose_algebraic(state: RefinementState, i: int, support: Support | None = None) -> RefinementState:
    support = support or homogeneous_support(char_system(state.klm))
    p, q = state.alignment.segments[i]
    marked = bounded_rule_nodes(state, i, support)
    if not marked:
        raise ValueError(f"component {i} has no bounded rule variable")
    closure, vparent, toward = _virtual_tree(p, q, marked | {q})
    pieces = []
    for v in closure:
        start = p if vparent[v] is None else toward[v]
        pieces.extend(scc_split(path(start, v)))
    _replace_component(state, i, pieces, "DecompA", f"{len(marked)} bounded rule nodes")
    return state


def decompose_combinatorial(state: RefinementState, i: int, side: str) -> RefinementState:
    comp = state.klm.components[i]
    if comp.is_trivial or any(a.side == side for a in comp.annotation):
        raise ValueError(f"component {i} cannot be encoded on the {side}")
    p, q = state.alignment.segments[i]
    chain = path(p, q)
    previous = _encode_chain(state, chain, side)
    pieces = scc_split(chain)
    for a, b in pieces:
        if a is b:
            a.label = previous[a]
        else:
            _collapse_side(state, path(a, b), side)
    _replace_component(state, i, pieces, "DecompC", f"encoded {side} configurations")
    return state


# -- perfectness ---------------------------------------------------------------------------

@dataclass
class ComponentReport:
    index: int
    bounded_rules: list[str] = field(default_factory=list)
    orthogonal: dict[str, bool] = field(default_factory=dict)
    pump: frozenset[str] = frozenset()
    forward_sides: frozenset[str] = frozenset()
    backward_sides: frozenset[str] = frozenset()
    forward: PumpingCycle | None = None
    backward: PumpingCycle | None = None
    inconclusive: bool = False
    unorthogonalized: list[str] = field(default_factory=list)

    @property
    def pumpable(self) -> bool:
        return (not self.forward_sides or self.forward is not None) and (
            not self.backward_sides or self.backward is not None)

    def failing_side(self) -> str:
        sides = self.forward_sides if self.forward_sides and self.forward is None else self.backward_sides
        return "left" if "left" in sides else "right"


@dataclass
class PerfectnessReport:
    fully_constrained: bool
    fully_orthogonalized: bool
    production_unbounded: bool
    exp_pumpable: bool
    inconclusive: bool
    components: dict[int, ComponentReport]
    unconstrained: list[str]
    support: Support = field(repr=False, default=None)

    @property
    def perfect(self) -> bool:
        return (self.fully_constrained and self.fully_orthogonalized and self.production_unbounded
                and self.exp_pumpable)

    def failure(self) -> str:
        if not self.fully_constrained:
            return "bounded configuration variables left free: " + ", ".join(self.unconstrained[:4])
        if not self.fully_orthogonalized:
            bad = [f"{i}:{s}" for i, c in self.components.items() for s in c.unorthogonalized]
            return "orthogonal sides not encoded: " + ", ".join(bad)
        if not self.production_unbounded:
            bad = [r for c in self.components.values() for r in c.bounded_rules]
            return "bounded rule variables: " + ", ".join(bad[:4])
        if not self.exp_pumpable:
            bad = [str(i) for i, c in self.components.items() if not c.pumpable]
            return "components without pumping cycles: " + ", ".join(bad)
        return ""

    def to_json(self):
        return {"perfect": self.perfect, "fully_constrained": self.fully_constrained,
                "fully_orthogonalized": self.fully_orthogonalized,
                "production_unbounded": self.production_unbounded, "exp_pumpable": self.exp_pumpable,
                "inconclusive": self.inconclusive, "failure": self.failure()}


def check_perfect(kt: KlmTree, bounds: PipelineBounds | None = None, support: Support | None = None,
                  pump_when_bounded: bool = True) -> PerfectnessReport:
    bounds = bounds or PipelineBounds()
    support = support or homogeneous_support(char_system(kt))
    free = support.unbounded
    unconstrained = []
    for i, comp in enumerate(kt.components):
        for which in CONFIG_NAMES:
            bounded = all(config_var(i, which, k) not in free for k in range(kt.dim))
            if bounded and which not in comp.constraints:
                unconstrained.append(config_var(i, which, 0).rsplit(".", 1)[0])
    reports: dict[int, ComponentReport] = {}
    for i, comp in enumerate(kt.components):
        if comp.is_trivial:
            continue
        rep = ComponentReport(i)
        for part, rules in (("scc", comp.scc_rules), ("L", comp.left_rules), ("R", comp.right_rules)):
            rep.bounded_rules += sorted(rule_var(i, part, r) for r in rules if rule_var(i, part, r) not in free)
        bounded = {w: all(config_var(i, w, k) not in free for k in range(kt.dim)) for w in CONFIG_NAMES}
        for side in SIDES:
            rep.orthogonal[side] = decide_orthogonality(comp, side, kt.dim) is not None
            encoded = any(a.side == side for a in comp.annotation)
            if rep.orthogonal[side] and bounded[SRC[side]] and bounded[TGT[side]] and not encoded:
                rep.unorthogonalized.append(side)
        rep.pump = frozenset(w for w in CONFIG_NAMES if bounded[w]
                             and not rep.orthogonal["left" if w.startswith("l") else "right"])
        rep.forward_sides = frozenset(s for s in SIDES if SRC[s] in rep.pump)
        rep.backward_sides = frozenset(s for s in SIDES if TGT[s] in rep.pump)
        if pump_when_bounded or not rep.bounded_rules:
            _search_pumping(comp, rep, bounds)
        reports[i] = rep
    return PerfectnessReport(
        fully_constrained=not unconstrained,
        fully_orthogonalized=all(not r.unorthogonalized for r in reports.values()),
        production_unbounded=all(not r.bounded_rules for r in reports.values()),
        exp_pumpable=all(r.pumpable for r in reports.values()),
        inconclusive=any(r.inconclusive for r in reports.values()),
        components=reports, unconstrained=unconstrained, support=support)


def _search_pumping(comp: KlmComponent, rep: ComponentReport, bounds: PipelineBounds) -> None:
    for direction, sides, names in (("forward", rep.forward_sides, SRC), ("backward", rep.backward_sides, TGT)):
        if not sides:
            continue
        anchor = []
        for side in SIDES:
            if side in sides:
                value = comp.constraints.get(names[side])
                if value is None:
                    break
                anchor.append(value[0])
            else:
                anchor.append(None)
        if len(anchor) < 2:
            continue
        try:
            cycle = find_pumping_cycle(comp, direction, tuple(anchor), sides, bounds.pump_length_bound,
                                       bounds.delta_cap, bounds.oracle)
        except OracleInconclusive:
            rep.inconclusive = True
            cycle = None
        if direction == "forward":
            rep.forward = cycle
        else:
            rep.backward = cycle


# -- pipeline ------------------------------------------------------------------------------

@dataclass
class PipelineResult:
    klm: KlmTree
    rank_trace: list
    report: PerfectnessReport
    trace: list
    state: RefinementState


def _depths(kt: KlmTree) -> list[int]:
    depth = [0] * len(kt.components)
    for i, kids in enumerate(kt.children):
        for kind, value in kids:
            if kind == "c":
                depth[value] = depth[i] + 1
    return depth


def refinement_pipeline(grammar: Grammar, s, t, witness: DerivationTree,
                        bounds: PipelineBounds | None = None, check: bool = True) -> PipelineResult:
    bounds = bounds or PipelineBounds()
    state = initial_state(grammar, s, t, witness)
    clean(state)
    _verify_step(state, check)
    state.rank_trace = [state.rank()]
    for _ in range(bounds.max_iterations):
        support = homogeneous_support(char_system(state.klm))
        report = check_perfect(state.klm, bounds, support, pump_when_bounded=False)
        if report.perfect:
            return PipelineResult(state.klm, state.rank_trace, report, state.trace, state)
        depth = _depths(state.klm)
        order = sorted(report.components, key=lambda i: (-depth[i], i))
        with_bounded = [i for i in order if report.components[i].bounded_rules]
        unpumpable = [i for i in order if not report.components[i].pumpable]
        try:
            if with_bounded:
                decompose_algebraic(state, with_bounded[0], support)
            elif unpumpable:
                rep = report.components[unpumpable[0]]
                decompose_combinatorial(state, unpumpable[0], rep.failing_side())
                if rep.inconclusive:
                    state.trace[-1] = TraceEntry(**{**state.trace[-1].__dict__,
                                                   "note": state.trace[-1].note + " (pumping inconclusive)"})
            else:
                raise PipelineAborted("no refinement applies: " + report.failure(), state)
            clean(state)
        except (CaptureError, RankError) as exc:
            raise PipelineAborted(str(exc), state) from exc
        _verify_step(state, check)
    raise PipelineAborted("iteration limit reached", state)


def _verify_step(state: RefinementState, check: bool) -> None:
    if not check:
        return
    problems = check_state(state)
    if problems:
        raise PipelineAborted("; ".join(problems), state)


# -- reconstruction -----------------------------------------------------------------------

Solver = Callable[[str, Vector, Vector], "DerivationTree | None"]


def oracle_solver(grammar: Grammar, bounds: OracleBounds | None = None) -> Solver:
    """Certificate subproblems Reach(G_A, start, end) answered by the bounded oracle."""
    cache: dict = {}

    def solve(symbol: str, start: Vector, end: Vector):
        key = (symbol, start, end)
        if key not in cache:
            try:
                sub = induced_sub_gvas(grammar, symbol)
            except EmptyGrammarError:
                cache[key] = None
                return None
            verdict = bounded_reach(sub, start, end, bounds)
            if verdict.kind == "Unknown":
                raise OracleInconclusive(f"certificate {symbol} {start}->{end}: {verdict.exhausted_bound}")
            cache[key] = verdict.witness if verdict.kind == "Yes" else None
        return cache[key]

    return solve


def _namespaced(comp: KlmComponent) -> dict[tuple[str, Rule], Rule]:
    table = {}
    for rule in comp.scc_rules:
        pos, _ = comp.spine_child(rule)
        side = "L" if pos == 1 else "R"
        kids = [(side, c) for c in rule.children]
        kids[pos] = ("S", rule.children[pos])
        table[("scc", rule)] = Rule(("S", rule.head), tuple(kids), None)
    for part, rules in (("L", comp.left_rules), ("R", comp.right_rules)):
        for rule in rules:
            if rule.is_leaf:
                table[(part, rule)] = Rule((part, rule.head), None, rule.vector)
            else:
                table[(part, rule)] = Rule((part, rule.head), tuple((part, c) for c in rule.children), None)
    return table


def _counts_from_solution(comp: KlmComponent, i: int, values: dict, scale: int = 1) -> Counter:
    names = _namespaced(comp)
    counts = Counter()
    for (part, rule), ns in names.items():
        counts[ns] = scale * values.get(rule_var(i, part, rule), 0)
    return counts


def _counts_from_segment(comp: KlmComponent, tree: DerivationTree | None) -> Counter:
    counts = Counter()
    if tree is None:
        return counts
    names = _namespaced(comp)
    chain, left_roots, right_roots = segment_parts(tree.root, tree.hole())
    for node in chain[:-1]:
        counts[names[("scc", node.rule())]] += 1
    for part, roots in (("L", left_roots), ("R", right_roots)):
        for r in roots:
            for node in preorder(r):
                if node.children:
                    counts[names[(part, node.rule())]] += 1
    return counts


def _measure(tree: DerivationTree | None) -> int:
    """|θ|·‖θ‖ with the norm taken to be at least one."""
    if tree is None:
        return 0
    nodes = list(preorder(tree.root))
    norm = max((abs(x) for n in nodes if n.is_terminal for x in n.label), default=0)
    return len(nodes) * max(norm, 1)


def _size_of_counts(counts: Counter) -> int:
    return 1 + sum(c * (1 if r.is_leaf else 2) for r, c in counts.items())


def _label(symbol):
    return symbol[1]


@dataclass
class Reconstruction:
    tree: DerivationTree
    view: DerivationTree
    segments: list[tuple[Node, Node]]
    constants: dict[str, int]


class _Chain:
    """Concatenate segments in place, copying each piece once."""

    def __init__(self, root_label):
        self.root = Node(root_label)
        self.hole = self.root
        self.size = 1

    def append(self, piece: DerivationTree, budget: int) -> None:
        piece_hole = piece.hole()
        if piece_hole is piece.root:
            return
        twin, mapping = copy_tree(piece.root, with_configs=False)
        self.size += sum(1 for _ in preorder(twin)) - 1
        if self.size > budget:
            raise NodeBudgetExceeded(budget)
        if twin.label != self.hole.label:
            raise TreeError(f"cannot append {twin.label} below {self.hole.label}")
        self.hole.children = twin.children
        self.hole = mapping[piece_hole]


def reconstruct_tree(kt: KlmTree, grammar: Grammar, bounds: PipelineBounds | None = None,
                     solver: Solver | None = None, report: PerfectnessReport | None = None,
                     minimize: bool = False) -> Reconstruction:
    """Build a complete derivation tree from a perfect KLM tree alone.

    The repetition constants follow the certificate construction exactly.
    ``minimize`` (not part of that construction) first tries smaller
    repetition counts and keeps the first result that validates.
    """
    bounds = bounds or PipelineBounds()
    solver = solver or oracle_solver(grammar, bounds.oracle)
    system = char_system(kt)
    sol_min = minimal_solution(system)
    if sol_min is None:
        raise InfeasibleSystem("characteristic system has no solution")
    report = report or check_perfect(kt, bounds)
    if not report.perfect:
        raise NotPerfect(report.failure())
    hom = report.support.witness
    budget = bounds.node_budget
    nontrivial = [i for i, c in enumerate(kt.components) if not c.is_trivial]
    gamma, theta1, theta2, theta_counts, hom_counts = {}, {}, {}, {}, {}
    for i in nontrivial:
        comp = kt.components[i]
        counts = _counts_from_solution(comp, i, sol_min)
        if _size_of_counts(counts) > budget:
            raise NodeBudgetExceeded(budget)
        gamma[i] = realize_parikh(counts, ("S", comp.source), ("S", comp.target), _label, budget)
        rep = report.components[i]
        theta1[i] = rep.forward.cycle if rep.forward is not None else None
        theta2[i] = rep.backward.cycle if rep.backward is not None else None
        theta_counts[i] = _counts_from_segment(comp, theta1[i]) + _counts_from_segment(comp, theta2[i])
        hom_counts[i] = _counts_from_solution(comp, i, hom)
    b1 = max((_measure(theta1[i]) + _measure(theta2[i]) for i in nontrivial), default=0) + 1
    b2 = max((_measure(gamma[i]) for i in nontrivial), default=0) + 1
    b3 = b1 * (b2 + 1)
    theta3 = {}
    for i in nontrivial:
        comp = kt.components[i]
        res = Counter({r: b3 * c for r, c in hom_counts[i].items()})
        res.subtract(theta_counts[i])
        if any(c < 0 for c in res.values()):
            raise UnrealizableParikh(f"component {i}: residual rule counts are negative")
        if _size_of_counts(res) > budget:
            raise NodeBudgetExceeded(budget)
        theta3[i] = realize_parikh(res, ("S", comp.target), ("S", comp.target), _label, budget)
    b4 = max((_measure(theta3[i]) for i in nontrivial), default=0)
    b5 = b2 + b4
    constants = {"b1": b1, "b2": b2, "b3": b3, "b4": b4, "b5": b5, "b": b3 * b5}
    if minimize:
        found = _minimized(kt, grammar, sol_min, hom_counts, theta_counts, gamma, theta1, theta2,
                           b3, b5, solver, budget)
        if found is not None:
            return found
    return _assemble(kt, grammar, gamma, theta1, theta2, theta3, b5, solver, budget, constants)


def _minimized(kt, grammar, sol_min, hom_counts, theta_counts, gamma, theta1, theta2, b3, b5, solver, budget):
    """Try small repetition counts c3 ≤ b3, c5 ≤ b5 and keep the first valid tree."""
    floor = 1
    for i in hom_counts:
        for r, c in theta_counts[i].items():
            if hom_counts[i][r] > 0:
                floor = max(floor, -(-(c + 1) // hom_counts[i][r]))
    c3 = floor
    while c3 <= b3:
        c5 = 1
        while c5 <= b5:
            try:
                theta3 = {}
                for i in hom_counts:
                    comp = kt.components[i]
                    res = Counter({r: c3 * c for r, c in hom_counts[i].items()})
                    res.subtract(theta_counts[i])
                    theta3[i] = realize_parikh(res, ("S", comp.target), ("S", comp.target), _label, budget)
                result = _assemble(kt, grammar, gamma, theta1, theta2, theta3, c5, solver, budget,
                                   {"c3": c3, "c5": c5, "minimized": 1})
            except (NodeBudgetExceeded, UnrealizableParikh):
                return None
            if not validate_reconstruction(kt, grammar, result):
                return result
            c5 *= 2
        c3 *= 2
    return None


def _assemble(kt, grammar, gamma, theta1, theta2, theta3, reps, solver, budget, constants) -> Reconstruction:
    roots, holes = [], []
    size = 0
    for i, comp in enumerate(kt.components):
        chain = _Chain(comp.source)
        if not comp.is_trivial:
            for piece, copies in ((theta1[i], reps), (gamma[i], 1), (theta3[i], reps), (theta2[i], reps)):
                if piece is None:
                    continue
                for _ in range(copies):
                    chain.append(piece, budget - size)
        size += chain.size
        if size > budget:
            raise NodeBudgetExceeded(budget)
        roots.append(chain.root)
        holes.append(chain.hole)
    for i, kids in enumerate(kt.children):
        if kids[0][0] == "u":
            holes[i].children = [Node(tuple(kids[0][1]))]
        else:
            holes[i].children = [roots[j] for _, j in kids]
    view = DerivationTree(roots[0])
    tree = _expand(view.root, kt.symbols, solver, budget)
    root_cons = kt.components[0].constraints
    tree = propagate_configurations(tree, Anchor(root=(root_cons["l_src"], root_cons["r_src"])), kt.dim)
    try:
        view = propagate_configurations(view, Anchor(root=(root_cons["l_src"], root_cons["r_src"])), kt.dim,
                                        in_place=True)
    except InconsistentAnchor:
        pass
    return Reconstruction(tree, view, list(zip(roots, holes)), constants)


def _expand(view_root: Node, symbols: dict, solver: Solver, budget: int) -> DerivationTree:
    """Copy the view with certificate leaves solved and labels decoded."""
    root = Node(None)
    stack = [(view_root, root)]
    size = 0
    while stack:
        src, dst = stack.pop()
        size += 1
        if size > budget:
            raise NodeBudgetExceeded(budget)
        info = symbols.get(src.label) if not src.is_terminal else None
        if info is not None and info.kind == "certificate":
            base = base_symbol(symbols, info.base)
            solved = solver(base, info.start, info.end)
            if solved is None:
                raise TreeError(f"certificate {src.label} has no derivation")
            sub, _ = copy_tree(solved.root, with_configs=False)
            dst.label, dst.children = sub.label, sub.children
            size += sum(1 for _ in preorder(sub)) - 1
            continue
        dst.label = src.label if src.is_terminal else base_symbol(symbols, src.label)
        for child in src.children:
            twin = Node(None)
            dst.children.append(twin)
            stack.append((child, twin))
    return DerivationTree(root)


def validate_reconstruction(kt: KlmTree, grammar: Grammar, result: Reconstruction) -> list[str]:
    """Independent checks of a reconstructed tree; returns the problems found."""
    problems = []
    tree = result.tree
    root_cons = kt.components[0].constraints
    try:
        tree.check_grammar(grammar)
    except TreeError as exc:
        problems.append(str(exc))
    if not tree.is_complete:
        problems.append("tree is not complete")
    if tree.root.label != grammar.start:
        problems.append("tree does not start at the start symbol")
    try:
        fresh = propagate_configurations(tree, Anchor(root=(root_cons["l_src"], root_cons["r_src"])), kt.dim)
        if not is_nonnegative(fresh):
            problems.append("tree is not nonnegative")
    except (InconsistentAnchor, TreeError) as exc:
        problems.append(f"root configuration: {exc}")
        return problems
    try:
        view = propagate_configurations(result.view, Anchor(root=(root_cons["l_src"], root_cons["r_src"])),
                                        kt.dim)
    except (InconsistentAnchor, TreeError) as exc:
        problems.append(f"working view: {exc}")
        return problems
    mapping = dict(zip(preorder(result.view.root), preorder(view.root)))
    for i, (comp, (p, q)) in enumerate(zip(kt.components, result.segments)):
        if not check_capture(comp, mapping[p], mapping[q], kt.symbols):
            problems.append(f"component {i} does not capture its reconstructed segment")
    if not all(node_consistent(n, kt.symbols) for n in preorder(view.root)):
        problems.append("annotated labels disagree with reconstructed configurations")
    return problems


# -- certificate checking -----------------------------------------------------------------

@dataclass(frozen=True)
class Accept:
    tree: DerivationTree
    kind = "Accept"
    reason = ""


@dataclass(frozen=True)
class Reject:
    reason: str
    kind = "Reject"


@dataclass(frozen=True)
class Undetermined:
    reason: str
    kind = "Unknown"


def well_formedness(kt: KlmTree, grammar: Grammar, s, t) -> list[str]:
    problems = []
    symbols = kt.symbols
    known_rules = set(grammar.rules)
    if kt.dim != grammar.dim:
        return ["dimension mismatch"]
    if not kt.components:
        return ["empty KLM tree"]
    root = kt.components[0]
    if base_symbol(symbols, root.source) != grammar.start:
        problems.append("root component does not start at the start symbol")
    if root.constraints.get("l_src") != tuple(s) or root.constraints.get("r_src") != tuple(t):
        problems.append("root constraint does not match the instance")
    for name, info in symbols.items():
        if base_symbol(symbols, name) not in grammar.nonterminals:
            problems.append(f"symbol {name} has no grammar base")
        values = info.value if info.kind == "encoded" else info.start + info.end
        if any(x < 0 for x in values) or info.side not in SIDES:
            problems.append(f"symbol {name} is malformed")
    for i, comp in enumerate(kt.components):
        rules = [*comp.scc_rules, *comp.left_rules, *comp.right_rules, comp.exit_rule]
        for rule in rules:
            info = symbols.get(rule.head)
            if info is not None and info.kind == "certificate":
                if not rule.is_leaf or rule.vector != info.displacement:
                    problems.append(f"component {i}: certificate rule {rule} is malformed")
            elif base_rule(symbols, rule) not in known_rules:
                problems.append(f"component {i}: rule {rule} is not in the grammar")
        for key, value in comp.constraints.items():
            if key not in CONFIG_NAMES or len(value) != kt.dim or min(value) < 0:
                problems.append(f"component {i}: bad constraint {key}")
        if comp.is_trivial:
            if comp.left_rules or comp.right_rules or comp.source != comp.target \
                    or comp.exit_rule.head != comp.source:
                problems.append(f"component {i}: malformed trivial component")
            continue
        if comp.exit_rule.head != comp.target:
            problems.append(f"component {i}: exit rule does not leave the target")
        try:
            graph = nx.DiGraph()
            graph.add_nodes_from(comp.scc_symbols())
            for rule in comp.scc_rules:
                graph.add_edge(rule.head, comp.spine_child(rule)[1])
        except CaptureError as exc:
            problems.append(f"component {i}: {exc}")
            continue
        if not nx.is_strongly_connected(graph):
            problems.append(f"component {i}: path rules are not strongly connected")
    return problems


def certificate_symbols(kt: KlmTree) -> list[str]:
    used = set()
    for comp in kt.components:
        for rule in [*comp.scc_rules, *comp.left_rules, *comp.right_rules, comp.exit_rule]:
            for sym in (rule.head, *(rule.children or ())):
                info = kt.symbols.get(sym)
                if info is not None and info.kind == "certificate":
                    used.add(sym)
    return sorted(used)


def verify_certificate(kt: KlmTree, grammar: Grammar, s, t, bounds: PipelineBounds | None = None,
                       solver: Solver | None = None):
    """Accept(tree), Reject(reason) or Undetermined(reason) for a certificate."""
    bounds = bounds or PipelineBounds()
    solver = solver or oracle_solver(grammar, bounds.oracle)
    try:
        problems = well_formedness(kt, grammar, s, t)
    except (GrammarError, CaptureError) as exc:
        problems = [str(exc)]
    if problems:
        return Reject("malformed: " + problems[0])
    try:
        system = char_system(kt)
    except CaptureError as exc:
        return Reject(f"malformed: {exc}")
    if minimal_solution(system) is None:
        return Reject("characteristic system infeasible")
    report = check_perfect(kt, bounds)
    if not report.perfect:
        if report.inconclusive and report.fully_constrained and report.fully_orthogonalized \
                and report.production_unbounded:
            return Undetermined("pumping search inconclusive")
        return Reject("not perfect: " + report.failure())
    for name in certificate_symbols(kt):
        info = kt.symbols[name]
        try:
            if solver(base_symbol(kt.symbols, info.base), info.start, info.end) is None:
                return Reject(f"certificate rule {name} has no derivation")
        except OracleInconclusive as exc:
            return Undetermined(str(exc))
    try:
        result = reconstruct_tree(kt, grammar, bounds, solver, report)
    except NodeBudgetExceeded as exc:
        return Undetermined(str(exc))
    except (UnrealizableParikh, OracleInconclusive, TreeError) as exc:
        return Undetermined(f"reconstruction failed: {exc}")
    problems = validate_reconstruction(kt, grammar, result)
    if problems:
        return Undetermined("reconstruction did not validate: " + problems[0])
    return Accept(result.tree)
