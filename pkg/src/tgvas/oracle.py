"""Bounded brute-force reachability and coverability, the coverability upper
bound δ, degenerate-tree bounds, relation graphs and pumping-cycle search.

The searches enumerate leftmost derivations breadth first.  A state is the
stack of pending symbols (leftmost on top) together with the counter.  A
negative answer is only given when the bounded state space closed without
touching any bound.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

from .derivation import (Anchor, DerivationTree, Node, TreeError, copy_tree, is_nonnegative,
                         mirror_tree, path, preorder, propagate_configurations, tree_from_rule_sequence)
from .grammar import EmptyGrammarError, Grammar, Rule, Vector, grammar_from_rules, make_proper, mirror
from .klm import KlmComponent, fixed_completions

OMEGA = math.inf


# -- extended naturals ----------------------------------------------------------

@dataclass(frozen=True, order=False)
class ExtNat:
    """A natural number or one of ±ω.  ``kind`` is -1, 0 or +1."""

    kind: int
    value: int = 0

    @staticmethod
    def fin(n: int) -> "ExtNat":
        if n < 0:
            raise ValueError("finite values are natural numbers")
        return ExtNat(0, int(n))

    @property
    def is_finite(self) -> bool:
        return self.kind == 0

    def _key(self):
        return (self.kind, self.value if self.kind == 0 else 0)

    def __lt__(self, other):
        return self._key() < other._key()

    def __le__(self, other):
        return self._key() <= other._key()

    def __gt__(self, other):
        return self._key() > other._key()

    def __ge__(self, other):
        return self._key() >= other._key()

    def __add__(self, other):
        if isinstance(other, int):
            other = ExtNat(0, other)
        if self.kind and other.kind and self.kind != other.kind:
            raise ValueError("-ω + +ω is undefined")
        if self.kind:
            return self
        if other.kind:
            return other
        return ExtNat(0, self.value + other.value)

    def __sub__(self, other):
        if isinstance(other, int):
            return self + (-other)
        return self + ExtNat(-other.kind, -other.value if other.kind == 0 else 0)

    def __str__(self):
        if self.kind < 0:
            return "-ω"
        if self.kind > 0:
            return "+ω"
        return str(self.value)

    def to_json(self):
        return self.value if self.kind == 0 else str(self)


NEG_OMEGA = ExtNat(-1)
POS_OMEGA = ExtNat(1)


# -- verdicts -------------------------------------------------------------------

@dataclass(frozen=True)
class OracleBounds:
    max_counter: int = 4096
    max_stack: int = 256
    max_steps: int = 1_000_000

    def __post_init__(self):
        if min(self.max_counter, self.max_stack, self.max_steps) <= 0:
            raise ValueError("bounds must be positive")


@dataclass(frozen=True)
class Yes:
    witness: DerivationTree
    kind = "Yes"


@dataclass(frozen=True)
class No:
    kind = "No"


@dataclass(frozen=True)
class Unknown:
    exhausted_bound: str
    kind = "Unknown"


OracleVerdict = Yes | No | Unknown


class OracleInconclusive(RuntimeError):
    """A bounded sub-query could not be decided."""


# -- displacement intervals ------------------------------------------------------

@lru_cache(maxsize=512)
def displacement_intervals(grammar: Grammar) -> dict[str, tuple[tuple[float, ...], tuple[float, ...]]]:
    """Per nonterminal, the least and greatest displacement of any complete tree."""
    dim = grammar.dim
    low = {x: [math.inf] * dim for x in grammar.nonterminals}
    high = {x: [-math.inf] * dim for x in grammar.nonterminals}

    def relax(table, better, final_round=False):
        changed = set()
        for rule in grammar.rules:
            for k in range(dim):
                if rule.is_leaf:
                    v = rule.vector[k]
                else:
                    v = table[rule.left][k] + table[rule.right][k]
                if better(v, table[rule.head][k]):
                    table[rule.head][k] = v
                    changed.add((rule.head, k))
        return changed

    n = len(grammar.nonterminals) + 1
    for table, better, inf in ((low, lambda a, b: a < b, -math.inf), (high, lambda a, b: a > b, math.inf)):
        for _ in range(n):
            if not relax(table, better):
                break
        # anything still improving lies on a cycle with unbounded gain
        for _ in range(n):
            moved = relax(table, better)
            if not moved:
                break
            for head, k in moved:
                table[head][k] = inf
    return {x: (tuple(low[x]), tuple(high[x])) for x in grammar.nonterminals}


# -- core search --------------------------------------------------------------------

@dataclass
class _SearchResult:
    goal: tuple | None
    parents: dict
    closed: bool
    exhausted: str | None
    finals: dict = field(default_factory=dict)


def _bfs(grammar: Grammar, s: Vector, bounds: OracleBounds, *, target: Vector | None,
         exact: bool, collect: bool = False, stop_at: int | None = None) -> _SearchResult:
    """Breadth-first search over leftmost derivations.

    With ``exact`` the final counter must equal ``target``; otherwise it must
    dominate it.  With ``collect`` every final counter is recorded and the
    search only stops early once a final value reaches ``stop_at``.
    """
    dim = grammar.dim
    rules_by_head = grammar.rules_by_head
    intervals = displacement_intervals(grammar)
    start = ((grammar.start,), tuple(s))
    parents: dict = {start: None}
    seen_cover: dict[tuple, list[Vector]] = {}
    queue = deque([start])
    steps = 0
    bound_hit: str | None = None
    finals: dict = {}

    def hopeless(stack, counter) -> bool:
        if target is None:
            return False
        for k in range(dim):
            hi = counter[k] + sum(intervals[x][1][k] for x in stack)
            if hi < target[k]:
                return True
            if exact:
                lo = counter[k] + sum(intervals[x][0][k] for x in stack)
                if lo > target[k]:
                    return True
        return False

    def dominated(stack, counter) -> bool:
        if exact:
            return False
        known = seen_cover.setdefault(stack, [])
        for other in known:
            if all(a <= b for a, b in zip(counter, other)):
                return True
        known[:] = [o for o in known if not all(a <= b for a, b in zip(o, counter))]
        known.append(counter)
        return False

    if not exact:
        dominated(start[0], start[1])
    while queue:
        state = queue.popleft()
        steps += 1
        if steps > bounds.max_steps:
            return _SearchResult(None, parents, False, "max_steps", finals)
        stack, counter = state
        top, rest = stack[-1], stack[:-1]
        for rule in rules_by_head[top]:
            if rule.is_leaf:
                new_counter = tuple(c + u for c, u in zip(counter, rule.vector))
                if min(new_counter) < 0:
                    continue
                new_stack = rest
            else:
                new_counter = counter
                new_stack = rest + (rule.right, rule.left)
            new_state = (new_stack, new_counter)
            if new_state in parents:
                continue
            if not new_stack:
                if collect:
                    parents[new_state] = (state, rule)
                    finals[new_counter] = new_state
                    if stop_at is not None and new_counter[0] >= stop_at:
                        return _SearchResult(new_state, parents, False, None, finals)
                    continue
                if (new_counter == target) if exact else all(a >= b for a, b in zip(new_counter, target)):
                    parents[new_state] = (state, rule)
                    return _SearchResult(new_state, parents, False, None, finals)
                continue
            if hopeless(new_stack, new_counter):
                continue
            if max(new_counter) > bounds.max_counter:
                bound_hit = bound_hit or "max_counter"
                continue
            if len(new_stack) > bounds.max_stack:
                bound_hit = bound_hit or "max_stack"
                continue
            if dominated(new_stack, new_counter):
                continue
            parents[new_state] = (state, rule)
            queue.append(new_state)
    return _SearchResult(None, parents, bound_hit is None, bound_hit, finals)


def _witness(grammar: Grammar, parents: dict, goal) -> DerivationTree:
    rules = []
    state = goal
    while parents[state] is not None:
        state, rule = parents[state]
        rules.append(rule)
    rules.reverse()
    return tree_from_rule_sequence(grammar.start, rules)


def _check_instance(grammar: Grammar, s, t) -> tuple[Vector, Vector]:
    s, t = tuple(int(x) for x in s), tuple(int(x) for x in t)
    if len(s) != grammar.dim or len(t) != grammar.dim:
        raise ValueError("vector dimension does not match the grammar")
    if min(s) < 0 or min(t) < 0:
        raise ValueError("configurations must be nonnegative")
    return s, t


def _decide(grammar, s, t, bounds, exact) -> OracleVerdict:
    s, t = _check_instance(grammar, s, t)
    try:
        grammar = make_proper(grammar)
    except EmptyGrammarError:
        return No()
    result = _bfs(grammar, s, bounds or OracleBounds(), target=t, exact=exact)
    if result.goal is not None:
        return Yes(_witness(grammar, result.parents, result.goal))
    if result.closed:
        return No()
    return Unknown(result.exhausted)


def bounded_reach(grammar: Grammar, s: Iterable[int], t: Iterable[int],
                  bounds: OracleBounds | None = None) -> OracleVerdict:
    return _decide(grammar, s, t, bounds, exact=True)


def bounded_cover(grammar: Grammar, s: Iterable[int], t: Iterable[int],
                  bounds: OracleBounds | None = None) -> OracleVerdict:
    return _decide(grammar, s, t, bounds, exact=False)


@dataclass(frozen=True)
class ReachableSet:
    targets: frozenset
    closed: bool


def reachable_targets(grammar: Grammar, s: Iterable[int], bounds: OracleBounds | None = None
                      ) -> ReachableSet:
    """Every final counter reachable from ``s`` within the bounds."""
    s = tuple(s)
    try:
        grammar = make_proper(grammar)
    except EmptyGrammarError:
        return ReachableSet(frozenset(), True)
    bounds = bounds or OracleBounds()
    # exact search keeps all counters apart, so every final value is seen
    result = _bfs(grammar, s, bounds, target=None, exact=True, collect=True)
    return ReachableSet(frozenset(result.finals), result.closed)


# -- coverability upper bound --------------------------------------------------------

@dataclass(frozen=True)
class DeltaValue:
    """δ(s) truncated at a cap.  ``witness`` reaches ``value`` (or more)."""

    value: ExtNat
    at_least_cap: bool = False
    witness: DerivationTree | None = field(default=None, compare=False)


class DeltaUnknown(OracleInconclusive):
    pass


@lru_cache(maxsize=8192)
def _delta_search(grammar: Grammar, s: int, cap: int, bounds: OracleBounds):
    result = _bfs(grammar, (s,), bounds, target=None, exact=False, collect=True, stop_at=cap)
    if not result.finals:
        if result.closed:
            return None, None, False
        return "unknown", result.exhausted, False
    best = max(result.finals)
    witness = _witness(grammar, result.parents, result.finals[best])
    if best[0] >= cap:
        return cap, witness, True
    if not result.closed:
        return "unknown", result.exhausted, False
    return best[0], witness, False


class _BestExits:
    """Best exit counters per symbol and entry in [0, top], bracketed from both sides.

    ``lower`` clamps every counter at ``top``; clamping only hurts, and every
    lower value is reached by a real tree kept in ``history``.  ``upper`` sends
    any run that passes ``top`` to infinity (encoded as top + 1).  Both are
    least fixpoints of f_X = max(a + u, f_Z ∘ f_Y), exact because a larger
    counter never removes a continuation.
    """

    def __init__(self, grammar: Grammar, top: int):
        self.grammar, self.top = grammar, top
        entries = np.arange(top + 1, dtype=np.int64)
        self.lower = self._fixpoint(entries, clamp=True)
        self.upper = self._fixpoint(entries, clamp=False)

    def _fixpoint(self, entries, clamp: bool):
        top, rules = self.top, sorted(self.grammar.rules, key=Rule.sort_key)
        best = {x: np.full(self.top + 1, -1, dtype=np.int64) for x in self.grammar.nonterminals}
        history: dict[str, list] = {x: [] for x in best}
        over = top + 1
        changed = True
        while changed:
            changed = False
            for rule in rules:
                if rule.is_leaf:
                    cand = entries + rule.vector[0]
                    cand = np.where(cand < 0, -1, np.minimum(cand, top if clamp else over))
                    mids = None
                else:
                    mids = best[rule.left].copy()
                    inner = best[rule.right]
                    looked = inner[np.clip(mids, 0, top)]
                    cand = np.where(mids < 0, -1, np.where(mids == over, over, looked))
                better = cand > best[rule.head]
                if better.any():
                    idx = np.nonzero(better)[0]
                    best[rule.head][idx] = cand[idx]
                    if clamp:
                        history[rule.head].append((rule, idx, cand[idx], None if mids is None else mids[idx]))
                    changed = True
        if clamp:
            self.history = history
        return best

    def witness(self, symbol: str, entry: int, need: int) -> DerivationTree:
        """A tree from ``entry`` whose clamped run ends at ``need`` or more, so its real run does too."""
        root = Node(symbol)
        tasks = [(root, symbol, entry, need)]
        while tasks:
            node, sym, a, want = tasks.pop()
            for rule, idx, values, mids in self.history[sym]:
                k = np.searchsorted(idx, a)
                if k < len(idx) and idx[k] == a and values[k] >= want:
                    break
            else:
                raise AssertionError(f"no recorded derivation of {sym} from {a} reaching {want}")
            if rule.is_leaf:
                node.children = [Node(rule.vector)]
                continue
            left, right = Node(rule.left), Node(rule.right)
            node.children = [left, right]
            mid = int(mids[k])
            tasks.append((right, rule.right, mid, int(values[k])))
            tasks.append((left, rule.left, a, mid))
        return DerivationTree(root)


@lru_cache(maxsize=512)
def _best_exits(grammar: Grammar, top: int) -> _BestExits:
    return _BestExits(grammar, top)


def _delta_by_fixpoint(grammar: Grammar, s: int, cap: int, top: int):
    """(value, witness, capped), or None when the two brackets disagree below the cap."""
    if s > top:
        return None
    table = _best_exits(grammar, top)
    lo = int(table.lower[grammar.start][s])
    hi = int(table.upper[grammar.start][s])
    if min(lo, cap) != min(hi, cap):
        return None
    if lo < 0:
        return None, None, False
    value = min(lo, cap)
    return value, table.witness(grammar.start, s, value), lo >= cap


def delta_truncated(side_grammar: Grammar, s: ExtNat | int, cap: int = 4096,
                    bounds: OracleBounds | None = None) -> DeltaValue:
    """Largest t ≤ cap such that a nonnegative complete tree runs from s to t or more.

    Right-side callers pass the mirrored grammar.  The exit fixpoint settles
    most queries; the bounded search handles the rest.  Raises DeltaUnknown
    when neither could settle the value.
    """
    if isinstance(s, int):
        s = ExtNat.fin(s)
    if not s.is_finite:
        return DeltaValue(s)
    if side_grammar.dim != 1:
        raise ValueError("δ is defined for one-dimensional grammars")
    try:
        grammar = make_proper(side_grammar)
    except EmptyGrammarError:
        return DeltaValue(NEG_OMEGA)
    bounds = bounds or OracleBounds(max_counter=max(cap, 1) * 2 + 64)
    settled = _delta_by_fixpoint(grammar, s.value, cap, bounds.max_counter)
    if settled is None:
        settled = _delta_search(grammar, s.value, cap, bounds)
    value, extra, capped = settled
    if value is None:
        return DeltaValue(NEG_OMEGA)
    if value == "unknown":
        raise DeltaUnknown(f"δ({s.value}) inconclusive: {extra}")
    return DeltaValue(ExtNat.fin(value), capped, extra)


# -- degenerate bound ----------------------------------------------------------------

def _acyclic_profile(rules: Iterable[Rule]) -> dict[str, tuple[int, int, int, int]]:
    """Per symbol: (max total, min total, max prefix, min prefix) over acyclic complete trees."""
    by_head: dict[str, list[Rule]] = {}
    for rule in rules:
        by_head.setdefault(rule.head, []).append(rule)
    memo: dict = {}

    def visit(symbol, banned: frozenset):
        key = (symbol, banned)
        if key in memo:
            return memo[key]
        best = None
        inner = banned | {symbol}
        for rule in by_head.get(symbol, ()):
            if rule.is_leaf:
                u = rule.vector[0]
                cand = (u, u, u, u)
            else:
                if rule.left in inner or rule.right in inner:
                    continue
                a, b = visit(rule.left, inner), visit(rule.right, inner)
                if a is None or b is None:
                    continue
                cand = (a[0] + b[0], a[1] + b[1], max(a[2], a[0] + b[2]), min(a[3], a[1] + b[3]))
            if best is None:
                best = cand
            else:
                best = (max(best[0], cand[0]), min(best[1], cand[1]),
                        max(best[2], cand[2]), min(best[3], cand[3]))
        memo[key] = best
        return best

    return {x: p for x in by_head if (p := visit(x, frozenset())) is not None}


def side_degenerate_bound(rules: Iterable[Rule]) -> int:
    profile = _acyclic_profile(list(rules))
    return max((max(abs(p[2]), abs(p[3]), abs(p[0]), abs(p[1])) for p in profile.values()), default=0)


def _mirror_rules(rules: Iterable[Rule]) -> list[Rule]:
    out = []
    for rule in rules:
        if rule.is_leaf:
            out.append(Rule.leaf(rule.head, (-x for x in rule.vector)))
        else:
            out.append(Rule.binary(rule.head, rule.right, rule.left))
    return out


def degenerate_bound(comp: KlmComponent) -> int:
    """Δ: the largest absolute partial sum along any acyclic complete side tree.

    Right-side trees are measured on the mirror, matching δ for that side.
    """
    left = side_degenerate_bound(comp.left_rules)
    right = side_degenerate_bound(_mirror_rules(comp.right_rules))
    return max(left, right)


# -- relation graphs -------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeLabel:
    """Identity, or δ of a side symbol under a (possibly mirrored) side grammar."""

    symbol: str | None = None
    grammar: Grammar | None = field(default=None, compare=False)
    mirrored: bool = False

    @property
    def is_identity(self) -> bool:
        return self.symbol is None

    def apply(self, value: float, cap: int, bounds: OracleBounds | None = None) -> float:
        if self.is_identity or value == OMEGA:
            return value
        d = delta_truncated(self.grammar, int(value), cap, bounds)
        if d.value.kind < 0:
            return -OMEGA
        return d.value.value

    def __str__(self):
        if self.is_identity:
            return "Id"
        return f"δ{'Mir' if self.mirrored else ''}[{self.symbol}]"


@dataclass(frozen=True)
class RelationEdge:
    tail: str
    head: str
    rule: Rule
    left: EdgeLabel
    right: EdgeLabel


@dataclass(frozen=True)
class RelationGraph:
    vertices: tuple[str, ...]
    edges: tuple[RelationEdge, ...]
    direction: str

    def out_edges(self, vertex: str) -> list[RelationEdge]:
        return [e for e in self.edges if e.tail == vertex]


def side_grammar(comp: KlmComponent, side: str, symbol: str, mirrored: bool = False) -> Grammar:
    rules = comp.left_rules if side == "left" else comp.right_rules
    g = make_proper(grammar_from_rules(1, symbol, rules))
    return mirror(g) if mirrored else g


def relation_graph(comp: KlmComponent, direction: str = "forward", dim: int = 1) -> RelationGraph:
    if dim != 1:
        raise ValueError("relation graphs are defined for one-dimensional components")
    if comp.is_trivial:
        raise ValueError("trivial components have no relation graph")
    if direction not in ("forward", "backward"):
        raise ValueError(f"unknown direction {direction}")
    backward = direction == "backward"
    edges = []
    identity = EdgeLabel()
    for rule in sorted(comp.scc_rules, key=Rule.sort_key):
        pos, child = comp.spine_child(rule)
        if pos == 1:
            a = rule.left
            label = EdgeLabel(a, side_grammar(comp, "left", a, mirrored=backward), backward)
            labels = (label, identity)
        else:
            b = rule.right
            label = EdgeLabel(b, side_grammar(comp, "right", b, mirrored=not backward), not backward)
            labels = (identity, label)
        tail, head = (child, rule.head) if backward else (rule.head, child)
        edges.append(RelationEdge(tail, head, rule, *labels))
    vertices = tuple(sorted(comp.scc_symbols()))
    return RelationGraph(vertices, tuple(edges), direction)


# -- pumping cycles ---------------------------------------------------------------------

@dataclass
class PumpingCycle:
    cycle: DerivationTree
    direction: str
    lifted_sides: frozenset[str]
    anchor: tuple[Vector, Vector]
    certificates: list = field(default_factory=list)

    @property
    def is_forward(self) -> bool:
        return self.direction == "forward"

    def propagated(self, dim: int = 1) -> DerivationTree:
        if self.is_forward:
            return propagate_configurations(self.cycle, Anchor(root=self.anchor), dim)
        return propagate_configurations(self.cycle, Anchor(leaf=self.anchor), dim)


def validate_pumping_cycle(pc: PumpingCycle, dim: int = 1) -> bool:
    """Re-propagate from the anchor: nonnegative and each lifted side gains at least one."""
    try:
        tree = pc.propagated(dim)
        hole = tree.hole()
    except TreeError:
        return False
    if hole.label != tree.root.label or not is_nonnegative(tree):
        return False
    top, bottom = tree.root, hole
    if pc.is_forward:
        before, after = (top.left, top.right), (bottom.left, bottom.right)
    else:
        before, after = (bottom.left, bottom.right), (top.left, top.right)
    for side in pc.lifted_sides:
        k = 0 if side == "left" else 1
        if not all(a >= b + 1 for a, b in zip(after[k], before[k])):
            return False
    return True


def find_pumping_cycle(comp: KlmComponent, direction: str, anchor: tuple[int | None, int | None],
                       pumped: Iterable[str], length_bound: int = 64, cap: int = 4096,
                       bounds: OracleBounds | None = None, state_cap: int = 4096
                       ) -> PumpingCycle | None:
    """Search for a cycle at P (forward) or Q (backward) lifting the pumped sides.

    ``anchor`` holds the configuration at the fixed end; None stands for +ω
    and is only allowed on sides that are not pumped.  Raises
    OracleInconclusive if nothing was found while some δ query was undecided.
    """
    pumped = frozenset(pumped)
    if not pumped:
        raise ValueError("nothing to pump")
    for side in pumped:
        if anchor[0 if side == "left" else 1] is None:
            raise ValueError(f"pumped side {side} needs a finite anchor")
    graph = relation_graph(comp, direction)
    vertex0 = comp.source if direction == "forward" else comp.target
    start = (vertex0, _ext(anchor[0]), _ext(anchor[1]))
    goal_left = anchor[0] + 1 if "left" in pumped else None
    goal_right = anchor[1] + 1 if "right" in pumped else None
    inconclusive = False
    frontier = deque([(start, 0)])
    parents = {start: None}
    antichains: dict[str, list[tuple[float, float]]] = {vertex0: [(start[1], start[2])]}
    found = None
    while frontier and found is None:
        state, depth = frontier.popleft()
        if depth >= length_bound:
            continue
        vertex, l, r = state
        for edge in graph.out_edges(vertex):
            try:
                nl = edge.left.apply(l, cap, bounds)
                nr = edge.right.apply(r, cap, bounds)
            except OracleInconclusive:
                inconclusive = True
                continue
            if nl < 0 or nr < 0:
                continue
            new = (edge.head, nl, nr)
            if edge.head == vertex0 and (goal_left is None or nl >= goal_left) and (
                    goal_right is None or nr >= goal_right):
                parents[new] = (state, edge)
                found = new
                break
            known = antichains.setdefault(edge.head, [])
            if any(nl <= a and nr <= b for a, b in known):
                continue
            if len(parents) >= state_cap:
                inconclusive = True
                continue
            known[:] = [(a, b) for a, b in known if not (a <= nl and b <= nr)]
            known.append((nl, nr))
            parents[new] = (state, edge)
            frontier.append((new, depth + 1))
    if found is None:
        if inconclusive:
            raise OracleInconclusive("pumping search hit an undecided δ query or its state cap")
        return None
    edges = []
    state = found
    while parents[state] is not None:
        state, edge = parents[state]
        edges.append(edge)
    edges.reverse()
    return _concretize(comp, direction, anchor, pumped, edges, cap, bounds)


def _ext(value):
    return OMEGA if value is None else value


def _concretize(comp, direction, anchor, pumped, edges, cap, bounds) -> PumpingCycle | None:
    """Turn a relation-graph path into a cycle with explicit side subtrees."""
    forward = direction == "forward"
    left_fix = _fixed_trees(comp.left_rules)
    right_fix = _fixed_trees(comp.right_rules)
    l, r = anchor
    pieces = []  # (rule, side subtree) in traversal order
    certificates = []
    for edge in edges:
        rule = edge.rule
        pos, _ = comp.spine_child(rule)
        if pos == 1:
            label, value, fixed = edge.left, l, left_fix
        else:
            label, value, fixed = edge.right, r, right_fix
        if value is None:
            tree = _copy(fixed[label.symbol])
        else:
            d = delta_truncated(label.grammar, value, cap, bounds)
            if d.witness is None:
                return None
            tree = d.witness
            reached = tree_final(tree, value)
            certificates.append((label.symbol, value, reached))
            if label.mirrored:
                tree = mirror_tree(tree)
            if pos == 1:
                l = reached
            else:
                r = reached
        pieces.append((rule, pos, tree))
    if not forward:
        pieces.reverse()
    root = Node(pieces[0][0].head)
    node = root
    for rule, pos, side in pieces:
        spine = Node(rule.right if pos == 1 else rule.left)
        node.children = [side.root, spine] if pos == 1 else [spine, side.root]
        node = spine
    cycle = DerivationTree(root)
    fixed_anchor = _complete_anchor(cycle, forward, anchor)
    pc = PumpingCycle(cycle, direction, frozenset(pumped), fixed_anchor, certificates)
    return pc if validate_pumping_cycle(pc) else None


def tree_final(tree: DerivationTree, start: int) -> int:
    return start + sum(n.label[0] for n in preorder(tree.root) if n.is_terminal)


def _copy(tree: DerivationTree) -> DerivationTree:
    return DerivationTree(copy_tree(tree.root, with_configs=False)[0])


def _fixed_trees(rules) -> dict[str, DerivationTree]:
    """One acyclic complete tree per side symbol, of least height."""
    rules = sorted(rules, key=Rule.sort_key)
    trees: dict[str, DerivationTree] = {}
    changed = True
    while changed:
        changed = False
        for rule in rules:
            if rule.head in trees:
                continue
            if rule.is_leaf:
                trees[rule.head] = DerivationTree(Node(rule.head, [Node(rule.vector)]))
                changed = True
            elif rule.left in trees and rule.right in trees:
                kids = [copy_tree(trees[c].root, with_configs=False)[0] for c in rule.children]
                trees[rule.head] = DerivationTree(Node(rule.head, kids))
                changed = True
    return trees


def _complete_anchor(cycle: DerivationTree, forward: bool, anchor) -> tuple[Vector, Vector]:
    """Replace +ω by the least value keeping that side nonnegative."""
    probe = [0 if a is None else a for a in anchor]
    if forward:
        tree = propagate_configurations(cycle, Anchor(root=((probe[0],), (probe[1],))), 1)
    else:
        tree = propagate_configurations(cycle, Anchor(leaf=((probe[0],), (probe[1],))), 1)
    hole = tree.hole()
    chain = set(path(tree.root, hole))
    low_left, low_right = 0, 0
    before_hole = _before_hole(tree.root, hole)
    for node in preorder(tree.root):
        for value, is_left in ((node.left[0], True), (node.right[0], False)):
            left_side = node in before_hole or (node in chain and is_left)
            if left_side:
                low_left = min(low_left, value)
            else:
                low_right = min(low_right, value)
    out = list(probe)
    if anchor[0] is None:
        out[0] = -low_left
    if anchor[1] is None:
        out[1] = -low_right
    return ((out[0],), (out[1],))


def _before_hole(root: Node, hole: Node) -> set[Node]:
    """Nodes whose whole yield precedes the open leaf."""
    chain = path(root, hole)
    on_chain = set(chain)
    found = set()
    for node in chain[:-1]:
        first, second = node.children
        if second in on_chain:
            found.update(preorder(first))
    return found


def fastest_side_completion(comp: KlmComponent) -> dict[str, Vector]:
    return fixed_completions(comp.left_rules | comp.right_rules, 1)
