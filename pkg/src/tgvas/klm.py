"""KLM components and trees, capture, characteristic systems and ranks.

A component summarises a strongly connected segment: the rules along its
path, the rules of the subtrees hanging to the left and to the right, and
the rule at its exit node.  Symbols may be annotated: ``(_3X)`` stands for
``X`` with its left configuration fixed to 3, ``(X_3)`` for the right side,
and ``A[3:5]`` for a side subtree of ``A`` running from 3 to 5.  Annotated
symbols are listed in the tree's symbol table.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping

from .derivation import DerivationTree, Division, Node, TreeError, path, preorder
from .diophantine import DioSystem, SystemBuilder
from .grammar import Grammar, GrammarError, Rule, Vector, grammar_from_rules, make_proper
from .structure import index_table

CONFIG_NAMES = ("l_src", "r_src", "l_tgt", "r_tgt")
SIDES = ("left", "right")


class CaptureError(ValueError):
    pass


class RankError(ValueError):
    pass


@dataclass(frozen=True)
class SymbolInfo:
    """Meaning of an annotated symbol.

    ``kind`` is ``encoded`` (a path symbol with one side's configuration
    fixed to ``value``) or ``certificate`` (a side subtree of ``base`` from
    configuration ``start`` to ``end``)."""

    kind: str
    base: str
    side: str
    value: Vector = ()
    start: Vector = ()
    end: Vector = ()

    @property
    def displacement(self) -> Vector:
        return tuple(b - a for a, b in zip(self.start, self.end))

    def to_json(self):
        data = {"kind": self.kind, "base": self.base, "side": self.side}
        if self.kind == "encoded":
            data["value"] = list(self.value)
        else:
            data["start"], data["end"] = list(self.start), list(self.end)
        return data

    @staticmethod
    def from_json(data) -> "SymbolInfo":
        return SymbolInfo(data["kind"], data["base"], data["side"], tuple(data.get("value", ())),
                          tuple(data.get("start", ())), tuple(data.get("end", ())))


def _vec_text(v: Vector) -> str:
    return ",".join(str(x) for x in v)


def encoded_name(symbol: str, side: str, value: Vector) -> str:
    if side == "left":
        return f"(_{_vec_text(value)}{symbol})"
    return f"({symbol}_{_vec_text(value)})"


def certificate_name(symbol: str, start: Vector, end: Vector) -> str:
    return f"{symbol}[{_vec_text(start)}:{_vec_text(end)}]"


def base_symbol(symbols: Mapping[str, SymbolInfo], name: str) -> str:
    while name in symbols:
        name = symbols[name].base
    return name


def base_rule(symbols: Mapping[str, SymbolInfo], rule: Rule) -> Rule | None:
    """The grammar rule behind a possibly annotated rule; None for certificate rules."""
    if rule.head in symbols and symbols[rule.head].kind == "certificate":
        return None
    head = base_symbol(symbols, rule.head)
    if rule.is_leaf:
        return Rule.leaf(head, rule.vector)
    return Rule.binary(head, base_symbol(symbols, rule.left), base_symbol(symbols, rule.right))


@dataclass(frozen=True)
class Annotation:
    side: str
    encoded: frozenset[str]
    certificates: frozenset[str]


@dataclass
class KlmComponent:
    source: str
    target: str
    scc_rules: frozenset[Rule]
    left_rules: frozenset[Rule]
    right_rules: frozenset[Rule]
    exit_rule: Rule
    annotation: tuple[Annotation, ...] = ()
    constraints: dict[str, Vector] = field(default_factory=dict)

    @property
    def is_trivial(self) -> bool:
        return not self.scc_rules

    def same_capture(self, other: "KlmComponent") -> bool:
        return (self.source == other.source and self.target == other.target
                and self.scc_rules == other.scc_rules and self.left_rules == other.left_rules
                and self.right_rules == other.right_rules and self.exit_rule == other.exit_rule
                and self.annotation == other.annotation)

    def scc_symbols(self) -> set[str]:
        found = {self.source, self.target}
        for rule in self.scc_rules:
            found.add(rule.head)
        return found

    def spine_child(self, rule: Rule) -> tuple[int, str]:
        """(position, symbol) of the path child of a path rule."""
        inside = self.scc_symbols()
        hits = [i for i, c in enumerate(rule.children) if c in inside]
        if len(hits) != 1:
            raise CaptureError(f"path rule {rule} must have exactly one path child")
        return hits[0], rule.children[hits[0]]

    def side_roots(self) -> dict[str, list[tuple[Rule, str]]]:
        """Side children produced by path rules, per side."""
        roots = {"left": [], "right": []}
        for rule in sorted(self.scc_rules, key=Rule.sort_key):
            pos, _ = self.spine_child(rule)
            if pos == 1:
                roots["left"].append((rule, rule.left))
            else:
                roots["right"].append((rule, rule.right))
        return roots

    def side_symbols(self, side: str) -> set[str]:
        rules = self.left_rules if side == "left" else self.right_rules
        found = {s for _, s in self.side_roots()[side]}
        for rule in rules:
            found.add(rule.head)
            if not rule.is_leaf:
                found.update(rule.children)
        return found

    def side_rules(self, side: str) -> frozenset[Rule]:
        return self.left_rules if side == "left" else self.right_rules


@dataclass
class KlmTree:
    dim: int
    components: list[KlmComponent]
    children: list[list[tuple]]
    symbols: dict[str, SymbolInfo] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.children) != len(self.components):
            raise CaptureError("children table does not match components")
        for i, comp in enumerate(self.components):
            kids = self.children[i]
            if comp.exit_rule.is_leaf:
                if len(kids) != 1 or kids[0][0] != "u" or tuple(kids[0][1]) != comp.exit_rule.vector:
                    raise CaptureError(f"component {i} needs its terminal as only child")
            else:
                if len(kids) != 2 or any(k[0] != "c" for k in kids):
                    raise CaptureError(f"component {i} needs two component children")
                for k, symbol in zip(kids, comp.exit_rule.children):
                    if self.components[k[1]].source != symbol:
                        raise CaptureError(f"child of component {i} does not start with {symbol}")

    def terminal_leaves(self) -> list[tuple[int, Vector]]:
        """(owning component, vector) for every terminal leaf in preorder."""
        return [(i, tuple(kids[0][1])) for i, kids in enumerate(self.children)
                if kids and kids[0][0] == "u"]

    def parent_of(self) -> dict[int, int]:
        table = {}
        for i, kids in enumerate(self.children):
            for k in kids:
                if k[0] == "c":
                    table[k[1]] = i
        return table


# -- capture ------------------------------------------------------------------

def segment_parts(root: Node, exit_node: Node) -> tuple[list[Node], list[Node], list[Node]]:
    """Path nodes and the roots of left- and right-hanging subtrees."""
    chain = path(root, exit_node)
    on_path = set(chain)
    left_roots, right_roots = [], []
    for node in chain[:-1]:
        if len(node.children) != 2:
            raise CaptureError("path passes through a leaf rule")
        first, second = node.children
        if second in on_path:
            left_roots.append(first)
        else:
            right_roots.append(second)
    return chain, left_roots, right_roots


def _subtree_rules(roots: Iterable[Node]) -> set[Rule]:
    found = set()
    for r in roots:
        for node in preorder(r):
            if node.children:
                found.add(node.rule())
    return found


def capture_component(root: Node, exit_node: Node, symbols: Mapping[str, SymbolInfo] | None = None
                      ) -> KlmComponent:
    symbols = symbols or {}
    chain, left_roots, right_roots = segment_parts(root, exit_node)
    if not exit_node.children:
        raise CaptureError("exit node has no rule")
    scc_rules = frozenset(n.rule() for n in chain[:-1])
    _check_strongly_connected(chain, scc_rules)
    comp = KlmComponent(
        source=root.label, target=exit_node.label, scc_rules=scc_rules,
        left_rules=frozenset(_subtree_rules(left_roots)),
        right_rules=frozenset(_subtree_rules(right_roots)),
        exit_rule=exit_node.rule())
    comp.annotation = annotation_of(comp, symbols)
    return comp


def _check_strongly_connected(chain: list[Node], scc_rules) -> None:
    labels = [n.label for n in chain]
    if len(chain) == 1:
        return
    edges: dict[str, set[str]] = {}
    for a, b in zip(chain, chain[1:]):
        edges.setdefault(a.label, set()).add(b.label)
    start = labels[0]
    forward = _reach(edges, start)
    backward_edges: dict[str, set[str]] = {}
    for a, bs in edges.items():
        for b in bs:
            backward_edges.setdefault(b, set()).add(a)
    backward = _reach(backward_edges, start)
    if not set(labels) <= (forward & backward):
        raise CaptureError("segment is not strongly connected")


def _reach(edges, start):
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        for t in edges.get(s, ()):
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return seen


def encoding_layers(symbols: Mapping[str, SymbolInfo], name: str) -> dict[str, Vector]:
    """Side -> fixed value for every encoding layer of ``name``."""
    layers: dict[str, Vector] = {}
    while name in symbols and symbols[name].kind == "encoded":
        info = symbols[name]
        layers.setdefault(info.side, info.value)
        name = info.base
    return layers


def annotation_of(comp: KlmComponent, symbols: Mapping[str, SymbolInfo]) -> tuple[Annotation, ...]:
    spine = comp.scc_symbols()
    out = []
    for side in SIDES:
        encoded = frozenset(s for s in spine if side in encoding_layers(symbols, s))
        if not encoded:
            continue
        certs = frozenset(s for s in comp.side_symbols(side)
                          if s in symbols and symbols[s].kind == "certificate")
        out.append(Annotation(side, encoded, certs))
    return tuple(out)


def implied_constraints(comp: KlmComponent, symbols: Mapping[str, SymbolInfo]) -> dict[str, Vector]:
    """Configuration values forced by annotated source and target symbols."""
    forced: dict[str, Vector] = {}
    info = symbols.get(comp.source)
    if info is not None and info.kind == "certificate":
        forced["l_src"], forced["r_src"] = info.start, info.end
    for side, value in encoding_layers(symbols, comp.source).items():
        forced["l_src" if side == "left" else "r_src"] = value
    for side, value in encoding_layers(symbols, comp.target).items():
        forced["l_tgt" if side == "left" else "r_tgt"] = value
    return forced


def check_capture(comp: KlmComponent, root: Node, exit_node: Node,
                  symbols: Mapping[str, SymbolInfo] | None = None) -> bool:
    symbols = symbols or {}
    try:
        fresh = capture_component(root, exit_node, symbols)
    except (CaptureError, TreeError):
        return False
    if not comp.same_capture(fresh):
        return False
    chain, left_roots, right_roots = segment_parts(root, exit_node)
    return all(annotation_consistent(r, symbols) for r in left_roots + right_roots) and all(
        node_consistent(n, symbols) for n in chain)


def node_consistent(node: Node, symbols: Mapping[str, SymbolInfo]) -> bool:
    """An annotated label agrees with the node's configuration."""
    if node.is_terminal or node.left is None:
        return True
    for side, value in encoding_layers(symbols, node.label).items():
        actual = node.left if side == "left" else node.right
        if tuple(actual) != value:
            return False
    info = symbols.get(node.label)
    if info is not None and info.kind == "certificate":
        if (tuple(node.left), tuple(node.right)) != (info.start, info.end):
            return False
        if len(node.children) != 1 or tuple(node.children[0].label) != info.displacement:
            return False
    return True


def annotation_consistent(root: Node, symbols: Mapping[str, SymbolInfo]) -> bool:
    return all(node_consistent(n, symbols) for n in preorder(root))


# -- building trees -----------------------------------------------------------

@dataclass
class Alignment:
    """Which segment of a working tree each component captures."""

    segments: list[tuple[Node, Node]]


def build_klm_tree(division: Division, dim: int, symbols: Mapping[str, SymbolInfo] | None = None
                   ) -> tuple[KlmTree, Alignment]:
    symbols = dict(symbols or {})
    segments = list(division.segments)
    by_root = {p: i for i, (p, _) in enumerate(segments)}
    components, children = [], []
    for p, q in segments:
        components.append(capture_component(p, q, symbols))
        kids = []
        for child in q.children:
            if child.is_terminal:
                kids.append(("u", tuple(child.label)))
            elif child in by_root:
                kids.append(("c", by_root[child]))
            else:
                raise CaptureError("division leaves a subtree uncovered")
        children.append(kids)
    return KlmTree(dim, components, children, symbols), Alignment(segments)


def initial_klm_tree(grammar: Grammar, s: Vector, t: Vector, witness: DerivationTree
                     ) -> tuple[KlmTree, Alignment, DerivationTree]:
    from .derivation import Anchor, is_nonnegative, propagate_configurations, small_division
    witness.check_grammar(grammar)
    if witness.root.label != grammar.start:
        raise CaptureError("witness does not start at the start symbol")
    tree = propagate_configurations(witness, Anchor(root=(tuple(s), tuple(t))), grammar.dim)
    if not is_nonnegative(tree):
        raise CaptureError("witness is not nonnegative")
    division = small_division(tree)
    kt, alignment = build_klm_tree(division, grammar.dim)
    kt.components[0].constraints.update({"l_src": tuple(s), "r_src": tuple(t)})
    return kt, alignment, tree


# -- characteristic system ----------------------------------------------------

def config_var(i: int, which: str, k: int) -> str:
    return f"c{i}.{which}.{k}"


def rule_var(i: int, part: str, rule: Rule) -> str:
    return f"c{i}.#{part}:{rule}"


def leaf_var(j: int, which: str, k: int) -> str:
    return f"u{j}.{which}.{k}"


def char_system(kt: KlmTree) -> DioSystem:
    b = SystemBuilder()
    dim = kt.dim
    for i, comp in enumerate(kt.components):
        for which in CONFIG_NAMES:
            for k in range(dim):
                b.variable(config_var(i, which, k))
        _component_equations(b, i, comp, dim)
        for which, value in comp.constraints.items():
            for k in range(dim):
                b.fix(config_var(i, which, k), int(value[k]))
    leaves = kt.terminal_leaves()
    for j, (owner, vector) in enumerate(leaves):
        for k in range(dim):
            l, r = leaf_var(j, "l", k), leaf_var(j, "r", k)
            b.equation([(l, 1), (r, -1)], -vector[k])
            b.equation([(config_var(owner, "l_tgt", k), 1), (l, -1)])
            b.equation([(config_var(owner, "r_tgt", k), 1), (r, -1)])
    for i, kids in enumerate(kt.children):
        if kids and kids[0][0] == "c":
            first, second = kids[0][1], kids[1][1]
            for k in range(dim):
                b.equation([(config_var(i, "l_tgt", k), 1), (config_var(first, "l_src", k), -1)])
                b.equation([(config_var(i, "r_tgt", k), 1), (config_var(second, "r_src", k), -1)])
                b.equation([(config_var(first, "r_src", k), 1), (config_var(second, "l_src", k), -1)])
    return b.build()


def _component_equations(b: SystemBuilder, i: int, comp: KlmComponent, dim: int) -> None:
    parts = (("scc", comp.scc_rules), ("L", comp.left_rules), ("R", comp.right_rules))
    for part, rules in parts:
        for rule in rules:
            b.variable(rule_var(i, part, rule), lower=1)
    for k in range(dim):
        terms = [(config_var(i, "l_src", k), 1), (config_var(i, "l_tgt", k), -1)]
        terms += [(rule_var(i, "L", r), r.vector[k]) for r in comp.left_rules if r.is_leaf]
        b.equation(terms)
        terms = [(config_var(i, "r_tgt", k), 1), (config_var(i, "r_src", k), -1)]
        terms += [(rule_var(i, "R", r), r.vector[k]) for r in comp.right_rules if r.is_leaf]
        b.equation(terms)
    if comp.is_trivial:
        return
    # path symbols: produced + [X = P] = consumed + [X = Q]
    for symbol in sorted(comp.scc_symbols()):
        terms = []
        for rule in comp.scc_rules:
            _, child = comp.spine_child(rule)
            if child == symbol:
                terms.append((rule_var(i, "scc", rule), 1))
            if rule.head == symbol:
                terms.append((rule_var(i, "scc", rule), -1))
        const = (1 if symbol == comp.target else 0) - (1 if symbol == comp.source else 0)
        b.equation(terms, const)
    roots = comp.side_roots()
    for side, part in (("left", "L"), ("right", "R")):
        rules = comp.side_rules(side)
        for symbol in sorted(comp.side_symbols(side)):
            terms = []
            for rule, child in roots[side]:
                if child == symbol:
                    terms.append((rule_var(i, "scc", rule), 1))
            for rule in rules:
                if not rule.is_leaf:
                    uses = sum(1 for c in rule.children if c == symbol)
                    if uses:
                        terms.append((rule_var(i, part, rule), uses))
                if rule.head == symbol:
                    terms.append((rule_var(i, part, rule), -1))
            b.equation(terms)


def solution_from_tree(kt: KlmTree, alignment: Alignment) -> dict[str, int]:
    """Rule counts and configurations read off the captured working tree."""
    values: dict[str, int] = {}
    dim = kt.dim
    for i, (comp, (p, q)) in enumerate(zip(kt.components, alignment.segments)):
        for which, node, attr in (("l_src", p, "left"), ("r_src", p, "right"),
                                  ("l_tgt", q, "left"), ("r_tgt", q, "right")):
            vec = getattr(node, attr)
            for k in range(dim):
                values[config_var(i, which, k)] = vec[k]
        chain, left_roots, right_roots = segment_parts(p, q)
        for node in chain[:-1]:
            name = rule_var(i, "scc", node.rule())
            values[name] = values.get(name, 0) + 1
        for part, roots in (("L", left_roots), ("R", right_roots)):
            for r in roots:
                for node in preorder(r):
                    if node.children:
                        name = rule_var(i, part, node.rule())
                        values[name] = values.get(name, 0) + 1
    j = 0
    for i, kids in enumerate(kt.children):
        if kids and kids[0][0] == "u":
            q = alignment.segments[i][1]
            leaf = q.children[0]
            for k in range(dim):
                values[leaf_var(j, "l", k)] = leaf.left[k]
                values[leaf_var(j, "r", k)] = leaf.right[k]
            j += 1
    return values


# -- rank ---------------------------------------------------------------------

def _side_grammar(comp: KlmComponent, side: str, symbol: str, dim: int) -> Grammar:
    return make_proper(grammar_from_rules(dim, symbol, comp.side_rules(side)))


def fixed_completions(rules: Iterable[Rule], dim: int) -> dict[str, Vector]:
    """Displacement of one acyclic complete tree per symbol (least height first)."""
    rules = sorted(rules, key=Rule.sort_key)
    value: dict[str, Vector] = {}
    changed = True
    while changed:
        changed = False
        for rule in rules:
            if rule.head in value:
                continue
            if rule.is_leaf:
                value[rule.head] = rule.vector
                changed = True
            elif rule.left in value and rule.right in value:
                value[rule.head] = tuple(a + b for a, b in zip(value[rule.left], value[rule.right]))
                changed = True
    return value


def rule_defects(rules: Iterable[Rule], completion: Mapping[str, Vector]) -> list[Vector]:
    """Vectors spanning all variation of side displacements."""
    out = []
    for rule in rules:
        if rule.head not in completion:
            continue
        if rule.is_leaf:
            d = tuple(u - h for u, h in zip(rule.vector, completion[rule.head]))
        else:
            if rule.left not in completion or rule.right not in completion:
                continue
            d = tuple(a + b - h for a, b, h in zip(completion[rule.left], completion[rule.right],
                                                   completion[rule.head]))
        if any(d):
            out.append(d)
    return out


@dataclass(frozen=True)
class CycleSpan:
    generators: list[tuple]
    left_completion: dict[str, Vector]
    right_completion: dict[str, Vector]
    potential: dict[str, tuple[Vector, Vector]]


def cycle_generators(comp: KlmComponent, dim: int) -> CycleSpan:
    """Vectors (left effect, right effect) spanning every top cycle effect.

    Path rules are weighted with fixed side completions; potentials along a
    spanning tree turn every path rule into one fundamental cycle.  Side
    variation adds the rule defects of each side grammar.
    """
    zero = (0,) * dim
    left_fix = fixed_completions(comp.left_rules, dim)
    right_fix = fixed_completions(comp.right_rules, dim)
    edges = []
    for rule in sorted(comp.scc_rules, key=Rule.sort_key):
        pos, child = comp.spine_child(rule)
        if pos == 1:
            weight = (left_fix.get(rule.left, zero), zero)
        else:
            weight = (zero, right_fix.get(rule.right, zero))
        edges.append((rule.head, child, weight))
    potential = {comp.source: (zero, zero)}
    frontier = [comp.source]
    adjacency: dict[str, list] = {}
    for tail, head, weight in edges:
        adjacency.setdefault(tail, []).append((head, weight))
        adjacency.setdefault(head, []).append((tail, tuple(tuple(-x for x in w) for w in weight)))
    while frontier:
        s = frontier.pop()
        for t, w in adjacency.get(s, ()):
            if t not in potential:
                potential[t] = tuple(tuple(a + b for a, b in zip(potential[s][k], w[k])) for k in (0, 1))
                frontier.append(t)
    generators = []
    for tail, head, weight in edges:
        g = tuple(tuple(w + a - b for w, a, b in zip(weight[k], potential[tail][k], potential[head][k]))
                  for k in (0, 1))
        generators.append(g[0] + g[1])
    for d in rule_defects(comp.left_rules, left_fix):
        generators.append(d + zero)
    for d in rule_defects(comp.right_rules, right_fix):
        generators.append(zero + d)
    return CycleSpan(generators, left_fix, right_fix, potential)


def rational_rank(vectors: Iterable[Iterable[int]]) -> int:
    rows = [[Fraction(x) for x in v] for v in vectors]
    rows = [r for r in rows if any(r)]
    if not rows:
        return 0
    width = len(rows[0])
    rank = 0
    for col in range(width):
        pivot = next((i for i in range(rank, len(rows)) if rows[i][col] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for i in range(len(rows)):
            if i != rank and rows[i][col] != 0:
                factor = rows[i][col] / rows[rank][col]
                rows[i] = [a - factor * b for a, b in zip(rows[i], rows[rank])]
        rank += 1
    return rank


def geometric_dimension(comp: KlmComponent, dim: int = 1) -> int:
    if comp.is_trivial:
        return 0
    return rational_rank(cycle_generators(comp, dim).generators)


def component_index(comp: KlmComponent, dim: int = 1) -> int:
    if comp.is_trivial:
        raise RankError("trivial components have no index")
    best = 1
    for side in SIDES:
        rules = comp.side_rules(side)
        if not rules:
            continue
        for symbol in sorted(comp.side_symbols(side)):
            if not any(r.head == symbol for r in rules):
                continue
            table = index_table(_side_grammar(comp, side, symbol, dim))
            best = max(best, table.grammar_index)
    return best


def has_side_symbols(comp: KlmComponent) -> bool:
    return bool(comp.left_rules or comp.right_rules)


def component_rank(comp: KlmComponent, dim: int = 1) -> tuple[int, int]:
    return component_index(comp, dim), geometric_dimension(comp, dim)


def tree_rank(kt: KlmTree, k: int, d: int) -> tuple[int, ...]:
    width = 2 * d
    counts = [0] * ((k - 1) * width)
    for i, comp in enumerate(kt.components):
        if comp.is_trivial:
            continue
        index, gdim = component_rank(comp, d)
        if not (1 <= index <= k - 1 and 1 <= gdim <= width):
            raise RankError(f"component {i} has rank {(index, gdim)} outside the classes for k={k}")
        counts[(k - 1 - index) * width + (width - gdim)] += 1
    return tuple(counts)


# -- serialisation -------------------------------------------------------------

def parse_rule(text: str) -> Rule:
    head, _, body = text.partition("->")
    head, tokens = head.strip(), body.split()
    if not head or not tokens:
        raise GrammarError(f"cannot parse rule {text!r}")
    try:
        return Rule.leaf(head, (int(t) for t in tokens))
    except ValueError:
        if len(tokens) != 2:
            raise GrammarError(f"cannot parse rule {text!r}") from None
        return Rule.binary(head, tokens[0], tokens[1])


def _rule_list(rules) -> list[str]:
    return sorted(str(r) for r in rules)


def klm_to_json(kt: KlmTree) -> dict:
    def record(i):
        comp = kt.components[i]
        kids = []
        for kind, value in kt.children[i]:
            if kind == "u":
                kids.append({"kind": "terminal", "vector": list(value)})
            else:
                kids.append(record(value))
        ann = [{"side": a.side,
                "encoded_configs": {s: list(encoding_layers(kt.symbols, s)[a.side]) for s in sorted(a.encoded)},
                "certificate_rules": [[s, list(kt.symbols[s].displacement)] for s in sorted(a.certificates)]}
               for a in comp.annotation]
        return {"kind": "component", "id": i, "source": comp.source, "target": comp.target,
                "scc_rules": _rule_list(comp.scc_rules), "left_rules": _rule_list(comp.left_rules),
                "right_rules": _rule_list(comp.right_rules), "exit_rule": str(comp.exit_rule),
                "annotation": ann,
                "constraints": {k: list(v) for k, v in sorted(comp.constraints.items())},
                "children": kids}

    return {"dim": kt.dim, "symbols": {s: info.to_json() for s, info in sorted(kt.symbols.items())},
            "root": record(0) if kt.components else None}


def klm_from_json(data: dict) -> KlmTree:
    symbols = {s: SymbolInfo.from_json(v) for s, v in data.get("symbols", {}).items()}
    components: list[KlmComponent] = []
    children: list[list[tuple]] = []

    def visit(rec) -> int:
        if rec.get("kind") != "component":
            raise CaptureError("expected a component record")
        i = len(components)
        comp = KlmComponent(
            rec["source"], rec["target"],
            frozenset(parse_rule(r) for r in rec["scc_rules"]),
            frozenset(parse_rule(r) for r in rec["left_rules"]),
            frozenset(parse_rule(r) for r in rec["right_rules"]),
            parse_rule(rec["exit_rule"]),
            (),
            {k: tuple(v) for k, v in rec.get("constraints", {}).items()})
        components.append(comp)
        children.append([])
        kids = []
        for child in rec["children"]:
            if child["kind"] == "terminal":
                kids.append(("u", tuple(child["vector"])))
            else:
                kids.append(("c", visit(child)))
        children[i] = kids
        comp.annotation = annotation_of(comp, symbols)
        ann = rec.get("annotation") or []
        if [a["side"] for a in ann] != [a.side for a in comp.annotation]:
            raise CaptureError(f"annotation of component {i} does not match its symbols")
        return i

    if data.get("root") is None:
        raise CaptureError("empty KLM tree")
    visit(data["root"])
    for comp in components:
        for key in comp.constraints:
            if key not in CONFIG_NAMES:
                raise CaptureError(f"unknown constraint {key}")
    return KlmTree(int(data["dim"]), components, children, symbols)


def rule_counts(kt: KlmTree) -> Counter:
    counts: Counter = Counter()
    for comp in kt.components:
        counts.update(comp.scc_rules)
    return counts
