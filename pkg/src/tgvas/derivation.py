"""Derivation trees, segments, configuration propagation and divisions.

Nodes are plain mutable objects while a tree is being built; public
operations return fresh trees.  A nonterminal node without children is the
open leaf of a segment.  Configurations are tuples of Python ints and may be
negative; nonnegativity is a separate verdict.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Iterator, Mapping

import networkx as nx

from .grammar import Grammar, Rule, Vector

DEFAULT_NODE_BUDGET = 1_000_000


class TreeError(ValueError):
    pass


class InconsistentAnchor(TreeError):
    pass


class NodeBudgetExceeded(TreeError):
    def __init__(self, budget: int):
        self.budget = budget
        super().__init__(f"tree exceeds node budget {budget}")


class UnrealizableParikh(TreeError):
    pass


class Node:
    __slots__ = ("label", "children", "left", "right")

    def __init__(self, label, children=None):
        self.label = label
        self.children: list[Node] = children if children is not None else []
        self.left: Vector | None = None
        self.right: Vector | None = None

    @property
    def is_terminal(self) -> bool:
        return not isinstance(self.label, str)

    @property
    def is_hole(self) -> bool:
        return isinstance(self.label, str) and not self.children

    def rule(self) -> Rule:
        if len(self.children) == 1:
            return Rule.leaf(self.label, self.children[0].label)
        if len(self.children) == 2:
            return Rule.binary(self.label, self.children[0].label, self.children[1].label)
        raise TreeError(f"node {self.label} has no rule")

    def __repr__(self):
        return f"Node({self.label!r})"


def preorder(root: Node) -> Iterator[Node]:
    stack = [root]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(reversed(node.children))


def postorder(root: Node) -> list[Node]:
    order = list(preorder(root))
    order.reverse()
    return order


def parents(root: Node) -> dict[Node, Node]:
    table = {}
    for node in preorder(root):
        for child in node.children:
            table[child] = node
    return table


def copy_tree(root: Node, stop: Node | None = None, with_configs: bool = True) -> tuple[Node, dict]:
    """Copy the subtree at ``root``.  If ``stop`` is given its children are
    dropped, turning it into the open leaf.  Returns (copy, old->new map)."""
    mapping = {}
    new_root = Node(root.label)
    mapping[root] = new_root
    stack = [root]
    while stack:
        node = stack.pop()
        twin = mapping[node]
        if with_configs:
            twin.left, twin.right = node.left, node.right
        if node is stop:
            continue
        for child in node.children:
            c = Node(child.label)
            mapping[child] = c
            twin.children.append(c)
            stack.append(child)
    return new_root, mapping


@dataclass
class DerivationTree:
    root: Node

    def nodes(self) -> list[Node]:
        return list(preorder(self.root))

    def size(self) -> int:
        return sum(1 for _ in preorder(self.root))

    def holes(self) -> list[Node]:
        return [n for n in preorder(self.root) if n.is_hole]

    @property
    def is_complete(self) -> bool:
        return not self.holes()

    def hole(self) -> Node:
        found = self.holes()
        if len(found) != 1:
            raise TreeError(f"expected exactly one open leaf, found {len(found)}")
        return found[0]

    def index_of(self) -> dict[Node, int]:
        return {node: i for i, node in enumerate(preorder(self.root))}

    def copy(self) -> "DerivationTree":
        return DerivationTree(copy_tree(self.root)[0])

    def rules(self) -> Counter:
        return Counter(n.rule() for n in preorder(self.root) if n.children)

    def check_grammar(self, grammar: Grammar) -> None:
        known = set(grammar.rules)
        for node in preorder(self.root):
            if node.children and node.rule() not in known:
                raise TreeError(f"rule {node.rule()} is not in the grammar")


def path(root: Node, target: Node) -> list[Node]:
    """Nodes from ``root`` down to ``target``."""
    up = parents(root)
    chain = [target]
    while chain[-1] is not root:
        if chain[-1] not in up:
            raise TreeError("target is not below root")
        chain.append(up[chain[-1]])
    chain.reverse()
    return chain


# -- displacement and propagation -----------------------------------------

def _add(a, b):
    return tuple(x + y for x, y in zip(a, b))


def _sub(a, b):
    return tuple(x - y for x, y in zip(a, b))


def subtree_displacements(root: Node, dim: int) -> dict[Node, Vector | None]:
    """Displacement of every complete subtree; None when the subtree is open."""
    disp: dict[Node, Vector | None] = {}
    zero = (0,) * dim
    for node in postorder(root):
        if node.is_terminal:
            disp[node] = tuple(node.label)
        elif not node.children:
            disp[node] = None
        else:
            total = zero
            for child in node.children:
                d = disp[child]
                if d is None:
                    total = None
                    break
                total = _add(total, d)
            disp[node] = total
    return disp


def displacement(tree: DerivationTree | Node, dim: int | None = None) -> Vector:
    """Sum of all terminal leaves."""
    root = tree.root if isinstance(tree, DerivationTree) else tree
    total = None
    for node in preorder(root):
        if node.is_terminal:
            total = tuple(node.label) if total is None else _add(total, node.label)
    if total is None:
        return (0,) * (dim or 1)
    return total


def cycle_effect(segment: DerivationTree) -> tuple[Vector, Vector]:
    """(sum of terminals before the open leaf, sum after) in preorder."""
    before = after = None
    seen_hole = False
    for node in preorder(segment.root):
        if node.is_hole:
            seen_hole = True
        elif node.is_terminal:
            if seen_hole:
                after = tuple(node.label) if after is None else _add(after, node.label)
            else:
                before = tuple(node.label) if before is None else _add(before, node.label)
    if not seen_hole:
        raise TreeError("a cycle effect needs an open leaf")
    dim = len((before or after or (0,)))
    return before or (0,) * dim, after or (0,) * dim


@dataclass(frozen=True)
class Anchor:
    root: tuple[Vector, Vector | None] | None = None
    leaf: tuple[Vector, Vector] | None = None


def propagate_configurations(tree: DerivationTree, anchor: Anchor, dim: int,
                             in_place: bool = False) -> DerivationTree:
    """Fill (left, right) at every node from a root pair or an open-leaf pair.

    For a complete tree the root's right value may be left as None.
    """
    if not in_place:
        tree = tree.copy()
    root = tree.root
    disp = subtree_displacements(root, dim)
    holes = [n for n in preorder(root) if n.is_hole]
    if anchor.leaf is not None:
        if len(holes) != 1:
            raise InconsistentAnchor("a leaf anchor needs a segment")
        chain = path(root, holes[0])
        left, right = anchor.leaf
        for parent_node, child in zip(reversed(chain[:-1]), reversed(chain[1:])):
            if len(parent_node.children) != 2:
                raise TreeError("open leaf below a leaf rule")
            first, second = parent_node.children
            if child is second:
                left = _sub(left, disp[first])
            else:
                right = _add(right, disp[second])
        start = (tuple(left), tuple(right))
        if anchor.root is not None and (anchor.root[0] != start[0] or
                                        (anchor.root[1] is not None and anchor.root[1] != start[1])):
            raise InconsistentAnchor("root and leaf anchors disagree")
    elif anchor.root is not None:
        left, right = anchor.root
        if right is None:
            if holes:
                raise InconsistentAnchor("a segment needs both root values")
            right = _add(left, disp[root])
        elif not holes and _add(left, disp[root]) != tuple(right):
            raise InconsistentAnchor("root pair contradicts the tree's displacement")
        start = (tuple(left), tuple(right))
    else:
        raise InconsistentAnchor("no anchor given")
    root.left, root.right = start
    stack = [root]
    while stack:
        node = stack.pop()
        kids = node.children
        if not kids:
            continue
        if len(kids) == 1:
            kids[0].left, kids[0].right = node.left, node.right
            if _add(node.left, kids[0].label) != node.right:
                raise InconsistentAnchor(f"leaf rule at {node.label} does not balance")
            continue
        first, second = kids
        if disp[first] is not None:
            first.left = node.left
            first.right = _add(node.left, disp[first])
            second.left, second.right = first.right, node.right
        else:
            second.right = node.right
            second.left = _sub(node.right, disp[second])
            first.left, first.right = node.left, second.left
        stack.append(second)
        stack.append(first)
    return tree


def is_nonnegative(tree: DerivationTree) -> bool:
    for node in preorder(tree.root):
        if node.left is None or node.right is None:
            raise TreeError("configurations have not been propagated")
        if min(node.left) < 0 or min(node.right) < 0:
            return False
    return True


def check_most_simplified(tree: DerivationTree) -> bool:
    """No node repeats the symbol and configuration pair of an ancestor."""
    on_path: Counter = Counter()
    stack: list[tuple[Node, bool]] = [(tree.root, False)]
    while stack:
        node, leaving = stack.pop()
        if node.is_terminal:
            continue
        if node.left is None:
            raise TreeError("configurations have not been propagated")
        key = (node.label, node.left, node.right)
        if leaving:
            on_path[key] -= 1
            continue
        if on_path[key]:
            return False
        on_path[key] += 1
        stack.append((node, True))
        for child in reversed(node.children):
            stack.append((child, False))
    return True


# -- divisions --------------------------------------------------------------

def _used_rule_graph(root: Node) -> nx.DiGraph:
    graph = nx.DiGraph()
    for node in preorder(root):
        if node.is_terminal:
            continue
        graph.add_node(node.label)
        if len(node.children) == 2:
            for child in node.children:
                graph.add_edge(node.label, child.label)
    return graph


def topmost_segment(root: Node) -> Node:
    """Exit node of the segment starting at ``root``: walk down through
    partially degenerate rules while staying in the topmost SCC of the rules
    used below ``root``."""
    graph = _used_rule_graph(root)
    top = _scc_of(graph, root.label)
    node = root
    while len(node.children) == 2:
        inside = [c for c in node.children if c.label in top]
        if len(inside) == 2:
            raise TreeError(f"nondegenerate rule {node.rule()} in a division")
        if not inside:
            break
        node = inside[0]
    return node


def _scc_of(graph: nx.DiGraph, symbol) -> set:
    reach_from = nx.descendants(graph, symbol) | {symbol}
    reach_to = nx.ancestors(graph, symbol) | {symbol}
    scc = reach_from & reach_to
    if len(scc) == 1 and not graph.has_edge(symbol, symbol):
        return {symbol}
    return scc


def topmost_scc_division(tree: DerivationTree) -> tuple[tuple[Node, Node], list[Node]]:
    """First segment (root, exit) and the roots of the subtrees left over."""
    if tree.root.is_terminal:
        raise TreeError("a terminal tree has no segment")
    exit_node = topmost_segment(tree.root)
    rest = [c for c in exit_node.children if not c.is_terminal]
    return (tree.root, exit_node), rest


@dataclass
class Division:
    tree: DerivationTree
    segments: list[tuple[Node, Node]]

    def parent_links(self) -> dict[int, int | None]:
        by_root = {p: i for i, (p, _) in enumerate(self.segments)}
        links: dict[int, int | None] = {0: None} if self.segments else {}
        for i, (_, q) in enumerate(self.segments):
            for child in q.children:
                if child in by_root:
                    links[by_root[child]] = i
        return links

    def reassemble(self) -> DerivationTree:
        """Glue copies of the segments back together along exit rules."""
        by_root = {p: (p, q) for p, q in self.segments}
        if not self.segments:
            return self.tree.copy()
        first = self.segments[0][0]

        def build(p):
            _, q = by_root[p]
            seg_root, mapping = copy_tree(p, stop=q)
            return seg_root, mapping[q], q

        root, hole, q = build(first)
        stack = [(hole, q)]
        while stack:
            hole, q = stack.pop()
            for child in q.children:
                if child.is_terminal:
                    t = Node(child.label)
                    t.left, t.right = child.left, child.right
                    hole.children.append(t)
                    continue
                sub_root, sub_hole, sub_q = build(child)
                hole.children.append(sub_root)
                stack.append((sub_hole, sub_q))
        return DerivationTree(root)


def small_division(tree: DerivationTree, start: Node | None = None) -> Division:
    """Recursive topmost-SCC division of a complete tree, in preorder."""
    return Division(tree, divide_subtree(start or tree.root))


def divide_subtree(start: Node) -> list[tuple[Node, Node]]:
    segments = []
    if start.is_terminal:
        return segments
    stack = [start]
    while stack:
        root = stack.pop()
        exit_node = topmost_segment(root)
        segments.append((root, exit_node))
        for child in reversed(exit_node.children):
            if not child.is_terminal:
                stack.append(child)
    return segments


def same_tree(a: Node, b: Node, configs: bool = False) -> bool:
    stack = [(a, b)]
    while stack:
        x, y = stack.pop()
        if x.label != y.label or len(x.children) != len(y.children):
            return False
        if configs and (x.left != y.left or x.right != y.right):
            return False
        stack.extend(zip(x.children, y.children))
    return True


# -- surgery ----------------------------------------------------------------

def append_segment(first: DerivationTree, second: DerivationTree) -> DerivationTree:
    """Replace the open leaf of ``first`` by a copy of ``second``."""
    a_root, _ = copy_tree(first.root, with_configs=False)
    hole = DerivationTree(a_root).hole()
    if hole.label != second.root.label:
        raise TreeError(f"cannot append {second.root.label} below {hole.label}")
    b_root, _ = copy_tree(second.root, with_configs=False)
    hole.children = b_root.children
    return DerivationTree(a_root)


def duplicate_cycle(cycle: DerivationTree, copies: int) -> DerivationTree:
    if copies < 1:
        raise TreeError("duplication needs at least one copy")
    hole = cycle.hole()
    if hole.label != cycle.root.label:
        raise TreeError("not a cycle")
    result = DerivationTree(copy_tree(cycle.root, with_configs=False)[0])
    for _ in range(copies - 1):
        result = append_segment(result, cycle)
    return result


def mirror_tree(tree: DerivationTree) -> DerivationTree:
    root, _ = copy_tree(tree.root, with_configs=False)
    for node in preorder(root):
        if node.is_terminal:
            node.label = tuple(-x for x in node.label)
        elif len(node.children) == 2:
            node.children.reverse()
    return DerivationTree(root)


def tree_from_rule_sequence(start: str, rules: Iterable[Rule]) -> DerivationTree:
    """Rebuild a tree from the rules of a leftmost derivation."""
    root = Node(start)
    pending = [root]
    for rule in rules:
        if not pending:
            raise TreeError("derivation has more steps than open symbols")
        node = pending.pop()
        if node.label != rule.head:
            raise TreeError(f"rule {rule} applied to {node.label}")
        if rule.is_leaf:
            node.children = [Node(rule.vector)]
        else:
            a, b = Node(rule.left), Node(rule.right)
            node.children = [a, b]
            pending.append(b)
            pending.append(a)
    if pending:
        raise TreeError("derivation is unfinished")
    return DerivationTree(root)


def realize_parikh(counts: Mapping[Rule, int], root_symbol: Hashable, hole_symbol: Hashable | None,
                   label: Callable[[Hashable], str] = str, budget: int = DEFAULT_NODE_BUDGET
                   ) -> DerivationTree:
    """Build a tree whose rule multiset is exactly ``counts``.

    Symbols may be arbitrary hashables (e.g. side-tagged names); ``label``
    maps them to node labels.  With ``hole_symbol`` the result is a segment
    whose open leaf carries that symbol.  Greedy expansion keeps every rule
    with budget left reachable from the open symbols, which is enough for a
    degree-balanced multiset to be realised exactly.
    """
    remaining = {r: c for r, c in counts.items() if c > 0}
    if any(c < 0 for c in counts.values()):
        raise UnrealizableParikh("negative rule count")
    by_head: dict[Hashable, list[Rule]] = {}
    for rule in sorted(remaining, key=lambda r: (repr(r.head), r.is_leaf, repr(r.children), repr(r.vector))):
        by_head.setdefault(rule.head, []).append(rule)
    end = "__end__"
    if hole_symbol is not None:
        remaining[end] = 1
        by_head.setdefault(hole_symbol, []).append(end)
    _check_balance(remaining, root_symbol, hole_symbol, end)
    total = sum(remaining.values())
    if total > budget:
        raise NodeBudgetExceeded(budget)

    open_count: Counter = Counter()
    root = Node(label(root_symbol))
    stack: list[tuple[Node, Hashable]] = [(root, root_symbol)]
    open_count[root_symbol] += 1
    made = 1

    def reachable_ok(extra: Iterable[Hashable]) -> bool:
        seen = {s for s, c in open_count.items() if c > 0}
        seen.update(extra)
        frontier = list(seen)
        while frontier:
            s = frontier.pop()
            for rule in by_head.get(s, ()):
                if remaining.get(rule, 0) <= 0 or rule == end or rule.is_leaf:
                    continue
                for child in rule.children:
                    if child not in seen:
                        seen.add(child)
                        frontier.append(child)
        return all(c <= 0 or (r == end and hole_symbol in seen) or (r != end and r.head in seen)
                   for r, c in remaining.items())

    while stack:
        node, symbol = stack.pop()
        open_count[symbol] -= 1
        chosen = None
        for rule in by_head.get(symbol, ()):
            if remaining.get(rule, 0) <= 0:
                continue
            remaining[rule] -= 1
            kids = () if rule == end or rule.is_leaf else rule.children
            needs_check = remaining[rule] == 0 or open_count[symbol] == 0
            if not needs_check or reachable_ok(kids):
                chosen = rule
                break
            remaining[rule] += 1
        if chosen is None:
            raise UnrealizableParikh(f"no usable rule for {symbol!r}")
        if chosen == end:
            continue
        if chosen.is_leaf:
            node.children = [Node(chosen.vector)]
            made += 1
            continue
        a, b = chosen.children
        na, nb = Node(label(a)), Node(label(b))
        node.children = [na, nb]
        made += 2
        if made > budget:
            raise NodeBudgetExceeded(budget)
        open_count[a] += 1
        open_count[b] += 1
        stack.append((nb, b))
        stack.append((na, a))
    leftover = {r: c for r, c in remaining.items() if c > 0}
    if leftover:
        raise UnrealizableParikh(f"{sum(leftover.values())} rule uses could not be placed")
    return DerivationTree(root)


def _check_balance(remaining, root_symbol, hole_symbol, end) -> None:
    balance: Counter = Counter()
    balance[root_symbol] += 1
    for rule, c in remaining.items():
        if rule == end:
            balance[hole_symbol] -= c
            continue
        balance[rule.head] -= c
        if not rule.is_leaf:
            for child in rule.children:
                balance[child] += c
    bad = {s: v for s, v in balance.items() if v != 0}
    if bad:
        raise UnrealizableParikh(f"rule counts are not degree balanced: {bad}")


# -- text form ---------------------------------------------------------------

def _terminal_text(vector: Vector) -> str:
    return ",".join(str(x) for x in vector)


def serialize_tree(tree: DerivationTree, configs: bool = False) -> str:
    out: list[str] = []
    stack: list = [tree.root]
    while stack:
        item = stack.pop()
        if isinstance(item, str):
            out.append(item)
            continue
        node = item
        if node.is_terminal:
            out.append(_terminal_text(node.label))
            continue
        tag = node.label
        if configs and node.left is not None:
            tag += f"@{_terminal_text(node.left)}:{_terminal_text(node.right)}"
        if not node.children:
            out.append(tag)
            continue
        out.append("(" + tag)
        stack.append(")")
        for child in reversed(node.children):
            stack.append(child)
            stack.append(" ")
    return "".join(out)


def parse_tree(text: str) -> DerivationTree:
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def atom(token):
        try:
            return tuple(int(x) for x in token.split(","))
        except ValueError:
            return token.split("@", 1)[0]

    stack: list[Node] = []
    root = None
    while pos < len(tokens):
        token = tokens[pos]
        pos += 1
        if token == "(":
            node = Node(atom(tokens[pos]))
            pos += 1
            if stack:
                stack[-1].children.append(node)
            else:
                root = node
            stack.append(node)
        elif token == ")":
            if not stack:
                raise TreeError("unbalanced parenthesis")
            stack.pop()
        else:
            node = Node(atom(token))
            if stack:
                stack[-1].children.append(node)
            elif root is None:
                root = node
            else:
                raise TreeError("trailing tokens")
    if stack or root is None:
        raise TreeError("unbalanced parenthesis")
    return DerivationTree(root)
