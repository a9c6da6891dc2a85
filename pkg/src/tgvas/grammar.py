"""Grammar vector addition systems in Chomsky normal form.

A grammar has binary rules ``X -> A B`` and leaf rules ``X -> v`` where ``v``
is an integer vector.  Text format::

    gvas 1
    start X
    X -> A Y
    A -> -1
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable

Vector = tuple[int, ...]


class GrammarError(ValueError):
    """Malformed grammar input.  ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class EmptyGrammarError(GrammarError):
    pass


@dataclass(frozen=True)
class Rule:
    head: str
    children: tuple[str, str] | None = None
    vector: Vector | None = None

    def __post_init__(self):
        if (self.children is None) == (self.vector is None):
            raise GrammarError(f"rule for {self.head} needs exactly one body")

    @staticmethod
    def binary(head: str, left: str, right: str) -> "Rule":
        return Rule(head, (left, right), None)

    @staticmethod
    def leaf(head: str, vector: Iterable[int]) -> "Rule":
        return Rule(head, None, tuple(int(x) for x in vector))

    @property
    def is_leaf(self) -> bool:
        return self.vector is not None

    @property
    def left(self) -> str:
        return self.children[0]

    @property
    def right(self) -> str:
        return self.children[1]

    def sort_key(self):
        if self.is_leaf:
            return (self.head, 1, (), self.vector)
        return (self.head, 0, self.children, ())

    def __str__(self):
        if self.is_leaf:
            return f"{self.head} -> {' '.join(str(x) for x in self.vector)}"
        return f"{self.head} -> {self.left} {self.right}"


@dataclass(frozen=True)
class GrammarSize:
    symbol_count: int
    max_norm: int
    size: int


@dataclass(frozen=True)
class Grammar:
    dim: int
    nonterminals: tuple[str, ...]
    rules: tuple[Rule, ...]
    start: str

    def __post_init__(self):
        if self.dim < 1:
            raise GrammarError("dimension must be positive")
        names = set(self.nonterminals)
        if len(names) != len(self.nonterminals):
            raise GrammarError("nonterminals listed twice")
        if self.start not in names:
            raise GrammarError(f"start symbol {self.start} is not a nonterminal")
        seen = set()
        for rule in self.rules:
            if rule in seen:
                raise GrammarError(f"duplicate rule {rule}")
            seen.add(rule)
            if rule.head not in names:
                raise GrammarError(f"undeclared symbol {rule.head}")
            if rule.is_leaf:
                if len(rule.vector) != self.dim:
                    raise GrammarError(f"dimension mismatch in {rule}")
            else:
                for child in rule.children:
                    if child not in names:
                        raise GrammarError(f"undeclared symbol {child}")

    @cached_property
    def rules_by_head(self) -> dict[str, tuple[Rule, ...]]:
        table: dict[str, list[Rule]] = {x: [] for x in self.nonterminals}
        for rule in self.rules:
            table[rule.head].append(rule)
        return {x: tuple(rs) for x, rs in table.items()}

    @cached_property
    def rule_index(self) -> dict[Rule, int]:
        return {rule: i for i, rule in enumerate(self.rules)}

    @cached_property
    def terminals(self) -> tuple[Vector, ...]:
        found = []
        for rule in self.rules:
            if rule.is_leaf and rule.vector not in found:
                found.append(rule.vector)
        return tuple(found)

    def with_start(self, start: str) -> "Grammar":
        return Grammar(self.dim, self.nonterminals, self.rules, start)

    def to_text(self) -> str:
        lines = [f"gvas {self.dim}", f"start {self.start}"]
        lines += [str(rule) for rule in self.rules]
        return "\n".join(lines) + "\n"


def parse_grammar(text: str) -> Grammar:
    dim = None
    start = None
    start_line = None
    order: list[str] = []
    heads: set[str] = set()
    raw_rules: list[tuple[int, str, list[str]]] = []

    def note(symbol):
        if symbol not in order:
            order.append(symbol)

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        if tokens[0] == "gvas":
            if dim is not None:
                raise GrammarError("repeated gvas header", lineno)
            if len(tokens) != 2:
                raise GrammarError("expected 'gvas <dimension>'", lineno)
            try:
                dim = int(tokens[1])
            except ValueError:
                raise GrammarError(f"bad dimension {tokens[1]!r}", lineno) from None
            if dim < 1:
                raise GrammarError("dimension must be positive", lineno)
            continue
        if dim is None:
            raise GrammarError("missing 'gvas <dimension>' header", lineno)
        if tokens[0] == "start":
            if len(tokens) != 2:
                raise GrammarError("expected 'start <symbol>'", lineno)
            if start is not None:
                raise GrammarError("repeated start line", lineno)
            start, start_line = tokens[1], lineno
            note(start)
            continue
        if len(tokens) < 3 or tokens[1] != "->":
            raise GrammarError(f"cannot parse {line!r}", lineno)
        head, body = tokens[0], tokens[2:]
        if _is_int(head):
            raise GrammarError(f"rule head {head!r} is not a symbol", lineno)
        note(head)
        heads.add(head)
        raw_rules.append((lineno, head, body))

    if dim is None:
        raise GrammarError("missing 'gvas <dimension>' header")
    if start is None:
        raise GrammarError("missing start line")

    rules: list[Rule] = []
    seen: dict[Rule, int] = {}
    for lineno, head, body in raw_rules:
        if all(_is_int(tok) for tok in body):
            if len(body) != dim:
                raise GrammarError(
                    f"dimension mismatch: expected {dim} entries, got {len(body)}", lineno)
            rule = Rule.leaf(head, (int(tok) for tok in body))
        elif any(_is_int(tok) for tok in body):
            raise GrammarError("rule body mixes symbols and numbers", lineno)
        elif len(body) != 2:
            raise GrammarError(f"binary body expected, got {len(body)} symbols", lineno)
        else:
            for symbol in body:
                if symbol not in heads:
                    raise GrammarError(f"undeclared symbol {symbol}", lineno)
            rule = Rule.binary(head, body[0], body[1])
        if rule in seen:
            raise GrammarError(f"duplicate rule {rule} (first at line {seen[rule]})", lineno)
        seen[rule] = lineno
        rules.append(rule)
    if start not in heads:
        raise GrammarError(f"undeclared symbol {start}", start_line)
    for _, head, body in raw_rules:
        for symbol in body:
            if not _is_int(symbol):
                note(symbol)
    nonterminals = tuple(x for x in order if x in heads)
    return Grammar(dim, nonterminals, tuple(rules), start)


def load_grammar(path) -> Grammar:
    with open(path, encoding="utf-8") as handle:
        return parse_grammar(handle.read())


def _is_int(token: str) -> bool:
    try:
        int(token)
    except ValueError:
        return False
    return True


def productive_symbols(grammar: Grammar) -> set[str]:
    productive: set[str] = set()
    changed = True
    while changed:
        changed = False
        for rule in grammar.rules:
            if rule.head in productive:
                continue
            if rule.is_leaf or all(c in productive for c in rule.children):
                productive.add(rule.head)
                changed = True
    return productive


def make_proper(grammar: Grammar) -> Grammar:
    """Keep only symbols that are reachable from the start and productive."""
    productive = productive_symbols(grammar)
    if grammar.start not in productive:
        raise EmptyGrammarError(f"start symbol {grammar.start} derives no complete tree")
    usable = [r for r in grammar.rules
              if r.head in productive and (r.is_leaf or all(c in productive for c in r.children))]
    by_head: dict[str, list[Rule]] = {}
    for rule in usable:
        by_head.setdefault(rule.head, []).append(rule)
    reachable = {grammar.start}
    stack = [grammar.start]
    while stack:
        symbol = stack.pop()
        for rule in by_head.get(symbol, ()):
            if rule.is_leaf:
                continue
            for child in rule.children:
                if child not in reachable:
                    reachable.add(child)
                    stack.append(child)
    nonterminals = tuple(x for x in grammar.nonterminals if x in reachable)
    rules = tuple(r for r in usable if r.head in reachable)
    return Grammar(grammar.dim, nonterminals, rules, grammar.start)


def induced_sub_gvas(grammar: Grammar, symbol: str) -> Grammar:
    """The proper grammar of everything derivable from ``symbol``."""
    if symbol not in grammar.nonterminals:
        raise GrammarError(f"undeclared symbol {symbol}")
    return make_proper(grammar.with_start(symbol))


def mirror(grammar: Grammar) -> Grammar:
    """Swap binary bodies and negate terminals.  Applying it twice is the identity."""
    rules = []
    for rule in grammar.rules:
        if rule.is_leaf:
            rules.append(Rule.leaf(rule.head, (-x for x in rule.vector)))
        else:
            rules.append(Rule.binary(rule.head, rule.right, rule.left))
    return Grammar(grammar.dim, grammar.nonterminals, tuple(rules), grammar.start)


def grammar_size(grammar: Grammar) -> GrammarSize:
    count = len(grammar.nonterminals) + len(grammar.terminals) + len(grammar.rules)
    norm = max((sum(abs(x) for x in v) for v in grammar.terminals), default=0)
    return GrammarSize(count, norm, count * max(norm, 1))


def grammar_from_rules(dim: int, start: str, rules: Iterable[Rule]) -> Grammar:
    """Build a grammar from rules, declaring nonterminals in first-seen order."""
    rules = tuple(rules)
    order = [start]
    for rule in rules:
        if rule.head not in order:
            order.append(rule.head)
    for rule in rules:
        if not rule.is_leaf:
            for child in rule.children:
                if child not in order:
                    order.append(child)
    return Grammar(dim, tuple(order), rules, start)
