"""Bundled example grammars."""

from importlib import resources

from ..grammar import Grammar, parse_grammar

NAMES = ("running", "ack1", "ack2", "triv")


def fixture_text(name: str) -> str:
    return resources.files(__name__).joinpath(f"{name}.gvas").read_text(encoding="utf-8")


def fixture(name: str) -> Grammar:
    return parse_grammar(fixture_text(name))
