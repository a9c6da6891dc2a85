"""Command-line front end.

Every command builds one report record {command, config, verdict, artifacts}.
``--json`` prints it as canonical JSON; otherwise the same record is printed
as ``key: value`` lines, so both modes carry the same facts.

Exit codes: 0 Yes/Accept/ok, 1 No/Reject, 2 Unknown, 64 usage, 65 input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .derivation import DerivationTree, NodeBudgetExceeded, serialize_tree
from .diophantine import DioSystem, hilbert_basis, minimal_solutions, pottier_bound, system_from_matrix
from .grammar import Grammar, GrammarError, load_grammar
from .klm import CaptureError, klm_from_json, klm_to_json
from .oracle import OracleBounds, bounded_cover, bounded_reach
from .refine import PipelineAborted, PipelineBounds, refinement_pipeline, verify_certificate
from .structure import classify_rule, index_table, is_thin, production_graph

EXIT_OK, EXIT_NO, EXIT_UNKNOWN, EXIT_USAGE, EXIT_INPUT = 0, 1, 2, 64, 65
VERDICT_EXIT = {"Yes": EXIT_OK, "Accept": EXIT_OK, "ok": EXIT_OK, "No": EXIT_NO, "Reject": EXIT_NO,
                "Unknown": EXIT_UNKNOWN}


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError(f"bound must be positive, got {value}")
    return value


def _vector(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.replace(",", " ").split())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tgvas", description="Analysis and reachability certificates for thin GVAS.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--json", action="store_true", dest="json_output", help="print a JSON report")

    def search(p):
        p.add_argument("--max-counter", type=_positive, default=4096)
        p.add_argument("--max-stack", type=_positive, default=256)
        p.add_argument("--max-steps", type=_positive, default=1_000_000)

    def refinement(p):
        search(p)
        p.add_argument("--pump-length-bound", type=_positive, default=64)
        p.add_argument("--delta-cap", type=_positive, default=4096)
        p.add_argument("--node-budget", type=_positive, default=1_000_000)

    def instance(p):
        p.add_argument("--source", type=_vector, required=True)
        p.add_argument("--target", type=_vector, required=True)

    p = sub.add_parser("analyze", help="SCCs, rule classes, thinness and index table")
    p.add_argument("grammar")
    common(p)

    for name in ("reach", "cover"):
        p = sub.add_parser(name, help=f"bounded {name}ability oracle")
        p.add_argument("grammar")
        instance(p)
        search(p)
        p.add_argument("--dump-tree", action="store_true")
        common(p)

    p = sub.add_parser("hilbert", help="minimal solutions of a linear system 'c1 ... cn = b'")
    p.add_argument("system")
    common(p)

    p = sub.add_parser("pipeline", help="build a perfect certificate from an oracle witness")
    p.add_argument("grammar")
    instance(p)
    refinement(p)
    p.add_argument("--output", help="write the certificate here")
    p.add_argument("--trace", dest="trace_path", help="write the refinement trace here")
    p.add_argument("--dump-klm", action="store_true", help="include the certificate in the report")
    p.add_argument("--dump-tree", action="store_true")
    common(p)

    p = sub.add_parser("certify", help="check a certificate against an instance")
    p.add_argument("certificate")
    p.add_argument("grammar")
    instance(p)
    refinement(p)
    p.add_argument("--dump-tree", action="store_true")
    common(p)
    return parser


def _oracle_bounds(args) -> OracleBounds:
    return OracleBounds(args.max_counter, args.max_stack, args.max_steps)


def _pipeline_bounds(args) -> PipelineBounds:
    return PipelineBounds(_oracle_bounds(args), args.pump_length_bound, args.delta_cap, args.node_budget)


def _config(args) -> dict:
    skip = {"json_output"}
    return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(vars(args).items()) if k not in skip}


def _read_grammar(path: str) -> Grammar:
    try:
        return load_grammar(path)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    except GrammarError as exc:
        raise InputError(f"{path}: {exc}") from None


def _check_instance(grammar: Grammar, args) -> None:
    for flag, vec in (("--source", args.source), ("--target", args.target)):
        if len(vec) != grammar.dim:
            raise InputError(f"{flag} has {len(vec)} entries but the grammar has dimension {grammar.dim}")
        if min(vec) < 0:
            raise InputError(f"{flag} must be nonnegative")


def _require_one_dimension(grammar: Grammar) -> None:
    if grammar.dim != 1:
        raise InputError(f"refinement needs a one-dimensional grammar, got dimension {grammar.dim}")


def _tree_artifacts(tree: DerivationTree | None, args) -> dict:
    if tree is None:
        return {}
    found = {"tree_size": tree.size()}
    if getattr(args, "dump_tree", False):
        found["tree"] = serialize_tree(tree)
    return found


def cmd_analyze(args):
    grammar = _read_grammar(args.grammar)
    pg = production_graph(grammar)
    nonterminals = set(grammar.nonterminals)
    sccs = [[x for x in members if x in nonterminals] for members in pg.members]
    artifacts = {
        "nonterminals": len(grammar.nonterminals),
        "rules": len(grammar.rules),
        "scc_of": {x: pg.scc_id[x] for x in grammar.nonterminals},
        "nontrivial_sccs": [list(m) for m in pg.nontrivial_sccs()],
        "sccs": [m for m in sccs if m],
        "rule_classes": {str(r): classify_rule(pg, r).value for r in grammar.rules},
        "thin": is_thin(grammar),
    }
    if artifacts["thin"]:
        table = index_table(grammar, pg)
        artifacts["index"] = {x: table[x] for x in grammar.nonterminals}
        artifacts["grammar_index"] = table.grammar_index
    return "ok", artifacts


def cmd_search(args):
    grammar = _read_grammar(args.grammar)
    _check_instance(grammar, args)
    run = bounded_reach if args.command == "reach" else bounded_cover
    verdict = run(grammar, args.source, args.target, _oracle_bounds(args))
    artifacts = {}
    if verdict.kind == "Yes":
        artifacts.update(_tree_artifacts(verdict.witness, args))
    if verdict.kind == "Unknown":
        artifacts["exhausted_bound"] = verdict.exhausted_bound
    return verdict.kind, artifacts


def _read_system(path: str) -> DioSystem:
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from None
    matrix, rhs = [], []
    for lineno, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        left, sep, right = line.partition("=")
        try:
            row = [int(x) for x in left.split()]
            value = int(right) if sep else 0
        except ValueError:
            raise InputError(f"{path}: line {lineno}: expected 'c1 ... cn = b'") from None
        if matrix and len(row) != len(matrix[0]):
            raise InputError(f"{path}: line {lineno}: expected {len(matrix[0])} coefficients")
        matrix.append(row)
        rhs.append(value)
    if not matrix or not matrix[0]:
        raise InputError(f"{path}: no equations")
    return system_from_matrix(matrix, rhs)


def cmd_hilbert(args):
    system = _read_system(args.system)
    if system.is_homogeneous:
        rows = [list(e) for e in hilbert_basis(system).elements]
    else:
        rows = [[s[v] for v in system.variables] for s in minimal_solutions(system)]
    rows.sort()
    return "ok", {"homogeneous": system.is_homogeneous, "pottier_bound": pottier_bound(system),
                  "count": len(rows), "solutions": rows}


def cmd_pipeline(args):
    grammar = _read_grammar(args.grammar)
    _check_instance(grammar, args)
    _require_one_dimension(grammar)
    bounds = _pipeline_bounds(args)
    verdict = bounded_reach(grammar, args.source, args.target, bounds.oracle)
    if verdict.kind != "Yes":
        extra = {"exhausted_bound": verdict.exhausted_bound} if verdict.kind == "Unknown" else {}
        return verdict.kind, {"witness": "none", **extra}
    try:
        result = refinement_pipeline(grammar, args.source, args.target, verdict.witness, bounds)
    except GrammarError as exc:
        raise InputError(str(exc)) from None
    except PipelineAborted as exc:
        return "Unknown", {"aborted": str(exc)}
    certificate = klm_to_json(result.klm)
    trace = [str(e) for e in result.trace]
    if args.output:
        Path(args.output).write_text(json.dumps(certificate, indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")
    if args.trace_path:
        Path(args.trace_path).write_text("".join(line + "\n" for line in trace), encoding="utf-8")
    artifacts = {"components": len(result.klm.components),
                 "rank_trace": [list(r) for r in result.rank_trace],
                 "perfectness": result.report.to_json(), "trace": trace}
    artifacts.update(_tree_artifacts(verdict.witness, args))
    if args.dump_klm:
        artifacts["certificate"] = certificate
    return "Yes", artifacts


def cmd_certify(args):
    grammar = _read_grammar(args.grammar)
    _check_instance(grammar, args)
    _require_one_dimension(grammar)
    try:
        data = json.loads(Path(args.certificate).read_text(encoding="utf-8"))
        kt = klm_from_json(data)
    except OSError as exc:
        raise InputError(f"{args.certificate}: {exc.strerror}") from None
    except (ValueError, KeyError, TypeError, CaptureError, GrammarError) as exc:
        raise InputError(f"{args.certificate}: malformed certificate ({exc})") from None
    try:
        outcome = verify_certificate(kt, grammar, args.source, args.target, _pipeline_bounds(args))
    except NodeBudgetExceeded as exc:
        return "Unknown", {"reason": str(exc)}
    if outcome.kind == "Accept":
        return "Accept", _tree_artifacts(outcome.tree, args)
    return outcome.kind, {"reason": outcome.reason}


COMMANDS = {"analyze": cmd_analyze, "reach": cmd_search, "cover": cmd_search, "hilbert": cmd_hilbert,
            "pipeline": cmd_pipeline, "certify": cmd_certify}


def _flatten(prefix: str, value, out: list[str]) -> None:
    if isinstance(value, dict) and value:
        for key in value:
            _flatten(f"{prefix}.{key}" if prefix else str(key), value[key], out)
    elif isinstance(value, list) and value and all(isinstance(v, (dict, list)) for v in value) \
            and not all(isinstance(v, list) and all(isinstance(x, int) for x in v) for v in value):
        for i, item in enumerate(value):
            _flatten(f"{prefix}[{i}]", item, out)
    else:
        out.append(f"{prefix}: {json.dumps(value, sort_keys=True)}")


def render_text(report: dict) -> str:
    lines = [f"verdict: {report['verdict']}"]
    _flatten("", report["artifacts"], lines)
    return "\n".join(lines) + "\n"


def run(argv: list[str] | None = None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        verdict, artifacts = COMMANDS[args.command](args)
    except InputError as exc:
        stderr.write(f"input error: {exc}\n")
        return EXIT_INPUT
    report = {"command": args.command, "config": _config(args), "verdict": verdict, "artifacts": artifacts}
    if args.json_output:
        stdout.write(json.dumps(report, sort_keys=True) + "\n")
    else:
        stdout.write(render_text(report))
    return VERDICT_EXIT[verdict]


def main() -> None:
    sys.exit(run())
