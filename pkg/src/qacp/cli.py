"""Command-line entry point.

Machine-readable JSON goes to stdout, human diagnostics to stderr.  Exit
codes: 0 success (and `related` for bisim/verify), 1 not related, 2 any
toolkit error (the JSON payload names it).  Outputs are deterministic:
fixed orderings everywhere, keys sorted.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import quantum
from .equivalence import bisim, minimize
from .errors import QacpError
from .model import Model
from .parser import parse_spec, parse_term
from .rewrite import SYSTEM_NAMES, make_system, normalize
from .semantics import build_graph, linearize, to_aut, to_dot, to_json_dict
from .terms import format_term
from .verify import VerificationJob, run_job

_MODES = ("strong", "branching", "rooted-branching")


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True, separators=(", ", ": ")) + "\n")


def _load_model(path: str) -> Model:
    with open(path, "r", encoding="utf-8") as handle:
        return parse_spec(handle.read())


def _resolve_term(model: Model, text: str):
    """A --term/--impl/--spec argument: a named term, a recursion variable,
    or an inline expression."""
    name = text.strip()
    if name in model.named_terms:
        return model.named_terms[name]
    return parse_term(text, model)


def _resolve_action_set(model: Model, text: str) -> frozenset[str]:
    ids: set[str] = set()
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if chunk in model.action_sets:
            ids |= model.action_sets[chunk]
        else:
            ids.add(chunk)
    return frozenset(ids)


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qacp",
        description="Quantum process-algebra verification toolkit",
    )
    parser.add_argument(
        "--tolerance",
        type=float,
        default=None,
        help="override the 1e-9 state-equality threshold",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_parse = sub.add_parser("parse", help="load and validate a spec file")
    p_parse.add_argument("file")

    p_lts = sub.add_parser("lts", help="build the configuration graph of a term")
    p_lts.add_argument("file")
    p_lts.add_argument("--term", required=True, help="term name or expression")
    p_lts.add_argument("--out", help="write Aldebaran .aut")
    p_lts.add_argument("--dot", help="write GraphViz DOT")
    p_lts.add_argument("--json", dest="json_out", help="write the JSON trace format")
    p_lts.add_argument("--dump-states", action="store_true",
                       help="embed state matrices in the JSON output")
    p_lts.add_argument("--max-states", type=int, default=10_000)
    p_lts.add_argument("--max-depth", type=int, default=None)
    p_lts.add_argument("--ruleset", default="full",
                       choices=("bqpa", "qpap", "aqcp", "aqcp_tau", "full"))
    p_lts.add_argument("--linearize", action="store_true",
                       help="also print the linearized recursive spec")

    p_norm = sub.add_parser("normalize", help="rewrite a term to normal form")
    p_norm.add_argument("file")
    p_norm.add_argument("--term", required=True)
    p_norm.add_argument("--system", default="aqcp-tau", choices=SYSTEM_NAMES)
    p_norm.add_argument("--budget", type=int, default=100_000)
    p_norm.add_argument("--strategy", default="innermost",
                        choices=("innermost", "outermost"))
    p_norm.add_argument("--trace-rewrites", action="store_true",
                        help="emit (rule, position) steps as JSON lines")

    p_bisim = sub.add_parser("bisim", help="decide equivalence of two terms")
    p_bisim.add_argument("file")
    p_bisim.add_argument("--left", required=True)
    p_bisim.add_argument("--right", required=True)
    p_bisim.add_argument("--mode", default="strong", choices=_MODES)
    p_bisim.add_argument("--max-states", type=int, default=10_000)

    p_min = sub.add_parser("minimize", help="quotient a term's graph")
    p_min.add_argument("file")
    p_min.add_argument("--term", required=True)
    p_min.add_argument("--mode", default="strong", choices=_MODES)
    p_min.add_argument("--max-states", type=int, default=10_000)
    p_min.add_argument("--out", help="write the quotient as .aut")

    p_verify = sub.add_parser("verify", help="check external behaviour against a spec")
    p_verify.add_argument("file")
    p_verify.add_argument("--impl", required=True, help="implementation term")
    p_verify.add_argument("--spec", required=True, help="specification term name")
    p_verify.add_argument("--hide", default="", help="comma list of actions or set names")
    p_verify.add_argument("--internal", default="", help="comma list of actions or set names")
    p_verify.add_argument("--mode", default="rooted-branching", choices=_MODES)
    p_verify.add_argument("--max-states", type=int, default=10_000)

    return parser


def _cmd_parse(args) -> int:
    model = _load_model(args.file)
    _emit(
        {
            "registers": [
                {"name": r.name, "dim": r.dim, "public": r.public}
                for r in model.registers
            ],
            "quantum_actions": sorted(model.quantum_alphabet),
            "classical_actions": sorted(model.classical_alphabet),
            "gamma": sorted(
                f"{a} * {b} -> {c}" for (a, b), c in model.gamma.items() if a <= b
            ),
            "specs": [
                {"variables": list(s.variables()), "linear": s.is_linear()}
                for s in model.specs
            ],
            "terms": sorted(model.named_terms),
            "sets": {k: sorted(v) for k, v in sorted(model.action_sets.items())},
        }
    )
    return 0


def _cmd_lts(args) -> int:
    model = _load_model(args.file)
    term = _resolve_term(model, args.term)
    graph = build_graph(
        term,
        model,
        max_states=args.max_states,
        max_depth=args.max_depth,
        ruleset=args.ruleset,
    )
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(to_aut(graph))
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as handle:
            handle.write(to_dot(graph))
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as handle:
            json.dump(to_json_dict(graph, include_states=args.dump_states), handle,
                      sort_keys=True)
            handle.write("\n")
    payload = {
        "nodes": graph.node_count,
        "edges": graph.edge_count,
        "terminating": len(graph.terminating),
        "deterministic": graph.is_deterministic(),
    }
    if args.linearize:
        spec = linearize(graph)
        payload["linearized"] = [
            {"var": var, "rhs": format_term(rhs)} for var, rhs in spec.equations
        ]
    _emit(payload)
    return 0


def _cmd_normalize(args) -> int:
    model = _load_model(args.file)
    term = _resolve_term(model, args.term)
    system = make_system(args.system, model)
    trace = [] if args.trace_rewrites else None
    result = normalize(term, system, budget=args.budget, strategy=args.strategy,
                       trace=trace)
    if trace is not None:
        for rule, position in trace:
            _emit({"rule": rule, "position": list(position)})
    _emit({"normal_form": format_term(result)})
    return 0


def _cmd_bisim(args) -> int:
    model = _load_model(args.file)
    left = build_graph(_resolve_term(model, args.left), model, max_states=args.max_states)
    right = build_graph(_resolve_term(model, args.right), model, max_states=args.max_states)
    verdict = bisim(left, right, args.mode)
    _emit(verdict.to_json_dict())
    return 0 if verdict.related else 1


def _cmd_minimize(args) -> int:
    model = _load_model(args.file)
    graph = build_graph(_resolve_term(model, args.term), model, max_states=args.max_states)
    quotient = minimize(graph, args.mode)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as handle:
            handle.write(to_aut(quotient))
    _emit(
        {
            "nodes": quotient.node_count,
            "edges": quotient.edge_count,
            "input_nodes": graph.node_count,
            "mode": args.mode,
        }
    )
    return 0


def _cmd_verify(args) -> int:
    model = _load_model(args.file)
    job = VerificationJob(
        impl=_resolve_term(model, args.impl),
        spec=_resolve_term(model, args.spec),
        hide=_resolve_action_set(model, args.hide),
        internal=_resolve_action_set(model, args.internal),
        model=model,
        mode=args.mode,
        max_states=args.max_states,
    )
    result = run_job(job)
    payload = result.verdict.to_json_dict()
    payload["minimized_nodes"] = result.minimized.node_count
    payload["impl_nodes"] = result.impl_graph.node_count
    _emit(payload)
    return 0 if result.verdict.related else 1


_COMMANDS = {
    "parse": _cmd_parse,
    "lts": _cmd_lts,
    "normalize": _cmd_normalize,
    "bisim": _cmd_bisim,
    "minimize": _cmd_minimize,
    "verify": _cmd_verify,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_arg_parser()
    args = parser.parse_args(argv)
    if args.tolerance is not None:
        quantum.PHYS_TOL = args.tolerance
    try:
        return _COMMANDS[args.command](args)
    except QacpError as exc:
        _emit({"error": exc.name, "detail": str(exc)})
        sys.stderr.write(f"error: {exc.name}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
