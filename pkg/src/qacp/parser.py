"""Spec-file and term-expression parser, plus the model serializer.

The concrete grammar (see docs/grammar.md for the full reference):

    registers { q : 2 private  c }          # dimension defaults to 2, tag to public
    actions   { quantum h on q = [[...]]    # one matrix, or { m1, m2, ... }
                classical a }
    gamma     { a * b = c }                 # symmetric closure applied at load
    sets      { H = { a, b } }              # named action sets for encap/tau
    spec      { X = a . X + b }             # one block per recursive spec
    term      main = encap{H}(X || Y)
    init      = ket 0 0                     # or: init = matrix [[...]]

Complex entries are written `a+bi` with decimal (optionally exponent)
parts; matrices are row-major bracketed lists.  `#` starts a comment.

Term operators, loosest to tightest: `+`, then the merge family
(`||` merge, `|_` left merge, `|` communication merge; mutually
non-associative, parenthesize), then `.`, then `encap{..}(..)`,
`tau{..}(..)`, `rename{a->b}(..)` and the constants `delta` and `tau`.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ParseError, RenameKindMismatch, UndeclaredAction
from .model import RESERVED_IDS, Model, Register, make_model
from .quantum import KrausSet, QuantumState, ket_state
from .terms import (
    Abstract,
    Alt,
    ClassicalAction,
    Deadlock,
    Encap,
    LeftMerge,
    Merge,
    ProcessTerm,
    QuantumAction,
    RecVar,
    RecursiveSpec,
    Rename,
    Seq,
    Silent,
    CommMerge,
    build_alt,
    format_term,
)

__all__ = ["parse_spec", "parse_term", "format_model", "format_term"]

_TOKEN_RE = re.compile(
    r"""
    (?P<WS>\s+|\#[^\n]*)
  | (?P<NUM>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?i?)
  | (?P<ID>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<OP>->|\|\||\|_|[+.|*=:{}()\[\],\-])
    """,
    re.VERBOSE,
)

_MERGE_OPS = {"||": Merge, "|_": LeftMerge, "|": CommMerge}


@dataclass(frozen=True)
class Token:
    kind: str  # NUM | ID | OP | EOF
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[Token]:
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m or m.start() != pos:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        lexeme = m.group(0)
        if m.lastgroup != "WS":
            tokens.append(Token(m.lastgroup, lexeme, line, col))
        newlines = lexeme.count("\n")
        if newlines:
            line += newlines
            col = len(lexeme) - lexeme.rfind("\n")
        else:
            col += len(lexeme)
        pos = m.end()
    tokens.append(Token("EOF", "", line, col))
    return tokens


class _Stream:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.i = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.peek()
        if tok.kind != "EOF":
            self.i += 1
        return tok

    def at(self, text: str) -> bool:
        return self.peek().text == text and self.peek().kind != "EOF"

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.next()
            return True
        return False

    def expect(self, text: str) -> Token:
        tok = self.peek()
        if tok.text != text or tok.kind == "EOF":
            raise ParseError(f"expected {text!r}, found {tok.text!r}", tok.line, tok.col)
        return self.next()

    def expect_id(self, what: str = "identifier") -> Token:
        tok = self.peek()
        if tok.kind != "ID":
            raise ParseError(f"expected {what}, found {tok.text!r}", tok.line, tok.col)
        if tok.text in RESERVED_IDS:
            raise ParseError(f"{tok.text!r} is a reserved word", tok.line, tok.col)
        return self.next()

    def expect_int(self, what: str = "integer") -> int:
        tok = self.peek()
        if tok.kind != "NUM" or tok.text.endswith("i") or "." in tok.text or "e" in tok.text.lower():
            raise ParseError(f"expected {what}, found {tok.text!r}", tok.line, tok.col)
        self.next()
        return int(tok.text)


# -- term expressions ----------------------------------------------------

class _Resolver:
    """Resolves identifiers against declared alphabets, recursion variables
    and named action sets."""

    def __init__(self, quantum, classical, variables, action_sets):
        self.quantum = set(quantum)
        self.classical = set(classical)
        self.variables = set(variables)
        self.action_sets = dict(action_sets)

    @classmethod
    def for_model(cls, model: Model) -> "_Resolver":
        return cls(
            model.quantum_alphabet,
            model.classical_alphabet,
            [v for spec in model.specs for v in spec.variables()],
            model.action_sets,
        )

    def atom(self, tok: Token) -> ProcessTerm:
        name = tok.text
        if name in self.quantum:
            return QuantumAction(name)
        if name in self.classical:
            return ClassicalAction(name)
        if name in self.variables:
            return RecVar(name)
        raise UndeclaredAction(f"{name} (line {tok.line}, column {tok.col})")

    def action_ids(self, tok: Token) -> frozenset[str]:
        name = tok.text
        if name in self.action_sets:
            return self.action_sets[name]
        if name in self.quantum or name in self.classical:
            return frozenset([name])
        raise UndeclaredAction(f"{name} (line {tok.line}, column {tok.col})")

    def kind(self, name: str) -> str:
        return "quantum" if name in self.quantum else "classical"


def _parse_expr(ts: _Stream, rs: _Resolver) -> ProcessTerm:
    summands = [_parse_merge(ts, rs)]
    while ts.accept("+"):
        summands.append(_parse_merge(ts, rs))
    return build_alt(summands)


def _parse_merge(ts: _Stream, rs: _Resolver) -> ProcessTerm:
    left = _parse_seq(ts, rs)
    tok = ts.peek()
    if tok.text in _MERGE_OPS:
        ts.next()
        right = _parse_seq(ts, rs)
        after = ts.peek()
        if after.text in _MERGE_OPS:
            raise ParseError(
                "merge operators do not associate; parenthesize the chain",
                after.line,
                after.col,
            )
        return _MERGE_OPS[tok.text](left, right)
    return left


def _parse_seq(ts: _Stream, rs: _Resolver) -> ProcessTerm:
    parts = [_parse_unary(ts, rs)]
    while ts.accept("."):
        parts.append(_parse_unary(ts, rs))
    out = parts[-1]
    for p in reversed(parts[:-1]):
        out = Seq(p, out)
    return out


def _parse_id_set(ts: _Stream, rs: _Resolver) -> frozenset[str]:
    ts.expect("{")
    ids: set[str] = set()
    if not ts.at("}"):
        ids |= rs.action_ids(ts.expect_id("action or set name"))
        while ts.accept(","):
            ids |= rs.action_ids(ts.expect_id("action or set name"))
    ts.expect("}")
    return frozenset(ids)


def _parse_unary(ts: _Stream, rs: _Resolver) -> ProcessTerm:
    tok = ts.peek()
    if tok.text == "encap":
        ts.next()
        hide = _parse_id_set(ts, rs)
        ts.expect("(")
        body = _parse_expr(ts, rs)
        ts.expect(")")
        return Encap(hide, body)
    if tok.text == "tau":
        ts.next()
        if ts.at("{"):
            internal = _parse_id_set(ts, rs)
            ts.expect("(")
            body = _parse_expr(ts, rs)
            ts.expect(")")
            return Abstract(internal, body)
        return Silent()
    if tok.text == "rename":
        ts.next()
        ts.expect("{")
        pairs = []
        while True:
            src = ts.expect_id("action name")
            ts.expect("->")
            dst = ts.expect_id("action name")
            for t in (src, dst):
                rs.atom(t)  # must be declared actions
            if rs.kind(src.text) != rs.kind(dst.text):
                raise RenameKindMismatch(
                    f"rename {src.text} -> {dst.text} crosses the quantum/"
                    f"classical divide (line {src.line})"
                )
            pairs.append((src.text, dst.text))
            if not ts.accept(","):
                break
        ts.expect("}")
        ts.expect("(")
        body = _parse_expr(ts, rs)
        ts.expect(")")
        return Rename(tuple(sorted(pairs)), body)
    if tok.text == "delta":
        ts.next()
        return Deadlock()
    if tok.text == "(":
        ts.next()
        inner = _parse_expr(ts, rs)
        ts.expect(")")
        return inner
    if tok.kind == "ID":
        if tok.text in RESERVED_IDS:
            raise ParseError(f"{tok.text!r} is a reserved word", tok.line, tok.col)
        ts.next()
        return rs.atom(tok)
    raise ParseError(f"expected a term, found {tok.text!r}", tok.line, tok.col)


def parse_term(text: str, model: Model) -> ProcessTerm:
    """Parse a single term expression against a loaded model."""
    ts = _Stream(_tokenize(text))
    term = _parse_expr(ts, _Resolver.for_model(model))
    tail = ts.peek()
    if tail.kind != "EOF":
        raise ParseError(f"trailing input {tail.text!r}", tail.line, tail.col)
    return term


# -- matrices and complex literals ----------------------------------------

def _parse_complex(ts: _Stream) -> complex:
    def signed_part():
        sign = 1.0
        while True:
            if ts.accept("-"):
                sign = -sign
            elif ts.accept("+"):
                pass
            else:
                break
        tok = ts.peek()
        if tok.kind == "ID" and tok.text == "i":
            ts.next()
            return (0.0, sign * 1.0)
        if tok.kind == "NUM":
            ts.next()
            if tok.text.endswith("i"):
                mag = float(tok.text[:-1]) if tok.text != "i" else 1.0
                return (0.0, sign * mag)
            return (sign * float(tok.text), None)
        raise ParseError(f"expected a number, found {tok.text!r}", tok.line, tok.col)

    re_part, im_part = signed_part()
    if im_part is not None:
        return complex(re_part, im_part)
    if ts.peek().text in ("+", "-") and ts.peek().kind == "OP":
        nxt = ts.peek(1)
        if (nxt.kind == "NUM" and nxt.text.endswith("i")) or (
            nxt.kind == "ID" and nxt.text == "i"
        ):
            _, im = signed_part()
            return complex(re_part, im)
    return complex(re_part, 0.0)


def _parse_matrix(ts: _Stream) -> np.ndarray:
    open_tok = ts.expect("[")
    rows = []
    while True:
        ts.expect("[")
        row = [_parse_complex(ts)]
        while ts.accept(","):
            row.append(_parse_complex(ts))
        ts.expect("]")
        rows.append(row)
        if not ts.accept(","):
            break
    ts.expect("]")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ParseError("ragged matrix rows", open_tok.line, open_tok.col)
    return np.array(rows, dtype=complex)


def _parse_kraus(ts: _Stream, acts_on: tuple[str, ...]) -> KrausSet:
    if ts.at("{"):
        ts.next()
        mats = [_parse_matrix(ts)]
        while ts.accept(","):
            mats.append(_parse_matrix(ts))
        ts.expect("}")
    else:
        mats = [_parse_matrix(ts)]
    return KrausSet(tuple(mats), acts_on, trace_preserving=True)


# -- spec files ------------------------------------------------------------

def parse_spec(text: str) -> Model:
    """Parse and fully validate a spec file into a Model.

    Two passes: declarations first (registers, actions, gamma, sets, and
    the token ranges of every term body), then all term expressions are
    resolved against the complete declaration tables.
    """
    tokens = _tokenize(text)
    ts = _Stream(tokens)

    registers: list[Register] = []
    quantum_alphabet: dict[str, KrausSet] = {}
    classical: list[str] = []
    gamma: dict[tuple[str, str], str] = {}
    action_sets: dict[str, frozenset[str]] = {}
    raw_sets: dict[str, list[Token]] = {}
    spec_blocks: list[list[tuple[str, int, int]]] = []  # (var, start, end) token spans
    term_decls: list[tuple[str, int, int]] = []
    init_span: tuple[str, int, int] | None = None  # (kind, start, end)

    def skip_expr_span() -> tuple[int, int]:
        """Consume a term expression without resolving ids, returning its
        token span.  An expression ends before ID '=' (the next equation),
        a section keyword, '}' or EOF."""
        start = ts.i
        depth = 0
        section_words = {"registers", "actions", "gamma", "sets", "spec", "term", "init"}
        while True:
            tok = ts.peek()
            if tok.kind == "EOF":
                break
            if depth == 0:
                if tok.text == "}":
                    break
                if tok.kind == "ID" and tok.text in section_words:
                    break
                if tok.kind == "ID" and ts.peek(1).text == "=":
                    break
            if tok.text in "({[":
                depth += 1
            elif tok.text in ")}]":
                depth -= 1
                if depth < 0:
                    break
            ts.next()
        if ts.i == start:
            raise ParseError("expected a term expression", tok.line, tok.col)
        return start, ts.i

    while ts.peek().kind != "EOF":
        tok = ts.peek()
        if tok.text == "registers":
            ts.next()
            ts.expect("{")
            while not ts.accept("}"):
                name = ts.expect_id("register name").text
                dim = 2
                public = True
                if ts.accept(":"):
                    dim = ts.expect_int("register dimension")
                if ts.at("public") or ts.at("private"):
                    public = ts.next().text == "public"
                registers.append(Register(name, dim, public))
        elif tok.text == "actions":
            ts.next()
            ts.expect("{")
            while not ts.accept("}"):
                if ts.accept("quantum"):
                    name = ts.expect_id("action name").text
                    ts.expect("on")
                    regs = [ts.expect_id("register name").text]
                    while ts.accept(","):
                        regs.append(ts.expect_id("register name").text)
                    ts.expect("=")
                    quantum_alphabet[name] = _parse_kraus(ts, tuple(regs))
                elif ts.accept("classical"):
                    classical.append(ts.expect_id("action name").text)
                else:
                    bad = ts.peek()
                    raise ParseError(
                        f"expected 'quantum' or 'classical', found {bad.text!r}",
                        bad.line,
                        bad.col,
                    )
        elif tok.text == "gamma":
            ts.next()
            ts.expect("{")
            while not ts.accept("}"):
                a = ts.expect_id("action name").text
                ts.expect("*")
                b = ts.expect_id("action name").text
                ts.expect("=")
                c = ts.expect_id("action name").text
                gamma[(a, b)] = c
        elif tok.text == "sets":
            ts.next()
            ts.expect("{")
            while not ts.accept("}"):
                name = ts.expect_id("set name").text
                ts.expect("=")
                ts.expect("{")
                members: list[Token] = []
                if not ts.at("}"):
                    members.append(ts.expect_id("action name"))
                    while ts.accept(","):
                        members.append(ts.expect_id("action name"))
                ts.expect("}")
                raw_sets[name] = members
        elif tok.text == "spec":
            ts.next()
            ts.expect("{")
            block: list[tuple[str, int, int]] = []
            while not ts.accept("}"):
                var = ts.expect_id("recursion variable").text
                ts.expect("=")
                start, end = skip_expr_span()
                block.append((var, start, end))
            spec_blocks.append(block)
        elif tok.text == "term":
            ts.next()
            name = ts.expect_id("term name").text
            ts.expect("=")
            start, end = skip_expr_span()
            term_decls.append((name, start, end))
        elif tok.text == "init":
            ts.next()
            ts.expect("=")
            if ts.accept("ket"):
                start = ts.i
                while ts.peek().kind == "NUM":
                    ts.next()
                init_span = ("ket", start, ts.i)
            elif ts.accept("matrix"):
                start = ts.i
                _parse_matrix(ts)  # validated now, reparsed below
                init_span = ("matrix", start, ts.i)
            else:
                bad = ts.peek()
                raise ParseError(
                    f"expected 'ket' or 'matrix', found {bad.text!r}", bad.line, bad.col
                )
        else:
            raise ParseError(f"unexpected {tok.text!r} at top level", tok.line, tok.col)

    # pass 2: resolve sets, then every term expression
    all_actions = set(quantum_alphabet) | set(classical)
    for name, members in raw_sets.items():
        ids = set()
        for member in members:
            if member.text not in all_actions:
                raise UndeclaredAction(
                    f"{member.text} (line {member.line}, column {member.col})"
                )
            ids.add(member.text)
        action_sets[name] = frozenset(ids)

    variables = [var for block in spec_blocks for (var, _, _) in block]
    resolver = _Resolver(quantum_alphabet, classical, variables, action_sets)

    def parse_span(start: int, end: int) -> ProcessTerm:
        sub = _Stream(tokens[start:end] + [Token("EOF", "", 0, 0)])
        term = _parse_expr(sub, resolver)
        tail = sub.peek()
        if tail.kind != "EOF":
            raise ParseError(f"trailing input {tail.text!r}", tail.line, tail.col)
        return term

    specs = [
        RecursiveSpec(tuple((var, parse_span(s, e)) for var, s, e in block))
        for block in spec_blocks
    ]
    named_terms = {name: parse_span(s, e) for name, s, e in term_decls}

    initial_state: QuantumState | None = None
    reg_pairs = tuple((r.name, r.dim) for r in registers)
    public_mask = frozenset(r.name for r in registers if r.public)
    if init_span is not None:
        kind, start, end = init_span
        sub = _Stream(tokens[start:end] + [Token("EOF", "", 0, 0)])
        if kind == "ket":
            values = []
            while sub.peek().kind == "NUM":
                values.append(sub.expect_int("basis index"))
            initial_state = ket_state(reg_pairs, tuple(values), public_mask)
        else:
            matrix = _parse_matrix(sub)
            initial_state = QuantumState(reg_pairs, matrix, public_mask)

    return make_model(
        registers=registers,
        quantum_alphabet=quantum_alphabet,
        classical_alphabet=classical,
        gamma=gamma,
        specs=specs,
        initial_state=initial_state,
        named_terms=named_terms,
        action_sets=action_sets,
    )


# -- serializer ------------------------------------------------------------

def _fmt_float(x: float) -> str:
    if x == int(x) and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _fmt_complex(z: complex) -> str:
    re_part = 0.0 if z.real == 0 else float(z.real)
    im_part = 0.0 if z.imag == 0 else float(z.imag)
    if im_part == 0:
        return _fmt_float(re_part)
    imag = f"{_fmt_float(abs(im_part))}i"
    if re_part == 0:
        return imag if im_part > 0 else f"-{imag}"
    sign = "+" if im_part > 0 else "-"
    return f"{_fmt_float(re_part)}{sign}{imag}"


def _fmt_matrix(m: np.ndarray) -> str:
    rows = ", ".join(
        "[" + ", ".join(_fmt_complex(z) for z in row) + "]" for row in m
    )
    return f"[{rows}]"


def format_model(model: Model) -> str:
    """Serialize a model back to the spec-file syntax (parse round-trips)."""
    out = ["registers {"]
    for r in model.registers:
        tag = "public" if r.public else "private"
        out.append(f"  {r.name} : {r.dim} {tag}")
    out.append("}")
    out.append("")
    out.append("actions {")
    for name in sorted(model.quantum_alphabet):
        op = model.quantum_alphabet[name]
        regs = ", ".join(op.acts_on)
        if len(op.operators) == 1:
            body = _fmt_matrix(op.operators[0])
        else:
            body = "{ " + ", ".join(_fmt_matrix(k) for k in op.operators) + " }"
        out.append(f"  quantum {name} on {regs} = {body}")
    for name in sorted(model.classical_alphabet):
        out.append(f"  classical {name}")
    out.append("}")
    if model.gamma:
        out.append("")
        out.append("gamma {")
        seen = set()
        for (a, b), c in sorted(model.gamma.items()):
            if (b, a) in seen:
                continue
            seen.add((a, b))
            out.append(f"  {a} * {b} = {c}")
        out.append("}")
    if model.action_sets:
        out.append("")
        out.append("sets {")
        for name in sorted(model.action_sets):
            members = ", ".join(sorted(model.action_sets[name]))
            out.append(f"  {name} = {{ {members} }}")
        out.append("}")
    for spec in model.specs:
        out.append("")
        out.append("spec {")
        for var, term in spec.equations:
            out.append(f"  {var} = {format_term(term)}")
        out.append("}")
    if model.named_terms:
        out.append("")
        for name in sorted(model.named_terms):
            out.append(f"term {name} = {format_term(model.named_terms[name])}")
    if model.initial_state is not None:
        out.append("")
        out.append(f"init = matrix {_fmt_matrix(model.initial_state.matrix)}")
    out.append("")
    return "\n".join(out)
