"""Process-term algebra: the term tree, recursive specifications, a total
term order, AC-canonical forms, and the pretty-printer.

Terms are immutable; structural equality and hashing come from the frozen
dataclasses, so terms can key dictionaries directly (the transition engine
deduplicates configurations on them).

Operator levels, loosest to tightest: `+`, the merge family (`||`, `|_`,
`|`, mutually non-associative — parenthesize), `.`, then unary operators
and constants.  `+` and `.` print/parse right-nested.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass
from typing import Callable, Iterator, Union

from .errors import UnboundVariable, UnguardedRecursion

# Normal forms of merge-heavy terms are wide right-nested sums; recursive
# walks over them need more headroom than CPython's default.
sys.setrecursionlimit(max(sys.getrecursionlimit(), 20_000))

__all__ = [
    "ProcessTerm",
    "QuantumAction",
    "ClassicalAction",
    "Silent",
    "Deadlock",
    "Alt",
    "Seq",
    "Merge",
    "LeftMerge",
    "CommMerge",
    "Encap",
    "Abstract",
    "Rename",
    "RecVar",
    "TAU",
    "DELTA",
    "TAU_LABEL",
    "RecursiveSpec",
    "is_action_constant",
    "label_of",
    "children",
    "rebuild",
    "flatten_alt",
    "build_alt",
    "subterms",
    "actions_used",
    "rec_vars",
    "term_key",
    "canonical",
    "format_term",
]

TAU_LABEL = "tau"


@dataclass(frozen=True)
class QuantumAction:
    name: str


@dataclass(frozen=True)
class ClassicalAction:
    name: str


@dataclass(frozen=True)
class Silent:
    """The silent step constant."""


@dataclass(frozen=True)
class Deadlock:
    """The inaction constant."""


@dataclass(frozen=True)
class Alt:
    left: "ProcessTerm"
    right: "ProcessTerm"


@dataclass(frozen=True)
class Seq:
    left: "ProcessTerm"
    right: "ProcessTerm"


@dataclass(frozen=True)
class Merge:
    left: "ProcessTerm"
    right: "ProcessTerm"


@dataclass(frozen=True)
class LeftMerge:
    left: "ProcessTerm"
    right: "ProcessTerm"


@dataclass(frozen=True)
class CommMerge:
    left: "ProcessTerm"
    right: "ProcessTerm"


@dataclass(frozen=True)
class Encap:
    hide: frozenset[str]
    body: "ProcessTerm"


@dataclass(frozen=True)
class Abstract:
    internal: frozenset[str]
    body: "ProcessTerm"


@dataclass(frozen=True)
class Rename:
    mapping: tuple[tuple[str, str], ...]  # sorted (source, target) pairs
    body: "ProcessTerm"

    def apply(self, label: str) -> str:
        for src, dst in self.mapping:
            if src == label:
                return dst
        return label


@dataclass(frozen=True)
class RecVar:
    name: str


ProcessTerm = Union[
    QuantumAction,
    ClassicalAction,
    Silent,
    Deadlock,
    Alt,
    Seq,
    Merge,
    LeftMerge,
    CommMerge,
    Encap,
    Abstract,
    Rename,
    RecVar,
]

TAU = Silent()
DELTA = Deadlock()

_BINARY = (Alt, Seq, Merge, LeftMerge, CommMerge)
_UNARY = (Encap, Abstract, Rename)


def is_action_constant(term: ProcessTerm) -> bool:
    return isinstance(term, (QuantumAction, ClassicalAction, Silent))


def label_of(term: ProcessTerm) -> str:
    """Transition label of an action constant."""
    if isinstance(term, (QuantumAction, ClassicalAction)):
        return term.name
    if isinstance(term, Silent):
        return TAU_LABEL
    raise TypeError(f"not an action constant: {term!r}")


def children(term: ProcessTerm) -> tuple[ProcessTerm, ...]:
    if isinstance(term, _BINARY):
        return (term.left, term.right)
    if isinstance(term, _UNARY):
        return (term.body,)
    return ()


def rebuild(term: ProcessTerm, kids: tuple[ProcessTerm, ...]) -> ProcessTerm:
    if isinstance(term, _BINARY):
        return type(term)(kids[0], kids[1])
    if isinstance(term, Encap):
        return Encap(term.hide, kids[0])
    if isinstance(term, Abstract):
        return Abstract(term.internal, kids[0])
    if isinstance(term, Rename):
        return Rename(term.mapping, kids[0])
    return term


def subterms(term: ProcessTerm) -> Iterator[ProcessTerm]:
    yield term
    for child in children(term):
        yield from subterms(child)


def actions_used(term: ProcessTerm) -> set[str]:
    """All action ids occurring in the term, including hide/internal sets
    and both sides of rename maps."""
    used: set[str] = set()
    for sub in subterms(term):
        if isinstance(sub, (QuantumAction, ClassicalAction)):
            used.add(sub.name)
        elif isinstance(sub, Encap):
            used |= sub.hide
        elif isinstance(sub, Abstract):
            used |= sub.internal
        elif isinstance(sub, Rename):
            for src, dst in sub.mapping:
                used.add(src)
                used.add(dst)
    return used


def rec_vars(term: ProcessTerm) -> set[str]:
    return {sub.name for sub in subterms(term) if isinstance(sub, RecVar)}


# -- sums as multisets -------------------------------------------------

def flatten_alt(term: ProcessTerm) -> list[ProcessTerm]:
    """Summands of a (possibly nested) alternative composition."""
    out: list[ProcessTerm] = []
    stack = [term]
    while stack:
        t = stack.pop()
        if isinstance(t, Alt):
            stack.append(t.right)
            stack.append(t.left)
        else:
            out.append(t)
    return out


def build_alt(summands: list[ProcessTerm]) -> ProcessTerm:
    """Right-nested sum; the empty sum is deadlock."""
    if not summands:
        return DELTA
    out = summands[-1]
    for s in reversed(summands[:-1]):
        out = Alt(s, out)
    return out


# -- total term order and AC-canonical form ----------------------------

# Rank by operator tag, then action id, then recursively on children.
_RANK = {
    QuantumAction: 0,
    ClassicalAction: 1,
    Silent: 2,
    Deadlock: 3,
    RecVar: 4,
    Seq: 5,
    Alt: 6,
    Merge: 7,
    LeftMerge: 8,
    CommMerge: 9,
    Encap: 10,
    Abstract: 11,
    Rename: 12,
}


def term_key(term: ProcessTerm) -> tuple:
    """Key for the fixed total order on terms (makes normal forms and all
    engine orderings bit-reproducible)."""
    rank = _RANK[type(term)]
    if isinstance(term, (QuantumAction, ClassicalAction, RecVar)):
        return (rank, term.name, ())
    if isinstance(term, (Silent, Deadlock)):
        return (rank, "", ())
    if isinstance(term, Encap):
        return (rank, ",".join(sorted(term.hide)), (term_key(term.body),))
    if isinstance(term, Abstract):
        return (rank, ",".join(sorted(term.internal)), (term_key(term.body),))
    if isinstance(term, Rename):
        tag = ",".join(f"{a}->{b}" for a, b in term.mapping)
        return (rank, tag, (term_key(term.body),))
    return (rank, "", tuple(term_key(c) for c in children(term)))


def canonical(term: ProcessTerm) -> ProcessTerm:
    """AC-canonical presentation: every sum flattened, summands sorted by
    the total order, re-nested to the right.  No rewriting is performed;
    idempotent duplicates are the rewriter's business."""
    if isinstance(term, Alt):
        summands = [canonical(s) for s in flatten_alt(term)]
        summands.sort(key=term_key)
        return build_alt(summands)
    kids = children(term)
    if not kids:
        return term
    return rebuild(term, tuple(canonical(c) for c in kids))


# -- pretty printer -----------------------------------------------------

_LEVEL_ALT = 1
_LEVEL_MERGE = 2
_LEVEL_SEQ = 3
_LEVEL_ATOM = 4


def _level(term: ProcessTerm) -> int:
    if isinstance(term, Alt):
        return _LEVEL_ALT
    if isinstance(term, (Merge, LeftMerge, CommMerge)):
        return _LEVEL_MERGE
    if isinstance(term, Seq):
        return _LEVEL_SEQ
    return _LEVEL_ATOM


def format_term(term: ProcessTerm) -> str:
    """Render a term in the concrete syntax; parse_term round-trips it."""
    return _fmt(term)


def _wrap(term: ProcessTerm, min_level: int) -> str:
    text = _fmt(term)
    if _level(term) < min_level:
        return f"({text})"
    return text


def _fmt(term: ProcessTerm) -> str:
    if isinstance(term, (QuantumAction, ClassicalAction, RecVar)):
        return term.name
    if isinstance(term, Silent):
        return "tau"
    if isinstance(term, Deadlock):
        return "delta"
    if isinstance(term, Alt):
        # right-nested: the left operand needs parens if itself a sum
        return f"{_wrap(term.left, _LEVEL_ALT + 1)} + {_wrap(term.right, _LEVEL_ALT)}"
    if isinstance(term, (Merge, LeftMerge, CommMerge)):
        op = {Merge: "||", LeftMerge: "|_", CommMerge: "|"}[type(term)]
        # non-associative family: both operands must sit strictly above
        return f"{_wrap(term.left, _LEVEL_MERGE + 1)} {op} {_wrap(term.right, _LEVEL_MERGE + 1)}"
    if isinstance(term, Seq):
        return f"{_wrap(term.left, _LEVEL_SEQ + 1)} . {_wrap(term.right, _LEVEL_SEQ)}"
    if isinstance(term, Encap):
        return f"encap{{{', '.join(sorted(term.hide))}}}({_fmt(term.body)})"
    if isinstance(term, Abstract):
        return f"tau{{{', '.join(sorted(term.internal))}}}({_fmt(term.body)})"
    if isinstance(term, Rename):
        pairs = ", ".join(f"{a} -> {b}" for a, b in term.mapping)
        return f"rename{{{pairs}}}({_fmt(term.body)})"
    raise TypeError(f"unknown term: {term!r}")


# -- recursive specifications -------------------------------------------

@dataclass(frozen=True)
class RecursiveSpec:
    """An ordered system of recursive equations X_i = t_i."""

    equations: tuple[tuple[str, ProcessTerm], ...]

    def variables(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.equations)

    def rhs(self, name: str) -> ProcessTerm:
        for var, term in self.equations:
            if var == name:
                return term
        raise UnboundVariable(f"no equation for {name}")

    def is_linear(self) -> bool:
        """True iff every right-hand side is a sum of action constants and
        (action constant . variable) summands; the empty sum is delta."""
        for _, term in self.equations:
            for summand in flatten_alt(term):
                if isinstance(summand, Deadlock):
                    continue
                if is_action_constant(summand):
                    continue
                if (
                    isinstance(summand, Seq)
                    and is_action_constant(summand.left)
                    and isinstance(summand.right, RecVar)
                ):
                    continue
                return False
        return True

    def tau_edges(self) -> list[tuple[str, str]]:
        """Variable edges X -> Y for summands tau . Y (linear specs)."""
        edges = []
        for var, term in self.equations:
            for summand in flatten_alt(term):
                if (
                    isinstance(summand, Seq)
                    and isinstance(summand.left, Silent)
                    and isinstance(summand.right, RecVar)
                ):
                    edges.append((var, summand.right.name))
        return edges

    def has_tau_cycle(self) -> bool:
        """True iff the spec admits an infinite sequence of tau summand
        steps among its variables (forbidden under abstraction)."""
        succs: dict[str, list[str]] = {}
        for a, b in self.tau_edges():
            succs.setdefault(a, []).append(b)
        state: dict[str, int] = {}  # 0 visiting, 1 done

        def dfs(v: str) -> bool:
            state[v] = 0
            for w in succs.get(v, ()):
                if w not in state:
                    if dfs(w):
                        return True
                elif state[w] == 0:
                    return True
            state[v] = 1
            return False

        return any(v not in state and dfs(v) for v in list(succs))

    def check_guarded(self) -> None:
        """Bounded-expansion guardedness check.

        Exposed variable occurrences (reachable without passing an action
        prefix) are replaced by their right-hand sides for up to |E|
        rounds; any exposure surviving that is an UnguardedRecursion.
        """
        local = set(self.variables())

        def exposed(term: ProcessTerm) -> set[str]:
            if isinstance(term, RecVar):
                return {term.name} if term.name in local else set()
            if isinstance(term, (Alt, Merge, LeftMerge, CommMerge)):
                return exposed(term.left) | exposed(term.right)
            if isinstance(term, Seq):
                return exposed(term.left)  # the right side sits behind x
            if isinstance(term, (Encap, Abstract, Rename)):
                return exposed(term.body)
            return set()

        def expand_exposed(term: ProcessTerm) -> ProcessTerm:
            if isinstance(term, RecVar) and term.name in local:
                return self.rhs(term.name)
            if isinstance(term, (Alt, Merge, LeftMerge, CommMerge)):
                return type(term)(expand_exposed(term.left), expand_exposed(term.right))
            if isinstance(term, Seq):
                return Seq(expand_exposed(term.left), term.right)
            if isinstance(term, (Encap, Abstract, Rename)):
                return rebuild(term, (expand_exposed(term.body),))
            return term

        for var, term in self.equations:
            current = term
            for _ in range(len(self.equations)):
                if not exposed(current):
                    break
                current = expand_exposed(current)
            leftover = exposed(current)
            if leftover:
                raise UnguardedRecursion(
                    f"variable(s) {sorted(leftover)} unguarded in equation for {var}"
                )


def map_rec_vars(term: ProcessTerm, fn: Callable[[str], ProcessTerm]) -> ProcessTerm:
    """Replace every recursion variable X by fn(X.name)."""
    if isinstance(term, RecVar):
        return fn(term.name)
    kids = children(term)
    if not kids:
        return term
    return rebuild(term, tuple(map_rec_vars(c, fn) for c in kids))
