"""Equational engine for the axiom catalogues.

Axioms are oriented left-to-right as printed; commutativity and
associativity of `+` are not rules but the AC theory: sums are compared
and finally presented as sorted, right-nested summand lists under the
fixed total term order.  Sequencing associativity is oriented
right-associating.

Catalogues (selected by name, the CLI's --system flag):

    bqpa      QA3 QA4 QA5
    qpap      + QM1, QLM2-4, QCM5-10, and the deadlock absorption rules
                QA6 QA7 QLM11 QCM12 QCM13 (undefined communications
                rewrite to deadlock, so the absorption rules are needed
                for normal forms to exist under a partial gamma)
    aqcp      + QD1-5 and QRN1-4
    aqcp-tau  + QB1 QB2 QTI1-5

Communication merges whose labels have no gamma entry rewrite to deadlock
(gamma extends to C x C -> C ∪ {delta}).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional

from .errors import BudgetExceeded, OperatorNotEliminable, UnboundVariable, UndeclaredAction
from .model import Model
from .terms import (
    Abstract,
    Alt,
    ClassicalAction,
    CommMerge,
    DELTA,
    Deadlock,
    Encap,
    LeftMerge,
    Merge,
    ProcessTerm,
    QuantumAction,
    RecVar,
    Rename,
    Seq,
    Silent,
    TAU,
    build_alt,
    canonical,
    children,
    flatten_alt,
    is_action_constant,
    label_of,
    map_rec_vars,
    rebuild,
    rec_vars,
    term_key,
)

__all__ = [
    "Rule",
    "RewriteSystem",
    "RewriteStep",
    "SYSTEM_NAMES",
    "make_system",
    "rewrite_step",
    "normalize",
    "unfold_rdp",
]

DEFAULT_BUDGET = 100_000


@lru_cache(maxsize=None)
def _ac_key(term: ProcessTerm) -> tuple:
    return term_key(canonical(term))


@dataclass(frozen=True)
class Rule:
    name: str
    fn: Callable

    def apply(self, term: ProcessTerm, system: "RewriteSystem") -> Optional[ProcessTerm]:
        return self.fn(term, system)


@dataclass(frozen=True)
class RewriteStep:
    term: ProcessTerm
    rule: str
    position: tuple[int, ...]


class RewriteSystem:
    def __init__(self, name: str, rules: tuple[Rule, ...], model: Model | None = None):
        self.name = name
        self.rules = rules
        self.model = model
        self._nf_cache: dict[ProcessTerm, ProcessTerm] = {}

    def gamma(self, a: str, b: str) -> str | None:
        if self.model is None:
            return None
        return self.model.gamma_get(a, b)

    def rule_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.rules)


# -- the rules ---------------------------------------------------------------

def _qa3(term, system):
    # x + x = x, modulo AC of +
    summands = flatten_alt(term)
    seen: dict[tuple, int] = {}
    for idx, s in enumerate(summands):
        key = _ac_key(s)
        if key in seen:
            del summands[idx]
            return build_alt(summands)
        seen[key] = idx
    return None


def _qa6(term, system):
    # x + delta = x
    summands = flatten_alt(term)
    if len(summands) > 1:
        for idx, s in enumerate(summands):
            if isinstance(s, Deadlock):
                del summands[idx]
                return build_alt(summands)
    return None


def _qa4(term, system):
    # (x + y) . z = x . z + y . z
    if isinstance(term.left, Alt):
        return Alt(Seq(term.left.left, term.right), Seq(term.left.right, term.right))
    return None


def _qa5(term, system):
    # (x . y) . z = x . (y . z)
    if isinstance(term.left, Seq):
        return Seq(term.left.left, Seq(term.left.right, term.right))
    return None


def _qa7(term, system):
    # delta . x = delta
    if isinstance(term.left, Deadlock):
        return DELTA
    return None


def _qm1(term, system):
    # x || y = (x |_ y + y |_ x) + x | y
    x, y = term.left, term.right
    return Alt(Alt(LeftMerge(x, y), LeftMerge(y, x)), CommMerge(x, y))


def _qlm2(term, system):
    if is_action_constant(term.left):
        return Seq(term.left, term.right)
    return None


def _qlm3(term, system):
    if isinstance(term.left, Seq) and is_action_constant(term.left.left):
        return Seq(term.left.left, Merge(term.left.right, term.right))
    return None


def _qlm4(term, system):
    if isinstance(term.left, Alt):
        return Alt(LeftMerge(term.left.left, term.right), LeftMerge(term.left.right, term.right))
    return None


def _qlm11(term, system):
    if isinstance(term.left, Deadlock):
        return DELTA
    return None


def _comm(system, a: ProcessTerm, b: ProcessTerm) -> ProcessTerm:
    result = system.gamma(label_of(a), label_of(b))
    return ClassicalAction(result) if result is not None else DELTA


def _qcm5(term, system):
    if is_action_constant(term.left) and is_action_constant(term.right):
        return _comm(system, term.left, term.right)
    return None


def _qcm6(term, system):
    if (
        is_action_constant(term.left)
        and isinstance(term.right, Seq)
        and is_action_constant(term.right.left)
    ):
        head = _comm(system, term.left, term.right.left)
        return DELTA if isinstance(head, Deadlock) else Seq(head, term.right.right)
    return None


def _qcm7(term, system):
    if (
        isinstance(term.left, Seq)
        and is_action_constant(term.left.left)
        and is_action_constant(term.right)
    ):
        head = _comm(system, term.left.left, term.right)
        return DELTA if isinstance(head, Deadlock) else Seq(head, term.left.right)
    return None


def _qcm8(term, system):
    if (
        isinstance(term.left, Seq)
        and is_action_constant(term.left.left)
        and isinstance(term.right, Seq)
        and is_action_constant(term.right.left)
    ):
        head = _comm(system, term.left.left, term.right.left)
        if isinstance(head, Deadlock):
            return DELTA
        return Seq(head, Merge(term.left.right, term.right.right))
    return None


def _qcm9(term, system):
    if isinstance(term.left, Alt):
        return Alt(CommMerge(term.left.left, term.right), CommMerge(term.left.right, term.right))
    return None


def _qcm10(term, system):
    if isinstance(term.right, Alt):
        return Alt(CommMerge(term.left, term.right.left), CommMerge(term.left, term.right.right))
    return None


def _qcm12(term, system):
    if isinstance(term.left, Deadlock):
        return DELTA
    return None


def _qcm13(term, system):
    if isinstance(term.right, Deadlock):
        return DELTA
    return None


def _qd1(term, system):
    if is_action_constant(term.body) and label_of(term.body) not in term.hide:
        return term.body
    return None


def _qd2(term, system):
    if is_action_constant(term.body) and label_of(term.body) in term.hide:
        return DELTA
    return None


def _qd3(term, system):
    if isinstance(term.body, Deadlock):
        return DELTA
    return None


def _qd4(term, system):
    if isinstance(term.body, Alt):
        return Alt(Encap(term.hide, term.body.left), Encap(term.hide, term.body.right))
    return None


def _qd5(term, system):
    if isinstance(term.body, Seq):
        return Seq(Encap(term.hide, term.body.left), Encap(term.hide, term.body.right))
    return None


def _qb1(term, system):
    # v . tau = v
    if is_action_constant(term.left) and isinstance(term.right, Silent):
        return term.left
    return None


def _qb2(term, system):
    # v . (tau . (x + y) + x) = v . (x + y)
    if not (is_action_constant(term.left) and isinstance(term.right, Alt)):
        return None
    from collections import Counter

    summands = flatten_alt(term.right)
    for idx, s in enumerate(summands):
        if not (isinstance(s, Seq) and isinstance(s.left, Silent)):
            continue
        inner = s.right
        rest = summands[:idx] + summands[idx + 1 :]
        if not rest:
            continue
        inner_keys = Counter(_ac_key(t) for t in flatten_alt(inner))
        rest_keys = Counter(_ac_key(t) for t in rest)
        if rest_keys <= inner_keys and sum(rest_keys.values()) < sum(inner_keys.values()):
            return Seq(term.left, inner)
    return None


def _qti1(term, system):
    if is_action_constant(term.body) and label_of(term.body) not in term.internal:
        return term.body
    return None


def _qti2(term, system):
    if is_action_constant(term.body) and label_of(term.body) in term.internal:
        return TAU
    return None


def _qti3(term, system):
    if isinstance(term.body, Deadlock):
        return DELTA
    return None


def _qti4(term, system):
    if isinstance(term.body, Alt):
        return Alt(Abstract(term.internal, term.body.left), Abstract(term.internal, term.body.right))
    return None


def _qti5(term, system):
    if isinstance(term.body, Seq):
        return Seq(Abstract(term.internal, term.body.left), Abstract(term.internal, term.body.right))
    return None


def _qrn1(term, system):
    if isinstance(term.body, Silent):
        return TAU
    if is_action_constant(term.body):
        new_name = term.apply(term.body.name)
        if system.model is not None and system.model.is_quantum(new_name):
            return QuantumAction(new_name)
        if system.model is not None and system.model.is_classical(new_name):
            return ClassicalAction(new_name)
        return type(term.body)(new_name)
    return None


def _qrn2(term, system):
    if isinstance(term.body, Deadlock):
        return DELTA
    return None


def _qrn3(term, system):
    if isinstance(term.body, Alt):
        return Alt(Rename(term.mapping, term.body.left), Rename(term.mapping, term.body.right))
    return None


def _qrn4(term, system):
    if isinstance(term.body, Seq):
        return Seq(Rename(term.mapping, term.body.left), Rename(term.mapping, term.body.right))
    return None


# Rules indexed by the term constructor they fire on.
_RULES_BY_TYPE: dict[str, tuple[type, ...]] = {
    "QA3": (Alt,), "QA4": (Seq,), "QA5": (Seq,), "QA6": (Alt,), "QA7": (Seq,),
    "QM1": (Merge,),
    "QLM2": (LeftMerge,), "QLM3": (LeftMerge,), "QLM4": (LeftMerge,), "QLM11": (LeftMerge,),
    "QCM5": (CommMerge,), "QCM6": (CommMerge,), "QCM7": (CommMerge,), "QCM8": (CommMerge,),
    "QCM9": (CommMerge,), "QCM10": (CommMerge,), "QCM12": (CommMerge,), "QCM13": (CommMerge,),
    "QD1": (Encap,), "QD2": (Encap,), "QD3": (Encap,), "QD4": (Encap,), "QD5": (Encap,),
    "QB1": (Seq,), "QB2": (Seq,),
    "QTI1": (Abstract,), "QTI2": (Abstract,), "QTI3": (Abstract,), "QTI4": (Abstract,),
    "QTI5": (Abstract,),
    "QRN1": (Rename,), "QRN2": (Rename,), "QRN3": (Rename,), "QRN4": (Rename,),
}

_ALL_RULES = {
    "QA3": _qa3, "QA4": _qa4, "QA5": _qa5, "QA6": _qa6, "QA7": _qa7,
    "QM1": _qm1,
    "QLM2": _qlm2, "QLM3": _qlm3, "QLM4": _qlm4, "QLM11": _qlm11,
    "QCM5": _qcm5, "QCM6": _qcm6, "QCM7": _qcm7, "QCM8": _qcm8,
    "QCM9": _qcm9, "QCM10": _qcm10, "QCM12": _qcm12, "QCM13": _qcm13,
    "QD1": _qd1, "QD2": _qd2, "QD3": _qd3, "QD4": _qd4, "QD5": _qd5,
    "QB1": _qb1, "QB2": _qb2,
    "QTI1": _qti1, "QTI2": _qti2, "QTI3": _qti3, "QTI4": _qti4, "QTI5": _qti5,
    "QRN1": _qrn1, "QRN2": _qrn2, "QRN3": _qrn3, "QRN4": _qrn4,
}

_CATALOGUES = {
    "bqpa": ("QA3", "QA4", "QA5"),
    "qpap": (
        "QA3", "QA4", "QA5", "QA6", "QA7",
        "QM1", "QLM2", "QLM3", "QLM4", "QLM11",
        "QCM5", "QCM6", "QCM7", "QCM8", "QCM9", "QCM10", "QCM12", "QCM13",
    ),
    "aqcp": (
        "QA3", "QA4", "QA5", "QA6", "QA7",
        "QM1", "QLM2", "QLM3", "QLM4", "QLM11",
        "QCM5", "QCM6", "QCM7", "QCM8", "QCM9", "QCM10", "QCM12", "QCM13",
        "QD1", "QD2", "QD3", "QD4", "QD5",
        "QRN1", "QRN2", "QRN3", "QRN4",
    ),
    "aqcp-tau": (
        "QA3", "QA4", "QA5", "QA6", "QA7",
        "QM1", "QLM2", "QLM3", "QLM4", "QLM11",
        "QCM5", "QCM6", "QCM7", "QCM8", "QCM9", "QCM10", "QCM12", "QCM13",
        "QD1", "QD2", "QD3", "QD4", "QD5",
        "QRN1", "QRN2", "QRN3", "QRN4",
        "QB1", "QB2",
        "QTI1", "QTI2", "QTI3", "QTI4", "QTI5",
    ),
}

SYSTEM_NAMES = tuple(_CATALOGUES)


def make_system(name: str, model: Model | None = None) -> RewriteSystem:
    try:
        rule_names = _CATALOGUES[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; pick one of {SYSTEM_NAMES}") from None
    rules = tuple(Rule(rn, _ALL_RULES[rn]) for rn in rule_names)
    return RewriteSystem(name, rules, model)


# -- single steps -------------------------------------------------------------

def _attempt(term: ProcessTerm, system: RewriteSystem) -> Optional[tuple[ProcessTerm, str]]:
    ttype = type(term)
    for rule in system.rules:
        if ttype not in _RULES_BY_TYPE[rule.name]:
            continue
        out = rule.apply(term, system)
        if out is not None and out != term:
            return out, rule.name
    return None


def rewrite_step(
    term: ProcessTerm, system: RewriteSystem, strategy: str = "innermost"
) -> Optional[RewriteStep]:
    """One rewrite at the first redex in strategy order, matching modulo AC
    of +.  Sum rules anchor at the top of each + cluster.  Returns None on
    normal forms."""
    if strategy not in ("innermost", "outermost"):
        raise ValueError(f"unknown strategy {strategy!r}")
    found = _walk(term, (), False, system, strategy)
    if found is None:
        return None
    new_term, rule, pos = found
    return RewriteStep(new_term, rule, pos)


def _walk(term, pos, parent_is_alt, system, strategy):
    cluster_inner = parent_is_alt and isinstance(term, Alt)
    if strategy == "outermost" and not cluster_inner:
        att = _attempt(term, system)
        if att is not None:
            return att[0], att[1], pos
    kids = children(term)
    for idx, kid in enumerate(kids):
        found = _walk(kid, pos + (idx,), isinstance(term, Alt), system, strategy)
        if found is not None:
            new_kid, rule, rpos = found
            new_kids = kids[:idx] + (new_kid,) + kids[idx + 1 :]
            return rebuild(term, new_kids), rule, rpos
    if strategy == "innermost" and not cluster_inner:
        att = _attempt(term, system)
        if att is not None:
            return att[0], att[1], pos
    return None


# -- normalization -------------------------------------------------------------

class _Budget:
    def __init__(self, limit: int):
        self.left = limit

    def spend(self):
        self.left -= 1
        if self.left < 0:
            raise BudgetExceeded("rewrite budget exhausted")


def _nf(term, system, budget):
    cache = system._nf_cache
    hit = cache.get(term)
    if hit is not None:
        return hit
    if isinstance(term, Alt):
        summands = []
        for s in flatten_alt(term):
            summands.append(_nf(s, system, budget))
        out = _cluster_reduce(summands, system, budget)
    else:
        kids = children(term)
        cur = rebuild(term, tuple(_nf(k, system, budget) for k in kids)) if kids else term
        att = _attempt(cur, system)
        if att is None:
            out = cur
        else:
            budget.spend()
            out = _nf(att[0], system, budget)
    cache[term] = out
    cache[out] = out
    return out


def _cluster_reduce(summands, system, budget):
    names = {r.name for r in system.rules}
    if "QA3" in names:
        seen = set()
        deduped = []
        for s in summands:
            key = _ac_key(s)
            if key in seen:
                budget.spend()
                continue
            seen.add(key)
            deduped.append(s)
        summands = deduped
    if "QA6" in names:
        others = [s for s in summands if not isinstance(s, Deadlock)]
        removed = len(summands) - len(others)
        if others and removed:
            for _ in range(removed):
                budget.spend()
            summands = others
    return build_alt(summands)


def normalize(
    term: ProcessTerm,
    system: RewriteSystem,
    budget: int = DEFAULT_BUDGET,
    strategy: str = "innermost",
    trace: list | None = None,
) -> ProcessTerm:
    """Rewrite to the AC-canonical normal form.

    With a trace list or a non-default strategy the engine performs
    explicit single steps (recording (rule, position) pairs); otherwise a
    memoized innermost evaluator computes the same normal form.  Closed
    terms only: recursion variables go through the graph route instead.
    """
    if rec_vars(term):
        raise OperatorNotEliminable(
            "recursion variables cannot be normalized; build the graph instead"
        )
    if trace is None and strategy == "innermost":
        out = _nf(term, system, _Budget(budget))
        return canonical(out)
    current = term
    for _ in range(budget + 1):
        nxt = rewrite_step(current, system, strategy)
        if nxt is None:
            return canonical(current)
        if trace is not None:
            trace.append((nxt.rule, nxt.position))
        current = nxt.term
    raise BudgetExceeded("rewrite budget exhausted")


def unfold_rdp(term: ProcessTerm, model: Model, depth: int) -> ProcessTerm:
    """Replace every recursion variable by its right-hand side, depth
    rounds (depth 0 is the identity)."""
    current = term
    for _ in range(depth):
        try:
            current = map_rec_vars(current, lambda name: model.rhs_of(name))
        except UndeclaredAction as exc:
            raise UnboundVariable(str(exc)) from None
    return current
