"""Deterministic random-term generator shared by the property suites."""

from __future__ import annotations

import random

from qacp.terms import (
    Abstract,
    Alt,
    ClassicalAction,
    CommMerge,
    DELTA,
    Encap,
    LeftMerge,
    Merge,
    QuantumAction,
    Rename,
    Seq,
    TAU,
)

LEVELS = ("bqpa", "qpap", "aqcp", "aqcp-tau")


def _constants(model, level):
    out = [QuantumAction(n) for n in sorted(model.quantum_alphabet)]
    out += [ClassicalAction(n) for n in sorted(model.classical_alphabet)]
    if LEVELS.index(level) >= LEVELS.index("aqcp-tau"):
        out.append(TAU)
    return out


def random_term(rng: random.Random, model, depth: int = 5, level: str = "aqcp-tau",
                merge_budget: int = 2):
    """A random closed term of the given nesting depth over the model's
    alphabet, using the operators of the chosen layer.  The merge budget
    keeps parallel width desk-sized."""
    state = {"merges": merge_budget}
    return _gen(rng, model, depth, level, state)


def _gen(rng, model, depth, level, state):
    consts = _constants(model, level)
    lvl = LEVELS.index(level)
    if depth <= 0:
        if lvl >= LEVELS.index("aqcp") and rng.random() < 0.08:
            return DELTA
        return rng.choice(consts)
    choices = ["const", "const", "alt", "alt", "seq", "seq", "seq"]
    if lvl >= LEVELS.index("qpap") and state["merges"] > 0:
        choices += ["merge", "leftmerge", "commmerge"]
    if lvl >= LEVELS.index("aqcp"):
        choices += ["delta", "encap", "rename"]
    if lvl >= LEVELS.index("aqcp-tau"):
        choices += ["abstract"]
    pick = rng.choice(choices)
    if pick == "const":
        return rng.choice(consts)
    if pick == "delta":
        return DELTA
    if pick == "alt":
        return Alt(_gen(rng, model, depth - 1, level, state),
                   _gen(rng, model, depth - 1, level, state))
    if pick == "seq":
        return Seq(_gen(rng, model, depth - 1, level, state),
                   _gen(rng, model, depth - 1, level, state))
    if pick in ("merge", "leftmerge", "commmerge"):
        state["merges"] -= 1
        ctor = {"merge": Merge, "leftmerge": LeftMerge, "commmerge": CommMerge}[pick]
        return ctor(_gen(rng, model, depth - 1, level, state),
                    _gen(rng, model, depth - 1, level, state))
    if pick == "encap":
        pool = sorted(model.classical_alphabet | set(model.quantum_alphabet))
        hide = frozenset(rng.sample(pool, rng.randint(1, 2)))
        return Encap(hide, _gen(rng, model, depth - 1, level, state))
    if pick == "abstract":
        pool = sorted(model.classical_alphabet | set(model.quantum_alphabet))
        internal = frozenset(rng.sample(pool, rng.randint(1, 2)))
        return Abstract(internal, _gen(rng, model, depth - 1, level, state))
    # rename: a kind-preserving swap
    if rng.random() < 0.5 and len(model.quantum_alphabet) >= 2:
        a, b = rng.sample(sorted(model.quantum_alphabet), 2)
    else:
        a, b = rng.sample(sorted(model.classical_alphabet), 2)
    return Rename(tuple(sorted([(a, b), (b, a)])), _gen(rng, model, depth - 1, level, state))
