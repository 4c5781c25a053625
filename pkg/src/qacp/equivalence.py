"""Deciding strong, branching and rooted-branching equivalence on
configuration graphs.

Strong equivalence runs classic partition refinement (initial split on the
termination predicate, signatures over outgoing (label, block) pairs).
Branching equivalence runs signature refinement where a node's signature
collects the non-inert moves reachable through in-block tau paths, plus a
termination flag.  Rooted-branching adds the exact-first-move root
condition on top of the branching partition.

Verdicts carry either a machine-checkable witness partition or a
distinguishing trace; validate_witness re-checks the literal defining
clauses pair by pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import networkx as nx

from .errors import ModelMismatch, SpecNotLinear, TauDivergence
from . import quantum
from .quantum import trace_distance
from .semantics import ConfigGraph, Configuration, build_graph, build_structural_graph
from .terms import (
    Deadlock,
    ProcessTerm,
    RecVar,
    RecursiveSpec,
    Seq,
    Silent,
    TAU_LABEL,
    flatten_alt,
    is_action_constant,
)

__all__ = [
    "EquivalenceVerdict",
    "Counterexample",
    "ReductionReport",
    "strong_bisim",
    "branching_bisim",
    "rooted_branching_bisim",
    "bisim",
    "minimize",
    "find_clusters",
    "quantum_bisim_terms",
    "validate_witness",
]

MODES = ("strong", "branching", "rooted-branching")

_TERM_SIG = ("term",)


@dataclass(frozen=True)
class Counterexample:
    labels: tuple[str, ...]
    obligation: str


@dataclass(frozen=True)
class EquivalenceVerdict:
    related: bool
    mode: str
    witness: tuple[tuple[tuple[int, int], ...], ...] | None = None
    counterexample: Counterexample | None = None

    def to_json_dict(self) -> dict:
        return {
            "related": self.related,
            "mode": self.mode,
            "witness_size": len(self.witness) if self.witness is not None else 0,
            "counterexample": list(self.counterexample.labels)
            if self.counterexample is not None
            else None,
        }


@dataclass(frozen=True)
class ReductionReport:
    """Consistency report for the classical-reduction criterion; only
    meaningful for deterministic graphs with finite maximal traces."""

    deterministic: bool
    applicable: bool
    structural_related: bool | None = None
    final_state_distance: float | None = None
    agrees: bool | None = None


# -- the union view ---------------------------------------------------------

class _Union:
    def __init__(self, g1: ConfigGraph, g2: ConfigGraph):
        if (
            g1.model is not None
            and g2.model is not None
            and g1.model.fingerprint() != g2.model.fingerprint()
        ):
            raise ModelMismatch("graphs were built against different models")
        self.n1 = g1.node_count
        self.n = g1.node_count + g2.node_count
        self.out: list[list[tuple[str, int]]] = [list(row) for row in g1.out]
        for row in g2.out:
            self.out.append([(label, dst + self.n1) for label, dst in row])
        self.terminating = set(g1.terminating) | {t + self.n1 for t in g2.terminating}
        self.roots = (g1.root, g2.root + self.n1)

    def side(self, i: int) -> int:
        return 0 if i < self.n1 else 1

    def local(self, i: int) -> int:
        return i if i < self.n1 else i - self.n1

    def tau_closure(self) -> list[set[int]]:
        """Full tau-reachability (any intermediates), reflexive."""
        closure = [None] * self.n
        for i in range(self.n):
            seen = {i}
            stack = [i]
            while stack:
                u = stack.pop()
                for label, v in self.out[u]:
                    if label == TAU_LABEL and v not in seen:
                        seen.add(v)
                        stack.append(v)
            closure[i] = seen
        return closure


def _refine(blocks: list[int], sigs: list) -> tuple[list[int], bool]:
    table: dict[tuple, int] = {}
    new = [0] * len(blocks)
    for i in range(len(blocks)):
        key = (blocks[i], sigs[i])
        if key not in table:
            table[key] = len(table)
        new[i] = table[key]
    return new, len(table) != len(set(blocks))


def _strong_partition(u: _Union, history: list | None = None) -> list[int]:
    blocks = [1 if i in u.terminating else 0 for i in range(u.n)]
    if history is not None:
        history.append(list(blocks))
    while True:
        sigs = [
            frozenset((label, blocks[dst]) for label, dst in u.out[i]) for i in range(u.n)
        ]
        blocks, changed = _refine(blocks, sigs)
        if history is not None:
            history.append(list(blocks))
        if not changed:
            return blocks


def _branching_signature(u: _Union, blocks: list[int], i: int) -> frozenset:
    """Moves visible from i through tau paths that stay inside i's block."""
    sig = set()
    block = blocks[i]
    seen = {i}
    stack = [i]
    while stack:
        m = stack.pop()
        if m in u.terminating:
            sig.add(_TERM_SIG)
        for label, dst in u.out[m]:
            if label == TAU_LABEL and blocks[dst] == block:
                if dst not in seen:
                    seen.add(dst)
                    stack.append(dst)
                continue  # inert move: not part of the signature
            sig.add((label, blocks[dst]))
    return frozenset(sig)


def _branching_partition(u: _Union) -> list[int]:
    blocks = [0] * u.n
    while True:
        sigs = [_branching_signature(u, blocks, i) for i in range(u.n)]
        blocks, changed = _refine(blocks, sigs)
        if not changed:
            return blocks


def _root_signature(u: _Union, blocks: list[int], root: int) -> tuple:
    moves = frozenset((label, blocks[dst]) for label, dst in u.out[root])
    return (moves, root in u.terminating)


def _witness(u: _Union, blocks: list[int]) -> tuple:
    grouped: dict[int, list[tuple[int, int]]] = {}
    for i, b in enumerate(blocks):
        grouped.setdefault(b, []).append((u.side(i), u.local(i)))
    return tuple(tuple(sorted(members)) for _, members in sorted(grouped.items()))


# -- counterexamples ---------------------------------------------------------

def _strong_counterexample(u: _Union, history: list[list[int]]) -> Counterexample:
    def split_round(a: int, b: int) -> int:
        for r, blocks in enumerate(history):
            if blocks[a] != blocks[b]:
                return r
        return -1  # never split: equivalent

    labels: list[str] = []
    a, b = u.roots
    for _ in range(len(history) + 1):
        r = split_round(a, b)
        if r == 0:
            side = "left" if a in u.terminating else "right"
            return Counterexample(tuple(labels), f"only the {side} side terminates here")
        prev = history[r - 1]
        for (x, y) in ((a, b), (b, a)):
            swapped = x != a
            for label, x2 in u.out[x]:
                replies = [y2 for lab, y2 in u.out[y] if lab == label]
                if not replies:
                    labels.append(label)
                    loser = "right" if not swapped else "left"
                    return Counterexample(
                        tuple(labels), f"the {loser} side cannot perform {label}"
                    )
                if all(prev[x2] != prev[y2] for y2 in replies):
                    labels.append(label)
                    best = min(replies, key=lambda y2: split_round(x2, y2))
                    a, b = (x2, best) if not swapped else (best, x2)
                    break
            else:
                continue
            break
        else:  # pragma: no cover - defensive
            return Counterexample(tuple(labels), "graphs are distinguishable")
    return Counterexample(tuple(labels), "graphs are distinguishable")


def _branching_counterexample(
    u: _Union, blocks: list[int], start: tuple[int, int], rooted: bool
) -> Counterexample:
    closure = u.tau_closure()

    def closure_moves(i: int):
        moves = []
        for m in closure[i]:
            for label, dst in u.out[m]:
                if label == TAU_LABEL and blocks[dst] == blocks[i] and blocks[m] == blocks[i]:
                    continue
                moves.append((label, dst))
        return moves

    labels: list[str] = []
    a, b = start
    visited = set()
    first = True
    while (a, b) not in visited:
        visited.add((a, b))
        a_moves = closure_moves(a) if not (rooted and first) else list(u.out[a])
        b_moves = closure_moves(b) if not (rooted and first) else list(u.out[b])
        first = False
        for (x_moves, y_moves, swapped) in ((a_moves, b_moves, False), (b_moves, a_moves, True)):
            for label, x2 in x_moves:
                replies = [y2 for lab, y2 in y_moves if lab == label]
                if not replies:
                    labels.append(label)
                    loser = "right" if not swapped else "left"
                    return Counterexample(
                        tuple(labels),
                        f"the {loser} side cannot perform {label} (even after "
                        "internal steps)",
                    )
                if all(blocks[x2] != blocks[y2] for y2 in replies):
                    labels.append(label)
                    y2 = replies[0]
                    a, b = (x2, y2) if not swapped else (y2, x2)
                    break
            else:
                continue
            break
        else:
            break
    return Counterexample(tuple(labels), "branching structure differs")


# -- public deciders ---------------------------------------------------------

def strong_bisim(g1: ConfigGraph, g2: ConfigGraph,
                 counterexample: bool = True) -> EquivalenceVerdict:
    """Def-style strong equivalence: stepwise label matching plus the
    termination predicate."""
    u = _Union(g1, g2)
    history: list[list[int]] = []
    blocks = _strong_partition(u, history)
    if blocks[u.roots[0]] == blocks[u.roots[1]]:
        return EquivalenceVerdict(True, "strong", witness=_witness(u, blocks))
    cex = _strong_counterexample(u, history) if counterexample else None
    return EquivalenceVerdict(False, "strong", counterexample=cex)


def branching_bisim(g1: ConfigGraph, g2: ConfigGraph,
                    counterexample: bool = True) -> EquivalenceVerdict:
    u = _Union(g1, g2)
    blocks = _branching_partition(u)
    if blocks[u.roots[0]] == blocks[u.roots[1]]:
        return EquivalenceVerdict(True, "branching", witness=_witness(u, blocks))
    cex = (
        _branching_counterexample(u, blocks, u.roots, rooted=False)
        if counterexample
        else None
    )
    return EquivalenceVerdict(False, "branching", counterexample=cex)


def rooted_branching_bisim(g1: ConfigGraph, g2: ConfigGraph,
                           counterexample: bool = True) -> EquivalenceVerdict:
    u = _Union(g1, g2)
    blocks = _branching_partition(u)
    r1, r2 = u.roots
    if _root_signature(u, blocks, r1) == _root_signature(u, blocks, r2):
        return EquivalenceVerdict(True, "rooted-branching", witness=_witness(u, blocks))
    cex = (
        _branching_counterexample(u, blocks, u.roots, rooted=True)
        if counterexample
        else None
    )
    return EquivalenceVerdict(False, "rooted-branching", counterexample=cex)


_DECIDERS = {
    "strong": strong_bisim,
    "branching": branching_bisim,
    "rooted-branching": rooted_branching_bisim,
}


def bisim(g1: ConfigGraph, g2: ConfigGraph, mode: str = "strong",
          counterexample: bool = True) -> EquivalenceVerdict:
    try:
        decide = _DECIDERS[mode]
    except KeyError:
        raise ValueError(f"unknown mode {mode!r}; pick one of {MODES}") from None
    return decide(g1, g2, counterexample=counterexample)


# -- witness validation -------------------------------------------------------

def validate_witness(g1: ConfigGraph, g2: ConfigGraph, verdict: EquivalenceVerdict) -> bool:
    """Re-check the literal defining clauses of the verdict's mode on every
    pair the witness relates (independent of the refinement code paths)."""
    if not verdict.related or verdict.witness is None:
        return False
    u = _Union(g1, g2)
    blocks = [0] * u.n
    for b, members in enumerate(verdict.witness):
        for side, local in members:
            blocks[side * u.n1 + local] = b
    closure = u.tau_closure()

    def ok_strong(p: int, q: int) -> bool:
        if (p in u.terminating) != (q in u.terminating):
            return False
        for label, p2 in u.out[p]:
            if not any(lab == label and blocks[q2] == blocks[p2] for lab, q2 in u.out[q]):
                return False
        return True

    def ok_branching(p: int, q: int) -> bool:
        if p in u.terminating:
            if not any(q0 in u.terminating and blocks[q0] == blocks[p] for q0 in closure[q]):
                return False
        for label, p2 in u.out[p]:
            if label == TAU_LABEL and blocks[p2] == blocks[q]:
                continue
            matched = any(
                blocks[q0] == blocks[p]
                and any(lab == label and blocks[q2] == blocks[p2] for lab, q2 in u.out[q0])
                for q0 in closure[q]
            )
            if not matched:
                return False
        return True

    def pairs():
        for members in verdict.witness:
            nodes = [side * u.n1 + local for side, local in members]
            for i in nodes:
                for j in nodes:
                    if i != j:
                        yield i, j

    if verdict.mode == "strong":
        if blocks[u.roots[0]] != blocks[u.roots[1]]:
            return False
        return all(ok_strong(p, q) for p, q in pairs())

    if not all(ok_branching(p, q) for p, q in pairs()):
        return False
    if verdict.mode == "branching":
        return blocks[u.roots[0]] == blocks[u.roots[1]]
    # rooted-branching: exact first moves into branching-equivalent residues
    r1, r2 = u.roots
    if (r1 in u.terminating) != (r2 in u.terminating):
        return False
    for a, b in ((r1, r2), (r2, r1)):
        for label, a2 in u.out[a]:
            if not any(lab == label and blocks[b2] == blocks[a2] for lab, b2 in u.out[b]):
                return False
    return True


# -- quotients ----------------------------------------------------------------

def _tau_divergent_sccs(graph: ConfigGraph) -> list[set[int]]:
    """Cyclic tau-SCCs with no exit at all (no edge leaving the component,
    no visible edge inside it): the clusters CFAR cannot collapse."""
    tau_g = nx.DiGraph()
    tau_g.add_nodes_from(range(graph.node_count))
    for src, label, dst in graph.edges:
        if label == TAU_LABEL:
            tau_g.add_edge(src, dst)
    bad = []
    for scc in nx.strongly_connected_components(tau_g):
        cyclic = len(scc) > 1 or any(
            tau_g.has_edge(v, v) for v in scc
        )
        if not cyclic:
            continue
        has_exit = any(
            label != TAU_LABEL or dst not in scc
            for v in scc
            for label, dst in graph.out[v]
        )
        if not has_exit:
            bad.append(set(scc))
    return bad


def _single_graph_union(graph: ConfigGraph) -> _Union:
    u = _Union.__new__(_Union)
    u.n1 = graph.node_count
    u.n = graph.node_count
    u.out = [list(row) for row in graph.out]
    u.terminating = set(graph.terminating)
    u.roots = (graph.root, graph.root)
    return u


def minimize(graph: ConfigGraph, mode: str = "strong") -> ConfigGraph:
    """Quotient by the chosen equivalence.  In branching mode this performs
    the graph-level cluster collapse (tau clusters fold onto their exits),
    after verifying the no-divergence precondition."""
    u = _single_graph_union(graph)
    if mode == "strong":
        blocks = _strong_partition(u)
        drop_inert = False
    elif mode in ("branching", "rooted-branching"):
        divergent = _tau_divergent_sccs(graph)
        if divergent:
            raise TauDivergence(
                f"tau cluster(s) without exits: {sorted(map(sorted, divergent))}"
            )
        blocks = _branching_partition(u)
        drop_inert = True
    else:
        raise ValueError(f"unknown mode {mode!r}; pick one of {MODES}")

    block_ids: dict[int, int] = {}
    nodes: list[Configuration] = []
    for i in range(graph.node_count):
        if blocks[i] not in block_ids:
            block_ids[blocks[i]] = len(nodes)
            nodes.append(graph.nodes[i])

    edges: set[tuple[int, str, int]] = set()
    terminating = set()
    for i in range(graph.node_count):
        src = block_ids[blocks[i]]
        if i in graph.terminating:
            terminating.add(src)
        for label, dst in graph.out[i]:
            if drop_inert and label == TAU_LABEL and blocks[dst] == blocks[i]:
                continue
            edges.add((src, label, block_ids[blocks[dst]]))
    root = block_ids[blocks[graph.root]]

    if mode == "rooted-branching":
        # The root may not be folded into its branching block (inert initial
        # tau moves are not inert at the root): give the root its own node
        # unless its exact first moves coincide with the block node's.
        root_moves = {
            (label, block_ids[blocks[dst]]) for label, dst in graph.out[graph.root]
        }
        block_out = {(lab, dst) for src, lab, dst in edges if src == root}
        root_terminated = graph.root in graph.terminating
        if root_moves != block_out or root_terminated != (root in terminating):
            fresh = len(nodes)
            nodes.append(graph.nodes[graph.root])
            for label, dst in root_moves:
                edges.add((fresh, label, dst))
            if root_terminated:
                terminating.add(fresh)
            root = fresh

    return ConfigGraph(nodes, sorted(edges), root, frozenset(terminating),
                       graph.model, graph.ruleset)


# -- clusters (Def-style, on linear specs) ------------------------------------

def find_clusters(
    spec: RecursiveSpec, internal: frozenset[str] | set[str]
) -> list[tuple[frozenset[str], list[tuple[str, str | None]]]]:
    """Clusters of recursion variables connected both ways by summands
    labelled inside internal ∪ {tau}, with their exit summands.

    Exits: a bare-action summand of a cluster member, or an action-variable
    summand whose action is visible or whose variable leaves the cluster.
    """
    if not spec.is_linear():
        raise SpecNotLinear("clusters are defined on linear specifications")
    internal = set(internal)

    def is_internal(action_term: ProcessTerm) -> bool:
        if isinstance(action_term, Silent):
            return True
        return action_term.name in internal

    g = nx.DiGraph()
    g.add_nodes_from(spec.variables())
    summands: dict[str, list[tuple[ProcessTerm, str | None]]] = {}
    for var, rhs in spec.equations:
        entries = []
        for s in flatten_alt(rhs):
            if isinstance(s, Deadlock):
                continue
            if is_action_constant(s):
                entries.append((s, None))
            elif isinstance(s, Seq):
                entries.append((s.left, s.right.name))
                if is_internal(s.left):
                    g.add_edge(var, s.right.name)
        summands[var] = entries

    clusters = []
    for scc in nx.strongly_connected_components(g):
        cluster = frozenset(scc)
        exits: list[tuple[str, str | None]] = []
        for var in sorted(cluster):
            for action_term, target in summands.get(var, ()):
                name = TAU_LABEL if isinstance(action_term, Silent) else action_term.name
                if target is None:
                    exits.append((name, None))
                elif not is_internal(action_term) or target not in cluster:
                    exits.append((name, target))
        clusters.append((cluster, sorted(set(exits), key=lambda e: (e[0], e[1] or ""))))
    clusters.sort(key=lambda c: sorted(c[0]))
    return clusters


# -- term-level comparison ------------------------------------------------------

def _maximal_trace_state(graph: ConfigGraph):
    """Final state of the unique maximal trace, or None if it cycles."""
    i = graph.root
    seen = set()
    while True:
        if i in seen:
            return None
        seen.add(i)
        row = graph.out[i]
        if not row:
            return graph.nodes[i].state
        (_, i), = row


def quantum_bisim_terms(
    p: ProcessTerm,
    q: ProcessTerm,
    model,
    mode: str = "strong",
    max_states: int = 10_000,
    tol: float | None = None,
) -> tuple[EquivalenceVerdict, ReductionReport]:
    """Ground-truth configuration-graph verdict, plus the classical-
    reduction consistency report for deterministic processes (structural
    equivalence and per-trace final-state equality must agree with it)."""
    tol = quantum.PHYS_TOL if tol is None else tol
    g1 = build_graph(p, model, max_states=max_states)
    g2 = build_graph(q, model, max_states=max_states)
    verdict = bisim(g1, g2, mode)
    deterministic = g1.is_deterministic() and g2.is_deterministic()
    if not deterministic:
        return verdict, ReductionReport(False, False)
    s1 = build_structural_graph(p, model, max_states=max_states)
    s2 = build_structural_graph(q, model, max_states=max_states)
    structural = bisim(s1, s2, mode, counterexample=False).related
    f1 = _maximal_trace_state(g1)
    f2 = _maximal_trace_state(g2)
    if f1 is None or f2 is None:
        return verdict, ReductionReport(True, False, structural_related=structural)
    distance = trace_distance(f1, f2)
    reduction_related = structural and distance <= tol
    return verdict, ReductionReport(
        True,
        True,
        structural_related=structural,
        final_state_distance=distance,
        agrees=(reduction_related == verdict.related),
    )
