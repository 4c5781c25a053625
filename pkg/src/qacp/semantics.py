"""Operational semantics: configurations, the transition function, and
rooted configuration-graph construction.

A configuration pairs a process term with the current density matrix; the
termination marker is represented by a None term.  Transitions are derived
structurally from the term, so the quantum state never influences which
rules fire — it evolves along quantum-action edges and is carried
unchanged along classical ones.

Rule sets ("bqpa" < "qpap" < "aqcp" < "aqcp_tau" < "full") expose the
layered transition-rule tables so conservative-extension checks can build
the same graph from different table subsets.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import (
    DepthExceeded,
    HiddenActionDisturbsPublicState,
    StateSpaceExceeded,
    UnboundVariable,
    UnsupportedOperator,
)
from .model import Model
from .quantum import PUBLIC_TOL, QuantumState, trace_distance
from .terms import (
    Abstract,
    Alt,
    ClassicalAction,
    CommMerge,
    Deadlock,
    Encap,
    LeftMerge,
    Merge,
    ProcessTerm,
    QuantumAction,
    RecVar,
    Rename,
    RecursiveSpec,
    Seq,
    Silent,
    TAU_LABEL,
    build_alt,
    format_term,
    term_key,
)

__all__ = [
    "Configuration",
    "ConfigGraph",
    "RULESETS",
    "step",
    "build_graph",
    "build_structural_graph",
    "linearize",
    "to_aut",
    "to_dot",
    "to_json_dict",
]

DEFAULT_MAX_STATES = 10_000

RULESETS: dict[str, frozenset[type]] = {}
RULESETS["bqpa"] = frozenset({QuantumAction, ClassicalAction, Alt, Seq})
RULESETS["qpap"] = RULESETS["bqpa"] | {Merge, LeftMerge, CommMerge}
RULESETS["aqcp"] = RULESETS["qpap"] | {Deadlock, Encap, RecVar}
RULESETS["aqcp_tau"] = RULESETS["aqcp"] | {Silent, Abstract}
RULESETS["full"] = RULESETS["aqcp_tau"] | {Rename}

_MAX_UNFOLD = 10_000

# A transition effect describes what happens to the quantum part:
#   None                 state unchanged (classical action, tau constant)
#   ("op", action)       apply the action's Kraus set
#   ("hide", effect)     apply the inner effect; the public reduced state
#                        must stay fixed (the action was abstracted to tau)
Effect = object


def structural_step(
    term: ProcessTerm, model: Model, ruleset: str = "full"
) -> list[tuple[str, Effect, ProcessTerm | None]]:
    """Structural transitions (label, effect, successor); successor None
    means successful termination."""
    allowed = RULESETS[ruleset]
    cache = getattr(model, "_sos_cache", None)
    if cache is None:
        cache = {}
        model._sos_cache = cache
    key = (term, ruleset)
    hit = cache.get(key)
    if hit is None:
        hit = _structural_step(term, model, allowed, 0)
        cache[key] = hit
    return hit


def _structural_step(term, model, allowed, unfold_depth):
    if type(term) not in allowed:
        raise UnsupportedOperator(
            f"operator {type(term).__name__} has no transition rules in this rule set"
        )
    if isinstance(term, QuantumAction):
        return [(term.name, ("op", term.name), None)]
    if isinstance(term, ClassicalAction):
        return [(term.name, None, None)]
    if isinstance(term, Silent):
        return [(TAU_LABEL, None, None)]
    if isinstance(term, Deadlock):
        return []
    if isinstance(term, Alt):
        return _structural_step(term.left, model, allowed, unfold_depth) + _structural_step(
            term.right, model, allowed, unfold_depth
        )
    if isinstance(term, Seq):
        out = []
        for label, eff, succ in _structural_step(term.left, model, allowed, unfold_depth):
            out.append((label, eff, term.right if succ is None else Seq(succ, term.right)))
        return out
    if isinstance(term, (Merge, LeftMerge, CommMerge)):
        lefts = _structural_step(term.left, model, allowed, unfold_depth)
        rights = _structural_step(term.right, model, allowed, unfold_depth)
        out = []
        if isinstance(term, (Merge, LeftMerge)):
            for label, eff, succ in lefts:
                out.append((label, eff, term.right if succ is None else Merge(succ, term.right)))
        if isinstance(term, Merge):
            for label, eff, succ in rights:
                out.append((label, eff, term.left if succ is None else Merge(term.left, succ)))
        if isinstance(term, (Merge, CommMerge)):
            for la, ea, sa in lefts:
                for lb, eb, sb in rights:
                    result = model.gamma_get(la, lb)
                    if result is None:
                        continue
                    if sa is None and sb is None:
                        succ = None
                    elif sa is None:
                        succ = sb
                    elif sb is None:
                        succ = sa
                    else:
                        succ = Merge(sa, sb)
                    out.append((result, None, succ))
        return out
    if isinstance(term, Encap):
        out = []
        for label, eff, succ in _structural_step(term.body, model, allowed, unfold_depth):
            if label in term.hide:
                continue
            out.append((label, eff, None if succ is None else Encap(term.hide, succ)))
        return out
    if isinstance(term, Abstract):
        out = []
        for label, eff, succ in _structural_step(term.body, model, allowed, unfold_depth):
            wrapped = None if succ is None else Abstract(term.internal, succ)
            if label in term.internal:
                out.append((TAU_LABEL, ("hide", eff), wrapped))
            else:
                out.append((label, eff, wrapped))
        return out
    if isinstance(term, Rename):
        out = []
        for label, eff, succ in _structural_step(term.body, model, allowed, unfold_depth):
            new_label = label if label == TAU_LABEL else term.apply(label)
            out.append((new_label, eff, None if succ is None else Rename(term.mapping, succ)))
        return out
    if isinstance(term, RecVar):
        if unfold_depth > _MAX_UNFOLD:
            raise UnboundVariable(f"recursion through {term.name} does not guard")
        body = model.rhs_of(term.name)
        return _structural_step(body, model, allowed, unfold_depth + 1)
    raise UnsupportedOperator(f"no transition rules for {term!r}")


@dataclass(frozen=True, eq=False)
class Configuration:
    """A process term paired with a quantum state; term None is the
    termination marker, state None marks a structural (state-free) node."""

    term: ProcessTerm | None
    state: QuantumState | None

    @property
    def terminated(self) -> bool:
        return self.term is None

    def key(self) -> tuple:
        return (self.term, self.state.key() if self.state is not None else None)


def _apply_effect(state: QuantumState, effect, model: Model) -> QuantumState:
    if effect is None:
        return state
    kind = effect[0]
    if kind == "op":
        return model.apply_action(state, effect[1])
    # hidden action: private registers may move, the public view must not
    new_state = _apply_effect(state, effect[1], model)
    before = state.public_reduced()
    after = new_state.public_reduced()
    if trace_distance(before, after) > PUBLIC_TOL:
        raise HiddenActionDisturbsPublicState(
            "an abstracted action changed the public reduced state"
        )
    return new_state


def step(
    config: Configuration, model: Model, ruleset: str = "full"
) -> list[tuple[str, Configuration]]:
    """Successors of a configuration under the selected rule table, sorted
    deterministically and deduplicated."""
    if config.terminated:
        return []
    moves = structural_step(config.term, model, ruleset)
    out: dict[tuple, tuple[str, Configuration]] = {}
    for label, effect, succ_term in moves:
        if config.state is None:
            succ = Configuration(succ_term, None)
        else:
            succ = Configuration(succ_term, _apply_effect(config.state, effect, model))
        out.setdefault((label,) + _succ_sort_key(succ), (label, succ))
    return [out[k] for k in sorted(out)]


def _succ_sort_key(config: Configuration) -> tuple:
    tkey = term_key(config.term) if config.term is not None else ()
    skey = config.state.key() if config.state is not None else ""
    return (tkey, skey)


@dataclass(eq=False)
class ConfigGraph:
    """Rooted, finitely-branching LTS over configurations."""

    nodes: list[Configuration]
    edges: list[tuple[int, str, int]]
    root: int
    terminating: frozenset[int]
    model: Model | None = None
    ruleset: str = "full"
    _out: list[list[tuple[str, int]]] | None = field(default=None, repr=False)

    @property
    def out(self) -> list[list[tuple[str, int]]]:
        if self._out is None:
            table: list[list[tuple[str, int]]] = [[] for _ in self.nodes]
            for src, label, dst in self.edges:
                table[src].append((label, dst))
            self._out = table
        return self._out

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    def labels(self) -> set[str]:
        return {label for _, label, _ in self.edges}

    def is_deterministic(self) -> bool:
        return all(len(row) <= 1 for row in self.out)

    def skeleton(self) -> tuple:
        """Structure-only fingerprint (node ids, edges, termination)."""
        return (self.node_count, tuple(self.edges), tuple(sorted(self.terminating)), self.root)


def _build(
    root: Configuration,
    model: Model,
    ruleset: str,
    max_states: int,
    max_depth: int | None,
) -> ConfigGraph:
    ids: dict[tuple, int] = {root.key(): 0}
    nodes = [root]
    depths = [0]
    edges: list[tuple[int, str, int]] = []
    terminating = set()
    if root.terminated:
        terminating.add(0)
    frontier = [0]
    while frontier:
        next_frontier: list[int] = []
        for src in frontier:
            config = nodes[src]
            if config.terminated:
                continue
            for label, succ in step(config, model, ruleset):
                key = succ.key()
                dst = ids.get(key)
                if dst is None:
                    if len(nodes) >= max_states:
                        raise StateSpaceExceeded(
                            f"more than {max_states} configurations reachable"
                        )
                    depth = depths[src] + 1
                    if max_depth is not None and depth > max_depth:
                        raise DepthExceeded(
                            f"configurations reachable beyond depth {max_depth}"
                        )
                    dst = len(nodes)
                    ids[key] = dst
                    nodes.append(succ)
                    depths.append(depth)
                    if succ.terminated:
                        terminating.add(dst)
                    next_frontier.append(dst)
                edges.append((src, label, dst))
        frontier = next_frontier
    return ConfigGraph(nodes, edges, 0, frozenset(terminating), model, ruleset)


def build_graph(
    root_term: ProcessTerm,
    model: Model,
    max_states: int = DEFAULT_MAX_STATES,
    max_depth: int | None = None,
    ruleset: str = "full",
) -> ConfigGraph:
    """Breadth-first closure of step from <root_term, initial state>,
    deduplicating on (term structure, state key)."""
    return _build(Configuration(root_term, model.state()), model, ruleset, max_states, max_depth)


def build_structural_graph(
    root_term: ProcessTerm,
    model: Model,
    max_states: int = DEFAULT_MAX_STATES,
    max_depth: int | None = None,
    ruleset: str = "full",
) -> ConfigGraph:
    """The classical LTS of the term: states are ignored entirely."""
    return _build(Configuration(root_term, None), model, ruleset, max_states, max_depth)


# -- linearization ---------------------------------------------------------

def linearize(graph: ConfigGraph) -> RecursiveSpec:
    """Present a finite graph as the guarded linear spec it solves: one
    variable per non-terminated node, one summand per edge (bare action
    for edges into termination)."""
    model = graph.model
    names: dict[int, str] = {}
    counter = 0
    for i in range(graph.node_count):
        if i not in graph.terminating:
            counter += 1
            names[i] = f"X{counter}"

    def action_term(label: str) -> ProcessTerm:
        if label == TAU_LABEL:
            return Silent()
        if model is not None and model.is_quantum(label):
            return QuantumAction(label)
        return ClassicalAction(label)

    equations = []
    for i in range(graph.node_count):
        if i in graph.terminating:
            continue
        summands = []
        for label, dst in graph.out[i]:
            head = action_term(label)
            if dst in graph.terminating:
                summands.append(head)
            else:
                summands.append(Seq(head, RecVar(names[dst])))
        summands.sort(key=term_key)
        equations.append((names[i], build_alt(summands)))
    return RecursiveSpec(tuple(equations))


# -- exports ---------------------------------------------------------------

def to_aut(graph: ConfigGraph) -> str:
    """Aldebaran format; termination becomes a distinguished "tick" edge
    into a fresh sink state."""
    lines = []
    edges = list(graph.edges)
    states = graph.node_count
    if graph.terminating:
        sink = states
        states += 1
        for t in sorted(graph.terminating):
            edges.append((t, "tick", sink))
    lines.append(f"des ({graph.root}, {len(edges)}, {states})")
    for src, label, dst in edges:
        lines.append(f'({src},"{label}",{dst})')
    return "\n".join(lines) + "\n"


def _node_label(config: Configuration) -> str:
    if config.terminated:
        return "(term)"
    return format_term(config.term)


def to_dot(graph: ConfigGraph) -> str:
    lines = ["digraph lts {", "  rankdir=LR;", '  __init [shape=point, label=""];']
    for i, node in enumerate(graph.nodes):
        shape = "doublecircle" if i in graph.terminating else "circle"
        text = _node_label(node).replace('"', '\\"')
        lines.append(f'  n{i} [shape={shape}, label="{i}: {text}"];')
    lines.append(f"  __init -> n{graph.root};")
    for src, label, dst in graph.edges:
        lines.append(f'  n{src} -> n{dst} [label="{label}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def to_json_dict(graph: ConfigGraph, include_states: bool = False) -> dict:
    nodes = []
    for i, node in enumerate(graph.nodes):
        entry: dict = {
            "id": i,
            "term": None if node.terminated else format_term(node.term),
            "terminated": node.terminated,
        }
        if include_states and node.state is not None:
            entry["state"] = [
                [[float(z.real), float(z.imag)] for z in row] for row in node.state.matrix
            ]
        nodes.append(entry)
    return {
        "root": graph.root,
        "nodes": nodes,
        "edges": [[src, label, dst] for src, label, dst in graph.edges],
    }
