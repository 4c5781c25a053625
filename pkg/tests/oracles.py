"""Independent oracles for the test suite.

The bisimulation oracles implement the defining clauses literally as
greatest-fixpoint computations over the node-pair lattice; they share no
code with the partition-refinement deciders they cross-check.
"""

from __future__ import annotations

TAU = "tau"


class UnionView:
    """Two graphs side by side, nodes 0..n1-1 and n1..n1+n2-1."""

    def __init__(self, g1, g2):
        self.n1 = g1.node_count
        self.n = g1.node_count + g2.node_count
        self.out = [list(row) for row in g1.out]
        for row in g2.out:
            self.out.append([(label, dst + self.n1) for label, dst in row])
        self.terminating = set(g1.terminating) | {t + self.n1 for t in g2.terminating}
        self.roots = (g1.root, g2.root + self.n1)
        self.tau_reach = []
        for i in range(self.n):
            seen = {i}
            stack = [i]
            while stack:
                u = stack.pop()
                for label, v in self.out[u]:
                    if label == TAU and v not in seen:
                        seen.add(v)
                        stack.append(v)
            self.tau_reach.append(sorted(seen))


def _gfp(u: UnionView, violates) -> set[tuple[int, int]]:
    relation = {(i, j) for i in range(u.n) for j in range(u.n)}
    changed = True
    while changed:
        changed = False
        for pair in list(relation):
            if pair in relation and violates(u, relation, *pair):
                relation.discard(pair)
                relation.discard((pair[1], pair[0]))
                changed = True
    return relation


def _strong_violates(u, rel, p, q):
    if (p in u.terminating) != (q in u.terminating):
        return True
    for a, p2 in u.out[p]:
        if not any(b == a and (p2, q2) in rel for b, q2 in u.out[q]):
            return True
    for a, q2 in u.out[q]:
        if not any(b == a and (p2, q2) in rel for b, p2 in u.out[p]):
            return True
    return False


def naive_strong(g1, g2) -> bool:
    u = UnionView(g1, g2)
    rel = _gfp(u, _strong_violates)
    return u.roots in rel


def _branching_violates(u, rel, p, q):
    # termination clauses
    if p in u.terminating:
        if not any((p, q0) in rel and q0 in u.terminating for q0 in u.tau_reach[q]):
            return True
    if q in u.terminating:
        if not any((p0, q) in rel and p0 in u.terminating for p0 in u.tau_reach[p]):
            return True
    for a, p2 in u.out[p]:
        if a == TAU and (p2, q) in rel:
            continue
        if not any(
            (p, q0) in rel
            and any(b == a and (p2, q2) in rel for b, q2 in u.out[q0])
            for q0 in u.tau_reach[q]
        ):
            return True
    for a, q2 in u.out[q]:
        if a == TAU and (p, q2) in rel:
            continue
        if not any(
            (p0, q) in rel
            and any(b == a and (p2, q2) in rel for b, p2 in u.out[p0])
            for p0 in u.tau_reach[p]
        ):
            return True
    return False


def naive_branching_relation(g1, g2):
    u = UnionView(g1, g2)
    return u, _gfp(u, _branching_violates)


def naive_branching(g1, g2) -> bool:
    u, rel = naive_branching_relation(g1, g2)
    return u.roots in rel


def naive_rooted_branching(g1, g2) -> bool:
    u, rel = naive_branching_relation(g1, g2)
    r1, r2 = u.roots
    if (r1 in u.terminating) != (r2 in u.terminating):
        return False
    for a, p2 in u.out[r1]:
        if not any(b == a and (p2, q2) in rel for b, q2 in u.out[r2]):
            return False
    for a, q2 in u.out[r2]:
        if not any(b == a and (p2, q2) in rel for b, p2 in u.out[r1]):
            return False
    return True


def naive_verdict(g1, g2, mode: str) -> bool:
    if mode == "strong":
        return naive_strong(g1, g2)
    if mode == "branching":
        return naive_branching(g1, g2)
    if mode == "rooted-branching":
        return naive_rooted_branching(g1, g2)
    raise ValueError(mode)
