"""DAG representation, enumeration, equivalence classes, and structural metrics.

Nodes are integers 0..m-1.  A DAG is stored as one sorted parent tuple per
node.  Markov equivalence is decided through the CPDAG (same skeleton and
v-structures, maximally oriented via Meek's rules R1-R3); both the CPDAG
comparison and the direct (skeleton, v-structures) comparison are exposed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

__all__ = [
    "CycleError",
    "Dag",
    "Cpdag",
    "GraphMetrics",
    "dag_validate",
    "enumerate_dags",
    "to_cpdag",
    "v_structures",
    "compare",
    "shd",
    "count_dags",
]


class CycleError(ValueError):
    """Raised when a parent assignment contains a directed cycle."""

    def __init__(self, cycle: list[int]):
        self.cycle = cycle
        super().__init__(f"directed cycle: {' -> '.join(map(str, cycle + cycle[:1]))}")


@dataclass(frozen=True)
class Dag:
    """Directed acyclic graph as per-node sorted parent tuples."""

    m: int
    parents: tuple[tuple[int, ...], ...]
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if len(self.parents) != self.m:
            raise ValueError(f"need {self.m} parent sets, got {len(self.parents)}")
        object.__setattr__(self, "parents", tuple(tuple(sorted(set(p))) for p in self.parents))
        for v, ps in enumerate(self.parents):
            for u in ps:
                if not 0 <= u < self.m:
                    raise ValueError(f"parent id {u} out of range for m={self.m}")
                if u == v:
                    raise ValueError(f"self-loop at node {v}")
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
            if len(self.labels) != self.m:
                raise ValueError("labels length must equal m")
        cyc = _find_cycle(self.m, self.parents)
        if cyc is not None:
            raise CycleError(cyc)

    @classmethod
    def from_edges(cls, m: int, edges: Iterable[tuple[int, int]], labels: Sequence[str] | None = None) -> "Dag":
        parents: list[list[int]] = [[] for _ in range(m)]
        for u, v in edges:
            parents[v].append(u)
        return cls(m, tuple(tuple(p) for p in parents), tuple(labels) if labels else None)

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for v, ps in enumerate(self.parents) for u in ps]

    @property
    def n_edges(self) -> int:
        return sum(len(p) for p in self.parents)

    def topological_order(self) -> list[int]:
        """Kahn's algorithm; deterministic (smallest ready node first)."""
        indeg = [len(p) for p in self.parents]
        children: list[list[int]] = [[] for _ in range(self.m)]
        for v, ps in enumerate(self.parents):
            for u in ps:
                children[u].append(v)
        ready = sorted(v for v in range(self.m) if indeg[v] == 0)
        order: list[int] = []
        while ready:
            u = ready.pop(0)
            order.append(u)
            for w in children[u]:
                indeg[w] -= 1
                if indeg[w] == 0:
                    ready.append(w)
            ready.sort()
        return order

    def label_of(self, v: int) -> str:
        return self.labels[v] if self.labels is not None else str(v)

    # -- exports -------------------------------------------------------------

    def to_edge_list(self) -> str:
        """One ``u -> v`` line per edge, sorted."""
        lines = [f"{self.label_of(u)} -> {self.label_of(v)}" for u, v in sorted(self.edges())]
        return "\n".join(lines) + ("\n" if lines else "")

    def to_dot(self, name: str = "dag") -> str:
        out = [f"digraph {name} {{"]
        for v in range(self.m):
            out.append(f'  "{self.label_of(v)}";')
        for u, v in sorted(self.edges()):
            out.append(f'  "{self.label_of(u)}" -> "{self.label_of(v)}";')
        out.append("}")
        return "\n".join(out) + "\n"

    def to_json_dict(self) -> dict:
        out = {"m": self.m, "parents": [list(p) for p in self.parents]}
        if self.labels is not None:
            out["labels"] = list(self.labels)
        return out

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Dag":
        labels = tuple(obj["labels"]) if obj.get("labels") else None
        return cls(obj["m"], tuple(tuple(p) for p in obj["parents"]), labels)


def _find_cycle(m: int, parents: Sequence[Sequence[int]]) -> list[int] | None:
    """DFS over the parent relation; returns one directed cycle if any."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = [WHITE] * m
    stack: list[int] = []

    def visit(v: int) -> list[int] | None:
        color[v] = GRAY
        stack.append(v)
        for u in parents[v]:
            if color[u] == GRAY:
                i = stack.index(u)
                cyc = stack[i:]
                return list(reversed(cyc))  # parent relation reverses edge direction
            if color[u] == WHITE:
                found = visit(u)
                if found is not None:
                    return found
        stack.pop()
        color[v] = BLACK
        return None

    for v in range(m):
        if color[v] == WHITE:
            found = visit(v)
            if found is not None:
                return found
    return None


def dag_validate(parents: Sequence[Sequence[int]], labels: Sequence[str] | None = None) -> Dag:
    """Build a Dag, raising CycleError with a witness cycle when invalid."""
    return Dag(len(parents), tuple(tuple(p) for p in parents), tuple(labels) if labels else None)


def enumerate_dags(m: int, labels: Sequence[str] | None = None) -> Iterator[Dag]:
    """Yield every labeled DAG on m nodes exactly once (m <= 5).

    Iterates over the 3^(m(m-1)/2) orientation assignments per unordered
    pair and keeps the acyclic ones.
    """
    if m > 5:
        raise ValueError(f"enumerate_dags supports m <= 5, got {m}")
    pairs = list(itertools.combinations(range(m), 2))
    lab = tuple(labels) if labels else None
    for choice in itertools.product((0, 1, 2), repeat=len(pairs)):
        parents: list[list[int]] = [[] for _ in range(m)]
        for (u, v), c in zip(pairs, choice):
            if c == 1:
                parents[v].append(u)
            elif c == 2:
                parents[u].append(v)
        if _find_cycle(m, parents) is None:
            yield Dag(m, tuple(tuple(p) for p in parents), lab)


def count_dags(m: int) -> int:
    """Number of labeled DAGs on m nodes via the standard inclusion-exclusion
    recurrence a(m) = sum_k (-1)^(k+1) C(m,k) 2^(k(m-k)) a(m-k)."""
    a = [1]
    from math import comb

    for n in range(1, m + 1):
        s = 0
        for k in range(1, n + 1):
            s += (-1) ** (k + 1) * comb(n, k) * 2 ** (k * (n - k)) * a[n - k]
        a.append(s)
    return a[m]


# -- equivalence classes -------------------------------------------------------


@dataclass(frozen=True)
class Cpdag:
    """Completed PDAG: undirected skeleton plus the compelled arrows."""

    m: int
    skeleton: frozenset[frozenset[int]]
    directed: frozenset[tuple[int, int]]

    def __post_init__(self):
        for u, v in self.directed:
            if frozenset((u, v)) not in self.skeleton:
                raise ValueError(f"directed edge {u}->{v} not in skeleton")
        both = {(u, v) for u, v in self.directed} & {(v, u) for u, v in self.directed}
        if both:
            raise ValueError(f"doubly-oriented edges: {both}")

    @property
    def undirected(self) -> frozenset[frozenset[int]]:
        oriented = {frozenset(e) for e in self.directed}
        return frozenset(e for e in self.skeleton if e not in oriented)


def v_structures(dag: Dag) -> frozenset[tuple[int, int, int]]:
    """Colliders a->c<-b with a, b nonadjacent, reported as (min(a,b), max(a,b), c)."""
    adj = {frozenset((u, v)) for u, v in dag.edges()}
    out = set()
    for c in range(dag.m):
        for a, b in itertools.combinations(dag.parents[c], 2):
            if frozenset((a, b)) not in adj:
                out.add((min(a, b), max(a, b), c))
    return frozenset(out)


def to_cpdag(dag: Dag) -> Cpdag:
    """Skeleton plus v-structure arrows, closed under Meek rules R1-R3.

    R4 never fires when the starting orientations come solely from
    v-structures of a DAG, so it is omitted.
    """
    skeleton = frozenset(frozenset((u, v)) for u, v in dag.edges())
    adj: dict[int, set[int]] = {v: set() for v in range(dag.m)}
    for e in skeleton:
        u, v = tuple(e)
        adj[u].add(v)
        adj[v].add(u)

    directed: set[tuple[int, int]] = set()
    for a, b, c in v_structures(dag):
        directed.add((a, c))
        directed.add((b, c))

    def is_undirected(u: int, v: int) -> bool:
        return v in adj[u] and (u, v) not in directed and (v, u) not in directed

    changed = True
    while changed:
        changed = False
        for u, v in itertools.permutations(range(dag.m), 2):
            if not is_undirected(u, v):
                continue
            # R1: w -> u, w and v nonadjacent  =>  u -> v
            if any((w, u) in directed and v not in adj[w] and w != v for w in adj[u]):
                directed.add((u, v))
                changed = True
                continue
            # R2: u -> w -> v  =>  u -> v
            if any((u, w) in directed and (w, v) in directed for w in adj[u] & adj[v]):
                directed.add((u, v))
                changed = True
                continue
            # R3: u - w1 -> v, u - w2 -> v, w1 and w2 nonadjacent  =>  u -> v
            spokes = [w for w in adj[u] & adj[v] if is_undirected(u, w) and (w, v) in directed]
            if any(b not in adj[a] for a, b in itertools.combinations(spokes, 2)):
                directed.add((u, v))
                changed = True
    return Cpdag(dag.m, skeleton, frozenset(directed))


def same_class_by_vstructures(g1: Dag, g2: Dag) -> bool:
    """Verma-Pearl criterion: equal skeletons and equal v-structures."""
    s1 = {frozenset(e) for e in g1.edges()}
    s2 = {frozenset(e) for e in g2.edges()}
    return s1 == s2 and v_structures(g1) == v_structures(g2)


@dataclass(frozen=True)
class GraphMetrics:
    exact_match: bool
    class_match: bool
    shd: int

    def __post_init__(self):
        if self.exact_match and not self.class_match:
            raise ValueError("exact match implies class match")
        if (self.shd == 0) != self.exact_match:
            raise ValueError("shd is 0 exactly for identical graphs")


def shd(truth: Dag, estimate: Dag) -> int:
    """Structural Hamming distance: one unit per pair needing add, delete, or reverse."""
    if truth.m != estimate.m:
        raise ValueError("graphs must share a node count")
    e1 = set(truth.edges())
    e2 = set(estimate.edges())
    dist = 0
    for u, v in itertools.combinations(range(truth.m), 2):
        has1 = ((u, v) in e1, (v, u) in e1)
        has2 = ((u, v) in e2, (v, u) in e2)
        if has1 != has2:
            dist += 1
    return dist


def compare(truth: Dag, estimate: Dag) -> GraphMetrics:
    """Exact-recovery flag, equivalence-class flag, and structural Hamming distance."""
    if truth.m != estimate.m:
        raise ValueError("graphs must share a node count")
    exact = truth.parents == estimate.parents
    klass = to_cpdag(truth) == to_cpdag(estimate)
    return GraphMetrics(exact, klass, shd(truth, estimate))
