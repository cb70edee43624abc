"""Subgroup graphs of F_n via Stallings folding.

A :class:`LabeledGraph` stores each undirected edge once as a triple
``(source, target, label)`` with ``label`` in ``1..rank``; the reverse
orientation (carrying the negated label) is implicit.  Folded based graphs
recognize subgroup membership by walking reduced words from the basepoint.

Construction helpers mutate private state only; every returned graph is a
frozen value and safe to share.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Optional, Sequence

from .words import Word

Edge = tuple[int, int, int]  # (source, target, positive label)


@dataclass(frozen=True)
class LabeledGraph:
    """Finite graph with generator-labeled oriented edges.

    ``edges`` may contain parallel copies (a wedge before folding); folding
    removes duplicates.  ``basepoint`` is optional: membership queries need
    it, conjugacy-invariant queries (cores, fiber products of conjugates)
    work basepoint-free.
    """

    rank: int
    num_vertices: int
    edges: tuple[Edge, ...]
    basepoint: Optional[int] = None

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("ambient rank must be >= 1")
        if self.num_vertices < 0:
            raise ValueError("negative vertex count")
        for u, v, l in self.edges:
            if not (0 <= u < self.num_vertices and 0 <= v < self.num_vertices):
                raise ValueError(f"edge ({u},{v},{l}) endpoint out of range")
            if not (1 <= l <= self.rank):
                raise ValueError(f"edge label {l} out of range")
        if self.basepoint is not None and not (0 <= self.basepoint < self.num_vertices):
            raise ValueError("basepoint out of range")

    @cached_property
    def step_map(self) -> dict[tuple[int, int], int]:
        """Map (vertex, signed label) -> next vertex.  Requires a folded graph."""
        m: dict[tuple[int, int], int] = {}
        for u, v, l in self.edges:
            for src, s, dst in ((u, l, v), (v, -l, u)):
                if (src, s) in m:
                    raise ValueError("graph is not folded")
                m[(src, s)] = dst
        return m

    def step(self, vertex: int, signed_label: int) -> Optional[int]:
        return self.step_map.get((vertex, signed_label))


def is_folded(g: LabeledGraph) -> bool:
    seen: set[tuple[int, int]] = set()
    for u, v, l in g.edges:
        for src, s in ((u, l), (v, -l)):
            if (src, s) in seen:
                return False
            seen.add((src, s))
    return True


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if rb < ra:
            ra, rb = rb, ra
        self.parent[rb] = ra
        return True


def fold_with_map(g: LabeledGraph) -> tuple[LabeledGraph, list[int]]:
    """Fold ``g``; also return the vertex map (old id -> new id).

    Repeated passes: identify targets of same-labeled outgoing edges
    (union-find on vertices), deduplicate coincident edges, until stable.
    The basepoint-respecting subgroup recognized by the graph is unchanged.
    """
    uf = _UnionFind(g.num_vertices)
    edges: set[Edge] = set(g.edges)
    while True:
        edges = {(uf.find(u), uf.find(v), l) for u, v, l in edges}
        merged_any = False
        target: dict[tuple[int, int], int] = {}
        for u, v, l in sorted(edges):
            for src, s, dst in ((u, l, v), (v, -l, u)):
                key = (src, s)
                if key in target:
                    if uf.union(uf.find(target[key]), uf.find(dst)):
                        merged_any = True
                else:
                    target[key] = dst
        if not merged_any:
            break
    # compact surviving classes in first-occurrence order
    index: dict[int, int] = {}
    vertex_map = []
    for v in range(g.num_vertices):
        c = uf.find(v)
        if c not in index:
            index[c] = len(index)
        vertex_map.append(index[c])
    new_edges = tuple(sorted({(vertex_map[u], vertex_map[v], l) for u, v, l in edges}))
    base = vertex_map[g.basepoint] if g.basepoint is not None else None
    folded = LabeledGraph(g.rank, max(len(index), 0), new_edges, base)
    return folded, vertex_map


def fold(g: LabeledGraph) -> LabeledGraph:
    return fold_with_map(g)[0]


def subgroup_graph(generators: Sequence[Word], rank: int) -> LabeledGraph:
    """Folded wedge of loops at a basepoint recognizing ⟨generators⟩ ≤ F_rank."""
    edges: list[Edge] = []
    num_vertices = 1  # basepoint is 0
    for w in generators:
        if w.rank != rank:
            raise ValueError("generator rank mismatch")
        if not w.letters:
            continue
        prev = 0
        for i, x in enumerate(w.letters):
            last = i == len(w.letters) - 1
            nxt = 0 if last else num_vertices
            if not last:
                num_vertices += 1
            if x > 0:
                edges.append((prev, nxt, x))
            else:
                edges.append((nxt, prev, -x))
            prev = nxt
    return fold(LabeledGraph(rank, num_vertices, tuple(edges), basepoint=0))


def membership(g: LabeledGraph, w: Word) -> bool:
    """True iff reduced ``w`` reads a closed loop at the basepoint of folded ``g``."""
    if g.basepoint is None:
        raise ValueError("membership needs a based graph")
    pos = g.basepoint
    for x in w.letters:
        nxt = g.step(pos, x)
        if nxt is None:
            return False
        pos = nxt
    return pos == g.basepoint


def valences(g: LabeledGraph) -> list[int]:
    val = [0] * g.num_vertices
    for u, v, _ in g.edges:
        val[u] += 1
        val[v] += 1
    return val


def core(g: LabeledGraph, keep_basepoint: bool = True) -> LabeledGraph:
    """Iteratively delete valence-one vertices (never a kept basepoint).

    Isolated vertices left behind are dropped too (a collapsed forest is the
    empty graph), again excepting a kept basepoint.
    """
    if keep_basepoint and g.basepoint is None:
        keep_basepoint = False
    protected = g.basepoint if keep_basepoint else None

    alive_edges = set(range(len(g.edges)))
    incident: list[set[int]] = [set() for _ in range(g.num_vertices)]
    val = [0] * g.num_vertices
    for i, (u, v, _) in enumerate(g.edges):
        incident[u].add(i)
        incident[v].add(i)
        val[u] += 1
        val[v] += 1

    queue = [v for v in range(g.num_vertices) if val[v] == 1 and v != protected]
    dead = [False] * g.num_vertices
    while queue:
        v = queue.pop()
        if dead[v] or val[v] != 1 or v == protected:
            continue
        dead[v] = True
        (ei,) = (i for i in incident[v] if i in alive_edges)
        alive_edges.discard(ei)
        a, b, _ = g.edges[ei]
        for w in (a, b):
            val[w] -= 1
            if w != v and val[w] == 1 and w != protected:
                queue.append(w)

    keep = [
        v
        for v in range(g.num_vertices)
        if not dead[v] and (val[v] > 0 or v == protected)
    ]
    index = {v: i for i, v in enumerate(keep)}
    new_edges = tuple(
        sorted((index[u], index[v], l) for i, (u, v, l) in enumerate(g.edges) if i in alive_edges)
    )
    base = index[g.basepoint] if keep_basepoint else None
    return LabeledGraph(g.rank, len(keep), new_edges, base)


def component_labels(g: LabeledGraph) -> list[int]:
    """Component index per vertex (undirected connectivity, first-occurrence order)."""
    uf = _UnionFind(g.num_vertices)
    for u, v, _ in g.edges:
        uf.union(u, v)
    index: dict[int, int] = {}
    out = []
    for v in range(g.num_vertices):
        c = uf.find(v)
        if c not in index:
            index[c] = len(index)
        out.append(index[c])
    return out


def graph_rank(g: LabeledGraph) -> int:
    """Sum over components of (edge count − vertex count + 1); ≥ 0."""
    labels = component_labels(g)
    n_comp = max(labels) + 1 if labels else 0
    v_count = [0] * n_comp
    e_count = [0] * n_comp
    for v in range(g.num_vertices):
        v_count[labels[v]] += 1
    for u, _, _ in g.edges:
        e_count[labels[u]] += 1
    return sum(e_count[c] - v_count[c] + 1 for c in range(n_comp))


def subgraph_on(
    g: LabeledGraph, vertex_subset: Iterable[int], basepoint: Optional[int] = None
) -> tuple[LabeledGraph, dict[int, int]]:
    """Induced subgraph on ``vertex_subset``; returns it with the old→new vertex map."""
    keep = sorted(set(vertex_subset))
    index = {v: i for i, v in enumerate(keep)}
    edges = tuple(
        sorted(
            (index[u], index[v], l)
            for u, v, l in g.edges
            if u in index and v in index
        )
    )
    base = index[basepoint] if basepoint is not None else None
    return LabeledGraph(g.rank, len(keep), edges, base), index


def components(g: LabeledGraph) -> list[tuple[LabeledGraph, dict[int, int]]]:
    """Connected components as subgraphs, each with its old→new vertex map.

    The component containing the basepoint (if any) keeps it as basepoint.
    """
    labels = component_labels(g)
    n_comp = max(labels) + 1 if labels else 0
    out = []
    for c in range(n_comp):
        verts = [v for v in range(g.num_vertices) if labels[v] == c]
        base = g.basepoint if g.basepoint is not None and labels[g.basepoint] == c else None
        out.append(subgraph_on(g, verts, base))
    return out


def _bfs_code(g: LabeledGraph, root: int) -> tuple:
    """Deterministic breadth-first code of the component of ``root`` (folded graphs)."""
    signs = [s for i in range(1, g.rank + 1) for s in (i, -i)]
    order = {root: 0}
    queue = [root]
    entries: list[tuple[int, int, int]] = []
    qi = 0
    while qi < len(queue):
        v = queue[qi]
        qi += 1
        for s in signs:
            t = g.step(v, s)
            if t is None:
                continue
            if t not in order:
                order[t] = len(queue)
                queue.append(t)
            entries.append((order[v], s, order[t]))
    return (len(queue), tuple(entries))


def canonical_code(g: LabeledGraph) -> tuple:
    """Isomorphism code for folded labeled graphs.

    Basepointed components are rooted at the basepoint; free components take
    the minimum breadth-first code over all roots.  Two folded graphs are
    isomorphic (as based labeled graphs) iff their codes are equal.
    """
    labels = component_labels(g)
    n_comp = max(labels) + 1 if labels else 0
    codes = []
    for c in range(n_comp):
        verts = [v for v in range(g.num_vertices) if labels[v] == c]
        if g.basepoint is not None and labels[g.basepoint] == c:
            codes.append(("based", _bfs_code(g, g.basepoint)))
        else:
            codes.append(("free", min(_bfs_code(g, v) for v in verts)))
    return (g.rank, tuple(sorted(codes)))
