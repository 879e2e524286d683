"""Hardware coupling graphs and their vertex colorings."""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field


@dataclass(frozen=True)
class LayoutGraph:
    n_qubits: int
    edges: tuple = field(default_factory=tuple)
    name: str = ""

    def __post_init__(self):
        seen = set()
        clean = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop on qubit {i}")
            if not (0 <= i < self.n_qubits and 0 <= j < self.n_qubits):
                raise ValueError(f"edge {(i, j)} out of range")
            key = (min(i, j), max(i, j))
            if key in seen:
                continue
            seen.add(key)
            clean.append(key)
        object.__setattr__(self, "edges", tuple(clean))

    def adjacency(self) -> list[list[int]]:
        adj = [[] for _ in range(self.n_qubits)]
        for i, j in self.edges:
            adj[i].append(j)
            adj[j].append(i)
        return adj

    def degree(self, q: int) -> int:
        return len(self.adjacency()[q])

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in set(self.edges)


def chain(n: int) -> LayoutGraph:
    return LayoutGraph(n, tuple((k, k + 1) for k in range(n - 1)), f"chain:{n}")


def ring(n: int) -> LayoutGraph:
    if n < 3:
        return chain(n)
    return LayoutGraph(n, tuple((k, (k + 1) % n) for k in range(n)), f"ring:{n}")


def square(rows: int, cols: int) -> LayoutGraph:
    idx = lambda r, c: r * cols + c  # noqa: E731
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((idx(r, c), idx(r, c + 1)))
            if r + 1 < rows:
                edges.append((idx(r, c), idx(r + 1, c)))
    return LayoutGraph(rows * cols, tuple(edges), f"square:{rows}x{cols}")


def triangle() -> LayoutGraph:
    return LayoutGraph(3, ((0, 1), (1, 2), (0, 2)), "triangle")


def heavy_hex(rows: int, cols: int) -> LayoutGraph:
    """Heavy-hexagon patch: a hexagonal (brick-wall) lattice with an extra qubit on every edge.

    ``rows x cols`` counts hexagonal cells. Built as a brick wall of
    ``rows + 1`` horizontal lines joined by alternating vertical rungs, then
    each coupling is subdivided. The result is bipartite by construction.
    """
    if rows < 1 or cols < 1:
        raise ValueError("heavy-hex needs at least one cell")
    width = 2 * cols + 1
    nodes = {}

    def node(key):
        if key not in nodes:
            nodes[key] = len(nodes)
        return nodes[key]

    base = []
    for r in range(rows + 1):
        for c in range(width - 1):
            base.append(((r, c), (r, c + 1)))
    for r in range(rows):
        for c in range(0, width, 2):
            # rungs alternate parity between rows so every cell is a hexagon
            cc = c + (r % 2)
            if cc < width:
                base.append(((r, cc), (r + 1, cc)))
    edges = []
    for u, v in base:
        a, b = node(("q",) + u), node(("q",) + v)
        m = node(("m", u, v))
        edges += [(a, m), (m, b)]
    return LayoutGraph(len(nodes), tuple(edges), f"heavy-hex:{rows}x{cols}")


def preset(name: str) -> LayoutGraph:
    """Resolve ``heavy-hex:RxC``, ``ring:N``, ``chain:N``, ``square:NxM`` or ``triangle``."""
    name = name.strip()
    if name == "triangle":
        return triangle()
    m = re.fullmatch(r"(heavy-hex|square):(\d+)x(\d+)", name)
    if m:
        kind, r, c = m.group(1), int(m.group(2)), int(m.group(3))
        return heavy_hex(r, c) if kind == "heavy-hex" else square(r, c)
    m = re.fullmatch(r"(ring|chain):(\d+)", name)
    if m:
        n = int(m.group(2))
        return ring(n) if m.group(1) == "ring" else chain(n)
    raise ValueError(f"unknown layout preset {name!r}")


def bipartition(g: LayoutGraph) -> dict | None:
    adj = g.adjacency()
    color = {}
    for start in range(g.n_qubits):
        if start in color:
            continue
        color[start] = 0
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if v not in color:
                    color[v] = 1 - color[u]
                    queue.append(v)
                elif color[v] == color[u]:
                    return None
    return color


def color_layout(g: LayoutGraph) -> dict[int, int]:
    """Proper vertex coloring: two colors for bipartite graphs, greedy by descending degree otherwise."""
    if g.n_qubits == 0:
        return {}
    if not g.edges:
        return {q: 0 for q in range(g.n_qubits)}
    two = bipartition(g)
    if two is not None:
        return dict(sorted(two.items()))
    adj = g.adjacency()
    order = sorted(range(g.n_qubits), key=lambda q: (-len(adj[q]), q))
    color = {}
    for q in order:
        used = {color[v] for v in adj[q] if v in color}
        c = 0
        while c in used:
            c += 1
        color[q] = c
    return dict(sorted(color.items()))


def is_proper(g: LayoutGraph, coloring: dict) -> bool:
    return all(coloring[i] != coloring[j] for i, j in g.edges)
