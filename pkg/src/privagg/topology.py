"""Undirected logical-link graphs that consensus runs on.

Nodes are dense ids 0..n-1, edges are unordered pairs without self-loops,
and every public constructor guarantees a connected result (random kinds
retry a bounded number of times and then fail loudly).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

CONNECT_RETRIES = 100

GRAPH_KINDS = ("ring", "path", "complete", "random_gnp", "random_geometric")
EVENT_KINDS = ("remove_edge", "add_edge", "remove_node")


class ConnectivityError(RuntimeError):
    """A graph (or a requested mutation of one) cannot satisfy connectivity."""


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph; safe to share across concurrent runs.

    edges holds (i, j) pairs with i < j, sorted; neighbors[i] is the sorted
    tuple N_i derived from them.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    neighbors: tuple[tuple[int, ...], ...]

    def degree(self, i: int) -> int:
        return len(self.neighbors[i])

    def has_edge(self, i: int, j: int) -> bool:
        a, b = (i, j) if i < j else (j, i)
        return b in self.neighbors[a]


def build_graph(n: int, edges: Iterable[tuple[int, int]]) -> Graph:
    """Validate and normalize an edge set into a Graph."""
    if n < 1:
        raise ValueError("node count must be >= 1")
    norm = set()
    for i, j in edges:
        if i == j:
            raise ValueError(f"self-loop ({i},{j}) not allowed")
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i},{j}) references a node outside 0..{n - 1}")
        norm.add((i, j) if i < j else (j, i))
    nbrs: list[list[int]] = [[] for _ in range(n)]
    for i, j in sorted(norm):
        nbrs[i].append(j)
        nbrs[j].append(i)
    return Graph(n, tuple(sorted(norm)), tuple(tuple(sorted(b)) for b in nbrs))


def is_connected(g: Graph) -> bool:
    """True iff one traversal from node 0 reaches every node."""
    seen = [False] * g.n
    seen[0] = True
    queue = deque([0])
    count = 1
    while queue:
        u = queue.popleft()
        for v in g.neighbors[u]:
            if not seen[v]:
                seen[v] = True
                count += 1
                queue.append(v)
    return count == g.n


def _ring_edges(n: int) -> list[tuple[int, int]]:
    if n == 1:
        return []
    if n == 2:
        return [(0, 1)]
    return [(i, (i + 1) % n) for i in range(n)]


def generate(
    kind: str,
    n: int,
    seed: int | None = None,
    p: float | None = None,
    radius: float | None = None,
) -> Graph:
    """Generate a connected graph of the given kind.

    Random kinds (random_gnp needs p, random_geometric needs radius) require a
    seed and are redrawn up to CONNECT_RETRIES times until connected;
    deterministic kinds ignore the seed.
    """
    if n < 1:
        raise ValueError("node count must be >= 1")
    if kind == "ring":
        return build_graph(n, _ring_edges(n))
    if kind == "path":
        return build_graph(n, [(i, i + 1) for i in range(n - 1)])
    if kind == "complete":
        return build_graph(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
    if kind not in GRAPH_KINDS:
        raise ValueError(f"unknown graph kind {kind!r}")

    if seed is None:
        raise ValueError(f"graph kind {kind!r} requires a seed")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    for _ in range(CONNECT_RETRIES):
        if kind == "random_gnp":
            if p is None or not (0.0 <= p <= 1.0):
                raise ValueError("random_gnp requires p in [0, 1]")
            draws = rng.random((n, n))
            edges = [(i, j) for i in range(n) for j in range(i + 1, n) if draws[i, j] < p]
        else:  # random_geometric
            if radius is None or radius <= 0.0:
                raise ValueError("random_geometric requires radius > 0")
            pos = rng.random((n, 2))
            edges = [
                (i, j)
                for i in range(n)
                for j in range(i + 1, n)
                if float(np.hypot(*(pos[i] - pos[j]))) <= radius
            ]
        g = build_graph(n, edges)
        if is_connected(g):
            return g
    raise ConnectivityError(
        f"no connected {kind} graph with n={n} after {CONNECT_RETRIES} draws; "
        "check the kind-specific parameters"
    )


@dataclass(frozen=True)
class TopologyEvent:
    """A scheduled topology change; payload is an (i, j) pair for edge events
    or a node id for remove_node."""

    at_iteration: int
    kind: str
    payload: tuple[int, int] | int

    def __post_init__(self) -> None:
        if self.at_iteration < 0:
            raise ValueError("event iteration must be >= 0")
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")
        if self.kind == "remove_node":
            if not isinstance(self.payload, int):
                raise ValueError("remove_node payload must be a node id")
        elif not (isinstance(self.payload, tuple) and len(self.payload) == 2):
            raise ValueError(f"{self.kind} payload must be an (i, j) pair")


def apply_event(g: Graph, event: TopologyEvent) -> Graph:
    """Apply one event, returning a new Graph; rejects changes that would
    disconnect the surviving graph."""
    if event.kind == "remove_node":
        node = event.payload
        assert isinstance(node, int)
        if not (0 <= node < g.n):
            raise ValueError(f"remove_node: node {node} not in graph")
        if g.n == 1:
            raise ConnectivityError("remove_node: cannot remove the last node")
        keep = [i for i in range(g.n) if i != node]
        remap = {old: new for new, old in enumerate(keep)}
        edges = [
            (remap[i], remap[j]) for i, j in g.edges if i != node and j != node
        ]
        new = build_graph(g.n - 1, edges)
    else:
        i, j = event.payload  # type: ignore[misc]
        if not (0 <= i < g.n and 0 <= j < g.n):
            raise ValueError(f"{event.kind}: edge ({i},{j}) references a missing node")
        if i == j:
            raise ValueError(f"{event.kind}: self-loop ({i},{j}) not allowed")
        a, b = (i, j) if i < j else (j, i)
        present = b in g.neighbors[a]
        if event.kind == "remove_edge":
            if not present:
                raise ValueError(f"remove_edge: ({a},{b}) is not an edge")
            new = build_graph(g.n, [e for e in g.edges if e != (a, b)])
        else:
            if present:
                raise ValueError(f"add_edge: ({a},{b}) already present")
            new = build_graph(g.n, list(g.edges) + [(a, b)])
    if not is_connected(new):
        raise ConnectivityError(
            f"event {event.kind} {event.payload} at iteration {event.at_iteration} "
            "would disconnect the graph; rejected"
        )
    return new


def check_privacy_precondition(g: Graph, i: int, j: int) -> bool:
    """True iff target j has at least one neighbor whose broadcasts observer i
    cannot see, i.e. N_j is not contained in N_i ∪ {i}. Requires j ∈ N_i."""
    if j not in g.neighbors[i]:
        raise ValueError(f"node {j} is not a neighbor of node {i}")
    visible = set(g.neighbors[i]) | {i}
    return not set(g.neighbors[j]) <= visible


def to_edge_list(g: Graph) -> str:
    """Serialize as text: first line n, then one 'i j' line per edge (i < j)."""
    lines = [str(g.n)]
    lines.extend(f"{i} {j}" for i, j in g.edges)
    return "\n".join(lines) + "\n"


def from_edge_list(text: str) -> Graph:
    rows = [line.strip() for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError("empty edge-list text")
    n = int(rows[0])
    edges = []
    for row in rows[1:]:
        parts = row.split()
        if len(parts) != 2:
            raise ValueError(f"malformed edge line {row!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return build_graph(n, edges)


def save_edge_list(g: Graph, path: str | Path) -> None:
    Path(path).write_text(to_edge_list(g))


def load_edge_list(path: str | Path) -> Graph:
    return from_edge_list(Path(path).read_text())
