"""Network models, connectivity, proper colorings and graph matrices.

Graphs are simple and undirected: self-loops and duplicate edges produced
by the random models are dropped at construction. All randomness comes
from numpy's PCG64 generator seeded as default_rng([seed, model_id, stage])
so that a fixed (model, P, seed) triple yields the same edge list on every
platform. Stage 0 draws the primary structure (pair coins, placements,
attachments) and stage 1 draws rewiring decisions where the model has any.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .linalg import InputError

_MODEL_IDS = {
    "erdos_renyi": 1,
    "watts_strogatz": 2,
    "barabasi_albert": 3,
    "geometric": 4,
    "lattice": 5,
}


def _rng(seed: int, model: str, stage: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), _MODEL_IDS[model], stage])


@dataclass(frozen=True)
class Graph:
    """Simple undirected graph on nodes 0..n_nodes-1 with sorted edges (i < j)."""

    n_nodes: int
    edges: tuple[tuple[int, int], ...]

    @classmethod
    def from_edges(cls, n_nodes: int, edges) -> "Graph":
        if n_nodes < 1:
            raise InputError("graph needs at least one node")
        cleaned = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                continue  # drop self-loops
            if not (0 <= i < n_nodes and 0 <= j < n_nodes):
                raise InputError(f"edge ({i},{j}) out of range for {n_nodes} nodes")
            cleaned.add((min(i, j), max(i, j)))
        return cls(n_nodes=n_nodes, edges=tuple(sorted(cleaned)))

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def adjacency(self) -> tuple[tuple[int, ...], ...]:
        neigh = [[] for _ in range(self.n_nodes)]
        for i, j in self.edges:
            neigh[i].append(j)
            neigh[j].append(i)
        return tuple(tuple(sorted(ns)) for ns in neigh)

    @cached_property
    def degrees(self) -> np.ndarray:
        return np.array([len(ns) for ns in self.adjacency], dtype=int)


@dataclass(frozen=True)
class Coloring:
    """Proper node coloring; classes lists the nodes of each color in order."""

    colors: tuple[int, ...]
    n_colors: int
    classes: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if sorted(c for cls in self.classes for c in cls) != list(range(len(self.colors))):
            raise InputError("color classes must partition the node set")


def erdos_renyi(P: int, p: float, seed: int) -> Graph:
    """Each node pair is connected independently with probability p."""
    _check_nodes(P)
    if not 0.0 <= p <= 1.0:
        raise InputError("edge probability must lie in [0, 1]")
    rng = _rng(seed, "erdos_renyi", 0)
    edges = []
    for i in range(P):
        for j in range(i + 1, P):
            if rng.random() < p:
                edges.append((i, j))
    return Graph.from_edges(P, edges)


def watts_strogatz(P: int, n_neighbors: int, p_rewire: float, seed: int) -> Graph:
    """Ring lattice with n neighbors per node, then per-edge random rewiring.

    The base lattice is the circulant graph with distances 1..n/2; for odd n
    the diameter chord i <-> i+P/2 is added (so P must be even), giving every
    node exactly n neighbors. Each original edge is rewired with probability
    p_rewire: one endpoint is kept (chosen with equal probability) and joined
    to a node picked uniformly among its current non-neighbors; rewires with
    no valid partner are skipped.
    """
    _check_nodes(P)
    if not 1 <= n_neighbors < P:
        raise InputError("neighbor count must satisfy 1 <= n < P")
    if not 0.0 <= p_rewire <= 1.0:
        raise InputError("rewiring probability must lie in [0, 1]")
    if n_neighbors % 2 == 1 and P % 2 == 1:
        raise InputError("odd neighbor counts need an even number of nodes")

    edges = set()
    for d in range(1, n_neighbors // 2 + 1):
        for i in range(P):
            edges.add(tuple(sorted((i, (i + d) % P))))
    if n_neighbors % 2 == 1:
        half = P // 2
        for i in range(half):
            edges.add((i, i + half))

    rng = _rng(seed, "watts_strogatz", 1)
    adjacency = {i: set() for i in range(P)}
    for i, j in edges:
        adjacency[i].add(j)
        adjacency[j].add(i)

    for i, j in sorted(edges):
        if rng.random() >= p_rewire:
            continue
        keep = i if rng.random() < 0.5 else j
        drop = j if keep == i else i
        candidates = [w for w in range(P) if w != keep and w not in adjacency[keep]]
        if not candidates:
            continue
        new = candidates[rng.integers(len(candidates))]
        adjacency[i].discard(j)
        adjacency[j].discard(i)
        adjacency[keep].add(new)
        adjacency[new].add(keep)

    final = {(min(i, j), max(i, j)) for i in adjacency for j in adjacency[i]}
    return Graph.from_edges(P, final)


def barabasi_albert(P: int, seed: int) -> Graph:
    """Preferential attachment, one edge per arriving node (yields a tree).

    Attachment probability is proportional to current degree + 1 so that the
    second node can attach to the degree-zero first node.
    """
    _check_nodes(P)
    rng = _rng(seed, "barabasi_albert", 0)
    degrees = np.zeros(P, dtype=float)
    edges = []
    for t in range(1, P):
        weights = degrees[:t] + 1.0
        target = int(rng.choice(t, p=weights / weights.sum()))
        edges.append((target, t))
        degrees[target] += 1
        degrees[t] += 1
    return Graph.from_edges(P, edges)


def geometric(P: int, d: float, seed: int) -> Graph:
    """Nodes uniform on the unit square, connected iff distance < d."""
    _check_nodes(P)
    if d <= 0:
        raise InputError("connection radius must be positive")
    rng = _rng(seed, "geometric", 0)
    pos = rng.random((P, 2))
    edges = []
    for i in range(P):
        for j in range(i + 1, P):
            if np.hypot(*(pos[i] - pos[j])) < d:
                edges.append((i, j))
    return Graph.from_edges(P, edges)


def lattice(P: int) -> Graph:
    """Rectangular grid on P nodes with shape as square as possible.

    Rows is the largest divisor of P not exceeding sqrt(P), so P=50 gives a
    5x10 grid and P=64 an 8x8 one. Nodes are numbered row-major; the grid is
    bipartite by construction.
    """
    _check_nodes(P)
    rows = max(r for r in range(1, int(np.sqrt(P)) + 1) if P % r == 0)
    cols = P // rows
    edges = []
    for r in range(rows):
        for c in range(cols):
            node = r * cols + c
            if c + 1 < cols:
                edges.append((node, node + 1))
            if r + 1 < rows:
                edges.append((node, node + cols))
    return Graph.from_edges(P, edges)


def generate_network(model: str, P: int, seed: int = 0, **params) -> Graph:
    """Build a network from a named model.

    model is one of "erdos_renyi" (param p), "watts_strogatz" (params n, p),
    "barabasi_albert", "geometric" (param d) or "lattice". The result may be
    disconnected; callers that need connectivity should check and retry with
    a different seed.
    """
    if model == "erdos_renyi":
        return erdos_renyi(P, params.pop("p"), seed)
    if model == "watts_strogatz":
        return watts_strogatz(P, params.pop("n"), params.pop("p"), seed)
    if model == "barabasi_albert":
        return barabasi_albert(P, seed)
    if model == "geometric":
        return geometric(P, params.pop("d"), seed)
    if model == "lattice":
        return lattice(P)
    raise InputError(f"unknown network model {model!r}")


def is_connected(g: Graph) -> bool:
    """Breadth-first reachability of all nodes from node 0."""
    seen = np.zeros(g.n_nodes, dtype=bool)
    seen[0] = True
    frontier = [0]
    while frontier:
        nxt = []
        for node in frontier:
            for j in g.adjacency[node]:
                if not seen[j]:
                    seen[j] = True
                    nxt.append(j)
        frontier = nxt
    return bool(seen.all())


def greedy_coloring(g: Graph) -> Coloring:
    """Proper coloring by the descending-degree greedy heuristic.

    Nodes are processed by decreasing degree (ties by index) and each gets
    the smallest color absent among its already-colored neighbors, so the
    result uses at most max degree + 1 colors.
    """
    order = sorted(range(g.n_nodes), key=lambda p: (-g.degrees[p], p))
    colors = [-1] * g.n_nodes
    for p in order:
        used = {colors[j] for j in g.adjacency[p] if colors[j] >= 0}
        c = 0
        while c in used:
            c += 1
        colors[p] = c
    n_colors = max(colors) + 1
    classes = tuple(
        tuple(p for p in range(g.n_nodes) if colors[p] == c) for c in range(n_colors)
    )
    return Coloring(colors=tuple(colors), n_colors=n_colors, classes=classes)


def is_proper(g: Graph, coloring: Coloring) -> bool:
    return all(coloring.colors[i] != coloring.colors[j] for i, j in g.edges)


def incidence_matrix(g: Graph) -> np.ndarray:
    """Node-arc incidence matrix: the column for edge (i, j) with i < j has
    +1 at row i and -1 at row j."""
    B = np.zeros((g.n_nodes, g.n_edges))
    for e, (i, j) in enumerate(g.edges):
        B[i, e] = 1.0
        B[j, e] = -1.0
    return B


def laplacian(g: Graph) -> np.ndarray:
    """Graph Laplacian diag(degrees) - adjacency, a symmetric PSD matrix."""
    L = np.zeros((g.n_nodes, g.n_nodes))
    for i, j in g.edges:
        L[i, j] -= 1.0
        L[j, i] -= 1.0
        L[i, i] += 1.0
        L[j, j] += 1.0
    return L


def save_network(path, g: Graph, coloring: Coloring | None = None) -> None:
    """Write the text format: 'P E' header, one 'i j' line per edge, and an
    optional trailing 'colors c_0 ... c_{P-1}' line."""
    lines = [f"{g.n_nodes} {g.n_edges}"]
    lines += [f"{i} {j}" for i, j in g.edges]
    if coloring is not None:
        lines.append("colors " + " ".join(str(c) for c in coloring.colors))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_network(path) -> tuple[Graph, Coloring | None]:
    with open(path) as fh:
        tokens = [line.split() for line in fh if line.strip()]
    if not tokens or len(tokens[0]) != 2:
        raise InputError("network file must start with a 'P E' line")
    P, E = int(tokens[0][0]), int(tokens[0][1])
    if len(tokens) < 1 + E:
        raise InputError(f"network file declares {E} edges but has fewer lines")
    edges = [(int(t[0]), int(t[1])) for t in tokens[1 : 1 + E]]
    g = Graph.from_edges(P, edges)
    coloring = None
    if len(tokens) > 1 + E:
        tail = tokens[1 + E]
        if tail[0] != "colors" or len(tail) != 1 + P:
            raise InputError("trailing line must be 'colors c_0 ... c_{P-1}'")
        colors = tuple(int(c) for c in tail[1:])
        n_colors = max(colors) + 1
        classes = tuple(tuple(p for p in range(P) if colors[p] == c) for c in range(n_colors))
        coloring = Coloring(colors=colors, n_colors=n_colors, classes=classes)
        if not is_proper(g, coloring):
            raise InputError("network file carries an improper coloring")
    return g, coloring


def _check_nodes(P: int) -> None:
    if P < 2:
        raise InputError("network models need at least 2 nodes")
