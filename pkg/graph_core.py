"""
Oriented graphs, incidence matrices and (weighted) Laplacians.

Edges are stored as (u, v) with u < v, sorted lexicographically, and oriented
from u to v: column j of B has -1 at row u and +1 at row v.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable

import networkx as nx
import numpy as np

from config import settings
from errors import GraphError
from models import PhaseDifferences, WeightVector

logger = logging.getLogger("GraphCore")

GENERATORS = ("complete", "path", "cycle", "star")


@dataclass(frozen=True, eq=False)
class OrientedGraph:
    """
    Simple connected graph with a fixed edge orientation.
    Validation happens at construction; instances are immutable.
    """
    n_vertices: int
    edges: tuple[tuple[int, int], ...]

    def __post_init__(self):
        n = int(self.n_vertices)
        if n < 2:
            raise GraphError(f"graph needs at least 2 vertices, got {n}")

        normalized = []
        for edge in self.edges:
            u, v = (int(x) for x in edge)
            if u == v:
                raise GraphError(f"self-loop at vertex {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) references a vertex outside 0..{n - 1}")
            normalized.append((min(u, v), max(u, v)))

        normalized.sort()
        if len(set(normalized)) != len(normalized):
            raise GraphError("duplicate (parallel) edges are not allowed")

        object.__setattr__(self, "n_vertices", n)
        object.__setattr__(self, "edges", tuple(normalized))

        if not nx.is_connected(self.to_networkx()):
            raise GraphError(f"graph with {n} vertices and {len(normalized)} edges is not connected")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_vertices, dtype=int)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    @property
    def d_max(self) -> int:
        return int(self.degrees.max())

    @property
    def is_tree(self) -> bool:
        return self.n_edges == self.n_vertices - 1

    @property
    def is_complete(self) -> bool:
        return self.n_edges == self.n_vertices * (self.n_vertices - 1) // 2

    @cached_property
    def incidence(self) -> np.ndarray:
        b = incidence_matrix(self)
        b.setflags(write=False)
        return b

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n_vertices))
        g.add_edges_from(self.edges)
        return g

    @classmethod
    def from_networkx(cls, g: nx.Graph) -> OrientedGraph:
        mapping = {node: i for i, node in enumerate(sorted(g.nodes))}
        return cls(len(mapping), tuple((mapping[u], mapping[v]) for u, v in g.edges))

    def __repr__(self) -> str:
        return f"OrientedGraph(n_vertices={self.n_vertices}, n_edges={self.n_edges})"


def incidence_matrix(g: OrientedGraph) -> np.ndarray:
    """N x e incidence matrix; edge (u, v) contributes -1 at row u and +1 at row v."""
    b = np.zeros((g.n_vertices, g.n_edges))
    for j, (u, v) in enumerate(g.edges):
        b[u, j] = -1.0
        b[v, j] = 1.0
    return b


def laplacian(g: OrientedGraph) -> np.ndarray:
    b = g.incidence
    return b @ b.T


def weighted_laplacian(g: OrientedGraph, w: WeightVector | Iterable[float]) -> np.ndarray:
    """
    L_W = B diag(w) B^T.

    Args:
        g: the graph.
        w: one positive weight per edge.

    Returns:
        The N x N weighted Laplacian.
    """
    weights = np.asarray(w, dtype=float)
    if weights.shape != (g.n_edges,):
        raise ValueError(f"expected {g.n_edges} edge weights, got shape {weights.shape}")
    b = g.incidence
    return (b * weights) @ b.T


def phase_differences(g: OrientedGraph, theta) -> PhaseDifferences:
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (g.n_vertices,):
        raise ValueError(f"expected {g.n_vertices} phases, got shape {theta.shape}")
    return PhaseDifferences(g.incidence.T @ theta)


def sinc_values(phi: np.ndarray) -> np.ndarray:
    """Unchecked sin(x)/x with the series branch near zero."""
    phi = np.asarray(phi, dtype=float)
    small = np.abs(phi) < settings.SINC_SERIES_CUTOFF
    safe = np.where(small, 1.0, phi)
    phi2 = phi * phi
    return np.where(small, 1.0 - phi2 / 6.0 + phi2 * phi2 / 120.0, np.sin(safe) / safe)


def sinc_weights(phi: PhaseDifferences | Iterable[float]) -> WeightVector:
    """
    Phase-dependent edge weights w_i = sin(phi_i)/phi_i, so that
    sin(phi) = W(phi) phi.

    Raises:
        ValueError: if any |phi_i| >= pi, where the weight stops being positive.
    """
    phi = np.asarray(phi, dtype=float)
    if np.any(np.abs(phi) >= np.pi):
        raise ValueError("sinc weights require every phase difference in (-pi, pi)")
    return WeightVector(sinc_values(phi))


def flip_orientation(b: np.ndarray, flips) -> np.ndarray:
    """Incidence matrix with the selected columns negated (re-oriented edges)."""
    flips = np.asarray(flips, dtype=bool)
    if flips.shape != (b.shape[1],):
        raise ValueError(f"expected {b.shape[1]} flip flags, got shape {flips.shape}")
    return b * np.where(flips, -1.0, 1.0)


def generate_graph(name: str, n: int) -> OrientedGraph:
    """Named generator: complete(N), path(N), cycle(N) or star(N) with N vertices in total."""
    name = name.strip().lower()
    if n < 2:
        raise GraphError(f"{name}({n}): need at least 2 vertices")
    if name == "complete":
        g = nx.complete_graph(n)
    elif name == "path":
        g = nx.path_graph(n)
    elif name == "cycle":
        if n < 3:
            raise GraphError("cycle needs at least 3 vertices")
        g = nx.cycle_graph(n)
    elif name == "star":
        g = nx.star_graph(n - 1)
    else:
        raise GraphError(f"unknown generator '{name}', expected one of {', '.join(GENERATORS)}")
    return OrientedGraph.from_networkx(g)


def random_connected_graph(n: int, p: float, rng: np.random.Generator, max_tries: int = 1000) -> OrientedGraph:
    """Erdos-Renyi G(n, p) redrawn until connected."""
    for _ in range(max_tries):
        g = nx.gnp_random_graph(n, p, seed=int(rng.integers(2**32)))
        if nx.is_connected(g):
            return OrientedGraph.from_networkx(g)
    raise GraphError(f"no connected G({n}, {p}) drawn in {max_tries} tries")


def parse_edge_list(text: str) -> OrientedGraph:
    """
    Parses the edge-list text format: a header line "N e" followed by e lines
    "u v" with 0-based vertex indices. Blank lines and '#' comments are ignored.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphError(f"line {lineno}: expected two integers, got '{raw.strip()}'")
        try:
            rows.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise GraphError(f"line {lineno}: expected two integers, got '{raw.strip()}'") from None

    if not rows:
        raise GraphError("edge list is empty")

    (n, e), edges = rows[0], rows[1:]
    if e != len(edges):
        raise GraphError(f"header announces {e} edges but {len(edges)} were listed")
    return OrientedGraph(n, tuple(edges))


def read_edge_list(path: str | Path) -> OrientedGraph:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise GraphError(f"edge-list file not found: {path}") from None
    g = parse_edge_list(text)
    logger.info(f"Loaded graph from {path}: N={g.n_vertices}, e={g.n_edges}")
    return g


def format_edge_list(g: OrientedGraph) -> str:
    lines = [f"{g.n_vertices} {g.n_edges}"]
    lines.extend(f"{u} {v}" for u, v in g.edges)
    return "\n".join(lines) + "\n"
