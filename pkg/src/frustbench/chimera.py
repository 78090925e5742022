"""Chimera graphs and their square L x L subgraphs.

Vertex ids are cell-major and row-major: the cell at row ``r`` and column
``c`` of an ``L x L`` grid owns ids ``8*(r*L + c) + k`` for ``k`` in 0..7.
Qubits 0-3 form the horizontal half of a cell (coupled to the same qubit of
the left/right neighbour cell), qubits 4-7 the vertical half (coupled to the
same qubit of the cell above/below).

Sub-graph ids are those of the sub-graph's own ``L``; :func:`subgraph` remaps
ids from the parent grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = [
    "ChimeraGraph",
    "build_chimera",
    "neighbors",
    "subgraph",
    "vertex_id",
    "vertex_coords",
    "sample_broken_mask",
    "read_graph",
    "write_graph",
    "format_graph",
    "parse_graph",
]


def vertex_id(L: int, row: int, col: int, k: int) -> int:
    return 8 * (row * L + col) + k


def vertex_coords(L: int, v: int) -> tuple[int, int, int]:
    """Inverse of :func:`vertex_id`: ``(row, col, k)``."""
    cell, k = divmod(v, 8)
    row, col = divmod(cell, L)
    return row, col, k


def _ideal_edges(L: int) -> list[tuple[int, int]]:
    edges = []
    for r in range(L):
        for c in range(L):
            for i in range(4):
                for j in range(4, 8):
                    edges.append((vertex_id(L, r, c, i), vertex_id(L, r, c, j)))
            if c + 1 < L:
                for i in range(4):
                    edges.append((vertex_id(L, r, c, i), vertex_id(L, r, c + 1, i)))
            if r + 1 < L:
                for j in range(4, 8):
                    edges.append((vertex_id(L, r, c, j), vertex_id(L, r + 1, c, j)))
    return edges


@dataclass(frozen=True)
class ChimeraGraph:
    """An ``L x L`` Chimera graph with some vertices removed.

    Build with :func:`build_chimera`; the constructor does no validation.
    ``partition_a`` holds the horizontal half of cells with even ``r + c``
    and the vertical half of odd cells, which 2-colours every edge
    (intra-cell and inter-cell alike).
    """

    L: int
    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    broken: frozenset[int] = field(default_factory=frozenset)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_ideal(self) -> int:
        return 8 * self.L * self.L

    def color(self, v: int) -> int:
        """0 for partition A, 1 for partition B."""
        r, c, k = vertex_coords(self.L, v)
        return (int(k >= 4) + r + c) % 2

    @cached_property
    def partition_a(self) -> frozenset[int]:
        return frozenset(v for v in self.vertices if self.color(v) == 0)

    @cached_property
    def partition_b(self) -> frozenset[int]:
        return frozenset(v for v in self.vertices if self.color(v) == 1)

    @cached_property
    def position(self) -> np.ndarray:
        """Map vertex id -> dense index into :attr:`vertices` (-1 if broken)."""
        pos = np.full(self.n_ideal, -1, dtype=np.int64)
        pos[list(self.vertices)] = np.arange(self.n_vertices)
        return pos

    @cached_property
    def edge_index(self) -> np.ndarray:
        """``(n_edges, 2)`` array of dense vertex indices."""
        if not self.edges:
            return np.zeros((0, 2), dtype=np.int64)
        return self.position[np.asarray(self.edges, dtype=np.int64)]

    @cached_property
    def _adjacency(self) -> dict[int, tuple[int, ...]]:
        adj: dict[int, list[int]] = {v: [] for v in self.vertices}
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return {v: tuple(sorted(ns)) for v, ns in adj.items()}

    @cached_property
    def edge_lookup(self) -> dict[tuple[int, int], int]:
        return {e: i for i, e in enumerate(self.edges)}

    def edge_position(self, u: int, v: int) -> int:
        return self.edge_lookup[(u, v) if u < v else (v, u)]

    @cached_property
    def sweep_order(self) -> np.ndarray:
        """Dense indices: partition A ascending, then partition B ascending."""
        a = sorted(self.partition_a)
        b = sorted(self.partition_b)
        return self.position[np.asarray(a + b, dtype=np.int64)]

    def __contains__(self, v: int) -> bool:
        return v in self._adjacency


def build_chimera(L: int, broken: Iterable[int] = ()) -> ChimeraGraph:
    """Build ``C_L`` with the given vertices removed."""
    if int(L) != L or L < 1:
        raise ValueError(f"L must be a positive integer, got {L!r}")
    L = int(L)
    broken = frozenset(int(b) for b in broken)
    bad = [b for b in broken if not 0 <= b < 8 * L * L]
    if bad:
        raise ValueError(f"broken ids out of range for L={L}: {sorted(bad)}")
    vertices = tuple(v for v in range(8 * L * L) if v not in broken)
    edges = tuple(
        sorted(
            (u, v) for u, v in _ideal_edges(L) if u not in broken and v not in broken
        )
    )
    return ChimeraGraph(L=L, vertices=vertices, edges=edges, broken=broken)


def neighbors(g: ChimeraGraph, v: int) -> list[int]:
    if v not in g:
        raise ValueError(f"vertex {v} is broken or outside C_{g.L}")
    return list(g._adjacency[v])


def subgraph(g: ChimeraGraph, L_sub: int) -> ChimeraGraph:
    """Top-left ``L_sub x L_sub`` block of ``g``, ids renumbered for ``L_sub``."""
    if L_sub < 1 or L_sub > g.L:
        raise ValueError(f"L_sub must be in [1, {g.L}], got {L_sub}")
    if L_sub == g.L:
        return g
    broken = []
    for b in g.broken:
        r, c, k = vertex_coords(g.L, b)
        if r < L_sub and c < L_sub:
            broken.append(vertex_id(L_sub, r, c, k))
    return build_chimera(L_sub, broken)


def sample_broken_mask() -> frozenset[int]:
    """A 9-qubit mask on C_8 whose nested C_2..C_8 sizes are 31, 70, 126, 198, 284, 385, 503.

    The real device's faulty qubits are not known; this is example
    configuration, not ground truth.
    """
    text = resources.files("frustbench").joinpath("data/broken_mask_c8.txt").read_text()
    ids = []
    for line in text.splitlines():
        ids.extend(int(tok) for tok in line.split("#", 1)[0].split())
    return frozenset(ids)


# -- serialization -----------------------------------------------------------


def format_graph(g: ChimeraGraph) -> str:
    lines = [f"chimera L={g.L}", "broken: " + " ".join(str(b) for b in sorted(g.broken))]
    lines.extend(f"edge {u} {v}" for u, v in g.edges)
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> ChimeraGraph:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("chimera L="):
        raise ValueError("graph record must start with 'chimera L=<int>'")
    L = int(lines[0].split("=", 1)[1])
    if len(lines) < 2 or not lines[1].startswith("broken:"):
        raise ValueError("second line must be 'broken: <ids>'")
    broken = [int(t) for t in lines[1].split(":", 1)[1].split()]
    g = build_chimera(L, broken)
    edges = tuple(tuple(int(t) for t in ln.split()[1:3]) for ln in lines[2:] if ln.strip())
    if edges != g.edges:
        raise ValueError("edge list does not match the Chimera topology for this mask")
    return g


def write_graph(g: ChimeraGraph, path: str | Path) -> None:
    Path(path).write_text(format_graph(g))


def read_graph(path: str | Path) -> ChimeraGraph:
    return parse_graph(Path(path).read_text())
