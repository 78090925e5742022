"""Tree-based optimizer over half-cell supervertices (HFS-style).

Each half of a Chimera unit cell is bundled into one 16-state supervertex.
The resulting supergraph is a grid of cells, each holding a horizontal (H)
and a vertical (V) node; H nodes chain along rows, V nodes along columns.
The solver repeatedly picks a maximal induced tree of supervertices and sets
it to its exact minimum conditioned on the states of the other nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .chimera import vertex_id
from .instances import PlantedInstance

__all__ = [
    "HFS_US_PER_OP",
    "SuperGraph",
    "InducedTree",
    "HfsOutcome",
    "condense",
    "sample_induced_tree",
    "comb_tree",
    "tree_minimize",
    "hfs_solve",
    "hfs_model_time",
]

# 0.5 us per operation times 5/4 L serial operations per tree
HFS_US_PER_OP = 0.5
_SERIAL_OPS_PER_L = 1.25

# spin of bit b in state x is 1 - 2 * ((x >> b) & 1)
_BITS = 1 - 2 * ((np.arange(16)[:, None] >> np.arange(4)[None, :]) & 1)


def hfs_model_time(trees: int, L: int) -> float:
    """Model time in microseconds: ``trees * 0.625 * L``."""
    return trees * HFS_US_PER_OP * _SERIAL_OPS_PER_L * L


@dataclass(frozen=True, eq=False)
class SuperGraph:
    """Half-cell condensation of an instance.

    ``tables[e][x_a, x_b]`` is the raw (integer) energy of superedge
    ``edges[e] = (a, b)``. ``qubits[n]`` lists the four dense vertex indices
    of node ``n`` (-1 where broken).
    """

    L: int
    nodes: tuple[tuple[int, int, int], ...]
    qubits: np.ndarray
    edges: tuple[tuple[int, int], ...]
    tables: np.ndarray
    internal: np.ndarray
    adjacency: tuple[tuple[tuple[int, int], ...], ...] = field(repr=False)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def energy(self, states: np.ndarray) -> int:
        states = np.asarray(states)
        e = int(self.internal[np.arange(self.n_nodes), states].sum())
        for k, (a, b) in enumerate(self.edges):
            e += int(self.tables[k, states[a], states[b]])
        return e

    def spins(self, states: np.ndarray, n_vertices: int) -> np.ndarray:
        """Dense spin array for node states."""
        s = np.ones(n_vertices, dtype=np.int8)
        for n, x in enumerate(states):
            for b in range(4):
                q = self.qubits[n, b]
                if q >= 0:
                    s[q] = _BITS[x, b]
        return s

    def states(self, spins: np.ndarray) -> np.ndarray:
        """Node states for a dense spin array (broken bits read as +1)."""
        out = np.zeros(self.n_nodes, dtype=np.int64)
        for n in range(self.n_nodes):
            x = 0
            for b in range(4):
                q = self.qubits[n, b]
                if q >= 0 and spins[q] < 0:
                    x |= 1 << b
            out[n] = x
        return out

    def neighbors(self, n: int) -> list[int]:
        return [m for m, _ in self.adjacency[n]]


def condense(inst: PlantedInstance) -> SuperGraph:
    """Build the supergraph with exact 16x16 superedge energy tables."""
    g = inst.graph
    L = g.L
    pos = g.position
    nodes = []
    qubits = []
    node_of = {}
    for r in range(L):
        for c in range(L):
            for half in (0, 1):
                q = [int(pos[vertex_id(L, r, c, 4 * half + b)]) for b in range(4)]
                if all(x < 0 for x in q):
                    continue
                node_of[(r, c, half)] = len(nodes)
                nodes.append((r, c, half))
                qubits.append(q)
    qubits = np.array(qubits, dtype=np.int64).reshape(-1, 4)
    # locate each graph edge's pair of (node, bit)
    where = {}
    for n, q in enumerate(qubits):
        for b, v in enumerate(q):
            if v >= 0:
                where[int(v)] = (n, b)
    pair_edges: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    for k, (u, v) in enumerate(g.edge_index):
        (na, ba), (nb, bb) = where[int(u)], where[int(v)]
        if na == nb:
            raise AssertionError("Chimera halves have no internal couplers")
        if na > nb:
            na, ba, nb, bb = nb, bb, na, ba
        pair_edges.setdefault((na, nb), []).append((ba, bb, int(inst.raw_couplings[k])))
    edges = tuple(sorted(pair_edges))
    tables = np.zeros((len(edges), 16, 16), dtype=np.int64)
    for k, e in enumerate(edges):
        for ba, bb, J in pair_edges[e]:
            tables[k] += J * np.outer(_BITS[:, ba], _BITS[:, bb])
    adjacency: list[list[tuple[int, int]]] = [[] for _ in nodes]
    for k, (a, b) in enumerate(edges):
        adjacency[a].append((b, k))
        adjacency[b].append((a, k))
    return SuperGraph(
        L=L,
        nodes=tuple(nodes),
        qubits=qubits,
        edges=edges,
        tables=tables,
        internal=np.zeros((len(nodes), 16), dtype=np.int64),
        adjacency=tuple(tuple(sorted(a)) for a in adjacency),
    )


@dataclass(frozen=True)
class InducedTree:
    """Supervertices in insertion order (root first) with parent links."""

    nodes: tuple[int, ...]
    parent: dict[int, int]

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def root(self) -> int:
        return self.nodes[0]

    def coverage(self, sg: SuperGraph) -> float:
        return len(self.nodes) / sg.n_nodes


def _grow(sg: SuperGraph, nodes: list[int], parent: dict[int, int], rng) -> InducedTree:
    """Extend an induced tree greedily with random nodes that touch it exactly once."""
    in_tree = np.zeros(sg.n_nodes, dtype=bool)
    touch = np.zeros(sg.n_nodes, dtype=np.int64)
    for n in nodes:
        in_tree[n] = True
        for m in sg.neighbors(n):
            touch[m] += 1
    while True:
        cand = np.flatnonzero(~in_tree & (touch == 1))
        if cand.size == 0:
            break
        n = int(cand[rng.integers(cand.size)])
        parent[n] = next(m for m in sg.neighbors(n) if in_tree[m])
        nodes.append(n)
        in_tree[n] = True
        for m in sg.neighbors(n):
            touch[m] += 1
    return InducedTree(tuple(nodes), parent)


def sample_induced_tree(sg: SuperGraph, rng=None) -> InducedTree:
    """Random maximal induced tree grown from a uniformly random supervertex."""
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    root = int(rng.integers(sg.n_nodes))
    return _grow(sg, [root], {root: -1}, rng)


def comb_tree(sg: SuperGraph, rng=None) -> InducedTree:
    """Comb template completed greedily to a maximal induced tree.

    The spine is one row of H nodes (or, transposed, one column of V nodes)
    and the teeth are full columns of V nodes (rows of H nodes). On large
    ideal grids the completion covers about 75% of the supervertices.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    node_of = {rc: n for n, rc in enumerate(sg.nodes)}
    L = sg.L
    spine_half = int(rng.integers(2))
    line = int(rng.integers(L))
    # spine: H nodes of row `line` (spine_half == 0) or V nodes of column `line`
    spine = []
    for t in range(L):
        key = (line, t, 0) if spine_half == 0 else (t, line, 1)
        if key in node_of:
            spine.append(node_of[key])
    if not spine:
        return sample_induced_tree(sg, rng)
    nodes = [spine[0]]
    parent = {spine[0]: -1}
    in_tree = {spine[0]}

    def touch(n):
        return sum(1 for m in sg.neighbors(n) if m in in_tree)

    def add(n):
        if n in in_tree or touch(n) != 1:
            return False
        parent[n] = next(m for m in sg.neighbors(n) if m in in_tree)
        nodes.append(n)
        in_tree.add(n)
        return True

    for n in spine[1:]:
        add(n)
    tooth_half = 1 - spine_half
    for t in range(L):
        # walk outward from the spine along the tooth line
        for direction in (1, -1):
            s = line + direction
            while 0 <= s < L:
                key = (s, t, tooth_half) if tooth_half == 1 else (t, s, tooth_half)
                if key not in node_of or not add(node_of[key]):
                    break
                s += direction
        joint = (line, t, tooth_half) if tooth_half == 1 else (t, line, tooth_half)
        if joint in node_of:
            add(node_of[joint])
            for direction in (1, -1):
                s = line + direction
                while 0 <= s < L:
                    key = (s, t, tooth_half) if tooth_half == 1 else (t, s, tooth_half)
                    if key not in node_of or not add(node_of[key]):
                        break
                    s += direction
    return _grow(sg, nodes, parent, rng)


def is_induced_tree(sg: SuperGraph, nodes) -> bool:
    """Connected and acyclic on the induced subgraph."""
    nodes = set(nodes)
    if not nodes:
        return False
    n_edges = sum(1 for a, b in sg.edges if a in nodes and b in nodes)
    if n_edges != len(nodes) - 1:
        return False
    start = next(iter(nodes))
    seen = {start}
    stack = [start]
    while stack:
        n = stack.pop()
        for m in sg.neighbors(n):
            if m in nodes and m not in seen:
                seen.add(m)
                stack.append(m)
    return seen == nodes


def is_maximal(sg: SuperGraph, nodes) -> bool:
    nodes = set(nodes)
    return all(
        sum(1 for m in sg.neighbors(n) if m in nodes) != 1
        for n in range(sg.n_nodes)
        if n not in nodes
    )


def tree_minimize(sg: SuperGraph, tree: InducedTree, states: np.ndarray):
    """Exact minimum over the tree's states with all other nodes held fixed.

    Leaf-to-root min-sum messages, then a root-to-leaf argmin backtrace;
    ties go to the lowest state index. Returns ``(new_states, energy)`` where
    ``energy`` is the raw energy of the whole updated configuration.
    """
    states = np.asarray(states, dtype=np.int64)
    if states.shape != (sg.n_nodes,) or np.any((states < 0) | (states > 15)):
        raise ValueError("states must assign a value in 0..15 to every supervertex")
    in_tree = np.zeros(sg.n_nodes, dtype=bool)
    in_tree[list(tree.nodes)] = True
    cost = {}
    for n in tree.nodes:
        u = sg.internal[n].copy()
        for m, k in sg.adjacency[n]:
            if in_tree[m]:
                continue
            T = sg.tables[k]
            u += T[:, states[m]] if sg.edges[k][0] == n else T[states[m], :]
        cost[n] = u
    edge_to_parent = {}
    for n in tree.nodes[1:]:
        p = tree.parent[n]
        k = next(k for m, k in sg.adjacency[n] if m == p)
        edge_to_parent[n] = sg.tables[k] if sg.edges[k][0] == n else sg.tables[k].T
    choice = {}
    for n in reversed(tree.nodes[1:]):
        total = cost[n][:, None] + edge_to_parent[n]  # rows: child state, cols: parent state
        best = np.argmin(total, axis=0)
        choice[n] = best
        cost[tree.parent[n]] = cost[tree.parent[n]] + total[best, np.arange(16)]
    new = states.copy()
    new[tree.root] = int(np.argmin(cost[tree.root]))
    for n in tree.nodes[1:]:
        new[n] = int(choice[n][new[tree.parent[n]]])
    return new, sg.energy(new)


@dataclass(frozen=True)
class HfsOutcome:
    best_energy: Fraction
    success: bool
    trees_used: int
    wall_model_time: float
    state: np.ndarray = field(repr=False, compare=False, default=None)


def hfs_solve(
    inst: PlantedInstance,
    stall_limit: int = 16,
    rng=None,
    sg: SuperGraph | None = None,
    sampler: str = "random",
) -> HfsOutcome:
    """One descent: random start, tree moves until ``stall_limit`` non-improving trees."""
    if stall_limit < 1:
        raise ValueError("stall_limit must be >= 1")
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    sg = condense(inst) if sg is None else sg
    pick = {"random": sample_induced_tree, "comb": comb_tree}[sampler]
    states = rng.integers(0, 16, size=sg.n_nodes)
    e = sg.energy(states)
    trees = 0
    stall = 0
    while stall < stall_limit:
        states, e_new = tree_minimize(sg, pick(sg, rng), states)
        trees += 1
        stall = 0 if e_new < e else stall + 1
        e = e_new
    return HfsOutcome(
        best_energy=Fraction(e, inst.scale_factor),
        success=e == inst.ground_energy_raw,
        trees_used=trees,
        wall_model_time=hfs_model_time(trees, inst.graph.L),
        state=sg.spins(states, inst.graph.n_vertices),
    )
