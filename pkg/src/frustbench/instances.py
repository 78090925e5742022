"""Frustrated-loop Ising instances with a planted ground state.

An instance is a sum of loop clauses. Each clause couples the edges of a
closed random-walk loop ferromagnetically with respect to a planted spin
configuration, then flips the sign of one coupling. The planted state
minimizes every clause at once, so it is a ground state of the sum.

Spin configurations are ``int8`` arrays of +1/-1 aligned with
``graph.vertices``; mappings ``{vertex id: spin}`` are accepted wherever a
configuration is an input.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .chimera import ChimeraGraph, build_chimera, neighbors

__all__ = [
    "LoopClause",
    "PlantedInstance",
    "NoisyInstance",
    "LoopNotFoundError",
    "plant_solution",
    "random_loop",
    "make_clause",
    "assemble_instance",
    "clause_count",
    "energy",
    "raw_energy",
    "raw_energies",
    "as_spin_array",
    "frustration_fraction",
    "inject_noise",
    "format_instance",
    "parse_instance",
    "write_instance",
    "read_instance",
]


class LoopNotFoundError(RuntimeError):
    """No loop of the requested minimum length was found within the retry cap."""


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def as_spin_array(g: ChimeraGraph, c) -> np.ndarray:
    """Coerce a configuration (array or mapping) to an array aligned with ``g.vertices``."""
    if isinstance(c, Mapping):
        if set(c) != set(g.vertices):
            raise ValueError("configuration domain differs from the graph's working vertices")
        arr = np.array([c[v] for v in g.vertices], dtype=np.int8)
    else:
        arr = np.asarray(c)
        if arr.shape != (g.n_vertices,):
            raise ValueError(
                f"configuration has shape {arr.shape}, expected ({g.n_vertices},)"
            )
        arr = arr.astype(np.int8, copy=False)
    if not np.all(np.abs(arr) == 1):
        raise ValueError("spins must be +1 or -1")
    return arr


def plant_solution(g: ChimeraGraph, seed=None) -> np.ndarray:
    """Independent fair +/-1 spin per working vertex."""
    rng = _rng(seed)
    return (2 * rng.integers(0, 2, size=g.n_vertices) - 1).astype(np.int8)


def random_loop(
    g: ChimeraGraph, rng=None, min_len: int = 8, max_retries: int = 10_000
) -> tuple[int, ...]:
    """Random simple cycle of length >= ``min_len`` found by a non-backtracking walk.

    The walker starts on a uniformly random vertex and steps to a uniformly
    random neighbour other than the one it just left. It stops on the first
    revisit; the path before the revisited vertex is discarded. Too-short
    cycles and dead ends are retried with fresh randomness.
    """
    if min_len < 4 or min_len % 2:
        raise ValueError("min_len must be even and >= 4")
    rng = _rng(rng)
    verts = g.vertices
    if not verts:
        raise LoopNotFoundError("graph has no working vertices")
    adj = g._adjacency
    for _ in range(max_retries):
        cur = verts[rng.integers(len(verts))]
        path = [cur]
        seen = {cur: 0}
        prev = None
        while True:
            options = [u for u in adj[cur] if u != prev]
            if not options:
                break
            nxt = options[rng.integers(len(options))]
            if nxt in seen:
                cycle = tuple(path[seen[nxt]:])
                if len(cycle) >= min_len:
                    return cycle
                break
            seen[nxt] = len(path)
            path.append(nxt)
            prev, cur = cur, nxt
    raise LoopNotFoundError(
        f"no loop of length >= {min_len} on C_{g.L} after {max_retries} attempts"
    )


@dataclass(frozen=True)
class LoopClause:
    """One frustrated loop: ``couplings[i]`` sits on edge ``(path[i], path[i+1 mod l])``."""

    path: tuple[int, ...]
    couplings: tuple[int, ...]
    flipped: int

    def __len__(self) -> int:
        return len(self.path)

    @property
    def edges(self) -> list[tuple[int, int]]:
        n = len(self.path)
        return [(self.path[i], self.path[(i + 1) % n]) for i in range(n)]

    def energy(self, spins: Mapping[int, int]) -> int:
        return sum(
            J * spins[u] * spins[v] for J, (u, v) in zip(self.couplings, self.edges)
        )

    @property
    def ground_energy(self) -> int:
        return -(len(self.path) - 2)


def make_clause(loop: Sequence[int], planted: Mapping[int, int], rng=None) -> LoopClause:
    """Ferromagnetic couplings w.r.t. ``planted`` on ``loop``, one chosen at random flipped."""
    rng = _rng(rng)
    n = len(loop)
    couplings = [-planted[loop[i]] * planted[loop[(i + 1) % n]] for i in range(n)]
    flipped = int(rng.integers(n))
    couplings[flipped] = -couplings[flipped]
    return LoopClause(tuple(int(v) for v in loop), tuple(int(J) for J in couplings), flipped)


def clause_count(alpha, n_vertices: int) -> int:
    """``round(alpha * N)``, halves rounded up, computed exactly."""
    x = Fraction(str(alpha)) * n_vertices
    return math.floor(x + Fraction(1, 2))


@dataclass(frozen=True, eq=False)
class PlantedInstance:
    """Sum of loop clauses on ``graph``; couplings kept as exact integers.

    ``raw_couplings`` is aligned with ``graph.edges`` and includes zeros for
    edges no loop touched. Rescaled couplings are ``raw / scale_factor``.
    """

    graph: ChimeraGraph
    clauses: tuple[LoopClause, ...]
    raw_couplings: np.ndarray
    scale_factor: int
    planted: np.ndarray
    alpha: Fraction
    seed: int | None = None
    min_len: int = 8
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return len(self.clauses)

    @property
    def couplings(self) -> np.ndarray:
        return self.raw_couplings / self.scale_factor

    def coupling(self, u: int, v: int) -> Fraction:
        return Fraction(int(self.raw_couplings[self.graph.edge_position(u, v)]), self.scale_factor)

    @property
    def fields(self) -> np.ndarray:
        return np.zeros(self.graph.n_vertices)

    @cached_property
    def ground_energy_raw(self) -> int:
        return sum(c.ground_energy for c in self.clauses)

    @property
    def ground_energy(self) -> Fraction:
        return Fraction(self.ground_energy_raw, self.scale_factor)

    @cached_property
    def planted_map(self) -> dict[int, int]:
        return {v: int(s) for v, s in zip(self.graph.vertices, self.planted)}

    @cached_property
    def participating(self) -> tuple[int, ...]:
        """Vertex ids touched by at least one clause, ascending."""
        return tuple(sorted({v for c in self.clauses for v in c.path}))

    @property
    def n_unused(self) -> int:
        return self.graph.n_vertices - len(self.participating)

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(indptr, indices, raw weights)`` adjacency over dense indices."""
        return _csr(self.graph, self.raw_couplings.astype(np.float64))

    def __eq__(self, other) -> bool:
        return isinstance(other, PlantedInstance) and format_instance(self) == format_instance(other)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class NoisyInstance:
    """A planted instance whose rescaled couplings were perturbed.

    Solvers anneal on ``couplings``; success is still judged against the
    nominal ground energy of ``nominal``, which may no longer be optimal for
    the perturbed problem.
    """

    nominal: PlantedInstance
    couplings: np.ndarray
    level: float

    @property
    def graph(self) -> ChimeraGraph:
        return self.nominal.graph

    @property
    def nominal_ground_energy(self) -> Fraction:
        return self.nominal.ground_energy

    @cached_property
    def csr(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return _csr(self.graph, self.couplings.astype(np.float64))


def _csr(g: ChimeraGraph, weights: np.ndarray):
    n = g.n_vertices
    ei = g.edge_index
    rows = np.concatenate([ei[:, 0], ei[:, 1]])
    cols = np.concatenate([ei[:, 1], ei[:, 0]])
    w = np.concatenate([weights, weights])
    order = np.lexsort((cols, rows))
    rows, cols, w = rows[order], cols[order], w[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    return np.cumsum(indptr), cols.astype(np.int64), w.astype(np.float64)


def _build(g, clauses, planted, alpha, seed, min_len) -> PlantedInstance:
    raw = np.zeros(g.n_edges, dtype=np.int64)
    for c in clauses:
        for J, (u, v) in zip(c.couplings, c.edges):
            raw[g.edge_position(u, v)] += J
    scale = int(np.max(np.abs(raw))) if raw.size else 0
    if clauses and scale == 0:
        raise ValueError("all couplings cancelled; instance is empty")
    return PlantedInstance(
        graph=g,
        clauses=tuple(clauses),
        raw_couplings=raw,
        scale_factor=max(scale, 1),
        planted=np.asarray(planted, dtype=np.int8),
        alpha=Fraction(str(alpha)),
        seed=seed,
        min_len=min_len,
    )


def assemble_instance(
    g: ChimeraGraph,
    alpha,
    seed: int | None = None,
    min_len: int = 8,
    max_retries: int = 10_000,
) -> PlantedInstance:
    """Plant a solution and add ``round(alpha * N)`` frustrated loop clauses."""
    if Fraction(str(alpha)) <= 0:
        raise ValueError("alpha must be positive")
    M = clause_count(alpha, g.n_vertices)
    if M < 1:
        raise ValueError(f"alpha={alpha} gives M=0 clauses on {g.n_vertices} vertices")
    plant_ss, loop_ss = np.random.SeedSequence(seed).spawn(2)
    planted = plant_solution(g, np.random.default_rng(plant_ss))
    spins = {v: int(s) for v, s in zip(g.vertices, planted)}
    rng = np.random.default_rng(loop_ss)
    clauses = []
    for _ in range(M):
        loop = random_loop(g, rng, min_len=min_len, max_retries=max_retries)
        clauses.append(make_clause(loop, spins, rng))
    return _build(g, clauses, planted, alpha, seed, min_len)


def raw_energy(inst: PlantedInstance, c) -> int:
    """Energy in integer (pre-rescaling) units."""
    s = as_spin_array(inst.graph, c).astype(np.int64)
    ei = inst.graph.edge_index
    return int(np.dot(inst.raw_couplings, s[ei[:, 0]] * s[ei[:, 1]]))


def raw_energies(inst: PlantedInstance, configs: np.ndarray) -> np.ndarray:
    """Integer energies of a ``(k, N)`` stack of configurations."""
    s = np.asarray(configs, dtype=np.int64)
    ei = inst.graph.edge_index
    return (s[:, ei[:, 0]] * s[:, ei[:, 1]]) @ inst.raw_couplings


def energy(inst: PlantedInstance, c) -> Fraction:
    """Ising energy ``sum J_ij s_i s_j`` in rescaled units, exactly."""
    return Fraction(raw_energy(inst, c), inst.scale_factor)


def frustration_fraction(inst: PlantedInstance) -> Fraction:
    """Nonzero couplings unsatisfied by the planted state, over all graph edges."""
    g = inst.graph
    if g.n_edges == 0:
        return Fraction(0)
    ei = g.edge_index
    prod = inst.raw_couplings * inst.planted[ei[:, 0]] * inst.planted[ei[:, 1]]
    return Fraction(int(np.count_nonzero(prod > 0)), g.n_edges)


def inject_noise(inst: PlantedInstance, level: float, rng=None) -> NoisyInstance:
    """Add an independent U(-level, level) draw to each nonzero rescaled coupling."""
    if level < 0:
        raise ValueError("noise level must be non-negative")
    rng = _rng(rng)
    J = inst.couplings.copy()
    nz = inst.raw_couplings != 0
    J[nz] += rng.uniform(-level, level, size=int(nz.sum())) if level > 0 else 0.0
    return NoisyInstance(nominal=inst, couplings=J, level=float(level))


# -- instance file ------------------------------------------------------------


def format_instance(inst: PlantedInstance) -> str:
    g = inst.graph
    out = [
        "[meta]",
        f"L = {g.L}",
        "broken = " + " ".join(str(b) for b in sorted(g.broken)),
        f"alpha = {inst.alpha}",
        f"M = {inst.M}",
        f"min_len = {inst.min_len}",
        f"seed = {inst.seed if inst.seed is not None else ''}",
        f"scale_factor = {inst.scale_factor}",
        f"ground_energy = {inst.ground_energy}",
    ]
    for k in sorted(inst.meta):
        out.append(f"{k} = {inst.meta[k]}")
    out.append("[planted]")
    out.extend(f"{v}:{int(s)}" for v, s in zip(g.vertices, inst.planted))
    out.append("[clauses]")
    out.extend(" ".join(map(str, c.path)) + f" | {c.flipped}" for c in inst.clauses)
    out.append("[couplings]")
    out.extend(f"{u} {v} {int(J)}" for (u, v), J in zip(g.edges, inst.raw_couplings))
    return "\n".join(out) + "\n"


def parse_instance(text: str) -> PlantedInstance:
    sections: dict[str, list[str]] = {}
    current = None
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1]
            sections[current] = []
        elif current is None:
            raise ValueError("content before the first section header")
        else:
            sections[current].append(line)
    for name in ("meta", "planted", "clauses", "couplings"):
        if name not in sections:
            raise ValueError(f"missing [{name}] section")
    meta = {}
    for line in sections["meta"]:
        key, _, value = line.partition("=")
        meta[key.strip()] = value.strip()
    g = build_chimera(int(meta.pop("L")), [int(t) for t in meta.pop("broken").split()])
    planted_map = {}
    for line in sections["planted"]:
        v, s = line.split(":")
        planted_map[int(v)] = int(s)
    planted = as_spin_array(g, planted_map)
    clauses = []
    for line in sections["clauses"]:
        path_s, _, flip_s = line.partition("|")
        clauses.append(make_clause_fixed([int(t) for t in path_s.split()], planted_map, int(flip_s)))
    seed = meta.pop("seed")
    inst = _build(
        g,
        clauses,
        planted,
        Fraction(meta.pop("alpha")),
        int(seed) if seed else None,
        int(meta.pop("min_len")),
    )
    checks = {
        "M": str(inst.M),
        "scale_factor": str(inst.scale_factor),
        "ground_energy": str(inst.ground_energy),
    }
    for key, expected in checks.items():
        if meta.pop(key) != expected:
            raise ValueError(f"stored {key} does not match the clauses")
    stored = np.array([int(line.split()[2]) for line in sections["couplings"]], dtype=np.int64)
    if not np.array_equal(stored, inst.raw_couplings):
        raise ValueError("stored couplings do not match the clause sum")
    inst.meta.update(meta)
    return inst


def make_clause_fixed(loop: Sequence[int], planted: Mapping[int, int], flipped: int) -> LoopClause:
    """Clause with a given flipped edge (used when reading files and in tests)."""
    n = len(loop)
    couplings = [-planted[loop[i]] * planted[loop[(i + 1) % n]] for i in range(n)]
    couplings[flipped] = -couplings[flipped]
    return LoopClause(tuple(loop), tuple(couplings), flipped)


def instance_from_clauses(
    g: ChimeraGraph, clauses: Sequence[LoopClause], planted, alpha=None, seed=None, min_len: int = 4
) -> PlantedInstance:
    """Assemble an instance from explicit clauses (hand-built test cases)."""
    planted = as_spin_array(g, planted)
    if alpha is None:
        alpha = Fraction(len(clauses), max(g.n_vertices, 1))
    return _build(g, list(clauses), planted, alpha, seed, min_len)


def write_instance(inst: PlantedInstance, path: str | Path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(format_instance(inst))


def read_instance(path: str | Path) -> PlantedInstance:
    return parse_instance(Path(path).read_text())
