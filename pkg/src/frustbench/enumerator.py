"""Exact ground-state enumeration by bucket elimination.

Every clause contributes a table of its own minimum-energy loop
configurations. Because the planted state minimizes all clauses at once,
a configuration is a ground state exactly when it satisfies every table.
Eliminating variables one at a time (join the tables that mention the
variable, keep the join as that variable's bucket, project the variable
out) and then substituting back through the buckets in reverse yields every
ground state over the participating spins.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .instances import PlantedInstance, raw_energies

__all__ = [
    "ConstraintTable",
    "Contradiction",
    "EnumerationResult",
    "TableTooLarge",
    "clause_tables",
    "elimination_order",
    "eliminate",
    "enumerate_solutions",
    "brute_force_minima",
    "degeneracy_record",
    "append_degeneracy_record",
    "read_degeneracy_records",
]

DEFAULT_ROW_BUDGET = 1 << 24
MAX_CLAUSE_LEN = 256
SCAN_LEN = 20


class TableTooLarge(RuntimeError):
    """An intermediate join exceeded the row budget."""

    def __init__(self, vertex: int, rows: int, budget: int):
        super().__init__(f"join at vertex {vertex} has {rows} rows (budget {budget})")
        self.vertex = vertex
        self.rows = rows
        self.budget = budget


@dataclass(frozen=True)
class ConstraintTable:
    """Allowed assignments of ``scope``: ``rows[i, j]`` is the spin of ``scope[j]``."""

    scope: tuple[int, ...]
    rows: np.ndarray

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.int8)
        n = rows.shape[0] if rows.ndim == 2 else (rows.size // max(len(self.scope), 1))
        rows = rows.reshape(n, len(self.scope))
        object.__setattr__(self, "rows", rows)
        if len(set(self.scope)) != len(self.scope):
            raise ValueError("scope has repeated vertices")

    def __len__(self) -> int:
        return self.rows.shape[0]

    def allows(self, spins: dict[int, int]) -> bool:
        target = np.array([spins[v] for v in self.scope], dtype=np.int8)
        return bool(np.any(np.all(self.rows == target, axis=1)))


@dataclass(frozen=True)
class Contradiction:
    """Elimination found an empty join while eliminating ``vertex``."""

    vertex: int


@dataclass
class EnumerationResult:
    solutions: list[dict[int, int]] = field(repr=False)
    raw_count: int
    capped: bool
    n_uq: int
    participating: tuple[int, ...] = field(repr=False, default=())

    @property
    def reported_degeneracy(self) -> int:
        return self.raw_count << self.n_uq

    def solution_array(self) -> np.ndarray:
        """``(raw_count, P)`` spins over :attr:`participating`."""
        return np.array(
            [[s[v] for v in self.participating] for s in self.solutions], dtype=np.int8
        ).reshape(len(self.solutions), len(self.participating))


def _spin_table(n: int, lo: int, hi: int) -> np.ndarray:
    """Spins for states ``lo..hi-1``; bit ``j`` set means spin ``j`` is -1."""
    x = np.arange(lo, hi, dtype=np.int64)[:, None]
    return (1 - 2 * ((x >> np.arange(n)) & 1)).astype(np.int8)


def _scan_minimizers(J: np.ndarray) -> np.ndarray:
    """Exhaustive scan of all 2^l loop states."""
    n = len(J)
    nxt = np.roll(np.arange(n), -1)
    best = None
    keep = []
    chunk = 1 << 18
    for lo in range(0, 1 << n, chunk):
        s = _spin_table(n, lo, min(lo + chunk, 1 << n))
        e = (s * s[:, nxt]).astype(np.int64) @ J
        m = int(e.min())
        if best is None or m < best:
            best, keep = m, [s[e == m]]
        elif m == best:
            keep.append(s[e == m])
    return np.concatenate(keep)


def _ring_minimizers(J: np.ndarray) -> np.ndarray:
    """All minimizers of ``sum J_i s_i s_{i+1}`` on a ring, by min-sum DP.

    Exact for any length; used where the exhaustive scan is too large.
    """
    n = len(J)
    vals = (1, -1)
    found = []
    best_total = None
    for s0 in vals:
        # f[i][a]: least cost of edges 0..i-1 with s_i = vals[a]
        f = [{s0: 0}]
        for i in range(1, n):
            prev = f[-1]
            f.append({v: min(c + J[i - 1] * u * v for u, c in prev.items()) for v in vals})
        totals = {v: c + J[n - 1] * v * s0 for v, c in f[-1].items()}
        m = min(totals.values())
        if best_total is None or m < best_total:
            best_total, found = m, []
        if m > best_total:
            continue
        stack = [(n - 1, (v,)) for v in vals if totals[v] == m]
        while stack:
            i, tail = stack.pop()
            if i == 0:
                found.append(tail)
                continue
            v = tail[0]
            for u, c in f[i - 1].items():
                if c + J[i - 1] * u * v == f[i][v]:
                    stack.append((i - 1, (u,) + tail))
    rows = np.array(sorted(found, reverse=True), dtype=np.int8)
    return rows


def clause_tables(
    inst: PlantedInstance, max_len: int = MAX_CLAUSE_LEN, scan_len: int = SCAN_LEN
) -> list[ConstraintTable]:
    """One table per clause holding its exact minimizers.

    Loops of up to ``scan_len`` spins are scanned over all 2^l states;
    longer ones use an exact ring DP. Loops over ``max_len`` are rejected.
    """
    tables = []
    for clause in inst.clauses:
        n = len(clause)
        if n > max_len:
            raise ValueError(f"clause of length {n} exceeds the {max_len} limit")
        J = np.asarray(clause.couplings, dtype=np.int64)
        rows = _scan_minimizers(J) if n <= scan_len else _ring_minimizers(J)
        tables.append(ConstraintTable(tuple(clause.path), rows))
    return tables


def _interaction_graph(scopes) -> dict[int, set[int]]:
    adj: dict[int, set[int]] = {}
    for scope in scopes:
        for v in scope:
            adj.setdefault(v, set()).update(u for u in scope if u != v)
    return adj


def elimination_order(inst_or_tables, heuristic: str = "min-degree") -> list[int]:
    """Greedy elimination order on the clause-scope interaction graph.

    ``"min-degree"`` picks the vertex with fewest remaining neighbours,
    ``"min-fill"`` the one whose elimination adds fewest new edges; ties go
    to the lowest vertex id.
    """
    if heuristic not in ("min-degree", "min-fill"):
        raise ValueError(f"unknown heuristic {heuristic!r}")
    if isinstance(inst_or_tables, PlantedInstance):
        scopes = [c.path for c in inst_or_tables.clauses]
    else:
        scopes = [t.scope for t in inst_or_tables]
    adj = _interaction_graph(scopes)

    def fill(v):
        ns = sorted(adj[v])
        return sum(1 for i, a in enumerate(ns) for b in ns[i + 1:] if b not in adj[a])

    order = []
    while adj:
        if heuristic == "min-degree":
            v = min(adj, key=lambda u: (len(adj[u]), u))
        else:
            v = min(adj, key=lambda u: (fill(u), u))
        ns = adj.pop(v)
        for a in ns:
            adj[a].discard(v)
            adj[a].update(b for b in ns if b != a)
        order.append(v)
    return order


def _keys(rows: np.ndarray, cols: list[int]) -> np.ndarray:
    """Integer key of each row restricted to ``cols`` (bit set for -1)."""
    key = np.zeros(rows.shape[0], dtype=np.int64)
    for j, c in enumerate(cols):
        key |= (rows[:, c] < 0).astype(np.int64) << j
    return key


def _join_rows(a_rows, a_cols, b_rows, b_cols):
    """Indices (ia, ib) of row pairs that agree on the shared columns."""
    ka = _keys(a_rows, a_cols)
    kb = _keys(b_rows, b_cols)
    order = np.argsort(kb, kind="stable")
    kb_sorted = kb[order]
    lo = np.searchsorted(kb_sorted, ka, side="left")
    hi = np.searchsorted(kb_sorted, ka, side="right")
    counts = hi - lo
    ia = np.repeat(np.arange(len(ka)), counts)
    starts = np.repeat(lo - np.cumsum(counts) + counts, counts)
    ib = order[starts + np.arange(counts.sum())]
    return ia, ib


def join(a: ConstraintTable, b: ConstraintTable, budget: int | None = None) -> ConstraintTable:
    shared = [v for v in a.scope if v in b.scope]
    a_cols = [a.scope.index(v) for v in shared]
    b_cols = [b.scope.index(v) for v in shared]
    ia, ib = _join_rows(a.rows, a_cols, b.rows, b_cols)
    if budget is not None and len(ia) > budget:
        raise TableTooLarge(-1, len(ia), budget)
    extra = [j for j, v in enumerate(b.scope) if v not in a.scope]
    scope = a.scope + tuple(b.scope[j] for j in extra)
    rows = np.concatenate([a.rows[ia], b.rows[ib][:, extra]], axis=1)
    return ConstraintTable(scope, rows)


def project(t: ConstraintTable, v: int) -> ConstraintTable:
    keep = [j for j, u in enumerate(t.scope) if u != v]
    if not keep:
        return ConstraintTable((), np.zeros((min(len(t), 1), 0), dtype=np.int8))
    rows = np.unique(t.rows[:, keep], axis=0)
    return ConstraintTable(tuple(t.scope[j] for j in keep), rows)


def eliminate(tables, order, row_budget: int = DEFAULT_ROW_BUDGET):
    """Bucket elimination. Returns the bucket list, or :class:`Contradiction`.

    Bucket ``i`` is the join of every table that contained ``order[i]`` at
    the time it was eliminated.
    """
    pool = list(tables)
    covered = {v for t in pool for v in t.scope}
    if covered - set(order):
        raise ValueError("order does not cover every scoped vertex")
    buckets = []
    for v in order:
        hit = [t for t in pool if v in t.scope]
        pool = [t for t in pool if v not in t.scope]
        if not hit:
            buckets.append(ConstraintTable((v,), np.array([[1], [-1]])))
            continue
        # smallest tables first keeps intermediate joins small
        hit.sort(key=len)
        joined = hit[0]
        for t in hit[1:]:
            try:
                joined = join(joined, t, row_budget)
            except TableTooLarge as exc:
                raise TableTooLarge(v, exc.rows, row_budget) from None
            if len(joined) == 0:
                return Contradiction(v)
        if len(joined) == 0:
            return Contradiction(v)
        buckets.append(joined)
        rest = project(joined, v)
        if rest.scope:
            pool.append(rest)
    return buckets


def _back_substitute(buckets, order, cap: int):
    """Grow solutions one vertex at a time through the buckets in reverse."""
    assigned: list[int] = []
    partial = np.zeros((1, 0), dtype=np.int8)
    capped = False
    for v, bucket in zip(reversed(order), reversed(buckets)):
        known = [u for u in bucket.scope if u != v]
        p_cols = [assigned.index(u) for u in known]
        b_cols = [bucket.scope.index(u) for u in known]
        ip, ib = _join_rows(partial, p_cols, bucket.rows, b_cols)
        vcol = bucket.scope.index(v)
        # several bucket rows can give the same value of v
        ext = np.concatenate([partial[ip], bucket.rows[ib, vcol][:, None]], axis=1)
        ext = np.unique(np.concatenate([ip[:, None], ext[:, -1:]], axis=1), axis=0)
        partial = np.concatenate([partial[ext[:, 0]], ext[:, 1:].astype(np.int8)], axis=1)
        assigned.append(v)
        if partial.shape[0] > cap:
            partial = partial[:cap]
            capped = True
    return assigned, partial, capped


def enumerate_solutions(
    inst: PlantedInstance,
    cap: int = 100_000,
    heuristic: str = "min-degree",
    row_budget: int = DEFAULT_ROW_BUDGET,
) -> EnumerationResult:
    """All ground states over the participating spins, up to ``cap`` of them."""
    if cap < 1:
        raise ValueError("cap must be >= 1")
    tables = clause_tables(inst)
    order = elimination_order(tables, heuristic)
    buckets = eliminate(tables, order, row_budget)
    if isinstance(buckets, Contradiction):
        raise AssertionError(f"planted instance eliminated to a contradiction at {buckets.vertex}")
    assigned, sols, capped = _back_substitute(buckets, order, cap)
    participating = tuple(sorted(assigned))
    perm = [assigned.index(v) for v in participating]
    sols = sols[:, perm]
    _verify(inst, participating, sols)
    return EnumerationResult(
        solutions=[dict(zip(participating, map(int, row))) for row in sols],
        raw_count=int(sols.shape[0]),
        capped=capped,
        n_uq=inst.n_unused,
        participating=participating,
    )


def _verify(inst: PlantedInstance, participating, sols: np.ndarray) -> None:
    pos = inst.graph.position[np.asarray(participating, dtype=np.int64)]
    for lo in range(0, sols.shape[0], 4096):
        full = np.ones((min(4096, sols.shape[0] - lo), inst.graph.n_vertices), dtype=np.int8)
        full[:, pos] = sols[lo:lo + 4096]
        bad = raw_energies(inst, full) != inst.ground_energy_raw
        if np.any(bad):
            raise AssertionError("enumerated configuration misses the ground energy")


def brute_force_minima(inst: PlantedInstance, max_spins: int = 26):
    """Exhaustive minimizers over participating spins (others held at +1).

    Returns ``(participating, minimum raw energy, (k, P) spin array)``.
    Independent of the elimination machinery; used as an oracle.
    """
    part = tuple(inst.participating)
    P = len(part)
    if P > max_spins:
        raise ValueError(f"{P} participating spins exceeds the brute-force limit {max_spins}")
    pos = inst.graph.position[np.asarray(part, dtype=np.int64)]
    col = np.full(inst.graph.n_vertices, -1, dtype=np.int64)
    col[pos] = np.arange(P)
    live = np.flatnonzero(inst.raw_couplings)
    ei = col[inst.graph.edge_index[live]]
    J = inst.raw_couplings[live].astype(np.int32)
    best = None
    found = []
    chunk = 1 << 16
    for lo in range(0, 1 << P, chunk):
        s = _spin_table(P, lo, min(lo + chunk, 1 << P))
        e = (s[:, ei[:, 0]] * s[:, ei[:, 1]]).astype(np.int32) @ J
        m = int(e.min())
        if best is None or m < best:
            best, found = m, [s[e == m]]
        elif m == best:
            found.append(s[e == m])
    return part, best, np.concatenate(found) if found else np.zeros((1, 0), dtype=np.int8)


# -- degeneracy records ------------------------------------------------------


def degeneracy_record(instance_id: str, res: EnumerationResult) -> dict:
    return {
        "instance_id": instance_id,
        "raw_count": res.raw_count,
        "capped": res.capped,
        "n_uq": res.n_uq,
        "reported_degeneracy": res.reported_degeneracy,
    }


def append_degeneracy_record(path: str | Path, record: dict) -> None:
    with open(path, "a") as fh:
        fh.write(json.dumps(record, sort_keys=True) + "\n")


def read_degeneracy_records(path: str | Path) -> list[dict]:
    out = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            out.append(rec)
    return out
