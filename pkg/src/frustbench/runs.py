"""Batches of independent solver runs and their aggregated records."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .annealing import SaParams, SqaParams, SssvParams, sa_run, sqa_run, sssv_run
from .hfs import condense, hfs_solve

__all__ = [
    "HfsParams",
    "RunRecord",
    "run_batch",
    "run_seeds",
    "params_hash",
    "append_records",
    "read_records",
    "record_set_hash",
    "parse_params",
]


@dataclass(frozen=True)
class HfsParams:
    stall_limit: int = 16
    sampler: str = "random"

    def __post_init__(self):
        if self.stall_limit < 1:
            raise ValueError("stall_limit must be >= 1")
        if self.sampler not in ("random", "comb"):
            raise ValueError("sampler must be 'random' or 'comb'")

    solver = "hfs"
    mode = "HFS"
    tau_us = None  # per-execution, depends on trees used and L

    def key(self) -> dict:
        return {"stall_limit": self.stall_limit, "sampler": self.sampler}


_TAU_KIND = {"sa": "fixed-sweep", "sqa": "fixed-sweep", "sssv": "fixed-sweep", "hfs": "empirical"}


def params_hash(params) -> str:
    blob = json.dumps({"solver": params.solver, **params.key()}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class RunRecord:
    """Aggregate of ``runs`` independent runs of one solver setting on one instance.

    ``tau_per_run_us`` is the fixed per-run model time for annealers and the
    mean per-execution model time for HFS (``tau_kind`` tells them apart).
    """

    instance_id: str
    solver: str
    params_hash: str
    runs: int
    successes: int
    tau_per_run_us: float
    mode: str
    params: dict = field(default_factory=dict)
    tau_kind: str = "fixed-sweep"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        return cls(**json.loads(line))


def _id_word(instance_id: str) -> int:
    return int.from_bytes(hashlib.sha256(instance_id.encode()).digest()[:8], "little")


def run_seeds(master_seed: int, instance_id: str, n_runs: int) -> np.ndarray:
    """Seed of run ``i`` depends only on (master seed, instance id, i).

    Seeds do not depend on solver parameters, so e.g. SAS and SAA batches
    with the same master seed follow identical trajectories.
    """
    ss = np.random.SeedSequence([int(master_seed), _id_word(instance_id)])
    return ss.generate_state(n_runs, dtype=np.uint64)


def run_batch(inst, params, n_runs: int, master_seed: int, instance_id: str = "", keep_outcomes=False):
    """Run ``n_runs`` independent runs and aggregate them into a :class:`RunRecord`."""
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    seeds = run_seeds(master_seed, instance_id, n_runs)
    if isinstance(params, SaParams):
        outs = [sa_run(inst, params, int(s)) for s in seeds]
    elif isinstance(params, SqaParams):
        outs = [sqa_run(inst, params, int(s)) for s in seeds]
    elif isinstance(params, SssvParams):
        outs = [sssv_run(inst, params, int(s)) for s in seeds]
    elif isinstance(params, HfsParams):
        sg = condense(inst)
        outs = [
            hfs_solve(inst, params.stall_limit, np.random.default_rng(int(s)), sg, params.sampler)
            for s in seeds
        ]
    else:
        raise TypeError(f"unsupported parameter type {type(params).__name__}")
    if isinstance(params, HfsParams):
        tau = sum(o.wall_model_time for o in outs) / n_runs
    else:
        tau = params.sweeps * params.tau_us
    rec = RunRecord(
        instance_id=instance_id,
        solver=params.solver,
        params_hash=params_hash(params),
        runs=n_runs,
        successes=sum(bool(o.success) for o in outs),
        tau_per_run_us=float(tau),
        mode=params.mode,
        params=params.key(),
        tau_kind=_TAU_KIND[params.solver],
    )
    return (rec, outs) if keep_outcomes else rec


def parse_params(solver: str, params: dict):
    """Rebuild a parameter object from ``RunRecord.params``."""
    from .annealing import Schedule

    p = dict(params)
    if "schedule" in p:
        f, a, b = p["schedule"]
        p["schedule"] = Schedule(tuple(f), tuple(a), tuple(b), check_monotone=False)
    cls = {"sa": SaParams, "sqa": SqaParams, "sssv": SssvParams, "hfs": HfsParams}[solver]
    return cls(**p)


def append_records(path: str | Path, records) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_records(path: str | Path) -> list[RunRecord]:
    path = Path(path)
    if not path.exists():
        return []
    return [RunRecord.from_json(ln) for ln in path.read_text().splitlines() if ln.strip()]


def record_set_hash(records) -> str:
    """Order-independent digest of a record set."""
    lines = sorted(r.to_json() for r in records)
    return hashlib.sha256("\n".join(lines).encode()).hexdigest()

