"""Monte Carlo annealers: simulated annealing, path-integral SQA and the SSSV rotor model.

All kernels run on CSR adjacency with per-run integer seeds so that a run
is reproducible in isolation. For planted instances the weights are the
exact integer raw couplings and temperatures are rescaled by
``1/scale_factor``; energies are then integer-valued floats and success is
an exact comparison with the planted ground energy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from numba import njit

from .instances import NoisyInstance, PlantedInstance, raw_energy

__all__ = [
    "TAU_SA_US",
    "TAU_SQA_US",
    "TAU_SSSV_US",
    "Schedule",
    "SaParams",
    "SqaParams",
    "SssvParams",
    "RunOutcome",
    "metropolis_accept",
    "transverse_coupling",
    "sa_run",
    "sqa_run",
    "sssv_run",
    "sample_fixed_beta",
    "cluster_add_statistics",
]

# model time per sweep, microseconds, with bipartite-parallel spin updates
TAU_SA_US = 3.54
TAU_SQA_US = 9.92
TAU_SSSV_US = 10.34


@dataclass(frozen=True)
class Schedule:
    """Piecewise-linear annealing schedule: ``(t/t_a, A, B)`` knots."""

    fractions: tuple[float, ...]
    A: tuple[float, ...]
    B: tuple[float, ...]
    check_monotone: bool = True

    def __post_init__(self):
        f = np.asarray(self.fractions, dtype=float)
        if not (len(f) == len(self.A) == len(self.B)) or len(f) < 2:
            raise ValueError("schedule needs >= 2 knots with matching A and B")
        if f[0] != 0.0 or f[-1] != 1.0 or np.any(np.diff(f) <= 0):
            raise ValueError("schedule fractions must increase strictly from 0 to 1")
        if self.check_monotone:
            if np.any(np.diff(self.A) > 0) or np.any(np.diff(self.B) < 0):
                raise ValueError("A must be non-increasing and B non-decreasing")

    @classmethod
    def linear(cls, a_max: float = 1.0, b_max: float = 1.0) -> "Schedule":
        return cls((0.0, 1.0), (a_max, 0.0), (0.0, b_max))

    def at(self, fraction):
        return (
            np.interp(fraction, self.fractions, self.A),
            np.interp(fraction, self.fractions, self.B),
        )

    def arrays(self):
        return (
            np.asarray(self.fractions, dtype=np.float64),
            np.asarray(self.A, dtype=np.float64),
            np.asarray(self.B, dtype=np.float64),
        )

    def to_text(self) -> str:
        return "".join(f"{f!r} {a!r} {b!r}\n" for f, a, b in zip(self.fractions, self.A, self.B))

    @classmethod
    def from_text(cls, text: str, check_monotone: bool = True) -> "Schedule":
        rows = [
            tuple(float(t) for t in line.split())
            for line in text.splitlines()
            if line.strip() and not line.lstrip().startswith("#")
        ]
        if any(len(r) != 3 for r in rows):
            raise ValueError("each schedule line must be 'fraction A B'")
        f, a, b = zip(*rows)
        return cls(tuple(f), tuple(a), tuple(b), check_monotone)

    @classmethod
    def read(cls, path, check_monotone: bool = True) -> "Schedule":
        return cls.from_text(Path(path).read_text(), check_monotone)

    def write(self, path) -> None:
        Path(path).write_text(self.to_text())

    def key(self) -> list:
        return [list(self.fractions), list(self.A), list(self.B)]


@dataclass(frozen=True)
class SaParams:
    sweeps: int
    beta_i: float = 0.01
    beta_f: float = 5.0
    mode: str = "SAS"
    order: str = "random"

    def __post_init__(self):
        if self.sweeps < 2:
            raise ValueError("SA needs at least 2 sweeps")
        if not 0 < self.beta_i < self.beta_f:
            raise ValueError("require 0 < beta_i < beta_f")
        if self.mode not in ("SAS", "SAA"):
            raise ValueError("mode must be 'SAS' or 'SAA'")
        if self.order not in ("random", "bipartite"):
            raise ValueError("order must be 'random' or 'bipartite'")

    solver = "sa"
    tau_us = TAU_SA_US

    def key(self) -> dict:
        return {
            "sweeps": self.sweeps,
            "beta_i": self.beta_i,
            "beta_f": self.beta_f,
            "mode": self.mode,
            "order": self.order,
        }


@dataclass(frozen=True)
class SqaParams:
    sweeps: int
    trotter_slices: int = 64
    beta: float = 10.0
    schedule: Schedule = field(default_factory=Schedule.linear)
    mode: str = "SQAA"
    readout: str = "min"

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("SQA needs at least 1 sweep")
        if self.trotter_slices < 2:
            raise ValueError("need at least 2 Trotter slices")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.mode not in ("SQAA", "SQAS"):
            raise ValueError("mode must be 'SQAA' or 'SQAS'")
        if self.readout not in ("min", "random", "first"):
            raise ValueError("readout must be 'min', 'random' or 'first'")

    solver = "sqa"
    tau_us = TAU_SQA_US

    def key(self) -> dict:
        return {
            "sweeps": self.sweeps,
            "trotter_slices": self.trotter_slices,
            "beta": self.beta,
            "schedule": self.schedule.key(),
            "mode": self.mode,
            "readout": self.readout,
        }


@dataclass(frozen=True)
class SssvParams:
    sweeps: int
    beta: float = 10.0
    schedule: Schedule = field(default_factory=Schedule.linear)
    proposal: str = "uniform"
    step: float = 0.3

    def __post_init__(self):
        if self.sweeps < 1:
            raise ValueError("SSSV needs at least 1 sweep")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.proposal not in ("uniform", "gaussian"):
            raise ValueError("proposal must be 'uniform' or 'gaussian'")

    solver = "sssv"
    tau_us = TAU_SSSV_US
    mode = "SSSV"

    def key(self) -> dict:
        return {
            "sweeps": self.sweeps,
            "beta": self.beta,
            "schedule": self.schedule.key(),
            "proposal": self.proposal,
            "step": self.step,
        }


@dataclass(frozen=True)
class RunOutcome:
    """Result of one annealing run; energies are nominal and rescaled."""

    best_energy: Fraction
    final_energy: Fraction
    success: bool
    sweeps_used: int
    wall_model_time: float
    state: np.ndarray = field(repr=False, compare=False, default=None)


def metropolis_accept(delta_E: float, beta: float, rng: np.random.Generator) -> bool:
    """Accept with probability ``min(1, exp(-beta * delta_E))``."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    if delta_E <= 0:
        return True
    x = beta * delta_E
    if math.isinf(x):
        return False
    return bool(rng.random() < math.exp(-x))


def transverse_coupling(A_eff: float) -> float:
    """Imaginary-time coupling ``-0.5 ln tanh(A_eff)`` between Trotter neighbours."""
    if A_eff <= 0:
        raise ValueError("A_eff must be positive; clamp schedule endpoints before calling")
    return -0.5 * math.log(math.tanh(A_eff))


# -- kernels ------------------------------------------------------------------


@njit(cache=True)
def _local_field(i, spins, indptr, indices, w):
    h = 0.0
    for k in range(indptr[i], indptr[i + 1]):
        h += w[k] * spins[indices[k]]
    return h


@njit(cache=True)
def _energy(spins, indptr, indices, w):
    e = 0.0
    for i in range(spins.shape[0]):
        e += spins[i] * _local_field(i, spins, indptr, indices, w)
    return 0.5 * e


@njit(cache=True)
def _permute(order):
    """In-place Fisher-Yates shuffle."""
    for j in range(order.shape[0] - 1, 0, -1):
        k = int(np.random.random() * (j + 1))
        order[j], order[k] = order[k], order[j]


@njit(cache=True)
def _sa_kernel(indptr, indices, w, order, shuffle, betas, seed, final_state, best_state):
    np.random.seed(seed)
    n = final_state.shape[0]
    spins = final_state
    for i in range(n):
        spins[i] = 1 if np.random.random() < 0.5 else -1
    order = order.copy()
    h = np.empty(n)
    for i in range(n):
        h[i] = _local_field(i, spins, indptr, indices, w)
    e = _energy(spins, indptr, indices, w)
    best = e
    best_state[:] = spins
    for s in range(betas.shape[0]):
        b = betas[s]
        if shuffle:
            _permute(order)
        for t in range(order.shape[0]):
            i = order[t]
            dE = -2.0 * spins[i] * h[i]
            if dE <= 0.0 or np.random.random() < np.exp(-b * dE):
                spins[i] = -spins[i]
                e += dE
                si2 = 2.0 * spins[i]
                for k in range(indptr[i], indptr[i + 1]):
                    h[indices[k]] += si2 * w[k]
                if e < best:
                    best = e
                    best_state[:] = spins
    return e, best


@njit(cache=True)
def _fixed_beta_kernel(indptr, indices, w, order, shuffle, beta, n_samples, thin, seed):
    np.random.seed(seed)
    n = order.shape[0]
    spins = np.empty(n, dtype=np.int8)
    for i in range(n):
        spins[i] = 1 if np.random.random() < 0.5 else -1
    order = order.copy()
    counts = np.zeros(2**n, dtype=np.int64)
    for _ in range(n_samples):
        for _t in range(thin):
            if shuffle:
                _permute(order)
            for t in range(n):
                i = order[t]
                dE = -2.0 * spins[i] * _local_field(i, spins, indptr, indices, w)
                if dE <= 0.0 or np.random.random() < np.exp(-beta * dE):
                    spins[i] = -spins[i]
        code = 0
        for i in range(n):
            if spins[i] < 0:
                code |= 1 << i
        counts[code] += 1
    return counts


@njit(cache=True)
def _grow_cluster(col, k0, p_add, M):
    """Grow a 1-D Wolff cluster along imaginary time; returns ``(back, fwd, tries, adds)``."""
    s0 = col[k0]
    fwd = 0
    tries = 0
    adds = 0
    while fwd + 1 < M:
        k = (k0 + fwd + 1) % M
        if col[k] != s0:
            break
        tries += 1
        if np.random.random() < p_add:
            adds += 1
            fwd += 1
        else:
            break
    back = 0
    while fwd + back + 1 < M:
        k = (k0 - back - 1) % M
        if col[k] != s0:
            break
        tries += 1
        if np.random.random() < p_add:
            adds += 1
            back += 1
        else:
            break
    return back, fwd, tries, adds


@njit(cache=True)
def _cluster_stats_kernel(M, p_add, n_growths, seed):
    np.random.seed(seed)
    col = np.ones(M, dtype=np.int8)
    tries = 0
    adds = 0
    full = 0
    for _ in range(n_growths):
        k0 = np.random.randint(M)
        back, fwd, t, a = _grow_cluster(col, k0, p_add, M)
        tries += t
        adds += a
        if back + fwd + 1 == M:
            full += 1
    return tries, adds, full


@njit(cache=True)
def _sqa_kernel(indptr, indices, w, order, M, sweeps, beta, unit, fr, A, B, track, seed, spins, best_state):
    np.random.seed(seed)
    n = order.shape[0]
    for i in range(n):
        s = 1 if np.random.random() < 0.5 else -1
        for k in range(M):
            spins[k, i] = s
    best = np.inf
    for sweep in range(sweeps):
        frac = 1.0 if sweeps == 1 else sweep / (sweeps - 1)
        a = np.interp(frac, fr, A)
        b = np.interp(frac, fr, B)
        a_eff = beta / M * a
        # 1 - exp(-2 J_perp) with J_perp = -0.5 ln tanh(a_eff)
        p_add = 1.0 - np.tanh(a_eff) if a_eff > 0.0 else 1.0
        wsp = beta / M * b * unit
        for t in range(n):
            i = order[t]
            col = spins[:, i]
            k0 = np.random.randint(M)
            back, fwd, _tries, _adds = _grow_cluster(col, k0, p_add, M)
            s0 = col[k0]
            h = 0.0
            for d in range(-back, fwd + 1):
                k = (k0 + d) % M
                h += _local_field(i, spins[k], indptr, indices, w)
            dE = -2.0 * s0 * h
            x = wsp * dE
            if x <= 0.0 or np.random.random() < np.exp(-x):
                for d in range(-back, fwd + 1):
                    col[(k0 + d) % M] = -s0
        if track:
            for k in range(M):
                e = _energy(spins[k], indptr, indices, w)
                if e < best:
                    best = e
                    best_state[:] = spins[k]
    return best


@njit(cache=True)
def _sssv_kernel(indptr, indices, w, order, sweeps, beta, unit, fr, A, B, gaussian, step, seed, theta):
    np.random.seed(seed)
    n = order.shape[0]
    for i in range(n):
        theta[i] = np.random.random() * np.pi
    c = np.cos(theta)
    for sweep in range(sweeps):
        frac = 1.0 if sweeps == 1 else sweep / (sweeps - 1)
        a = np.interp(frac, fr, A)
        b = np.interp(frac, fr, B) * unit
        for t in range(n):
            i = order[t]
            hz = 0.0
            for k in range(indptr[i], indptr[i + 1]):
                hz += w[k] * c[indices[k]]
            if gaussian:
                new = theta[i] + step * np.random.standard_normal()
                # reflect into [0, pi]
                new = np.abs(new) % (2.0 * np.pi)
                if new > np.pi:
                    new = 2.0 * np.pi - new
            else:
                new = np.random.random() * np.pi
            cn = np.cos(new)
            dE = -a * (np.sin(new) - np.sin(theta[i])) + b * (cn - c[i]) * hz
            if dE <= 0.0 or np.random.random() < np.exp(-beta * dE):
                theta[i] = new
                c[i] = cn


# -- runs ---------------------------------------------------------------------


def _dynamics(inst):
    """``(indptr, indices, weights, unit)``: unit converts weights to max|J|=1 units."""
    if isinstance(inst, NoisyInstance):
        indptr, indices, w = inst.csr
        return indptr, indices, w, 1.0
    if isinstance(inst, PlantedInstance):
        indptr, indices, w = inst.csr
        return indptr, indices, w, 1.0 / inst.scale_factor
    raise TypeError(f"unsupported instance type {type(inst).__name__}")


def _nominal(inst) -> PlantedInstance:
    return inst.nominal if isinstance(inst, NoisyInstance) else inst


def _order(inst) -> np.ndarray:
    return np.ascontiguousarray(inst.graph.sweep_order, dtype=np.int64)


def _outcome(inst, best_state, final_state, use_best, sweeps, tau) -> RunOutcome:
    nominal = _nominal(inst)
    e_final = raw_energy(nominal, final_state)
    e_best = raw_energy(nominal, best_state) if best_state is not None else e_final
    e_best = min(e_best, e_final)
    judged = e_best if use_best else e_final
    return RunOutcome(
        best_energy=Fraction(e_best, nominal.scale_factor),
        final_energy=Fraction(e_final, nominal.scale_factor),
        success=judged == nominal.ground_energy_raw,
        sweeps_used=sweeps,
        wall_model_time=sweeps * tau,
        state=(best_state if use_best and best_state is not None else final_state),
    )


def _seed(seed) -> int:
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(2**32))
    return int(np.random.SeedSequence(seed).generate_state(1)[0])


def sa_run(inst, p: SaParams, seed=None) -> RunOutcome:
    """One simulated-annealing run from a uniformly random start.

    ``p.order == "random"`` visits sites in a fresh permutation each sweep.
    The fixed bipartite order accepts every zero-cost move deterministically,
    so domain walls on a loop drift in lockstep and some starts can never
    anneal to the ground state.
    """
    indptr, indices, w, unit = _dynamics(inst)
    n = inst.graph.n_vertices
    betas = np.linspace(p.beta_i, p.beta_f, p.sweeps) * unit
    final = np.empty(n, dtype=np.int8)
    best = np.empty(n, dtype=np.int8)
    _sa_kernel(indptr, indices, w, _order(inst), p.order == "random", betas, _seed(seed), final, best)
    return _outcome(inst, best, final, p.mode == "SAS", p.sweeps, TAU_SA_US)


def sqa_run(inst, p: SqaParams, seed=None) -> RunOutcome:
    """One discrete-time path-integral SQA run with imaginary-time cluster moves."""
    indptr, indices, w, unit = _dynamics(inst)
    n = inst.graph.n_vertices
    M = p.trotter_slices
    s = _seed(seed)
    spins = np.empty((M, n), dtype=np.int8)
    best = np.empty(n, dtype=np.int8)
    fr, A, B = p.schedule.arrays()
    track = p.mode == "SQAS"
    _sqa_kernel(indptr, indices, w, _order(inst), M, p.sweeps, p.beta, unit, fr, A, B, track, s, spins, best)
    energies = np.array([_energy(spins[k], indptr, indices, w) for k in range(M)])
    if p.readout == "min":
        k = int(np.argmin(energies))
    elif p.readout == "random":
        k = int(np.random.default_rng(s).integers(M))
    else:
        k = 0
    return _outcome(inst, best if track else None, spins[k].copy(), track, p.sweeps, TAU_SQA_US)


def sssv_run(inst, p: SssvParams, seed=None) -> RunOutcome:
    """One SSSV rotor-model run, projected to spins by the sign of cos(theta)."""
    indptr, indices, w, unit = _dynamics(inst)
    theta = np.empty(inst.graph.n_vertices, dtype=np.float64)
    fr, A, B = p.schedule.arrays()
    _sssv_kernel(
        indptr, indices, w, _order(inst), p.sweeps, p.beta, unit, fr, A, B,
        p.proposal == "gaussian", p.step, _seed(seed), theta,
    )
    spins = np.where(np.cos(theta) >= 0, 1, -1).astype(np.int8)
    return _outcome(inst, None, spins, False, p.sweeps, TAU_SSSV_US)


def rotor_energy(inst, theta, A: float, B: float) -> float:
    """``-A sum sin(theta) + B sum J cos cos`` with rescaled couplings."""
    g = inst.graph
    ei = g.edge_index
    J = inst.couplings
    c = np.cos(theta)
    return float(-A * np.sum(np.sin(theta)) + B * np.dot(J, c[ei[:, 0]] * c[ei[:, 1]]))


def sample_fixed_beta(
    edges, couplings, n_spins, beta, n_samples, thin=1, seed=None, order="random"
) -> np.ndarray:
    """Histogram of states visited by fixed-beta single-flip Metropolis sweeps.

    State code bit ``i`` is set when spin ``i`` is -1.
    """
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    w = np.concatenate([couplings, couplings]).astype(np.float64)
    perm = np.lexsort((cols, rows))
    rows, cols, w = rows[perm], cols[perm], w[perm]
    indptr = np.zeros(n_spins + 1, dtype=np.int64)
    np.add.at(indptr, rows + 1, 1)
    indptr = np.cumsum(indptr)
    if order not in ("random", "bipartite"):
        raise ValueError("order must be 'random' or 'bipartite'")
    return _fixed_beta_kernel(
        indptr, cols, w, np.arange(n_spins, dtype=np.int64), order == "random", float(beta), int(n_samples), int(thin), _seed(seed)
    )


def cluster_add_statistics(A_eff: float, trotter_slices: int, n_growths: int, seed=None):
    """Bond tests and successful adds for imaginary-time clusters on aligned replicas.

    Returns ``(tries, adds, full_ring_clusters)``.
    """
    p_add = 1.0 - math.exp(-2.0 * transverse_coupling(A_eff)) if A_eff > 0 else 1.0
    return _cluster_stats_kernel(int(trotter_slices), p_add, int(n_growths), _seed(seed))
