"""scikit-learn style wrappers around the solvers and the scaling fit.

Solvers are estimators whose ``fit`` runs a seeded batch on one instance::

    est = SimulatedAnnealing(sweeps=1000, n_runs=200, random_state=7).fit(inst)
    est.record_.successes, est.tts_

``get_params`` is the full solver configuration; its digest is the
``params_hash`` stored in run records.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, check_X_y, check_array

from .analysis import P_DESIRED, SuccessPosterior, hfs_tts, runs_to_solution, scaling_fit
from .annealing import SaParams, Schedule, SqaParams, SssvParams
from .instances import NoisyInstance, PlantedInstance
from .runs import HfsParams, run_batch

__all__ = [
    "SimulatedAnnealing",
    "SimulatedQuantumAnnealing",
    "SSSVAnnealer",
    "HFSSolver",
    "ExponentialScalingFit",
    "check_instance",
]


def check_instance(inst):
    """Reject anything that is not a planted (or noisy planted) instance."""
    if not isinstance(inst, (PlantedInstance, NoisyInstance)):
        raise TypeError(f"expected a PlantedInstance, got {type(inst).__name__}")
    nominal = inst.nominal if isinstance(inst, NoisyInstance) else inst
    if nominal.graph.n_vertices == 0:
        raise ValueError("instance graph has no vertices")
    return inst


class _SolverEstimator(BaseEstimator):
    def _make_params(self):
        raise NotImplementedError

    def fit(self, X, y=None, instance_id: str = ""):
        """Run ``n_runs`` seeded runs on instance ``X``; ``y`` is ignored."""
        inst = check_instance(X)
        if int(self.n_runs) < 1:
            raise ValueError("n_runs must be >= 1")
        self.params_ = self._make_params()
        self.record_, self.outcomes_ = run_batch(
            inst, self.params_, int(self.n_runs), int(self.random_state), instance_id, keep_outcomes=True
        )
        self.posterior_ = SuccessPosterior(self.record_.successes, self.record_.runs)
        return self

    @property
    def success_probability_(self) -> float:
        check_is_fitted(self, "record_")
        return self.posterior_.mean

    @property
    def tts_(self) -> float:
        """Time to solution in microseconds at the 0.99 target."""
        check_is_fitted(self, "record_")
        return runs_to_solution(self.posterior_.mean, P_DESIRED) * self.record_.tau_per_run_us


class SimulatedAnnealing(_SolverEstimator):
    def __init__(self, sweeps=1000, beta_i=0.01, beta_f=5.0, mode="SAS", order="random", n_runs=100, random_state=0):
        self.sweeps = sweeps
        self.beta_i = beta_i
        self.beta_f = beta_f
        self.mode = mode
        self.order = order
        self.n_runs = n_runs
        self.random_state = random_state

    def _make_params(self):
        return SaParams(int(self.sweeps), self.beta_i, self.beta_f, self.mode, self.order)


class SimulatedQuantumAnnealing(_SolverEstimator):
    def __init__(self, sweeps=1000, trotter_slices=64, beta=10.0, schedule=None, mode="SQAA",
                 readout="min", n_runs=100, random_state=0):
        self.sweeps = sweeps
        self.trotter_slices = trotter_slices
        self.beta = beta
        self.schedule = schedule
        self.mode = mode
        self.readout = readout
        self.n_runs = n_runs
        self.random_state = random_state

    def _make_params(self):
        sched = self.schedule if self.schedule is not None else Schedule.linear()
        return SqaParams(int(self.sweeps), int(self.trotter_slices), self.beta, sched, self.mode, self.readout)


class SSSVAnnealer(_SolverEstimator):
    def __init__(self, sweeps=10_000, beta=10.0, schedule=None, proposal="uniform", step=0.3,
                 n_runs=100, random_state=0):
        self.sweeps = sweeps
        self.beta = beta
        self.schedule = schedule
        self.proposal = proposal
        self.step = step
        self.n_runs = n_runs
        self.random_state = random_state

    def _make_params(self):
        sched = self.schedule if self.schedule is not None else Schedule.linear()
        return SssvParams(int(self.sweeps), self.beta, sched, self.proposal, self.step)


class HFSSolver(_SolverEstimator):
    def __init__(self, stall_limit=16, sampler="random", n_runs=100, random_state=0):
        self.stall_limit = stall_limit
        self.sampler = sampler
        self.n_runs = n_runs
        self.random_state = random_state

    def _make_params(self):
        return HfsParams(int(self.stall_limit), self.sampler)

    def fit(self, X, y=None, instance_id: str = ""):
        if isinstance(X, NoisyInstance):
            raise TypeError("HFS works on exact integer couplings only")
        return super().fit(X, y, instance_id)

    @property
    def tts_(self) -> float:
        check_is_fitted(self, "record_")
        return hfs_tts(self.record_.successes, self.record_.runs, self.record_.tau_per_run_us)

    @property
    def trees_used_(self) -> np.ndarray:
        check_is_fitted(self, "record_")
        return np.array([o.trees_used for o in self.outcomes_])


class ExponentialScalingFit(RegressorMixin, BaseEstimator):
    """Fit ``r(L) = exp(a + b L)`` to points with ``L >= L_min``.

    ``X`` is a column of ``L`` values, ``y`` the runs (or TTS) at each.
    """

    def __init__(self, L_min=4):
        self.L_min = L_min

    def fit(self, X, y, sigma=None):
        X, y = check_X_y(X, y, ensure_min_samples=3)
        if X.shape[1] != 1:
            raise ValueError("X must have a single column of L values")
        self.fit_ = scaling_fit(X[:, 0], y, sigma_r=sigma, L_min=self.L_min)
        self.intercept_ = self.fit_.a
        self.coef_ = np.array([self.fit_.b])
        self.covariance_ = self.fit_.covariance
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "fit_")
        X = check_array(X)
        return self.fit_.predict(X[:, 0])
