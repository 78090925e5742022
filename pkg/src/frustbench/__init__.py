"""Planted frustrated-loop Ising benchmarks on Chimera graphs.

Instance generation, Monte Carlo annealers (SA, path-integral SQA, O(2)
rotors), a tree-move optimizer over half-cell supervertices, exact
ground-state enumeration and time-to-solution statistics.
"""

from .analysis import SuccessPosterior, runs_to_solution, scaling_fit
from .annealing import SaParams, Schedule, SqaParams, SssvParams, sa_run, sqa_run, sssv_run
from .chimera import ChimeraGraph, build_chimera, neighbors, sample_broken_mask, subgraph
from .enumerator import enumerate_solutions
from .estimators import (
    ExponentialScalingFit,
    HFSSolver,
    SimulatedAnnealing,
    SimulatedQuantumAnnealing,
    SSSVAnnealer,
)
from .hfs import condense, hfs_solve
from .instances import PlantedInstance, assemble_instance, energy, read_instance, write_instance
from .runs import HfsParams, RunRecord, run_batch

__version__ = "0.1.0"
