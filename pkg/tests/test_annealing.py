import math
from fractions import Fraction

import numpy as np
import pytest

from frustbench.annealing import (
    TAU_SA_US,
    TAU_SQA_US,
    TAU_SSSV_US,
    SaParams,
    Schedule,
    SqaParams,
    SssvParams,
    cluster_add_statistics,
    metropolis_accept,
    rotor_energy,
    sa_run,
    sample_fixed_beta,
    sqa_run,
    sssv_run,
    transverse_coupling,
)
from frustbench.chimera import build_chimera
from frustbench.instances import assemble_instance, energy, inject_noise, raw_energy


def test_metropolis_downhill_always():
    rng = np.random.default_rng(0)
    assert all(metropolis_accept(d, 3.0, rng) for d in (-5.0, -0.1, 0.0))


def test_metropolis_half_rate():
    rng = np.random.default_rng(1)
    beta = 2.0
    rate = np.mean([metropolis_accept(math.log(2) / beta, beta, rng) for _ in range(100_000)])
    assert abs(rate - 0.5) < 0.01


def test_metropolis_cold_limit():
    rng = np.random.default_rng(2)
    assert not any(metropolis_accept(1e-3, 1e308, rng) for _ in range(1000))
    with pytest.raises(ValueError):
        metropolis_accept(1.0, 0.0, rng)


def test_sa_params_validation():
    with pytest.raises(ValueError):
        SaParams(100, beta_i=1.0, beta_f=1.0)
    with pytest.raises(ValueError):
        SaParams(1)
    with pytest.raises(ValueError):
        SaParams(10, mode="XYZ")


def test_model_times():
    inst = assemble_instance(build_chimera(2), "0.2", seed=0)
    assert sa_run(inst, SaParams(50_000), 0).wall_model_time == pytest.approx(177_000.0, rel=1e-12)
    assert sqa_run(inst, SqaParams(10, trotter_slices=4), 0).wall_model_time == pytest.approx(10 * TAU_SQA_US)
    assert sssv_run(inst, SssvParams(10), 0).wall_model_time == pytest.approx(10 * TAU_SSSV_US)
    assert TAU_SA_US == 3.54


@pytest.mark.parametrize("mode", ["SAS", "SAA"])
def test_sa_solves_single_clause(one_clause_len8, mode):
    p = SaParams(1000, beta_f=5.0, mode=mode)
    wins = sum(sa_run(one_clause_len8, p, s).success for s in range(1000))
    assert wins / 1000 > 0.99


def test_sa_outcome_consistency():
    inst = assemble_instance(build_chimera(3), "0.2", seed=5)
    for s in range(20):
        out = sa_run(inst, SaParams(30, mode="SAS"), s)
        assert out.best_energy <= out.final_energy
        assert energy(inst, out.state) == out.best_energy
        assert out.best_energy >= inst.ground_energy
        assert out.success == (out.best_energy == inst.ground_energy)


def test_sa_seed_determinism():
    inst = assemble_instance(build_chimera(3), "0.2", seed=5)
    a = sa_run(inst, SaParams(50), 123)
    b = sa_run(inst, SaParams(50), 123)
    assert a == b and np.array_equal(a.state, b.state)


def test_sas_dominates_saa_same_seed():
    inst = assemble_instance(build_chimera(3), "0.25", seed=8)
    for s in range(200):
        sas = sa_run(inst, SaParams(20, mode="SAS"), s)
        saa = sa_run(inst, SaParams(20, mode="SAA"), s)
        assert sas.best_energy <= saa.final_energy
        assert sas.success >= saa.success


def test_fixed_beta_is_boltzmann():
    beta, J = 0.7, -1.0
    counts = sample_fixed_beta([(0, 1)], np.array([J]), 2, beta, 200_000, thin=5, seed=3)
    # code bit i set <=> spin i is -1
    E = np.array([J * (1 if (c & 1) == (c >> 1 & 1) else -1) for c in range(4)])
    p = np.exp(-beta * E) / np.exp(-beta * E).sum()
    n = counts.sum()
    sigma = np.sqrt(n * p * (1 - p))
    assert np.all(np.abs(counts - n * p) < 4 * sigma)


def test_transverse_coupling_values():
    assert transverse_coupling(1.0) == pytest.approx(0.13617073445591578, rel=1e-12)
    assert transverse_coupling(50.0) == pytest.approx(0.0, abs=1e-30)
    assert transverse_coupling(1e-8) > 9.0
    with pytest.raises(ValueError):
        transverse_coupling(0.0)


def test_cluster_add_probability_limits():
    tries, adds, full = cluster_add_statistics(1e-12, 16, 200, seed=0)
    assert full == 200 and adds == tries
    tries, adds, full = cluster_add_statistics(30.0, 16, 200, seed=0)
    assert adds == 0 and full == 0


def test_schedule_validation_and_io(tmp_path):
    s = Schedule((0.0, 0.5, 1.0), (1.0, 0.4, 0.0), (0.0, 0.3, 1.0))
    assert s.at(0.25) == pytest.approx((0.7, 0.15))
    s.write(tmp_path / "sched.txt")
    assert Schedule.read(tmp_path / "sched.txt") == s
    with pytest.raises(ValueError):
        Schedule((0.0, 1.0), (0.0, 1.0), (0.0, 1.0))
    Schedule((0.0, 1.0), (0.0, 1.0), (0.0, 1.0), check_monotone=False)
    with pytest.raises(ValueError):
        Schedule((0.1, 1.0), (1.0, 0.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        Schedule.from_text("0 1\n1 0 1\n")


def test_sqa_params_validation():
    with pytest.raises(ValueError):
        SqaParams(10, trotter_slices=1)
    with pytest.raises(ValueError):
        SqaParams(10, beta=0)
    with pytest.raises(ValueError):
        SqaParams(10, readout="median")


def test_sqa_solves_single_clause(one_clause_len8):
    p = SqaParams(1000, trotter_slices=64, beta=10.0)
    wins = sum(sqa_run(one_clause_len8, p, s).success for s in range(100))
    assert wins / 100 > 0.9


def test_sqa_best_not_above_final():
    inst = assemble_instance(build_chimera(2), "0.3", seed=2)
    for mode in ("SQAA", "SQAS"):
        for s in range(10):
            out = sqa_run(inst, SqaParams(30, trotter_slices=8, mode=mode), s)
            assert out.best_energy <= out.final_energy
            assert out.best_energy >= inst.ground_energy


def test_sqas_dominates_sqaa():
    inst = assemble_instance(build_chimera(3), "0.25", seed=3)
    for s in range(30):
        a = sqa_run(inst, SqaParams(20, trotter_slices=8, mode="SQAS"), s)
        b = sqa_run(inst, SqaParams(20, trotter_slices=8, mode="SQAA"), s)
        assert a.success >= b.success


def test_sssv_projection_identities(one_clause):
    inst = one_clause
    rng = np.random.default_rng(0)
    spins = rng.choice([-1, 1], size=inst.graph.n_vertices)
    theta = np.where(spins > 0, 0.0, np.pi)
    assert rotor_energy(inst, theta, 0.0, 1.0) == pytest.approx(float(energy(inst, spins)), abs=1e-12)
    half = np.full(inst.graph.n_vertices, np.pi / 2)
    assert rotor_energy(inst, half, 0.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    assert rotor_energy(inst, half, 1.0, 0.0) == pytest.approx(-inst.graph.n_vertices)


def test_sssv_solves_single_clause(one_clause_len8):
    p = SssvParams(10_000)
    wins = sum(sssv_run(one_clause_len8, p, s).success for s in range(100))
    assert wins / 100 > 0.9


def test_sssv_gaussian_proposal_runs(one_clause_len8):
    p = SssvParams(2000, proposal="gaussian", step=0.5)
    out = sssv_run(one_clause_len8, p, 0)
    assert out.final_energy >= one_clause_len8.ground_energy
    with pytest.raises(ValueError):
        SssvParams(10, proposal="cauchy")


def test_noisy_instance_judged_on_nominal_energy():
    inst = assemble_instance(build_chimera(2), "0.3", seed=4)
    noisy = inject_noise(inst, 0.05, 0)
    out = sa_run(noisy, SaParams(500), 1)
    assert out.final_energy == Fraction(raw_energy(inst, out.state), inst.scale_factor)
    assert out.success == (out.best_energy == inst.ground_energy)
