import numpy as np
import pytest
from sklearn.base import clone

from frustbench.annealing import SaParams, Schedule, SqaParams, SssvParams
from frustbench.chimera import build_chimera
from frustbench.estimators import (
    ExponentialScalingFit,
    HFSSolver,
    SimulatedAnnealing,
    SimulatedQuantumAnnealing,
    SSSVAnnealer,
    check_instance,
)
from frustbench.instances import assemble_instance, inject_noise
from frustbench.runs import (
    HfsParams,
    RunRecord,
    append_records,
    params_hash,
    parse_params,
    read_records,
    record_set_hash,
    run_batch,
    run_seeds,
)


@pytest.fixture(scope="module")
def c3():
    return assemble_instance(build_chimera(3), "0.2", seed=1)


def test_run_seeds():
    a = run_seeds(7, "L3/a0.2/0", 5)
    assert np.array_equal(a, run_seeds(7, "L3/a0.2/0", 5))
    assert np.array_equal(a[:3], run_seeds(7, "L3/a0.2/0", 3))
    assert not np.array_equal(a, run_seeds(7, "L3/a0.2/1", 5))
    assert not np.array_equal(a, run_seeds(8, "L3/a0.2/0", 5))


def test_batch_determinism_and_fields(c3):
    p = SaParams(200)
    r1 = run_batch(c3, p, 20, 1, "x")
    assert r1 == run_batch(c3, p, 20, 1, "x")
    assert r1.runs == 20 and 0 <= r1.successes <= 20
    assert r1.tau_per_run_us == pytest.approx(200 * 3.54)
    assert r1.tau_kind == "fixed-sweep" and r1.mode == "SAS"
    assert parse_params("sa", r1.params) == p
    with pytest.raises(ValueError):
        run_batch(c3, p, 0, 1)
    with pytest.raises(TypeError):
        run_batch(c3, object(), 1, 1)


def test_saturation_on_easy_instance(one_clause_len8):
    rec = run_batch(one_clause_len8, SaParams(2000), 50, 0, "easy")
    assert rec.successes == 50


def test_disjoint_batches_binomially_consistent(c3):
    p = SaParams(20)
    a = run_batch(c3, p, 400, 1, "a")
    b = run_batch(c3, p, 400, 2, "a")
    pa, pb = a.successes / 400, b.successes / 400
    pooled = (a.successes + b.successes) / 800
    se = np.sqrt(pooled * (1 - pooled) * (2 / 400))
    assert 0 < pooled < 1
    assert abs(pa - pb) < 3.5 * se


def test_hfs_batch_tau_is_empirical(c3):
    rec, outs = run_batch(c3, HfsParams(4), 10, 0, "h", keep_outcomes=True)
    assert rec.tau_kind == "empirical"
    assert rec.tau_per_run_us == pytest.approx(np.mean([o.wall_model_time for o in outs]))
    assert parse_params("hfs", rec.params) == HfsParams(4)


def test_params_hash_and_roundtrip(tmp_path):
    sched = Schedule.linear()
    for solver, p in [("sa", SaParams(100)), ("sqa", SqaParams(100, 8, 10.0, sched)), ("sssv", SssvParams(100))]:
        back = parse_params(solver, p.key())
        assert params_hash(back) == params_hash(p)
    assert params_hash(SaParams(100)) != params_hash(SaParams(101))
    assert params_hash(SaParams(100)) != params_hash(SaParams(100, mode="SAA"))
    r = RunRecord("i", "sa", params_hash(SaParams(10)), 5, 2, 35.4, "SAS", SaParams(10).key())
    path = tmp_path / "rec" / "sa.jsonl"
    append_records(path, [r, r])
    back = read_records(path)
    assert back == [r, r]
    assert record_set_hash(back) == record_set_hash(back[::-1])
    assert read_records(tmp_path / "missing.jsonl") == []


def test_estimator_params_and_clone(c3):
    est = SimulatedAnnealing(sweeps=100, n_runs=10, random_state=3)
    assert est.get_params()["sweeps"] == 100
    c = clone(est).set_params(sweeps=50)
    assert c.sweeps == 50 and est.sweeps == 100
    est.fit(c3, instance_id="c3")
    assert est.record_.runs == 10
    assert 0 < est.success_probability_ < 1
    assert est.tts_ > 0
    assert est.record_ == SimulatedAnnealing(sweeps=100, n_runs=10, random_state=3).fit(c3, instance_id="c3").record_


def test_estimators_fit(c3):
    for est in (
        SimulatedQuantumAnnealing(sweeps=20, trotter_slices=4, n_runs=3),
        SSSVAnnealer(sweeps=50, n_runs=3),
        HFSSolver(stall_limit=4, n_runs=3),
    ):
        est.fit(c3)
        assert est.record_.runs == 3
        assert est.tts_ > 0
    assert HFSSolver(stall_limit=4, n_runs=3).fit(c3).trees_used_.shape == (3,)


def test_estimator_validation(c3):
    with pytest.raises(TypeError):
        check_instance("nope")
    with pytest.raises(TypeError):
        HFSSolver(n_runs=1).fit(inject_noise(c3, 0.05, 0))
    with pytest.raises(ValueError):
        SimulatedAnnealing(n_runs=0).fit(c3)
    with pytest.raises(Exception):
        SimulatedAnnealing().tts_


def test_noisy_instance_runs(c3):
    est = SimulatedAnnealing(sweeps=100, n_runs=5).fit(inject_noise(c3, 0.05, 0))
    assert est.record_.runs == 5


def test_exponential_scaling_fit():
    L = np.arange(2, 9)
    y = np.exp(1 + 0.5 * L)
    est = ExponentialScalingFit().fit(L[:, None], y)
    assert est.intercept_ == pytest.approx(1.0, abs=1e-10)
    assert est.coef_[0] == pytest.approx(0.5, abs=1e-10)
    assert np.allclose(est.predict(np.array([[10]])), np.exp(6.0))
    est2 = ExponentialScalingFit(L_min=2).fit(L[:, None], y, sigma=0.1 * y)
    assert est2.covariance_.shape == (2, 2)
    with pytest.raises(ValueError):
        ExponentialScalingFit().fit(np.c_[L, L], y)
