import json
import subprocess
import sys
from pathlib import Path

import pytest

from frustbench.cli import Plan, PlanError, main
from frustbench.runs import read_records, record_set_hash


def write_plan(dir_: Path, **kv) -> Path:
    base = {"L": "2,3", "alpha": "0.1,0.2", "instances": "10", "master_seed": "11",
            "solvers": "sa", "sa.sweeps": "50,200", "sa.runs": "20", "bootstrap": "200"}
    base.update({k.replace("__", "."): str(v) for k, v in kv.items()})
    path = dir_ / "plan.txt"
    path.write_text("# test plan\n" + "".join(f"{k} = {v}\n" for k, v in base.items()))
    return path


def tree_files(root: Path):
    return sorted(p.relative_to(root) for p in root.rglob("*") if p.is_file())


def test_generate_counts_and_is_idempotent(tmp_path):
    plan = write_plan(tmp_path)
    assert main(["generate", "--plan", str(plan)]) == 0
    files = tree_files(tmp_path / "instances")
    assert len(files) == 40
    assert Path("L3/a0.2/9.inst") in files
    snap = {f: (tmp_path / "instances" / f).read_bytes() for f in files}
    assert main(["generate", "--plan", str(plan)]) == 0
    assert {f: (tmp_path / "instances" / f).read_bytes() for f in files} == snap


def test_seeds_differ_across_cells(tmp_path):
    p = Plan.read(write_plan(tmp_path))
    seeds = {p.instance_seed(L, a, i) for L, a in p.cells() for i in range(p.instances)}
    assert len(seeds) == 40


def test_plan_errors(tmp_path):
    bad = tmp_path / "bad.txt"
    bad.write_text("L = 2\nbogus = 1\n")
    with pytest.raises(PlanError):
        Plan.read(bad)
    assert main(["generate", "--plan", str(bad)]) == 2
    zero = write_plan(tmp_path, L="1", alpha="0.01")
    assert main(["generate", "--plan", str(zero)]) == 2
    assert not (tmp_path / "instances").exists()
    assert main(["solve", "--plan", str(write_plan(tmp_path))]) == 2  # no instances yet


def test_solve_resume_and_analyze(tmp_path):
    plan = write_plan(tmp_path)
    main(["generate", "--plan", str(plan)])
    assert main(["solve", "--plan", str(plan)]) == 0
    path = tmp_path / "records" / "sa.jsonl"
    full = read_records(path)
    assert len(full) == 80
    # simulate an interruption after half the batches
    lines = path.read_text().splitlines()
    path.write_text("\n".join(lines[:37]) + "\n")
    assert main(["solve", "--plan", str(plan)]) == 0
    assert record_set_hash(read_records(path)) == record_set_hash(full)
    assert main(["solve", "--plan", str(plan)]) == 0
    assert len(read_records(path)) == 80

    assert main(["analyze", "--plan", str(plan)]) == 0
    out = tmp_path / "analysis"
    assert (out / "tts_by_setting.tsv").exists() and (out / "tts_optimal.tsv").exists()
    assert not (out / "speedup.tsv").exists()
    head = (out / "tts_optimal.tsv").read_text().splitlines()
    assert head[1] == f"# records-sha256 {record_set_hash(full)}"
    rows = [ln.split("\t") for ln in head[3:]]
    assert len(rows) == 4 and {r[3] for r in rows} <= {"50", "200"}


def test_workers_do_not_change_results(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        plan = write_plan(d, L="2", alpha="0.2", instances="4")
        main(["generate", "--plan", str(plan)])
    main(["solve", "--plan", str(a / "plan.txt"), "--workers", "1"])
    main(["solve", "--plan", str(b / "plan.txt"), "--workers", "2"])
    assert record_set_hash(read_records(a / "records/sa.jsonl")) == record_set_hash(
        read_records(b / "records/sa.jsonl"))


def test_full_roster(tmp_path):
    plan = write_plan(tmp_path, L="2", alpha="0.2", solvers="sa,sqa,sssv,hfs", sa__sweeps="100",
                      sqa__sweeps="20", sqa__runs="4", sqa__trotter_slices="4",
                      sssv__sweeps="100", sssv__runs="4", hfs__runs="10", hfs__stall_limit="4")
    main(["generate", "--plan", str(plan)])
    assert main(["solve", "--plan", str(plan)]) == 0
    recs = [r for s in ("sa", "sqa", "sssv", "hfs") for r in read_records(tmp_path / f"records/{s}.jsonl")]
    assert len(recs) == 40
    trees = (tmp_path / "records" / "hfs_trees.txt").read_text().splitlines()
    assert len(trees) == 10 and len(trees[0].split()) == 12
    assert main(["analyze", "--plan", str(plan)]) == 0
    sp = (tmp_path / "analysis" / "speedup.tsv").read_text().splitlines()
    assert sp[2].split("\t")[-1] == "two_sigma"
    assert len(sp) == 3 + 3
    assert (tmp_path / "analysis" / "distance.tsv").exists()


def test_mixed_tau_refused(tmp_path):
    plan = write_plan(tmp_path, L="2", alpha="0.2", instances="2", sa__sweeps="50")
    main(["generate", "--plan", str(plan)])
    main(["solve", "--plan", str(plan)])
    path = tmp_path / "records" / "sa.jsonl"
    rec = json.loads(path.read_text().splitlines()[0])
    rec["tau_kind"] = "empirical"
    rec["params_hash"] = "x"
    with open(path, "a") as fh:
        fh.write(json.dumps(rec) + "\n")
    assert main(["analyze", "--plan", str(plan)]) == 1


def test_saturated_easy_instance(tmp_path):
    plan = write_plan(tmp_path, L="2", alpha="0.05", instances="1", sa__sweeps="1000", sa__runs="10000")
    main(["generate", "--plan", str(plan)])
    assert main(["solve", "--plan", str(plan)]) == 0
    (rec,) = read_records(tmp_path / "records" / "sa.jsonl")
    assert rec.successes >= 9990


def test_enumerate_with_oracle(tmp_path):
    plan = write_plan(tmp_path, L="1,2", alpha="0.25,1.0", instances="5", min_len="4")
    main(["generate", "--plan", str(plan)])
    assert main(["enumerate", "--plan", str(plan), "--oracle"]) == 0
    recs = [json.loads(ln) for ln in (tmp_path / "degeneracy/degeneracy.jsonl").read_text().splitlines()]
    assert len(recs) == 20
    assert all(r["raw_count"] % 2 == 0 for r in recs)
    table = (tmp_path / "analysis" / "degeneracy_median.tsv").read_text().splitlines()
    assert len(table) == 3 + 4
    # re-running skips finished instances
    assert main(["enumerate", "--plan", str(plan)]) == 0
    assert len((tmp_path / "degeneracy/degeneracy.jsonl").read_text().splitlines()) == 20


def test_console_entry_point(tmp_path):
    plan = write_plan(tmp_path, L="2", alpha="0.2", instances="2")
    res = subprocess.run([sys.executable, "-m", "frustbench.cli", "generate", "--plan", str(plan)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert len(tree_files(tmp_path / "instances")) == 2
