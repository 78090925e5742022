"""``frustbench`` command line: generate, solve, enumerate, analyze.

A plan is a flat ``key = value`` text file::

    L = 2,3
    alpha = 0.1,0.2,0.3
    instances = 20
    master_seed = 1
    broken_mask = none        # none | sample | <file>
    solvers = sa,hfs
    sa.sweeps = 100,1000,10000
    sa.runs = 100
    hfs.runs = 100

Outputs go under ``output`` (default: the plan's directory)::

    instances/L<L>/a<alpha>/<index>.inst
    records/<solver>.jsonl
    records/hfs_trees.txt
    degeneracy/degeneracy.jsonl
    analysis/*.tsv
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections import defaultdict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import analysis as an
from .annealing import SaParams, Schedule, SqaParams, SssvParams
from .chimera import build_chimera, parse_graph, sample_broken_mask, subgraph
from .enumerator import (
    TableTooLarge,
    append_degeneracy_record,
    brute_force_minima,
    degeneracy_record,
    enumerate_solutions,
    read_degeneracy_records,
)
from .instances import assemble_instance, clause_count, frustration_fraction, read_instance, write_instance
from .runs import HfsParams, RunRecord, append_records, params_hash, read_records, record_set_hash, run_batch

log = logging.getLogger("frustbench")

SOLVERS = ("sa", "sqa", "sssv", "hfs")

_DEFAULTS = {
    "L": "2,3,4",
    "alpha": ",".join(f"{x / 100:g}" for x in range(5, 101, 5)),
    "instances": "20",
    "master_seed": "0",
    "broken_mask": "none",
    "min_len": "8",
    "solvers": "sa",
    "output": "",
    "quantile": "0.5",
    "bootstrap": "1000",
    "fit_L_min": "4",
    "reference": "",
    "cap": "100000",
    "sa.sweeps": "100,1000,10000",
    "sa.runs": "100",
    "sa.beta_i": "0.01",
    "sa.beta_f": "5.0",
    "sa.mode": "SAS",
    "sa.order": "random",
    "sqa.sweeps": "1000",
    "sqa.runs": "100",
    "sqa.trotter_slices": "64",
    "sqa.beta": "10.0",
    "sqa.mode": "SQAA",
    "sqa.schedule": "",
    "sssv.sweeps": "10000",
    "sssv.runs": "100",
    "sssv.beta": "10.0",
    "sssv.schedule": "",
    "hfs.runs": "100",
    "hfs.stall_limit": "16",
    "hfs.sampler": "random",
}


class PlanError(ValueError):
    pass


def _ints(s: str) -> list[int]:
    return [int(t) for t in s.replace(",", " ").split()]


def _floats(s: str) -> list[float]:
    return [float(t) for t in s.replace(",", " ").split()]


def alpha_label(a: Fraction) -> str:
    """Decimal text for a clause density, e.g. ``Fraction(1, 10) -> '0.1'``."""
    return f"{float(a):g}"


@dataclass
class Plan:
    L: list[int]
    alphas: list[Fraction]
    instances: int
    master_seed: int
    broken_mask: str
    min_len: int
    solvers: list[str]
    output: Path
    raw: dict = field(repr=False)

    @classmethod
    def read(cls, path) -> "Plan":
        path = Path(path)
        raw = dict(_DEFAULTS)
        for n, line in enumerate(path.read_text().splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise PlanError(f"{path}:{n}: expected 'key = value'")
            k, v = (t.strip() for t in line.split("=", 1))
            if k not in _DEFAULTS:
                raise PlanError(f"{path}:{n}: unknown key {k!r}")
            raw[k] = v
        out = Path(raw["output"]) if raw["output"] else path.parent
        if not out.is_absolute():
            out = path.parent / out
        plan = cls(
            L=_ints(raw["L"]),
            alphas=[Fraction(t) for t in raw["alpha"].replace(",", " ").split()],
            instances=int(raw["instances"]),
            master_seed=int(raw["master_seed"]),
            broken_mask=raw["broken_mask"],
            min_len=int(raw["min_len"]),
            solvers=[s.strip() for s in raw["solvers"].split(",") if s.strip()],
            output=out,
            raw=raw,
        )
        plan.check(path.parent)
        return plan

    def check(self, base: Path):
        if not self.L or min(self.L) < 1:
            raise PlanError("L must list positive sizes")
        if not self.alphas or min(self.alphas) <= 0:
            raise PlanError("alpha must list positive clause densities")
        if self.instances < 1:
            raise PlanError("instances must be >= 1")
        bad = [s for s in self.solvers if s not in SOLVERS]
        if bad:
            raise PlanError(f"unknown solvers {bad}")
        self._base = base

    def graph(self, L: int):
        mask = self.broken_mask
        if mask == "none":
            return build_chimera(L)
        if mask == "sample":
            parent = build_chimera(8, sample_broken_mask())
        else:
            p = Path(mask)
            p = p if p.is_absolute() else self._base / p
            text = p.read_text()
            if text.startswith("chimera L="):
                parent = parse_graph(text)
            else:
                ids = [int(t) for ln in text.splitlines() for t in ln.split("#", 1)[0].split()]
                parent = build_chimera(8, ids)
        if L > parent.L:
            raise PlanError(f"broken mask covers C_{parent.L}, cannot build C_{L}")
        return subgraph(parent, L)

    def instance_seed(self, L: int, alpha: Fraction, index: int) -> int:
        words = [self.master_seed, L, alpha.numerator, alpha.denominator, index]
        state = np.random.SeedSequence(words).generate_state(2, dtype=np.uint64)
        return int(state[0]) << 64 | int(state[1])

    def cells(self):
        for L in self.L:
            for a in self.alphas:
                yield L, a

    def instance_path(self, L: int, a: Fraction, index: int) -> Path:
        return self.output / "instances" / f"L{L}" / f"a{alpha_label(a)}" / f"{index}.inst"

    def instance_id(self, L: int, a: Fraction, index: int) -> str:
        return f"L{L}/a{alpha_label(a)}/{index}"

    def _schedule(self, key: str) -> Schedule:
        f = self.raw[key]
        if not f:
            return Schedule.linear()
        p = Path(f)
        return Schedule.read(p if p.is_absolute() else self._base / p)

    def solver_params(self, solver: str) -> list:
        r = self.raw
        if solver == "sa":
            return [
                SaParams(s, float(r["sa.beta_i"]), float(r["sa.beta_f"]), r["sa.mode"], r["sa.order"])
                for s in _ints(r["sa.sweeps"])
            ]
        if solver == "sqa":
            sched = self._schedule("sqa.schedule")
            return [
                SqaParams(s, int(r["sqa.trotter_slices"]), float(r["sqa.beta"]), sched, r["sqa.mode"])
                for s in _ints(r["sqa.sweeps"])
            ]
        if solver == "sssv":
            sched = self._schedule("sssv.schedule")
            return [SssvParams(s, float(r["sssv.beta"]), sched) for s in _ints(r["sssv.sweeps"])]
        return [HfsParams(int(r["hfs.stall_limit"]), r["hfs.sampler"])]

    def runs(self, solver: str) -> int:
        return int(self.raw[f"{solver}.runs"])


# -- generate ------------------------------------------------------------------


def cmd_generate(plan: Plan) -> int:
    for L, a in plan.cells():
        if clause_count(a, plan.graph(L).n_vertices) < 1:
            raise PlanError(f"alpha={alpha_label(a)} gives no clauses on C_{L}")
    failures = 0
    for L, a in plan.cells():
        g = plan.graph(L)
        for i in range(plan.instances):
            try:
                inst = assemble_instance(g, a, plan.instance_seed(L, a, i), min_len=plan.min_len)
            except Exception as exc:  # noqa: BLE001 - report and continue
                log.error("generation failed at L=%d alpha=%s index=%d: %s", L, alpha_label(a), i, exc)
                failures += 1
                continue
            write_instance(inst, plan.instance_path(L, a, i))
    log.info("generated %d cells x %d instances", len(plan.L) * len(plan.alphas), plan.instances)
    return 1 if failures else 0


def _instances(plan: Plan):
    for L, a in plan.cells():
        for i in range(plan.instances):
            p = plan.instance_path(L, a, i)
            if not p.exists():
                raise FileNotFoundError(f"missing instance {p}; run 'generate' first")
            yield L, a, i, p


# -- solve ---------------------------------------------------------------------


def _solve_item(item):
    path, params, n_runs, master_seed, iid = item
    inst = read_instance(path)
    rec, outs = run_batch(inst, params, n_runs, master_seed, iid, keep_outcomes=True)
    trees = [o.trees_used for o in outs] if isinstance(params, HfsParams) else None
    succ = [bool(o.success) for o in outs] if trees is not None else None
    return rec, trees, succ


def cmd_solve(plan: Plan, solvers: list[str], workers: int = 1) -> int:
    rec_dir = plan.output / "records"
    items = []
    for solver in solvers:
        done = {(r.instance_id, r.params_hash) for r in read_records(rec_dir / f"{solver}.jsonl")}
        for params in plan.solver_params(solver):
            h = params_hash(params)
            for L, a, i, path in _instances(plan):
                iid = plan.instance_id(L, a, i)
                if (iid, h) not in done:
                    items.append((str(path), params, plan.runs(solver), plan.master_seed, iid))
    log.info("%d solver batches to run", len(items))
    failures = 0
    results = []
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_solve_item, it) for it in items]
            for it, fut in zip(items, futures):
                try:
                    results.append(fut.result())
                except Exception as exc:  # noqa: BLE001
                    log.error("batch failed for %s (%s): %s", it[4], it[1].solver, exc)
                    failures += 1
                    results.append(None)
    else:
        for it in items:
            try:
                results.append(_solve_item(it))
            except Exception as exc:  # noqa: BLE001
                log.error("batch failed for %s (%s): %s", it[4], it[1].solver, exc)
                failures += 1
                results.append(None)
    for res in results:
        if res is None:
            continue
        rec, trees, succ = res
        append_records(rec_dir / f"{rec.solver}.jsonl", [rec])
        if trees is not None:
            with open(rec_dir / "hfs_trees.txt", "a") as fh:
                fh.write(f"{rec.instance_id} {rec.params_hash} " + " ".join(
                    f"{t}{'+' if s else '-'}" for t, s in zip(trees, succ)) + "\n")
    return 1 if failures else 0


# -- enumerate -----------------------------------------------------------------


def cmd_enumerate(plan: Plan, cap: int, oracle: bool = False) -> int:
    out = plan.output / "degeneracy" / "degeneracy.jsonl"
    out.parent.mkdir(parents=True, exist_ok=True)
    done = {r["instance_id"] for r in read_degeneracy_records(out)} if out.exists() else set()
    failures = 0
    for L, a, i, path in _instances(plan):
        iid = plan.instance_id(L, a, i)
        if iid in done:
            continue
        inst = read_instance(path)
        try:
            res = enumerate_solutions(inst, cap=cap)
        except TableTooLarge as exc:
            log.warning("%s: %s; recorded as capped-unknown", iid, exc)
            append_degeneracy_record(out, {
                "instance_id": iid, "raw_count": None, "capped": True,
                "n_uq": inst.n_unused, "reported_degeneracy": None,
            })
            continue
        if oracle and len(inst.participating) <= 20:
            part, emin, sols = brute_force_minima(inst)
            if emin != inst.ground_energy_raw or (not res.capped and len(sols) != res.raw_count):
                log.error("%s: enumeration disagrees with brute force (%d vs %d)", iid, res.raw_count, len(sols))
                failures += 1
        append_degeneracy_record(out, degeneracy_record(iid, res))
    _degeneracy_table(plan, read_degeneracy_records(out))
    return 1 if failures else 0


def _degeneracy_table(plan: Plan, recs: list[dict]):
    by_id = {r["instance_id"]: r for r in recs}
    rows = []
    for L, a in plan.cells():
        cell = [by_id[plan.instance_id(L, a, i)] for i in range(plan.instances)
                if plan.instance_id(L, a, i) in by_id]
        if not cell:
            continue
        # unknown counts sort above every capped count
        key = [r["raw_count"] if r["raw_count"] is not None else float("inf") for r in cell]
        order = np.argsort(key, kind="stable")
        mid = cell[order[(len(cell) - 1) // 2]] if len(cell) % 2 else None
        if len(cell) % 2 == 0:
            lo, hi = cell[order[len(cell) // 2 - 1]], cell[order[len(cell) // 2]]
            capped = lo["capped"] or hi["capped"]
            med = None if capped else (lo["raw_count"] + hi["raw_count"]) / 2
        else:
            capped = mid["capped"]
            med = None if capped else mid["raw_count"]
        rows.append((L, alpha_label(a), len(cell), "capped" if med is None else med))
    h = an.hashlib.sha256("\n".join(sorted(map(str, recs))).encode()).hexdigest()
    an.write_table(plan.output / "analysis" / "degeneracy_median.tsv",
                   ["L", "alpha", "instances", "median_raw_degeneracy"], rows, h,
                   "median raw ground-state degeneracy; capped medians are not reported")


# -- analyze -------------------------------------------------------------------


def _posteriors(recs):
    return [an.SuccessPosterior(r.successes, r.runs) for r in recs]


def cmd_analyze(plan: Plan) -> int:
    rec_dir = plan.output / "records"
    out_dir = plan.output / "analysis"
    q = float(plan.raw["quantile"])
    boots = int(plan.raw["bootstrap"])
    records = {s: read_records(rec_dir / f"{s}.jsonl") for s in SOLVERS}
    records = {s: r for s, r in records.items() if r}
    if not records:
        log.error("no run records under %s", rec_dir)
        return 1
    for s, recs in records.items():
        kinds = {r.tau_kind for r in recs}
        if len(kinds) > 1:
            log.error("refusing to compare %s records with mixed tau conventions %s", s, sorted(kinds))
            return 1
    all_recs = [r for recs in records.values() for r in recs]
    h = record_set_hash(all_recs)
    ids = {plan.instance_id(L, a, i): (L, a) for L, a in plan.cells() for i in range(plan.instances)}

    # per-setting median TTS
    per_setting = []
    best: dict[tuple, tuple] = {}
    per_instance_p: dict[tuple, dict] = {}
    for s, recs in sorted(records.items()):
        groups = defaultdict(list)
        for r in recs:
            if r.instance_id in ids:
                groups[(r.params_hash, ids[r.instance_id])].append(r)
        ladder = defaultdict(dict)
        for (ph, (L, a)), rs in sorted(groups.items(), key=lambda kv: (kv[0][1], kv[0][0])):
            rs.sort(key=lambda r: r.instance_id)
            seed = an.cell_seed(plan.master_seed, s, ph, L, a)
            if s == "hfs":
                stat = _hfs_statistic(rs, q)
                point = an.percentile([an.hfs_tts(r.successes, r.runs, r.tau_per_run_us) for r in rs], q)
                sweeps = 0
            else:
                stat = None
                point = an.percentile(
                    [an.runs_to_solution(p.mean) * r.tau_per_run_us for p, r in zip(_posteriors(rs), rs)], q)
                sweeps = rs[0].params["sweeps"]
            if len(rs) >= 2:
                mean, sigma = an.bootstrap_statistic(
                    _posteriors(rs), q, [r.tau_per_run_us for r in rs], boots, seed, statistic=stat)
            else:
                mean, sigma = point, 0.0
            per_setting.append((s, ph, sweeps, L, alpha_label(a), len(rs), point, mean, 2 * sigma))
            ladder[(L, a)][sweeps] = (point, sigma, ph, rs)
        for (L, a), by_s in ladder.items():
            sw, (point, sigma, ph, rs) = min(by_s.items(), key=lambda kv: (kv[1][0], kv[0]))
            bracketed = len(by_s) >= 3 and min(by_s) < sw < max(by_s)
            best[(s, L, a)] = (sw, point, sigma, bracketed)
            per_instance_p[(s, L, a)] = {r.instance_id: an.SuccessPosterior(r.successes, r.runs).mean for r in rs}

    an.write_table(out_dir / "tts_by_setting.tsv",
                   ["solver", "params_hash", "sweeps", "L", "alpha", "instances", "tts_us", "boot_mean_us",
                    "two_sigma_us"], per_setting, h, f"q={q} time to solution per solver setting")
    opt_rows = [(s, L, alpha_label(a), sw, point, 2 * sigma, br)
                for (s, L, a), (sw, point, sigma, br) in sorted(best.items(), key=lambda kv: kv[0])]
    an.write_table(out_dir / "tts_optimal.tsv",
                   ["solver", "L", "alpha", "best_sweeps", "tts_us", "two_sigma_us", "bracketed"],
                   opt_rows, h, f"q={q} time to solution at the best tested sweep count")

    # scaling in L per alpha
    L_min = int(plan.raw["fit_L_min"])
    fits = {}
    fit_rows = []
    for s in sorted(records):
        for a in plan.alphas:
            pts = [(L, *best[(s, L, a)][1:3]) for L in plan.L if (s, L, a) in best]
            if len({L for L, *_ in pts if L >= L_min}) < 3:
                continue
            Ls, r, sig = zip(*pts)
            sig = np.array(sig)
            use_sigma = bool(np.all(sig[np.array(Ls) >= L_min] > 0))
            fit = an.scaling_fit(Ls, r, sig if use_sigma else None, L_min)
            fits[(s, a)] = fit
            fit_rows.append((s, alpha_label(a), fit.a, 2 * fit.sigma_a, fit.b, 2 * fit.sigma_b))
    if fit_rows:
        an.write_table(out_dir / "scaling.tsv", ["solver", "alpha", "a", "two_sigma_a", "b", "two_sigma_b"],
                       fit_rows, h, f"ln TTS = a + b L over L >= {L_min}")

    ref = plan.raw["reference"] or sorted(records)[0]
    others = [s for s in sorted(records) if s != ref]
    if ref in records and others:
        sp_rows, d_rows, bd_rows = [], [], []
        for s in others:
            for L, a in plan.cells():
                if (s, L, a) not in best or (ref, L, a) not in best:
                    continue
                _, tx, sx, _ = best[(s, L, a)]
                _, tr, sr, _ = best[(ref, L, a)]
                mean, sig = an.ratio_error((tx, sx), (tr, sr), 1000, an.cell_seed(plan.master_seed, "ratio", s, L, a))
                sp_rows.append((s, ref, L, alpha_label(a), an.speedup_ratio(tx, tr), mean, 2 * sig))
                px, pr = per_instance_p[(s, L, a)], per_instance_p[(ref, L, a)]
                common = sorted(set(px) & set(pr))
                if len(common) >= 2:
                    v1 = [px[i] for i in common]
                    v2 = [pr[i] for i in common]
                    dm, ds = an.half_instance_distance(v1, v2, 100, an.cell_seed(plan.master_seed, "dist", s, L, a))
                    d_rows.append((s, ref, L, alpha_label(a), an.euclid_distance(v1, v2), dm, 2 * ds))
            for a in plan.alphas:
                if (s, a) in fits and (ref, a) in fits:
                    dm, ds = an.slope_difference(fits[(s, a)], fits[(ref, a)], 1000,
                                                 an.cell_seed(plan.master_seed, "slope", s, a))
                    bd_rows.append((s, ref, alpha_label(a), dm, 2 * ds))
        an.write_table(out_dir / "speedup.tsv",
                       ["solver", "reference", "L", "alpha", "ratio", "ratio_mean", "two_sigma"], sp_rows, h,
                       "TTS ratio solver / reference at the best tested settings")
        if d_rows:
            an.write_table(out_dir / "distance.tsv",
                           ["solver", "reference", "L", "alpha", "distance_rms", "half_mean", "two_sigma"],
                           d_rows, h, "success-probability distance between solvers")
        if bd_rows:
            an.write_table(out_dir / "slope_difference.tsv",
                           ["solver", "reference", "alpha", "b_diff", "two_sigma"], bd_rows, h,
                           "difference in scaling slope b")

    _frustration_table(plan, h)
    _correlation_table(plan, best, per_instance_p, records, h)
    return 0


def _hfs_statistic(rs, q):
    mean_t = np.array([r.tau_per_run_us for r in rs])

    def stat(p, idx):
        return an.percentile(mean_t[idx] / p, q, axis=1)

    return stat


def _frustration_table(plan: Plan, h: str):
    rows = []
    for L, a in plan.cells():
        vals = [float(frustration_fraction(read_instance(plan.instance_path(L, a, i))))
                for i in range(plan.instances) if plan.instance_path(L, a, i).exists()]
        if vals:
            rows.append((L, alpha_label(a), len(vals), float(np.mean(vals))))
    an.write_table(plan.output / "analysis" / "frustration.tsv",
                   ["L", "alpha", "instances", "mean_frustrated_fraction"], rows, h,
                   "planted-state frustrated-edge fraction")


def _correlation_table(plan: Plan, best, per_instance_p, records, h: str):
    deg_path = plan.output / "degeneracy" / "degeneracy.jsonl"
    if not deg_path.exists():
        return
    deg = {r["instance_id"]: r for r in read_degeneracy_records(deg_path)
           if r["raw_count"] is not None and not r["capped"]}
    rows = []
    for s in sorted(records):
        for L, a in plan.cells():
            if (s, L, a) not in per_instance_p:
                continue
            ps = per_instance_p[(s, L, a)]
            common = sorted(set(ps) & set(deg))
            x = [np.log(deg[i]["reported_degeneracy"]) for i in common]
            y = [np.log(1.0 / ps[i]) for i in common]
            try:
                rows.append((s, L, alpha_label(a), len(common), an.pearson(x, y)))
            except ValueError:
                continue
    if rows:
        an.write_table(plan.output / "analysis" / "correlation.tsv",
                       ["solver", "L", "alpha", "instances", "pearson_logdeg_vs_log_inverse_p"], rows, h,
                       "degeneracy versus hardness")


# -- entry point ---------------------------------------------------------------


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="frustbench", description="Planted frustrated-loop benchmark driver")
    ap.add_argument("command", choices=["generate", "solve", "enumerate", "analyze"])
    ap.add_argument("--plan", required=True, help="plan file (key = value lines)")
    ap.add_argument("--solvers", help="comma list from sa,sqa,sssv,hfs (default: plan's roster)")
    ap.add_argument("--oracle", action="store_true", help="cross-check small instances by brute force")
    ap.add_argument("--cap", type=int, help="solution cap for enumerate")
    ap.add_argument("--workers", type=int, help="worker processes (default: $FRUSTBENCH_WORKERS or 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        plan = Plan.read(args.plan)
        if args.command == "generate":
            return cmd_generate(plan)
        if args.command == "solve":
            solvers = args.solvers.split(",") if args.solvers else plan.solvers
            bad = [s for s in solvers if s not in SOLVERS]
            if bad:
                raise PlanError(f"unknown solvers {bad}")
            workers = args.workers or int(os.environ.get("FRUSTBENCH_WORKERS", "1"))
            return cmd_solve(plan, solvers, max(workers, 1))
        if args.command == "enumerate":
            return cmd_enumerate(plan, args.cap or int(plan.raw["cap"]), args.oracle)
        return cmd_analyze(plan)
    except (PlanError, FileNotFoundError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
