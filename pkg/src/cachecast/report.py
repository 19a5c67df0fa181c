"""Per-config pipelines, report assembly and CSV export."""
from __future__ import annotations

import csv
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from math import comb
from pathlib import Path
from typing import Optional

from .converse import (
    MAX_ORACLE_PACKETS,
    block_instance,
    brute_force_min_blocks,
    check_feasible,
    greedy_blocks,
    lower_bound_delivery,
    tiny_from_placement,
)
from .errors import BudgetExceeded, CacheCastError, ConfigError
from .model import MULTI_TX, DemandVector, SystemConfig, ValidatedConfig, validate_config
from .phy import simulate
from .placement import file_holders, place_transmitter_caches, placement_dump, subpacketization
from .scheduler import delivery_metrics, schedule, schedule_json, verify_exactly_once

SCHEMA_VERSION = 1

OK = "ok"
VERIFY_FAILED = "verification_failure"
CONFIG_ERROR = "config_error"
BUDGET = "budget_exceeded"

EXIT_CODES = {OK: 0, VERIFY_FAILED: 2, CONFIG_ERROR: 3, BUDGET: 4}
# when several configs fail differently, the most severe status wins
SEVERITY = [VERIFY_FAILED, CONFIG_ERROR, BUDGET, OK]

BOUND_COLUMNS = ["K", "K_T", "L_T", "gamma", "gamma_T", "C",
                 "T_achievable", "T_lower_bound", "DoF", "tight"]
PLOT_COLUMNS = ["config", "K", "L", "t", "C", "metric", "value"]


@dataclass
class ExperimentSpec:
    configs: list
    stages: tuple = ("plan", "simulate", "bound")
    trials: int = 10
    payload_bytes: int = 64
    seed: Optional[int] = None  # overrides every config's seed
    trace: bool = False
    oracle: bool = False
    jobs: int = 1
    out: Optional[Path] = None
    # sweeps keep going past configs the scheduler cannot build (the bound still applies)
    skip_unschedulable: bool = False


@dataclass
class RunReport:
    command: str
    results: list = field(default_factory=list)
    wall_time: dict = field(default_factory=dict)  # kept out of the JSON for byte-stability

    @property
    def status(self) -> str:
        seen = {r["status"] for r in self.results} or {OK}
        return next(s for s in SEVERITY if s in seen)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.status]

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "command": self.command,
                "status": self.status, "results": self.results}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def achievable_T(vc: ValidatedConfig) -> Fraction:
    if vc.schedulable:
        return delivery_metrics(vc).T
    return Fraction(vc.K - vc.t, vc.t + vc.L_eff)


def bound_row(vc: ValidatedConfig) -> dict:
    b = lower_bound_delivery(vc)
    T_ach = achievable_T(vc)
    dof = None if T_ach == 0 else Fraction(vc.K - vc.t) / T_ach
    cfg = vc.cfg
    return {
        "K": vc.K, "K_T": vc.K_T, "L_T": vc.L_T, "gamma": str(cfg.gamma),
        "gamma_T": str(cfg.gamma_T if cfg.mode == MULTI_TX else 1), "C": vc.C,
        "T_achievable": str(T_ach), "T_lower_bound": str(b.T_lb),
        "DoF": None if dof is None else str(dof),
        "DoF_upper_bound": None if b.dof_ub is None else str(b.dof_ub),
        "tight": T_ach == b.T_lb,
    }


def oracle_block_size(vc: ValidatedConfig) -> int:
    """Packets per file for the oracle: the schedule's subpacketization if
    the instance stays within budget, else one packet per cache subfile."""
    if vc.schedulable:
        F = subpacketization(vc)
        if vc.K * comb(vc.K - 1, vc.t) * F // comb(vc.K, vc.t) <= MAX_ORACLE_PACKETS:
            return F
    return comb(vc.K, vc.t)


def run_oracle(vc: ValidatedConfig, demand: DemandVector, F: Optional[int] = None) -> dict:
    F = oracle_block_size(vc) if F is None else F
    tiny = tiny_from_placement(vc, demand, F)
    best = brute_force_min_blocks(tiny)
    greedy = greedy_blocks(tiny)
    T_lb = lower_bound_delivery(vc).T_lb
    T_star = Fraction(best, F)
    sched = vc.schedulable and F % subpacketization(vc) == 0
    T_ach = delivery_metrics(vc).T if sched else Fraction(greedy, F)
    ok = T_lb <= T_star <= T_ach
    if sched:
        ok = ok and T_star == Fraction(vc.K - vc.t, vc.t + vc.L_eff)
    return {"F": F, "packets": len(tiny.packets), "min_blocks": best, "greedy_blocks": greedy,
            "T_star": str(T_star), "T_lower_bound": str(T_lb), "T_achievable": str(T_ach),
            "scheduler_applies": sched, "ok": ok}


def run_config(index: int, cfg: SystemConfig, spec: ExperimentSpec) -> tuple[dict, float]:
    """Run the requested stages for one config; returns (result, seconds)."""
    start = time.perf_counter()
    if spec.seed is not None:
        cfg = replace(cfg, seed=spec.seed)
    res: dict = {"index": index, "config": cfg.to_dict(), "status": OK}
    try:
        res.update(_run_stages(index, cfg, spec))
    except BudgetExceeded as exc:
        res.update(status=BUDGET, error=f"{type(exc).__name__}: {exc}")
    except ConfigError as exc:
        res.update(status=CONFIG_ERROR, error=f"{type(exc).__name__}: {exc}")
    except CacheCastError as exc:
        res.update(status=VERIFY_FAILED, error=f"{type(exc).__name__}: {exc}")
    return res, time.perf_counter() - start


def _run_stages(index: int, cfg: SystemConfig, spec: ExperimentSpec) -> dict:
    vc = validate_config(cfg)
    out: dict = {"derived": {"t": vc.t, "t_T": vc.t_T, "L": vc.L, "L_eff": vc.L_eff, "C": vc.C}}
    failed = False
    demand = DemandVector.identity(vc.K)

    wants_schedule = "plan" in spec.stages or "simulate" in spec.stages
    if wants_schedule and not vc.schedulable and spec.skip_unschedulable:
        out["schedule_skipped"] = vc.partition_error
        wants_schedule = False
    if wants_schedule:
        vc.require_schedulable()
        blocks = schedule(vc, demand)
        out["metrics"] = delivery_metrics(vc).to_dict()
        out["metrics"]["scheduled_blocks"] = len(blocks)
        uniq = verify_exactly_once(blocks, demand, vc)
        out["exactly_once"] = uniq.summary()
        holders = file_holders(place_transmitter_caches(vc))
        infeasible = sum(not check_feasible(block_instance(b, vc, holders)) for b in blocks)
        out["infeasible_blocks"] = infeasible
        failed |= not uniq.ok or infeasible > 0 or len(blocks) != out["metrics"]["block_count"]
        if spec.out is not None:
            spec.out.mkdir(parents=True, exist_ok=True)
            (spec.out / f"schedule_{index}.json").write_text(schedule_json(blocks))
            (spec.out / f"placement_{index}.json").write_text(placement_dump(vc))

        if "simulate" in spec.stages and spec.trials > 0:
            sim = simulate(vc, demand, trials=spec.trials, payload_bytes=spec.payload_bytes,
                           blocks=blocks, trace=spec.trace)
            out["simulation"] = sim.to_dict()
            failed |= not sim.ok
            if spec.trace and spec.out is not None:
                (spec.out / f"trace_{index}.json").write_text(json.dumps(sim.trace))

    if "bound" in spec.stages:
        out["bound"] = bound_row(vc)
        failed |= not out["bound"]["tight"]

    over_budget = False
    if spec.oracle or "oracle" in spec.stages:
        try:
            out["oracle"] = run_oracle(vc, demand)
            failed |= not out["oracle"]["ok"]
        except BudgetExceeded as exc:
            out["oracle"] = {"error": f"{type(exc).__name__}: {exc}"}
            over_budget = True

    if failed:
        out["status"] = VERIFY_FAILED
    elif over_budget:
        out["status"] = BUDGET
    return out


def run_experiment(spec: ExperimentSpec, command: str = "run") -> RunReport:
    """Run every config, in parallel when ``spec.jobs > 1``, and write outputs.

    Results are ordered by config index whatever the completion order.
    """
    if not spec.configs:
        raise ConfigError("experiment has no configurations")
    n = len(spec.configs)
    if spec.jobs > 1 and n > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            done = list(pool.map(run_config, range(n), spec.configs, [spec] * n))
    else:
        done = [run_config(i, c, spec) for i, c in enumerate(spec.configs)]
    report = RunReport(command)
    for res, secs in done:
        report.results.append(res)
        report.wall_time[res["index"]] = secs
    if spec.out is not None:
        write_outputs(report, spec.out)
    return report


def bound_csv(report: RunReport) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BOUND_COLUMNS, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in report.results:
        if "bound" in r:
            w.writerow(r["bound"])
    return buf.getvalue()


def emit_plot_data(report: RunReport) -> str:
    """Tidy CSV: one row per (config, metric).

    Metrics are the achievable DoF, the DoF ceiling from the bound, the
    per-block feedback cost, and the feedback cost L+t of a scheme that
    needs CSIT from every served user, for comparison.
    """
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLOT_COLUMNS)
    for r in report.results:
        d = r.get("derived")
        if d is None:
            continue
        key = [r["index"], r["config"]["K"], d["L"], d["t"], d["C"]]
        rows = []
        if "metrics" in r:
            rows += [("DoF", r["metrics"]["DoF"]), ("feedback_cost", r["metrics"]["feedback_cost"])]
        elif "bound" in r:
            rows += [("DoF", r["bound"]["DoF"]), ("feedback_cost", min(d["L"], d["C"]))]
        if "bound" in r:
            rows.append(("DoF_upper_bound", r["bound"]["DoF_upper_bound"]))
        rows.append(("prior_art_feedback_cost", d["L"] + d["t"]))
        for metric, value in rows:
            w.writerow(key + [metric, value])
    return buf.getvalue()


def write_outputs(report: RunReport, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json() + "\n")
    (out / "bound.csv").write_text(bound_csv(report))
    (out / "plot_data.csv").write_text(emit_plot_data(report))
    timing = {str(k): round(v, 6) for k, v in sorted(report.wall_time.items())}
    (out / "timing.json").write_text(json.dumps(timing, indent=2) + "\n")
