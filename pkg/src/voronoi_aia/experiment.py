"""Seeded experiment execution, trace emission and parameter sweeps."""

from __future__ import annotations

import json
import math
import os
import statistics
import time
from dataclasses import dataclass, field, replace
from typing import Any, Optional, Sequence

import numpy as np

from .coordinator import RunResult, run, state_from_scenario
from .scenario import DEPLOYMENTS, Scenario, random_landmarks

AXES = ("n", "m", "t", "mode")
DEFAULT_PRIOR = ((0.04, 0.0), (0.0, 0.04))


def cell_rng(seed: int, cell: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(cell)]))


def _mean_std(xs: Sequence[float]) -> tuple[float, float]:
    if not xs:
        return (math.nan, math.nan)
    return (float(np.mean(xs)), float(np.std(xs)))


def build_scenario(
    base: Scenario,
    n: Optional[int] = None,
    m: Optional[int] = None,
    seed: Optional[int] = None,
    deployment: str = "corner",
    **changes,
) -> Scenario:
    """Clone ``base`` with robots from a named deployment and freshly seeded landmarks.

    Landmark placement depends on ``seed`` and ``m`` only, so scenarios that
    differ in N, T or mode see the same landmarks.
    """
    seed = base.seed if seed is None else seed
    n = len(base.robots) if n is None else n
    m = len(base.landmarks) if m is None else m
    if deployment not in DEPLOYMENTS:
        raise ValueError(f"unknown deployment {deployment!r}")
    prior = base.landmarks[0].prior_cov if base.landmarks else DEFAULT_PRIOR
    robots = DEPLOYMENTS[deployment](n, base.workspace)
    landmarks = random_landmarks(m, base.workspace, prior, np.random.default_rng(seed))
    return replace(base, robots=robots, landmarks=landmarks, seed=seed, **changes)


def run_experiment(
    scenario: Scenario,
    out_path: Optional[str] = None,
    rng: Optional[np.random.Generator] = None,
) -> dict[str, Any]:
    """Run one scenario, streaming one JSON line per step to ``out_path``.

    The trace ends with a record flagged ``"summary"``.  Wall-clock timings
    are kept out of the trace (so repeated runs are byte-identical) and go to
    ``<out_path>.timing.json`` instead.
    """
    fh = open(out_path, "w") if out_path is not None else None
    try:
        wall0 = time.perf_counter()
        state = state_from_scenario(scenario, rng)

        def emit(rec, _state):
            if fh is not None:
                fh.write(json.dumps(rec) + "\n")

        result: RunResult = run(state, on_step=emit)
        wall = time.perf_counter() - wall0
        summary = {
            "summary": True,
            "F": result.F,
            "timeout": result.timeout,
            "steps": len(result.trace),
            "partition_violations": result.partition_violations,
            "final_dets": [b.det for b in state.fused_belief.landmarks],
        }
        if fh is not None:
            fh.write(json.dumps(summary) + "\n")
    finally:
        if fh is not None:
            fh.close()
    plan_t = [dt for _, dt in state.plan_times]
    timing = {
        "plan_time_mean": _mean_std(plan_t)[0],
        "plan_time_std": _mean_std(plan_t)[1],
        "n_plans": len(plan_t),
        "voronoi_time_mean": _mean_std(state.voronoi_times)[0],
        "voronoi_time_std": _mean_std(state.voronoi_times)[1],
        "wall_clock": wall,
    }
    if out_path is not None:
        with open(out_path + ".timing.json", "w") as tf:
            json.dump(timing, tf, indent=2)
    return {**summary, **timing, "result": result}


@dataclass
class SweepTable:
    axis: str
    rows: list[dict] = field(default_factory=list)
    runs: list[dict] = field(default_factory=list)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]

    def to_json(self) -> str:
        return json.dumps({"axis": self.axis, "rows": self.rows, "runs": self.runs}, indent=2)

    def to_text(self) -> str:
        head = f"{self.axis:>8} {'runs':>5} {'F mean':>9} {'F std':>8} {'F median':>9} {'timeouts':>8} {'errors':>6} {'T_plan':>9} {'T_vor':>9}"
        lines = [head]
        for r in self.rows:
            lines.append(
                f"{str(r['value']):>8} {r['runs']:>5} {r['F_mean']:>9.1f} {r['F_std']:>8.1f} {r['F_median']:>9.1f}"
                f" {r['timeouts']:>8} {r['errors']:>6} {r['plan_time_mean']:>9.4f} {r['voronoi_time_mean']:>9.6f}"
            )
        return "\n".join(lines)


def _cell_scenario(base: Scenario, axis: str, value, seed: int, deployment: str) -> Scenario:
    if axis == "n":
        return build_scenario(base, n=int(value), seed=seed, deployment=deployment)
    if axis == "m":
        return build_scenario(base, m=int(value), seed=seed, deployment=deployment)
    if axis == "t":
        return build_scenario(base, seed=seed, deployment=deployment, comm_period=int(value))
    if axis == "mode":
        return build_scenario(base, seed=seed, deployment=deployment, mode=str(value))
    raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")


def run_sweep(
    base: Scenario,
    axis: str,
    values: Sequence,
    seeds: Sequence[int],
    deployment: str = "corner",
    on_run=None,
) -> SweepTable:
    """Run every (value, seed) cell; errors are recorded per cell and the sweep continues."""
    axis = axis.lower()
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; expected one of {AXES}")
    table = SweepTable(axis)
    for ci, value in enumerate(values):
        Fs, plan_ts, vor_ts = [], [], []
        timeouts = errors = 0
        for seed in seeds:
            rec: dict[str, Any] = {"value": value, "seed": seed}
            try:
                sc = _cell_scenario(base, axis, value, seed, deployment)
                out = run_experiment(sc, None, rng=cell_rng(seed, ci))
                rec.update(
                    F=out["F"],
                    timeout=out["timeout"],
                    partition_violations=out["partition_violations"],
                    plan_time_mean=out["plan_time_mean"],
                    voronoi_time_mean=out["voronoi_time_mean"],
                )
                Fs.append(out["F"])
                timeouts += int(out["timeout"])
                if not math.isnan(out["plan_time_mean"]):
                    plan_ts.append(out["plan_time_mean"])
                vor_ts.append(out["voronoi_time_mean"])
            except Exception as e:  # noqa: BLE001 - recorded per cell
                errors += 1
                rec["error"] = f"{type(e).__name__}: {e}"
            table.runs.append(rec)
            if on_run is not None:
                on_run(rec)
        mean, std = _mean_std(Fs)
        table.rows.append(
            {
                "value": value,
                "runs": len(seeds),
                "F_mean": mean,
                "F_std": std,
                "F_median": float(statistics.median(Fs)) if Fs else math.nan,
                "timeouts": timeouts,
                "errors": errors,
                "plan_time_mean": _mean_std(plan_ts)[0],
                "voronoi_time_mean": _mean_std(vor_ts)[0],
            }
        )
    return table


def ensure_writable(path: str) -> None:
    """Fail with an I/O error before any simulation work if ``path`` cannot be written."""
    d = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(d):
        raise OSError(f"output directory does not exist: {d}")
    with open(path, "a"):
        pass
