"""Shared setup for the sweep scripts in this directory."""

import argparse

from voronoi_aia.cli import _int_list
from voronoi_aia.estimation import SensorModel
from voronoi_aia.experiment import DEFAULT_PRIOR, build_scenario
from voronoi_aia.planner import PlannerParams
from voronoi_aia.scenario import LandmarkConfig, RobotConfig, Scenario
from voronoi_aia.workspace import Workspace


def parser(doc, n=5, m=20, deployment="grid"):
    ap = argparse.ArgumentParser(description=doc, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=n, help="robots")
    ap.add_argument("--m", type=int, default=m, help="landmarks")
    ap.add_argument("--seeds", default="0-9", help="comma list or inclusive range")
    ap.add_argument("--n-max", type=int, default=500, help="planner iterations per replan")
    ap.add_argument("--prior-var", type=float, default=DEFAULT_PRIOR[0][0])
    ap.add_argument("--deployment", default=deployment, choices=["corner", "grid"])
    ap.add_argument("--out", default=None, help="write the sweep table as JSON")
    return ap


def base_scenario(args):
    v = args.prior_var
    seed_lm = LandmarkConfig((5.0, 5.0), ((v, 0.0), (0.0, v)))
    base = Scenario(
        Workspace(10, 10),
        (RobotConfig(1, 1),),
        (seed_lm,),
        sensor=SensorModel(2.0, 0.25, 0.01, 0.4),
        planner=PlannerParams(n_max=args.n_max),
    )
    return build_scenario(base, n=args.n, m=args.m, seed=0, deployment=args.deployment)


def seeds(args):
    return _int_list(args.seeds)


def progress(rec):
    print(f"  {rec['value']!s:>8} seed {rec['seed']:>3}: F={rec.get('F', rec.get('error'))}", flush=True)


def finish(table, args):
    print(table.to_text())
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(table.to_json())
