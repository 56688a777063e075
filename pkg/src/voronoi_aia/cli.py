"""Command-line entry point: ``run``, ``sweep`` and ``tree-debug``."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from typing import Optional, Sequence

from .coordinator import state_from_scenario
from .experiment import AXES, ensure_writable, run_experiment, run_sweep
from .planner import plan
from .scenario import DEPLOYMENTS, ScenarioError, load_scenario


def _int_list(text: str) -> list[int]:
    """``"0,1,2"`` or ``"0-9"`` (inclusive) or a mix of both."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def _values(axis: str, text: str) -> list:
    items = [v.strip() for v in text.split(",") if v.strip()]
    return items if axis == "mode" else [int(v) for v in items]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="voronoi-aia", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate one scenario and write its trace")
    r.add_argument("scenario")
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--out", default=None, help="trace path (JSON lines)")

    s = sub.add_parser("sweep", help="run a scenario across one axis and several seeds")
    s.add_argument("scenario")
    s.add_argument("--axis", required=True, choices=AXES)
    s.add_argument("--values", required=True, help="comma-separated axis values")
    s.add_argument("--seeds", required=True, help="comma list or inclusive range, e.g. 0-9")
    s.add_argument("--deployment", choices=sorted(DEPLOYMENTS), default="corner")
    s.add_argument("--out", default=None, help="write the table as JSON here")

    d = sub.add_parser("tree-debug", help="plan once for one robot and print tree statistics")
    d.add_argument("scenario")
    d.add_argument("--robot", type=int, required=True)
    d.add_argument("--seed", type=int, default=None)
    return p


def cmd_run(args) -> int:
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    out = run_experiment(sc, args.out)
    out.pop("result")
    print(json.dumps(out))
    return 1 if out["timeout"] else 0


def cmd_sweep(args) -> int:
    sc = load_scenario(args.scenario)
    if args.out is not None:
        ensure_writable(args.out)
    table = run_sweep(sc, args.axis, _values(args.axis, args.values), _int_list(args.seeds), args.deployment)
    print(table.to_text())
    if args.out is not None:
        with open(args.out, "w") as fh:
            fh.write(table.to_json())
    return 0


def cmd_tree_debug(args) -> int:
    sc = load_scenario(args.scenario)
    if args.seed is not None:
        sc = replace(sc, seed=args.seed)
    state = state_from_scenario(sc)
    if not 0 <= args.robot < len(state.agents):
        raise ScenarioError(f"--robot: index out of range (0..{len(state.agents) - 1})")
    scope = sorted(state.assigned[args.robot])
    agent = state.agents[args.robot]
    info = {"robot": args.robot, "scope": scope}
    if scope:
        cfg = state.config
        res = plan(
            agent.pose,
            [agent.local_belief[i] for i in scope],
            cfg.planner,
            cfg.workspace,
            cfg.sensor,
            cfg.controls,
            state.rng,
            dynamics=[state.dynamics[i] for i in scope],
            dt=cfg.dt,
            keep_tree=True,
        )
        info.update(res.stats())
    for k, v in info.items():
        print(f"{k}: {json.dumps(v)}")
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"run": cmd_run, "sweep": cmd_sweep, "tree-debug": cmd_tree_debug}
    try:
        return handlers[args.command](args)
    except (ScenarioError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
