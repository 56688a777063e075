"""Online replanning against one open-loop plan per robot (corner cluster).

    python scripts/online_vs_offline.py --n 3 --m 20 --seeds 0-9
"""

import statistics

from common import base_scenario, finish, parser, progress, seeds
from voronoi_aia.experiment import run_sweep


def main():
    args = parser(__doc__, n=3, deployment="corner").parse_args()
    table = run_sweep(base_scenario(args), "mode", ["online", "offline"], seeds(args), args.deployment, on_run=progress)
    finish(table, args)
    on = [r["F"] for r in table.runs if r["value"] == "online" and "F" in r]
    off = [r["F"] for r in table.runs if r["value"] == "offline" and "F" in r]
    if on and off:
        print(f"F_offline / F_online = {statistics.mean(off) / statistics.mean(on):.2f}")


if __name__ == "__main__":
    main()
