"""Terminal horizon against the fusion period T.

    python scripts/comm_period.py --values 1,2,10 --seeds 0-9
    python scripts/comm_period.py --n 50 --m 100 --values 1,2,10,15   # slow
"""

from common import base_scenario, finish, parser, progress, seeds
from voronoi_aia.experiment import run_sweep


def main():
    ap = parser(__doc__)
    ap.add_argument("--values", default="1,2,10")
    args = ap.parse_args()
    values = [int(v) for v in args.values.split(",")]
    table = run_sweep(base_scenario(args), "t", values, seeds(args), args.deployment, on_run=progress)
    finish(table, args)
    by_seed = {}
    for r in table.runs:
        by_seed.setdefault(r["seed"], {})[r["value"]] = r.get("F")
    first = values[0]
    for v in values[1:]:
        d = [s[v] - s[first] for s in by_seed.values() if s.get(v) is not None and s.get(first) is not None]
        if d:
            print(f"paired F(T={v}) - F(T={first}): mean {sum(d) / len(d):+.1f} over {len(d)} seeds")


if __name__ == "__main__":
    main()
