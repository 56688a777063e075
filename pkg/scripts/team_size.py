"""Terminal horizon against team size on a uniform grid deployment.

    python scripts/team_size.py --values 2,5,10 --seeds 0-4
"""

from common import base_scenario, finish, parser, progress, seeds
from voronoi_aia.experiment import run_sweep


def main():
    ap = parser(__doc__)
    ap.add_argument("--values", default="2,5,10")
    args = ap.parse_args()
    values = [int(v) for v in args.values.split(",")]
    finish(run_sweep(base_scenario(args), "n", values, seeds(args), args.deployment, on_run=progress), args)


if __name__ == "__main__":
    main()
