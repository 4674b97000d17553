"""barrier_curves.py

Tabulate the log-barrier ``-(1/theta) log(-u)`` next to the hard indicator it
approximates, for a handful of theta values.

Larger theta hugs the indicator more tightly; the TSV is meant for a quick
line plot in whatever tool is at hand.

Example
-------
python barrier_curves.py --theta 0.5 1 2 5 --output barrier.tsv
"""

from __future__ import annotations
import argparse
from pathlib import Path
import numpy as np

from occ_barrier.losses import barrier_curve


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Sample log-barrier curves over u < 0.")
    parser.add_argument("--theta", nargs="+", type=float, default=[0.5, 1.0, 2.0])
    parser.add_argument("--u-min", type=float, default=0.01, help="Closest approach to 0")
    parser.add_argument("--u-max", type=float, default=2.0)
    parser.add_argument("--points", type=int, default=1000)
    parser.add_argument("--output", default="barrier_curves.tsv", type=Path)
    return parser.parse_args()


def main() -> None:
    args = parse_args()
    u = np.linspace(-args.u_max, -args.u_min, args.points + 2)[1:-1]
    df = barrier_curve(args.theta, u)
    # indicator is 0 on the feasible side, which is all of the grid
    df["indicator"] = 0.0
    df.to_csv(args.output, sep="\t", index=False)
    print(f"Saved {len(df)} points to {args.output.absolute()}")


if __name__ == "__main__":
    main()
