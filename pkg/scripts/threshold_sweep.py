"""Reconstruction MSE against the CFG turn-on threshold, using the fine-grid teacher.

    python3 scripts/threshold_sweep.py --out runs/sweep [--w-max 8]
"""

import os
import sys

import numpy as np

sys.path.insert(0, os.path.dirname(__file__))

from _common import lab_from, parser  # noqa: E402

from icd.plots import Canvas  # noqa: E402
from icd.solver import sweep_csv, threshold_sweep  # noqa: E402


def main() -> None:
    p = parser(__doc__)
    p.add_argument("--w-max", type=float, default=8.0)
    p.add_argument("--samples", type=int, default=1024)
    args = p.parse_args()
    lab = lab_from(args)
    x, c = lab.eval_set
    rows = threshold_sweep(lab.teacher, x[:args.samples], c[:args.samples],
                           [round(0.1 * i, 1) for i in range(11)], args.w_max)
    with open(os.path.join(args.out, "sweep.csv"), "w", newline="\n") as f:
        f.write(sweep_csv(rows))
    pts = np.array([[r["threshold"], np.log10(r["mse"])] for r in rows])
    cv = Canvas(480, 360, pts, equal=False)
    cv.axes("turn-on threshold", "log10 mse")
    cv.polyline(pts, "#1f77b4", 1.5)
    cv.points(pts, "#d62728", 3.0)
    with open(os.path.join(args.out, "sweep.svg"), "w", newline="\n") as f:
        f.write(cv.render())
    for r in rows:
        print(f"T={r['threshold']:.1f}  mse {r['mse']:.5f}")


if __name__ == "__main__":
    main()
