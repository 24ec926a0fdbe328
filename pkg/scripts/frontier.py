"""Edit success against preservation as the guidance threshold tau moves.

    python3 scripts/frontier.py --out runs/frontier
"""

import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

from _common import lab_from, parser  # noqa: E402

from icd.acceptance import RUN_FULL  # noqa: E402
from icd.editing import edit_eval, frontier_csv  # noqa: E402
from icd.plots import PlotSpec, emit_plot  # noqa: E402
from icd.rng import stream  # noqa: E402
from icd.solver import GuidanceSchedule  # noqa: E402


def main() -> None:
    p = parser(__doc__)
    p.add_argument("--w-max", type=float, default=8.0)
    p.add_argument("--taus", default="0.5,0.6,0.7,0.8")
    args = p.parse_args()
    lab = lab_from(args)
    res = lab.icd(RUN_FULL)
    x, _ = lab.eval_set
    pairs = [(k, (k + 1) % lab.mix.n_classes) for k in range(lab.mix.n_classes)]
    rows = []
    for tau in (float(t) for t in args.taus.split(",")):
        rep = edit_eval(res.fcd, res.cd, lab.mix, x, pairs, GuidanceSchedule.step(args.w_max, tau),
                        stream(args.seed, "frontier", tau))
        rows.append({"tau": tau, "w_max": args.w_max, **rep.row()})
        print(f"tau={tau:.2f}  success {rep.edit_success:.3f}  displacement {rep.preservation:.3f}"
              f"  baseline {rep.baseline:.3f}")
    path = os.path.join(args.out, "frontier.csv")
    with open(path, "w", newline="\n") as f:
        f.write(frontier_csv(rows))
    emit_plot(PlotSpec("frontier", [path], "edit frontier"), os.path.join(args.out, "frontier.svg"))


if __name__ == "__main__":
    main()
