"""Roundtrip MSE over student configurations (boundary count, preservation losses, guidance).

    python3 scripts/table2.py --out runs/table2 [--steps 6000]
"""

import csv
import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

from _common import lab_from, parser  # noqa: E402

from icd.acceptance import CONST8, GUIDED, UNGUIDED  # noqa: E402

# row -> (m, lambda_f, lambda_r, guidance)
ROWS = {
    "A": ((2, 0.0, 0.0), UNGUIDED),
    "B": ((3, 0.0, 0.0), UNGUIDED),
    "C": ((4, 0.0, 0.0), UNGUIDED),
    "F": ((4, 1.5, 0.0), UNGUIDED),
    "G": ((4, 1.5, 1.5), UNGUIDED),
    "H": ((4, 0.0, 0.0), CONST8),
    "I": ((4, 0.0, 0.0), GUIDED),
    "J": ((4, 1.5, 0.0), GUIDED),
    "K": ((4, 1.5, 1.5), GUIDED),
}


def main() -> None:
    args = parser(__doc__).parse_args()
    lab = lab_from(args)
    path = os.path.join(args.out, "table2.csv")
    with open(path, "w", newline="\n") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["row", "m", "lambda_f", "lambda_r", "guidance", "mse"])
        w.writerow(["ref", "ddim-49", "", "", UNGUIDED.describe(), repr(lab.teacher_ref)])
        print(f"ref  teacher DDIM both ways  mse {lab.teacher_ref:.5f}")
        for row, (run, g) in ROWS.items():
            mse = lab.roundtrip(run, g)
            w.writerow([row, *run, g.describe(), repr(mse)])
            f.flush()
            print(f"{row}    m={run[0]} lf={run[1]} lr={run[2]} {g.describe():22s} mse {mse:.5f}")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
