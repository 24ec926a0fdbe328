"""Latent NLL of encodings under different guidance scales.

Rows: the fine-grid teacher encoding at w in {1, 2, 4, 8}, and the forward
student (always w = 1).

    python3 scripts/table1_nll.py --out runs/nll
"""

import csv
import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

from _common import lab_from, parser  # noqa: E402

from icd.acceptance import RUN_FULL  # noqa: E402
from icd.inversion import encode, encode_guided_ddim, latent_nll  # noqa: E402
from icd.solver import GuidanceSchedule  # noqa: E402


def main() -> None:
    args = parser(__doc__).parse_args()
    lab = lab_from(args)
    x, c = lab.eval_set
    rows = []
    for w in (1.0, 2.0, 4.0, 8.0):
        z = encode_guided_ddim(lab.teacher, x, c, GuidanceSchedule.constant(w))
        rows.append(("teacher-ddim", w, latent_nll(z)))
    z, _ = encode(lab.icd(RUN_FULL).fcd, x, c)
    rows.append(("forward-student", 1.0, latent_nll(z)))
    with open(os.path.join(args.out, "nll.csv"), "w", newline="\n") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["encoder", "w", "nll"])
        for name, w, nll in rows:
            wr.writerow([name, w, repr(nll)])
            print(f"{name:16s} w={w:<4g} nll {nll:.4f}")


if __name__ == "__main__":
    main()
