"""One-time BDM cross-check fixture generator.

Exports the published 2D CTM dataset shipped with pybdm (CTM-B2-D4x4, square
blocks 1x1..4x4) into the srp-ctm text format, then evaluates pybdm's BDM with
its 'recursive' partition on 20 random 7x7 boards and writes the frozen
reference values. The C++ suite reads both files and must agree to 1e-6.

    pip install pybdm==0.1.0
    python3 tools/oracle/pybdm_crosscheck.py data/ctm_published_b2_d4x4.txt \
        tests/data/bdm_reference_7x7.txt
"""
import sys

import numpy as np
from pybdm import BDM
from pybdm.partitions import PartitionRecursive
from pybdm.utils import get_ctm_dataset
from pybdm.encoding import normalize_key

DATASET = "CTM-B2-D4x4"


def export_table(path):
    ctm, _ = get_ctm_dataset(DATASET)
    with open(path, "w") as out:
        out.write(f"srp-ctm 1 published:{DATASET}\n")
        for side in (1, 2, 3, 4):
            n = side * side
            for pattern in range(1 << n):
                bits = format(pattern, f"0{n}b")
                out.write(f"{side} {side} {bits} {ctm[(side, side)][normalize_key(bits)]!r}\n")


def export_reference(path):
    bdm = BDM(ndim=2, partition=PartitionRecursive, shape=(4, 4), min_length=2)
    rng = np.random.default_rng(20240501)
    with open(path, "w") as out:
        out.write(f"# pybdm recursive partition (min_length=2), dataset {DATASET}\n")
        for _ in range(20):
            board = rng.integers(0, 2, size=(7, 7))
            value = bdm.bdm(board)
            out.write("board\n")
            for row in board:
                out.write("".join(str(int(v)) for v in row) + "\n")
            out.write(f"bdm {value!r}\n")


if __name__ == "__main__":
    export_table(sys.argv[1])
    export_reference(sys.argv[2])
