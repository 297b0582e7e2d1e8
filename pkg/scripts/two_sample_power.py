"""Rejection rates of the permutation MMD test across dimensions.

Three settings: mixtures that differ, one mixture against itself, and a
unit mean shift between Gaussians.
"""

import sys

from mkme.cli import main

COMMON = ["two-sample", "--d", "1,2,5,10", "--n", "50", "--trials", "100", "--perms", "500"]

if __name__ == "__main__":
    extra = sys.argv[1:]
    codes = [
        main([*COMMON, "--generator", "mog", "--out", "runs/mmd_mog_diff", *extra]),
        main([*COMMON, "--generator", "mog", "--same", "--out", "runs/mmd_mog_same", *extra]),
        main([*COMMON, "--generator", "gauss", "--shift", "1", "--out", "runs/mmd_gauss_shift", *extra]),
    ]
    sys.exit(max(codes))
