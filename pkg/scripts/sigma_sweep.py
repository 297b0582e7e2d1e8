"""Loss of MKME at fixed corruption variances (n=10, d=20, 30 mixtures)."""

import sys

from mkme.cli import main

if __name__ == "__main__":
    sys.exit(main([
        "synth-gauss", "--d", "20", "--n", "10", "--copies", "30",
        "--sigma2-grid", "0,0.5,1,2,4,8,16,32,64",
        "--out", "runs/sigma_sweep", *sys.argv[1:],
    ]))
