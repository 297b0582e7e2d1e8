"""Test NLL of kernel-mean-matched mixtures on t-distributed data (d=10)."""

import sys

from mkme.cli import main

if __name__ == "__main__":
    sys.exit(main(["synth-t", "--d", "10", "--n", "15,60,150", "--copies", "30", "--out", "runs/t_nll", *sys.argv[1:]]))
