"""Average loss of the five estimators over 30 random mixtures.

Runs two sweeps: dimension at n=50 and sample size at d=10.
"""

import sys

from mkme.cli import main

if __name__ == "__main__":
    extra = sys.argv[1:]
    codes = [
        main(["synth-gauss", "--d", "1,2,5,10,20,50", "--n", "50", "--out", "runs/risk_dims", *extra]),
        main(["synth-gauss", "--d", "10", "--n", "10,20,50,100,200", "--out", "runs/risk_ns", *extra]),
    ]
    sys.exit(max(codes))
