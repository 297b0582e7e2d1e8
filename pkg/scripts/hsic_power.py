"""HSIC power on subsamples of a paired dataset.

Pass ``--data FILE`` (last column is y unless ``--label-col`` is given).
Without it a noisy sinusoidal regression sample is generated.
"""

import sys
from pathlib import Path

import numpy as np

from mkme.cli import main
from mkme.rng import substream

if __name__ == "__main__":
    extra = sys.argv[1:]
    if "--data" not in extra:
        r = substream(0, "hsic-demo")
        x = r.uniform(-3, 3, size=(300, 1))
        y = np.sin(2 * x) + 0.5 * r.standard_normal((300, 1))
        path = Path("runs/hsic_demo.csv")
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, np.hstack([x, y]), delimiter=",")
        extra = ["--data", str(path), *extra]
    sys.exit(main([
        "hsic", "--eta", "0.05,0.1,0.2,0.3", "--alpha", "0.01,0.05,0.1",
        "--repetitions", "200", "--perms", "500", "--out", "runs/hsic", *extra,
    ]))
