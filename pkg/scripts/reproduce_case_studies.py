#!/usr/bin/env python3
"""Run every shipped case study and drop results under results/.

Case 4 is a sweep (placement policy x 3 seeds); the others are single
runs. Takes a couple of minutes end to end.
"""

import os
import subprocess
import sys

HERE = os.path.dirname(os.path.abspath(__file__))
ROOT = os.path.dirname(HERE)

SINGLE = [
    "case1_provisioning",
    "case2_single_timer",
    "case2_dual_timer",
    "case3_adaptive_pools",
    "validation_star24",
]
SWEEPS = ["case4_network_aware"]


def main() -> int:
    os.chdir(ROOT)  # configs reference trace files relative to the repo root
    for name in SINGLE:
        out = os.path.join("results", name)
        print(f"== {name} ==")
        rc = subprocess.call([sys.executable, "-m", "dcsim.cli", "run",
                              "--config", f"configs/{name}.yaml",
                              "--output-dir", out])
        if rc != 0:
            return rc
    for name in SWEEPS:
        out = os.path.join("results", name)
        print(f"== {name} (sweep) ==")
        rc = subprocess.call([sys.executable, "-m", "dcsim.cli", "sweep",
                              "--config", f"configs/{name}.yaml",
                              "--output-dir", out])
        if rc != 0:
            return rc
    print("all results under results/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
