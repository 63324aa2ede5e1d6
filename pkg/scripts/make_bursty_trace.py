#!/usr/bin/env python3
"""Regenerate configs/traces/bursty.trace.

Alternating 5 s epochs of high and low Poisson arrival rate over a
60 s window. The file is committed; rerunning this script reproduces
it byte for byte (fixed seed, fixed formatting).
"""

import os
import random

HIGH_RATE = 100.0   # arrivals/s during a burst
LOW_RATE = 10.0     # arrivals/s between bursts
EPOCH_S = 5.0
SPAN_S = 60.0
SEED = 20240517

def main() -> None:
    rng = random.Random(SEED)
    stamps = []
    t = 0.0
    while t < SPAN_S:
        epoch = int(t // EPOCH_S)
        rate = HIGH_RATE if epoch % 2 == 0 else LOW_RATE
        t += rng.expovariate(rate)
        if t < SPAN_S:
            stamps.append(t)
    out = os.path.join(os.path.dirname(__file__), "..",
                       "configs", "traces", "bursty.trace")
    with open(out, "w", encoding="utf-8") as fh:
        fh.write("# arrival timestamps in seconds, one per line\n")
        for s in stamps:
            fh.write(f"{s:.6f}\n")
    print(f"wrote {len(stamps)} arrivals to {os.path.normpath(out)}")

if __name__ == "__main__":
    main()
