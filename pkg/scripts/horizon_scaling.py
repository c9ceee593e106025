#!/usr/bin/env python3
"""Horizon scaling of the weighted occupation functional for Brownian motion.

For the scale-covariant Gaussian family f_T the fitted ratio I/||f_T||
should grow like T^(d/(2p)); prints the per-horizon ratios and the fitted
log-log slope, and writes out/scaling.dat.
"""

import math
import pathlib

import numpy as np

from sdelab import (
    MixedExponents,
    SolverConfig,
    ZeroDrift,
    identity_diffusion,
    make_time_weights,
    simulate,
    weighted_functional,
)

OUT = pathlib.Path(__file__).parent.parent / "out"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    e = MixedExponents(2.5, 5.0, 2)
    d2 = identity_diffusion(2)
    horizons = (0.25, 0.5, 1.0, 2.0)
    ratios = []
    for T, seed in zip(horizons, (201, 202, 203, 204)):
        cfg = SolverConfig(T=T, n_steps=int(round(T / 2e-3)), n_paths=20000, master_seed=seed)
        ens = simulate(d2, ZeroDrift(), cfg, keep_increments=False)
        w = make_time_weights(ens, stop=("horizon", T))
        f = lambda t, x, T=T: np.exp(-(x * x).sum(axis=1) / (2.0 * T))
        inner = (2.0 * math.pi * T / e.p) ** (e.d / 2.0)
        norm = (inner ** (e.q / e.p) * T) ** (1.0 / e.q)
        rep = weighted_functional(ens, w, f, e)
        ratios.append(rep.estimate / norm)
        print(f"T={T:5.2f}  I={rep.estimate:.5f}  ||f||={norm:.5f}  ratio={ratios[-1]:.5f}")
    slope = np.polyfit(np.log(horizons), np.log(ratios), 1)[0]
    print(f"log-log slope {slope:.4f} (d/(2p) = {e.d / (2 * e.p):.4f})")
    with open(OUT / "scaling.dat", "w") as fh:
        for T, r in zip(horizons, ratios):
            fh.write(f"{T:.17g} {r:.17g}\n")


if __name__ == "__main__":
    main()
