#!/usr/bin/env python3
"""How the sample step tau makes or breaks the inversion.

The Gram matrix of the snapshot family is the pipeline's canary: tau much
smaller than the pulse width sigma makes consecutive snapshots nearly
collinear (condition number blows up, coefficients drown in rounding),
while tau too large lets the node grid skip structure and the late samples
wrap the round trip.  This script sweeps tau/sigma on the two-layer model
and tabulates condition number, data interpolation residual, grid
monotonicity, and reconstruction error, then writes sweep.csv (and a PNG
when matplotlib is importable).

Run:  python3 demos/step_size_study.py
"""

import os
import warnings

import numpy as np

from waverom import models
from waverom.forward1d import VelocityModel, synthesize_transfer
from waverom.invert1d import invert
from waverom.romdata import assemble_gram, cholesky_rom, rom_transfer

SIGMA = 0.03
N = 25
M = 2000
RATIOS = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5)

OUT = os.path.join(os.path.dirname(__file__), "out_step_size")


def one_run(model, tau):
    run = synthesize_transfer(model, SIGMA, tau, N, m=M)
    gram = assemble_gram(run.series)
    rom = cholesky_rom(gram)
    interp = np.abs(rom_transfer(rom, 2 * N) - run.series.values).max() / run.series.values[0]
    reference = VelocityModel.constant(1.0, role="reference")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # the sweep prints its own table
        result = invert(run.series, reference, m=M)
    est = np.concatenate([result.estimates_primary, result.estimates_dual])
    pos = np.concatenate([result.physical_primary, result.physical_dual])
    truth = model.value_at(np.clip(pos, 0.0, model.xmax))
    recon = np.abs(est - truth).max() / truth.max()
    return gram.cond_uu, float(interp), result.diagnostics["monotone"], float(recon)


def main():
    os.makedirs(OUT, exist_ok=True)
    model = models.make_model("two-layer")
    round_trip = 2.0 * model.traveltime_length()
    print(f"two-layer model, sigma={SIGMA}, n={N}, m={M}, round trip {round_trip:.3f}")
    print(f"{'tau/sigma':>10} {'cond(U*U)':>12} {'interp':>10} {'window':>8} "
          f"{'monotone':>9} {'recon':>8}")
    rows = []
    for ratio in RATIOS:
        cond, interp, mono, recon = one_run(model, ratio * SIGMA)
        window = (2 * N - 1) * ratio * SIGMA / round_trip
        rows.append((ratio, cond, interp, window, mono, recon))
        print(f"{ratio:>10.2f} {cond:>12.4g} {interp:>10.2e} {window:>8.2f} "
              f"{str(mono):>9} {recon:>8.2%}")

    with open(os.path.join(OUT, "sweep.csv"), "w") as fh:
        fh.write("tau_over_sigma,cond_uu,interp_residual,window_fraction,monotone,recon_error\n")
        for ratio, cond, interp, window, mono, recon in rows:
            fh.write(f"{ratio},{cond!r},{interp!r},{window!r},{mono},{recon!r}\n")
    print(f"\nwrote {OUT}/sweep.csv")
    print("three regimes: tau << sigma blows up cond(U*U) (collinear snapshots);")
    print("a recording window past the round trip (window > 1) breaks grid")
    print("monotonicity and the estimates with it; in between, errors sit at the")
    print("few-percent level. With n fixed, that leaves a narrow tau band -- in")
    print("practice pick tau ~ sigma and shrink n until the window fits.")

    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    ratios = [r[0] for r in rows]
    ax1.semilogy(ratios, [r[1] for r in rows], "o-")
    ax1.set_xlabel("tau / sigma")
    ax1.set_ylabel("cond(U*U)")
    ax2.semilogy(ratios, [max(r[5], 1e-6) for r in rows], "s-", color="tab:red")
    ax2.set_xlabel("tau / sigma")
    ax2.set_ylabel("max reconstruction error")
    fig.tight_layout()
    fig.savefig(os.path.join(OUT, "sweep.png"), dpi=120)
    print(f"wrote {OUT}/sweep.png")


if __name__ == "__main__":
    main()
