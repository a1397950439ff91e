"""Convergence of the buffered truncation scheme.

Solves the di-vacancy relaxation on growing free regions R with buffers
Rbuf = 1 + log(R) and compares each solution to a high-accuracy reference
(R=20, Rbuf=11).  The geometry error (nearest-neighbor stencil seminorm of
the displacement difference) decays like R^{-1} and the energy error like
R^{-2} in two dimensions.

This is the long demo (~half an hour: the reference cluster has ~3500
atoms).  Pass a smaller reference for a quick look (rows at or above the
reference radius are dropped), e.g.

    python demos/04_truncation_convergence.py 12 4
"""

import sys
import time

from tbsite.harness import RunConfig, run_convergence

reference = [20.0, 11.0]
if len(sys.argv) == 3:
    reference = [float(sys.argv[1]), float(sys.argv[2])]

schedule = [[3, 2.1], [4, 2.4], [6, 2.8], [8, 3.0], [11, 3.4]]
schedule = [row for row in schedule if row[0] < reference[0]]

cfg = RunConfig.from_dict(
    {
        "experiment": "converge",
        "study": {"schedule": schedule, "reference": reference},
    }
)
print(f"running Set-1 schedule against reference {reference} ...")
t0 = time.perf_counter()
out = run_convergence(cfg, out="out/converge")
print(f"done in {(time.perf_counter() - t0) / 60:.1f} min\n")

print(f"{'R':>5} {'Rbuf':>5} {'geom_err':>12} {'energy_err':>12} conv")
for R, Rbuf, geom, energy, conv in out["rows"]:
    print(f"{R:5.1f} {Rbuf:5.1f} {geom:12.6f} {energy:12.8f} {conv}")
s = out["slopes"]
print(f"\nfitted log-log slopes: geometry {s['geom_slope']:.3f} (theory -1), "
      f"energy {s['energy_slope']:.3f} (theory -2)")
