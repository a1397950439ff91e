"""The bulk limit of a site energy.

A site's energy depends on its whole (finite) cluster, but exponentially
weakly on distant parts: growing the cluster radius changes the origin
site's energy by less and less.  This script prints the Cauchy sequence
and its fitted decay rate, then does the same for the density-matrix
off-diagonal decay ("weak locality") on one fixed cluster.
"""

import numpy as np

from tbsite import (
    DefectReference,
    OccupationFns,
    TBModel,
    assemble,
    build_lattice_disk,
    density_matrix,
    eig,
    perturb,
    tdlimit_site_energy,
    triangular_lattice,
)
from tbsite._stats import linear_fit

model = TBModel(kT=0.4)
seq = tdlimit_site_energy(DefectReference(triangular_lattice(1.0)), model, (0, 0),
                          [4.0, 6.0, 8.0, 10.0, 12.0])
print("origin-site energy in growing disks:")
for R, e in seq:
    print(f"  R={R:4.1f}: {e:.12f}")
d = np.abs(np.diff([e for _, e in seq]))
slope, _, r2 = linear_fit([r for r, _ in seq][:-1], np.log(d))
print(f"successive differences decay at rate {-slope:.2f} per length (R² {r2:.3f})\n")

hot = TBModel(kT=1.0)
occ = OccupationFns.from_model(hot)
cfg = perturb(build_lattice_disk(triangular_lattice(1.0), 10.0), 0.1, seed=0)
G = density_matrix(eig(assemble(hot, cfg)), occ)
iu, ju = np.triu_indices(len(cfg), k=1)
r = np.linalg.norm(cfg.positions[iu] - cfg.positions[ju], axis=1)
mag = np.abs(G[iu, ju])
keep = mag > 1e-14
slope, _, r2 = linear_fit(r[keep], np.log(mag[keep]))
print(f"density-matrix off-diagonal decay on a {len(cfg)}-site cluster: "
      f"rate {-slope:.2f} per length (R² {r2:.3f})")
