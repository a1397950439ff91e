"""tbsite: site-resolved tight-binding energies and their locality.

The library decomposes the finite-temperature band energy of a two-centre
tight-binding model into per-site contributions, evaluates those site
energies and their first two configuration derivatives both by dense
eigendecomposition and by resolvent contour quadrature, measures the
exponential decay of the derivatives with distance, and uses a clamped
buffer-region truncation to relax point defects with a controlled error.
"""

from .geometry import (
    Configuration,
    DisplacementField,
    Lattice,
    StencilNormSpec,
    apply_isometry,
    apply_permutation,
    build_lattice_disk,
    lattice_stencil_dirs,
    perturb,
    remove_sites,
    stencil_norm,
    triangular_lattice,
)
from .model import (
    HamiltonianDerivative,
    PairPotential,
    TBModel,
    assemble,
    assemble_derivative,
    assemble_second_derivative,
    gershgorin,
    hop,
    hop_d1,
    hop_d2,
    lowdin_orthogonalize,
    pair_energy_site,
)
from .spectral import (
    OccupationFns,
    SpectralData,
    band_energy,
    density_matrix,
    eig,
    eig_generalized,
    site_energies,
    site_energies_overlap,
    total_gradient_hf,
)
from .contour import (
    Contour,
    ResolventCache,
    build_contour,
    matrix_function_contour,
    resolvent_decay_profile,
    site_energy_contour,
    site_gradient_contour,
    site_hessian_contour,
)
from .defect import (
    DefectReference,
    TruncatedProblem,
    convergence_study,
    realize,
    relax,
    tdlimit_site_energy,
    truncate,
    truncated_energy,
    truncated_gradient,
)
from .harness import DecayFit, RunConfig, fit_exponential, run_convergence, run_locality

__version__ = "0.1.0"
