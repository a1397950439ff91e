"""Eigendecomposition route: band energy, occupations, density matrix and
site energies, plus the Hellmann-Feynman gradient of the band energy.

The per-site attribution works because eigenvectors are normalized: with
weights fe(e) = e * f(e),

    E = sum_s fe(eps_s) = sum_l sum_s fe(eps_s) psi_s[l]^2 = sum_l E_l,

so ``site_energies`` always sums back to the band energy exactly (up to
round-off).  ``site_energies_overlap`` is the variant for non-orthogonal
orbitals, which avoids matrix square roots by weighting with the overlap
matrix on one side only; its total is trace-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist

from .geometry import Configuration
from .model import TBModel, hop_d1, lowdin_orthogonalize

__all__ = [
    "SpectralData",
    "OccupationFns",
    "eig",
    "eig_generalized",
    "band_energy",
    "density_matrix",
    "site_energies",
    "site_energies_overlap",
    "fe_of_hamiltonian",
    "total_gradient_hf",
]


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigenvalues (ascending) and eigenvector columns of a Hamiltonian.

    For ``eig`` output the columns are orthonormal; for ``eig_generalized``
    they are orthonormal in the overlap inner product (Psi^T M Psi = I).
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


def eig(H: np.ndarray) -> SpectralData:
    """Full symmetric eigendecomposition."""
    w, V = sla.eigh(np.asarray(H, dtype=float))
    return SpectralData(w, V)


def eig_generalized(H: np.ndarray, M: np.ndarray) -> SpectralData:
    """Solve H psi = eps M psi via symmetric orthogonalization.

    Returns M-orthonormal eigenvectors of the generalized problem.
    """
    w, V = np.linalg.eigh(M)
    if w.min() <= 1e-10:
        raise ValueError(f"overlap matrix is not SPD (min eigenvalue {w.min():.3e})")
    Ht = lowdin_orthogonalize(H, M)
    eps, phi = sla.eigh(Ht)
    Minvhalf = (V / np.sqrt(w)) @ V.T
    return SpectralData(eps, Minvhalf @ phi)


@dataclass(frozen=True)
class OccupationFns:
    """Fermi-Dirac occupation at fixed chemical potential and temperature.

    ``f`` is evaluated in the sign-split logistic form, so it is finite for
    arguments hundreds of kT away from mu, and accepts complex arguments
    (needed on quadrature contours).
    """

    mu: float
    kT: float

    @classmethod
    def from_model(cls, model: TBModel) -> "OccupationFns":
        return cls(model.mu, model.kT)

    def f(self, e):
        x = (np.asarray(e) - self.mu) / self.kT
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.empty_like(x)
        pos = x.real > 0
        ex = np.exp(-x[pos])
        out[pos] = ex / (1.0 + ex)
        out[~pos] = 1.0 / (1.0 + np.exp(x[~pos]))
        return out[0] if scalar else out

    def fe(self, e):
        """Energy-weighted occupation fe(e) = e * f(e)."""
        return np.asarray(e) * self.f(e)

    def df(self, e):
        fv = self.f(e)
        return -fv * (1.0 - fv) / self.kT

    def dfe(self, e):
        """d/de [e * f(e)] = f(e) + e * f'(e)."""
        return self.f(e) + np.asarray(e) * self.df(e)


def band_energy(spec: SpectralData, occ: OccupationFns) -> float:
    return float(np.sum(occ.fe(spec.eigenvalues)))


def density_matrix(spec: SpectralData, occ: OccupationFns) -> np.ndarray:
    """Gamma = f(H), symmetric with eigenvalues in (0, 1)."""
    V = spec.eigenvectors
    return (V * occ.f(spec.eigenvalues)) @ V.T


def site_energies(spec: SpectralData, occ: OccupationFns) -> np.ndarray:
    """E_l = sum_s fe(eps_s) psi_s[l]^2, the diagonal of fe(H)."""
    V = spec.eigenvectors
    return (V**2) @ occ.fe(spec.eigenvalues)


def fe_of_hamiltonian(spec: SpectralData, occ: OccupationFns) -> np.ndarray:
    """Dense matrix function fe(H); validation target for quadrature routes."""
    V = spec.eigenvectors
    return (V * occ.fe(spec.eigenvalues)) @ V.T


def site_energies_overlap(
    spec: SpectralData, occ: OccupationFns, M: np.ndarray
) -> np.ndarray:
    """Site energies for non-orthogonal orbitals.

    ``spec`` must solve the generalized problem (``eig_generalized``).  The
    one-sided overlap weighting

        E~_l = sum_s fe(eps_s) [M psi_s]_l [psi_s]_l

    equals the diagonal of M^{1/2} fe(Ht) M^{-1/2} and keeps the total equal
    to sum_s fe(eps_s) without ever forming a matrix square root.
    """
    w = np.linalg.eigvalsh(M)
    if w.min() <= 1e-10:
        raise ValueError(f"overlap matrix is not SPD (min eigenvalue {w.min():.3e})")
    V = spec.eigenvectors
    return np.einsum("ls,ls->l", M @ V, V * occ.fe(spec.eigenvalues))


def total_gradient_hf(
    model: TBModel,
    config: Configuration,
    spec: SpectralData,
    occ: OccupationFns,
) -> np.ndarray:
    """Band-energy gradient dE/dy, shape (N, dim), by Hellmann-Feynman.

    dE/dp = sum_s fe'(eps_s) psi_s^T (dH/dp) psi_s; with the weighted
    projector G = Psi diag(fe') Psi^T each component is the sparse
    contraction Tr(G dH/dp), evaluated here for all sites in one pass over
    the interacting pairs.  Degeneracies are harmless: only the projector
    enters.
    """
    V = spec.eigenvectors
    G = (V * occ.dfe(spec.eigenvalues)) @ V.T
    pos = config.positions
    r = cdist(pos, pos)
    p, q = np.nonzero((r > 0) & (r < model.rcut))
    out = np.zeros_like(pos)
    if len(p) == 0:
        return out
    rv = r[p, q]
    coef = 2.0 * G[p, q] * hop_d1(model, rv) / rv
    for i in range(config.dim):
        out[:, i] = np.bincount(
            p, weights=coef * (pos[p, i] - pos[q, i]), minlength=len(config)
        )
    return out
