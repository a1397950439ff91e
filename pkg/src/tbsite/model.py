"""Two-centre tight-binding model: hopping function, Hamiltonian assembly,
its first and second configuration derivatives, spectral bounds, and the
optional repulsive pair term.

The hopping is a Morse-like radial function multiplied by a smooth cutoff
factor,

    h(r) = (exp(-2*alpha*(r - r0)) - 2*exp(-alpha*(r - r0))) * fcut(r),
    fcut(r) = 1 / (1 + exp(1 / (rcut - r)))   for r < rcut,   0 otherwise.

The cutoff factor and all its derivatives vanish as r -> rcut from below,
so h is infinitely differentiable on all of (0, inf) and matrix elements
vanish identically beyond ``rcut``.  (Flipping the sign inside the inner
reciprocal instead makes the factor tend to 1 at the cutoff, i.e. a jump
in h; that variant pins relaxed pair distances onto the discontinuity and
leaves geometry optimizations unable to converge.)  The diagonal is a
constant ``onsite``; with a single species the spectrum is symmetric about
it, which pins the natural chemical potential to ``mu = onsite``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.spatial.distance import cdist

from .geometry import Configuration

__all__ = [
    "TBModel",
    "PairPotential",
    "HamiltonianDerivative",
    "hop",
    "hop_d1",
    "hop_d2",
    "assemble",
    "assemble_derivative",
    "assemble_second_derivative",
    "gershgorin",
    "pair_energy_site",
    "pair_energies",
    "pair_energy_total",
    "pair_gradient",
    "lowdin_orthogonalize",
]


@dataclass(frozen=True, eq=False)
class PairPotential:
    """Short-ranged radial pair interaction U(r) with derivatives."""

    value: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray] | None = None
    rcut: float = np.inf


@dataclass(frozen=True, eq=False)
class TBModel:
    """Model parameters.

    ``mu=None`` resolves to ``onsite`` (the symmetric-spectrum Fermi level).
    ``overlap`` optionally holds a dense SPD overlap matrix for a fixed
    system size; ``None`` means orthogonal orbitals (identity overlap).
    """

    alpha: float = 2.0
    r0: float = 1.0
    rcut: float = 2.8
    onsite: float = 0.0
    mu: float | None = None
    kT: float = 0.1
    pair_potential: PairPotential | None = None
    overlap: np.ndarray | None = None

    def __post_init__(self):
        if not (self.rcut > self.r0 > 0):
            raise ValueError("need rcut > r0 > 0")
        if self.alpha <= 0:
            raise ValueError("need alpha > 0")
        if self.kT <= 0:
            raise ValueError("need kT > 0")
        if self.mu is None:
            object.__setattr__(self, "mu", float(self.onsite))

    @classmethod
    def from_dict(cls, doc: dict) -> "TBModel":
        keys = ("alpha", "r0", "rcut", "onsite", "mu", "kT")
        return cls(**{k: doc[k] for k in keys if k in doc})

    def to_dict(self) -> dict:
        return {
            "alpha": self.alpha,
            "r0": self.r0,
            "rcut": self.rcut,
            "onsite": self.onsite,
            "mu": self.mu,
            "kT": self.kT,
        }


def _cut_parts(model: TBModel, r: np.ndarray):
    """Cutoff factor and its first two radial derivatives, 0 beyond rcut.

    Written in terms of u = rcut - r > 0: c(u) = 1/(1 + exp(1/u)).  Within
    5e-3 of the cutoff exp(2/u) overflows double precision while the true
    factor is below exp(-200); the guard returns zeros there, an absolute
    error under 1e-87.
    """
    u = model.rcut - r
    inside = u > 5e-3
    c = np.zeros_like(r)
    c1 = np.zeros_like(r)
    c2 = np.zeros_like(r)
    ui = u[inside]
    g = np.exp(1.0 / ui)
    den = 1.0 + g
    c[inside] = 1.0 / den
    # d/du [1/(1+e^{1/u})] = e^{1/u} / (u^2 (1+e^{1/u})^2); dr = -du.
    dcdu = g / (ui**2 * den**2)
    d2cdu2 = (
        -g / (ui**4 * den**2)
        - 2.0 * g / (ui**3 * den**2)
        + 2.0 * g**2 / (ui**4 * den**3)
    )
    c1[inside] = -dcdu
    c2[inside] = d2cdu2
    return c, c1, c2


def _morse_parts(model: TBModel, r: np.ndarray):
    a = model.alpha
    e2 = np.exp(-2.0 * a * (r - model.r0))
    e1 = np.exp(-a * (r - model.r0))
    m = e2 - 2.0 * e1
    m1 = -2.0 * a * e2 + 2.0 * a * e1
    m2 = 4.0 * a * a * e2 - 2.0 * a * a * e1
    return m, m1, m2


def _hop_all(model: TBModel, r) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    r = np.asarray(r, dtype=float)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    h = np.zeros_like(r)
    h1 = np.zeros_like(r)
    h2 = np.zeros_like(r)
    m = r < model.rcut
    if m.any():
        rm = r[m]
        mm, m1, m2 = _morse_parts(model, rm)
        c, c1, c2 = _cut_parts(model, rm)
        h[m] = mm * c
        h1[m] = m1 * c + mm * c1
        h2[m] = m2 * c + 2.0 * m1 * c1 + mm * c2
    if scalar:
        return h[0], h1[0], h2[0]
    return h, h1, h2


def hop(model: TBModel, r):
    """Hopping amplitude h(r); exactly 0 for r >= rcut."""
    return _hop_all(model, r)[0]


def hop_d1(model: TBModel, r):
    """dh/dr."""
    return _hop_all(model, r)[1]


def hop_d2(model: TBModel, r):
    """d2h/dr2."""
    return _hop_all(model, r)[2]


def assemble(model: TBModel, config: Configuration) -> np.ndarray:
    """Dense symmetric Hamiltonian: off-diagonal h(|y_l - y_k|), diagonal onsite."""
    r = cdist(config.positions, config.positions)
    np.fill_diagonal(r, model.rcut + 1.0)  # keep the radial formula off the diagonal
    H = hop(model, r)
    np.fill_diagonal(H, model.onsite)
    return H


@dataclass(frozen=True, eq=False)
class HamiltonianDerivative:
    """Sparse symmetric derivative of the Hamiltonian w.r.t. one or two
    position coordinates.

    For a first derivative (site ``m``, coordinate ``i``) the nonzeros live
    on row/column ``m``.  For a mixed second derivative the second pair
    ``(n, j)`` is set as well.  ``rows/cols/vals`` list every stored entry;
    both (r,c) and (c,r) are present for off-diagonal entries.
    """

    n: int
    m: int
    i: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    m2: int | None = None
    j: int | None = None

    def to_dense(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        np.add.at(A, (self.rows, self.cols), self.vals)
        return A

    def matvec(self, x: np.ndarray) -> np.ndarray:
        out = np.zeros(self.n, dtype=np.result_type(self.vals, x))
        np.add.at(out, self.rows, self.vals * x[self.cols])
        return out

    def bilinear(self, x: np.ndarray, y: np.ndarray):
        """x^T D y without densifying."""
        return np.sum(self.vals * x[self.rows] * y[self.cols])

    @property
    def nnz(self) -> int:
        return len(self.vals)


def _neighbors(model: TBModel, config: Configuration, k: int):
    delta = config.positions - config.positions[k]
    r = np.linalg.norm(delta, axis=1)
    mask = (r > 0) & (r < model.rcut)
    return np.nonzero(mask)[0], delta[mask], r[mask]


def assemble_derivative(
    model: TBModel, config: Configuration, m, i: int
) -> HamiltonianDerivative:
    """dH/d[y(m)]_i.  Entries (m,k) and (k,m): h'(r) * (y_m - y_k)_i / r."""
    mi = m if isinstance(m, (int, np.integer)) else config.index(m)
    nbr, delta, r = _neighbors(model, config, mi)
    # delta rows are y_k - y_m; the derivative wants (y_m - y_k)_i / r.
    v = hop_d1(model, r) * (-delta[:, i]) / r
    rows = np.concatenate([np.full(len(nbr), mi), nbr])
    cols = np.concatenate([nbr, np.full(len(nbr), mi)])
    vals = np.concatenate([v, v])
    return HamiltonianDerivative(len(config), mi, i, rows, cols, vals)


def _pair_block(model: TBModel, u: np.ndarray, r: float) -> np.ndarray:
    """d2 h(|u|) / du_i du_j for the vector u between two sites."""
    uhat = u / r
    h1 = hop_d1(model, np.array([r]))[0]
    h2 = hop_d2(model, np.array([r]))[0]
    P = np.outer(uhat, uhat)
    return h2 * P + h1 * (np.eye(len(u)) - P) / r


def assemble_second_derivative(
    model: TBModel, config: Configuration, m, i: int, n, j: int
) -> HamiltonianDerivative:
    """d2H / d[y(m)]_i d[y(n)]_j as a sparse symmetric matrix.

    Entries exist only where the differentiated pair distance involves both
    m and n: the rows/columns of m when m == n, and only the (m, n) entry
    itself when m != n.
    """
    mi = m if isinstance(m, (int, np.integer)) else config.index(m)
    ni = n if isinstance(n, (int, np.integer)) else config.index(n)
    N = len(config)
    rows_l, cols_l, vals_l = [], [], []
    if mi == ni:
        nbr, delta, r = _neighbors(model, config, mi)
        for k, dk, rk in zip(nbr, delta, r):
            B = _pair_block(model, -dk, rk)  # u = y_m - y_k
            rows_l += [mi, k]
            cols_l += [k, mi]
            vals_l += [B[i, j], B[i, j]]
    else:
        u = config.positions[mi] - config.positions[ni]
        r = float(np.linalg.norm(u))
        if 0 < r < model.rcut:
            B = _pair_block(model, u, r)
            val = -B[i, j]
            rows_l += [mi, ni]
            cols_l += [ni, mi]
            vals_l += [val, val]
    return HamiltonianDerivative(
        N,
        mi,
        i,
        np.asarray(rows_l, dtype=int),
        np.asarray(cols_l, dtype=int),
        np.asarray(vals_l, dtype=float),
        m2=ni,
        j=j,
    )


def gershgorin(H: np.ndarray) -> tuple[float, float]:
    """Disc bounds enclosing the whole spectrum of a symmetric matrix."""
    H = np.asarray(H)
    d = np.diag(H)
    radius = np.abs(H).sum(axis=1) - np.abs(d)
    return float((d - radius).min()), float((d + radius).max())


def _pair_terms(model: TBModel, config: Configuration, k: int):
    pot = model.pair_potential
    delta = config.positions - config.positions[k]
    r = np.linalg.norm(delta, axis=1)
    mask = (r > 0) & (r < pot.rcut)
    return delta[mask], r[mask]


def pair_energy_site(model: TBModel, config: Configuration, site) -> float:
    """Half-sum of the pair potential over the site's neighbors (0 if absent)."""
    if model.pair_potential is None:
        return 0.0
    k = site if isinstance(site, (int, np.integer)) else config.index(site)
    _, r = _pair_terms(model, config, k)
    return 0.5 * float(np.sum(model.pair_potential.value(r)))


def pair_energies(model: TBModel, config: Configuration) -> np.ndarray:
    if model.pair_potential is None:
        return np.zeros(len(config))
    return np.array([pair_energy_site(model, config, k) for k in range(len(config))])


def pair_energy_total(model: TBModel, config: Configuration) -> float:
    return float(pair_energies(model, config).sum())


def pair_gradient(model: TBModel, config: Configuration) -> np.ndarray:
    """d E_rep / d y, shape (N, dim)."""
    out = np.zeros_like(config.positions)
    pot = model.pair_potential
    if pot is None:
        return out
    if pot.deriv is None:
        raise ValueError("pair potential has no derivative")
    for k in range(len(config)):
        delta, r = _pair_terms(model, config, k)
        if len(r) == 0:
            continue
        # d/dy_k of sum_m U(|y_k - y_m|): delta rows are y_m - y_k.
        out[k] = -np.sum((pot.deriv(r) / r)[:, None] * delta, axis=0)
    return out


def lowdin_orthogonalize(H: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Symmetric orthogonalization M^{-1/2} H M^{-1/2}."""
    w, V = np.linalg.eigh(M)
    if w.min() <= 1e-10:
        raise ValueError(f"overlap matrix is not SPD (min eigenvalue {w.min():.3e})")
    S = (V / np.sqrt(w)) @ V.T
    out = S @ H @ S
    return 0.5 * (out + out.T)
