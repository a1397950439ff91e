"""Resolvent route: quadrature contours around the spectrum, cached complex
factorizations, and site energies / gradients / Hessians evaluated as
contour integrals of resolvent products.

The contour is an ellipse around the spectral interval, kept clear of both
the eigenvalues and the occupation function's pole ladder on the line
Re z = mu (poles at mu +- i*pi*(2k+1)*kT).  Quadrature is the trapezoidal
rule in the ellipse parameter on a midpoint grid, so the nodes come in
conjugate pairs and none lies on the real axis.  For a real symmetric
Hamiltonian the integrand at conjugate nodes is conjugate, so only the
upper-half nodes are factorized and every result is assembled as twice the
real part of the upper-half sum; imaginary parts cancel identically.

All site arguments in this module are row indices into the Hamiltonian
(``Configuration.index`` maps ids to rows).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist

from .geometry import Configuration
from .model import TBModel, assemble_second_derivative, hop_d1
from .spectral import OccupationFns

__all__ = [
    "Contour",
    "ResolventCache",
    "build_contour",
    "site_energy_contour",
    "site_energies_contour",
    "site_gradient_contour",
    "site_gradients_all",
    "site_hessian_contour",
    "site_hessians_batch",
    "matrix_function_contour",
    "resolvent_decay_profile",
]

DEFAULT_N_NODES = 64


@dataclass(frozen=True, eq=False)
class Contour:
    """Closed quadrature contour enclosing a spectral interval.

    ``weights`` fold the node derivative, the parameter step and the Cauchy
    prefactor together: sum_k weights[k] * g(nodes[k]) approximates
    (1/2*pi*i) * contour integral of g.  ``margin`` is the realized minimum
    distance from the curve to the interval and to the occupation poles.
    """

    nodes: np.ndarray
    weights: np.ndarray
    margin: float
    n_nodes: int
    center: float
    semi_major: float
    semi_minor: float
    interval: tuple[float, float]
    mu: float
    kT: float

    @property
    def upper(self) -> int:
        """Count of nodes in the upper half plane (the factorized ones)."""
        return self.n_nodes // 2


def _ellipse_geometry(lo: float, hi: float, mu: float, kT: float, dmin: float):
    """Semi-axes such that the curve keeps distance >= dmin from the
    interval [lo, hi] and from the poles at mu +- i*pi*(2k+1)*kT."""
    halfwidth = 0.5 * (hi - lo)
    a_floor = halfwidth + dmin
    b_cap = 0.5 * np.pi * kT  # half the first pole height
    if a_floor <= b_cap:
        return a_floor, a_floor  # circle
    b = b_cap
    # Off-axis closest approach to the interval endpoint is
    # b*sqrt(1 - x0^2/(a^2-b^2)); solve for the a that makes it dmin.
    a_need = np.sqrt(b * b + halfwidth**2 * b * b / (b * b - dmin * dmin))
    return max(a_floor, a_need), b


def _curve_points(center, a, b, m=4096):
    th = np.linspace(0.0, 2.0 * np.pi, m, endpoint=False)
    return center + a * np.cos(th) + 1j * b * np.sin(th)


def _realized_margin(center, a, b, lo, hi, mu, kT) -> float:
    pts = _curve_points(center, a, b)
    # Distance to the interval as a subset of the real axis.
    x = np.clip(pts.real, lo, hi)
    d_spec = np.abs(pts - x).min()
    # Distance to every pole row that can come close.
    d_pole = np.inf
    k = 0
    while True:
        h = np.pi * (2 * k + 1) * kT
        d_pole = min(d_pole, np.abs(pts - (mu + 1j * h)).min())
        if h > b + d_pole:
            break
        k += 1
    return float(min(d_spec, d_pole))


def build_contour(
    spec_interval,
    occ: OccupationFns,
    margin_req: float | None = None,
    n_nodes: int = DEFAULT_N_NODES,
) -> Contour:
    """Elliptic contour with trapezoidal nodes around ``spec_interval``.

    ``margin_req`` defaults to ``min(0.01, pi*kT/4)``.  Fails if the pole
    ladder sits too low for the requested margin (raise kT or lower the
    margin).  ``n_nodes`` must be even and at least 8; accuracy improves
    geometrically with the node count as long as the ellipse aspect ratio
    is moderate.
    """
    lo, hi = float(spec_interval[0]), float(spec_interval[1])
    if hi < lo:
        raise ValueError("spectral interval is reversed")
    mu, kT = occ.mu, occ.kT
    dmin = min(0.01, np.pi * kT / 4.0) if margin_req is None else float(margin_req)
    if dmin <= 0:
        raise ValueError("margin must be positive")
    if np.pi * kT <= 2.0 * dmin:
        raise ValueError(
            f"no contour fits: pole spacing pi*kT={np.pi*kT:.4g} must exceed "
            f"2*margin={2*dmin:.4g}; raise kT or request a smaller margin"
        )
    if n_nodes < 8 or n_nodes % 2:
        raise ValueError("n_nodes must be even and >= 8")
    center = 0.5 * (lo + hi)
    a, b = _ellipse_geometry(lo, hi, mu, kT, dmin)
    theta = 2.0 * np.pi * (np.arange(n_nodes) + 0.5) / n_nodes
    nodes = center + a * np.cos(theta) + 1j * b * np.sin(theta)
    dz = -a * np.sin(theta) + 1j * b * np.cos(theta)
    weights = dz * (2.0 * np.pi / n_nodes) / (2.0j * np.pi)
    margin = _realized_margin(center, a, b, lo, hi, mu, kT)
    return Contour(
        nodes=nodes,
        weights=weights,
        margin=margin,
        n_nodes=n_nodes,
        center=center,
        semi_major=a,
        semi_minor=b,
        interval=(lo, hi),
        mu=mu,
        kT=kT,
    )


class ResolventCache:
    """LU factorizations of (H - z_k I) at the upper-half contour nodes.

    Lower-half queries are answered by conjugation (H is real).  Full
    inverses are materialized lazily per node and kept for reuse; they pay
    off whenever many (l, m) queries hit the same node.
    """

    def __init__(self, H: np.ndarray, contour: Contour):
        H = np.asarray(H, dtype=float)
        if H.shape[0] != H.shape[1]:
            raise ValueError("H must be square")
        self.n = H.shape[0]
        self.contour = contour
        eye = np.eye(self.n)
        self._lu = []
        for k in range(contour.upper):
            z = contour.nodes[k]
            try:
                self._lu.append(sla.lu_factor(H - z * eye))
            except sla.LinAlgError as exc:
                raise RuntimeError(
                    f"factorization failed at node {k} (z={z:.6g}); "
                    "the contour passes too close to the spectrum"
                ) from exc
        self._inv: dict[int, np.ndarray] = {}

    def _upper_index(self, k: int) -> tuple[int, bool]:
        if 0 <= k < self.contour.upper:
            return k, False
        if self.contour.upper <= k < self.contour.n_nodes:
            return self.contour.n_nodes - 1 - k, True
        raise IndexError(f"node index {k} out of range")

    def solve(self, k: int, b: np.ndarray) -> np.ndarray:
        """(H - z_k I)^{-1} b for any node index."""
        ku, conj = self._upper_index(k)
        if conj:
            return np.conj(sla.lu_solve(self._lu[ku], np.conj(b)))
        return sla.lu_solve(self._lu[ku], np.asarray(b, dtype=complex))

    def column(self, k: int, l: int) -> np.ndarray:
        """Resolvent column (H - z_k I)^{-1} e_l."""
        ku, conj = self._upper_index(k)
        inv = self._inv.get(ku)
        if inv is not None:
            col = inv[:, l]
            return np.conj(col) if conj else col
        e = np.zeros(self.n)
        e[l] = 1.0
        return self.solve(k, e)

    def inverse(self, k: int) -> np.ndarray:
        """Full resolvent matrix at node k (memoized per upper node)."""
        ku, conj = self._upper_index(k)
        if ku not in self._inv:
            self._inv[ku] = sla.lu_solve(self._lu[ku], np.eye(self.n, dtype=complex))
        return np.conj(self._inv[ku]) if conj else self._inv[ku]


def _upper_terms(contour: Contour, occ: OccupationFns):
    z = contour.nodes[: contour.upper]
    w = contour.weights[: contour.upper]
    return z, w, occ.fe(z)


def site_energy_contour(
    cache: ResolventCache, contour: Contour, occ: OccupationFns, l: int
) -> float:
    """E_l = -(1/2*pi*i) * integral of fe(z) [R_z]_ll."""
    _, w, fe = _upper_terms(contour, occ)
    acc = 0.0 + 0.0j
    for k in range(contour.upper):
        acc += w[k] * fe[k] * cache.column(k, l)[l]
    return float(-2.0 * acc.real)


def site_energies_contour(
    cache: ResolventCache, contour: Contour, occ: OccupationFns
) -> np.ndarray:
    """All site energies at once (one multi-RHS solve per node)."""
    _, w, fe = _upper_terms(contour, occ)
    acc = np.zeros(cache.n, dtype=complex)
    eye = np.eye(cache.n)
    for k in range(contour.upper):
        diag = np.diagonal(cache.solve(k, eye))
        acc += w[k] * fe[k] * diag
    return -2.0 * acc.real


def matrix_function_contour(
    cache: ResolventCache, contour: Contour, occ: OccupationFns
) -> np.ndarray:
    """Dense fe(H) by quadrature; validation against the spectral route."""
    _, w, fe = _upper_terms(contour, occ)
    acc = np.zeros((cache.n, cache.n), dtype=complex)
    for k in range(contour.upper):
        acc += w[k] * fe[k] * cache.inverse(k)
    return -2.0 * acc.real


def _interacting_pairs(model: TBModel, config: Configuration):
    r = cdist(config.positions, config.positions)
    p, q = np.nonzero((r > 0) & (r < model.rcut))
    return p, q, r[p, q]


def site_gradient_contour(
    cache: ResolventCache,
    contour: Contour,
    occ: OccupationFns,
    model: TBModel,
    config: Configuration,
    l: int,
    m: int,
) -> np.ndarray:
    """dE_l/dy(m): quadrature of fe(z) [R_z (dH/dy(m)) R_z]_ll, one
    component per coordinate.  Uses the transpose symmetry of the complex
    resolvent: the ll entry is x^T (dH) x with x = R_z e_l."""
    grads = site_gradients_all(cache, contour, occ, model, config, l, sites=[m])
    return grads[0]


def site_gradients_all(
    cache: ResolventCache,
    contour: Contour,
    occ: OccupationFns,
    model: TBModel,
    config: Configuration,
    l: int,
    sites=None,
) -> np.ndarray:
    """dE_l/dy(m) for every requested site m (default: all), shape (M, dim).

    Per node this costs one resolvent column plus one sweep over the
    interacting pairs, so the full gradient field of one site is barely
    more expensive than a single site-site derivative.
    """
    N, dim = len(config), config.dim
    p, q, rv = _interacting_pairs(model, config)
    coef = hop_d1(model, rv) / rv
    pos = config.positions
    _, w, fe = _upper_terms(contour, occ)
    acc = np.zeros((N, dim), dtype=complex)
    for k in range(contour.upper):
        x = cache.column(k, l)
        xpxq = x[p] * x[q]
        for i in range(dim):
            contrib = 2.0 * coef * (pos[p, i] - pos[q, i]) * xpxq
            acc[:, i] += (w[k] * fe[k]) * (
                np.bincount(p, weights=contrib.real, minlength=N)
                + 1j * np.bincount(p, weights=contrib.imag, minlength=N)
            )
    grads = 2.0 * acc.real
    if sites is None:
        return grads
    return grads[np.asarray(sites, dtype=int)]


def _first_derivative_geometry(model, config, m):
    """Support and pair values of dH/dy(m): indices {m} + neighbors and the
    per-neighbor entries v[k, i] = h'(r) (y_m - y_k)_i / r."""
    pos = config.positions
    delta = pos - pos[m]
    r = np.linalg.norm(delta, axis=1)
    mask = (r > 0) & (r < model.rcut)
    nbr = np.nonzero(mask)[0]
    sup = np.concatenate(([m], nbr))
    if len(nbr):
        v = hop_d1(model, r[nbr])[:, None] * (-delta[nbr]) / r[nbr][:, None]
    else:
        v = np.zeros((0, config.dim))
    return sup, nbr, v


def _apply_first_derivative(geom, x):
    """H_{,m,i} @ x for all i, on the support returned by
    ``_first_derivative_geometry``."""
    sup, nbr, v = geom
    out = np.zeros((len(sup), v.shape[1]), dtype=complex)
    if len(nbr):
        out[0] = v.T @ x[nbr]  # row m of the derivative times x
        out[1:] = v * x[sup[0]]
    return out


def site_hessian_contour(
    cache: ResolventCache,
    contour: Contour,
    occ: OccupationFns,
    model: TBModel,
    config: Configuration,
    l: int,
    m: int,
    n: int,
) -> np.ndarray:
    """d2 E_l / dy(m) dy(n) as a (dim, dim) block.

    Quadrature of fe(z) [R Hmn R - R Hm R Hn R - R Hn R Hm R]_ll.  With a
    transpose-symmetric resolvent the two product terms are equal, so the
    integrand reduces to T1 - 2*T2 with

        T1 = x^T Hmn x,   T2_ij = (Hm_i x)^T R (Hn_j x),   x = R e_l.

    The exact (m,i) <-> (n,j) swap symmetry survives quadrature.
    """
    dim = config.dim
    D2 = [
        [assemble_second_derivative(model, config, m, i, n, j) for j in range(dim)]
        for i in range(dim)
    ]
    geom_m = _first_derivative_geometry(model, config, m)
    geom_n = _first_derivative_geometry(model, config, n)
    sup_m = geom_m[0]
    _, w, fe = _upper_terms(contour, occ)
    acc = np.zeros((dim, dim), dtype=complex)
    for k in range(contour.upper):
        x = cache.column(k, l)
        vm = _apply_first_derivative(geom_m, x)
        vn = _apply_first_derivative(geom_n, x)
        # Solve once per (n, j); T2 needs R applied to the n-side vectors.
        rhs = np.zeros((cache.n, dim), dtype=complex)
        rhs[geom_n[0]] = vn
        Rvn = cache.solve(k, rhs)
        t = np.empty((dim, dim), dtype=complex)
        for i in range(dim):
            for j in range(dim):
                t1 = D2[i][j].bilinear(x, x)
                t2 = vm[:, i] @ Rvn[sup_m, j]
                t[i, j] = t1 - 2.0 * t2
        acc += (w[k] * fe[k]) * t
    return 2.0 * acc.real


def site_hessians_batch(
    cache: ResolventCache,
    contour: Contour,
    occ: OccupationFns,
    model: TBModel,
    config: Configuration,
    l: int,
    pairs,
) -> np.ndarray:
    """Hessian blocks dE_l/dy(m)dy(n) for many (m, n) pairs, shape (P, dim, dim).

    Materializes the full resolvent per node once, after which each pair
    costs only small gathered submatrix products; intended for the locality
    scans where hundreds of pairs share one cache.
    """
    dim = config.dim
    pairs = [(int(m), int(n)) for m, n in pairs]
    _, w, fe = _upper_terms(contour, occ)
    acc = np.zeros((len(pairs), dim, dim), dtype=complex)
    d2 = {
        (m, n): [
            [assemble_second_derivative(model, config, m, i, n, j) for j in range(dim)]
            for i in range(dim)
        ]
        for m, n in set(pairs)
    }
    sites = sorted({s for mn in pairs for s in mn})
    geom = {s: _first_derivative_geometry(model, config, s) for s in sites}
    for k in range(contour.upper):
        R = cache.inverse(k)
        x = R[:, l]
        vx = {s: _apply_first_derivative(geom[s], x) for s in sites}
        for pidx, (m, n) in enumerate(pairs):
            sup_m, sup_n = geom[m][0], geom[n][0]
            Rsub = R[np.ix_(sup_m, sup_n)]
            t2 = vx[m].T @ Rsub @ vx[n]  # (dim, dim): T2_ij
            t1 = np.array(
                [
                    [d2[(m, n)][i][j].bilinear(x, x) for j in range(dim)]
                    for i in range(dim)
                ]
            )
            acc[pidx] += (w[k] * fe[k]) * (t1 - 2.0 * t2)
    return 2.0 * acc.real


def resolvent_decay_profile(
    cache: ResolventCache, config: Configuration, node: int | None = None
):
    """Off-diagonal resolvent magnitudes against pair distance at one node.

    Default node: the factorized node of maximal imaginary part.  Returns
    (distances, magnitudes) over all unordered site pairs.
    """
    if node is None:
        node = int(np.argmax(cache.contour.nodes[: cache.contour.upper].imag))
    R = cache.inverse(node)
    iu, ju = np.triu_indices(len(config), k=1)
    d = np.linalg.norm(config.positions[iu] - config.positions[ju], axis=1)
    return d, np.abs(R[iu, ju])
