"""Point defects in a crystal: finite realizations, the truncated
energy-difference functional with a clamped buffer annulus, geometry
relaxation, and bulk-limit site-energy sequences.

The truncation scheme fixes a free radius R and a buffer width Rbuf: atoms
inside B_R may move, atoms in the annulus between R and R+Rbuf are clamped
to their reference positions, and nothing beyond R+Rbuf exists in the
finite computation.  The quantity minimized is

    energy_diff(u) = E(x + u) - E(x)

evaluated on the realized cluster, where x are the reference positions.
Because site energies are exponentially localized, the clamped buffer
shields the free region from the artificial cluster boundary; the free
solution converges to the full-lattice one at an algebraic rate in R as
long as Rbuf grows like log(R).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._stats import linear_fit
from .geometry import (
    Configuration,
    DisplacementField,
    Lattice,
    StencilNormSpec,
    build_lattice_disk,
    lattice_stencil_dirs,
    remove_sites,
    stencil_norm,
)
from .model import TBModel, assemble, pair_energy_total, pair_gradient
from .spectral import OccupationFns, band_energy, eig, site_energies, total_gradient_hf

__all__ = [
    "DefectReference",
    "TruncatedProblem",
    "RelaxResult",
    "StudyRow",
    "StudyResult",
    "realize",
    "truncate",
    "truncated_energy",
    "truncated_gradient",
    "relax",
    "tdlimit_site_energy",
    "convergence_study",
]


@dataclass(frozen=True, eq=False)
class DefectReference:
    """A lattice that is perfect outside a finite core of removed sites."""

    lattice: Lattice
    removed: tuple = ()
    R_def: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "removed", tuple(tuple(s) for s in self.removed))
        for s in self.removed:
            if np.linalg.norm(self.lattice.point(s)) > self.R_def:
                raise ValueError(f"removed site {s} lies outside the defect core radius")


def realize(ref: DefectReference, radius: float) -> Configuration:
    """Finite cluster: lattice disk of ``radius`` minus the removed sites."""
    disk = build_lattice_disk(ref.lattice, radius)
    present = [s for s in ref.removed if s in disk]
    return remove_sites(disk, present) if present else disk


@dataclass(frozen=True, eq=False)
class TruncatedProblem:
    """Free region B_R plus clamped buffer annulus of width Rbuf."""

    ref: DefectReference
    R: float
    Rbuf: float
    config: Configuration
    free_ids: tuple
    clamped_ids: tuple

    @property
    def n_free(self) -> int:
        return len(self.free_ids)

    def zero_field(self) -> DisplacementField:
        return DisplacementField(self.config, free_ids=self.free_ids)

    def field_from_free(self, free_values: np.ndarray) -> DisplacementField:
        vals = np.zeros_like(self.config.positions)
        vals[self.config.indices(self.free_ids)] = free_values.reshape(
            self.n_free, self.config.dim
        )
        return DisplacementField(self.config, vals, free_ids=self.free_ids)


def truncate(ref: DefectReference, R: float, Rbuf: float) -> TruncatedProblem:
    if Rbuf <= 0:
        raise ValueError("buffer width must be positive")
    config = realize(ref, R + Rbuf)
    dist = np.linalg.norm(config.positions, axis=1)
    free = tuple(s for s, d in zip(config.ids, dist) if d <= R)
    clamped = tuple(s for s, d in zip(config.ids, dist) if d > R)
    return TruncatedProblem(ref, R, Rbuf, config, free, clamped)


class _EnergyDifference:
    """Band (+ pair) energy of the deformed cluster minus the undeformed one.

    The undeformed part is diagonalized once; every evaluation afterwards
    costs one assembly and one eigendecomposition of the deformed cluster.
    """

    def __init__(self, prob: TruncatedProblem, model: TBModel):
        self.prob = prob
        self.model = model
        self.occ = OccupationFns.from_model(model)
        self.free_rows = prob.config.indices(prob.free_ids)
        cfg0 = prob.config
        self.base = band_energy(eig(assemble(model, cfg0)), self.occ) + pair_energy_total(
            model, cfg0
        )

    def _deformed(self, free_flat: np.ndarray) -> Configuration:
        pos = self.prob.config.positions.copy()
        pos[self.free_rows] += free_flat.reshape(len(self.free_rows), -1)
        return Configuration(self.prob.config.ids, pos)

    def energy(self, free_flat: np.ndarray) -> float:
        cfg = self._deformed(free_flat)
        spec = eig(assemble(self.model, cfg))
        return (
            band_energy(spec, self.occ) + pair_energy_total(self.model, cfg) - self.base
        )

    def energy_and_gradient(self, free_flat: np.ndarray):
        cfg = self._deformed(free_flat)
        spec = eig(assemble(self.model, cfg))
        e = band_energy(spec, self.occ) + pair_energy_total(self.model, cfg) - self.base
        g = total_gradient_hf(self.model, cfg, spec, self.occ)
        if self.model.pair_potential is not None:
            g = g + pair_gradient(self.model, cfg)
        return e, g[self.free_rows].ravel()


def _check_clamped(prob: TruncatedProblem, u: DisplacementField):
    clamped_rows = prob.config.indices(prob.clamped_ids)
    if len(clamped_rows) and np.any(u.values[clamped_rows] != 0.0):
        raise ValueError("displacement must vanish on clamped sites")


def truncated_energy(prob: TruncatedProblem, model: TBModel, u: DisplacementField) -> float:
    """energy(x + u) - energy(x) on the realized cluster."""
    _check_clamped(prob, u)
    ev = _EnergyDifference(prob, model)
    free_rows = prob.config.indices(prob.free_ids)
    return ev.energy(u.values[free_rows].ravel())


def truncated_gradient(
    prob: TruncatedProblem, model: TBModel, u: DisplacementField
) -> np.ndarray:
    """Gradient of the truncated energy difference on the free sites,
    shape (n_free, dim), rows ordered like ``prob.free_ids``."""
    _check_clamped(prob, u)
    ev = _EnergyDifference(prob, model)
    free_rows = prob.config.indices(prob.free_ids)
    _, g = ev.energy_and_gradient(u.values[free_rows].ravel())
    return g.reshape(prob.n_free, prob.config.dim)


@dataclass(frozen=True, eq=False)
class RelaxResult:
    u: DisplacementField
    energy: float
    iterations: int
    converged: bool
    grad_inf: float


def _lbfgs(fun_grad, fun, x0, gtol, max_iter, memory=10, max_step=0.1):
    """Limited-memory quasi-Newton descent with Armijo backtracking.

    Each trial step moves no coordinate by more than ``max_step``: the band
    energy has no hard repulsive core, so an uncapped step can tunnel out
    of the physical local basin into a collapsed cluster.  ``fun`` may
    return +inf (or raise ValueError) for inadmissible points; the line
    search then simply shrinks the step.  Returns the best iterate seen:
        (x, f, g, iterations, converged)
    """
    x = np.asarray(x0, dtype=float).copy()
    f, g = fun_grad(x)
    best = (x.copy(), f, g.copy())
    s_list, y_list = [], []
    c1 = 1e-4
    for it in range(max_iter):
        ginf = np.abs(g).max() if g.size else 0.0
        if ginf <= gtol:
            return x, f, g, it, True
        # Two-loop recursion for the quasi-Newton direction.
        q = g.copy()
        alphas = []
        for s, y in reversed(list(zip(s_list, y_list))):
            a = (s @ q) / (y @ s)
            alphas.append(a)
            q -= a * y
        if s_list:
            s, y = s_list[-1], y_list[-1]
            q *= (s @ y) / (y @ y)
        for (s, y), a in zip(zip(s_list, y_list), reversed(alphas)):
            b = (y @ q) / (y @ s)
            q += (a - b) * s
        p = -q
        slope = p @ g
        if not np.isfinite(slope) or slope >= 0:
            p = -g
            slope = -(g @ g)
        step = min(1.0, max_step / max(np.abs(p).max(), 1e-12))
        accepted = False
        for _ in range(50):
            try:
                f_new = fun(x + step * p)
            except ValueError:
                f_new = np.inf
            if np.isfinite(f_new) and f_new <= f + c1 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break  # no admissible decrease along this direction
        x_new = x + step * p
        f_new, g_new = fun_grad(x_new)
        s_vec = x_new - x
        y_vec = g_new - g
        sy = s_vec @ y_vec
        if sy > 1e-12 * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
            s_list.append(s_vec)
            y_list.append(y_vec)
            if len(s_list) > memory:
                s_list.pop(0)
                y_list.pop(0)
        x, f, g = x_new, f_new, g_new
        if f < best[1]:
            best = (x.copy(), f, g.copy())
    x, f, g = best
    return x, f, g, max_iter, bool(np.abs(g).max() <= gtol) if g.size else True


def relax(
    prob: TruncatedProblem,
    model: TBModel,
    gtol: float = 1e-6,
    max_iter: int = 1000,
    u0: DisplacementField | None = None,
) -> RelaxResult:
    """Minimize the truncated energy difference over the free displacements.

    Starts from zero displacement (or ``u0``).  Steps that would collide
    atoms are rejected by the line search, never fatal.  If the gradient
    tolerance is not reached within ``max_iter`` the best iterate is
    returned with ``converged=False``.
    """
    ev = _EnergyDifference(prob, model)
    if prob.n_free == 0:
        return RelaxResult(prob.zero_field(), 0.0, 0, True, 0.0)
    if u0 is None:
        x0 = np.zeros(prob.n_free * prob.config.dim)
    else:
        free_rows = prob.config.indices(prob.free_ids)
        x0 = np.array(u0.values)[free_rows].ravel()
    x, f, g, iters, converged = _lbfgs(
        ev.energy_and_gradient, ev.energy, x0, gtol, max_iter
    )
    return RelaxResult(
        u=prob.field_from_free(x),
        energy=float(f),
        iterations=iters,
        converged=converged,
        grad_inf=float(np.abs(g).max()),
    )


def tdlimit_site_energy(ref: DefectReference, model: TBModel, site, radii):
    """Site energy of ``site`` in growing ball realizations.

    Returns a list of (R, E_site).  Successive differences shrink
    exponentially as the surrounding material stops mattering.
    """
    radii = list(radii)
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    occ = OccupationFns.from_model(model)
    out = []
    for R in radii:
        cfg = realize(ref, R)
        if site not in cfg:
            raise KeyError(f"site {site!r} not inside radius {R}")
        spec = eig(assemble(model, cfg))
        e_band = site_energies(spec, occ)[cfg.index(site)]
        out.append((float(R), float(e_band)))
    return out


@dataclass(frozen=True, eq=False)
class StudyRow:
    R: float
    Rbuf: float
    geom_err: float
    energy_err: float
    converged: bool
    iterations: int
    energy: float


@dataclass(frozen=True, eq=False)
class StudyResult:
    rows: tuple
    reference: RelaxResult
    geom_slope: float | None
    geom_r2: float | None
    energy_slope: float | None
    energy_r2: float | None


def _zero_extended(result: RelaxResult, target: Configuration) -> np.ndarray:
    vals = np.zeros_like(target.positions)
    src = result.u.reference
    for k, s in enumerate(src.ids):
        if s in target:
            vals[target.index(s)] = result.u.values[k]
    return vals


def convergence_study(
    ref: DefectReference,
    model: TBModel,
    schedule,
    reference: tuple[float, float],
    norm: StencilNormSpec | None = None,
    gtol: float = 1e-6,
    max_iter: int = 1000,
) -> StudyResult:
    """Relax every (R, Rbuf) in ``schedule`` plus a reference problem, and
    measure how fast the truncated solutions approach the reference.

    geom_err is the nearest-neighbor stencil seminorm of (u_R - u_ref) over
    the reference realization with u_R extended by zero; energy_err is the
    difference of relaxed functional values.  Log-log slopes over the
    converged rows are fitted when at least two usable rows exist.
    """
    schedule = sorted((float(R), float(Rb)) for R, Rb in schedule)
    if not schedule:
        raise ValueError("empty study schedule")
    R_ref, Rbuf_ref = reference
    if R_ref <= max(R for R, _ in schedule):
        raise ValueError("reference radius must exceed every schedule radius")
    if norm is None:
        norm = StencilNormSpec.nearest(lattice_stencil_dirs(ref.lattice))

    results = []
    for R, Rbuf in schedule:
        prob = truncate(ref, R, Rbuf)
        results.append((R, Rbuf, prob, relax(prob, model, gtol=gtol, max_iter=max_iter)))

    prob_ref = truncate(ref, R_ref, Rbuf_ref)
    # Warm start from the largest schedule solution, extended by zero.
    last = results[-1][3]
    warm = DisplacementField(
        prob_ref.config,
        _zero_extended(last, prob_ref.config),
        free_ids=prob_ref.free_ids,
    )
    res_ref = relax(prob_ref, model, gtol=gtol, max_iter=max_iter, u0=warm)

    ref_cfg = prob_ref.config
    u_ref = res_ref.u.values
    rows = []
    for R, Rbuf, prob, res in results:
        diff = _zero_extended(res, ref_cfg) - u_ref
        geom = stencil_norm(DisplacementField(ref_cfg, diff), norm)
        rows.append(
            StudyRow(
                R=R,
                Rbuf=Rbuf,
                geom_err=float(geom),
                energy_err=float(abs(res_ref.energy - res.energy)),
                converged=res.converged,
                iterations=res.iterations,
                energy=res.energy,
            )
        )

    usable = [r for r in rows if r.converged and r.geom_err > 0 and r.energy_err > 0]
    gs = g2 = es = e2 = None
    if len(usable) >= 2:
        lr = np.log([r.R for r in usable])
        gs, _, g2 = linear_fit(lr, np.log([r.geom_err for r in usable]))
        es, _, e2 = linear_fit(lr, np.log([r.energy_err for r in usable]))
    return StudyResult(
        rows=tuple(rows),
        reference=res_ref,
        geom_slope=gs,
        geom_r2=g2,
        energy_slope=es,
        energy_r2=e2,
    )
