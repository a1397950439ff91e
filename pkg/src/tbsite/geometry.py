"""Lattices, finite atomic configurations, displacement fields and stencil norms.

Everything downstream (Hamiltonian assembly, site energies, relaxation) is
built on the types in this module.  All of them are immutable after
construction; the operations are pure functions returning new objects.

Site identifiers are arbitrary hashable labels.  Configurations carved from a
lattice use the integer lattice coordinates ``(n1, n2)`` as identifiers, which
makes vacancy bookkeeping exact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial.distance import pdist

__all__ = [
    "Lattice",
    "Configuration",
    "DisplacementField",
    "StencilNormSpec",
    "TRI_BASIS",
    "triangular_lattice",
    "build_lattice_disk",
    "remove_sites",
    "perturb",
    "apply_isometry",
    "apply_permutation",
    "stencil_norm",
    "lattice_stencil_dirs",
    "config_to_json_dict",
    "config_from_json_dict",
]

# Triangular Bravais basis; columns are the primitive vectors.
TRI_BASIS = np.array([[1.0, 0.5], [0.0, np.sqrt(3.0) / 2.0]])

# Neighbor pairs closer than this are treated as a collision (violation of
# the uniform non-interpenetration requirement).
MIN_SEP_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class Lattice:
    """Bravais lattice ``{scale * basis @ n : n integer vector}``."""

    basis: np.ndarray
    scale: float = 1.0

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        object.__setattr__(self, "basis", _readonly(basis))
        if basis.shape[0] != basis.shape[1]:
            raise ValueError("lattice basis must be square")
        if abs(np.linalg.det(self.scale * basis)) < 1e-14:
            raise ValueError("lattice basis is singular")

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def cell(self) -> np.ndarray:
        """Scaled basis ``scale * basis``."""
        return self.scale * self.basis

    def point(self, n: Sequence[int]) -> np.ndarray:
        return self.cell @ np.asarray(n, dtype=float)


def triangular_lattice(scale: float = 1.0) -> Lattice:
    return Lattice(TRI_BASIS, scale)


class Configuration:
    """A finite set of labelled atomic positions.

    Parameters
    ----------
    ids:
        Hashable, pairwise distinct site labels, one per row of ``positions``.
    positions:
        ``(N, dim)`` array of positions.

    The minimum pairwise separation is computed once at construction and
    cached in ``min_sep`` (``inf`` for fewer than two sites).  Construction
    fails if two sites collide: every configuration handed around the library
    is a proper, non-interpenetrating one.
    """

    __slots__ = ("ids", "positions", "dim", "min_sep", "_index")

    def __init__(self, ids: Sequence, positions: np.ndarray, dim: int | None = None):
        positions = np.atleast_2d(np.asarray(positions, dtype=float))
        ids = tuple(ids)
        if len(ids) != positions.shape[0]:
            raise ValueError(f"{len(ids)} ids for {positions.shape[0]} positions")
        if len(set(ids)) != len(ids):
            raise ValueError("site ids must be distinct")
        self.ids = ids
        self.positions = _readonly(positions)
        self.dim = positions.shape[1] if dim is None else dim
        self.min_sep = _min_separation(positions)
        if self.min_sep <= MIN_SEP_FLOOR:
            raise ValueError(
                f"configuration violates minimum separation: min_sep={self.min_sep:.3e}"
            )
        self._index = {s: k for k, s in enumerate(ids)}

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, site) -> bool:
        return site in self._index

    def index(self, site) -> int:
        """Row index of a site id."""
        try:
            return self._index[site]
        except KeyError:
            raise KeyError(f"unknown site id {site!r}") from None

    def position(self, site) -> np.ndarray:
        return self.positions[self.index(site)]

    def indices(self, sites: Iterable) -> np.ndarray:
        return np.array([self.index(s) for s in sites], dtype=int)

    def __repr__(self) -> str:
        return f"Configuration(N={len(self)}, dim={self.dim}, min_sep={self.min_sep:.6g})"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=a.dtype, copy=True)
    a.flags.writeable = False
    return a


def _min_separation(positions: np.ndarray) -> float:
    if positions.shape[0] < 2:
        return np.inf
    return float(pdist(positions).min())


def build_lattice_disk(lattice: Lattice, radius: float, center=(0.0, 0.0)) -> Configuration:
    """All lattice points within the closed ball of ``radius`` around ``center``.

    Site ids are the integer lattice coordinates, ordered lexicographically,
    so the result does not depend on enumeration order.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    center = np.asarray(center, dtype=float)
    cell = lattice.cell
    # Safe integer search box from the smallest singular value of the cell.
    smin = np.linalg.svd(cell, compute_uv=False).min()
    reach = (radius + np.linalg.norm(center)) / smin
    K = int(np.ceil(reach)) + 1
    ns = np.array(
        [(n1, n2) for n1 in range(-K, K + 1) for n2 in range(-K, K + 1)], dtype=int
    )
    pts = ns @ cell.T
    keep = np.linalg.norm(pts - center, axis=1) <= radius
    if not keep.any():
        raise ValueError("no lattice point inside the requested disk")
    ids = [tuple(int(v) for v in n) for n in ns[keep]]
    order = sorted(range(len(ids)), key=lambda k: ids[k])
    return Configuration([ids[k] for k in order], pts[keep][order])


def remove_sites(config: Configuration, sites: Iterable) -> Configuration:
    """Drop the listed sites; remaining ids and positions are untouched."""
    sites = list(sites)
    drop = set()
    for s in sites:
        if s not in config:
            raise KeyError(f"cannot remove unknown site id {s!r}")
        drop.add(config.index(s))
    keep = [k for k in range(len(config)) if k not in drop]
    return Configuration([config.ids[k] for k in keep], config.positions[keep])


def perturb(config: Configuration, amplitude: float, seed: int) -> Configuration:
    """Shift every coordinate by an independent uniform draw from [0, amplitude].

    Uses a counter-based generator (Philox) keyed on ``seed``: identical
    inputs give bitwise-identical outputs on every platform.
    """
    if amplitude < 0:
        raise ValueError("amplitude must be nonnegative")
    rng = np.random.Generator(np.random.Philox(seed))
    shift = rng.uniform(0.0, amplitude, size=config.positions.shape)
    if amplitude == 0.0:
        shift = np.zeros_like(shift)
    return Configuration(config.ids, config.positions + shift)


def apply_isometry(config: Configuration, rotation: np.ndarray, shift) -> Configuration:
    """Map every position to ``rotation @ p + shift``; ids are preserved."""
    rotation = np.asarray(rotation, dtype=float)
    if not np.allclose(rotation.T @ rotation, np.eye(config.dim), atol=1e-12):
        raise ValueError("rotation matrix is not orthogonal")
    shift = np.asarray(shift, dtype=float)
    return Configuration(config.ids, config.positions @ rotation.T + shift)


def apply_permutation(config: Configuration, perm: Mapping) -> Configuration:
    """Relabel sites: the output site ``l`` carries the position of ``perm(l)``."""
    if set(perm.keys()) != set(config.ids) or set(perm.values()) != set(config.ids):
        raise ValueError("perm must be a bijection on the configuration's ids")
    rows = [config.index(perm[s]) for s in config.ids]
    return Configuration(config.ids, config.positions[rows])


@dataclass(frozen=True, eq=False)
class StencilNormSpec:
    """Which finite-difference stencil weights the displacement seminorm.

    ``exp_gamma`` weights every pair of sites by ``exp(-2*gamma*|rho|)``;
    ``nearest_neighbor`` uses unit weights over an explicit list of stencil
    vectors (closed under negation).
    """

    kind: str
    gamma: float | None = None
    nn_dirs: np.ndarray | None = None

    def __post_init__(self):
        if self.kind == "exp_gamma":
            if self.gamma is None or self.gamma <= 0:
                raise ValueError("exp_gamma spec needs gamma > 0")
        elif self.kind == "nearest_neighbor":
            dirs = np.atleast_2d(np.asarray(self.nn_dirs, dtype=float))
            if dirs.size == 0:
                raise ValueError("nearest_neighbor spec needs stencil vectors")
            for d in dirs:
                if not any(np.allclose(d, -e, atol=1e-12) for e in dirs):
                    raise ValueError("stencil directions must be closed under negation")
            object.__setattr__(self, "nn_dirs", _readonly(dirs))
        else:
            raise ValueError(f"unknown stencil kind {self.kind!r}")

    @classmethod
    def exp_decay(cls, gamma: float) -> "StencilNormSpec":
        return cls("exp_gamma", gamma=gamma)

    @classmethod
    def nearest(cls, dirs) -> "StencilNormSpec":
        return cls("nearest_neighbor", nn_dirs=dirs)


def lattice_stencil_dirs(lattice: Lattice) -> np.ndarray:
    """The four stencil vectors ``+-cell@e1, +-cell@e2`` of a 2D lattice."""
    c = lattice.cell
    return np.array([c[:, 0], -c[:, 0], c[:, 1], -c[:, 1]])


class DisplacementField:
    """Per-site displacement vectors over a reference configuration.

    ``free_ids`` marks the sites allowed to move; the field is exactly zero
    elsewhere (enforced at construction).  ``free_ids=None`` leaves every
    site free, which is the right mode for difference fields.
    """

    __slots__ = ("reference", "values", "free_ids")

    def __init__(
        self,
        reference: Configuration,
        values: np.ndarray | None = None,
        free_ids: Iterable | None = None,
    ):
        self.reference = reference
        vals = (
            np.zeros((len(reference), reference.dim))
            if values is None
            else np.array(values, dtype=float, copy=True)
        )
        if vals.shape != (len(reference), reference.dim):
            raise ValueError(f"values must have shape {(len(reference), reference.dim)}")
        if free_ids is None:
            self.free_ids = None
        else:
            self.free_ids = frozenset(free_ids)
            clamped = [k for k, s in enumerate(reference.ids) if s not in self.free_ids]
            vals[clamped] = 0.0
        self.values = _readonly(vals)

    def get(self, site) -> np.ndarray:
        return self.values[self.reference.index(site)]

    def deformed_positions(self) -> np.ndarray:
        return self.reference.positions + self.values

    def with_values(self, values: np.ndarray) -> "DisplacementField":
        return DisplacementField(self.reference, values, self.free_ids)

    def free_indices(self) -> np.ndarray:
        if self.free_ids is None:
            return np.arange(len(self.reference))
        return self.reference.indices(sorted(self.free_ids))


# Pairs whose exponential weight falls below this are dropped from the
# exp_gamma sum; below double precision relevance.
EXP_WEIGHT_FLOOR = 1e-14


def _position_table(config: Configuration) -> dict:
    # Keys rounded to 1e-9: far below any admissible separation, far above
    # float noise for desk-scale coordinates.
    return {
        tuple(np.round(p, 9)): k for k, p in enumerate(config.positions)
    }


def stencil_norm(u: DisplacementField, spec: StencilNormSpec) -> float:
    """Seminorm ``sqrt(sum_l sum_rho w(rho) |u(l+rho) - u(l)|^2)``.

    Stencil legs pointing at a missing site (a vacancy) simply do not occur
    in the sum.
    """
    config = u.reference
    vals = u.values
    if spec.kind == "nearest_neighbor":
        table = _position_table(config)
        acc = 0.0
        for k in range(len(config)):
            base = config.positions[k]
            for rho in spec.nn_dirs:
                j = table.get(tuple(np.round(base + rho, 9)))
                if j is None:
                    continue
                d = vals[j] - vals[k]
                acc += float(d @ d)
        return float(np.sqrt(acc))

    gamma = spec.gamma
    rmax = -np.log(EXP_WEIGHT_FLOOR) / (2.0 * gamma)
    pos = config.positions
    acc = 0.0
    for k in range(len(config)):
        delta = pos - pos[k]
        r = np.linalg.norm(delta, axis=1)
        mask = (r > 0) & (r <= rmax)
        if not mask.any():
            continue
        w = np.exp(-2.0 * gamma * r[mask])
        dv = vals[mask] - vals[k]
        acc += float(w @ np.einsum("ij,ij->i", dv, dv))
    return float(np.sqrt(acc))


def config_to_json_dict(config: Configuration) -> dict:
    """JSON form: {"dim": d, "sites": [{"id": ..., "pos": [...]}, ...], "min_sep": m}."""
    sites = []
    for s, p in zip(config.ids, config.positions):
        sid = list(s) if isinstance(s, tuple) else s
        sites.append({"id": sid, "pos": [float(v) for v in p]})
    return {"dim": config.dim, "sites": sites, "min_sep": float(config.min_sep)}


def config_from_json_dict(doc: dict) -> Configuration:
    ids = []
    pos = []
    for entry in doc["sites"]:
        sid = entry["id"]
        ids.append(tuple(sid) if isinstance(sid, list) else sid)
        pos.append(entry["pos"])
    return Configuration(ids, np.asarray(pos, dtype=float), dim=doc.get("dim"))
