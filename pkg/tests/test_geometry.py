"""Geometry layer: disks, vacancies, perturbations, isometries, stencils."""

import json

import numpy as np
import pytest

from tbsite.geometry import (
    Configuration,
    DisplacementField,
    StencilNormSpec,
    apply_isometry,
    apply_permutation,
    build_lattice_disk,
    config_from_json_dict,
    config_to_json_dict,
    lattice_stencil_dirs,
    perturb,
    remove_sites,
    stencil_norm,
    triangular_lattice,
)

TRI = triangular_lattice(1.0)


def brute_force_disk_count(lattice, R, center=(0.0, 0.0)):
    """Independent enumeration over a generous integer box."""
    cell = lattice.cell
    center = np.asarray(center, float)
    count = 0
    box = int(np.ceil(2 * R)) + 2
    for n1 in range(-box, box + 1):
        for n2 in range(-box, box + 1):
            p = cell @ (n1, n2)
            if np.linalg.norm(p - center) <= R:
                count += 1
    return count


class TestLatticeDisk:
    def test_contains_origin(self):
        cfg = build_lattice_disk(TRI, 10.0)
        assert (0, 0) in cfg
        np.testing.assert_allclose(cfg.position((0, 0)), [0.0, 0.0])

    def test_count_matches_enumeration_oracle(self):
        for R in (2.5, 5.0, 10.0):
            cfg = build_lattice_disk(TRI, R)
            assert len(cfg) == brute_force_disk_count(TRI, R)

    def test_tiny_radius_keeps_only_origin(self):
        cfg = build_lattice_disk(TRI, 0.5)
        assert len(cfg) == 1 and cfg.ids == ((0, 0),)

    def test_off_lattice_center_empty_is_error(self):
        with pytest.raises(ValueError):
            build_lattice_disk(TRI, 0.2, center=(0.5, 0.289))

    def test_canonical_ordering(self):
        cfg = build_lattice_disk(TRI, 3.0)
        assert list(cfg.ids) == sorted(cfg.ids)

    def test_min_sep_is_lattice_spacing(self):
        cfg = build_lattice_disk(TRI, 6.0)
        assert cfg.min_sep == pytest.approx(1.0, abs=1e-12)


class TestRemoveSites:
    def test_removes_requested_sites(self):
        cfg = build_lattice_disk(TRI, 10.0)
        vac = [(1, 0), (0, -3), (-2, 2), (2, 5)]
        out = remove_sites(cfg, vac)
        assert len(out) == len(cfg) - 4
        for v in vac:
            assert v not in out

    def test_empty_removal_is_identity(self):
        cfg = build_lattice_disk(TRI, 4.0)
        out = remove_sites(cfg, [])
        assert out.ids == cfg.ids
        np.testing.assert_array_equal(out.positions, cfg.positions)

    def test_divacancy(self):
        cfg = build_lattice_disk(TRI, 5.0)
        out = remove_sites(cfg, [(0, 0), (1, 0)])
        assert len(out) == len(cfg) - 2

    def test_unknown_id_errors_with_name(self):
        cfg = build_lattice_disk(TRI, 2.0)
        with pytest.raises(KeyError, match=r"\(99, 99\)"):
            remove_sites(cfg, [(99, 99)])

    def test_removal_composes(self):
        cfg = build_lattice_disk(TRI, 5.0)
        s, t = [(1, 0), (0, 1)], [(2, 2), (-1, 0)]
        once = remove_sites(cfg, s + t)
        twice = remove_sites(remove_sites(cfg, s), t)
        assert once.ids == twice.ids
        np.testing.assert_array_equal(once.positions, twice.positions)


class TestPerturb:
    def test_deterministic(self):
        cfg = build_lattice_disk(TRI, 6.0)
        a = perturb(cfg, 0.1, seed=3)
        b = perturb(cfg, 0.1, seed=3)
        np.testing.assert_array_equal(a.positions, b.positions)

    def test_zero_amplitude_identity(self):
        cfg = build_lattice_disk(TRI, 6.0)
        out = perturb(cfg, 0.0, seed=123)
        np.testing.assert_array_equal(out.positions, cfg.positions)

    def test_shift_range(self):
        cfg = build_lattice_disk(TRI, 6.0)
        out = perturb(cfg, 0.1, seed=5)
        d = out.positions - cfg.positions
        assert d.min() >= 0.0 and d.max() <= 0.1

    def test_different_seeds_differ(self):
        cfg = build_lattice_disk(TRI, 4.0)
        a = perturb(cfg, 0.1, seed=1)
        b = perturb(cfg, 0.1, seed=2)
        assert np.abs(a.positions - b.positions).max() > 0


def test_configuration_rejects_collisions():
    with pytest.raises(ValueError, match="separation"):
        Configuration(["a", "b"], [[0.0, 0.0], [0.0, 0.0]])


def test_configuration_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        Configuration(["a", "a"], [[0.0, 0.0], [1.0, 0.0]])


class TestIsometry:
    def test_identity(self):
        cfg = build_lattice_disk(TRI, 4.0)
        out = apply_isometry(cfg, np.eye(2), [0.0, 0.0])
        np.testing.assert_allclose(out.positions, cfg.positions)

    def test_rotation_preserves_pair_distance(self):
        cfg = Configuration(["a", "b"], [[0.0, 0.0], [1.3, 0.0]])
        rot = np.array([[0.0, -1.0], [1.0, 0.0]])
        out = apply_isometry(cfg, rot, [2.0, -1.0])
        d = np.linalg.norm(out.positions[0] - out.positions[1])
        assert d == pytest.approx(1.3, abs=1e-12)

    def test_random_isometries_preserve_min_sep(self):
        cfg = perturb(build_lattice_disk(TRI, 5.0), 0.05, seed=11)
        rng = np.random.default_rng(0)
        for _ in range(10):
            theta = rng.uniform(0, 2 * np.pi)
            rot = np.array(
                [[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]]
            )
            if rng.random() < 0.5:
                rot[:, 0] *= -1  # include reflections
            out = apply_isometry(cfg, rot, rng.uniform(-5, 5, 2))
            assert abs(out.min_sep - cfg.min_sep) < 1e-12

    def test_non_orthogonal_rejected(self):
        cfg = build_lattice_disk(TRI, 2.0)
        with pytest.raises(ValueError, match="orthogonal"):
            apply_isometry(cfg, np.array([[1.0, 0.1], [0.0, 1.0]]), [0.0, 0.0])


class TestPermutation:
    def test_identity(self):
        cfg = build_lattice_disk(TRI, 3.0)
        out = apply_permutation(cfg, {s: s for s in cfg.ids})
        np.testing.assert_array_equal(out.positions, cfg.positions)

    def test_swap_moves_positions(self):
        cfg = Configuration([1, 2, 3], [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        out = apply_permutation(cfg, {1: 2, 2: 1, 3: 3})
        np.testing.assert_array_equal(out.position(1), cfg.position(2))
        np.testing.assert_array_equal(out.position(2), cfg.position(1))
        np.testing.assert_array_equal(out.position(3), cfg.position(3))

    def test_cycle_then_inverse_restores(self):
        cfg = Configuration([1, 2, 3], [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
        fwd = {1: 2, 2: 3, 3: 1}
        inv = {v: k for k, v in fwd.items()}
        out = apply_permutation(apply_permutation(cfg, fwd), inv)
        np.testing.assert_array_equal(out.positions, cfg.positions)

    def test_non_bijection_rejected(self):
        cfg = Configuration([1, 2], [[0.0, 0.0], [1.0, 0.0]])
        with pytest.raises(ValueError):
            apply_permutation(cfg, {1: 1, 2: 1})


class TestStencilNorm:
    def test_zero_field(self):
        cfg = build_lattice_disk(TRI, 4.0)
        u = DisplacementField(cfg)
        assert stencil_norm(u, StencilNormSpec.exp_decay(1.0)) == 0.0
        assert stencil_norm(u, StencilNormSpec.nearest(lattice_stencil_dirs(TRI))) == 0.0

    def test_constant_field(self):
        cfg = build_lattice_disk(TRI, 4.0)
        u = DisplacementField(cfg, np.full((len(cfg), 2), 0.7))
        assert stencil_norm(u, StencilNormSpec.exp_decay(0.8)) == pytest.approx(0.0, abs=1e-14)

    def test_linear_field_matches_direct_sum(self):
        # u(l) = position(l): each nn difference is the stencil vector itself.
        cfg = build_lattice_disk(TRI, 3.0)
        dirs = lattice_stencil_dirs(TRI)
        u = DisplacementField(cfg, cfg.positions.copy())
        got = stencil_norm(u, StencilNormSpec.nearest(dirs))
        table = {tuple(np.round(p, 9)): k for k, p in enumerate(cfg.positions)}
        acc = 0.0
        for k, p in enumerate(cfg.positions):
            for rho in dirs:
                if tuple(np.round(p + rho, 9)) in table:
                    acc += float(rho @ rho)
        assert got == pytest.approx(np.sqrt(acc), rel=1e-12)

    def test_exp_gamma_matches_direct_sum(self):
        cfg = build_lattice_disk(TRI, 2.5)
        rng = np.random.default_rng(4)
        u = DisplacementField(cfg, rng.standard_normal((len(cfg), 2)))
        gamma = 1.3
        acc = 0.0
        for k in range(len(cfg)):
            for j in range(len(cfg)):
                if j == k:
                    continue
                r = np.linalg.norm(cfg.positions[j] - cfg.positions[k])
                w = np.exp(-2 * gamma * r)
                if w < 1e-14:
                    continue
                d = u.values[j] - u.values[k]
                acc += w * float(d @ d)
        got = stencil_norm(u, StencilNormSpec.exp_decay(gamma))
        assert got == pytest.approx(np.sqrt(acc), rel=1e-12)

    def test_vacancy_legs_skipped(self):
        cfg = remove_sites(build_lattice_disk(TRI, 2.5), [(1, 0)])
        rng = np.random.default_rng(9)
        u = DisplacementField(cfg, rng.standard_normal((len(cfg), 2)))
        # Just needs to run and produce a finite value: absent neighbors drop out.
        val = stencil_norm(u, StencilNormSpec.nearest(lattice_stencil_dirs(TRI)))
        assert np.isfinite(val) and val > 0

    def test_norms_equivalent_on_fixed_config(self):
        cfg = build_lattice_disk(TRI, 3.0)
        nn = StencilNormSpec.nearest(lattice_stencil_dirs(TRI))
        eg = StencilNormSpec.exp_decay(1.0)
        rng = np.random.default_rng(12)
        ratios = []
        for _ in range(20):
            u = DisplacementField(cfg, rng.standard_normal((len(cfg), 2)))
            ratios.append(stencil_norm(u, eg) / stencil_norm(u, nn))
        ratios = np.array(ratios)
        assert ratios.min() > 0
        assert ratios.max() / ratios.min() < 10.0

    def test_negation_closure_required(self):
        with pytest.raises(ValueError, match="negation"):
            StencilNormSpec.nearest([[1.0, 0.0]])

    def test_gamma_positive_required(self):
        with pytest.raises(ValueError):
            StencilNormSpec.exp_decay(0.0)


class TestDisplacementField:
    def test_clamped_sites_zeroed(self):
        cfg = build_lattice_disk(TRI, 2.0)
        vals = np.ones((len(cfg), 2))
        u = DisplacementField(cfg, vals, free_ids=[(0, 0)])
        assert np.all(u.get((0, 0)) == 1.0)
        others = [s for s in cfg.ids if s != (0, 0)]
        for s in others:
            assert np.all(u.get(s) == 0.0)


def test_json_round_trip():
    cfg = perturb(build_lattice_disk(TRI, 3.0), 0.05, seed=8)
    doc = config_to_json_dict(cfg)
    text = json.dumps(doc)
    back = config_from_json_dict(json.loads(text))
    assert back.ids == cfg.ids
    np.testing.assert_array_equal(back.positions, cfg.positions)
    assert back.min_sep == pytest.approx(cfg.min_sep, rel=1e-15)
