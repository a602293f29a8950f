import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))

from cutheat.utils.errors import ExtensionCoverageError, InvalidArgumentError
from cutheat.utils.geometry import (
    CellClass,
    MovingDomain,
    build_active_mesh,
    classify_cells,
    delta_default,
)
from cutheat.utils.manufactured import example_static_square, example_traveling_circle
from cutheat.utils.mesh import UNIT_SQUARE, build_uniform_mesh


def _dense_cut_oracle(mesh, domain, t, samples=12):
    """Cells where phi changes sign on a dense barycentric lattice."""
    bary = np.array(
        [(i / samples, j / samples) for i in range(samples + 1) for j in range(samples + 1 - i)]
    )
    lam = np.column_stack([1 - bary.sum(axis=1), bary])
    pts = np.einsum("qk,cka->cqa", lam, mesh.vertices[mesh.cells])
    values = domain.phi(pts, t)
    inside = values <= 0
    return inside.any(axis=1) & ~inside.all(axis=1), inside.any(axis=1)


def test_full_domain_is_inside():
    mesh = build_uniform_mesh(UNIT_SQUARE, 4)
    domain = example_static_square().domain
    classes = classify_cells(mesh, domain, 0.0, 0.1)
    assert np.all(classes == CellClass.INSIDE)
    active = build_active_mesh(mesh, domain, 0.0, 0.1)
    assert active.f_cut.size == 0
    assert active.f_ext.size == 0
    assert np.array_equal(np.sort(active.f_int), np.sort(mesh.interior_facets))


def test_far_corner_outside():
    mesh = build_uniform_mesh(UNIT_SQUARE, 32)
    domain = example_traveling_circle().domain
    classes = classify_cells(mesh, domain, 0.0, 0.1)
    corner = int(np.argmax(mesh.centroids.sum(axis=1)))
    assert classes[corner] == CellClass.OUTSIDE


def test_cut_cells_against_dense_sampling():
    mesh = build_uniform_mesh(UNIT_SQUARE, 32)
    domain = example_traveling_circle().domain
    classes = classify_cells(mesh, domain, 0.0, 0.0)
    oracle_cut, oracle_touch = _dense_cut_oracle(mesh, domain, 0.0)
    cut = classes == CellClass.CUT
    assert np.all(oracle_cut[cut])
    assert np.count_nonzero(oracle_cut & ~cut) <= 0.1 * np.count_nonzero(cut)
    assert np.all(classes[~oracle_touch] != CellClass.INSIDE)


def test_classification_monotone_in_delta():
    mesh = build_uniform_mesh(UNIT_SQUARE, 16)
    domain = example_traveling_circle().domain
    previous = None
    for delta in (0.0, 0.02, 0.05, 0.1, 0.3):
        active = classify_cells(mesh, domain, 0.03, delta) != CellClass.OUTSIDE
        if previous is not None:
            assert np.all(active[previous])
        previous = active


def test_delta_default():
    assert delta_default(1 / 50) == pytest.approx(0.08)
    assert delta_default(1 / 800) == pytest.approx(0.005)
    assert delta_default(1 / 50) >= 1.0 * (1 / 50)
    with pytest.raises(InvalidArgumentError):
        delta_default(0.0)
    with pytest.raises(InvalidArgumentError):
        classify_cells(build_uniform_mesh(UNIT_SQUARE, 2), example_static_square().domain, 0.0, -1.0)


def test_facet_sets_partition_active_interior_facets():
    mesh = build_uniform_mesh(UNIT_SQUARE, 32)
    domain = example_traveling_circle().domain
    active = build_active_mesh(mesh, domain, 0.02, 0.08)
    sets = [set(active.f_int.tolist()), set(active.f_cut.tolist()), set(active.f_ext.tolist())]
    assert not (sets[0] & sets[1]) and not (sets[0] & sets[2]) and not (sets[1] & sets[2])
    inner = mesh.interior_facets
    both = active.active_mask[mesh.facet_cells[inner, 0]] & active.active_mask[mesh.facet_cells[inner, 1]]
    assert sets[0] | sets[1] | sets[2] == set(inner[both].tolist())
    assert np.array_equal(active.f_g, np.union1d(active.f_cut, active.f_ext))
    touching = active.classes[mesh.facet_cells[active.f_cut]] == CellClass.CUT
    assert np.all(touching.any(axis=1))
    assert active.f_ext.size > 0


def test_static_prev_gives_empty_strip():
    mesh = build_uniform_mesh(UNIT_SQUARE, 16)
    domain = example_traveling_circle().domain
    prev = build_active_mesh(mesh, domain, 0.05, 0.04, step=1)
    again = build_active_mesh(mesh, domain, 0.05, 0.04, prev, step=2)
    assert again.strip_cells is not None
    assert again.strip_cells.size == 0


def test_traveling_circle_coverage_sweep():
    mesh = build_uniform_mesh(UNIT_SQUARE, 32)
    domain = example_traveling_circle().domain
    dt = 1 / 50
    delta = delta_default(dt)
    prev = build_active_mesh(mesh, domain, 0.0, delta)
    strips = []
    for n in range(1, 6):
        t = n * dt
        active = build_active_mesh(mesh, domain, t, delta, prev, step=n)
        _, touches = _dense_cut_oracle(mesh, domain, t)
        assert np.all(prev.active_mask[touches])
        strips.append(active.strip_cells.size)
        prev = active
    assert all(s > 0 for s in strips)


def test_coverage_error_when_delta_too_small():
    mesh = build_uniform_mesh(UNIT_SQUARE, 32)
    domain = example_traveling_circle().domain
    prev = build_active_mesh(mesh, domain, 0.0, 0.0)
    with pytest.raises(ExtensionCoverageError) as info:
        build_active_mesh(mesh, domain, 0.05, 0.0, prev, step=1)
    assert info.value.step == 1
    assert info.value.cells


def test_boundary_speed_bounded_by_w_max():
    domain = example_traveling_circle().domain
    rng = np.random.default_rng(7)
    pts = domain.boundary_points(0.04, 200, rng)
    assert pts.shape[0] > 50
    speed = domain.normal_speed(pts, 0.04)
    assert np.all(speed <= 1.05 * domain.w_max)


def test_level_set_lipschitz_on_nearby_pairs():
    domain = example_traveling_circle().domain
    rng = np.random.default_rng(3)
    x = rng.uniform(0, 1, (200, 2))
    y = x + rng.normal(scale=1e-3, size=x.shape)
    lhs = np.abs(domain.phi(x, 0.05) - domain.phi(y, 0.05))
    assert np.all(lhs <= 3.0 * np.linalg.norm(x - y, axis=1))


def test_signed_distance_falls_back_to_phi():
    domain = MovingDomain(phi=lambda x, t: x[..., 0] - 0.5, w_max=0.0)
    x = np.array([[0.2, 0.1], [0.9, 0.4]])
    assert np.allclose(domain.signed_distance(x, 0.0), [-0.3, 0.4])
