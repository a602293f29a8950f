import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))

from cutheat.utils.errors import InvalidArgumentError
from cutheat.utils.geometry import MovingDomain, build_active_mesh
from cutheat.utils.manufactured import example_static_square, example_traveling_circle
from cutheat.utils.mesh import UNIT_SQUARE, build_uniform_mesh
from cutheat.utils.quadrature import (
    build_cut_quadrature,
    cut_triangle,
    integrate_cut_boundary,
    integrate_cut_volume,
    line_rule,
    reference_rule,
)

REF_TRIANGLE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def _monomial_integral(a, b):
    return math.factorial(a) * math.factorial(b) / math.factorial(a + b + 2)


def _circle_active(n, t=0.0):
    mesh = build_uniform_mesh(UNIT_SQUARE, n)
    return build_active_mesh(mesh, example_traveling_circle().domain, t, 0.0)


@pytest.mark.parametrize("degree", [1, 2, 3, 4, 5, 6])
def test_reference_rule_is_exact(degree):
    rule = reference_rule(degree)
    assert rule.weights.sum() == pytest.approx(0.5, abs=1e-14)
    assert np.all(rule.weights > 0)
    x, y = rule.points[:, 0], rule.points[:, 1]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            value = float(np.dot(rule.weights, x**a * y**b))
            assert value == pytest.approx(_monomial_integral(a, b), rel=1e-12, abs=1e-15)


def test_cubic_monomial_on_reference():
    rule = reference_rule(3)
    x, y = rule.points[:, 0], rule.points[:, 1]
    assert float(np.dot(rule.weights, x * x * y)) == pytest.approx(1 / 60, rel=1e-12)


def test_line_rule_is_exact():
    rule = line_rule(5)
    for power in range(6):
        assert float(np.dot(rule.weights, rule.points**power)) == pytest.approx(1 / (power + 1), rel=1e-12)


def test_reference_rule_rejects_bad_degree():
    with pytest.raises(InvalidArgumentError):
        reference_rule(0)
    with pytest.raises(InvalidArgumentError):
        reference_rule(7)


def test_cut_triangle_one_vertex_inside():
    geo = cut_triangle(REF_TRIANGLE, np.array([-1.0, 1.0, 1.0]))
    assert geo.interior_area == pytest.approx(1 / 8, abs=1e-15)
    assert len(geo.segments) == 1
    ends = sorted(map(tuple, geo.segments[0]))
    assert np.allclose(ends, [(0.0, 0.5), (0.5, 0.0)])
    assert np.allclose(geo.normals[0], np.array([1.0, 1.0]) / math.sqrt(2.0))


def test_cut_triangle_two_vertices_inside():
    geo = cut_triangle(REF_TRIANGLE, np.array([-1.0, -1.0, 1.0]))
    assert geo.interior_area == pytest.approx(3 / 8, abs=1e-15)
    assert len(geo.interior_subtris) == 2
    assert np.allclose(geo.normals[0], [0.0, 1.0])


def test_cut_triangle_trivial_cases():
    inside = cut_triangle(REF_TRIANGLE, np.array([-1.0, -2.0, -0.5]))
    assert inside.interior_area == pytest.approx(0.5)
    assert len(inside.segments) == 0
    outside = cut_triangle(REF_TRIANGLE, np.array([1.0, 2.0, 0.5]))
    assert outside.interior_area == 0.0
    assert len(outside.segments) == 0


def test_cut_triangle_complements_add_up():
    rng = np.random.default_rng(3)
    for _ in range(50):
        phi = rng.normal(size=3)
        if np.all(phi > 0) or np.all(phi < 0):
            continue
        total = cut_triangle(REF_TRIANGLE, phi).interior_area + cut_triangle(REF_TRIANGLE, -phi).interior_area
        assert total == pytest.approx(0.5, abs=1e-14)


def test_cut_triangle_degenerate():
    with pytest.raises(InvalidArgumentError):
        cut_triangle(np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), np.array([-1.0, 1.0, 1.0]))


def test_circle_area_and_perimeter():
    active = _circle_active(64)
    r2 = 0.09
    area = integrate_cut_volume(active, lambda x: np.ones(x.shape[0]))
    perimeter = integrate_cut_boundary(active, lambda x: np.ones(x.shape[0]), include_box=False)
    assert area == pytest.approx(math.pi * r2, rel=2e-3)
    assert perimeter == pytest.approx(2 * math.pi * math.sqrt(r2), rel=5e-3)
    # The circle does not reach the box.
    assert integrate_cut_boundary(active, lambda x: np.ones(x.shape[0])) == pytest.approx(perimeter)


def test_area_error_is_second_order():
    errors = []
    for n in (32, 64, 128):
        area = integrate_cut_volume(_circle_active(n), lambda x: np.ones(x.shape[0]))
        errors.append(abs(area - math.pi * 0.09))
    rates = [math.log2(errors[i] / errors[i + 1]) for i in range(2)]
    assert 1.6 <= float(np.mean(rates)) <= 2.4


def test_full_square():
    mesh = build_uniform_mesh(UNIT_SQUARE, 8)
    active = build_active_mesh(mesh, example_static_square().domain, 0.0, 0.0)
    ones = lambda x: np.ones(x.shape[0])
    assert integrate_cut_volume(active, ones) == pytest.approx(1.0, abs=1e-13)
    assert integrate_cut_boundary(active, ones, include_box=False) == 0.0
    assert integrate_cut_boundary(active, ones) == pytest.approx(4.0, abs=1e-13)
    second = integrate_cut_volume(active, lambda x: x[:, 0] ** 2 * x[:, 1] ** 2, degree=4)
    assert second == pytest.approx(1 / 9, abs=1e-13)


def test_half_plane_reaching_the_box():
    mesh = build_uniform_mesh(UNIT_SQUARE, 8)
    domain = MovingDomain(phi=lambda x, t: x[..., 0] - 0.3, w_max=0.0)
    active = build_active_mesh(mesh, domain, 0.0, 0.0)
    ones = lambda x: np.ones(x.shape[0])
    assert integrate_cut_volume(active, ones) == pytest.approx(0.3, abs=1e-13)
    # Gamma_h is the segment x = 0.3; the box contributes 0.3 + 1 + 0.3.
    assert integrate_cut_boundary(active, ones, include_box=False) == pytest.approx(1.0, abs=1e-13)
    assert integrate_cut_boundary(active, ones) == pytest.approx(2.6, abs=1e-13)


def test_closed_boundary_normals_cancel():
    active = _circle_active(32, t=0.05)
    for axis in (0, 1):
        total = integrate_cut_boundary(active, lambda x, n: n[:, axis], with_normals=True)
        assert abs(total) <= 1e-12


def test_divergence_theorem_on_circle():
    # div(x, y) = 2, so the flux of (x, y) equals twice the area.
    active = _circle_active(32)
    flux = integrate_cut_boundary(active, lambda x, n: np.einsum("pa,pa->p", x, n), with_normals=True)
    area = integrate_cut_volume(active, lambda x: np.ones(x.shape[0]))
    assert flux == pytest.approx(2.0 * area, rel=1e-12)


def test_quadrature_points_lie_in_their_cells():
    active = _circle_active(16)
    quad = build_cut_quadrature(active, 4)
    ref = quad.cut_ref
    assert np.all(ref >= -1e-12)
    assert np.all(ref.sum(axis=1) <= 1 + 1e-12)
    assert np.all(quad.cut_weights > 0)
    assert np.all(np.isin(quad.cut_cells, active.cut_cells))
    assert np.allclose(np.linalg.norm(quad.bnd_normals, axis=1), 1.0)
