import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from quasiabp.grid import (BOUNDARY, EXTERIOR, INTERIOR, Grid, GridFunction, boundary_sup, convex_hull_polygon,
                           diameter, diameter_bruteforce, gradient_central, hessian_central, positive_part_extend,
                           sup_over)


def test_box_labels():
    g = Grid.box((0.0, 0.0), (1.0, 1.0), 5)
    assert g.spacing == pytest.approx(0.25)
    assert g.interior.sum() == 9
    assert g.boundary.sum() == 16
    assert not np.any(g.labels == EXTERIOR)


def test_ball_boundary_touches_interior(disc21):
    g = disc21
    assert np.all(np.linalg.norm(g.points[g.interior], axis=-1) < 1.0)
    padded = np.pad(g.interior, 1)
    for node in np.argwhere(g.boundary):
        i, j = node + 1
        assert padded[i - 1:i + 2, j - 1:j + 2].any()


def test_interior_on_edge_rejected():
    labels = np.full((4, 4), INTERIOR)
    with pytest.raises(ValueError):
        Grid((0.0, 0.0), 0.1, labels)


def test_unequal_box_rejected():
    with pytest.raises(ValueError):
        Grid.box((0.0, 0.0), (1.0, 2.0), 5)


def test_csv_round_trip(disc21, rng):
    u = GridFunction(disc21, rng.normal(size=disc21.shape))
    text = u.to_csv()
    assert text.endswith("\r\n")
    back = GridFunction.from_csv(disc21, text)
    assert np.array_equal(back.values, u.values)


def test_csv_wrong_grid(disc21):
    u = GridFunction(disc21, 1.0)
    with pytest.raises(ValueError):
        GridFunction.from_csv(Grid.ball((0.0, 0.0), 1.0, 11), u.to_csv())


def test_nonfinite_rejected(disc21):
    with pytest.raises(ValueError):
        GridFunction(disc21, np.nan)


def test_positive_part_extend(disc21):
    u = GridFunction.from_callable(disc21, lambda x: x[..., 0])
    up = positive_part_extend(u)
    assert np.all(up.values >= 0)
    assert np.all(up.values[~disc21.closure] == 0)
    assert sup_over(up, disc21.closure) == pytest.approx(sup_over(u, disc21.closure))
    assert boundary_sup(u) == pytest.approx(1.0)


@pytest.mark.parametrize("a,b,c", [(1.0, 2.0, -0.5), (0.0, -3.0, 2.0)])
def test_central_differences_exact_on_quadratics(a, b, c):
    g = Grid.box((-1.0, -1.0), (1.0, 1.0), 9)
    u = GridFunction.from_callable(g, lambda x: a * x[..., 0] ** 2 + b * x[..., 0] * x[..., 1] + c * x[..., 1])
    node = (3, 5)
    x, y = g.point(node)
    assert np.allclose(gradient_central(u, node), [2 * a * x + b * y, b * x + c])
    assert np.allclose(hessian_central(u, node), [[2 * a, b], [b, 0.0]])


def test_derivatives_refuse_boundary(disc21):
    u = GridFunction(disc21, 0.0)
    node = tuple(np.argwhere(disc21.boundary)[0])
    with pytest.raises(ValueError):
        gradient_central(u, node)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(-10, 10), st.floats(-10, 10)), min_size=3, max_size=40))
def test_diameter_matches_bruteforce(pts):
    pts = np.array(pts)
    assert diameter(pts) == pytest.approx(diameter_bruteforce(pts), rel=1e-12, abs=1e-12)


def test_hull_polygon_ccw(rng):
    pts = rng.random((30, 2))
    poly = convex_hull_polygon(pts)
    area2 = np.sum(poly[:, 0] * np.roll(poly[:, 1], -1) - np.roll(poly[:, 0], -1) * poly[:, 1])
    assert area2 > 0


def test_grid_diameter(disc21):
    # boundary nodes sit up to one diagonal step outside the circle
    assert 2.0 <= disc21.diameter <= 2.0 + 2 * np.sqrt(2) * disc21.spacing + 1e-12


def test_distance_to_boundary_zero_on_boundary(disc21):
    d = disc21.distance_to_boundary()
    assert np.all(d[disc21.boundary] == 0)
    assert np.all(d[disc21.interior] > 0)
    assert BOUNDARY != INTERIOR
