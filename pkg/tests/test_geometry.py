import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bvpwalk.geometry import (
    BallOracle,
    BoundaryClass,
    BoxOracle,
    GridField,
    GridOracle,
    HalfSpaceSplit,
    all_absorbing,
    all_reflecting,
    boundary_classes_present,
    fast_sweep_anisotropic,
    fmm_distance,
    interpolate,
    read_grid,
    write_grid,
)


def test_ball_query_examples():
    ball = BallOracle(np.zeros(3), 1.0, HalfSpaceSplit(2))
    q = ball.query(np.array([[0.0, 0.0, 0.5], [0.0, 0.0, -0.5], [0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(q.distance, [-0.5, -0.5, -1.0])
    np.testing.assert_allclose(q.normal[0], [0, 0, 1])
    np.testing.assert_allclose(q.projection[1], [0, 0, -1])
    assert list(q.boundary_class[:2]) == [BoundaryClass.REFLECTING, BoundaryClass.ABSORBING]
    np.testing.assert_allclose(q.normal[2], [1, 0, 0])


def test_box_tie_break_and_outside():
    box = BoxOracle(-np.ones(2), np.ones(2))
    q = box.query(np.array([[0.0, 0.0], [0.5, 0.5], [2.0, 3.0], [0.9, 0.0]]))
    # centre: all four faces tie, lowest axis and upper face wins
    np.testing.assert_allclose(q.normal[0], [1, 0])
    np.testing.assert_allclose(q.normal[1], [1, 0])
    assert q.distance[2] == pytest.approx(math.hypot(1, 2))
    np.testing.assert_allclose(q.projection[2], [1, 1])
    np.testing.assert_allclose(q.projection[3], [1, 0])
    assert q.distance[3] == pytest.approx(-0.1)


@settings(max_examples=100, deadline=None)
@given(arrays(float, (20, 3), elements=st.floats(-1.5, 1.5)))
def test_ball_projection_consistency(x):
    ball = BallOracle(np.zeros(3), 1.0)
    x = x[np.linalg.norm(x, axis=1) > 1e-6]
    q = ball.query(x)
    np.testing.assert_allclose(np.linalg.norm(q.projection, axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(x - q.distance[:, None] * q.normal, q.projection, atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(arrays(float, (20, 3), elements=st.floats(-0.99, 0.99)))
def test_box_interior_consistency(x):
    box = BoxOracle(-np.ones(3), np.ones(3))
    q = box.query(x)
    assert np.all(q.distance <= 0)
    np.testing.assert_allclose(q.distance, -np.min(1 - np.abs(x), axis=1), atol=1e-15)
    np.testing.assert_allclose(x - q.distance[:, None] * q.normal, q.projection, atol=1e-12)


def test_query_take_put():
    ball = BallOracle(np.zeros(2), 1.0)
    q = ball.query(np.array([[0.1, 0.0], [0.0, 0.2], [0.3, 0.3]]))
    mask = np.array([True, False, True])
    sub = q.take(mask)
    assert sub.distance.shape == (2,)
    sub.distance[:] = 7.0
    q.put(mask, sub)
    np.testing.assert_allclose(q.distance, [7.0, -0.8, 7.0])


def test_classifiers_and_presence():
    pts = np.array([[0.0, 0.0, -0.1], [0.0, 0.0, 0.1]])
    assert list(all_absorbing(pts)) == [True, True]
    assert list(all_reflecting(pts)) == [False, False]
    assert list(HalfSpaceSplit(2)(pts)) == [True, False]
    assert boundary_classes_present(BallOracle(np.zeros(3), 1.0, HalfSpaceSplit(2))) == (True, True)
    assert boundary_classes_present(BallOracle(np.zeros(3), 1.0, all_reflecting)) == (False, True)


def test_constructor_errors():
    with pytest.raises(ValueError):
        BallOracle(np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        BoxOracle(np.ones(2), np.zeros(2))
    with pytest.raises(ValueError):
        GridField(np.zeros(2), np.array([0.1, -0.1]), np.zeros((3, 3)))


def test_interpolate_is_exact_for_multilinear():
    grid = GridField(np.array([-1.0, 0.0]), np.array([0.5, 0.25]), np.zeros((5, 5)))
    pts = grid.node_points()
    grid.values = (2 * pts[:, 0] - pts[:, 1] + 3 * pts[:, 0] * pts[:, 1]).reshape(grid.shape)
    x = np.array([[-0.3, 0.7], [0.99, 0.01], [1.0, 1.0]])
    np.testing.assert_allclose(interpolate(grid, x), 2 * x[:, 0] - x[:, 1] + 3 * x[:, 0] * x[:, 1], atol=1e-12)
    assert interpolate(grid, np.array([0.0, 0.5])) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        interpolate(grid, np.array([[1.5, 0.0]]))


def _ball_mask(h):
    n = int(round(2.4 / h)) + 1
    origin = np.array([-1.2, -1.2])
    grid = GridField(origin, np.array([h, h]), np.zeros((n, n)))
    pts = grid.node_points()
    inside = (np.linalg.norm(pts, axis=1) <= 1.0).reshape(n, n)
    return grid, inside, pts


def test_fmm_ball_distance_first_order():
    errors = []
    for h in (0.04, 0.02):
        grid, mask, pts = _ball_mask(h)
        field = fmm_distance(mask, h, grid.origin)
        exact = (np.linalg.norm(pts, axis=1) - 1.0).reshape(mask.shape)
        err = np.abs(field.values - exact).max()
        assert err <= 2 * h
        errors.append(err)
    assert 1.5 <= errors[0] / errors[1] <= 2.5


def test_fmm_rejects_degenerate_mask():
    with pytest.raises(ValueError):
        fmm_distance(np.zeros((4, 4), dtype=bool), 0.1, (0.0, 0.0))
    with pytest.raises(ValueError):
        fmm_distance(np.ones((4, 4), dtype=bool), 0.1, (0.0, 0.0))


def test_grid_oracle_matches_ball():
    h = 0.02
    grid, mask, pts = _ball_mask(h)
    x = np.array([[0.5, 0.1], [-0.2, -0.7], [0.0, 0.9]])
    unit = x / np.linalg.norm(x, axis=1, keepdims=True)
    oracle = GridOracle(fmm_distance(mask, h, grid.origin))
    np.testing.assert_allclose(oracle.query(x).distance, np.linalg.norm(x, axis=1) - 1, atol=2 * h)
    grid.values = (np.linalg.norm(pts, axis=1) - 1.0).reshape(grid.shape)
    q = GridOracle(grid).query(x)
    np.testing.assert_allclose(q.normal, unit, atol=1e-3)
    np.testing.assert_allclose(q.projection, unit, atol=1e-3)


def test_shape_operators():
    rng = np.random.default_rng(5)
    y = rng.normal(size=(20, 3))
    y *= 2.0 / np.linalg.norm(y, axis=1, keepdims=True)
    ball = BallOracle(np.zeros(3), 2.0)
    exact = ball.shape_operator(y)
    nrm = y / 2.0
    np.testing.assert_allclose(exact, (np.eye(3) - nrm[:, :, None] * nrm[:, None, :]) / 2.0)
    np.testing.assert_allclose(np.einsum("nij,nj->ni", exact, nrm), 0.0, atol=1e-15)
    # the generic difference quotient agrees with the closed form
    generic = super(BallOracle, ball).shape_operator(y)
    np.testing.assert_allclose(generic, exact, atol=1e-6)
    box = BoxOracle(-np.ones(3), np.ones(3))
    assert not box.shape_operator(np.array([[1.0, 0.2, 0.3]])).any()


def test_grid_shape_operator_on_circle():
    h = 0.02
    grid, _, pts = _ball_mask(h)
    grid.values = (np.linalg.norm(pts, axis=1) - 1.0).reshape(grid.shape)
    ang = np.linspace(0.1, 6.0, 12)
    y = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    w = GridOracle(grid).shape_operator(y)
    expected = np.eye(2) - y[:, :, None] * y[:, None, :]
    np.testing.assert_allclose(w, expected, atol=0.05)


def test_anisotropic_identity_matches_distance():
    h = 0.02
    grid, mask, pts = _ball_mask(h)
    psi = fast_sweep_anisotropic(np.eye(2), mask, h, grid.origin)
    exact = 1.0 - np.linalg.norm(pts, axis=1).reshape(mask.shape)
    assert np.abs(psi.values - exact)[mask].max() <= 2 * h


def _square_perimeter(samples_per_side=4000):
    t = np.linspace(-1.0, 1.0, samples_per_side)
    one = np.ones_like(t)
    return np.concatenate([np.stack([t, one], 1), np.stack([t, -one], 1), np.stack([one, t], 1), np.stack([-one, t], 1)])


EX3 = np.array([[8.0, -2.71], [-2.71, 1.0]])


@pytest.mark.parametrize("a", [np.diag([4.0, 1.0]), EX3])
def test_anisotropic_tangency_on_square(a):
    nodes = 101
    h = 2.0 / (nodes - 1)
    psi = fast_sweep_anisotropic(a, np.ones((nodes, nodes), dtype=bool), h, (-1.0, -1.0))
    boundary = _square_perimeter()
    inv = np.linalg.inv(a)
    tol = 4 * h * np.linalg.norm(a, 2)
    rng = np.random.default_rng(3)
    for i, j in rng.integers(1, nodes - 1, size=(100, 2)):
        x = np.array([-1 + i * h, -1 + j * h])
        rel = boundary - x
        quad = np.einsum("ni,ij,nj->n", rel, inv, rel)
        assert abs(quad.min() - psi.values[i, j] ** 2) <= tol


@pytest.mark.parametrize("a, bound", [(np.diag([4.0, 1.0]), 0.1), (EX3, 2.0)])
def test_anisotropic_square_closed_form(a, bound):
    # on a box with constant A the ellipse first reaches face i after gap / sqrt(a_ii)
    nodes = 101
    h = 2.0 / (nodes - 1)
    psi = fast_sweep_anisotropic(a, np.ones((nodes, nodes), dtype=bool), h, (-1.0, -1.0))
    g = np.linspace(-1, 1, nodes)
    xx, yy = np.meshgrid(g, g, indexing="ij")
    exact = np.minimum((1 - np.abs(xx)) / math.sqrt(a[0, 0]), (1 - np.abs(yy)) / math.sqrt(a[1, 1]))
    assert np.abs(psi.values - exact).max() <= bound * h


def test_fmm_half_space_is_linear():
    h = 0.05
    n = 41
    mask = np.zeros((n, n), dtype=bool)
    mask[:20, :] = True
    field = fmm_distance(mask, h, (0.0, 0.0))
    # interface halfway between rows 19 and 20
    expected = (np.arange(n) - 19.5) * h
    np.testing.assert_allclose(field.values, np.repeat(expected[:, None], n, axis=1), atol=1e-10)


def test_fmm_box_distance():
    h = 0.02
    n = 121
    origin = np.array([-1.2, -1.2])
    grid = GridField(origin, np.array([h, h]), np.zeros((n, n)))
    pts = grid.node_points()
    box = BoxOracle(-np.ones(2), np.ones(2))
    mask = (box.distance(pts) <= 0).reshape(n, n)
    field = fmm_distance(mask, h, origin)
    exact = box.distance(pts).reshape(n, n)
    assert np.abs(field.values - exact)[mask].max() <= 2 * h


def test_anisotropic_diag_centre_value():
    nodes = 51
    h = 2.0 / (nodes - 1)
    psi = fast_sweep_anisotropic(np.diag([4.0, 1.0]), np.ones((nodes, nodes), dtype=bool), h, (-1.0, -1.0))
    # tangency along the long axis: 2 * rho = 1
    assert psi.values[25, 25] == pytest.approx(0.5, abs=1e-9)


def test_anisotropic_errors():
    with pytest.raises(ValueError):
        fast_sweep_anisotropic(np.eye(3), np.ones((4, 4), dtype=bool), 0.1, (0, 0))
    with pytest.raises(ValueError):
        fast_sweep_anisotropic(np.array([[1.0, 2.0], [2.0, 1.0]]), np.ones((4, 4), dtype=bool), 0.1, (0, 0))
    with pytest.raises(RuntimeError):
        fast_sweep_anisotropic(np.eye(2), np.ones((40, 40), dtype=bool), 0.05, (0, 0), max_sweeps=1)


def test_grid_file_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    grid = GridField(np.array([-1.0, 0.5]), np.array([0.1, 1 / 3]), rng.normal(size=(4, 6)))
    path = tmp_path / "g.eiko"
    write_grid(grid, path)
    back = read_grid(path)
    assert path.read_text().startswith("EIKO v1 D=2 shape=4,6")
    np.testing.assert_array_equal(back.values, grid.values)
    np.testing.assert_array_equal(back.origin, grid.origin)
    np.testing.assert_array_equal(back.spacing, grid.spacing)


def test_grid_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.eiko"
    path.write_text("NOPE\n1 2\n")
    with pytest.raises(ValueError):
        read_grid(path)
    path.write_text("EIKO v1 D=2 shape=2,2 origin=0,0 spacing=1,1\n1 2 3\n")
    with pytest.raises(ValueError):
        read_grid(path)
