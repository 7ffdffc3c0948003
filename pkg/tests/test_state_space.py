import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from probfree.state_space import (Grid, StateSpace, audit_grid, default_grid, dense_sequence,
                                  fill_distance, refine_around)

UNIT = StateSpace((0.0,), (1.0,))
SQUARE = StateSpace((0.0, 0.0), (1.0, 1.0))


def brute_fill(space_lo, space_hi, pts, n_audit=2001):
    """Max over an audit lattice of the max-metric distance to the nearest point."""
    axes = [np.linspace(a, b, n_audit) for a, b in zip(space_lo, space_hi)]
    audit = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, len(axes))
    d = np.max(np.abs(audit[:, None, :] - np.asarray(pts)[None, :, :]), axis=2)
    return float(np.max(np.min(d, axis=1)))


def test_space_validation():
    with pytest.raises(ValueError):
        StateSpace((1.0,), (1.0,))
    with pytest.raises(ValueError):
        StateSpace((0.0, 0.0), (1.0,))
    assert StateSpace.from_dict(SQUARE.to_dict()) == SQUARE


def test_vertices_and_grid():
    assert SQUARE.vertices().tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    g = Grid(UNIT, 3)
    assert g.points.ravel().tolist() == [0.0, 0.5, 1.0]
    assert g.refined().resolution == (5,)
    g2 = Grid(SQUARE, (3, 2))
    assert g2.size == 6
    assert g2.points[:2].tolist() == [[0, 0], [0, 1]]


def test_default_grid_sizes():
    assert default_grid(UNIT).size == 4097
    assert default_grid(SQUARE).resolution == (65, 65)


def test_dense_sequence_examples():
    assert dense_sequence(UNIT, 1).ravel().tolist() == [0.5]
    three = dense_sequence(UNIT, 3).ravel()
    assert len(set(three)) == 3
    gaps = np.abs(three[:, None] - three[None, :])[np.triu_indices(3, 1)]
    assert gaps.min() >= 0.25
    five = dense_sequence(SQUARE, 5)
    assert len({tuple(p) for p in five}) == 5
    assert np.all(SQUARE.contains(five))


def test_dense_sequence_deterministic_prefix():
    a = dense_sequence(SQUARE, 100)
    b = dense_sequence(SQUARE, 40)
    assert np.array_equal(a[:40], b)
    assert a.tobytes() == dense_sequence(SQUARE, 100).tobytes()


@pytest.mark.parametrize("space", [UNIT, SQUARE, StateSpace((-1.0, 0.0, 2.0), (1.0, 0.5, 3.0))])
def test_density_monotone(space):
    audit = audit_grid(space, per_dim=129 if space.dim < 3 else 33)
    ns = [2 ** j for j in range(11)]
    fills = [fill_distance(space, dense_sequence(space, n), audit) for n in ns]
    assert all(b <= a + 1e-15 for a, b in zip(fills, fills[1:]))
    assert fills[-1] <= fills[0] / 8 + 1e-15


def test_fill_distance_examples():
    assert fill_distance(UNIT, [[0.0], [1.0]]) == pytest.approx(0.5)
    assert fill_distance(UNIT, [[0.5]]) == pytest.approx(0.5)
    two = StateSpace((0.0,), (2.0,))
    pts = np.linspace(0, 2, 21)[:, None]
    expected = brute_fill([0.0], [2.0], pts)
    assert expected == pytest.approx(0.05, abs=1e-3)
    assert fill_distance(two, pts) == pytest.approx(expected, abs=1e-12)
    with pytest.raises(ValueError):
        fill_distance(UNIT, np.empty((0, 1)))


def test_fill_distance_against_brute_force_2d():
    rng = np.random.default_rng(3)
    pts = rng.random((17, 2))
    audit = audit_grid(SQUARE, per_dim=101)
    assert fill_distance(SQUARE, pts, audit) == pytest.approx(
        brute_fill([0, 0], [1, 1], pts, 101), abs=1e-12)


def test_refine_around_examples():
    p = refine_around(Grid(UNIT, 3), [0.5], 0.25)
    assert p.size and np.all((p >= 0.25) & (p <= 0.75))
    p = refine_around(Grid(UNIT, 2), [0.0], 0.1)
    assert np.all((p >= 0.0) & (p <= 0.1))
    p = refine_around(Grid(SQUARE, 3), [0.5, 0.5], 0.25)
    assert p.size and np.max(np.abs(p - 0.5)) <= 0.25


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.floats(0.1, 3), min_size=2, max_size=2),
       st.integers(2, 9), st.floats(0, 1), st.floats(0, 1), st.floats(0.01, 2))
def test_refine_around_contained(lo, width, n, u, v, radius):
    space = StateSpace(tuple(lo), tuple(a + w for a, w in zip(lo, width)))
    center = space.lo_array + np.array([u, v]) * space.widths
    pts = refine_around(Grid(space, n), center, radius)
    assert np.all(space.contains(pts))
    if pts.size:
        assert np.max(np.abs(pts - center)) <= radius + 1e-12


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 3), st.integers(1, 300))
def test_dense_sequence_contained(k, n):
    space = StateSpace(tuple([-1.5] * k), tuple([0.25] * k))
    pts = dense_sequence(space, n)
    assert pts.shape == (n, k)
    assert np.all(space.contains(pts))
    assert len({tuple(p) for p in pts}) == n
