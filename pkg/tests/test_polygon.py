import numpy as np
from hypothesis import given, strategies as st

from bnpartition import polygon as pg


def test_box_area_centroid():
    sq = pg.box([1.0, 2.0], 0.5)
    assert pg.area(sq) == 1.0
    np.testing.assert_allclose(pg.centroid(sq), [1.0, 2.0])
    assert pg.is_convex(sq)


def test_small_cell_far_from_origin_is_accurate():
    tri = np.array([[1.26, 1.26], [1.26 + 1e-6, 1.26], [1.26, 1.26 + 1e-6]])
    # the edge lengths themselves carry ~1e-10 relative rounding
    assert abs(pg.area(tri) - 0.5e-12) < 1e-9 * 0.5e-12
    c = pg.centroid(tri)
    assert pg.contains(tri, c[None])[0]


@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0, 2 * np.pi))
def test_split_conserves_area(c, shift, theta):
    sq = pg.box([shift, 0.0], 1.0)
    a = np.array([np.cos(theta), np.sin(theta)])
    pieces = pg.split(sq, a, c) or (sq,)
    total = sum(pg.area(p) for p in pieces)
    assert abs(total - 4.0) < 1e-12
    for p in pieces:
        assert pg.is_convex(p)


def test_clip_halfplanes_and_contains(rng):
    sq = pg.box([0.0, 0.0], 1.0)
    tri = pg.clip_halfplanes(sq, np.array([[1.0, 1.0], [-1.0, 0.0], [0.0, -1.0]]), np.array([0.0, 1.0, 1.0]))
    assert abs(pg.area(tri) - 2.0) < 1e-12
    assert pg.clip_halfplanes(sq, np.array([[1.0, 0.0]]), np.array([-2.0])) is None
    pts = pg.interior_points(tri, 50, rng)
    assert pg.contains(tri, pts).all()
    assert not pg.contains(tri, np.array([[0.9, 0.9]]))[0]


def test_canonical_rotation():
    sq = pg.box([0.0, 0.0], 1.0)
    rolled = np.roll(sq, 2, axis=0)
    np.testing.assert_array_equal(pg.canonical(rolled), pg.canonical(sq))
