import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from thinstruct import (
    ConfigurationError,
    CurvatureTerm,
    TangentLine,
    curvature_pair,
    misalignment,
    point_line_distance,
    project_onto_line,
    truncated_distance,
)
from thinstruct.geometry import angles_to_directions, directions_to_angles


def _unit(v):
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v)


def _dist_oracle(anchor, direction, p):
    # independent cross-product route (2D: scalar cross; 3D: vector cross)
    anchor, direction, p = map(np.asarray, (anchor, direction, p))
    d = _unit(direction)
    r = p - anchor
    if p.shape[-1] == 2:
        return abs(r[0] * d[1] - r[1] * d[0])
    return np.linalg.norm(np.cross(r, d))


units2 = st.integers(0, 359).map(
    lambda k: (np.cos(np.deg2rad(k)), np.sin(np.deg2rad(k)))
)
coords = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


class TestDistanceProjection:
    def test_axis_aligned(self):
        # horizontal line through origin, point 3 above
        line = TangentLine(np.zeros(2), np.array([1.0, 0.0]))
        assert point_line_distance(line, np.array([5.0, 3.0])) == pytest.approx(3.0)

    def test_cross_product_oracle(self):
        line = TangentLine(np.array([1.0, 1.0]), np.array([1.0, 1.0]))
        p = np.array([3.0, 1.0])
        got = point_line_distance(line, p)
        want = _dist_oracle([1.0, 1.0], [1.0, 1.0], p)
        assert got == pytest.approx(want, abs=1e-12)
        assert got == pytest.approx(np.sqrt(2.0), abs=1e-12)

    def test_projection_value(self):
        # line through origin with direction (0.6, 0.8); (p.d)d
        line = TangentLine(np.zeros(2), np.array([0.6, 0.8]))
        proj = project_onto_line(line, np.array([1.0, 0.0]))
        np.testing.assert_allclose(proj, [0.36, 0.48], atol=1e-12)
        proj = project_onto_line(line, np.array([0.0, 0.6]))
        np.testing.assert_allclose(proj, [0.288, 0.384], atol=1e-12)
        # residual orthogonal to the direction
        assert np.dot(np.array([0.0, 0.6]) - proj, line.direction) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_projection_idempotent_and_on_line(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(40, 3))
        v = rng.normal(size=(40, 3))
        p = rng.normal(size=(40, 3))
        line = TangentLine(a, v)
        proj = project_onto_line(line, p)
        np.testing.assert_allclose(point_line_distance(line, proj), 0.0, atol=1e-10)
        np.testing.assert_allclose(project_onto_line(line, proj), proj, atol=1e-10)

    @given(
        st.tuples(coords, coords),
        units2,
        st.tuples(coords, coords),
    )
    @settings(max_examples=200, deadline=None)
    def test_matches_cross_oracle_2d(self, anchor, direction, p):
        line = TangentLine(np.array(anchor), np.array(direction))
        got = point_line_distance(line, np.array(p, dtype=float))
        want = _dist_oracle(anchor, direction, p)
        assert got == pytest.approx(want, abs=1e-9)

    def test_direction_flip_invariance(self):
        rng = np.random.default_rng(1)
        a, v, p = rng.normal(size=(3, 25, 2))
        d1 = point_line_distance(TangentLine(a, v), p)
        d2 = point_line_distance(TangentLine(a, -v), p)
        np.testing.assert_allclose(d1, d2, atol=1e-12)

    def test_anchor_slide_invariance(self):
        # moving the anchor along the line changes nothing
        line = TangentLine(np.array([2.0, -1.0, 0.5]), np.array([1.0, 2.0, -2.0]))
        slid = TangentLine(line.anchor + 7.3 * line.direction, line.direction)
        p = np.array([0.3, 4.0, -2.0])
        assert point_line_distance(line, p) == pytest.approx(
            point_line_distance(slid, p), abs=1e-12
        )

    def test_rejects_bad_shapes(self):
        with pytest.raises(ConfigurationError):
            TangentLine(np.zeros(2), np.zeros((2, 2)))
        with pytest.raises(ConfigurationError):
            TangentLine(np.zeros(4), np.ones(4))
        with pytest.raises(ConfigurationError):
            TangentLine(np.zeros(2), np.zeros(2))


class TestTruncatedDistance:
    def test_values(self):
        line = TangentLine(np.zeros(2), np.array([1.0, 0.0]))
        pts = np.array([[0.0, 0.5], [0.0, 1.0], [0.0, 2.5]])
        np.testing.assert_allclose(
            truncated_distance(line, pts, tau=1.0), [0.0, 0.0, 1.5], atol=1e-12
        )

    def test_negative_tau_rejected(self):
        line = TangentLine(np.zeros(2), np.array([1.0, 0.0]))
        with pytest.raises(ConfigurationError):
            truncated_distance(line, np.zeros(2), tau=-0.1)

    @given(
        st.floats(0, 5, allow_nan=False),
        st.tuples(coords, coords),
        st.tuples(coords, coords),
    )
    @settings(max_examples=100, deadline=None)
    def test_lipschitz_in_point(self, tau, p, q):
        # |d+(p) - d+(q)| <= ||p - q||  (hinge of a 1-Lipschitz function)
        line = TangentLine(np.array([0.3, -0.2]), np.array([2.0, 1.0]))
        dp = truncated_distance(line, np.array(p), tau)
        dq = truncated_distance(line, np.array(q), tau)
        assert abs(dp - dq) <= np.linalg.norm(np.subtract(p, q)) + 1e-9


class TestMisalignment:
    def test_parallel_zero(self):
        line = TangentLine(np.zeros(2), np.array([2.0, 0.0]))
        assert misalignment(line, np.array([3.0, 0.0])) == pytest.approx(0.0, abs=1e-12)
        assert misalignment(line, np.array([-3.0, 0.0])) == pytest.approx(
            0.0, abs=1e-12
        )

    def test_perpendicular_full_norm(self):
        line = TangentLine(np.zeros(2), np.array([1.0, 0.0]))
        assert misalignment(line, np.array([0.0, 2.5])) == pytest.approx(2.5)

    def test_45_degrees(self):
        line = TangentLine(np.zeros(2), np.array([1.0, 0.0]))
        g = np.array([1.0, 1.0])
        assert misalignment(line, g) == pytest.approx(np.sqrt(2) * np.sin(np.pi / 4))

    def test_zero_gradient(self):
        line = TangentLine(np.zeros(3), np.array([0.0, 0.0, 1.0]))
        assert misalignment(line, np.zeros(3)) == pytest.approx(0.0)

    def test_scales_with_gradient_norm(self):
        line = TangentLine(np.zeros(2), np.array([1.0, 1.0]))
        g = np.array([-0.3, 0.9])
        assert misalignment(line, 4.0 * g) == pytest.approx(
            4.0 * misalignment(line, g), rel=1e-12
        )


def _circle_tangents(M, radius=1.0):
    t = 2 * np.pi * np.arange(M) / M
    pts = radius * np.stack([np.cos(t), np.sin(t)], axis=-1)
    dirs = np.stack([-np.sin(t), np.cos(t)], axis=-1)
    return TangentLine(pts, dirs), pts


class TestCurvaturePair:
    def test_collinear_zero(self):
        li = TangentLine(np.array([0.0, 0.0]), np.array([1.0, 0.0]))
        lj = TangentLine(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
        for kind in ("absolute", "squared"):
            v = curvature_pair(li, lj, li.anchor, lj.anchor, CurvatureTerm(kind))
            assert v == pytest.approx(0.0, abs=1e-12)

    def test_symmetry(self):
        rng = np.random.default_rng(2)
        a, va, b, vb = rng.normal(size=(4, 30, 2))
        li, lj = TangentLine(a, va), TangentLine(b, vb)
        for kind in ("absolute", "squared"):
            term = CurvatureTerm(kind)
            kij = curvature_pair(li, lj, a, b, term)
            kji = curvature_pair(lj, li, b, a, term)
            np.testing.assert_allclose(kij, kji, rtol=1e-12)

    def test_circle_pair_closed_form(self):
        # adjacent tangents on the unit circle, M=12: |k| = 2 sin(pi/12)
        line, pts = _circle_tangents(12)
        v = curvature_pair(
            line[0], line[1], pts[0], pts[1], CurvatureTerm("absolute")
        )
        assert v == pytest.approx(2 * np.sin(np.pi / 12), abs=1e-12)

    @pytest.mark.parametrize("M", [8, 32, 256])
    def test_circle_sum_closed_form(self, M):
        # sum over the M adjacent pairs = 2 M sin(pi / M) -> 2 pi
        line, pts = _circle_tangents(M)
        nxt = np.roll(np.arange(M), -1)
        vals = curvature_pair(
            line, line[nxt], pts, pts[nxt], CurvatureTerm("absolute")
        )
        assert vals.sum() == pytest.approx(2 * M * np.sin(np.pi / M), abs=1e-9)

    def test_square_corner(self):
        # unit-spaced samples meeting at a right angle: each directed distance
        # equals the separation, so |k| = (1 + 1)/sqrt(2) = sqrt(2)
        li = TangentLine(np.array([-1.0, 0.0]), np.array([1.0, 0.0]))
        lj = TangentLine(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        v = curvature_pair(li, lj, li.anchor, lj.anchor, CurvatureTerm("absolute"))
        assert v == pytest.approx(np.sqrt(2.0), abs=1e-12)

    def test_squared_is_square_free_of_cross_term(self):
        # squared variant uses sum of squared distances, not (sum)^2
        li = TangentLine(np.array([0.0, 0.0]), np.array([1.0, 0.0]))
        lj = TangentLine(np.array([2.0, 1.0]), np.array([1.0, 0.0]))
        pi, pj = li.anchor, lj.anchor
        d_ij = point_line_distance(li, pj)
        d_ji = point_line_distance(lj, pi)
        sep2 = np.sum((pi - pj) ** 2)
        want = (d_ij**2 + d_ji**2) / sep2
        got = curvature_pair(li, lj, pi, pj, CurvatureTerm("squared"))
        assert got == pytest.approx(want, rel=1e-12)

    def test_scale_behavior(self):
        # absolute variant is scale invariant; squared likewise (ratios of
        # squared lengths) -- check under s = 2 to rel 1e-10
        rng = np.random.default_rng(3)
        a, va, b, vb = rng.normal(size=(4, 20, 2))
        li, lj = TangentLine(a, va), TangentLine(b, vb)
        li2, lj2 = TangentLine(2 * a, va), TangentLine(2 * b, vb)
        for kind in ("absolute", "squared"):
            term = CurvatureTerm(kind)
            v1 = curvature_pair(li, lj, a, b, term)
            v2 = curvature_pair(li2, lj2, 2 * a, 2 * b, term)
            np.testing.assert_allclose(v2, v1, rtol=1e-10)

    def test_rigid_motion_invariance(self):
        rng = np.random.default_rng(4)
        a, va, b, vb = rng.normal(size=(4, 20, 2))
        th = 0.83
        R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
        t = np.array([3.0, -7.0])
        for kind in ("absolute", "squared"):
            term = CurvatureTerm(kind)
            v1 = curvature_pair(TangentLine(a, va), TangentLine(b, vb), a, b, term)
            v2 = curvature_pair(
                TangentLine(a @ R.T + t, va @ R.T),
                TangentLine(b @ R.T + t, vb @ R.T),
                a @ R.T + t,
                b @ R.T + t,
                term,
            )
            np.testing.assert_allclose(v2, v1, atol=1e-10)

    def test_coincident_points_finite(self):
        li = TangentLine(np.array([0.0, 0.0]), np.array([1.0, 0.0]))
        lj = TangentLine(np.array([0.0, 0.0]), np.array([0.0, 1.0]))
        p = np.zeros(2)
        for kind in ("absolute", "squared"):
            v = curvature_pair(li, lj, p, p, CurvatureTerm(kind))
            assert np.isfinite(v)

    def test_bad_kind_rejected(self):
        with pytest.raises(ConfigurationError):
            CurvatureTerm("cubic")


class TestAngleParam:
    @pytest.mark.parametrize("dim", [2, 3])
    def test_roundtrip(self, dim):
        rng = np.random.default_rng(5)
        v = rng.normal(size=(50, dim))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        back = angles_to_directions(directions_to_angles(v), dim)
        np.testing.assert_allclose(back, v, atol=1e-12)

    def test_always_unit(self):
        rng = np.random.default_rng(6)
        ang = rng.uniform(-4, 4, size=(30, 2))
        v = angles_to_directions(ang, 3)
        np.testing.assert_allclose(np.linalg.norm(v, axis=-1), 1.0, atol=1e-12)
