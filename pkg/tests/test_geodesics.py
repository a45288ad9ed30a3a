import math

import numpy as np
import pytest

from artifact.distance_estimators import GridSpec, PathSample, distance_interval
from artifact.domains import Ball, Disc
from artifact.errors import DomainError, PreconditionError
from artifact.geodesics import (certify_almost_geodesic, disc_geodesic, lipschitz_check, near_geodesic,
                                quasi_triangle_check, visibility_experiment)


class TestDiscGeodesic:
    def test_radial_segment(self):
        path = disc_geodesic(0j, 0.5 + 0j, 11)
        assert path.times[-1] == pytest.approx(math.atanh(0.5), rel=1e-14)
        np.testing.assert_allclose(path.points[:, 0].real, np.tanh(path.times), atol=1e-15)
        assert np.all(path.points[:, 0].imag == 0)

    def test_endpoints_general(self):
        z, w = 0.3 + 0.2j, -0.4 + 0.5j
        path = disc_geodesic(z, w)
        assert path.points[0, 0] == pytest.approx(z, abs=1e-14)
        assert path.points[-1, 0] == pytest.approx(w, abs=1e-14)

    def test_scaled_disc(self):
        path = disc_geodesic(1.0 + 0j, 1.5 + 0j, 5, center=1.0, radius=2.0)
        assert path.times[-1] == pytest.approx(math.atanh(0.25), rel=1e-14)


class TestNearGeodesic:
    def test_chain_real_path(self, Q):
        path = near_geodesic(Q, 0.3 + 0j, 0.05 + 0j, n_points=21)
        assert path.source == "exact(chain)"
        assert np.max(np.abs(path.points[:, 0].imag)) < 1e-10
        assert path.points[0, 0] == 0.3 and path.points[-1, 0] == 0.05
        assert np.all(Q.contains(path.domain_points()))
        d = distance_interval(Q, 0.3 + 0j, 0.05 + 0j, use_exact=True)
        assert path.length == pytest.approx(d.lower, rel=1e-9)

    def test_trivial(self, disc):
        path = near_geodesic(disc, 0.2j, 0.2j)
        assert len(path) == 1 and path.source == "trivial"

    def test_exterior_endpoint(self, disc):
        with pytest.raises(DomainError):
            near_geodesic(disc, 0j, 1.5 + 0j)

    def test_graph_fallback(self):
        ball = Ball(2)
        path = near_geodesic(ball, np.array([0, 0]), np.array([0.5, 0.2j]), GridSpec(spacing=0.25))
        assert path.dimension == 2 and len(path) >= 2


class TestLipschitz:
    def test_half_speed(self):
        path = PathSample(np.array([0.0, 2.0]), np.array([[0j], [1 + 0j]]))
        assert lipschitz_check(path) == pytest.approx(0.5)

    def test_constant(self):
        path = PathSample(np.array([0.0, 1.0, 2.0]), np.full((3, 1), 0.1 + 0j))
        assert lipschitz_check(path) == 0.0

    def test_needs_two_nodes(self):
        with pytest.raises(PreconditionError):
            lipschitz_check(PathSample(np.zeros(1), np.zeros((1, 1))))


class TestCertificate:
    def test_exact_geodesic_valid(self, disc):
        cert = certify_almost_geodesic(disc, disc_geodesic(-0.6 + 0.1j, 0.7 - 0.2j, 41), 1.0, 0.0)
        assert cert.status == "VALID"

    def test_dilated_time_invalid(self, disc):
        path = disc_geodesic(-0.6 + 0.1j, 0.7 - 0.2j, 41)
        fast = PathSample(2 * path.times, path.points, path.source)
        cert = certify_almost_geodesic(disc, fast, 1.0, 0.0)
        assert cert.status == "INVALID" and cert.proven_violations > 0

    def test_bad_parameters(self, disc):
        with pytest.raises(PreconditionError):
            certify_almost_geodesic(disc, disc_geodesic(0j, 0.5 + 0j), 0.5, 0.0)

    def test_chain_geodesic_valid(self, Q):
        path = near_geodesic(Q, 0.3 + 0j, 0.01 + 0j, n_points=31)
        assert certify_almost_geodesic(Q, path, 1.0, 1e-6).status == "VALID"


def test_quasi_triangle_on_geodesic(disc):
    res = quasi_triangle_check(disc, disc_geodesic(-0.5j, 0.8 + 0j, 31), 0.0)
    assert res["violations"] == 0
    assert res["max_excess"] <= 1e-9


class TestVisibility:
    def test_overlapping_neighbourhoods(self, disc):
        with pytest.raises(PreconditionError):
            visibility_experiment(disc, 1 + 0j, 1j, neighborhood_radii=(1.0, 1.0))

    def test_planar_only(self):
        with pytest.raises(PreconditionError):
            visibility_experiment(Ball(2), 1 + 0j, -1 + 0j)

    def test_disc_depth_stable(self, disc):
        rep = visibility_experiment(disc, 1 + 0j, -1 + 0j, scales=(1e-2, 1e-3, 1e-4), pair_count=2)
        assert rep.all_hit
        # geodesics between nearly antipodal points pass close to the centre
        assert min(rep.per_scale_min_depth) > 0.9
