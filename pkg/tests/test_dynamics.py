import cmath

import numpy as np
import pytest

from artifact.domains import sample_interior
from artifact.dynamics import (BOUNDARY, COMPACT, UNDETERMINED, caltrop_product, classify_orbit,
                               common_limit_check, disc_mobius, disc_oracle_orbit, distance_blowup_check,
                               elliptic_disc_map, hyperbolic_disc_map, iterate, karlsson_subsequence_check,
                               parabolic_disc_map, q_conjugate, run_orbit)
from artifact.errors import ConstructionError, DomainError, PreconditionError

HALF = np.array([[1, 0], [0, 2]], dtype=complex)


class TestDiscMaps:
    def test_contraction_to_centre_is_compact(self):
        orb = run_orbit(disc_mobius(HALF, audit_samples=200), 0.9 + 0j, 100)
        assert orb.classification.label == COMPACT
        assert orb.classification.xi is None

    def test_affine_pull_to_one(self):
        orb = run_orbit(disc_mobius(hyperbolic_disc_map(), audit_samples=200), 0j, 100)
        assert orb.classification.label == BOUNDARY
        assert orb.classification.xi == pytest.approx(1.0, abs=1e-6)

    def test_rotation_is_compact(self):
        rot = np.array([[cmath.exp(0.5j), 0], [0, 1]])
        orb = run_orbit(disc_mobius(rot, audit_samples=200), 0.5 + 0j, 100)
        assert orb.classification.label == COMPACT
        np.testing.assert_allclose(orb.deltas, 0.5, atol=1e-12)

    def test_short_orbit_undetermined(self):
        orb = run_orbit(disc_mobius(HALF, audit_samples=200), 0.5 + 0j, 10)
        assert orb.classification.label == UNDETERMINED

    def test_map_leaving_disc_rejected(self):
        with pytest.raises(ConstructionError):
            disc_mobius(np.array([[2, 0], [0, 1]]), audit_samples=200)

    def test_start_must_be_interior(self):
        with pytest.raises(DomainError):
            iterate(disc_mobius(HALF, audit_samples=10), 1.5 + 0j, 5)

    def test_oracle_agrees_with_double_precision(self):
        M = parabolic_disc_map(10.0)
        F = disc_mobius(M, audit_samples=200)
        fast = iterate(F, 0.2 + 0.1j, 200)
        slow = disc_oracle_orbit(M, 0.2 + 0.1j, 200)
        np.testing.assert_allclose(fast.points, slow.points, atol=1e-12)

    @pytest.mark.parametrize("M", [hyperbolic_disc_map(), parabolic_disc_map(3.0),
                                   elliptic_disc_map(0.3 + 0.2j, 1.0)])
    def test_schwarz_pick_contraction(self, disc, M):
        F = disc_mobius(M, audit_samples=100)
        rng = np.random.default_rng(4)
        z = 0.95 * np.sqrt(rng.uniform(0, 1, 40)) * np.exp(2j * np.pi * rng.uniform(0, 1, 40))
        w = 0.95 * np.sqrt(rng.uniform(0, 1, 40)) * np.exp(2j * np.pi * rng.uniform(0, 1, 40))
        for a, b in zip(z, w):
            assert disc.exact_distance(F(a), F(b)) <= disc.exact_distance(a, b) + 1e-12


class TestCommonLimit:
    @pytest.fixture(scope="class")
    @staticmethod
    def starts():
        rng = np.random.default_rng(11)
        return list(0.9 * np.sqrt(rng.uniform(0, 1, 10)) * np.exp(2j * np.pi * rng.uniform(0, 1, 10)))

    def test_hyperbolic_common(self, starts):
        rep = common_limit_check(disc_mobius(hyperbolic_disc_map(), audit_samples=200), starts, 200)
        assert set(rep.labels) == {BOUNDARY}
        assert rep.common and rep.max_separation < 1e-3

    def test_elliptic_compact(self, starts):
        rep = common_limit_check(disc_mobius(elliptic_disc_map(0.2j, 1.0), audit_samples=200), starts, 200)
        assert set(rep.labels) == {COMPACT}
        assert not rep.mixed

    def test_needs_two_starts(self):
        with pytest.raises(PreconditionError):
            common_limit_check(disc_mobius(HALF, audit_samples=10), [0j], 100)


class TestChainConjugate:
    @pytest.fixture(scope="class")
    @staticmethod
    def hyperbolic(Q):
        return q_conjugate(Q, hyperbolic_disc_map(), audit_samples=300)

    def test_audit_recorded(self, hyperbolic):
        assert hyperbolic.invariance_check["failures"] == 0
        assert hyperbolic.invariance_check["samples"] == 300

    def test_orbit_matches_disc_oracle(self, Q, hyperbolic):
        start = complex(sample_interior(Q, (1e-2, 0.3), 1, seed=3).points[0])
        orb = run_orbit(hyperbolic, start, 300)
        assert orb.classification.label == BOUNDARY
        # the attracting disc fixed point w = 1 corresponds to the tip
        assert abs(orb.classification.xi) < 1e-3

    def test_requires_chain_domain(self, disc):
        with pytest.raises(PreconditionError):
            q_conjugate(disc, HALF)


class TestDistanceChecks:
    def test_real_axis_blowup(self, Q):
        seq = [0.3 * 2.0 ** -k + 0j for k in range(1, 12)]
        rep = distance_blowup_check(Q, 0.3 + 0j, [seq])
        assert rep.sequences[0]["growth"] >= 5
        assert rep.passed
        assert np.all(np.diff(rep.sequences[0]["lower"]) > 0)

    def test_constant_sequence_rejected(self, Q):
        with pytest.raises(PreconditionError):
            distance_blowup_check(Q, 0.3 + 0j, [[0.1 + 0j] * 5])

    def test_karlsson_trivial(self):
        res = karlsson_subsequence_check(disc_mobius(HALF, audit_samples=10), 0.5 + 0j, 1)
        assert res["label"] == "TRIVIAL"

    def test_karlsson_disc_match(self):
        res = karlsson_subsequence_check(disc_mobius(hyperbolic_disc_map(), audit_samples=100), 0j, 100)
        assert res["label"] == "BLOWING-UP-LIMIT-MATCH"

    def test_karlsson_fixed_point(self):
        res = karlsson_subsequence_check(disc_mobius(HALF, audit_samples=100), 0j, 100)
        assert res["label"] == "NOT-BLOWING-UP"


def test_caltrop_product_invariant(caltrop):
    F = caltrop_product(caltrop, 0.5, 0.9, 0.8, audit_samples=500)
    assert F.invariance_check["failures"] == 0
    start = sample_interior(caltrop, (1e-2, 0.3), 1, seed=2).points[0]
    orb = run_orbit(F, start, 100)
    assert orb.classification.label == COMPACT


def test_classify_rejects_halted_orbit():
    F = disc_mobius(HALF, audit_samples=10)
    orb = iterate(F, 0.5 + 0j, 60)
    halted = type(orb)(orb.start, orb.points, orb.deltas, halted=True)
    assert classify_orbit(halted).label == UNDETERMINED
