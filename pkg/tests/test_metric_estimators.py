import numpy as np
import pytest

from artifact.conformal import kobayashi_metric_Q
from artifact.domains import Ball, Disc, sample_interior
from artifact.errors import PreconditionError
from artifact.metric_estimators import (AffineDisc, CollarSpec, default_witnesses, derivative_decay_check,
                                        disc_witness, m_profile, metric_interval, metric_lower_sibony,
                                        metric_lower_strong_psc, metric_upper_disc, spike_witness)


class TestUpper:
    def test_disc_center(self, disc):
        assert metric_upper_disc(disc, 0j, 1.0) == pytest.approx(1.0, rel=1e-6)

    @pytest.mark.parametrize("v", [[1, 0], [0, 1j], [0.6, 0.8]])
    def test_ball_center(self, v):
        B = Ball(2)
        assert metric_upper_disc(B, np.zeros(2), np.array(v, dtype=complex)) == pytest.approx(1.0, rel=1e-6)

    def test_q_above_exact(self, Q, chain):
        z = sample_interior(Q, (1e-3, 0.2), 40, seed=2).points
        v = np.exp(1j * np.linspace(0, 6, 40))
        up = metric_upper_disc(Q, z, v)
        assert np.all(up >= kobayashi_metric_Q(chain, z, v) * (1 - 1e-9))

    def test_zero_vector_rejected(self, disc):
        with pytest.raises(PreconditionError):
            metric_upper_disc(disc, 0j, 0.0)

    def test_nested_discs(self):
        z, v = 0.3 + 0.1j, 1.0 + 0.5j
        small = metric_upper_disc(Disc(0j, 1.0), z, v)
        big = metric_upper_disc(Disc(0j, 1.5), z, v)
        assert big <= small


class TestLower:
    def test_sibony_zero_and_homogeneous(self, disc):
        w = disc_witness(disc)
        assert metric_lower_sibony(w, 0.3, 0.0) == 0
        assert metric_lower_sibony(w, 0.3, 2.0) == pytest.approx(2 * metric_lower_sibony(w, 0.3, 1.0))

    def test_sibony_disc_closed_form(self, disc):
        w = disc_witness(disc, alpha_S=4.0)
        z = np.linspace(0, 0.999, 50)
        val = metric_lower_sibony(w, z, np.ones(50))
        np.testing.assert_allclose(val, np.sqrt(1 / 4.0) / np.sqrt(1 - z**2), rtol=1e-14)
        assert np.all(val <= 1 / (1 - z**2))

    def test_strong_psc(self, disc):
        assert metric_lower_strong_psc(disc, 0.5, 0.0, 1.0, 0.5)[0] == 0
        d = np.array([1e-2, 1e-4, 1e-6])
        val, avail = metric_lower_strong_psc(disc, 1 - d, np.ones(3), 1.0, 0.5)
        assert np.all(avail)
        slope = np.polyfit(np.log(d), np.log(val), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.01)
        val, avail = metric_lower_strong_psc(disc, 0.0, 1.0, 1.0, 2.0)
        assert val == 0 and not avail


class TestInterval:
    def test_disc(self, disc):
        iv = metric_interval(disc, 0.5, 1.0)
        assert iv.lower <= 4 / 3 <= iv.upper

    def test_q_sandwich(self, Q, chain):
        z = sample_interior(Q, (1e-3, 0.2), 15, seed=6).points
        for zi in z:
            v = np.exp(1j * 0.7)
            iv = metric_interval(Q, zi, v)
            ex = float(kobayashi_metric_Q(chain, zi, v))
            assert iv.lower <= ex * (1 + 1e-12) and ex <= iv.upper * (1 + 1e-12)

    @pytest.mark.parametrize("x", [1e-3, 1e-2, 0.1])
    def test_caltrop_spike_point(self, caltrop, x):
        chart = caltrop.spikes[0]
        z = chart.from_chart(np.array([0, x], dtype=complex))
        v = np.array([0, 1], dtype=complex)
        iv = metric_interval(caltrop, z, v)
        d = float(caltrop.boundary_distance(z))
        b = spike_witness(caltrop).b
        assert iv.lower >= (b / 2) / np.sqrt(d)
        assert iv.upper <= 1 / d * (1 + 1e-9)
        assert iv.lower <= iv.upper

    def test_strong_psc_collar_recorded(self, disc):
        col = CollarSpec(0.5, 0.5, lambda z: np.abs(z) > 0.9)
        iv = metric_interval(disc, 0.95, 1.0, collar=col)
        assert "strong_psc" in iv.details["lowers"]
        assert iv.lower <= 1 / (1 - 0.95**2) <= iv.upper


class TestProfile:
    def test_disc_bracket(self, disc):
        r = np.array([0.1, 0.2, 0.4])
        prof = m_profile(disc, r, samples_per_r=300, seed=0)
        true = 2 * r - r**2
        assert np.all(prof.M_lower <= true * (1 + 1e-12))
        assert np.all(prof.M_upper >= true)

    def test_columns_shrink(self, caltrop):
        prof = m_profile(caltrop, [1e-4, 1e-2], samples_per_r=100, compute_lower=False)
        assert prof.M_upper[0] < prof.M_upper[1]

    def test_csv_round_trip(self, disc):
        prof = m_profile(disc, [0.1, 0.2], samples_per_r=50)
        lines = prof.to_csv().splitlines()
        assert lines[0] == "r,M_lower,M_upper,n_samples,seed"
        assert float(lines[1].split(",")[2]) == prof.M_upper[0]

    def test_bad_grid(self, disc):
        with pytest.raises(PreconditionError):
            m_profile(disc, [0.2, 0.1])


class TestDerivativeDecay:
    def test_constant_discs(self, disc):
        rep = derivative_decay_check(disc, [AffineDisc(0.3, 0.0)])
        assert rep["ok"]

    def test_disc_sequence(self, disc):
        seq = [AffineDisc(1 - 1 / nu, 1 / nu) for nu in (2, 4, 8, 16)]
        rep = derivative_decay_check(disc, seq)
        assert rep["ok"]
        for nu, row in zip((2, 4, 8, 16), rep["rows"]):
            assert row["derivative"] <= 2 / nu - 1 / nu**2

    def test_spike_rate(self, caltrop):
        chart = caltrop.spikes[0]
        seq = []
        for x in (1e-2, 1e-3, 1e-4):
            c = chart.from_chart(np.array([0, x], dtype=complex))
            r = 0.5 * float(caltrop.boundary_distance(c))
            seq.append(AffineDisc(c, np.array([0, r], dtype=complex)))
        rep = derivative_decay_check(caltrop, seq, default_witnesses(caltrop))
        assert rep["ok"]
