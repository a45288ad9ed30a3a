import numpy as np
import pytest

from artifact.conformal import (MapChain, compose_stagewise, cusp_exponent_check, kobayashi_distance_Q,
                                kobayashi_distance_Q_stagewise, kobayashi_metric_Q, phi_forward, phi_inverse,
                                poincare_distance, real_axis_distance_from_base)
from artifact.domains import sample_interior
from artifact.errors import PreconditionError


def test_base_point_maps_to_zero(chain):
    assert abs(phi_forward(chain, chain.base_point)) <= 1e-12
    assert phi_inverse(chain, 0.0) == pytest.approx(chain.base_point, rel=1e-12)


def test_real_trace(chain):
    x = np.linspace(0.01, chain.base_point * 0.999, 50)
    w = phi_forward(chain, x)
    assert np.all((w.real > 0) & (w.real < 1))
    assert np.all(np.abs(w.imag) < 1e-12)
    assert np.all(np.diff(w.real) < 0)


def test_round_trips(chain):
    w = 0.3 + 0.1j
    assert abs(phi_forward(chain, phi_inverse(chain, w)) - w) <= 1e-10
    z = chain.base_point / 2
    assert abs(phi_inverse(chain, phi_forward(chain, z)) - z) <= 1e-10


def test_inverse_on_circle(chain):
    with pytest.raises(PreconditionError):
        phi_inverse(chain, 1.0)


def test_poincare_values():
    assert poincare_distance(0, 0) == 0
    assert poincare_distance(0, 0.5) == pytest.approx(0.5 * np.log(3), rel=1e-15)
    rng = np.random.default_rng(0)
    z = 0.9 * (rng.uniform(-1, 1, 50) + 1j * rng.uniform(-1, 1, 50)) / np.sqrt(2)
    w = z[::-1]
    np.testing.assert_allclose(poincare_distance(z, w), poincare_distance(w, z), rtol=0, atol=1e-15)


def test_real_axis_formula(chain):
    x = np.geomspace(0.02, chain.base_point * 0.9, 30)
    phi = phi_forward(chain, x).real
    expected = 0.5 * np.log((1 + phi) / (1 - phi))
    np.testing.assert_allclose(kobayashi_distance_Q(chain, chain.base_point, x), expected, rtol=1e-9)
    np.testing.assert_allclose(real_axis_distance_from_base(chain, x), expected, rtol=1e-9)
    # closer to the tip the disc form saturates; the strip routines still agree
    x = np.geomspace(1e-8, 0.02, 30)
    np.testing.assert_allclose(kobayashi_distance_Q(chain, chain.base_point, x),
                               real_axis_distance_from_base(chain, x), rtol=1e-12)


def test_identity_pair(chain):
    assert kobayashi_distance_Q(chain, chain.base_point, chain.base_point) == 0


@pytest.mark.parametrize("params", [(2, 1, 1), (3, 2, 1), (4, 1, 0.5)])
def test_stagewise_agreement(params, Q):
    ch = MapChain(*params)
    from artifact.domains import CuspModelDomain

    dom = Q if params == (2, 1, 1) else CuspModelDomain(*params)
    pts = sample_interior(dom, (1e-3, 0.2), 100, seed=1).points
    z, w = pts[:50], pts[50:]
    np.testing.assert_allclose(kobayashi_distance_Q(ch, z, w), kobayashi_distance_Q_stagewise(ch, z, w),
                               rtol=0, atol=1e-10)
    np.testing.assert_allclose(compose_stagewise(ch, z), phi_forward(ch, z), atol=1e-10)


def test_metric_homogeneity_and_finite_difference(Q, chain):
    z = sample_interior(Q, (1e-3, 0.1), 10, seed=4).points
    v = np.exp(1j * np.linspace(0, 3, 10))
    k1 = kobayashi_metric_Q(chain, z, v)
    np.testing.assert_allclose(kobayashi_metric_Q(chain, z, 2 * v), 2 * k1, rtol=1e-12)
    assert np.all(kobayashi_metric_Q(chain, z, 0 * v) == 0)
    t = 1e-5 * np.min(Q.boundary_distance(z))
    fd = kobayashi_distance_Q(chain, z, z + t * v) / t
    np.testing.assert_allclose(fd, k1, rtol=1e-2)


@pytest.mark.parametrize("alpha,p", [(2, 1.5), (3, 4 / 3), (4, 1.25)])
def test_cusp_exponent(alpha, p):
    rep = cusp_exponent_check(MapChain(alpha, 1.0, 1.0 if alpha < 4 else 0.5))
    assert abs(rep["fitted_exponent"] - p) <= 0.02
    assert rep["re_range"][0] > 0


def test_branch_condition():
    with pytest.raises(PreconditionError):
        MapChain(8.0, 1.0, 2.0)


def test_extended_precision_stagewise_reference(Q, chain):
    pts = sample_interior(Q, (1e-3, 0.2), 40, seed=9).points
    z, w = pts[:20], pts[20:]
    ref = kobayashi_distance_Q_stagewise(chain, z, w, dps=40)
    np.testing.assert_allclose(kobayashi_distance_Q(chain, z, w), ref, rtol=0, atol=1e-12)
