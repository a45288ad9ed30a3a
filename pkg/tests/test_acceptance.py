"""End-to-end acceptance checks; each prints a single PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or ``python tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest

from artifact.conformal import (MapChain, cusp_exponent_check, kobayashi_distance_Q,
                                kobayashi_distance_Q_stagewise, phi_forward, real_axis_distance_from_base)
from artifact.criteria import (GrowthBound, Verdict, general_visibility_integral_test, non_goldilocks_witness,
                               power_surrogate, visibility_integrand)
from artifact.distance_estimators import (GridSpec, PathSample, distance_interval, distance_lower_halfspace,
                                          distance_upper_graph, fit_spike_embedding, spike_anchor,
                                          spike_constants, spike_inclusion_check, spike_projection_lower)
from artifact.domains import CuspModelDomain, Disc, SpikeProfile, build_single_spike_caltrop, sample_interior
from artifact.dynamics import (BOUNDARY, COMPACT, classify_orbit, common_limit_check, disc_oracle_orbit,
                               distance_blowup_check, elliptic_disc_map, hyperbolic_disc_map, parabolic_disc_map,
                               q_conjugate)
from artifact.geodesics import (certify_almost_geodesic, disc_geodesic, near_geodesic, quasi_triangle_check,
                                visibility_experiment)
from artifact.metric_estimators import levi_chart_length, m_profile

CRITERIA = {}


def criterion(number, title):
    def register(fn):
        CRITERIA[number] = (title, fn)
        return fn
    return register


_CACHE = {}


def _caltrop():
    if "caltrop" not in _CACHE:
        _CACHE["caltrop"] = build_single_spike_caltrop(1.25, 1.0, 0.5)
    return _CACHE["caltrop"]


def _q():
    return CuspModelDomain(2.0, 1.0, 1.0)


# ---------------------------------------------------------------- 1
@criterion(1, "closed-form distance on Q matches the stage-by-stage composition")
def closed_form_vs_stagewise():
    t0 = time.perf_counter()
    worst = 0.0
    for params in [(2, 1, 1), (4, 1, 0.5), (3, 2, 1)]:
        chain = MapChain(*params)
        pts = sample_interior(CuspModelDomain(*params), (1e-3, 0.2), 2000, seed=1).points
        z, w = pts[:1000], pts[1000:]
        err = np.abs(kobayashi_distance_Q(chain, z, w) - kobayashi_distance_Q_stagewise(chain, z, w, dps=40))
        worst = max(worst, float(np.max(err)))
    elapsed = time.perf_counter() - t0
    return worst <= 1e-10 and elapsed < 5.0, f"max |diff| {worst:.2e} over 3x1000 pairs, {elapsed:.2f} s"


# ---------------------------------------------------------------- 2
@criterion(2, "tip growth bound with C fitted at o/2, and the limit constant pi/(4h)")
def tip_growth():
    chain = MapChain(2.0, 1.0, 1.0)
    o, lead = chain.base_point, math.pi / (4 * chain.h)
    x = np.geomspace(1e-8, o, 1001)[:-1]
    k = real_axis_distance_from_base(chain, x)
    C = float(real_axis_distance_from_base(chain, o / 2) - lead * (o / 2) ** (-1 / chain.alpha))
    excess = k - (C + lead * x ** (-1 / chain.alpha))
    violations = int(np.sum(excess > 1e-12))
    ratio = float(k[0] * x[0] ** (1 / chain.alpha) / lead)
    ok = violations == 0 and abs(ratio - 1) <= 0.02
    return ok, (f"{violations} violations of 1000 (worst excess {np.max(excess):.4g}, C={C:.6g}); "
                f"k x^(1/alpha) / (pi/4h) = {ratio:.5f} at x=1e-8")


# ---------------------------------------------------------------- 3
@criterion(3, "cusp exponent (1+alpha)/alpha recovered from the boundary")
def cusp_exponent():
    # h is halved for alpha = 4 so that alpha * arctan(h/a) stays below pi
    errs = {p: cusp_exponent_check(MapChain(*p))["exponent_error"] for p in [(2, 1, 1), (3, 2, 1), (4, 1, 0.5)]}
    return all(e <= 0.02 for e in errs.values()), ", ".join(f"alpha={p[0]}: err {e:.1e}" for p, e in errs.items())


# ---------------------------------------------------------------- 4
@criterion(4, "M profile on the disc brackets 2r - r^2")
def disc_m_profile():
    t0 = time.perf_counter()
    r = 0.05 * np.arange(1, 11)
    prof = m_profile(Disc(), r, samples_per_r=1000, seed=0)
    elapsed = time.perf_counter() - t0
    truth = 2 * r - r**2
    lower_ok = bool(np.all((prof.M_lower <= truth * (1 + 1e-12)) & (prof.M_lower >= 0.95 * truth)))
    upper_ok = bool(np.all(prof.M_upper >= truth * (1 - 1e-12)))
    gap = float(np.max(1 - prof.M_lower / truth))
    return lower_ok and upper_ok and elapsed < 30, (f"M_lower within {100 * gap:.2f}% below, "
                                                   f"M_upper above: {upper_ok}, {elapsed:.1f} s")


# ---------------------------------------------------------------- 5
@criterion(5, "M_upper decays like r^(1/2) on the p=1.25 caltrop")
def caltrop_m_decay():
    r = np.geomspace(1e-4, 1e-1, 7)
    prof = m_profile(_caltrop(), r, samples_per_r=200, seed=0, compute_lower=False)
    slope = float(np.polyfit(np.log(r), np.log(prof.M_upper), 1)[0])
    drop = float(prof.M_upper[-1] / prof.M_upper[0])
    return slope >= 0.48 and drop > 10, f"slope {slope:.4f}, M_upper(1e-1)/M_upper(1e-4) = {drop:.2f}"


# ---------------------------------------------------------------- 6
@criterion(6, "integral test threshold p0 < 3/2 and the logarithmic reduction")
def integral_threshold():
    verdicts = {p0: general_visibility_integral_test(power_surrogate(0.5), GrowthBound.power(p0 - 1), 0.5).verdict
                for p0 in (1.1, 1.25, 1.4, 1.6)}
    expected = {p0: Verdict.CONVERGENT if p0 < 1.5 else Verdict.DIVERGENT for p0 in verdicts}
    r = np.geomspace(1e-10, 0.5, 200)
    M = np.sqrt(r)
    f = GrowthBound.logarithmic(0.7, 3.0)
    rel = float(np.max(np.abs(visibility_integrand(M, r, f) - 3.0 * M / r) / (3.0 * M / r)))
    ok = verdicts == expected and rel <= 1e-12
    return ok, ", ".join(f"p0={p}: {v.value}" for p, v in verdicts.items()) + f"; reduction rel err {rel:.1e}"


# ---------------------------------------------------------------- 7
@criterion(7, "non-Goldilocks witness grows tenfold from x=1e-2 to 1e-6")
def witness():
    rep = non_goldilocks_witness(_caltrop(), [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    ok = rep.growth_factor >= 10 and rep.verdict == Verdict.FAIL_GOLDILOCKS
    return ok, f"growth {rep.growth_factor:.3f}, monotone {rep.monotone}, verdict {rep.verdict.value}"


# ---------------------------------------------------------------- 8
@criterion(8, "distance intervals contain the exact value; fine disc graph within 10%")
def interval_soundness():
    t0 = time.perf_counter()
    misses = 0
    disc, Q = Disc(), _q()
    rng = np.random.default_rng(0)
    zs = 0.98 * np.sqrt(rng.uniform(0, 1, (1000, 2))) * np.exp(2j * np.pi * rng.uniform(0, 1, (1000, 2)))
    for z, w in zs:
        misses += not distance_interval(disc, z, w).contains(float(disc.exact_distance(z, w)), rtol=1e-9)
    spec = GridSpec(0.04, edge_bound="maximal_ball")
    pts = sample_interior(Q, (1e-3, 0.2), 2000, seed=0).points
    for z, w in zip(pts[:1000], pts[1000:]):
        iv = distance_interval(Q, z, w, grid_spec=spec)
        misses += not iv.contains(float(Q.exact_distance(z, w)), rtol=1e-9)
    worst = 0.0
    gpts = sample_interior(disc, (0.1, 0.9), 40, seed=3).points
    for z, w in zip(gpts[:20], gpts[20:]):
        val, _ = distance_upper_graph(disc, z, w, GridSpec(0.01))
        worst = max(worst, val / float(disc.exact_distance(z, w)) - 1)
    elapsed = time.perf_counter() - t0
    ok = misses == 0 and worst <= 0.10 and elapsed < 60
    return ok, f"{misses} misses of 2000, disc graph worst excess {100 * worst:.2f}%, {elapsed:.1f} s"


# ---------------------------------------------------------------- 9
@criterion(9, "almost-geodesic certificates for exact and graph paths")
def certificates():
    disc, Q = Disc(), _q()
    o = Q.base_point
    status = {}
    dpath = disc_geodesic(-0.6 + 0.1j, 0.7 - 0.2j, 101)
    status["disc exact"] = certify_almost_geodesic(disc, dpath, 1.01, 0.01).status
    status["Q exact"] = certify_almost_geodesic(Q, near_geodesic(Q, o, 1e-4 + 0j), 1.01, 0.01).status
    fast = PathSample(2 * dpath.times, dpath.points, dpath.source)
    status["dilated"] = certify_almost_geodesic(disc, fast, 1.01, 0.01).status
    _, coarse = distance_upper_graph(Q, o, 0.05, GridSpec(0.04))
    _, fine = distance_upper_graph(Q, o, 0.05, GridSpec(0.02))
    status["graph 0.04 at (1.2,0.2)"] = certify_almost_geodesic(Q, coarse, 1.2, 0.2).status
    status["graph 0.02 at (1.1,0.1)"] = certify_almost_geodesic(Q, fine, 1.1, 0.1).status
    ok = status.pop("dilated") == "INVALID" and all(s == "VALID" for s in status.values())
    return ok, ", ".join(f"{k}: {v}" for k, v in status.items()) + ", dilated: INVALID" * ok


# ---------------------------------------------------------------- 10
@criterion(10, "geodesics between the tip and the far point re-enter a fixed compact")
def visibility():
    Q = _q()
    rep = visibility_experiment(Q, 0.0, Q.far_point)
    ok = rep.all_hit and rep.rho0 > 0 and rep.variation_last3 < 0.2
    depths = ", ".join(f"{d:.4g}" for d in rep.per_scale_min_depth)
    return ok, f"rho0 {rep.rho0:.4g}, per-scale depths [{depths}], variation {rep.variation_last3:.4f}"


# ---------------------------------------------------------------- 11
@criterion(11, "elliptic, hyperbolic and parabolic conjugates on Q classify as on the disc")
def dichotomy():
    Q = _q()
    starts = [complex(z) for z in sample_interior(Q, (1e-2, 0.3), 10, seed=1).points]
    cases = {"elliptic": (elliptic_disc_map(), COMPACT, None),
             "hyperbolic": (hyperbolic_disc_map(), BOUNDARY, 0.0),
             "parabolic": (parabolic_disc_map(10.0), BOUNDARY, Q.far_point)}
    notes, ok = [], True
    for name, (M, label, xi) in cases.items():
        rep = common_limit_check(q_conjugate(Q, M), starts, 500)
        oracle = [classify_orbit(disc_oracle_orbit(M, complex(phi_forward(Q.chain, s)), 500), Disc()).label
                  for s in starts]
        good = set(rep.labels) == {label} and rep.labels == oracle and not rep.mixed
        if label == BOUNDARY:
            good &= rep.common and rep.max_separation < 1e-3
            good &= max(abs(complex(x) - xi) for x in rep.limits) < 1e-3
        ok &= good
        notes.append(f"{name}: {label if set(rep.labels) == {label} else rep.labels}, "
                     f"sep {rep.max_separation:.1e}, oracle match {rep.labels == oracle}")
    return ok, "; ".join(notes)


# ---------------------------------------------------------------- 12
@criterion(12, "distance lower bounds blow up along five boundary sequences in the caltrop")
def blowup():
    cal = _caltrop()
    chart = cal.spikes[0]
    prof = chart.profile
    k = spike_constants(cal)
    # base point at the centre of the far cap
    z0 = chart.from_chart(np.array([0.0, prof.A], dtype=complex))
    axis = [chart.from_chart(np.array([0.0, x], dtype=complex)) for x in 0.25 * k.a_second * 10.0 ** -np.arange(8)]
    spike = distance_blowup_check(cal, z0, [axis], lambda w: spike_projection_lower(cal, z0, w, constants=k))
    beta, s = prof.cap_radius, prof.scale
    collar = []
    for theta in np.linspace(0.0, math.pi / 2, 4):
        # cap point (A + beta sin, s beta cos) and its inward normal in the meridian plane
        P = np.array([prof.A + beta * math.sin(theta), s * beta * math.cos(theta)])
        n = np.array([s * math.sin(theta), math.cos(theta)])
        n /= np.linalg.norm(n)
        seq = []
        for d in 0.25 * beta * 10.0 ** -np.arange(8):
            x, S = P - d * n
            seq.append(chart.from_chart(np.array([S, x], dtype=complex)))
        collar.append(seq)
    cap = distance_blowup_check(cal, z0, collar, lambda w: distance_lower_halfspace(cal, z0, w))
    growth = [sq["growth"] for sq in spike.sequences + cap.sequences]
    ok = spike.passed and cap.passed
    return ok, "growth factors " + ", ".join(f"{g:.2f}" for g in growth)


# ---------------------------------------------------------------- 13
@criterion(13, "superadditivity, Levi thresholds, embedding inclusion and quasi-triangle slack")
def property_suites():
    notes, hard = [], 0
    for p in (1.05, 1.25, 1.45):
        res = SpikeProfile(p, 1.0).superadditivity_check(n=2000, seed=0)
        hard += res["violations"]
    notes.append(f"superadditivity violations {hard}")
    cal = _caltrop()
    chart = cal.spikes[0]
    xs = np.linspace(0.0, chart.length, 4001)[1:-1]
    levi_min = float(np.min(0.5 - 0.5 * chart.profile.levi_quantity(xs)))
    a1 = levi_chart_length(chart)
    xa = np.linspace(0.0, a1, 4001)[1:-1]
    q_max = float(np.max(chart.profile.levi_quantity(xa)))
    levi_bad = int(levi_min < 0.25) + int(q_max > 0.5)
    hard += levi_bad
    notes.append(f"w-wbar entry min {levi_min:.4f}, max (Psi^2)''/2 on (0, A') {q_max:.4f}")
    emb = fit_spike_embedding(cal)
    w = chart.from_chart(np.array([0.0, emb.B / 4], dtype=complex))
    inc = spike_inclusion_check(cal, w, emb, n_samples=10_000)
    hard += inc["violations"]
    notes.append(f"inclusion violations {inc['violations']} of {inc['samples']}")
    Q = _q()
    tri = [quasi_triangle_check(Disc(), disc_geodesic(-0.5j, 0.8 + 0j, 51), 0.01),
           quasi_triangle_check(Q, near_geodesic(Q, Q.base_point, 1e-3 + 0j, n_points=51), 0.01)]
    hard += sum(t["violations"] for t in tri)
    notes.append("quasi-triangle violations " + str(sum(t["violations"] for t in tri)))
    return hard == 0, "; ".join(notes)


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_acceptance(number, capsys):
    title, fn = CRITERIA[number]
    passed, detail = fn()
    with capsys.disabled():
        print(f"\nACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
    assert passed, detail


if __name__ == "__main__":
    for number in sorted(CRITERIA):
        title, fn = CRITERIA[number]
        passed, detail = fn()
        print(f"ACCEPTANCE {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}", flush=True)
