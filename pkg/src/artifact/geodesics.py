"""Near-geodesic paths, almost-geodesic certificates and visibility experiments.

Exact geodesics are available on discs and on the chain domains T and Q,
where the geodesic is pulled back from the unit disc.  Near the cusp tip
the disc images of points sit within about exp(-2 Im zeta) of the unit
circle, so that leg is done in mpmath with a working precision that grows
with Im zeta.  Everywhere else a graph shortest path is returned.
"""

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import mpmath
import numpy as np

from .distance_estimators import (GridSpec, PathSample, _dom, _rows, distance_interval,
                                  distance_upper_graph)
from .domains import Disc, Domain, _ChainDomain
from .errors import DomainError, InversionError, PreconditionError
from .metric_estimators import metric_upper_disc

DEFAULT_PATH_POINTS = 201


# ------------------------------------------------------------------ geodesics
def disc_geodesic(z, w, n_points: int = DEFAULT_PATH_POINTS, center=0j, radius: float = 1.0) -> PathSample:
    """Unit-speed geodesic of the disc D(center, radius) from z to w."""
    a = (complex(z) - center) / radius
    b = (complex(w) - center) / radius
    q = (b - a) / (1 - np.conj(a) * b)
    d = float(np.arctanh(abs(q)))
    s = np.linspace(0.0, d, n_points if d > 0 else 1)
    direction = q / abs(q) if abs(q) > 0 else 1.0
    v = direction * np.tanh(s)
    pts = (v + a) / (1 + np.conj(a) * v)
    return PathSample(s, center + radius * pts[:, None], "exact(disc)", 1)


def _chain_geodesic(chain, z, w, n_points=DEFAULT_PATH_POINTS, times=None):
    """Geodesic of Q (or T) pulled back from the disc through sin and the Cayley map.

    Evaluated at n_points equally spaced arclength times, or at the given
    times (clipped to [0, length]).
    """
    zeta = np.asarray(chain.half_strip(np.array([z, w], dtype=complex)))
    y_max = float(np.max(zeta.imag))
    dps = 30 + int(math.ceil(2 * y_max / math.log(10)))
    with mpmath.workdps(dps):
        I = mpmath.mpc(0, 1)

        def to_disc(zt):
            u = mpmath.sin(mpmath.mpc(zt.real, zt.imag))
            return (u - I) / (u + I)

        a, b = to_disc(zeta[0]), to_disc(zeta[1])
        q = (b - a) / (1 - mpmath.conj(a) * b)
        d = mpmath.atanh(abs(q))
        direction = q / abs(q) if abs(q) > 0 else mpmath.mpf(1)
        length = float(d)
        if times is None:
            times = np.linspace(0.0, length, n_points if length > 0 else 1)
        else:
            times = np.clip(np.asarray(times, dtype=float), 0.0, length)
        out = np.empty(times.size, dtype=complex)
        for i, s in enumerate(times):
            # exact endpoints; interior points from the disc parametrisation
            if s <= 0:
                out[i] = z
                continue
            if s >= length:
                out[i] = w
                continue
            v = direction * mpmath.tanh(mpmath.mpf(s))
            pt = (v + a) / (1 + mpmath.conj(a) * v)
            u = I * (1 + pt) / (1 - pt)
            zt = mpmath.asin(u)
            if not (zt.imag > 0 and abs(zt.real) < mpmath.pi / 2):
                raise InversionError("arcsin left the half-strip")
            out[i] = complex(chain.from_half_strip(complex(zt)))
    return PathSample(times, out[:, None], "exact(chain)", 1)


def near_geodesic(domain: Domain, z, w, grid_spec: Optional[GridSpec] = None,
                  n_points: int = DEFAULT_PATH_POINTS) -> PathSample:
    """Exact geodesic on discs and chain domains, otherwise a reparametrised graph path."""
    n = domain.dimension
    if not (np.all(domain.contains(z)) and np.all(domain.contains(w))):
        raise DomainError("endpoints must be interior")
    if np.array_equal(_rows(z, n), _rows(w, n)):
        return PathSample(np.zeros(1), _rows(z, n), "trivial", n)
    if isinstance(domain, Disc):
        return disc_geodesic(complex(z), complex(w), n_points, domain.center, domain.radius)
    if isinstance(domain, _ChainDomain):
        return _chain_geodesic(domain.chain, complex(z), complex(w), n_points)
    _, path = distance_upper_graph(domain, z, w, grid_spec)
    return path


def lipschitz_check(path: PathSample) -> float:
    """max |p_{i+1} - p_i| / (t_{i+1} - t_i) over consecutive nodes."""
    if len(path) < 2:
        raise PreconditionError("need at least two nodes")
    dt = np.diff(path.times)
    if np.any(dt <= 0):
        raise PreconditionError("path times must be strictly increasing")
    P = _rows(path.points, path.dimension)
    steps = np.linalg.norm(np.diff(P, axis=0), axis=1)
    return float(np.max(steps / dt))


# ---------------------------------------------------------- certification
@dataclass
class AlmostGeodesicCert:
    lam: float
    kappa: float
    worst_upper_margin: float
    worst_lower_margin: float
    speed_margin: float
    proven_violations: int
    pairs_checked: int
    status: str  # VALID, INVALID or UNDETERMINED
    slack: float
    details: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        return self.status == "VALID"

    def to_dict(self):
        return asdict(self)


def _pair_bounds(domain, A, B, use_exact, grid_spec):
    """Lower and upper bounds for k(A_i, B_i)."""
    n = domain.dimension
    if use_exact and domain.has_exact_distance:
        v = np.asarray(domain.exact_distance(_dom(A, n), _dom(B, n)), dtype=float).reshape(-1)
        return v, v
    lo = np.empty(len(A))
    hi = np.empty(len(A))
    for i in range(len(A)):
        iv = distance_interval(domain, _dom(A[i:i + 1], n)[0] if n == 1 else A[i],
                               _dom(B[i:i + 1], n)[0] if n == 1 else B[i], grid_spec)
        lo[i], hi[i] = iv.lower, iv.upper
    return lo, hi


def _metric_upper(domain, P, V):
    n = domain.dimension
    if domain.has_exact_distance and hasattr(domain, "exact_metric"):
        try:
            return np.asarray(domain.exact_metric(_dom(P, n), _dom(V, n)), dtype=float).reshape(-1)
        except NotImplementedError:
            pass
    return np.array([metric_upper_disc(domain, _dom(P[i:i + 1], n)[0] if n == 1 else P[i],
                                       _dom(V[i:i + 1], n)[0] if n == 1 else V[i]) for i in range(len(P))])


def certify_almost_geodesic(domain: Domain, path: PathSample, lam: float, kappa: float,
                            max_pairs: int = 4000, use_exact: bool = True,
                            grid_spec: Optional[GridSpec] = None, seed: int = 0,
                            slack: float = 1e-9) -> AlmostGeodesicCert:
    """Check both almost-geodesic conditions on sampled node pairs and edge midpoints.

    Condition (1) is certified from interval endpoints: it holds when the
    upper bound is at most lam|t-s| + kappa and the lower bound is at least
    |t-s|/lam - kappa; it is provably violated only when the lower bound
    exceeds the first or the upper bound falls below the second.
    """
    if lam < 1 or kappa < 0:
        raise PreconditionError("need lam >= 1 and kappa >= 0")
    t = path.times
    if len(t) > 1 and np.any(np.diff(t) <= 0):
        raise PreconditionError("path times must be strictly increasing")
    n = domain.dimension
    P = _rows(path.points, n)
    m = len(t)
    if m < 2:
        return AlmostGeodesicCert(lam, kappa, -kappa, -kappa, -lam, 0, 0, "VALID", slack)
    I, J = np.triu_indices(m, k=1)
    if len(I) > max_pairs:
        rng = np.random.default_rng(seed)
        keep = rng.choice(len(I), size=max_pairs, replace=False)
        # always include the endpoint pair
        keep = np.unique(np.concatenate([keep, [np.nonzero((I == 0) & (J == m - 1))[0][0]]]))
        I, J = I[keep], J[keep]
    lo, hi = _pair_bounds(domain, P[I], P[J], use_exact, grid_spec)
    dt = t[J] - t[I]
    up_cap = lam * dt + kappa
    low_floor = dt / lam - kappa
    upper_margin = hi - up_cap
    lower_margin = low_floor - lo
    proven = int(np.sum(lo > up_cap + slack) + np.sum(hi < low_floor - slack))
    # speed at edge midpoints by central differences on the node spacing
    mids = 0.5 * (P[1:] + P[:-1])
    vel = (P[1:] - P[:-1]) / np.diff(t)[:, None]
    speed = _metric_upper(domain, mids, vel)
    speed_margin = float(np.max(speed - lam))
    wu, wl = float(np.max(upper_margin)), float(np.max(lower_margin))
    if proven:
        status = "INVALID"
    elif wu <= slack and wl <= slack and speed_margin <= slack:
        status = "VALID"
    else:
        status = "UNDETERMINED"
    return AlmostGeodesicCert(lam, kappa, wu, wl, speed_margin, proven, int(len(I)), status, slack,
                              {"use_exact": bool(use_exact and domain.has_exact_distance), "seed": seed,
                               "source": path.source})


def quasi_triangle_check(domain: Domain, path: PathSample, kappa: float, use_exact: bool = True,
                         grid_spec: Optional[GridSpec] = None) -> dict:
    """k(a, s_t) + k(s_t, b) <= k(a, b) + 3 kappa + 2 slack at every node s_t of the path.

    Uses upper bounds throughout; slack is the width of the endpoint interval.
    """
    n = domain.dimension
    P = _rows(path.points, n)
    m = len(P)
    A = np.repeat(P[:1], m, axis=0)
    B = np.repeat(P[-1:], m, axis=0)
    _, h1 = _pair_bounds(domain, A, P, use_exact, grid_spec)
    _, h2 = _pair_bounds(domain, P, B, use_exact, grid_spec)
    lo_ab, hi_ab = _pair_bounds(domain, P[:1], P[-1:], use_exact, grid_spec)
    slack = float(hi_ab[0] - lo_ab[0])
    excess = h1 + h2 - (hi_ab[0] + 3 * kappa + 2 * slack)
    return {"max_excess": float(np.max(excess)), "violations": int(np.sum(excess > 1e-9)),
            "slack": slack, "kappa": kappa, "nodes": m}


# ---------------------------------------------------------------- visibility
@dataclass
class VisibilityReport:
    rho0: float
    scales: list
    per_scale_min_depth: list
    rows: list
    all_hit: bool
    variation_last3: float
    stable: bool
    xi: complex
    eta: complex
    radii: tuple
    seed: int

    def to_dict(self):
        d = asdict(self)
        d["xi"], d["eta"] = [self.xi.real, self.xi.imag], [self.eta.real, self.eta.imag]
        return d


def _path_depths(domain, path):
    pts = path.domain_points()
    inside = np.asarray(domain.contains(pts), dtype=bool)
    pts = pts[inside]
    return pts, np.asarray(domain.boundary_distance(pts), dtype=float)


def _point_at_depth(domain, anchor, direction, target, reach):
    """Point anchor + s*direction (s in (0, reach)) whose boundary distance is target."""
    lo, hi = 0.0, reach
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        p = anchor + mid * direction
        if domain.contains(p) and domain.boundary_distance(p) < target:
            lo = mid
        elif not domain.contains(p):
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(hi, 1e-300):
            break
    return anchor + hi * direction


def visibility_experiment(domain: Domain, xi, eta, neighborhood_radii=(0.25, 0.25),
                          scales=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6), pair_count: int = 3, seed: int = 0,
                          inward=None, n_points: int = DEFAULT_PATH_POINTS,
                          grid_spec: Optional[GridSpec] = None) -> VisibilityReport:
    """Geodesics between endpoints approaching two boundary points; track re-entry depth.

    Endpoints sit on inward rays from xi and eta at boundary distance
    scale * u with u uniform in [1/2, 1].  The path depth is the largest
    boundary distance along the path; the reference compact is
    {delta >= rho0} with rho0 half the largest depth seen in the first batch.
    """
    if domain.dimension != 1:
        raise PreconditionError("visibility_experiment handles planar domains")
    xi, eta = complex(xi), complex(eta)
    rv, rw = neighborhood_radii
    if xi == eta or abs(xi - eta) <= rv + rw:
        raise PreconditionError("neighbourhoods of xi and eta must be disjoint")
    if inward is None:
        # step from each boundary point toward the other one
        u = (eta - xi) / abs(eta - xi)
        inward = (u, -u)
    d_xi, d_eta = inward
    rng = np.random.default_rng(seed)
    rows = []
    per_scale = []
    for sc in scales:
        depths = []
        for _ in range(pair_count):
            z = _point_at_depth(domain, xi, d_xi, sc * rng.uniform(0.5, 1.0), rv)
            w = _point_at_depth(domain, eta, d_eta, sc * rng.uniform(0.5, 1.0), rw)
            if abs(z - xi) >= rv or abs(w - eta) >= rw:
                raise PreconditionError("endpoint left its neighbourhood; shrink the scale")
            path = near_geodesic(domain, z, w, grid_spec, n_points)
            inner, dep = _path_depths(domain, path)
            k = int(np.argmax(dep))
            if isinstance(domain, _ChainDomain) and len(path) > 2:
                # resolve the deepest stretch of a long exact geodesic
                j = int(np.argmax(np.asarray(domain.boundary_distance(path.domain_points()[1:-1])))) + 1
                fine = _chain_geodesic(domain.chain, z, w, times=np.linspace(path.times[j - 1], path.times[j + 1],
                                                                               n_points))
                fi, fd = _path_depths(domain, fine)
                if fd.size and fd.max() > dep[k]:
                    inner, dep = fi, fd
                    k = int(np.argmax(dep))
            rows.append({"scale": sc, "delta_z": float(domain.boundary_distance(z)),
                         "delta_w": float(domain.boundary_distance(w)), "length": path.length,
                         "path_depth": float(dep[k]), "deepest_point": [float(inner[k].real), float(inner[k].imag)]})
            depths.append(float(dep[k]))
        per_scale.append(min(depths))
    rho0 = 0.5 * max(r["path_depth"] for r in rows[:pair_count])
    for r in rows:
        r["compact_hit"] = r["path_depth"] >= rho0
    last = per_scale[-3:]
    variation = float((max(last) - min(last)) / max(last)) if len(last) >= 1 else 0.0
    return VisibilityReport(rho0, list(scales), per_scale, rows, all(r["compact_hit"] for r in rows), variation,
                            variation < 0.2, xi, eta, (rv, rw), seed)
