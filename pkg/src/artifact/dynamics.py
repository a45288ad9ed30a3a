"""Iteration of holomorphic self-maps and the compact/boundary dichotomy for orbits.

Disc maps are Moebius transformations stored as 2x2 matrices.  Their
conjugates on the chain domains are evaluated in the upper half-plane
u = sin(zeta) with mpmath, where iterates accumulating at the boundary stay
representable; only the resulting domain points are rounded to doubles.
"""

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import mpmath
import numpy as np

from .domains import CaltropDomain, Disc, Domain, _ChainDomain, _as_points
from .errors import ConstructionError, DomainError, PreconditionError

CLUSTER_TOL = 1e-6
DELTA_FLOOR = 1e-8
TAIL_FRACTION = 0.5
MONOTONE_FRACTION = 0.8
MIN_ORBIT = 50
BOUNDARY_SLACK = 1e-12
AUDIT_SAMPLES = 10_000
WORK_DPS = 60

COMPACT = "COMPACT_ORBIT"
BOUNDARY = "BOUNDARY_CONVERGENT"
UNDETERMINED = "UNDETERMINED"

# Cayley map u -> (u - i)/(u + i) from the upper half-plane to the disc, and its inverse
_CAYLEY = np.array([[1, -1j], [1, 1j]], dtype=complex)
_CAYLEY_INV = np.array([[1j, 1j], [-1, 1]], dtype=complex)


# ------------------------------------------------------------ Moebius maps
def _normalise(M):
    M = np.asarray(M, dtype=complex)
    det = M[0, 0] * M[1, 1] - M[0, 1] * M[1, 0]
    if abs(det) == 0:
        raise PreconditionError("singular Moebius matrix")
    return M / np.sqrt(det)


def _real_if_close(M, tol=1e-12):
    """Remove rounding noise from matrices that are real up to a unit phase."""
    scale = np.abs(M).max()
    for phase in (1, -1j):
        P = M * phase
        if np.abs(P.imag).max() <= tol * scale:
            return P.real.astype(complex)
    return M


def hyperbolic_disc_map():
    """z -> (1 + z)/2, Denjoy-Wolff point 1."""
    return _normalise([[1, 1], [0, 2]])


def parabolic_disc_map(b: float = 10.0):
    """Automorphism with a double fixed point at -1: u -> u/(1 - b u) in the upper half-plane."""
    if b <= 0:
        raise PreconditionError("translation b must be positive")
    U = np.array([[1, 0], [-b, 1]], dtype=complex)
    return _normalise(_CAYLEY @ U @ _CAYLEY_INV)


def elliptic_disc_map(center: complex = 0j, theta: float = 1.0):
    """Rotation by theta about an interior point."""
    p = complex(center)
    if abs(p) >= 1:
        raise PreconditionError("rotation centre must be interior")
    phi = np.array([[1, -p], [-np.conj(p), 1]], dtype=complex)
    phi_inv = np.array([[1, p], [np.conj(p), 1]], dtype=complex)
    R = np.array([[np.exp(1j * theta), 0], [0, 1]], dtype=complex)
    return _normalise(phi_inv @ R @ phi)


def _mp_mobius(M, z):
    a, b, c, d = (mpmath.mpc(complex(x)) for x in M.ravel())
    return (a * z + b) / (c * z + d)


def _mp_mobius_upper(M, u):
    """Moebius image of u in the upper half-plane with the imaginary part expanded.

    With det M = 1, Im((a u + b)/(c u + d)) equals
    (Im(a conj c)|u|^2 + Im(a conj d u + b conj c conj u) + Im(b conj d)) / |c u + d|^2,
    which avoids the cancellation that swamps Im u when |u| is huge.
    """
    a, b, c, d = (mpmath.mpc(complex(x)) for x in M.ravel())
    den = c * u + d
    num = (a * mpmath.conj(c)).imag * abs(u) ** 2 + (a * mpmath.conj(d) * u + b * mpmath.conj(c) * mpmath.conj(u)).imag \
        + (b * mpmath.conj(d)).imag
    w = (a * u + b) / den
    return mpmath.mpc(w.real, num / abs(den) ** 2)


# ------------------------------------------------------------ self-maps
@dataclass
class SelfMapSpec:
    """A holomorphic self-map with the record of its sampled invariance audit."""

    kind: str
    domain: Domain
    apply: Callable
    description: dict
    invariance_check: dict = field(default_factory=dict)
    disc_matrix: Optional[np.ndarray] = None

    def __call__(self, z):
        return self.apply(z)


def _audit(domain, fn, points, seed):
    bad = 0
    for p in points:
        try:
            q = fn(p)
        except (ArithmeticError, ValueError):
            bad += 1
            continue
        if not np.all(domain.contains(q)):
            bad += 1
    rec = {"samples": len(points), "failures": bad, "seed": seed}
    if bad:
        raise ConstructionError(f"map leaves the domain at {bad} of {len(points)} audit samples")
    return rec


def disc_mobius(M, domain: Optional[Disc] = None, audit_samples: int = AUDIT_SAMPLES, seed: int = 0) -> SelfMapSpec:
    """Moebius self-map of the unit disc (evaluated in mpmath, rounded on output)."""
    domain = domain or Disc()
    if domain.radius != 1.0 or domain.center != 0:
        raise PreconditionError("disc maps act on the unit disc")
    M = _normalise(M)

    def apply(z):
        with mpmath.workdps(WORK_DPS):
            return complex(_mp_mobius(M, mpmath.mpc(complex(z))))

    rng = np.random.default_rng(seed)
    r = np.sqrt(rng.uniform(0, 1, audit_samples)) * (1 - 1e-9)
    pts = r * np.exp(2j * np.pi * rng.uniform(0, 1, audit_samples))
    # vectorised audit in double precision
    img = (M[0, 0] * pts + M[0, 1]) / (M[1, 0] * pts + M[1, 1])
    bad = int(np.sum(np.abs(img) >= 1 + BOUNDARY_SLACK))
    if bad:
        raise ConstructionError(f"map leaves the disc at {bad} audit samples")
    return SelfMapSpec("disc_mobius", domain, apply, {"matrix": M.tolist()},
                       {"samples": audit_samples, "failures": 0, "seed": seed}, M)


def q_conjugate(domain: _ChainDomain, M, audit_samples: int = AUDIT_SAMPLES, seed: int = 0) -> SelfMapSpec:
    """F = Phi^-1 o g o Phi on a chain domain, with g the disc Moebius map M."""
    if not isinstance(domain, _ChainDomain):
        raise PreconditionError("q_conjugate needs a chain domain (T or Q)")
    M = _normalise(M)
    MU = _real_if_close(_normalise(_CAYLEY_INV @ M @ _CAYLEY))
    chain = domain.chain

    def apply(z):
        zeta = complex(chain.half_strip(complex(z)))
        with mpmath.workdps(WORK_DPS):
            u2 = _mp_mobius_upper(MU, mpmath.sin(mpmath.mpc(zeta)))
            if not u2.imag > 0:
                raise DomainError("conjugated map left the upper half-plane")
            return complex(chain.from_half_strip(complex(mpmath.asin(u2))))

    from .distance_estimators import sample_q_points

    rng = np.random.default_rng(seed)
    pts = sample_q_points(chain, audit_samples, int(rng.integers(0, 2**31 - 1)), t_max=1e2)
    # invariance is decided in the upper half-plane, where Im u > 0 is exact membership;
    # images rounded onto the boundary of Q are only counted
    bad, rounded = 0, 0
    for p in pts:
        try:
            q = apply(p)
        except DomainError:
            bad += 1
            continue
        rounded += not bool(domain.contains(q))
    if bad:
        raise ConstructionError(f"conjugated map leaves the domain at {bad} audit samples")
    audit = {"samples": audit_samples, "failures": 0, "rounded_to_boundary": rounded, "seed": seed}
    return SelfMapSpec("q_conjugate", domain, apply, {"disc_matrix": M.tolist(), "alpha": chain.alpha,
                                                       "a": chain.a, "h": chain.h},
                       audit, M)


def caltrop_product(caltrop: CaltropDomain, lam: complex, mu: float, center: float,
                    j: int = 0, audit_samples: int = AUDIT_SAMPLES, seed: int = 0) -> SelfMapSpec:
    """In spike chart coordinates: (z', z_n) -> (lam z', center + mu (z_n - center))."""
    chart = caltrop.spikes[j]
    n = caltrop.dimension

    def apply(z):
        zc = chart.to_chart(_as_points(z, n))
        out = np.array(zc, dtype=complex)
        out[..., :-1] = lam * zc[..., :-1]
        out[..., -1] = center + mu * (zc[..., -1] - center)
        return chart.from_chart(out)

    from .domains import sample_interior

    pts = sample_interior(caltrop, (1e-6, 0.5), audit_samples, seed=seed).points
    img = apply(pts)
    bad = int(np.sum(~np.asarray(caltrop.contains(img))))
    if bad:
        raise ConstructionError(f"product map leaves the caltrop at {bad} audit samples")
    return SelfMapSpec("caltrop_product", caltrop, apply, {"lam": complex(lam), "mu": mu, "center": center},
                       {"samples": audit_samples, "failures": 0, "seed": seed})


# ------------------------------------------------------------ orbits
@dataclass
class Classification:
    label: str
    xi: Optional[complex]
    details: dict = field(default_factory=dict)


@dataclass
class OrbitRecord:
    start: complex
    points: np.ndarray
    deltas: np.ndarray
    halted: bool = False
    diagnostics: dict = field(default_factory=dict)
    classification: Optional[Classification] = None

    def to_rows(self):
        return [(i, self.points[i], float(self.deltas[i])) for i in range(len(self.points))]


def _signed_depth(domain, z):
    if np.all(domain.contains(z)):
        return float(np.min(domain.boundary_distance(z)))
    if isinstance(domain, Disc):
        return float(domain.radius - abs(complex(z) - domain.center))
    if isinstance(domain, _ChainDomain):
        d, _ = domain.boundary.query(np.atleast_1d(complex(z)))
        return -float(d[0])
    return -np.inf


def iterate(F: SelfMapSpec, z0, N: int, slack: float = BOUNDARY_SLACK) -> OrbitRecord:
    """Orbit z0, F(z0), ..., F^N(z0) with membership checked at every step."""
    dom = F.domain
    if N < 1:
        raise PreconditionError("N must be at least 1")
    if not np.all(dom.contains(z0)):
        raise DomainError("start point must be interior")
    pts = [z0]
    z = z0
    halted = {}
    for k in range(N):
        z = F(z)
        if not np.all(dom.contains(z)):
            d = _signed_depth(dom, z)
            if d < -slack:
                halted = {"step": k + 1, "point": z, "depth": d, "slack": slack}
                break
        pts.append(z)
    P = np.array(pts)
    inside = np.asarray(dom.contains(P))
    deltas = np.zeros(len(P))
    if inside.any():
        dd = np.asarray(dom.boundary_distance(P[inside]))
        deltas[inside] = dd if dd.ndim == 1 else dd.min(axis=-1)
    return OrbitRecord(z0, P, deltas, bool(halted), halted)


def disc_oracle_orbit(M, w0, N: int, dps: int = 200) -> OrbitRecord:
    """Orbit of the disc map M in mpmath; depths 1 - |w| are taken before rounding."""
    M = _normalise(M)
    pts, deltas = [complex(w0)], [1 - abs(complex(w0))]
    with mpmath.workdps(dps):
        w = mpmath.mpc(complex(w0))
        for _ in range(N):
            w = _mp_mobius(M, w)
            pts.append(complex(w))
            deltas.append(float(1 - abs(w)))
    return OrbitRecord(complex(w0), np.array(pts), np.array(deltas))


def classify_orbit(orbit: OrbitRecord, domain: Optional[Domain] = None, tail_fraction: float = TAIL_FRACTION,
                   cluster_tol: float = CLUSTER_TOL, delta_floor: float = DELTA_FLOOR,
                   monotone_fraction: float = MONOTONE_FRACTION) -> Classification:
    """COMPACT_ORBIT, BOUNDARY_CONVERGENT (with the limit point) or UNDETERMINED.

    Compact: the tail depths stay above max(delta_floor, half the smallest
    head depth).  Boundary: tail depths nonincreasing on at least
    monotone_fraction of the steps, final depth below cluster_tol, and
    shrinking increments; the limit is the nearest boundary point of the
    final iterate.
    """
    n = len(orbit.points)
    thresholds = {"tail_fraction": tail_fraction, "cluster_tol": cluster_tol, "delta_floor": delta_floor,
                  "monotone_fraction": monotone_fraction, "min_length": MIN_ORBIT}
    if orbit.halted or n < MIN_ORBIT:
        return Classification(UNDETERMINED, None, {"reason": "halted" if orbit.halted else "orbit too short",
                                                   **thresholds})
    k = int(n * (1 - tail_fraction))
    head, tail = orbit.deltas[:k], orbit.deltas[k:]
    pts_tail = orbit.points[k:]
    if tail.min() >= max(delta_floor, 0.5 * head.min()):
        diam = float(np.max(np.abs(pts_tail[:, None] - pts_tail[None, :]))) if np.ndim(pts_tail[0]) == 0 else \
            float(np.max(np.linalg.norm(pts_tail[:, None] - pts_tail[None, :], axis=-1)))
        return Classification(COMPACT, None, {"tail_min_depth": float(tail.min()), "tail_diameter": diam,
                                              **thresholds})
    steps = np.diff(tail)
    mono = float(np.mean(steps <= 0)) if steps.size else 0.0
    inc = np.abs(np.diff(pts_tail, axis=0)).reshape(len(pts_tail) - 1, -1).max(axis=1)
    shrinking = bool(inc[-1] <= inc[0] * (1 + 1e-12))
    if mono >= monotone_fraction and tail[-1] <= cluster_tol and shrinking:
        last = orbit.points[-1]
        if domain is not None and tail[-1] > 0:
            xi = domain.nearest_boundary_point(last)
            xi = complex(xi) if np.ndim(xi) == 0 else xi
        else:
            xi = last
        return Classification(BOUNDARY, xi, {"final_depth": float(tail[-1]), "monotone_fraction": mono,
                                             **thresholds})
    return Classification(UNDETERMINED, None, {"final_depth": float(tail[-1]), "monotone_fraction": mono,
                                               "shrinking": shrinking, **thresholds})


def run_orbit(F: SelfMapSpec, z0, N: int, **kw) -> OrbitRecord:
    orb = iterate(F, z0, N)
    return replace(orb, classification=classify_orbit(orb, F.domain, **kw))


@dataclass
class CommonLimitReport:
    labels: list
    limits: list
    max_separation: float
    common: bool
    mixed: bool
    N: int

    def to_dict(self):
        d = asdict(self)
        d["limits"] = [None if x is None else [complex(x).real, complex(x).imag] for x in self.limits]
        return d


def common_limit_check(F: SelfMapSpec, starts, N: int, tol: float = 1e-3, **kw) -> CommonLimitReport:
    """Iterate all starts; boundary limits must coincide within tol."""
    starts = list(starts)
    if len(starts) < 2:
        raise PreconditionError("need at least two starts")
    orbits = [run_orbit(F, s, N, **kw) for s in starts]
    labels = [o.classification.label for o in orbits]
    limits = [o.classification.xi for o in orbits]
    mixed = len(set(labels)) > 1
    sep = 0.0
    if all(lab == BOUNDARY for lab in labels):
        L = np.array([np.atleast_1d(np.asarray(x, dtype=complex)) for x in limits])
        sep = float(np.max(np.linalg.norm(L[:, None] - L[None, :], axis=-1)))
    common = (not mixed) and sep < tol
    return CommonLimitReport(labels, limits, sep, common, mixed, N)


# ------------------------------------------------------------ distance checks
@dataclass
class BlowupReport:
    sequences: list
    passed: bool

    def to_dict(self):
        return asdict(self)


def distance_blowup_check(domain: Domain, z0, boundary_sequences, lower_fn: Optional[Callable] = None,
                          increase_fraction: float = 0.8, growth: float = 5.0) -> BlowupReport:
    """Lower bounds k_lower(z0, w_nu) along sequences tending to the boundary must blow up."""
    from .distance_estimators import distance_lower

    lower_fn = lower_fn or (lambda w: distance_lower(domain, z0, w))
    out = []
    for seq in boundary_sequences:
        seq = list(seq)
        for w in seq:
            if not np.all(domain.contains(w)):
                raise DomainError("sequence point is not interior")
        d = np.array([float(np.min(domain.boundary_distance(w))) for w in seq])
        if len(seq) < 2 or d[-1] >= 0.5 * d[0]:
            raise PreconditionError("sequence does not approach the boundary")
        vals = np.array([float(lower_fn(w)) for w in seq])
        frac = float(np.mean(np.diff(vals) > 0))
        ok = frac >= increase_fraction and vals[-1] >= growth * vals[0]
        out.append({"lower": vals.tolist(), "delta": d.tolist(), "increase_fraction": frac,
                    "growth": float(vals[-1] / vals[0]) if vals[0] > 0 else float("inf"), "passed": bool(ok)})
    return BlowupReport(out, all(s["passed"] for s in out))


def karlsson_subsequence_check(F: SelfMapSpec, o, N: int, upper_fn: Optional[Callable] = None,
                               tol: float = 1e-3) -> dict:
    """Record-setting subsequence of k(F^nu(o), o) and its limit versus the orbit classification."""
    dom = F.domain
    orb = run_orbit(F, o, N) if N >= MIN_ORBIT else iterate(F, o, N)
    if upper_fn is None:
        if dom.has_exact_distance:
            def upper_fn(z):
                return float(dom.exact_distance(o, z))
        else:
            from .distance_estimators import distance_interval

            def upper_fn(z):
                return distance_interval(dom, o, z).upper
    # iterates rounded onto the boundary have no finite distance; stop before them
    inside = [bool(np.all(dom.contains(z))) for z in orb.points]
    stop = inside.index(False) if False in inside else len(inside)
    dist = np.array([upper_fn(z) if i else 0.0 for i, z in enumerate(orb.points[:stop])])
    records = [i for i in range(len(dist)) if dist[i] >= np.max(dist[: i + 1]) - 1e-15 and i > 0] or [0]
    half = len(dist) // 2
    blowing = half > 0 and dist[half:].max() > 1.05 * dist[: half + 1].max()
    label = "NOT-BLOWING-UP"
    match = None
    cls = orb.classification
    if blowing:
        last = orb.points[records[-1]]
        if cls is not None and cls.label == BOUNDARY:
            match = bool(np.linalg.norm(np.atleast_1d(last - cls.xi)) < tol)
            label = "BLOWING-UP-LIMIT-MATCH" if match else "BLOWING-UP-LIMIT-MISMATCH"
        else:
            label = "BLOWING-UP-UNCLASSIFIED"
    if len(dist) <= 2:
        label = "TRIVIAL"
    return {"label": label, "records": records, "distances": dist.tolist(), "limit_match": match,
            "evaluated_steps": int(stop),
            "classification": None if cls is None else cls.label}
