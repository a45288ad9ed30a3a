"""Two-sided bounds for the infinitesimal Kobayashi metric and the M profile."""

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .domains import (Ball, CaltropDomain, Disc, Domain, SpikeChart, _as_points, sample_interior)
from .errors import ConsistencyError, DomainError, NumericalError, PreconditionError

DEFAULT_ALPHA_S = 4.0
DEFAULT_LEVI_FLOOR = 0.25
CIRCLE_DENSITY = 256
SAMPLED_UPPER_NOTE = "sampled-membership upper bound"
STRONG_PSC_NOTE = "printed form sigma*|v|^2/delta^(1/2); evaluated on unit vectors only"


@dataclass(frozen=True)
class BoundInterval:
    lower: float
    upper: float
    lower_method: str
    upper_method: str
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.lower >= 0 and self.upper >= 0):
            raise ConsistencyError("negative bound", {"lower": self.lower, "upper": self.upper})
        if self.lower > self.upper * (1 + 1e-12):
            raise ConsistencyError(
                f"inverted interval: lower {self.lower!r} ({self.lower_method}) > "
                f"upper {self.upper!r} ({self.upper_method})", dict(self.details))

    def contains(self, value, rtol=1e-12) -> bool:
        return self.lower * (1 - rtol) <= value <= self.upper * (1 + rtol)

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class PshWitness:
    """Negative psh function u with Levi form >= c|v|^2 on its chart."""

    u: Callable
    c: float = DEFAULT_LEVI_FLOOR
    alpha_S: float = DEFAULT_ALPHA_S
    in_chart: Callable = None
    levi: Optional[Callable] = None
    label: str = "witness"
    chart_length: Optional[float] = None

    def __post_init__(self):
        if not (self.c > 0 and self.alpha_S > 0):
            raise PreconditionError("c and alpha_S must be positive")

    @property
    def b(self) -> float:
        return float(np.sqrt(self.c / self.alpha_S))


def disc_witness(disc: Disc, alpha_S=DEFAULT_ALPHA_S) -> PshWitness:
    R, c0 = disc.radius, disc.center
    return PshWitness(u=lambda z: np.abs((np.asarray(z) - c0) / R) ** 2 - 1.0, c=1.0 / R**2, alpha_S=alpha_S,
                      in_chart=disc.contains, levi=lambda z, v: np.abs(v) ** 2 / R**2, label="disc:|z|^2-1")


def ball_witness(ball: Ball, alpha_S=DEFAULT_ALPHA_S) -> PshWitness:
    R, c0 = ball.radius, ball.center
    return PshWitness(u=lambda z: np.sum(np.abs(_as_points(z, ball.dimension) - c0) ** 2, axis=-1) / R**2 - 1.0,
                      c=1.0 / R**2, alpha_S=alpha_S, in_chart=ball.contains,
                      levi=lambda z, v: np.sum(np.abs(v) ** 2, axis=-1) / R**2, label="ball:|z|^2-1")


def levi_chart_length(chart: SpikeChart, grid: int = 20001) -> float:
    """Largest x such that Psi'' Psi + Psi'^2 <= 1/2 on (0, x] (sampled)."""
    xs = np.linspace(0.0, chart.length, grid)[1:-1]
    bad = np.nonzero(chart.profile.levi_quantity(xs) > 0.5)[0]
    return float(chart.length if bad.size == 0 else xs[bad[0]])


def spike_witness(caltrop: CaltropDomain, j: int = 0, alpha_S=DEFAULT_ALPHA_S,
                  c=DEFAULT_LEVI_FLOOR) -> PshWitness:
    """u = rho on the chart {0 < Re zeta_n < A'} of spike j."""
    chart = caltrop.spikes[j]
    a_prime = levi_chart_length(chart)
    rho = caltrop.defining_function(j)

    def in_chart(z):
        x, _ = chart.meridian(z)
        return caltrop.contains(z) & chart.in_body(z) & (x > 0) & (x < a_prime)

    return PshWitness(u=rho.value, c=c, alpha_S=alpha_S, in_chart=in_chart, levi=rho.levi,
                      label=f"spike{j}:rho", chart_length=a_prime)


def default_witnesses(domain: Domain, alpha_S=DEFAULT_ALPHA_S):
    if isinstance(domain, Disc):
        return [disc_witness(domain, alpha_S)]
    if isinstance(domain, Ball):
        return [ball_witness(domain, alpha_S)]
    if isinstance(domain, CaltropDomain):
        return [spike_witness(domain, j, alpha_S) for j in range(len(domain.spikes))]
    return []


def _unit(v, n):
    v = _as_points(v, n)
    if n == 1:
        nv = np.abs(v)
        return nv, np.where(nv > 0, v / np.where(nv > 0, nv, 1.0), 1.0)
    nv = np.linalg.norm(v, axis=-1)
    safe = np.where(nv > 0, nv, 1.0)
    return nv, v / safe[..., None]


# ------------------------------------------------------------ upper bounds
def metric_upper_disc_radius(domain: Domain, z, u, density=CIRCLE_DENSITY, rtol=1e-7, max_radius=None):
    """Largest r (vectorised over points) with z + r*e^{it}*u in the domain on a circle sample.

    u must be unit directions.  Returns (r, density_used).
    """
    n = domain.dimension
    z = _as_points(z, n)
    flat_z = z.reshape(-1, n) if n > 1 else z.reshape(-1)
    flat_u = u.reshape(-1, n) if n > 1 else u.reshape(-1)
    m = flat_z.shape[0]
    lo = np.asarray(domain.boundary_distance(flat_z), dtype=float).reshape(m)
    if np.any(lo < 1e-14):
        raise NumericalError("inscribed radius collapsed below 1e-14 (degenerate point)")
    if max_radius is None:
        try:
            _, R = domain.enclosing_ball()
            max_radius = 2.0 * R
        except Exception:
            max_radius = 1e6 * float(lo.max())

    def fits(r, dens):
        ang = np.exp(2j * np.pi * np.arange(dens) / dens)
        if n == 1:
            pts = flat_z[:, None] + r[:, None] * ang[None, :] * flat_u[:, None]
        else:
            pts = flat_z[:, None, :] + (r[:, None] * ang[None, :])[..., None] * flat_u[:, None, :]
        return np.all(domain.contains(pts), axis=1)

    # the inscribed ball gives a guaranteed admissible radius
    hi = np.minimum(2.0 * lo, max_radius)
    ok = fits(hi, density)
    while np.any(ok):
        lo = np.where(ok, hi, lo)
        grow = ok & (hi < max_radius)
        if not np.any(grow):
            break
        hi = np.where(grow, np.minimum(2.0 * hi, max_radius), hi)
        ok = grow & fits(hi, density)
    hi = np.where(fits(hi, density) & (hi >= max_radius), hi * (1 + rtol), hi)
    for refine in (density, 2 * density):
        while np.any(hi - lo > rtol * lo):
            mid = 0.5 * (lo + hi)
            ok = fits(mid, refine)
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        if refine == density:
            # re-check the accepted radius at doubled density once
            good = fits(lo, 2 * density)
            if np.all(good):
                return lo.reshape(z.shape[:-1] if n > 1 else z.shape), density
            hi = np.where(good, hi, lo)
            lo = np.where(good, lo, np.asarray(domain.boundary_distance(flat_z)).reshape(m))
    return lo.reshape(z.shape[:-1] if n > 1 else z.shape), 2 * density


def metric_upper_disc(domain: Domain, z, v, density=CIRCLE_DENSITY):
    """|v| / r for the largest sampled affine disc through z in direction v."""
    n = domain.dimension
    nv, u = _unit(v, n)
    if np.any(nv == 0):
        raise PreconditionError("metric_upper_disc needs v != 0")
    if not np.all(domain.contains(z)):
        raise DomainError("z must be interior")
    r, _ = metric_upper_disc_radius(domain, z, u, density)
    return nv / r


# ------------------------------------------------------------ lower bounds
def metric_lower_sibony(witness: PshWitness, z, v):
    """sqrt(c / alpha_S) |v| / |u(z)|^(1/2)."""
    if not np.all(witness.in_chart(z)):
        raise DomainError("point outside the witness chart")
    uz = np.asarray(witness.u(z), dtype=float)
    if np.any(uz >= 0):
        raise DomainError("witness must be negative at z")
    v = np.asarray(v, dtype=complex)
    nv = np.abs(v) if v.ndim == uz.ndim else np.linalg.norm(v, axis=-1)
    return witness.b * nv / np.sqrt(-uz)


def metric_lower_strong_psc(domain: Domain, z, v, sigma, collar_constant):
    """(1 - C delta^(1/2)) sigma |v|^2 / delta^(1/2); returns (value, available)."""
    if not (sigma > 0 and collar_constant >= 0):
        raise PreconditionError("sigma must be positive and the collar constant nonnegative")
    n = domain.dimension
    nv, _ = _unit(v, n)
    d = np.asarray(domain.boundary_distance(z), dtype=float)
    pref = 1.0 - collar_constant * np.sqrt(d)
    avail = pref > 0
    val = np.where(avail & (nv > 0), pref * sigma * nv**2 / np.sqrt(d), 0.0)
    if val.ndim == 0:
        return float(val), bool(avail)
    return val, avail


# ------------------------------------------------------------ intervals
@dataclass(frozen=True)
class CollarSpec:
    sigma: float
    collar_constant: float
    in_collar: Callable


def _lower_candidates(domain, z, v, witnesses, collar):
    """Dict of method -> lower bound arrays (nan where unavailable)."""
    n = domain.dimension
    z = _as_points(z, n)
    shape = z.shape[:-1] if n > 1 else z.shape
    out = {}
    for w in witnesses:
        inside = np.asarray(w.in_chart(z), dtype=bool).reshape(shape)
        val = np.full(shape, np.nan)
        if np.any(inside):
            zi = z[inside]
            vi = np.broadcast_to(v, z.shape)[inside]
            val[inside] = metric_lower_sibony(w, zi, vi)
        out[f"sibony[{w.label},alpha_S={w.alpha_S}]"] = val
    if collar is not None:
        inside = np.asarray(collar.in_collar(z), dtype=bool).reshape(shape)
        val = np.full(shape, np.nan)
        if np.any(inside):
            vi = np.broadcast_to(v, z.shape)[inside]
            got, avail = metric_lower_strong_psc(domain, z[inside], vi, collar.sigma, collar.collar_constant)
            val[inside] = np.where(avail, got, np.nan)
        out["strong_psc"] = val
    return out


def metric_interval(domain: Domain, z, v, witnesses=None, collar: Optional[CollarSpec] = None,
                    density=CIRCLE_DENSITY) -> BoundInterval:
    """Best available [lower, upper] for kappa(z; v) at a single point."""
    n = domain.dimension
    z = _as_points(z, n)
    if not bool(np.all(domain.contains(z))):
        raise DomainError("z must be interior")
    nv, u = _unit(v, n)
    if float(nv) == 0.0:
        return BoundInterval(0.0, 0.0, "zero-vector", "zero-vector")
    witnesses = default_witnesses(domain) if witnesses is None else witnesses
    lowers = {k: float(val) for k, val in _lower_candidates(domain, z, v, witnesses, collar).items()
              if np.isfinite(val)}
    uppers = {}
    r, dens = metric_upper_disc_radius(domain, z, u, density)
    uppers[f"affine_disc[{SAMPLED_UPPER_NOTE},density={dens}]"] = float(nv / r)
    if domain.has_exact_distance:
        ex = float(domain.exact_metric(z, v))
        lowers["exact"] = ex
        uppers["exact"] = ex
    lm = max(lowers, key=lowers.get) if lowers else "trivial"
    um = min(uppers, key=uppers.get)
    lower = lowers[lm] if lowers else 0.0
    details = {"lowers": lowers, "uppers": uppers, "z": np.asarray(z).tolist(), "v": np.asarray(v).tolist()}
    if collar is not None:
        details["note"] = STRONG_PSC_NOTE
    return BoundInterval(lower, uppers[um], lm, um, details)


# ------------------------------------------------------------ M profile
@dataclass
class MProfile:
    r: np.ndarray
    M_lower: np.ndarray
    M_upper: np.ndarray
    n_samples: np.ndarray
    seed: int
    upper_method: list
    lower_method: list

    def rows(self):
        return [(float(a), float(b), float(c), int(d), self.seed)
                for a, b, c, d in zip(self.r, self.M_lower, self.M_upper, self.n_samples)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["r", "M_lower", "M_upper", "n_samples", "seed"])
        for row in self.rows():
            w.writerow([repr(row[0]), repr(row[1]), repr(row[2]), row[3], row[4]])
        return buf.getvalue()


def _random_directions(rng, m, n):
    g = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g[:, 0] if n == 1 else g


def m_profile(domain: Domain, r_grid, directions_per_point: int = 1, seed: int = 0,
              samples_per_r: int = 1000, witnesses=None, band: float = 0.5,
              compute_lower: bool = True, density=CIRCLE_DENSITY) -> MProfile:
    """Sampled M_lower and certified-style M_upper on a grid of r values.

    For each r, points with delta in [band*r, r] are drawn.  M_lower uses the
    best metric upper bound (exact where available); M_upper uses analytic
    lower bounds from psh witnesses, falling back to the exact metric where no
    witness covers the point.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    if r_grid.ndim != 1 or r_grid.size == 0 or np.any(r_grid <= 0) or np.any(np.diff(r_grid) <= 0):
        raise PreconditionError("r_grid must be strictly increasing and positive")
    witnesses = default_witnesses(domain) if witnesses is None else witnesses
    n = domain.dimension
    Ml, Mu, ns, um, lm = [], [], [], [], []
    for i, r in enumerate(r_grid):
        smp = sample_interior(domain, (band * r, r), samples_per_r, seed=seed + 7919 * i)
        pts = smp.points
        if len(pts) == 0:
            raise NumericalError(f"empty sample at r={r}")
        rng = np.random.default_rng(seed + 104729 * i)
        reps = np.repeat(pts, directions_per_point, axis=0)
        dirs = _random_directions(rng, len(reps), n)
        # lower bounds on kappa -> M_upper
        cands = _lower_candidates(domain, reps, dirs, witnesses, None)
        best = np.full(len(reps), np.nan)
        for val in cands.values():
            best = np.fmax(best, val)
        method = "witness"
        if np.any(np.isnan(best)):
            if not domain.has_exact_distance:
                raise NumericalError(f"no lower metric bound covers the sample at r={r}")
            miss = np.isnan(best)
            best[miss] = domain.exact_metric(reps[miss], dirs[miss])
            method = "witness+exact" if np.any(~miss) else "exact(sampled)"
        Mu.append(float(np.max(1.0 / best)))
        um.append(method)
        # upper bounds on kappa -> M_lower
        if compute_lower:
            if domain.has_exact_distance:
                up = domain.exact_metric(reps, dirs)
                lm.append("exact")
            else:
                rad, dens = metric_upper_disc_radius(domain, reps, dirs, density)
                up = 1.0 / rad
                lm.append(f"affine_disc(density={dens})")
            Ml.append(float(np.max(1.0 / up)))
        else:
            Ml.append(0.0)
            lm.append("skipped")
        ns.append(len(reps))
    Ml = np.maximum.accumulate(np.array(Ml))
    Mu = np.maximum.accumulate(np.array(Mu))
    return MProfile(r_grid, Ml, Mu, np.array(ns), seed, um, lm)


# ------------------------------------------------------------ disc sequences
@dataclass(frozen=True)
class AffineDisc:
    """zeta -> center + zeta * direction."""

    center: np.ndarray
    direction: np.ndarray

    def __call__(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        c = np.asarray(self.center, dtype=complex)
        d = np.asarray(self.direction, dtype=complex)
        if c.ndim == 0:
            return c + zeta * d
        return c + zeta[..., None] * d

    def derivative_at_zero(self):
        return np.asarray(self.direction, dtype=complex)


def derivative_decay_check(domain: Domain, disc_sequence, witnesses=None, circle_samples=256) -> dict:
    """Check |phi'(0)| <= 1/kappa_lower(phi(0); phi'(0)/|phi'(0)|) along a disc sequence."""
    witnesses = default_witnesses(domain) if witnesses is None else witnesses
    n = domain.dimension
    ang = 0.999 * np.exp(2j * np.pi * np.arange(circle_samples) / circle_samples)
    rows = []
    for k, phi in enumerate(disc_sequence):
        if not np.all(domain.contains(phi(ang))):
            raise DomainError(f"disc {k} leaves the domain on the sampled circle")
        c = phi(0.0)
        if hasattr(phi, "derivative_at_zero"):
            d = phi.derivative_at_zero()
        else:
            hstep = 1e-6
            d = (phi(hstep) - phi(-hstep)) / (2 * hstep)
        nd = float(np.abs(d) if n == 1 else np.linalg.norm(d))
        delta = float(domain.boundary_distance(c))
        if nd == 0:
            rows.append({"index": k, "delta": delta, "derivative": 0.0, "bound": np.inf, "margin": np.inf})
            continue
        cands = _lower_candidates(domain, np.asarray(c)[None] if n > 1 else np.atleast_1d(c),
                                  (d / nd)[None] if n > 1 else np.atleast_1d(d / nd), witnesses, None)
        vals = [float(v[0]) for v in cands.values() if np.isfinite(v[0])]
        if domain.has_exact_distance:
            vals.append(float(domain.exact_metric(c, d / nd)))
        if not vals:
            raise NumericalError(f"no lower metric bound at disc {k}")
        bound = 1.0 / max(vals)
        rows.append({"index": k, "delta": delta, "derivative": nd, "bound": bound, "margin": bound - nd})
    nz = [r for r in rows if r["derivative"] > 0]
    trend = None
    if len(nz) >= 2:
        trend = float(np.polyfit(np.log([r["delta"] for r in nz]), np.log([r["derivative"] for r in nz]), 1)[0])
    return {"rows": rows, "ok": all(r["margin"] >= -1e-12 * max(1.0, r["bound"]) for r in rows),
            "decay_exponent": trend}
