"""Domains with membership, boundary distance, Levi form and seeded sampling.

Planar points are complex arrays of any shape.  Points of C^n (n >= 2) are
complex arrays whose last axis has length n; scalar-valued queries drop that
axis.
"""

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from ._numerics import bisect_increasing, golden_minimize
from .conformal import (MapChain, half_strip_distance, half_strip_metric,
                        kobayashi_distance_Q, kobayashi_metric_Q, poincare_distance, unit_ball_distance)
from .errors import ConstructionError, DomainError, NumericalError, PreconditionError

DEFAULT_ARC_RESOLUTION = 10_000
PSI_INVERSE_TOL = 1e-12


# ------------------------------------------------------------------ profiles
def _hermite_quintic(y0, d0, dd0, y1, d1, dd1):
    """Coefficients c0..c5 of the quintic on [0, 1] matching value, slope, curvature."""
    m = np.array([
        [1, 0, 0, 0, 0, 0],
        [0, 1, 0, 0, 0, 0],
        [0, 0, 2, 0, 0, 0],
        [1, 1, 1, 1, 1, 1],
        [0, 1, 2, 3, 4, 5],
        [0, 0, 2, 6, 12, 20],
    ], dtype=float)
    return np.linalg.solve(m, np.array([y0, d0, dd0, y1, d1, dd1], dtype=float))


@dataclass(frozen=True)
class SpikeProfile:
    """Cusp profile Psi(x) = scale * psi0(x) on [0, length], x measured from the tip.

    shape="power" is psi0(x) = x**p on [0, A].  shape="blend" continues the power
    part on [0, A - B] with a C^2 quintic over [A - B, A] and closes with a
    circular arc of radius cap_radius on [A, A + cap_radius].
    """

    p: float
    A: float
    C: float = 1.0
    shape: str = "power"
    scale: float = 1.0
    blend_width: Optional[float] = None
    cap_radius: Optional[float] = None

    def __post_init__(self):
        if not (1.0 < self.p < 1.5):
            raise PreconditionError(f"cusp exponent p must lie in (1, 3/2), got {self.p}")
        if not self.A > 0:
            raise PreconditionError("spike length A must be positive")
        if not self.C >= 1.0:
            raise PreconditionError("comparability constant C must be >= 1")
        if not self.scale > 0:
            raise PreconditionError("scale must be positive")
        if self.shape == "power":
            object.__setattr__(self, "_coef", None)
            return
        if self.shape != "blend":
            raise PreconditionError(f"unknown profile shape {self.shape!r}")
        B = self.blend_width
        if B is None or not (0 < B < self.A):
            raise PreconditionError("blend shape needs 0 < blend_width < A")
        x0 = self.A - B
        y0, d0, dd0 = x0**self.p, self.p * x0 ** (self.p - 1), self.p * (self.p - 1) * x0 ** (self.p - 2)
        if self.cap_radius is None:
            # height reached by a parabola leaving the power part with zero final slope
            object.__setattr__(self, "cap_radius", float(y0 + 0.5 * B * d0))
        beta = self.cap_radius
        if not beta > 0:
            raise PreconditionError("cap_radius must be positive")
        coef = _hermite_quintic(y0, B * d0, B * B * dd0, beta, 0.0, -B * B / beta)
        object.__setattr__(self, "_coef", coef)
        s = np.linspace(0.0, 1.0, 2001)
        vals = np.polynomial.polynomial.polyval(s, coef)
        slopes = np.polynomial.polynomial.polyval(s, np.polynomial.polynomial.polyder(coef))
        if np.any(vals <= 0) or np.any(slopes < -1e-12):
            raise ConstructionError("blend is not positive and nondecreasing; adjust cap_radius",)

    # ---------------------------------------------------------------- layout
    @property
    def length(self) -> float:
        """Total meridian length (tip to far end)."""
        return self.A if self.shape == "power" else self.A + self.cap_radius

    @property
    def spike_length(self) -> float:
        """Length of the pure power part."""
        return self.A if self.shape == "power" else self.A - self.blend_width

    @property
    def peak(self) -> float:
        """Abscissa where Psi stops increasing."""
        return self.A

    def _check(self, x, lo=0.0, hi=None, open_=False):
        x = np.asarray(x, dtype=float)
        hi = self.length if hi is None else hi
        bad = (x <= lo) | (x >= hi) if open_ else (x < lo) | (x > hi)
        if np.any(bad) or np.any(~np.isfinite(x)):
            raise DomainError(f"profile argument outside [{lo}, {hi}]")
        return x

    def _eval(self, x, order):
        """Unchecked scale * d^order psi0 / dx^order."""
        x = np.asarray(x, dtype=float)
        p = self.p
        with np.errstate(divide="ignore", invalid="ignore"):
            xp = np.maximum(x, 0.0)
            if order == 0:
                power = xp**p
            elif order == 1:
                power = p * xp ** (p - 1)
            else:
                power = p * (p - 1) * xp ** (p - 2)
            if self.shape == "power":
                return self.scale * power
            B, beta = self.blend_width, self.cap_radius
            x0 = self.A - B
            coef = self._coef
            for _ in range(order):
                coef = np.polynomial.polynomial.polyder(coef)
            s = (x - x0) / B
            blend = np.polynomial.polynomial.polyval(s, coef) / B**order
            t = np.minimum(x - self.A, beta)
            r2 = np.maximum(beta * beta - t * t, 0.0)
            if order == 0:
                cap = np.sqrt(r2)
            elif order == 1:
                cap = -t / np.sqrt(r2)
            else:
                cap = -beta * beta / r2**1.5
            out = np.where(x <= x0, power, np.where(x <= self.A, blend, cap))
        return self.scale * out

    # -------------------------------------------------------------- accessors
    def value(self, x):
        return self._eval(self._check(x), 0)

    def derivative(self, x):
        return self._eval(self._check(x, open_=True), 1)

    def second_derivative(self, x):
        return self._eval(self._check(x, open_=True), 2)

    def inverse(self, y):
        """x in [0, peak] with Psi(x) = y; closed form for powers, bisection otherwise."""
        y = np.asarray(y, dtype=float)
        top = float(self._eval(self.peak, 0))
        if np.any(y < 0) or np.any(y > top * (1 + 1e-15)):
            raise DomainError(f"inverse argument outside [0, {top}]")
        if self.shape == "power":
            return (y / self.scale) ** (1.0 / self.p)
        return bisect_increasing(lambda t: self._eval(t, 0), y, 0.0, self.peak, tol=PSI_INVERSE_TOL)

    def levi_quantity(self, x):
        """Psi'' Psi + Psi'**2 = (Psi**2)''/2."""
        x = self._check(x, open_=True)
        return self._eval(x, 2) * self._eval(x, 0) + self._eval(x, 1) ** 2

    def check_invariants(self, n: int = 2000) -> dict:
        """Sampled checks of comparability, monotonicity and the decay of Psi Psi''."""
        L = self.spike_length
        xs = np.geomspace(L * 1e-8, L, n)
        vals = self._eval(xs, 0)
        d1 = self._eval(xs, 1)
        ratio = vals / xs**self.p
        comparable = bool(np.all(ratio >= (1.0 / self.C) * (1 - 1e-12)) and np.all(ratio <= self.C * (1 + 1e-12)))
        increasing = bool(np.all(np.diff(vals) > 0))
        slope_increasing = bool(np.all(np.diff(d1) > 0))
        pp = np.abs(vals * self._eval(xs, 2))
        head = pp[: n // 4]
        decay_slope = float(np.polyfit(np.log(xs[: n // 4]), np.log(head), 1)[0])
        decays = bool(np.all(np.diff(head) >= 0) and decay_slope > 0)
        zero_at_tip = float(self._eval(0.0, 0)) == 0.0
        return {
            "comparability": comparable,
            "increasing": increasing,
            "derivative_increasing": slope_increasing,
            "psi_psi2_decay": decays,
            "decay_exponent": decay_slope,
            "zero_at_tip": zero_at_tip,
            "ok": comparable and increasing and slope_increasing and decays and zero_at_tip,
            "n_samples": n,
        }

    def superadditivity_check(self, n: int = 200, seed: int = 0) -> dict:
        """Psi(x + y) >= Psi(x) + Psi(y) on random pairs with x + y inside the spike part.

        Holds whenever Psi(0) = 0 and Psi' is increasing; the worst relative
        excess Psi(x) + Psi(y) - Psi(x + y) is reported.
        """
        rng = np.random.default_rng(seed)
        L = self.spike_length
        s = L * 10.0 ** rng.uniform(-8, 0, n)
        frac = rng.uniform(0, 1, n)
        x, y = s * frac, s * (1 - frac)
        lhs = self._eval(x + y, 0)
        rhs = self._eval(x, 0) + self._eval(y, 0)
        excess = (rhs - lhs) / np.maximum(lhs, 1e-300)
        worst = float(np.max(excess))
        return {"violations": int(np.sum(excess > 1e-12)), "worst_relative_excess": worst,
                "n_samples": n, "seed": seed}

    def to_dict(self) -> dict:
        return {"p": self.p, "A": self.A, "C": self.C, "shape": self.shape, "scale": self.scale,
                "blend_width": self.blend_width, "cap_radius": self.cap_radius}


def profile_eval(profile: SpikeProfile, x):
    return profile.value(x)


# --------------------------------------------------------------- base class
def _as_points(z, n):
    z = np.asarray(z, dtype=complex)
    if n > 1 and (z.ndim == 0 or z.shape[-1] != n):
        raise PreconditionError(f"expected points with last axis of length {n}, got shape {z.shape}")
    return z


@dataclass(frozen=True)
class InteriorSample:
    points: np.ndarray
    deltas: np.ndarray
    acceptance_rate: float
    attempts: int
    seed: int
    r_range: tuple

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)


class Domain:
    """Common interface.  Subclasses are immutable once built."""

    kind = "abstract"
    dimension = 1
    exact_boundary_distance = True
    boundary_resolution = None

    def contains(self, z):
        raise NotImplementedError

    def _delta(self, z):
        raise NotImplementedError

    def boundary_distance(self, z):
        z = _as_points(z, self.dimension)
        if not np.all(self.contains(z)):
            raise DomainError("boundary_distance needs interior points")
        return self._delta(z)

    def nearest_boundary_point(self, z):
        raise NotImplementedError

    def boundary_projection(self, z):
        """(delta, nearest boundary point) for interior points."""
        return self.boundary_distance(z), self.nearest_boundary_point(z)

    def enclosing_ball(self):
        """(center, R) with the domain inside B(center, R)."""
        raise NotImplementedError

    def bounding_box(self):
        """Real box (lo, hi) over the 2n real coordinates."""
        c, R = self.enclosing_ball()
        c = np.atleast_1d(np.asarray(c, dtype=complex))
        real = np.concatenate([c.real, c.imag])
        return real - R, real + R

    @property
    def has_exact_distance(self) -> bool:
        return False

    def exact_distance(self, z, w):
        raise NotImplementedError(f"no closed-form distance on {self.kind}")

    def exact_metric(self, z, v):
        raise NotImplementedError(f"no closed-form metric on {self.kind}")

    def parameters(self) -> dict:
        return {}

    def _propose(self, rng, depth):
        raise NotImplementedError

    def __repr__(self):
        args = ", ".join(f"{k}={v!r}" for k, v in self.parameters().items())
        return f"{type(self).__name__}({args})"


# ------------------------------------------------------------ simple domains
class Disc(Domain):
    kind = "disc"

    def __init__(self, center=0j, radius=1.0):
        if not radius > 0:
            raise PreconditionError("radius must be positive")
        self.center = complex(center)
        self.radius = float(radius)

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        return np.isfinite(z) & (np.abs(z - self.center) < self.radius)

    def _delta(self, z):
        return self.radius - np.abs(z - self.center)

    def nearest_boundary_point(self, z):
        d = np.asarray(z, dtype=complex) - self.center
        r = np.abs(d)
        u = np.where(r > 0, d / np.where(r > 0, r, 1.0), 1.0)
        return self.center + self.radius * u

    def enclosing_ball(self):
        return self.center, self.radius

    @property
    def has_exact_distance(self):
        return True

    def _normalize(self, z):
        return (np.asarray(z, dtype=complex) - self.center) / self.radius

    def exact_distance(self, z, w):
        return poincare_distance(self._normalize(z), self._normalize(w))

    def exact_metric(self, z, v):
        zz = self._normalize(z)
        return np.abs(np.asarray(v, dtype=complex)) / self.radius / (1.0 - np.abs(zz) ** 2)

    def parameters(self):
        return {"center": [self.center.real, self.center.imag], "radius": self.radius}

    def _propose(self, rng, depth):
        theta = rng.uniform(0.0, 2 * np.pi, depth.shape)
        return self.center + (self.radius - depth) * np.exp(1j * theta)


def _random_unit_complex(rng, m, n):
    g = rng.standard_normal((m, n)) + 1j * rng.standard_normal((m, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


class Ball(Domain):
    kind = "ball"

    def __init__(self, n=2, radius=1.0, center=None):
        if n < 1 or not radius > 0:
            raise PreconditionError("ball needs n >= 1 and radius > 0")
        self.dimension = int(n)
        self.radius = float(radius)
        self.center = np.zeros(n, dtype=complex) if center is None else np.asarray(center, dtype=complex)
        if self.center.shape != (n,):
            raise PreconditionError("center has the wrong dimension")

    def _rel(self, z):
        return (_as_points(z, self.dimension) - self.center) / self.radius

    def contains(self, z):
        z = _as_points(z, self.dimension)
        return np.all(np.isfinite(z), axis=-1) & (np.linalg.norm(z - self.center, axis=-1) < self.radius)

    def _delta(self, z):
        return self.radius - np.linalg.norm(z - self.center, axis=-1)

    def nearest_boundary_point(self, z):
        d = _as_points(z, self.dimension) - self.center
        r = np.linalg.norm(d, axis=-1, keepdims=True)
        e = np.zeros_like(d)
        e[..., 0] = 1.0
        u = np.where(r > 0, d / np.where(r > 0, r, 1.0), e)
        return self.center + self.radius * u

    def enclosing_ball(self):
        return self.center, self.radius

    @property
    def has_exact_distance(self):
        return True

    def exact_distance(self, z, w):
        return unit_ball_distance(self._rel(z), self._rel(w))

    def exact_metric(self, z, v):
        z = self._rel(z)
        v = _as_points(v, self.dimension) / self.radius
        nz = np.sum(np.abs(z) ** 2, axis=-1)
        zv = np.sum(np.conj(z) * v, axis=-1)
        nv = np.sum(np.abs(v) ** 2, axis=-1)
        return np.sqrt(nv / (1.0 - nz) + np.abs(zv) ** 2 / (1.0 - nz) ** 2)

    def parameters(self):
        return {"n": self.dimension, "radius": self.radius,
                "center": [[c.real, c.imag] for c in self.center]}

    def _propose(self, rng, depth):
        u = _random_unit_complex(rng, depth.size, self.dimension)
        return self.center + (self.radius - depth)[:, None] * u


class Polydisc(Domain):
    kind = "polydisc"

    def __init__(self, radii=(1.0, 1.0)):
        radii = np.asarray(radii, dtype=float)
        if radii.ndim != 1 or radii.size < 1 or np.any(radii <= 0):
            raise PreconditionError("polydisc radii must be positive")
        self.radii = radii
        self.dimension = radii.size

    def contains(self, z):
        z = _as_points(z, self.dimension)
        return np.all(np.isfinite(z), axis=-1) & np.all(np.abs(z) < self.radii, axis=-1)

    def _delta(self, z):
        return np.min(self.radii - np.abs(z), axis=-1)

    def nearest_boundary_point(self, z):
        z = _as_points(z, self.dimension).copy()
        gap = self.radii - np.abs(z)
        j = np.argmin(gap, axis=-1)
        zj = np.take_along_axis(z, j[..., None], axis=-1)
        rj = self.radii[j][..., None]
        r = np.abs(zj)
        unit = np.where(r > 0, zj / np.where(r > 0, r, 1.0), 1.0)
        np.put_along_axis(z, j[..., None], rj * unit, axis=-1)
        return z

    def enclosing_ball(self):
        return np.zeros(self.dimension, dtype=complex), float(np.linalg.norm(self.radii))

    @property
    def has_exact_distance(self):
        return True

    def exact_distance(self, z, w):
        z = _as_points(z, self.dimension) / self.radii
        w = _as_points(w, self.dimension) / self.radii
        return np.max(poincare_distance(z, w), axis=-1)

    def exact_metric(self, z, v):
        z = _as_points(z, self.dimension) / self.radii
        v = _as_points(v, self.dimension) / self.radii
        return np.max(np.abs(v) / (1.0 - np.abs(z) ** 2), axis=-1)

    def parameters(self):
        return {"radii": [float(r) for r in self.radii]}

    def _propose(self, rng, depth):
        m, n = depth.size, self.dimension
        j = rng.integers(0, n, m)
        rad = self.radii[None, :] * np.sqrt(rng.uniform(0, 1, (m, n)))
        rad = np.minimum(rad, self.radii[None, :] - depth[:, None])
        rad[np.arange(m), j] = self.radii[j] - depth
        return rad * np.exp(1j * rng.uniform(0, 2 * np.pi, (m, n)))


class StripDomain(Domain):
    """S = {Re z > a, |Im z| < h} (unbounded)."""

    kind = "strip"

    def __init__(self, a=1.0, h=1.0):
        if not (a > 0 and h > 0):
            raise PreconditionError("a and h must be positive")
        self.a, self.h = float(a), float(h)

    def contains(self, z):
        z = np.asarray(z, dtype=complex)
        return np.isfinite(z) & (z.real > self.a) & (np.abs(z.imag) < self.h)

    def _delta(self, z):
        return np.minimum(z.real - self.a, self.h - np.abs(z.imag))

    def nearest_boundary_point(self, z):
        z = np.asarray(z, dtype=complex)
        side = z.real - self.a < self.h - np.abs(z.imag)
        top = z.real + 1j * np.where(z.imag >= 0, self.h, -self.h)
        return np.where(side, self.a + 1j * z.imag, top)

    def enclosing_ball(self):
        raise PreconditionError("the strip is unbounded")

    @property
    def has_exact_distance(self):
        return True

    def _zeta(self, z):
        return (np.pi / (2.0 * self.h)) * 1j * (np.asarray(z, dtype=complex) - self.a)

    def exact_distance(self, z, w):
        d = half_strip_distance(self._zeta(z), self._zeta(w))
        return np.where(np.asarray(z) == np.asarray(w), 0.0, d)

    def exact_metric(self, z, v):
        return half_strip_metric(self._zeta(z), (np.pi / (2.0 * self.h)) * np.asarray(v, dtype=complex))

    def parameters(self):
        return {"a": self.a, "h": self.h}

    def _propose(self, rng, depth):
        m = depth.size
        side = rng.uniform(0, 1, m) < 0.2
        x = self.a + np.where(side, depth, rng.exponential(3.0 * self.h, m) + depth)
        y = np.where(side, rng.uniform(-self.h, self.h, m),
                     np.where(rng.uniform(0, 1, m) < 0.5, 1, -1) * (self.h - depth))
        return x + 1j * y


# --------------------------------------------------- sampled planar boundaries
class SampledCurveBoundary:
    """Distance to a union of parametrised arcs: dense sampling, k-d tree, golden refinement."""

    def __init__(self, arcs, extra_points=(), resolution=DEFAULT_ARC_RESOLUTION, k=8):
        self.arcs = [(fn, np.asarray(params, dtype=float)) for fn, params in arcs]
        self.resolution = resolution
        self.k = k
        pts, arc_id, pidx = [], [], []
        for j, (fn, params) in enumerate(self.arcs):
            pts.append(np.asarray(fn(params), dtype=complex))
            arc_id.append(np.full(params.size, j))
            pidx.append(np.arange(params.size))
        self.extra = np.asarray(extra_points, dtype=complex)
        self.samples = np.concatenate(pts)
        self.arc_id = np.concatenate(arc_id)
        self.param_index = np.concatenate(pidx)
        self.tree = cKDTree(np.column_stack([self.samples.real, self.samples.imag]))

    def query(self, z):
        """Return (distance, nearest point) for a flat array of points."""
        z = np.asarray(z, dtype=complex).ravel()
        k = min(self.k, self.samples.size)
        _, idx = self.tree.query(np.column_stack([z.real, z.imag]), k=k)
        idx = np.asarray(idx).reshape(z.size, k)
        arcs = self.arc_id[idx].ravel()
        pos = self.param_index[idx].ravel()
        zz = np.repeat(z, k)
        lo = np.empty(arcs.size)
        hi = np.empty(arcs.size)
        for j, (_, params) in enumerate(self.arcs):
            m = arcs == j
            lo[m] = params[np.maximum(pos[m] - 1, 0)]
            hi[m] = params[np.minimum(pos[m] + 1, params.size - 1)]

        groups = [(fn, np.nonzero(arcs == j)[0]) for j, (fn, _) in enumerate(self.arcs)]
        groups = [(fn, g) for fn, g in groups if g.size]

        def curve(t):
            out = np.empty(t.shape, dtype=complex)
            for fn, g in groups:
                out[g] = fn(t[g])
            return out

        # coarse golden bracketing, then safeguarded Newton steps on g(t) = |c(t) - z|^2
        # with central differences; a step is kept only if it stays inside the bracket
        # and lowers g, so the result is never worse than the golden estimate
        t_best, _ = golden_minimize(lambda t: np.abs(curve(t) - zz) ** 2, lo, hi, rtol=1e-3)
        for _ in range(3):
            step = 1e-5 * np.maximum(np.abs(t_best), hi - lo)
            c0, cp, cm = curve(t_best), curve(t_best + step), curve(t_best - step)
            d1 = (cp - cm) / (2 * step)
            d2 = (cp - 2 * c0 + cm) / step**2
            r = c0 - zz
            g1 = 2 * np.real(np.conj(r) * d1)
            g2 = 2 * (np.abs(d1) ** 2 + np.real(np.conj(r) * d2))
            with np.errstate(divide="ignore", invalid="ignore"):
                t_new = t_best - g1 / g2
            ok = np.isfinite(t_new) & (g2 > 0) & (t_new >= lo) & (t_new <= hi)
            t_new = np.where(ok, t_new, t_best)
            keep = np.abs(curve(t_new) - zz) < np.abs(r)
            t_best = np.where(keep, t_new, t_best)
        cand = curve(t_best).reshape(z.size, k)
        dist = np.abs(cand - z[:, None])
        best = np.argmin(dist, axis=1)
        d = dist[np.arange(z.size), best]
        nearest = cand[np.arange(z.size), best]
        # sample points themselves (covers arc endpoints) and isolated extra points
        d_s = np.abs(self.samples[idx] - z[:, None])
        jb = np.argmin(d_s, axis=1)
        better = d_s[np.arange(z.size), jb] < d
        d = np.where(better, d_s[np.arange(z.size), jb], d)
        nearest = np.where(better, self.samples[idx][np.arange(z.size), jb], nearest)
        for e in self.extra:
            de = np.abs(z - e)
            nearest = np.where(de < d, e, nearest)
            d = np.minimum(d, de)
        return d, nearest


class _ChainDomain(Domain):
    """Planar image of the strip S under z -> z**(-1/alpha) inverse: T (alpha = 1) or Q."""

    def __init__(self, alpha, a, h, resolution=DEFAULT_ARC_RESOLUTION):
        self.chain = MapChain(float(alpha), float(a), float(h))
        self.boundary_resolution = int(resolution)
        self._boundary = None

    alpha = property(lambda self: self.chain.alpha)
    a = property(lambda self: self.chain.a)
    h = property(lambda self: self.chain.h)

    @property
    def base_point(self) -> float:
        return self.chain.base_point

    o = base_point

    @property
    def far_point(self) -> float:
        return self.chain.far_point

    # boundary arcs: (parametrisation, parameter samples, interior side sign)
    def _arc_specs(self):
        ch, n = self.chain, self.boundary_resolution
        u = np.geomspace(1e-12, 1.0, n)
        y = np.linspace(-ch.h, ch.h, n)
        return [
            (lambda t: ch.from_strip_domain(ch.a / t + 1j * ch.h), u, 1.0),
            (lambda t: ch.from_strip_domain(ch.a / t - 1j * ch.h), u, -1.0),
            (lambda t: ch.from_strip_domain(ch.a + 1j * t), y, -1.0),
        ]

    @property
    def boundary(self) -> SampledCurveBoundary:
        if self._boundary is None:
            specs = self._arc_specs()
            self._boundary = SampledCurveBoundary([(f, t) for f, t, _ in specs], extra_points=[0j],
                                                  resolution=self.boundary_resolution)
        return self._boundary

    def contains(self, z):
        return self.chain.in_domain(z)

    def _delta(self, z):
        z = np.asarray(z, dtype=complex)
        d, _ = self.boundary.query(z)
        return d.reshape(z.shape)

    def nearest_boundary_point(self, z):
        z = np.asarray(z, dtype=complex)
        _, b = self.boundary.query(z)
        return b.reshape(z.shape)

    def boundary_projection(self, z):
        z = np.asarray(z, dtype=complex)
        if not np.all(self.contains(z)):
            raise DomainError("boundary_projection needs interior points")
        d, b = self.boundary.query(z)
        return d.reshape(z.shape), b.reshape(z.shape)

    def enclosing_ball(self):
        return 0j, self.far_point * (1 + 1e-12)

    def bounding_box(self):
        s = self.boundary.samples
        return np.array([s.real.min(), s.imag.min()]), np.array([s.real.max(), s.imag.max()])

    @property
    def has_exact_distance(self):
        return True

    def exact_distance(self, z, w):
        return kobayashi_distance_Q(self.chain, z, w)

    def exact_metric(self, z, v):
        return kobayashi_metric_Q(self.chain, z, v)

    def parameters(self):
        return {"alpha": self.alpha, "a": self.a, "h": self.h, "resolution": self.boundary_resolution}

    def boundary_normals(self, arc, t):
        """Points and inward unit normals on one boundary arc."""
        fn, _, sign = self._arc_specs()[arc]
        t = np.asarray(t, dtype=float)
        step = 1e-6 * np.maximum(np.abs(t), 1e-12)
        tangent = fn(t + step) - fn(t - step)
        return fn(t), sign * 1j * tangent / np.abs(tangent)

    def _propose(self, rng, depth):
        m = depth.size
        arc = rng.choice(3, size=m, p=[0.4, 0.4, 0.2])
        out = np.empty(m, dtype=complex)
        for j in range(3):
            sel = arc == j
            if not np.any(sel):
                continue
            if j < 2:
                t = 10.0 ** rng.uniform(-12.0, 0.0, sel.sum())
            else:
                t = rng.uniform(-self.h, self.h, sel.sum())
            b, nrm = self.boundary_normals(j, t)
            out[sel] = b + depth[sel] * nrm
        return out


class InvertedStripDomain(_ChainDomain):
    """T = {1/s : s in S}, the alpha = 1 member of the family."""

    kind = "inverted_strip"

    def __init__(self, a=1.0, h=1.0, resolution=DEFAULT_ARC_RESOLUTION):
        super().__init__(1.0, a, h, resolution)

    def parameters(self):
        return {"a": self.a, "h": self.h, "resolution": self.boundary_resolution}


class CuspModelDomain(_ChainDomain):
    """Q^{alpha,a,h}: the planar domain with a cusp of exponent (1+alpha)/alpha at 0."""

    kind = "cusp_model"

    def __init__(self, alpha=2.0, a=1.0, h=1.0, resolution=DEFAULT_ARC_RESOLUTION):
        if not alpha > 1:
            raise PreconditionError("alpha must exceed 1")
        super().__init__(alpha, a, h, resolution)

    @property
    def cusp_exponent(self) -> float:
        return self.chain.cusp_exponent

    @property
    def in_right_half_plane(self) -> bool:
        """True when every point of the closure except the tip has positive real part."""
        return bool(self.alpha * np.arctan2(self.h, self.a) <= np.pi / 2)


# ------------------------------------------------------------------ caltrops
@dataclass(frozen=True, eq=False)
class SpikeChart:
    """Chart z = tip + frame @ zeta; the spike axis is Re zeta_n > 0."""

    tip: np.ndarray
    frame: np.ndarray
    profile: SpikeProfile
    length: float
    closed: bool = False  # True when the profile closes the domain at x = length

    def __post_init__(self):
        tip = np.asarray(self.tip, dtype=complex)
        frame = np.asarray(self.frame, dtype=complex)
        n = tip.size
        if tip.shape != (n,) or frame.shape != (n, n):
            raise PreconditionError("tip and frame dimensions disagree")
        if not np.allclose(frame.conj().T @ frame, np.eye(n), atol=1e-12):
            raise PreconditionError("frame is not unitary")
        if not (0 < self.length <= self.profile.length + 1e-15):
            raise PreconditionError("chart length must lie in (0, profile length]")
        object.__setattr__(self, "tip", tip)
        object.__setattr__(self, "frame", frame)

    def to_chart(self, z):
        return (np.asarray(z, dtype=complex) - self.tip) @ self.frame.conj()

    def from_chart(self, zeta):
        return self.tip + np.asarray(zeta, dtype=complex) @ self.frame.T

    def meridian(self, z):
        """(x, S) with x = Re zeta_n and S = sqrt(|zeta'|**2 + Im(zeta_n)**2)."""
        zeta = self.to_chart(z)
        x = zeta[..., -1].real
        S = np.sqrt(np.sum(np.abs(zeta[..., :-1]) ** 2, axis=-1) + zeta[..., -1].imag ** 2)
        return x, S

    def lift(self, x, S, direction):
        """Ambient point from meridian data and a unit vector of R^(2n-1)."""
        x = np.asarray(x, dtype=float)
        S = np.asarray(S, dtype=float)
        e = np.asarray(direction, dtype=float)
        n = self.tip.size
        zeta_p = S[..., None] * (e[..., : n - 1] + 1j * e[..., n - 1: 2 * n - 2])
        zeta_n = x + 1j * S * e[..., 2 * n - 2]
        return self.from_chart(np.concatenate([zeta_p, zeta_n[..., None]], axis=-1))

    def in_body(self, z):
        x, S = self.meridian(z)
        L = self.length
        inside = (x > 0) & (x < L)
        psi = self.profile._eval(np.clip(x, 0.0, L), 0)
        return inside & (S < psi)

    def meridian_distance(self, x, S, samples=256, iters=60):
        """Distance from (x, S) to the graph of Psi over [0, length] (and to the flat end if open)."""
        x = np.asarray(x, dtype=float).ravel()
        S = np.asarray(S, dtype=float).ravel()
        L = self.length
        prof = self.profile
        d0 = prof._eval(x, 0) - S
        lo = np.clip(x - d0, 0.0, L)
        hi = np.clip(x + d0, 0.0, L)
        grid = lo[:, None] + (hi - lo)[:, None] * np.linspace(0.0, 1.0, samples)[None, :]
        g = (grid - x[:, None]) ** 2 + (prof._eval(grid, 0) - S[:, None]) ** 2
        j = np.argmin(g, axis=1)
        rows = np.arange(x.size)
        step = (hi - lo) / (samples - 1)
        a = np.clip(grid[rows, j] - step, lo, hi)
        b = np.clip(grid[rows, j] + step, lo, hi)
        t_star, g_star = golden_minimize(lambda t: (t - x) ** 2 + (prof._eval(t, 0) - S) ** 2, a, b, iters)
        use_grid = g[rows, j] <= g_star
        t_best = np.where(use_grid, grid[rows, j], t_star)
        dist = np.sqrt(np.minimum(g[rows, j], g_star))
        if not self.closed:
            dist = np.minimum(dist, L - x)
        return dist, t_best


def _levi_value(chart: SpikeChart, z, v):
    zeta = chart.to_chart(z)
    x = zeta[..., -1].real
    if np.any(x <= 0) or np.any(x >= chart.length):
        raise DomainError("levi_form: Re z_n outside the chart (0, length)")
    vc = np.asarray(v, dtype=complex) @ chart.frame.conj()
    q = chart.profile.levi_quantity(x)
    return np.sum(np.abs(vc[..., :-1]) ** 2, axis=-1) + (0.5 - 0.5 * q) * np.abs(vc[..., -1]) ** 2


@dataclass(frozen=True, eq=False)
class SpikeDefiningFunction:
    """rho = |zeta'|**2 + Im(zeta_n)**2 - Psi(Re zeta_n)**2 in a spike chart."""

    chart: SpikeChart

    def value(self, z):
        x, S = self.chart.meridian(z)
        if np.any(x <= 0) or np.any(x >= self.chart.length):
            raise DomainError("defining function evaluated outside its chart")
        return S**2 - self.chart.profile._eval(x, 0) ** 2

    def levi(self, z, v):
        return _levi_value(self.chart, z, v)


def levi_form(defining_fn_spec: SpikeDefiningFunction, z, v):
    """Levi form of rho at z in direction v."""
    return defining_fn_spec.levi(z, v)


class CaltropDomain(Domain):
    """A ball (possibly absent) together with spike charts.

    With ball_radius=None the single closed chart is the whole domain (the
    solid of revolution).  Otherwise membership is the union of the ball and
    the spike bodies, and boundary_distance is a lower estimate.
    """

    kind = "caltrop"

    def __init__(self, n, spikes, ball_radius=None, construction=None):
        n = int(n)
        if n < 2:
            raise PreconditionError("caltrops live in C^n with n >= 2")
        spikes = list(spikes)
        if not spikes:
            raise PreconditionError("at least one spike is required")
        for s in spikes:
            if s.tip.size != n:
                raise PreconditionError("spike chart dimension mismatch")
        tips = np.array([s.tip for s in spikes])
        for i in range(len(tips)):
            for j in range(i):
                if np.linalg.norm(tips[i] - tips[j]) < 1e-12:
                    raise ConstructionError("spike tips must be distinct")
        if ball_radius is None and (len(spikes) != 1 or not spikes[0].closed):
            raise ConstructionError("without a ball exactly one closed spike chart is needed")
        self.dimension = n
        self.spikes = tuple(spikes)
        self.ball_radius = None if ball_radius is None else float(ball_radius)
        self.construction = dict(construction or {})
        self.exact_boundary_distance = ball_radius is None

    @property
    def profile(self) -> SpikeProfile:
        return self.spikes[0].profile

    def defining_function(self, j=0) -> SpikeDefiningFunction:
        return SpikeDefiningFunction(self.spikes[j])

    def contains(self, z):
        z = _as_points(z, self.dimension)
        ok = np.all(np.isfinite(z), axis=-1)
        inside = np.zeros(z.shape[:-1], dtype=bool)
        if self.ball_radius is not None:
            inside |= np.linalg.norm(z, axis=-1) < self.ball_radius
        for s in self.spikes:
            inside |= s.in_body(z)
        return ok & inside

    def _delta(self, z):
        shape = z.shape[:-1]
        flat = z.reshape(-1, self.dimension)
        best = np.zeros(flat.shape[0])
        if self.ball_radius is not None:
            best = np.maximum(best, self.ball_radius - np.linalg.norm(flat, axis=-1))
        for s in self.spikes:
            inb = s.in_body(flat)
            if np.any(inb):
                x, S = s.meridian(flat[inb])
                d, _ = s.meridian_distance(x, S)
                best[inb] = np.maximum(best[inb], d)
        return best.reshape(shape)

    def nearest_boundary_point(self, z):
        """Nearest boundary point of the spike component (exact for the closed solid)."""
        z = _as_points(z, self.dimension)
        flat = z.reshape(-1, self.dimension)
        s = self.spikes[0]
        x, S = s.meridian(flat)
        _, t = s.meridian_distance(x, S)
        zeta = s.to_chart(flat)
        n = self.dimension
        e = np.concatenate([zeta[:, :-1].real, zeta[:, :-1].imag, zeta[:, -1:].imag], axis=1)
        e = e[:, list(range(n - 1)) + list(range(n - 1, 2 * n - 2)) + [2 * n - 2]]
        norm = np.linalg.norm(e, axis=1, keepdims=True)
        default = np.zeros_like(e)
        default[:, 0] = 1.0
        e = np.where(norm > 0, e / np.where(norm > 0, norm, 1.0), default)
        return s.lift(t, s.profile._eval(t, 0), e).reshape(z.shape)

    def enclosing_ball(self):
        if self.ball_radius is None:
            s = self.spikes[0]
            xs = np.linspace(0.0, s.length, 4001)
            xc = 0.5 * s.length
            R = float(np.max(np.hypot(xs - xc, s.profile._eval(xs, 0)))) * (1 + 1e-9)
            return s.from_chart(np.r_[np.zeros(self.dimension - 1), xc].astype(complex)), R
        R = self.ball_radius
        for s in self.spikes:
            xs = np.linspace(0.0, s.length, 2001)
            R = max(R, float(np.linalg.norm(s.tip) + np.max(np.hypot(xs, s.profile._eval(xs, 0)))))
        return np.zeros(self.dimension, dtype=complex), R

    def parameters(self):
        return {"n": self.dimension, "ball_radius": self.ball_radius}

    def audit(self, n_samples=2000, seed=0) -> dict:
        """Sampled structural checks: tips on the boundary, bodies inside, chart/ball agreement."""
        rng = np.random.default_rng(seed)
        tips_boundary = True
        body_violations = 0
        overlap_violations = 0
        n = self.dimension
        for s in self.spikes:
            if self.contains(s.tip):
                tips_boundary = False
            axis = s.lift(np.array([1e-3 * s.profile.spike_length]), np.array([0.0]),
                          np.eye(2 * n - 1)[:1])
            if not self.contains(axis)[0]:
                tips_boundary = False
            x = rng.uniform(0, s.length, n_samples)
            S = s.profile._eval(x, 0) * np.sqrt(rng.uniform(0, 1, n_samples)) * (1 - 1e-9)
            e = rng.standard_normal((n_samples, 2 * n - 1))
            e /= np.linalg.norm(e, axis=1, keepdims=True)
            pts = s.lift(x, S, e)
            body_violations += int(np.sum(~self.contains(pts)))
            if self.ball_radius is not None:
                # the far end of each open chart must sit inside the ball
                xe = np.full(n_samples, s.length * (1 - 1e-9))
                Se = s.profile._eval(xe, 0) * np.sqrt(rng.uniform(0, 1, n_samples))
                ends = s.lift(xe, Se, e)
                overlap_violations += int(np.sum(np.linalg.norm(ends, axis=-1) >= self.ball_radius))
        return {"tips_on_boundary": tips_boundary, "body_violations": body_violations,
                "overlap_violations": overlap_violations, "n_samples": n_samples, "seed": seed,
                "ok": tips_boundary and body_violations == 0 and overlap_violations == 0}

    def _propose(self, rng, depth):
        m = depth.size
        n = self.dimension
        k = len(self.spikes) + (self.ball_radius is not None)
        comp = rng.integers(0, k, m)
        out = np.empty((m, n), dtype=complex)
        for c in range(k):
            sel = comp == c
            cnt = int(sel.sum())
            if cnt == 0:
                continue
            if c == len(self.spikes):
                u = _random_unit_complex(rng, cnt, n)
                out[sel] = (self.ball_radius - depth[sel])[:, None] * u
                continue
            s = self.spikes[c]
            sl = s.profile.spike_length
            near_tip = rng.uniform(0, 1, cnt) < 0.5
            t = np.where(near_tip, sl * 10.0 ** rng.uniform(-6, 0, cnt), rng.uniform(0, s.length, cnt))
            t = np.clip(t, 1e-300, s.length * (1 - 1e-12))
            psi = s.profile._eval(t, 0)
            d1 = s.profile._eval(t, 1)
            d1 = np.where(np.isfinite(d1), d1, 1e300)
            norm = np.hypot(1.0, d1)
            # inward normal to the meridian graph at (t, psi)
            x = t + depth[sel] * d1 / norm
            S = np.maximum(psi - depth[sel] / norm, 0.0)
            e = rng.standard_normal((cnt, 2 * n - 1))
            e /= np.linalg.norm(e, axis=1, keepdims=True)
            out[sel] = s.lift(x, S, e)
        return out


def _unitary_with_last_column(col):
    col = np.asarray(col, dtype=complex)
    n = col.size
    m = np.eye(n, dtype=complex)
    m[:, 0] = col
    q, r = np.linalg.qr(m)
    q[:, 0] *= r[0, 0] / abs(r[0, 0])  # first column equals col exactly up to rounding
    return np.roll(q, -1, axis=1)


def build_single_spike_caltrop(p: float = 1.25, A: float = 1.0, B: float = 0.5,
                               blend_params: Optional[dict] = None, n: int = 2) -> CaltropDomain:
    """Solid of revolution with one cusp at (0, ..., 0, -A) and a circular far cap.

    The scale is the largest value (capped at 1) keeping the w-wbar Levi entry
    at least 1/4 on -A < Re w <= 0, verified on a grid.
    """
    bp = dict(blend_params or {})
    grid = int(bp.pop("grid", 4001))
    safety = float(bp.pop("safety", 0.98))
    cap_radius = bp.pop("cap_radius", None)
    if bp:
        raise PreconditionError(f"unknown blend parameters: {sorted(bp)}")
    if not (1.0 < p < 1.5):
        raise PreconditionError(f"p must lie in (1, 3/2), got {p}")
    if not (0 < B < A):
        raise PreconditionError("need 0 < B < A")
    base = SpikeProfile(p, A, shape="blend", blend_width=B, cap_radius=cap_radius)
    xs = np.linspace(0.0, A, grid)[1:]
    q = base.levi_quantity(xs)
    qmax = float(np.max(q))
    scale2 = min(1.0, safety * 0.5 / qmax) if qmax > 0 else 1.0
    s = float(np.sqrt(scale2))
    prof = SpikeProfile(p, A, C=max(s, 1.0 / s), shape="blend", scale=s, blend_width=B,
                        cap_radius=base.cap_radius)
    levi_nn = 0.5 - 0.5 * prof.levi_quantity(xs)
    if np.min(levi_nn) < 0.25:
        raise ConstructionError(
            f"no admissible scale: min Levi entry {np.min(levi_nn):.6g} < 1/4 on a {grid}-point grid")
    tip = np.zeros(n, dtype=complex)
    tip[-1] = -A
    chart = SpikeChart(tip, np.eye(n, dtype=complex), prof, prof.length, closed=True)
    info = {"scale_squared": scale2, "scale": s, "levi_min_on_grid": float(np.min(levi_nn)),
            "grid": grid, "safety": safety, "cap_radius": prof.cap_radius, "p": p, "A": A, "B": B}
    return CaltropDomain(n, [chart], ball_radius=None, construction=info)


def build_multi_spike_caltrop(directions, profiles, tip_distances, collar_depths,
                              n: Optional[int] = None, ball_radius: float = 1.0) -> CaltropDomain:
    """Ball of radius ball_radius with power-profile spikes attached along unit directions.

    Spike j has tip tip_distances[j] * directions[j]; its chart runs inward
    until Re w = -ball_radius + collar_depths[j] in the spike frame.
    """
    dirs = [np.asarray(d, dtype=complex) for d in directions]
    n = n or dirs[0].size
    if not (len(dirs) == len(profiles) == len(tip_distances) == len(collar_depths)):
        raise PreconditionError("directions, profiles, tip_distances and collar_depths must align")
    charts = []
    for d, prof, A_j, dl in zip(dirs, profiles, tip_distances, collar_depths):
        if d.size != n:
            raise PreconditionError("direction has the wrong dimension")
        d = d / np.linalg.norm(d)
        if not (A_j > ball_radius and 0 < dl < ball_radius):
            raise PreconditionError("need tip distance > ball radius and 0 < collar depth < ball radius")
        if prof.shape != "power":
            raise PreconditionError("multi-spike charts use power profiles")
        U = _unitary_with_last_column(-d)
        L = A_j - ball_radius + dl
        if L > prof.A:
            raise PreconditionError("profile shorter than the chart")
        base_r = float(prof._eval(L, 0))
        if (ball_radius - dl) ** 2 + base_r**2 >= ball_radius**2:
            raise ConstructionError("spike base disc sticks out of the ball; shrink the scale or deepen the collar")
        charts.append(SpikeChart(A_j * d, U, prof, L))
    return CaltropDomain(n, charts, ball_radius=ball_radius,
                         construction={"tip_distances": list(map(float, tip_distances)),
                                       "collar_depths": list(map(float, collar_depths))})


# ------------------------------------------------------------------ sampling
def sample_interior(domain: Domain, r_range, count: int, seed: int = 0,
                    batch: Optional[int] = None, max_batches: int = 400) -> InteriorSample:
    """Seeded rejection sampling of interior points with delta in [r_min, r_max]."""
    r_min, r_max = map(float, r_range)
    if count < 1:
        raise PreconditionError("count must be at least 1")
    if not (0 <= r_min <= r_max) or r_max <= 0:
        raise PreconditionError(f"empty or invalid r_range {r_range}")
    rng = np.random.default_rng(seed)
    batch = batch or max(4 * count, 256)
    pts, dls = [], []
    got = attempts = 0
    log_scale = r_min > 0 and r_max / r_min > 10
    for _ in range(max_batches):
        if log_scale:
            depth = np.exp(rng.uniform(np.log(r_min), np.log(r_max), batch))
        else:
            depth = rng.uniform(r_min, r_max, batch)
        cand = domain._propose(rng, depth)
        attempts += batch
        inside = domain.contains(cand)
        if not np.any(inside):
            continue
        cand = cand[inside]
        d = domain.boundary_distance(cand)
        ok = (d >= r_min) & (d <= r_max)
        pts.append(cand[ok])
        dls.append(d[ok])
        got += int(ok.sum())
        if got >= count:
            break
    if got < count:
        raise NumericalError(f"only {got} of {count} points found after {attempts} proposals")
    points = np.concatenate(pts)[:count]
    deltas = np.concatenate(dls)[:count]
    return InteriorSample(points, deltas, got / attempts, attempts, seed, (r_min, r_max))


# ------------------------------------------------------------- serialization
def _num(v):
    if isinstance(v, str):
        return float(Fraction(v))
    return float(v)


def _cvec(v):
    return [[float(c.real), float(c.imag)] for c in np.asarray(v, dtype=complex).ravel()]


def _from_cvec(v):
    return np.array([_num(r) + 1j * _num(i) for r, i in v], dtype=complex)


def to_document(domain: Domain) -> dict:
    doc = {"kind": domain.kind, "dimension": domain.dimension,
           "parameters": dict(domain.parameters()), "spikes": []}
    if isinstance(domain, CaltropDomain):
        doc["spikes"] = [{"tip": _cvec(s.tip),
                          "frame": [_cvec(row) for row in s.frame],
                          "length": s.length, "closed": s.closed,
                          "profile": s.profile.to_dict()} for s in domain.spikes]
    return doc


def _profile_from(d):
    opt = lambda k: None if d.get(k) is None else _num(d[k])  # noqa: E731
    return SpikeProfile(_num(d["p"]), _num(d["A"]), _num(d.get("C", 1.0)), d.get("shape", "power"),
                        _num(d.get("scale", 1.0)), opt("blend_width"), opt("cap_radius"))


def from_document(doc: dict) -> Domain:
    kind = doc.get("kind")
    par = doc.get("parameters", {})
    res = int(par.get("resolution", DEFAULT_ARC_RESOLUTION))
    if kind == "disc":
        c = par.get("center", [0, 0])
        return Disc(_num(c[0]) + 1j * _num(c[1]), _num(par.get("radius", 1.0)))
    if kind == "ball":
        center = _from_cvec(par["center"]) if "center" in par else None
        return Ball(int(par.get("n", doc.get("dimension", 2))), _num(par.get("radius", 1.0)), center)
    if kind == "polydisc":
        return Polydisc([_num(r) for r in par["radii"]])
    if kind == "strip":
        return StripDomain(_num(par["a"]), _num(par["h"]))
    if kind == "inverted_strip":
        return InvertedStripDomain(_num(par["a"]), _num(par["h"]), res)
    if kind == "cusp_model":
        return CuspModelDomain(_num(par["alpha"]), _num(par["a"]), _num(par["h"]), res)
    if kind == "caltrop":
        charts = [SpikeChart(_from_cvec(s["tip"]), np.array([_from_cvec(r) for r in s["frame"]]),
                             _profile_from(s["profile"]), _num(s["length"]), bool(s.get("closed", False)))
                  for s in doc.get("spikes", [])]
        br = par.get("ball_radius")
        return CaltropDomain(int(par.get("n", doc.get("dimension"))), charts,
                             None if br is None else _num(br))
    raise PreconditionError(f"unknown domain kind {kind!r}")


def dumps(domain: Domain) -> str:
    return json.dumps(to_document(domain), sort_keys=True, indent=2)


def loads(text: str) -> Domain:
    return from_document(json.loads(text))
