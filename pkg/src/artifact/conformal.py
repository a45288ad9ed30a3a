"""Explicit conformal chain from the cusp model domain Q onto the unit disc.

The chain is

    Q --(z -> z**(1/alpha))--> T --(1/z)--> S --f1--> --f2--> --sin--> H --cayley--> D

with S the half-strip {x > a, |y| < h}, f1(z) = i(z - a), f2(z) = pi z / (2h),
and cayley(z) = (z - i)/(z + i).  Everything here is vectorised over numpy arrays.

Close to the cusp tip the disc image saturates at 1 in double precision, so the
distance and metric routines work in the half-strip picture (after f2), where
the hyperbolic quantities can be evaluated in log space.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple

import mpmath
import numpy as np

from .errors import DomainError, InversionError, NumericalError, PreconditionError, SaturationError

LOG_1P_SQRT2 = float(np.log1p(np.sqrt(2.0)))
# sin(x + iy) overflows once |y| is a little above 709.
SIN_IMAG_LIMIT = 700.0


@dataclass(frozen=True)
class MapChain:
    """Parameters (alpha, a, h) of the chain; alpha == 1 gives the domain T itself."""

    alpha: float
    a: float
    h: float

    def __post_init__(self):
        if not (self.alpha >= 1.0 and np.isfinite(self.alpha)):
            raise PreconditionError(f"alpha must be >= 1, got {self.alpha}")
        if not (self.a > 0 and self.h > 0):
            raise PreconditionError("a and h must be positive")
        # principal branches stay valid while alpha * max|arg T| < pi
        if self.alpha * np.arctan2(self.h, self.a) >= np.pi:
            raise PreconditionError("alpha * arctan(h/a) must stay below pi for the principal branch")

    @property
    def base_point(self) -> float:
        return 1.0 / ((2.0 * self.h / np.pi) * LOG_1P_SQRT2 + self.a) ** self.alpha

    @property
    def cusp_exponent(self) -> float:
        return (1.0 + self.alpha) / self.alpha

    @property
    def far_point(self) -> float:
        """The real boundary point opposite the tip (image of s = a)."""
        return self.a ** (-self.alpha)

    # ----------------------------------------------------------------- stages
    @property
    def stages(self):
        return _stage_list(self)

    def to_strip_domain(self, z):
        """s = z**(-1/alpha), the point of S = {Re > a, |Im| < h} corresponding to z."""
        z = np.asarray(z, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.power(z, -1.0 / self.alpha)

    def from_strip_domain(self, s):
        s = np.asarray(s, dtype=complex)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            return np.power(s, -self.alpha)

    def in_domain(self, z):
        """Membership in Q decided by the exact strip inequalities for z**(-1/alpha)."""
        z = np.asarray(z, dtype=complex)
        s = self.to_strip_domain(z)
        ok = np.isfinite(s) & (z != 0)
        with np.errstate(invalid="ignore"):
            return ok & (s.real > self.a) & (np.abs(s.imag) < self.h)

    def half_strip(self, z):
        """zeta = (pi i / 2h)(z**(-1/alpha) - a), a point of {|Re| < pi/2, Im > 0}."""
        s = self.to_strip_domain(z)
        return (np.pi / (2.0 * self.h)) * 1j * (s - self.a)

    def from_half_strip(self, zeta):
        zeta = np.asarray(zeta, dtype=complex)
        s = self.a - 1j * (2.0 * self.h / np.pi) * zeta
        return self.from_strip_domain(s)

    def strip_jacobian(self, z):
        """d zeta / dz for zeta = half_strip(z)."""
        z = np.asarray(z, dtype=complex)
        return (np.pi / (2.0 * self.h)) * 1j * (-1.0 / self.alpha) * np.power(z, -1.0 / self.alpha - 1.0)

    def boundary_point(self, x, side=1):
        """Image in Q of the ray point x + i*side*h of S (x >= a)."""
        return self.from_strip_domain(np.asarray(x, dtype=float) + 1j * side * self.h)


class Stage(NamedTuple):
    name: str
    forward: Callable
    derivative: Callable
    inverse: Callable


def _stage_list(chain):
    alpha, a, h = chain.alpha, chain.a, chain.h
    return (
        Stage("phi_alpha_inverse",
              lambda z: np.power(z, 1.0 / alpha),
              lambda z: (1.0 / alpha) * np.power(z, 1.0 / alpha - 1.0),
              lambda t: np.power(t, alpha)),
        Stage("inv", lambda z: 1.0 / z, lambda z: -1.0 / z**2, lambda t: 1.0 / t),
        Stage("f1", lambda z: 1j * (z - a), lambda z: 1j + 0 * z, lambda t: a - 1j * t),
        Stage("f2", lambda z: np.pi * z / (2.0 * h), lambda z: np.pi / (2.0 * h) + 0 * z,
              lambda t: 2.0 * h * t / np.pi),
        Stage("f3", np.sin, np.cos, np.arcsin),
        Stage("f4", lambda z: (z - 1j) / (z + 1j), lambda z: 2j / (z + 1j) ** 2,
              lambda t: 1j * (1.0 + t) / (1.0 - t)),
    )


def _mp_stages(chain):
    """The six stages again, for mpmath numbers."""
    alpha, a, h = (mpmath.mpf(chain.alpha), mpmath.mpf(chain.a), mpmath.mpf(chain.h))
    I = mpmath.mpc(0, 1)
    return (lambda z: z ** (1 / alpha), lambda z: 1 / z, lambda z: I * (z - a),
            lambda z: mpmath.pi * z / (2 * h), mpmath.sin, lambda z: (z - I) / (z + I))


def compose_stagewise(chain: MapChain, z, dps=None):
    """Push z through the six stages one at a time (independent of the closed form).

    With dps set the stages run in mpmath at that precision; the result is then
    a list of mpmath numbers, useful as a reference where double precision
    saturates near the unit circle.
    """
    if dps is not None:
        with mpmath.workdps(dps):
            out = []
            for p in np.atleast_1d(np.asarray(z, dtype=complex)):
                v = mpmath.mpc(complex(p))
                for f in _mp_stages(chain):
                    v = f(v)
                out.append(v)
            return out
    out = np.asarray(z, dtype=complex)
    with np.errstate(all="ignore"):
        for stage in chain.stages:
            out = stage.forward(out)
    return out


def _check_in_q(chain, z):
    z = np.asarray(z, dtype=complex)
    if not np.all(np.isfinite(z)):
        raise DomainError("non-finite point")
    if not np.all(chain.in_domain(z)):
        raise DomainError("point outside Q")
    return z


def phi_forward(chain: MapChain, z):
    """Closed form Phi(z) = (sin(pi i (z**(-1/alpha) - a)/(2h)) - i) / (sin(...) + i)."""
    z = _check_in_q(chain, z)
    arg = (np.pi * 1j / (2.0 * chain.h)) * (np.power(z, -1.0 / chain.alpha) - chain.a)
    if np.any(np.abs(arg.imag) > SIN_IMAG_LIMIT):
        raise SaturationError("point too close to the cusp tip: sin overflows")
    sv = np.sin(arg)
    w = (sv - 1j) / (sv + 1j)
    if np.any(np.abs(w) >= 1.0):
        raise SaturationError("image rounds onto the unit circle; use the half-strip routines")
    return w


def phi_derivative(chain: MapChain, z):
    """Phi'(z) by the chain rule over the analytic stage derivatives."""
    z = _check_in_q(chain, z)
    out = z
    deriv = np.ones_like(z)
    with np.errstate(all="ignore"):
        for stage in chain.stages:
            deriv = deriv * stage.derivative(out)
            out = stage.forward(out)
    if not np.all(np.isfinite(deriv)) or np.any(np.abs(out) >= 1.0):
        raise SaturationError("derivative saturates near the cusp tip")
    return deriv


def phi_inverse(chain: MapChain, w):
    """Invert each stage in closed form; arcsin must land in the half-strip."""
    w = np.asarray(w, dtype=complex)
    if not np.all(np.abs(w) < 1.0):
        raise PreconditionError("phi_inverse needs |w| < 1")
    upper = 1j * (1.0 + w) / (1.0 - w)
    zeta = np.arcsin(upper)
    bad = (zeta.imag <= 0) | (np.abs(zeta.real) >= np.pi / 2)
    if np.any(bad):
        raise InversionError("arcsin left the half-strip; branch ambiguity")
    return chain.from_half_strip(zeta)


# ------------------------------------------------------------------ distances
def atanh_rho(rho, one_minus_rho2):
    """arctanh(rho): direct for small rho, from 1 - rho^2 near rho = 1 to avoid cancellation."""
    with np.errstate(divide="ignore", invalid="ignore"):
        far = np.log1p(rho) - 0.5 * np.log(one_minus_rho2)
    return np.where(rho < 0.5, np.arctanh(np.minimum(rho, 0.5)), far)


def poincare_distance(z, w):
    """k_D(z, w) = arctanh |(z - w)/(1 - conj(z) w)|, evaluated without cancellation."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if np.any(np.abs(z) >= 1.0) or np.any(np.abs(w) >= 1.0):
        raise DomainError("poincare_distance needs points of the open unit disc")
    denom = np.abs(1.0 - np.conj(z) * w)
    rho = np.abs(z - w) / denom
    return atanh_rho(rho, (1.0 - np.abs(z) ** 2) * (1.0 - np.abs(w) ** 2) / denom**2)


def unit_ball_distance(u, v):
    """Kobayashi distance of the unit ball between points given along the last axis."""
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    d = v - u
    uv = np.sum(u * np.conj(v), axis=-1)
    nu = np.sum(np.abs(u) ** 2, axis=-1)
    nv = np.sum(np.abs(v) ** 2, axis=-1)
    den2 = np.abs(1.0 - uv) ** 2
    # |u|^2 |v|^2 - |<u, v>|^2 = sum_{i<j} |u_i d_j - u_j d_i|^2, accurate when u is close to v
    i, j = np.triu_indices(u.shape[-1], k=1)
    wedge = np.sum(np.abs(u[..., i] * d[..., j] - u[..., j] * d[..., i]) ** 2, axis=-1)
    num2 = np.maximum(np.sum(np.abs(d) ** 2, axis=-1) - wedge, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        rho = np.sqrt(num2 / den2)
        return atanh_rho(rho, (1.0 - nu) * (1.0 - nv) / den2)


def poincare_metric(z, v):
    z = np.asarray(z, dtype=complex)
    if np.any(np.abs(z) >= 1.0):
        raise DomainError("poincare_metric needs |z| < 1")
    return np.abs(v) / (1.0 - np.abs(z) ** 2)


def _log_sinh(t):
    t = np.asarray(t, dtype=float)
    big = t > 20.0
    with np.errstate(divide="ignore", invalid="ignore"):
        small_val = np.log(np.sinh(np.where(big, 1.0, t)))
        big_val = t - np.log(2.0) + np.log1p(-np.exp(-2.0 * np.where(big, t, 30.0)))
    return np.where(big, big_val, small_val)


def _log_sinh2_plus(b, c):
    """log(sinh(b)**2 + c**2) for b >= 0."""
    b = np.abs(np.asarray(b, dtype=float))
    c = np.asarray(c, dtype=float)
    big = b > 20.0
    ls = _log_sinh(np.where(big, b, 21.0))
    with np.errstate(divide="ignore"):
        big_val = 2.0 * ls + np.log1p(c**2 * np.exp(-2.0 * ls))
        small_val = np.log(np.sinh(np.where(big, 0.0, b)) ** 2 + c**2)
    return np.where(big, big_val, small_val)


def half_strip_distance(zeta, eta):
    """Kobayashi distance of P = {|Re| < pi/2, Im > 0}, transported from H by sin."""
    zeta = np.asarray(zeta, dtype=complex)
    eta = np.asarray(eta, dtype=complex)
    x1, y1, x2, y2 = zeta.real, zeta.imag, eta.real, eta.imag
    l1 = _log_sinh2_plus(0.5 * (y1 + y2), np.cos(0.5 * (x1 + x2)))
    l2 = _log_sinh2_plus(0.5 * (y1 - y2), np.sin(0.5 * (x1 - x2)))
    log_e = (np.log(2.0) + l1 + l2 - np.log(np.cos(x1)) - np.log(np.cos(x2))
             - _log_sinh(y1) - _log_sinh(y2))
    big = log_e > 30.0
    with np.errstate(over="ignore", divide="ignore"):
        e = np.exp(np.where(big, 0.0, log_e))
        small_val = 0.5 * np.log1p(e + np.sqrt(e * (e + 2.0)))
        inv_e = np.exp(-np.where(big, log_e, 30.0))
        big_val = 0.5 * (log_e + np.log(1.0 + inv_e + np.sqrt(1.0 + 2.0 * inv_e)))
    return np.where(big, big_val, small_val)


def kobayashi_distance_Q(chain: MapChain, z, w, method: str = "strip"):
    """Exact k_Q(z, w) by biholomorphic invariance.

    method="disc" evaluates poincare_distance(Phi z, Phi w) from the closed form;
    method="strip" uses the same invariance one stage earlier and stays accurate
    arbitrarily close to the tip.
    """
    z = _check_in_q(chain, z)
    w = _check_in_q(chain, w)
    if method == "disc":
        return poincare_distance(phi_forward(chain, z), phi_forward(chain, w))
    if method != "strip":
        raise PreconditionError(f"unknown method {method!r}")
    zeta, eta = chain.half_strip(z), chain.half_strip(w)
    if not (np.all(np.isfinite(zeta)) and np.all(np.isfinite(eta))):
        raise SaturationError("point too close to the cusp tip")
    d = half_strip_distance(zeta, eta)
    return np.where(z == w, 0.0, d)


def kobayashi_distance_Q_stagewise(chain: MapChain, z, w, dps=None):
    """Reference value: stage-by-stage composition followed by the Poincare distance."""
    z = _check_in_q(chain, z)
    w = _check_in_q(chain, w)
    if dps is None:
        return poincare_distance(compose_stagewise(chain, z), compose_stagewise(chain, w))
    with mpmath.workdps(dps):
        pz, pw = compose_stagewise(chain, z, dps), compose_stagewise(chain, w, dps)
        vals = [float(mpmath.atanh(abs(a - b) / abs(1 - mpmath.conj(a) * b))) for a, b in zip(pz, pw)]
    return np.asarray(vals).reshape(np.broadcast(z, w).shape)


def kobayashi_metric_Q(chain: MapChain, z, v, method: str = "strip"):
    """kappa_Q(z; v) = |Phi'(z) v| / (1 - |Phi(z)|**2)."""
    z = _check_in_q(chain, z)
    v = np.asarray(v, dtype=complex)
    if method == "disc":
        return np.abs(phi_derivative(chain, z) * v) / (1.0 - np.abs(phi_forward(chain, z)) ** 2)
    return half_strip_metric(chain.half_strip(z), chain.strip_jacobian(z) * v)


def half_strip_metric(zeta, u):
    """kappa_P(zeta; u) on P = {|Re| < pi/2, Im > 0}."""
    zeta = np.asarray(zeta, dtype=complex)
    x, y = zeta.real, zeta.imag
    # |cos zeta| / (2 Im sin zeta) with both numerator and denominator divided by sinh y
    with np.errstate(over="ignore"):
        ratio = np.sqrt(1.0 + (np.cos(x) / np.sinh(np.minimum(y, 700.0))) ** 2) / (2.0 * np.cos(x))
    return np.abs(u) * ratio


def real_axis_distance_from_base(chain: MapChain, x):
    """k_Q(o, x) for real 0 < x < o via (1/2) log sinh(u), u = (pi/2h)(x**(-1/alpha) - a)."""
    x = np.asarray(x, dtype=float)
    u = (np.pi / (2.0 * chain.h)) * (x ** (-1.0 / chain.alpha) - chain.a)
    return 0.5 * _log_sinh(u)


def tip_growth_constant(chain: MapChain) -> float:
    """sup over 0 < x <= o of k_Q(o, x) - (pi/4h) x**(-1/alpha); attained as x -> 0."""
    return -0.5 * np.log(2.0) - np.pi * chain.a / (4.0 * chain.h)


# ---------------------------------------------------------- boundary geometry
def cusp_exponent_check(chain: MapChain, n_samples: int = 200, M: float = 2.0,
                        re_range=(1e-8, 1e-3)) -> dict:
    """Fit log|Im| against log Re along the boundary of Q near the tip."""
    if n_samples < 10:
        raise PreconditionError("n_samples must be at least 10")
    lo, hi = re_range
    # Re((x + ih)**(-alpha)) ~ x**(-alpha), so spread x geometrically
    xs = np.geomspace(hi ** (-1.0 / chain.alpha), lo ** (-1.0 / chain.alpha), n_samples)
    xs = xs[xs >= chain.a]
    pts = chain.boundary_point(xs, side=1)
    keep = pts.real > 0  # the tip itself is excluded
    pts = pts[keep]
    if pts.size < 5:
        raise NumericalError("too few boundary samples in the requested range")
    lre, lim = np.log(pts.real), np.log(np.abs(pts.imag))
    if np.ptp(lre) == 0:
        raise NumericalError("degenerate fit: all samples share one abscissa")
    slope, intercept = np.polyfit(lre, lim, 1)
    p = chain.cusp_exponent
    ratios = np.abs(pts.imag) / pts.real**p
    c1, c2 = float(ratios.min()), float(ratios.max())
    bound = M * chain.h * chain.alpha
    # largest tested real part up to which |Im| <= M h alpha Re**p holds
    xs_all = np.geomspace(chain.a, chain.a * 1e8, 4000)
    all_pts = chain.boundary_point(xs_all, side=1)
    all_pts = all_pts[all_pts.real > 0]
    ok = np.abs(all_pts.imag) <= bound * all_pts.real**p
    order = np.argsort(all_pts.real)
    ok_sorted = ok[order]
    bad = np.nonzero(~ok_sorted)[0]
    eps = float(all_pts.real[order][bad[0] - 1]) if bad.size and bad[0] > 0 else float(all_pts.real.max())
    return {
        "alpha": chain.alpha, "a": chain.a, "h": chain.h,
        "expected_exponent": p,
        "fitted_exponent": float(slope),
        "exponent_error": float(abs(slope - p)),
        "C1": c1, "C2": c2, "M": M, "C2_bound": bound,
        "C2_ok": bool(c2 <= bound),
        "epsilon": eps,
        "n_used": int(pts.size),
        "re_range": [float(pts.real.min()), float(pts.real.max())],
    }
