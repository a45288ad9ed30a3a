"""Integral tests on tabulated M profiles and the non-Goldilocks witness for caltrops.

An improper integral cannot be certified by finite quadrature, so every test
here integrates over dyadic panels down to the smallest tabulated radius and
then classifies the small-r tail from a regression model of the integrand.
Two tail models are fitted:

* power:      I(r) ~ c * r**gamma                 converges iff gamma > -1
* log-power:  I(r) ~ c / (r * log(1/r)**beta)     converges iff beta > 1

The model with the smaller residual decides.  The verdict is INCONCLUSIVE
whenever the confidence band of the deciding exponent straddles the
threshold, and an exponent sitting exactly on the threshold counts as
divergent.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Optional, Union

import numpy as np
from scipy import integrate, stats

from .errors import DomainError, PreconditionError

PANEL_ATOL = 1e-9
MAX_PANELS = 2**20
THRESHOLD_SNAP = 1e-9
CONFIDENCE = 0.95
MIN_ROWS = 5


class Verdict(str, Enum):
    CONVERGENT = "CONVERGENT"
    DIVERGENT = "DIVERGENT"
    INCONCLUSIVE = "INCONCLUSIVE"
    FAIL_GOLDILOCKS = "FAIL-GOLDILOCKS"


@dataclass(frozen=True)
class GrowthBound:
    """f(t) = C + alpha*log t  (logarithmic)  or  f(t) = C0 + C1*t**q  (power)."""

    family: str
    params: tuple

    def __post_init__(self):
        if self.family == "logarithmic":
            C, alpha = self.params
            if not alpha > 0:
                raise PreconditionError("logarithmic growth needs alpha > 0")
        elif self.family == "power":
            C0, C1, q = self.params
            if not (C1 > 0 and q > 0):
                raise PreconditionError("power growth needs C1 > 0 and q > 0")
        else:
            raise PreconditionError(f"unknown growth family {self.family!r}")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))

    @classmethod
    def logarithmic(cls, C: float = 0.0, alpha: float = 1.0) -> "GrowthBound":
        return cls("logarithmic", (C, alpha))

    @classmethod
    def power(cls, q: float, C0: float = 0.0, C1: float = 1.0) -> "GrowthBound":
        return cls("power", (C0, C1, q))

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "logarithmic":
            C, a = self.params
            return C + a * np.log(t)
        C0, C1, q = self.params
        return C0 + C1 * t**q

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        if self.family == "logarithmic":
            return self.params[1] / t
        _, C1, q = self.params
        return C1 * q * t ** (q - 1)

    def inverse(self, y):
        y = np.asarray(y, dtype=float)
        if self.family == "logarithmic":
            C, a = self.params
            return np.exp((y - C) / a)
        C0, C1, q = self.params
        if np.any(y <= C0):
            raise DomainError(f"power growth inverse needs values above C0 = {C0}")
        return ((y - C0) / C1) ** (1.0 / q)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": list(self.params)}


# ------------------------------------------------------------------ tables
@dataclass(frozen=True)
class MTable:
    """Tabulated M(r) (ascending r) with log-log interpolation."""

    r: np.ndarray
    M: np.ndarray

    @classmethod
    def coerce(cls, table, r_grid=None) -> "MTable":
        if isinstance(table, MTable):
            return table
        if callable(table):
            if r_grid is None:
                r_grid = np.geomspace(1e-8, 0.5, 60)
            r = np.asarray(r_grid, dtype=float)
            return cls(r, np.asarray(table(r), dtype=float))
        if hasattr(table, "M_upper"):
            r, M = np.asarray(table.r, dtype=float), np.asarray(table.M_upper, dtype=float)
        elif isinstance(table, dict):
            r, M = np.asarray(table["r"], dtype=float), np.asarray(table.get("M_upper", table.get("M")), dtype=float)
        else:
            r, M = (np.asarray(x, dtype=float) for x in table)
        order = np.argsort(r)
        return cls(r[order], M[order])

    def usable(self, r0: float):
        keep = (self.r > 0) & (self.r <= r0 * (1 + 1e-12)) & np.isfinite(self.M) & (self.M > 0)
        return self.r[keep], self.M[keep]

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return np.exp(np.interp(np.log(r), np.log(self.r), np.log(self.M)))


@dataclass(frozen=True)
class TailFit:
    model: str
    exponent: float  # gamma (power) or beta (log-power)
    band: tuple
    residual: float
    rows: int
    threshold: float

    def verdict(self) -> Verdict:
        lo, hi = self.band
        if self.model == "power":
            # gamma > -1 converges
            if abs(self.exponent + 1) <= THRESHOLD_SNAP and hi - lo <= 2 * THRESHOLD_SNAP:
                return Verdict.DIVERGENT
            if lo > -1:
                return Verdict.CONVERGENT
            if hi <= -1:
                return Verdict.DIVERGENT
            return Verdict.INCONCLUSIVE
        if abs(self.exponent - 1) <= THRESHOLD_SNAP and hi - lo <= 2 * THRESHOLD_SNAP:
            return Verdict.DIVERGENT
        if lo > 1:
            return Verdict.CONVERGENT
        if hi <= 1:
            return Verdict.DIVERGENT
        return Verdict.INCONCLUSIVE


def _regress(x, y):
    res = stats.linregress(x, y)
    n = len(x)
    fitted = res.intercept + res.slope * x
    resid = float(np.sqrt(np.mean((y - fitted) ** 2)))
    tq = stats.t.ppf(0.5 + CONFIDENCE / 2, n - 2) if n > 2 else np.inf
    half = float(tq * res.stderr) if np.isfinite(res.stderr) else np.inf
    return float(res.slope), float(res.intercept), half, resid


def fit_tail(r, I, tail_fraction: float = 0.5) -> TailFit:
    """Fit both tail models on the smallest-r part of the table and pick the better one."""
    r = np.asarray(r, dtype=float)
    I = np.asarray(I, dtype=float)
    if len(r) < MIN_ROWS:
        raise PreconditionError(f"need at least {MIN_ROWS} usable rows, got {len(r)}")
    k = max(MIN_ROWS, int(math.ceil(tail_fraction * len(r))))
    rt, It = r[:k], I[:k]
    g, _, gh, gres = _regress(np.log(rt), np.log(It))
    power = TailFit("power", g, (g - gh, g + gh), gres, k, -1.0)
    if np.all(rt < 1):
        s, _, sh, sres = _regress(np.log(np.log(1 / rt)), np.log(It * rt))
        beta = -s
        logp = TailFit("log-power", beta, (beta - sh, beta + sh), sres, k, 1.0)
        if sres < 0.5 * gres:
            return logp
    return power


def m_tends_to_zero(r, M, tail_fraction: float = 0.5) -> bool:
    """Decay of M itself: power fit M ~ r^s (s > 0) or log fit M ~ log(1/r)^-beta (beta > 0)."""
    r = np.asarray(r, dtype=float)
    k = max(MIN_ROWS, int(math.ceil(tail_fraction * len(r))))
    rt, Mt = r[:k], np.asarray(M, dtype=float)[:k]
    s, _, sh, sres = _regress(np.log(rt), np.log(Mt))
    if np.all(rt < 1):
        b, _, bh, bres = _regress(np.log(np.log(1 / rt)), np.log(Mt))
        if bres < 0.5 * sres:
            return bool(-b - bh > 0)
    return bool(s - sh > 0)


def dyadic_integral(fn: Callable, lo: float, hi: float, atol: float = PANEL_ATOL):
    """Integrate fn over [lo, hi] on dyadic panels [hi/2^(k+1), hi/2^k]; returns (total, partial sums)."""
    if not (0 < lo < hi):
        return 0.0, []
    n_panels = int(math.ceil(math.log2(hi / lo)))
    if n_panels > MAX_PANELS:
        raise PreconditionError("panel count exceeds the cap")
    partial, total = [], 0.0
    b = hi
    for _ in range(n_panels):
        a = max(b / 2, lo)
        val, _ = integrate.quad(fn, a, b, epsabs=atol, epsrel=1e-10, limit=200)
        total += val
        partial.append((a, total))
        b = a
    return total, partial


@dataclass
class IntegralReport:
    verdict: Verdict
    exponent: float
    band: tuple
    model: str
    residual: float
    quadrature_value: float
    tail_estimate: Optional[float]
    partial_integrals: list
    grid: list
    tolerances: dict
    m_to_zero: Optional[bool] = None
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["verdict"] = self.verdict.value
        d["band"] = list(self.band)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2, default=float)


def _tail_estimate(fit: TailFit, r_min, I_min):
    """Extrapolated integral of the fitted model over (0, r_min] when it converges."""
    if fit.verdict() != Verdict.CONVERGENT:
        return None
    if fit.model == "power":
        return float(I_min * r_min / (fit.exponent + 1))
    L = math.log(1 / r_min)
    return float(I_min * r_min * L / (fit.exponent - 1))


def _integral_test(table: MTable, r0, integrand, tail_fraction, label):
    r, M = table.usable(r0)
    if len(r) < MIN_ROWS:
        raise PreconditionError(f"need at least {MIN_ROWS} usable rows with r <= r0, got {len(r)}")
    I = integrand(r, M)
    fit = fit_tail(r, I, tail_fraction)
    total, partial = dyadic_integral(lambda x: float(integrand(np.array([x]), table(np.array([x])))[0]),
                                     float(r[0]), float(r0))
    m_zero = m_tends_to_zero(r, M, tail_fraction)
    notes = [f"{label}: tail verdict from the {fit.model} model; quadrature covers [r_min, r0] only"]
    return IntegralReport(fit.verdict(), fit.exponent, fit.band, fit.model, fit.residual, total,
                          _tail_estimate(fit, float(r[0]), float(I[0])), partial, r.tolist(),
                          {"panel_atol": PANEL_ATOL, "confidence": CONFIDENCE, "tail_fraction": tail_fraction,
                           "threshold_snap": THRESHOLD_SNAP}, m_zero, notes)


def goldilocks_integral_test(M_table, r0: float, tail_fraction: float = 0.5) -> IntegralReport:
    """Classify the integral of M(r)/r near 0.  The reported exponent is for M/r."""
    table = MTable.coerce(M_table)
    rep = _integral_test(table, r0, lambda r, M: M / r, tail_fraction, "goldilocks")
    if rep.model == "power":
        rep.notes.append(f"fitted M exponent s = {rep.exponent + 1:.6g}")
    if rep.verdict == Verdict.DIVERGENT and not rep.m_to_zero:
        rep.notes.append("M does not tend to zero on the table")
    return rep


def visibility_integrand(M, r, f: GrowthBound):
    """M(r)/r**2 * f'(1/r)."""
    r = np.asarray(r, dtype=float)
    return np.asarray(M, dtype=float) / r**2 * f.derivative(1.0 / r)


def general_visibility_integral_test(M_table, f: GrowthBound, r0: float,
                                     tail_fraction: float = 0.5) -> IntegralReport:
    """Classify the integral of M(r)/r^2 * f'(1/r) near 0 and check M -> 0."""
    table = MTable.coerce(M_table)
    rep = _integral_test(table, r0, lambda r, M: visibility_integrand(M, r, f), tail_fraction, "visibility")
    if not rep.m_to_zero:
        rep.notes.append("hypothesis M -> 0 not supported by the table")
    rep.notes.append("the global bound k(z0, z) <= f(1/delta(z)) is checked on samples only")
    return rep


@dataclass
class ChangeOfVariableReport:
    t_side: float
    r_side: float
    relative_error: float
    agree: bool
    tails: list
    b_prime: float
    T: float

    def to_dict(self):
        return asdict(self)


def change_of_variable_check(M_table, f: GrowthBound, lam: float = 1.0, kappa: float = 0.0,
                             b_prime: Optional[float] = None, T: Optional[float] = None,
                             rtol: float = 0.01) -> ChangeOfVariableReport:
    """Compare int_{b'}^{T} M(1/f^-1(t/(2 lam) - kappa/2)) dt with its r-substituted form.

    With r = 1/f^-1(t/(2 lam) - kappa/2) the t-integral becomes
    int 2 lam M(r) f'(1/r) / r^2 dr over [r(T), r(b')].
    """
    table = M_table if callable(M_table) and not hasattr(M_table, "M_upper") else MTable.coerce(M_table)
    Mf = table

    def r_of(t):
        return 1.0 / f.inverse(np.asarray(t, dtype=float) / (2 * lam) - kappa / 2)

    if b_prime is None:
        b_prime = float(2 * lam * (f(2.0) + kappa / 2))
    if T is None:
        T = float(2 * lam * (f(1e6) + kappa / 2))
    if b_prime >= T:
        return ChangeOfVariableReport(0.0, 0.0, 0.0, True, [], b_prime, T)
    r_hi, r_lo = float(r_of(b_prime)), float(r_of(T))
    t_side, _ = _log_quad(lambda t: float(Mf(np.array([r_of(t)]))[0]), b_prime, T)
    r_side, _ = _log_quad(lambda r: float(2 * lam * visibility_integrand(Mf(np.array([r])), np.array([r]), f)[0]),
                          r_lo, r_hi)
    rel = abs(t_side - r_side) / max(abs(r_side), 1e-300)
    tails = []
    for frac in (0.0, 0.25, 0.5, 0.75):
        b = b_prime + frac * (T - b_prime)
        val, _ = _log_quad(lambda t: float(Mf(np.array([r_of(t)]))[0]), b, T)
        tails.append((float(b), float(val)))
    return ChangeOfVariableReport(float(t_side), float(r_side), float(rel), bool(rel <= rtol), tails,
                                  float(b_prime), float(T))


def _log_quad(fn, a, b):
    """Quadrature on geometric panels (robust for integrands spread over decades)."""
    if a >= b:
        return 0.0, 0
    if a > 0:
        edges = np.geomspace(a, b, max(2, int(math.ceil(math.log2(b / a))) + 1))
    else:
        edges = np.linspace(a, b, 65)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        v, _ = integrate.quad(fn, lo, hi, epsabs=PANEL_ATOL, epsrel=1e-10, limit=200)
        total += v
    return total, len(edges) - 1


# ------------------------------------------------------- non-Goldilocks witness
@dataclass
class WitnessReport:
    verdict: Verdict
    x: list
    lower: list
    delta: list
    ratio: list
    growth_factor: float
    monotone: bool
    required_factor: float
    b_const: float

    def to_dict(self):
        d = asdict(self)
        d["verdict"] = self.verdict.value
        return d


def non_goldilocks_witness(caltrop, x_grid, b_const: Optional[float] = None, j: int = 0,
                           required_factor: float = 10.0) -> WitnessReport:
    """Ratio of the spike lower bound to log(1/delta) along the spike axis."""
    from .distance_estimators import spike_anchor, spike_constants, spike_distance_lower

    x = np.asarray(x_grid, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise PreconditionError("x_grid must be a nonempty 1-d array")
    if np.any(np.diff(x) >= 0):
        raise PreconditionError("x_grid must decrease toward 0")
    k = spike_constants(caltrop, j, b_const)
    if np.any(x <= 0) or np.any(x >= 0.5 * k.a_second):
        raise DomainError(f"x_grid leaves the spike chart (0, {0.5 * k.a_second:.6g})")
    chart = caltrop.spikes[j]
    z0 = spike_anchor(caltrop, j, k)
    pts = np.zeros((x.size, caltrop.dimension), dtype=complex)
    pts[:, -1] = x
    Z = chart.from_chart(pts)
    L = np.array([spike_distance_lower(caltrop, z0, Z[i], constants=k) for i in range(x.size)])
    D = np.asarray(caltrop.boundary_distance(Z), dtype=float)
    ratio = L / np.log(1 / D)
    if x.size < 2:
        return WitnessReport(Verdict.INCONCLUSIVE, x.tolist(), L.tolist(), D.tolist(), ratio.tolist(),
                             float("nan"), False, required_factor, k.b)
    growth = float(ratio[-1] / ratio[0]) if ratio[0] > 0 else float("inf")
    monotone = bool(np.all(np.diff(ratio) > 0))
    verdict = Verdict.FAIL_GOLDILOCKS if (monotone and growth >= required_factor) else Verdict.INCONCLUSIVE
    return WitnessReport(verdict, x.tolist(), L.tolist(), D.tolist(), ratio.tolist(), growth, monotone,
                         required_factor, k.b)


def power_surrogate(s: float, c: float = 1.0) -> Callable:
    """M(r) = c r^s as a callable table."""
    return lambda r: c * np.asarray(r, dtype=float) ** s


TableLike = Union[MTable, Callable, dict, tuple]
