"""Interval estimates for the Kobayashi distance.

Upper bounds come from shortest paths in a sampled node graph whose edge
weights are Kobayashi distances of balls contained in the domain, and from
explicit embeddings of the model domain Q (spikes) or of discs (smooth
collar).  Lower bounds come from enclosing balls, supporting half-spaces and
the spike projection functional.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree
from scipy.stats import qmc

from .conformal import MapChain, atanh_rho, kobayashi_distance_Q, tip_growth_constant, unit_ball_distance
from .domains import CaltropDomain, Domain, _as_points, _ChainDomain
from .errors import (ConsistencyError, ConstructionError, DomainError, NoPathError, NumericalError,
                     PreconditionError)
from .metric_estimators import DEFAULT_ALPHA_S, DEFAULT_LEVI_FLOOR, BoundInterval, levi_chart_length

EDGE_FRACTION = 0.8
LOG_SQRT2 = 0.5 * math.log(2.0)


# ------------------------------------------------------------------ helpers
def _rows(p, n):
    """(m, n) complex rows from domain-shaped points."""
    p = np.asarray(p, dtype=complex)
    return p.reshape(-1, 1) if n == 1 else p.reshape(-1, n)


def _dom(P, n):
    return P[:, 0] if n == 1 else P


def _to_real(P):
    return np.concatenate([P.real, P.imag], axis=1)


def _from_real(R, n):
    return R[:, :n] + 1j * R[:, n:]


def ball_distance(a, b, center, radius):
    """Kobayashi distance of the ball B(center, radius) between rows a and b."""
    u = (a - center) / radius[:, None]
    v = (b - center) / radius[:, None]
    nu = np.sum(np.abs(u) ** 2, axis=1)
    nv = np.sum(np.abs(v) ** 2, axis=1)
    return np.where((nu < 1.0) & (nv < 1.0), unit_ball_distance(u, v), np.inf)


def half_plane_distance(a, b):
    """Kobayashi distance of the right half-plane."""
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    den = np.abs(a + np.conj(b))
    rho = np.abs(a - b) / den
    return atanh_rho(rho, 4.0 * a.real * b.real / den**2)


@dataclass(frozen=True)
class PathSample:
    """A time-parametrised discrete curve; points are rows of shape (m, n)."""

    times: np.ndarray
    points: np.ndarray
    source: str = "graph"
    dimension: int = 1

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.ndim != 1 or len(t) != len(self.points):
            raise PreconditionError("times and points must align")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", np.asarray(self.points, dtype=complex))

    @property
    def length(self) -> float:
        return float(self.times[-1] - self.times[0]) if len(self.times) else 0.0

    def domain_points(self):
        return _dom(_rows(self.points, self.dimension), self.dimension)

    def __len__(self):
        return len(self.times)


# ------------------------------------------------------------ ball geometry
def maximal_tangent_balls(domain: Domain, P, projection=None, coarse=16, fine=16):
    """Largest balls B(xi + rho*nu, rho) inside the domain through the nearest boundary point xi.

    The ball contains the row point when rho >= delta; rho = delta is the
    inscribed ball centred at the point itself.  Tangent balls at xi are
    nested in rho, so a geometric ladder of radii is tested in one batch and
    then refined once between the last accepted and first rejected radius.
    """
    n = domain.dimension
    d, xi = domain.boundary_projection(_dom(P, n)) if projection is None else projection
    d = np.asarray(d, dtype=float).reshape(-1)
    xi = _rows(xi, n)
    nu = (P - xi) / d[:, None]
    try:
        _, R = domain.enclosing_ball()
    except PreconditionError:
        R = 1e3 * float(np.max(d))
    R = np.maximum(R, d)

    def accepted(rho):
        # rho has shape (m, K); returns the count of leading accepted radii per
        # row and the computed depth of every candidate centre.  A tangent
        # ball has delta(centre) <= rho with equality exactly when it fits.
        m, K = rho.shape
        c = xi[:, None, :] + rho[:, :, None] * nu[:, None, :]
        flat = c.reshape(m * K, n)
        good = np.asarray(domain.contains(_dom(flat, n)), dtype=bool).reshape(-1)
        dc = np.zeros(m * K)
        if np.any(good):
            dc[good] = np.asarray(domain.boundary_distance(_dom(flat[good], n)), dtype=float).reshape(-1)
        good &= dc >= rho.reshape(-1) * (1 - 1e-9)
        good = good.reshape(m, K)
        k = np.argmin(np.concatenate([good, np.zeros((m, 1), bool)], axis=1), axis=1)
        return k, dc.reshape(m, K)

    rows = np.arange(len(d))
    t = np.linspace(0.0, 1.0, coarse + 1)[1:]
    rho1 = d[:, None] * (R / d)[:, None] ** t[None, :]
    k1, _ = accepted(rho1)
    lo = np.where(k1 > 0, rho1[rows, np.maximum(k1 - 1, 0)], d)
    hi = np.where(k1 < coarse, rho1[rows, np.minimum(k1, coarse - 1)], lo)
    s2 = np.linspace(0.0, 1.0, fine + 2)[1:-1]
    rho2 = lo[:, None] * (hi / lo)[:, None] ** s2[None, :]
    k2, dc2 = accepted(rho2)
    rho = np.where(k2 > 0, rho2[rows, np.maximum(k2 - 1, 0)], lo)
    centers = xi + rho[:, None] * nu
    # use the computed depth of the centre as the radius; the row point stays inside
    radius = np.where(k2 > 0, dc2[rows, np.maximum(k2 - 1, 0)], 0.0)
    fallback = (k2 == 0) | (radius <= np.linalg.norm(P - centers, axis=1))
    centers = np.where(fallback[:, None], P, centers)
    radius = np.where(fallback, d, radius)
    return centers, radius


@dataclass(frozen=True)
class GridSpec:
    spacing: float = 0.05
    neighbor_factor: float = 3.0
    edge_fraction: float = EDGE_FRACTION
    edge_bound: str = "auto"
    seed: int = 0
    coarse_spacings: tuple = ()
    ladder_max_steps: int = 200_000

    def __post_init__(self):
        if not self.spacing > 0:
            raise PreconditionError("spacing must be positive")
        if self.edge_bound not in ("auto", "ball", "maximal_ball", "exact"):
            raise PreconditionError(f"unknown edge bound {self.edge_bound!r}")
        if not (0 < self.edge_fraction < 1):
            raise PreconditionError("edge_fraction must lie in (0, 1)")

    @property
    def neighbor_radius(self) -> float:
        return self.neighbor_factor * self.spacing

    def refine(self) -> "GridSpec":
        """Half the spacing; every coarser edge set is kept so values never increase."""
        return replace(self, spacing=self.spacing / 2, coarse_spacings=self.coarse_spacings + (self.spacing,))

    def as_dict(self) -> dict:
        return {"spacing": self.spacing, "neighbor_factor": self.neighbor_factor,
                "edge_fraction": self.edge_fraction, "edge_bound": self.edge_bound, "seed": self.seed,
                "coarse_spacings": list(self.coarse_spacings)}


def _unique_min_edges(r, c, w):
    """Edge list keeping the smallest weight of each undirected pair, as (lo, hi, w).

    The COO to CSR conversion sums duplicates, and the same pair can appear at
    several node levels.
    """
    lo, hi = np.minimum(r, c), np.maximum(r, c)
    order = np.lexsort((w, hi, lo))
    lo, hi, w = lo[order], hi[order], w[order]
    first = np.ones(len(lo), dtype=bool)
    first[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
    return lo[first], hi[first], w[first]


class DistanceGraph:
    """Node graph over quasi-uniform interior points with contraction-based edge weights."""

    def __init__(self, domain: Domain, spec: GridSpec):
        self.domain = domain
        self.spec = spec
        n = self.n = domain.dimension
        lo, hi = domain.bounding_box()
        lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
        dim = lo.size
        spacings = sorted(set(spec.coarse_spacings) | {spec.spacing}, reverse=True)
        counts = [int(math.ceil(np.prod(hi - lo) / s**dim)) for s in spacings]
        if counts[-1] > 5_000_000:
            raise PreconditionError(f"grid too fine: {counts[-1]} proposals")
        sampler = qmc.Halton(d=dim, scramble=True, seed=spec.seed)
        raw = lo + (hi - lo) * sampler.random(counts[-1])
        P = _from_real(raw, n)
        inside = np.asarray(domain.contains(_dom(P, n)), dtype=bool).reshape(-1)
        idx = np.nonzero(inside)[0]
        self.points = P[idx]
        # node i belongs to level k if it was among the first counts[k] proposals
        self.level_sizes = [int(np.searchsorted(idx, c)) for c in counts]
        if len(self.points) == 0:
            raise NumericalError("no interior nodes at this spacing")
        self.mode = self._mode()
        self.delta, self.centers, self.radii = self.point_info(self.points)
        self.tree = cKDTree(_to_real(self.points))
        rows, cols, wts = [], [], []
        for s, size in zip(spacings, self.level_sizes):
            sub = cKDTree(_to_real(self.points[:size]))
            pairs = sub.query_pairs(spec.neighbor_factor * s, output_type="ndarray")
            if len(pairs):
                w = self.edge_weights(self.points[pairs[:, 0]], self.points[pairs[:, 1]],
                                      self._info(pairs[:, 0]), self._info(pairs[:, 1]))
                ok = np.isfinite(w)
                rows.append(pairs[ok, 0])
                cols.append(pairs[ok, 1])
                wts.append(w[ok])
        self.edges = _unique_min_edges(np.concatenate(rows) if rows else np.zeros(0, int),
                                       np.concatenate(cols) if cols else np.zeros(0, int),
                                       np.concatenate(wts) if wts else np.zeros(0))
        self.spacings = spacings
        # ladders stop at the largest component of the coarsest level, which is
        # the same for every refinement of this spec
        n0 = self.level_sizes[0]
        if rows:
            r0, c0 = rows[0], cols[0]
            G0 = coo_matrix((np.ones(len(r0)), (r0, c0)), shape=(n0, n0))
            _, labels = connected_components(G0, directed=False)
            big = np.argmax(np.bincount(labels))
            self.anchor_nodes = np.nonzero(labels == big)[0]
        else:
            self.anchor_nodes = np.arange(min(n0, 1))
        if len(self.anchor_nodes) == 0:
            raise NumericalError("coarsest node level is empty")
        self.coarse_tree = cKDTree(_to_real(self.points[self.anchor_nodes]))

    def _mode(self):
        eb = self.spec.edge_bound
        if eb == "auto":
            return "exact" if self.domain.has_exact_distance else "maximal_ball"
        if eb == "exact" and not self.domain.has_exact_distance:
            raise PreconditionError("exact edge weights unavailable on this domain")
        return eb

    def _info(self, idx):
        return self.delta[idx], self.centers[idx], self.radii[idx]

    def point_info(self, P):
        d, xi = self.domain.boundary_projection(_dom(P, self.n))
        d = np.asarray(d, dtype=float).reshape(-1)
        if self.mode == "maximal_ball":
            c, r = maximal_tangent_balls(self.domain, P, (d, xi))
        else:
            c, r = P, d
        return d, c, r

    def edge_weights(self, A, B, info_a, info_b):
        """Upper bounds for k(A_i, B_i); inf where the pair is not admissible."""
        da, ca, ra = info_a
        db, cb, rb = info_b
        dist = np.linalg.norm(A - B, axis=1)
        admissible = dist <= self.spec.edge_fraction * np.maximum(da, db)
        if self.mode == "exact":
            w = np.asarray(self.domain.exact_distance(_dom(A, self.n), _dom(B, self.n)), dtype=float)
            return np.where(admissible, w, np.inf)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(dist < da, np.arctanh(np.minimum(dist / da, 1.0)), np.inf)
            w = np.minimum(w, np.where(dist < db, np.arctanh(np.minimum(dist / db, 1.0)), np.inf))
        if self.mode == "maximal_ball":
            w = np.minimum(w, ball_distance(A, B, ca, ra))
            w = np.minimum(w, ball_distance(A, B, cb, rb))
        return np.where(admissible, w, np.inf)

    # -------------------------------------------------------------- ladders
    def _connections(self, P, info):
        """Admissible edges from rows P to graph nodes."""
        r = self.spec.neighbor_factor * max(self.spacings)
        out = []
        for i, hits in enumerate(self.tree.query_ball_point(_to_real(P), r)):
            if not hits:
                continue
            hits = np.asarray(hits)
            w = self.edge_weights(np.repeat(P[i:i + 1], len(hits), axis=0), self.points[hits],
                                  tuple(np.repeat(x[i:i + 1], len(hits), axis=0) for x in info),
                                  self._info(hits))
            ok = np.isfinite(w)
            out.extend((i, int(j), float(x)) for j, x in zip(hits[ok], w[ok]))
        return out

    def _connectable_to_coarse(self, p, d):
        r = self.spec.neighbor_factor * max(self.spacings)
        hits = self.coarse_tree.query_ball_point(_to_real(p[None])[0], r)
        if not hits:
            return False
        hits = self.anchor_nodes[np.asarray(hits)]
        dist = np.linalg.norm(self.points[hits] - p, axis=1)
        return bool(np.any(dist <= self.spec.edge_fraction * np.maximum(d, self.delta[hits])))

    def ladder(self, p):
        """Points leading from p to a region connected to the coarsest node level.

        Each step moves half the current depth along a central-difference
        gradient of the depth; the next point and its probes are evaluated in
        one batch, with the probe step taken from the previous depth.
        """
        dom, n = self.domain, self.n
        dim = 2 * n
        cur = _to_real(p[None])[0]
        h = 0.25 * float(np.asarray(dom.boundary_distance(_dom(p[None], n))).reshape(-1)[0])
        pts = []
        for _ in range(self.spec.ladder_max_steps):
            batch = np.concatenate([cur[None], cur + h * np.eye(dim), cur - h * np.eye(dim)])
            Pb = _from_real(batch, n)
            inside = np.asarray(dom.contains(_dom(Pb, n)), dtype=bool).reshape(-1)
            if not inside[0]:
                raise NoPathError("ladder left the domain; refine the grid")
            db = np.zeros(len(Pb))
            db[inside] = np.asarray(dom.boundary_distance(_dom(Pb[inside], n)), dtype=float).reshape(-1)
            d = db[0]
            pts.append(Pb[0])
            if self._connectable_to_coarse(Pb[0], d):
                return np.array(pts)
            grad = (db[1:dim + 1] - db[dim + 1:]) / (2 * h)
            g = np.linalg.norm(grad)
            if g == 0:
                xi = _rows(dom.nearest_boundary_point(_dom(Pb[:1], n)), n)[0]
                step_dir = _to_real(((Pb[0] - xi) / d)[None])[0]
            else:
                step_dir = grad / g
            cur = cur + 0.5 * d * step_dir
            h = 0.25 * d
        raise NoPathError("ladder did not reach the node graph; refine the grid")

    # ---------------------------------------------------------------- query
    def shortest_path(self, z, w):
        n = self.n
        Z = _rows(z, n)[0]
        W = _rows(w, n)[0]
        if np.array_equal(Z, W):
            return 0.0, np.array([Z]), None
        lz, lw = self.ladder(Z), self.ladder(W)
        extra = np.concatenate([lz, lw])
        N = len(self.points)
        m = len(extra)
        info = self.point_info(extra)
        rows, cols, wts = [], [], []
        # ladder chains
        for off, lad in ((0, lz), (len(lz), lw)):
            if len(lad) > 1:
                a = np.arange(off, off + len(lad) - 1)
                b = a + 1
                wl = self.edge_weights(extra[a], extra[b], tuple(x[a] for x in info), tuple(x[b] for x in info))
                if not np.all(np.isfinite(wl)):
                    # consecutive ladder points are within half the depth; fall back to the centred ball
                    wl = np.where(np.isfinite(wl), wl,
                                  np.arctanh(np.linalg.norm(extra[a] - extra[b], axis=1) / info[0][a]))
                rows.append(N + a)
                cols.append(N + b)
                wts.append(wl)
        conn = self._connections(extra, info)
        if conn:
            ci, cj, cw = map(np.asarray, zip(*conn))
            rows.append(N + ci.astype(int))
            cols.append(cj.astype(int))
            wts.append(cw.astype(float))
        # direct links between the two ladders
        ia, ib = np.meshgrid(np.arange(len(lz)), np.arange(len(lz), m), indexing="ij")
        ia, ib = ia.ravel(), ib.ravel()
        if ia.size:
            wd = self.edge_weights(extra[ia], extra[ib], tuple(x[ia] for x in info), tuple(x[ib] for x in info))
            ok = np.isfinite(wd)
            rows.append(N + ia[ok])
            cols.append(N + ib[ok])
            wts.append(wd[ok])
        # every new edge touches a ladder node, so only the new edges need deduplication
        r0, c0, w0 = self.edges
        r1, c1, w1 = _unique_min_edges(np.concatenate(rows).astype(int), np.concatenate(cols).astype(int),
                                       np.concatenate(wts))
        G = coo_matrix((np.maximum(np.concatenate([w0, w1]), 1e-300),
                        (np.concatenate([r0, r1]), np.concatenate([c0, c1]))), shape=(N + m, N + m)).tocsr()
        src, dst = N, N + len(lz)
        dist, pred = dijkstra(G, directed=False, indices=src, return_predecessors=True)
        if not np.isfinite(dist[dst]):
            raise NoPathError("endpoints lie in different graph components; refine the grid")
        allp = np.concatenate([self.points, extra])
        path = [dst]
        while path[-1] != src:
            path.append(pred[path[-1]])
        path = np.array(path[::-1])
        node_info = self._info(np.arange(N))
        path_info = tuple(np.concatenate([a, b])[path] for a, b in zip(node_info, info))
        return float(dist[dst]), allp[path], path_info

    def path_sample(self, z, w) -> tuple:
        val, pts, info = self.shortest_path(z, w)
        if len(pts) == 1:
            return val, PathSample(np.zeros(1), pts, "graph", self.n)
        keep = np.concatenate([[True], np.any(pts[1:] != pts[:-1], axis=1)])
        pts = pts[keep]
        info = tuple(x[keep] for x in info)
        steps = self.edge_weights(pts[:-1], pts[1:], tuple(x[:-1] for x in info), tuple(x[1:] for x in info))
        steps = np.where(np.isfinite(steps), steps, 0.0)
        times = np.concatenate([[0.0], np.cumsum(steps)])
        # the cumulative edge weight equals the Dijkstra value up to rounding
        return val, PathSample(times, pts, f"graph(spacing={self.spec.spacing},mode={self.mode})", self.n)


_GRAPH_CACHE = {}


def get_graph(domain: Domain, spec: GridSpec) -> DistanceGraph:
    key = (id(domain), spec)
    g = _GRAPH_CACHE.get(key)
    if g is None or g.domain is not domain:
        g = DistanceGraph(domain, spec)
        _GRAPH_CACHE[key] = g
    return g


def distance_upper_graph(domain: Domain, z, w, grid_spec: Optional[GridSpec] = None):
    """Shortest-path upper bound for k(z, w) and the realising path."""
    grid_spec = grid_spec or GridSpec()
    n = domain.dimension
    if not (np.all(domain.contains(z)) and np.all(domain.contains(w))):
        raise DomainError("both points must be interior")
    if np.array_equal(_rows(z, n), _rows(w, n)):
        return 0.0, PathSample(np.zeros(1), _rows(z, n), "graph", n)
    return get_graph(domain, grid_spec).path_sample(z, w)


# ------------------------------------------------------------ lower bounds
def distance_lower_linear(domain: Domain, z, w):
    """|z - w| / R for an enclosing ball of radius R."""
    n = domain.dimension
    if not (np.all(domain.contains(z)) and np.all(domain.contains(w))):
        raise DomainError("both points must be interior")
    _, R = domain.enclosing_ball()
    diff = _rows(z, n) - _rows(w, n)
    out = np.linalg.norm(diff, axis=1) / R
    return float(out[0]) if out.size == 1 else out


def distance_lower_enclosing_ball(domain: Domain, z, w):
    """Exact distance of the enclosing ball (domain monotonicity)."""
    n = domain.dimension
    c, R = domain.enclosing_ball()
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    Z, W = _rows(z, n), _rows(w, n)
    out = ball_distance(Z, W, c[None, :], np.full(len(Z), R * (1 + 1e-12)))
    return float(out[0]) if out.size == 1 else out


def supporting_halfspace(domain: Domain, xi, outward, tol=1e-12, samples=20001) -> bool:
    """Check (by boundary sampling) that the domain lies in Re<z - xi, outward> < 0."""
    n = domain.dimension
    xi = _rows(xi, n)[0]
    nu = _rows(outward, n)[0]
    if isinstance(domain, CaltropDomain):
        if domain.ball_radius is not None:
            return False
        s = domain.spikes[0]
        xc = s.to_chart(xi[None])[0]
        vc = nu @ s.frame.conj()
        # linear functional in chart real coordinates: axis part and transverse part
        ax = vc[-1].real
        trans = np.sqrt(np.sum(np.abs(vc[:-1]) ** 2) + vc[-1].imag ** 2)
        xs = np.linspace(0.0, s.length, samples)
        psi = s.profile._eval(xs, 0)
        base = float(np.real(np.vdot(nu, xi - s.tip)))
        # Re<tip + zeta - xi, nu> maximised over the meridian circle
        vals = ax * xs + trans * psi - base
        return bool(np.max(vals) <= tol * max(1.0, abs(base)))
    if n == 1 and hasattr(domain, "boundary"):
        b = domain.boundary.samples
        return bool(np.max(np.real((b - xi[0]) * np.conj(nu[0]))) <= tol)
    if hasattr(domain, "radius"):
        return True  # discs and balls are convex
    return False


def _outward_normal(domain, P):
    n = domain.dimension
    xi = _rows(domain.nearest_boundary_point(_dom(P, n)), n)
    d = np.linalg.norm(P - xi, axis=1)
    return xi, (xi - P) / d[:, None]


def distance_lower_halfspace(domain: Domain, z, w, anchors=None):
    """Half-plane lower bound through verified supporting hyperplanes.

    Candidate hyperplanes are the tangent ones at the nearest boundary points
    of z and w (plus any (xi, outward) anchors given); only those verified to
    support the whole domain are used.
    """
    n = domain.dimension
    Z, W = _rows(z, n), _rows(w, n)
    cands = []
    for P in (Z, W):
        xi, nu = _outward_normal(domain, P)
        cands.append((xi[0], nu[0]))
    for a in anchors or []:
        cands.append((_rows(a[0], n)[0], _rows(a[1], n)[0]))
    best = 0.0
    for xi, nu in cands:
        if not supporting_halfspace(domain, xi, nu):
            continue
        lz = np.sum((xi - Z[0]) * np.conj(nu))
        lw = np.sum((xi - W[0]) * np.conj(nu))
        if lz.real <= 0 or lw.real <= 0:
            continue
        best = max(best, float(half_plane_distance(lz, lw)))
    return best


# ------------------------------------------------------------ spike bounds
@dataclass(frozen=True)
class SpikeConstants:
    """Chart data used by the spike bounds of one spike."""

    a_levi: float  # Levi chart length A'
    a_second: float  # A'' of the lower bound
    upper_comparability: float  # sup Psi(x) / x^p on (0, A'')
    b: float
    p: float


def spike_constants(caltrop: CaltropDomain, j: int = 0, b_const: Optional[float] = None,
                    grid: int = 4001) -> SpikeConstants:
    chart = caltrop.spikes[j]
    prof = chart.profile
    b = math.sqrt(DEFAULT_LEVI_FLOOR / DEFAULT_ALPHA_S) if b_const is None else float(b_const)
    a1 = levi_chart_length(chart)
    cap = min(prof.spike_length, a1)
    xs = np.linspace(0.0, prof.spike_length, grid)[1:]
    below_one = xs[prof._eval(xs, 0) >= 1.0]
    if below_one.size:
        cap = min(cap, float(below_one[0]))
    if caltrop.ball_radius is not None:
        # keep the chart region away from the ball
        cap = min(cap, float(np.linalg.norm(chart.tip)) - caltrop.ball_radius)
    # delta / (Psi - S) > 1/2 on a sample grid of meridian points
    xg = np.geomspace(cap * 1e-6, cap, 200)
    frac = np.linspace(0.0, 0.999, 40)
    X, F = np.meshgrid(xg, frac, indexing="ij")
    psi = prof._eval(X, 0)
    S = F * psi
    d, _ = chart.meridian_distance(X.ravel(), S.ravel())
    ratio = (d / (psi - S).ravel()).reshape(X.shape)
    bad_rows = np.nonzero(np.any(ratio <= 0.5, axis=1))[0]
    if bad_rows.size:
        cap = float(xg[bad_rows[0]]) if bad_rows[0] > 0 else 0.0
    if cap <= 0:
        raise ConstructionError("no chart length satisfies the comparability test")
    xs = np.linspace(0.0, cap, grid)[1:]
    C = float(np.max(prof._eval(xs, 0) / xs**prof.p))
    return SpikeConstants(a1, cap, C, b, prof.p)


def _spike_F(x, k: SpikeConstants):
    half = 0.5 * k.a_second
    x = np.minimum(np.asarray(x, dtype=float), half)
    return (k.b / k.upper_comparability) * (x ** (1 - k.p) - half ** (1 - k.p)) / (k.p - 1)


def spike_anchor(caltrop: CaltropDomain, j: int = 0, constants: Optional[SpikeConstants] = None):
    k = constants or spike_constants(caltrop, j)
    chart = caltrop.spikes[j]
    zeta = np.zeros(caltrop.dimension, dtype=complex)
    zeta[-1] = 0.5 * k.a_second
    return chart.from_chart(zeta)


def spike_distance_lower(caltrop: CaltropDomain, z0, z, b_const: Optional[float] = None, j: int = 0,
                         constants: Optional[SpikeConstants] = None) -> float:
    """(b/C) * integral_{Re z_n}^{A''/2} t^-p dt, a lower bound for k(z0, z)."""
    k = constants or spike_constants(caltrop, j, b_const)
    chart = caltrop.spikes[j]
    z = _as_points(z, caltrop.dimension)
    x, _ = chart.meridian(z)
    if not (np.all(caltrop.contains(z)) and np.all(x > 0) and np.all(x < 0.5 * k.a_second)):
        raise DomainError("z must lie in the spike chart with 0 < Re z_n < A''/2")
    return _spike_F(x, k) if np.ndim(x) else float(_spike_F(x, k))


def spike_projection_lower(caltrop: CaltropDomain, z, w, j: int = 0,
                           constants: Optional[SpikeConstants] = None) -> float:
    """|F(z) - F(w)| with F the clamped spike functional: F is 1-Lipschitz for k."""
    k = constants or spike_constants(caltrop, j)
    chart = caltrop.spikes[j]
    vals = []
    for p in (z, w):
        x, _ = chart.meridian(_as_points(p, caltrop.dimension))
        x = np.asarray(x, dtype=float)
        in_chart = bool(chart.in_body(_as_points(p, caltrop.dimension))) and 0 < x < k.a_second
        vals.append(float(_spike_F(x, k)) if in_chart else 0.0)
    return abs(vals[0] - vals[1])


@dataclass(frozen=True)
class SpikeEmbedding:
    chain: MapChain
    B: float
    C2: float
    c_lower: float
    inclusion_samples: int
    violations: int


def fit_spike_embedding(caltrop: CaltropDomain, j: int = 0, M: float = 2.0,
                        n_samples: int = 10_000, seed: int = 0) -> SpikeEmbedding:
    """Choose (a, h) with alpha = 1/(p-1) so that translates of Q fit in the spike.

    Needs |Im| < c Re^p on Q (c the lower comparability constant), far point
    below half the power-part length, and B < min(o, far/2).
    """
    chart = caltrop.spikes[j]
    prof = chart.profile
    p = prof.p
    alpha = 1.0 / (p - 1.0)
    sl = prof.spike_length
    xs = np.geomspace(sl * 1e-8, sl, 2000)
    c_low = float(np.min(prof._eval(xs, 0) / xs**p))
    a = max((2.0 / sl) ** (1.0 / alpha), 1.0)
    h = 0.9 * c_low / (M * alpha)
    for _ in range(60):
        if alpha * math.atan2(h, a) < math.pi / 2:
            chain = MapChain(alpha, a, h)
            C2 = _q_boundary_ratio(chain, p)
            if C2 < 0.95 * c_low:
                break
        h *= 0.8
    else:
        raise ConstructionError("could not fit (a, h) for the spike embedding")
    B = 0.9 * min(chain.base_point, 0.5 * chain.far_point)
    emb = SpikeEmbedding(chain, B, C2, c_low, 0, 0)
    return emb


def _q_boundary_ratio(chain: MapChain, p: float) -> float:
    u = np.geomspace(1e-12, 1.0, 4000)
    y = np.linspace(-chain.h, chain.h, 4000)
    pts = np.concatenate([chain.from_strip_domain(chain.a / u + 1j * chain.h),
                          chain.from_strip_domain(chain.a + 1j * y)])
    if np.any(pts.real <= 0):
        return np.inf
    return float(np.max(np.abs(pts.imag) / pts.real**p))


def sample_q_points(chain: MapChain, count: int, seed: int = 0, t_max: float = 1e6):
    """Points of Q from the strip parametrisation, crowding both the tip and the boundary."""
    rng = np.random.default_rng(seed)
    t = 10.0 ** rng.uniform(-9, math.log10(t_max), count)
    y = chain.h * np.tanh(rng.normal(0, 2.0, count))
    s = chain.a + t + 1j * y
    return chain.from_strip_domain(s)


def _embed(caltrop, j, emb, w, zeta):
    """Psi_{j,w}(zeta) = chart^-1(omega', x0 + i Im omega_n + zeta)."""
    chart = caltrop.spikes[j]
    om = chart.to_chart(_as_points(w, caltrop.dimension))
    S = math.sqrt(float(np.sum(np.abs(om[:-1]) ** 2) + om[-1].imag ** 2))
    x0 = float(chart.profile.inverse(S))
    zeta = np.atleast_1d(np.asarray(zeta, dtype=complex))
    rows = np.repeat(om[None, :], zeta.size, axis=0)
    rows[:, -1] = x0 + 1j * om[-1].imag + zeta
    return chart.from_chart(rows), x0, om


def spike_inclusion_check(caltrop: CaltropDomain, w, emb: SpikeEmbedding, j: int = 0,
                          n_samples: int = 10_000, seed: int = 0) -> dict:
    """Map n_samples points of Q through Psi_{j,w} and count membership failures."""
    q = sample_q_points(emb.chain, n_samples, seed)
    img, x0, _ = _embed(caltrop, j, emb, w, q)
    viol = int(np.sum(~caltrop.contains(img)))
    return {"samples": n_samples, "violations": viol, "x0": x0, "seed": seed}


def spike_distance_upper(caltrop: CaltropDomain, w, j: int = 0, emb: Optional[SpikeEmbedding] = None,
                         check_samples: int = 2000, seed: int = 0):
    """Bound C + (pi/4h) delta(w)^-(p-1) on k(z_w, w) and the anchor z_w = Psi_{j,w}(o).

    Returns (bound, anchor, details); details carries the exact model value
    k_Q(o, x), which is itself a valid (sharper) bound.
    """
    emb = emb or fit_spike_embedding(caltrop, j)
    chart = caltrop.spikes[j]
    w = _as_points(w, caltrop.dimension)
    x, _ = chart.meridian(w)
    if not (caltrop.contains(w) and 0 < x < emb.B / 2):
        raise DomainError("w must lie in the spike chart with Re w_n < B/2")
    chain = emb.chain
    o = chain.base_point
    anchor, x0, om = _embed(caltrop, j, emb, w, o)
    xq = float(x - x0)
    if check_samples:
        chk = spike_inclusion_check(caltrop, w, emb, j, check_samples, seed)
        if chk["violations"]:
            raise ConstructionError(f"embedding leaves the domain at {chk['violations']} samples; tighten (a, h)")
    exact_q = float(kobayashi_distance_Q(chain, o, xq))
    delta = float(caltrop.boundary_distance(w))
    p = chart.profile.p
    bound = tip_growth_constant(chain) + (math.pi / (4 * chain.h)) * delta ** (-(p - 1))
    if not (0 < xq < o):
        bound = exact_q
    return bound, anchor[0], {"exact_model_value": exact_q, "model_point": xq, "delta": delta,
                              "alpha": chain.alpha, "a": chain.a, "h": chain.h, "B": emb.B}


@dataclass(frozen=True)
class CollarSpec:
    radius: float
    samples: int = 512


def smooth_collar_upper(domain: Domain, w, collar_spec: CollarSpec):
    """log(sqrt 2) + (1/2) log(max(R,1)/delta(w)) on k(z^w, w), z^w = xi^w + R eta^w."""
    n = domain.dimension
    W = _rows(w, n)
    if not np.all(domain.contains(_dom(W, n))):
        raise DomainError("w must be interior")
    R = float(collar_spec.radius)
    xi, out = _outward_normal(domain, W)
    eta = -out[0]
    delta = float(np.linalg.norm(W[0] - xi[0]))
    if delta > R:
        raise PreconditionError("w is deeper than the collar radius")
    ang = np.exp(2j * np.pi * np.arange(collar_spec.samples) / collar_spec.samples)
    rings = []
    for frac in (0.25, 0.5, 0.75, 0.999):
        rings.append(xi[0] + (R + R * frac * ang)[:, None] * eta[None, :])
    pts = np.concatenate(rings)
    if not np.all(domain.contains(_dom(pts, n))):
        raise DomainError("inner disc xi + D(R; R) eta is not contained in the domain")
    anchor = xi[0] + R * eta
    t = delta / R
    exact_disc = 0.5 * math.log((2 - t) / t)
    bound = LOG_SQRT2 + 0.5 * math.log(max(R, 1.0) / delta)
    return bound, _dom(anchor[None], n)[0] if n == 1 else anchor, {"disc_value": exact_disc, "delta": delta}


# ------------------------------------------------------------ intervals
def _lower_methods(domain, z, w, anchors=None):
    out = {}
    try:
        out["linear"] = float(distance_lower_linear(domain, z, w))
        out["enclosing_ball"] = float(distance_lower_enclosing_ball(domain, z, w))
    except PreconditionError:
        pass
    if anchors is None and isinstance(domain, _ChainDomain) and domain.in_right_half_plane:
        # Re z > 0 supports the domain at the cusp tip
        anchors = [(0j, -1 + 0j)]
    out["halfspace"] = distance_lower_halfspace(domain, z, w, anchors)
    if isinstance(domain, CaltropDomain):
        for j in range(len(domain.spikes)):
            out[f"spike_projection[{j}]"] = spike_projection_lower(domain, z, w, j)
    return out


def distance_lower(domain: Domain, z, w, use_exact: bool = False) -> float:
    """Best lower bound on k(z, w) without building a graph."""
    if not (np.all(domain.contains(z)) and np.all(domain.contains(w))):
        raise DomainError("both points must be interior")
    if use_exact and domain.has_exact_distance:
        return float(domain.exact_distance(z, w))
    return float(max(_lower_methods(domain, z, w).values()))


def distance_interval(domain: Domain, z, w, grid_spec: Optional[GridSpec] = None,
                      use_exact: bool = False, collar: Optional[CollarSpec] = None) -> BoundInterval:
    """Combine every available bound on k(z, w) into a BoundInterval."""
    n = domain.dimension
    if not (np.all(domain.contains(z)) and np.all(domain.contains(w))):
        raise DomainError("both points must be interior")
    if np.array_equal(_rows(z, n), _rows(w, n)):
        return BoundInterval(0.0, 0.0, "identical", "identical")
    lowers = _lower_methods(domain, z, w)
    uppers = {}
    grid_spec = grid_spec or GridSpec()
    if n == 1 or grid_spec is not None:
        try:
            val, _ = distance_upper_graph(domain, z, w, grid_spec)
            uppers[f"graph(spacing={grid_spec.spacing})"] = val
        except (NoPathError, PreconditionError):
            pass
    if isinstance(domain, CaltropDomain):
        st = _stitched_upper(domain, z, w, grid_spec, collar)
        if st is not None:
            uppers["anchor_stitch"] = float(st)
    if use_exact and domain.has_exact_distance:
        ex = float(domain.exact_distance(z, w))
        lowers["exact"] = ex
        uppers["exact"] = ex
    if not uppers:
        raise NumericalError("no upper bound available for this pair")
    lm = max(lowers, key=lowers.get)
    um = min(uppers, key=uppers.get)
    details = {"lowers": lowers, "uppers": uppers, "grid": grid_spec.as_dict()}
    return BoundInterval(lowers[lm], uppers[um], lm, um, details)


def _endpoint_bound(domain, p, collar):
    """(bound on k(anchor, p), anchor) from the spike embedding or the collar disc."""
    for j in range(len(domain.spikes)):
        try:
            emb = fit_spike_embedding(domain, j)
            b, anc, _ = spike_distance_upper(domain, p, j, emb, check_samples=500)
            return b, anc
        except DomainError:
            continue
    if collar is not None:
        try:
            b, anc, _ = smooth_collar_upper(domain, p, collar)
            return b, anc
        except (DomainError, PreconditionError):
            pass
    return 0.0, _as_points(p, domain.dimension)


def _stitched_upper(domain, z, w, grid_spec, collar):
    try:
        bz, az = _endpoint_bound(domain, z, collar)
        bw, aw = _endpoint_bound(domain, w, collar)
        mid, _ = distance_upper_graph(domain, az, aw, grid_spec)
    except (NoPathError, PreconditionError, ConstructionError, DomainError):
        return None
    return bz + mid + bw
