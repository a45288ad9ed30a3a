"""Batch runner: one subcommand per module, one structured config file per run.

Every run writes into a temporary directory next to the requested output
directory and renames it into place only after all artifacts are written,
so a failed run leaves nothing behind.  Floats are written with ``repr`` and
no timestamps are recorded, which keeps reruns byte-identical.
"""

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import shutil
import sys
import tempfile
from importlib import metadata
from pathlib import Path

import numpy as np
import yaml

from .errors import ArtifactError, PreconditionError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_INCONCLUSIVE = 4

_REQUIRED = object()
_TOP_KEYS = {"seed", "output", "domain", "params", "tolerances", "require_conclusive"}


# ------------------------------------------------------------ config access
def load_config(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read config: {exc}") from None
    try:
        doc = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ValidationError(f"config does not parse: {exc}") from None
    if not isinstance(doc, dict):
        raise ValidationError("config must be a mapping")
    unknown = sorted(set(doc) - _TOP_KEYS)
    if unknown:
        raise ValidationError(f"unknown key {unknown[0]!r}", (unknown[0],))
    return doc


def _get(block: dict, key: str, path: tuple, kind=None, default=_REQUIRED):
    if key not in block:
        if default is _REQUIRED:
            raise ValidationError("required field is missing", path + (key,))
        return default
    val = block[key]
    if kind is None:
        return val
    where = path + (key,)
    if kind is bool:
        if not isinstance(val, bool):
            raise ValidationError("expected a boolean", where)
        return val
    if kind is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ValidationError("expected an integer", where)
        return val
    if kind is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ValidationError("expected a finite number", where)
        return float(val)
    if kind is str:
        if not isinstance(val, str):
            raise ValidationError("expected a string", where)
        return val
    if kind is dict:
        if not isinstance(val, dict):
            raise ValidationError("expected a mapping", where)
        return val
    if kind is list:
        if not isinstance(val, list):
            raise ValidationError("expected a list", where)
        return val
    raise TypeError(kind)


def _check_keys(block: dict, allowed, path: tuple):
    extra = sorted(set(block) - set(allowed))
    if extra:
        raise ValidationError(f"unknown key {extra[0]!r}", path + (extra[0],))


def _positive(x, path):
    if not x > 0:
        raise ValidationError("must be positive", path)
    return x


def _complex(val, path) -> complex:
    if isinstance(val, (int, float)) and not isinstance(val, bool):
        return complex(val)
    if isinstance(val, list) and len(val) == 2 and all(isinstance(v, (int, float)) and not isinstance(v, bool)
                                                      for v in val):
        return complex(val[0], val[1])
    raise ValidationError("expected a number or a [re, im] pair", path)


def _point(val, n: int, path):
    """[re, im] for planar domains; a list of n such pairs otherwise."""
    if n == 1:
        return _complex(val, path)
    if not isinstance(val, list) or len(val) != n:
        raise ValidationError(f"expected a list of {n} [re, im] pairs", path)
    return np.array([_complex(v, path + (i,)) for i, v in enumerate(val)])


def _float_list(val, path, increasing=False):
    if not isinstance(val, list) or not val:
        raise ValidationError("expected a nonempty list of numbers", path)
    out = []
    for i, v in enumerate(val):
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise ValidationError("expected a finite number", path + (i,))
        out.append(float(v))
    if increasing and any(b <= a for a, b in zip(out, out[1:])):
        raise ValidationError("values must be strictly increasing", path)
    return out


# ------------------------------------------------------------ domains
_DOMAIN_KEYS = {
    "disc": {"kind", "center", "radius"},
    "ball": {"kind", "n", "radius"},
    "polydisc": {"kind", "radii"},
    "cusp_model": {"kind", "alpha", "a", "h", "resolution"},
    "inverted_strip": {"kind", "a", "h", "resolution"},
    "caltrop": {"kind", "p", "A", "B", "n"},
    "document": {"kind", "path"},
}


def build_domain(block, path=("domain",), base_dir: Path = Path(".")):
    from . import domains as dm

    if not isinstance(block, dict):
        raise ValidationError("expected a mapping", path)
    kind = _get(block, "kind", path, str)
    if kind not in _DOMAIN_KEYS:
        raise ValidationError(f"unknown domain kind {kind!r}; expected one of {sorted(_DOMAIN_KEYS)}",
                              path + ("kind",))
    _check_keys(block, _DOMAIN_KEYS[kind], path)
    num = lambda k, d=_REQUIRED: _get(block, k, path, float, d)  # noqa: E731
    try:
        if kind == "disc":
            return dm.Disc(_complex(block.get("center", 0.0), path + ("center",)),
                           _positive(num("radius", 1.0), path + ("radius",)))
        if kind == "ball":
            return dm.Ball(_get(block, "n", path, int, 2), _positive(num("radius", 1.0), path + ("radius",)))
        if kind == "polydisc":
            return dm.Polydisc(_float_list(_get(block, "radii", path), path + ("radii",)))
        if kind in ("cusp_model", "inverted_strip"):
            res = _get(block, "resolution", path, int, dm.DEFAULT_ARC_RESOLUTION)
            if kind == "cusp_model":
                return dm.CuspModelDomain(num("alpha", 2.0), num("a", 1.0), num("h", 1.0), res)
            return dm.InvertedStripDomain(num("a", 1.0), num("h", 1.0), res)
        if kind == "caltrop":
            return dm.build_single_spike_caltrop(num("p", 1.25), num("A", 1.0), num("B", 0.5),
                                                 n=_get(block, "n", path, int, 2))
        doc_path = base_dir / _get(block, "path", path, str)
        try:
            return dm.loads(doc_path.read_text())
        except OSError as exc:
            raise ValidationError(f"cannot read domain document: {exc}", path + ("path",)) from None
    except ValidationError:
        raise
    except PreconditionError as exc:
        raise ValidationError(str(exc), path) from None


# ------------------------------------------------------------ writers
def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.ndarray):
        return _plain(x.tolist())
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if hasattr(x, "value") and isinstance(getattr(x, "value"), str):
        return x.value
    return x


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=2) + "\n"


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def dumps_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def _coords(z):
    """Flatten a point to [re0, im0, re1, im1, ...]."""
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    return [float(c) for v in z for c in (v.real, v.imag)]


def _coord_header(n):
    return [f"{part}{i}" for i in range(n) for part in ("re", "im")]


class Run:
    """Collects artifacts in memory; ``commit`` writes them atomically."""

    def __init__(self, subcommand, config, seed):
        self.subcommand = subcommand
        self.config = config
        self.seed = seed
        self.files = {}
        self.inconclusive = []

    def add(self, name, text):
        self.files[name] = text

    def manifest(self):
        cfg = json.dumps(_plain(self.config), sort_keys=True)
        versions = {"python": platform.python_version()}
        for pkg in ("artifact", "numpy", "scipy", "mpmath", "pyyaml"):
            try:
                versions[pkg] = metadata.version(pkg)
            except metadata.PackageNotFoundError:
                versions[pkg] = None
        return {"subcommand": self.subcommand, "config_sha256": hashlib.sha256(cfg.encode()).hexdigest(),
                "seed": self.seed, "versions": versions, "tolerances": self.config.get("tolerances", {}),
                "inconclusive": self.inconclusive,
                "files": {k: hashlib.sha256(v.encode()).hexdigest() for k, v in sorted(self.files.items())}}

    def commit(self, out_dir: Path):
        out_dir = Path(out_dir)
        if out_dir.exists() and not (out_dir / "manifest.json").is_file():
            raise ValidationError("output directory exists and is not a previous run", ("output",))
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        tmp = Path(tempfile.mkdtemp(prefix=".tmp-", dir=out_dir.parent))
        try:
            for name, text in sorted(self.files.items()):
                (tmp / name).write_text(text)
            (tmp / "manifest.json").write_text(dumps_json(self.manifest()))
            if out_dir.exists():
                shutil.rmtree(out_dir)
            os.replace(tmp, out_dir)
        finally:
            if tmp.exists():
                shutil.rmtree(tmp)


def _grid_spec(block, path):
    from .distance_estimators import GridSpec

    if block is None:
        return None
    if not isinstance(block, dict):
        raise ValidationError("expected a mapping", path)
    _check_keys(block, {"spacing", "neighbor_factor", "edge_fraction", "edge_bound", "seed"}, path)
    kw = {}
    for k in ("spacing", "neighbor_factor", "edge_fraction"):
        if k in block:
            kw[k] = _positive(_get(block, k, path, float), path + (k,))
    if "edge_bound" in block:
        eb = _get(block, "edge_bound", path, str)
        if eb not in ("auto", "exact", "maximal_ball"):
            raise ValidationError("expected auto, exact or maximal_ball", path + ("edge_bound",))
        kw["edge_bound"] = eb
    if "seed" in block:
        kw["seed"] = _get(block, "seed", path, int)
    return GridSpec(**kw)


# ------------------------------------------------------------ subcommands
def cmd_model_domain(run, dom, params, seed):
    from .conformal import cusp_exponent_check
    from .domains import _ChainDomain, dumps

    P = ("params",)
    _check_keys(params, {"samples", "M"}, P)
    if not isinstance(dom, _ChainDomain):
        raise ValidationError("model-domain needs kind cusp_model or inverted_strip", ("domain", "kind"))
    run.add("domain.json", dumps(dom) + "\n")
    rep = cusp_exponent_check(dom.chain, _get(params, "samples", P, int, 200), _get(params, "M", P, float, 2.0))
    rep = dict(rep)
    rep.update(base_point=dom.base_point, far_point=dom.far_point,
               in_right_half_plane=getattr(dom, "in_right_half_plane", None))
    run.add("cusp_exponent.json", dumps_json(rep))


def cmd_caltrop(run, dom, params, seed):
    from .distance_estimators import spike_constants
    from .domains import CaltropDomain, dumps

    P = ("params",)
    _check_keys(params, {"audit_samples", "levi_grid"}, P)
    if not isinstance(dom, CaltropDomain):
        raise ValidationError("caltrop needs kind caltrop", ("domain", "kind"))
    run.add("domain.json", dumps(dom) + "\n")
    audit = dom.audit(_get(params, "audit_samples", P, int, 2000), seed)
    grid = _get(params, "levi_grid", P, int, 4001)
    rows = []
    for j, chart in enumerate(dom.spikes):
        xs = np.linspace(0.0, chart.length, grid)[1:-1]
        levi = 0.5 - 0.5 * chart.profile.levi_quantity(xs)
        rows.append({"spike": j, "levi_min": float(levi.min()), "threshold": 0.25,
                     "passed": bool(levi.min() >= 0.25)})
    consts = [_plain(vars(spike_constants(dom, j))) for j in range(len(dom.spikes))]
    run.add("audit.json", dumps_json({"audit": audit, "levi": rows, "spike_constants": consts,
                                      "construction": dom.construction}))


def cmd_metric(run, dom, params, seed):
    from .metric_estimators import m_profile, metric_interval

    P = ("params",)
    _check_keys(params, {"points", "r_grid", "samples_per_r", "directions_per_point"}, P)
    n = dom.dimension
    pts = _get(params, "points", P, list, [])
    rows = []
    for i, item in enumerate(pts):
        where = P + ("points", i)
        if not isinstance(item, dict):
            raise ValidationError("expected a mapping with z and v", where)
        _check_keys(item, {"z", "v"}, where)
        z = _point(_get(item, "z", where), n, where + ("z",))
        v = _point(_get(item, "v", where), n, where + ("v",))
        iv = metric_interval(dom, z, v)
        rows.append(_coords(z) + _coords(v) + [iv.lower, iv.upper, iv.lower_method, iv.upper_method])
    run.add("metric_intervals.csv", dumps_csv(_coord_header(n) + ["v_" + h for h in _coord_header(n)]
                                              + ["lower", "upper", "lower_method", "upper_method"], rows))
    if "r_grid" in params:
        prof = m_profile(dom, _float_list(params["r_grid"], P + ("r_grid",), increasing=True),
                         _get(params, "directions_per_point", P, int, 1), seed,
                         _get(params, "samples_per_r", P, int, 1000))
        run.add("m_profile.csv", prof.to_csv())
        run.add("m_profile_methods.json", dumps_json({"upper_method": prof.upper_method,
                                                      "lower_method": prof.lower_method}))


def _pairs(dom, params, P, seed):
    from .domains import sample_interior

    n = dom.dimension
    if "pairs" in params:
        out = []
        for i, pr in enumerate(_get(params, "pairs", P, list)):
            where = P + ("pairs", i)
            if not isinstance(pr, list) or len(pr) != 2:
                raise ValidationError("expected a [z, w] pair", where)
            out.append((_point(pr[0], n, where + (0,)), _point(pr[1], n, where + (1,))))
        return out
    count = _get(params, "random_pairs", P, int)
    rr = _float_list(_get(params, "r_range", P, list, [1e-3, 0.2]), P + ("r_range",), increasing=True)
    smp = sample_interior(dom, tuple(rr), 2 * count, seed=seed).points
    return [(smp[2 * i], smp[2 * i + 1]) for i in range(count)]


def cmd_distance(run, dom, params, seed):
    from .distance_estimators import distance_interval, distance_upper_graph

    P = ("params",)
    _check_keys(params, {"pairs", "random_pairs", "r_range", "grid", "use_exact", "paths"}, P)
    n = dom.dimension
    spec = _grid_spec(params.get("grid"), P + ("grid",))
    use_exact = _get(params, "use_exact", P, bool, False)
    rows, path_rows = [], []
    for i, (z, w) in enumerate(_pairs(dom, params, P, seed)):
        iv = distance_interval(dom, z, w, spec, use_exact=use_exact)
        exact = float(dom.exact_distance(z, w)) if dom.has_exact_distance else float("nan")
        rows.append([i] + _coords(z) + _coords(w) + [iv.lower, iv.upper, exact, iv.lower_method, iv.upper_method])
        if _get(params, "paths", P, bool, False):
            _, path = distance_upper_graph(dom, z, w, spec)
            for t, p in zip(path.times, path.domain_points()):
                path_rows.append([i, float(t)] + _coords(p))
    hdr = _coord_header(n)
    run.add("intervals.csv", dumps_csv(["pair"] + ["z_" + h for h in hdr] + ["w_" + h for h in hdr]
                                       + ["lower", "upper", "exact", "lower_method", "upper_method"], rows))
    if path_rows:
        run.add("paths.csv", dumps_csv(["pair", "t"] + hdr, path_rows))


def _growth(block, path):
    from .criteria import GrowthBound

    if not isinstance(block, dict):
        raise ValidationError("expected a mapping", path)
    fam = _get(block, "family", path, str)
    if fam == "power":
        _check_keys(block, {"family", "q", "C0", "C1"}, path)
        return GrowthBound.power(_get(block, "q", path, float), _get(block, "C0", path, float, 0.0),
                                 _get(block, "C1", path, float, 1.0))
    if fam == "logarithmic":
        _check_keys(block, {"family", "C", "alpha"}, path)
        return GrowthBound.logarithmic(_get(block, "C", path, float, 0.0), _get(block, "alpha", path, float, 1.0))
    raise ValidationError("expected power or logarithmic", path + ("family",))


def cmd_criteria(run, dom, params, seed):
    from .criteria import (Verdict, general_visibility_integral_test, goldilocks_integral_test,
                           non_goldilocks_witness, power_surrogate)
    from .domains import CaltropDomain
    from .metric_estimators import m_profile

    P = ("params",)
    _check_keys(params, {"m_source", "surrogate", "r_grid", "samples_per_r", "r0", "f", "witness_x",
                         "tail_fraction"}, P)
    src = _get(params, "m_source", P, str, "profile")
    r0 = _get(params, "r0", P, float, 0.1)
    tf = _get(params, "tail_fraction", P, float, 0.5)
    if src == "surrogate":
        sb = _get(params, "surrogate", P, dict, {"s": 0.5})
        _check_keys(sb, {"s", "c"}, P + ("surrogate",))
        table = power_surrogate(_get(sb, "s", P + ("surrogate",), float), _get(sb, "c", P + ("surrogate",),
                                                                                 float, 1.0))
    elif src == "profile":
        grid = _float_list(_get(params, "r_grid", P, list, np.geomspace(1e-4, 1e-1, 13).tolist()),
                           P + ("r_grid",), increasing=True)
        prof = m_profile(dom, grid, seed=seed, samples_per_r=_get(params, "samples_per_r", P, int, 200),
                         compute_lower=False)
        run.add("m_profile.csv", prof.to_csv())
        table = prof
    else:
        raise ValidationError("expected profile or surrogate", P + ("m_source",))
    out = {"goldilocks": goldilocks_integral_test(table, r0, tf).to_dict()}
    verdicts = [out["goldilocks"]["verdict"]]
    if "f" in params:
        rep = general_visibility_integral_test(table, _growth(params["f"], P + ("f",)), r0, tf).to_dict()
        out["general_visibility"] = rep
        verdicts.append(rep["verdict"])
    if "witness_x" in params:
        if not isinstance(dom, CaltropDomain):
            raise ValidationError("the witness needs a caltrop domain", P + ("witness_x",))
        xs = _float_list(params["witness_x"], P + ("witness_x",))
        out["non_goldilocks_witness"] = non_goldilocks_witness(dom, xs).to_dict()
        verdicts.append(out["non_goldilocks_witness"]["verdict"])
    run.inconclusive = [v for v in verdicts if v == Verdict.INCONCLUSIVE.value]
    run.add("criteria.json", dumps_json(out))


def cmd_geodesic(run, dom, params, seed):
    from .geodesics import certify_almost_geodesic, near_geodesic, quasi_triangle_check

    P = ("params",)
    _check_keys(params, {"z", "w", "lam", "kappa", "grid", "n_points", "use_exact", "max_pairs"}, P)
    n = dom.dimension
    z = _point(_get(params, "z", P), n, P + ("z",))
    w = _point(_get(params, "w", P), n, P + ("w",))
    spec = _grid_spec(params.get("grid"), P + ("grid",))
    lam = _get(params, "lam", P, float, 1.01)
    kappa = _get(params, "kappa", P, float, 0.01)
    use_exact = _get(params, "use_exact", P, bool, True)
    path = near_geodesic(dom, z, w, spec, _get(params, "n_points", P, int, 201))
    cert = certify_almost_geodesic(dom, path, lam, kappa, _get(params, "max_pairs", P, int, 4000),
                                   use_exact=use_exact, grid_spec=spec, seed=seed)
    tri = quasi_triangle_check(dom, path, kappa, use_exact=use_exact, grid_spec=spec)
    run.add("path.csv", dumps_csv(["t"] + _coord_header(n),
                                  [[float(t)] + _coords(p) for t, p in zip(path.times, path.domain_points())]))
    run.add("certificate.json", dumps_json({"certificate": vars(cert), "quasi_triangle": tri,
                                            "path_source": path.source}))
    if cert.status == "UNDETERMINED":
        run.inconclusive = ["UNDETERMINED"]


def cmd_visibility(run, dom, params, seed):
    from .geodesics import visibility_experiment

    P = ("params",)
    _check_keys(params, {"xi", "eta", "radii", "scales", "pair_count"}, P)
    xi = _complex(_get(params, "xi", P), P + ("xi",))
    eta = _complex(_get(params, "eta", P), P + ("eta",))
    radii = _float_list(_get(params, "radii", P, list, [0.25, 0.25]), P + ("radii",))
    if len(radii) != 2:
        raise ValidationError("expected two radii", P + ("radii",))
    scales = _float_list(_get(params, "scales", P, list, [1e-2, 1e-3, 1e-4, 1e-5, 1e-6]), P + ("scales",))
    rep = visibility_experiment(dom, xi, eta, tuple(radii), tuple(scales), _get(params, "pair_count", P, int, 3),
                                seed)
    d = rep.to_dict()
    rows = d.pop("rows")
    if rows:
        keys = sorted(rows[0])
        run.add("visibility.csv", dumps_csv(keys, [[_plain(r[k]) for k in keys] for r in rows]))
    run.add("visibility.json", dumps_json(d))
    if not rep.stable:
        run.inconclusive = ["unstable"]


def cmd_iterate(run, dom, params, seed):
    from . import dynamics as dy
    from .conformal import phi_forward
    from .domains import CaltropDomain, Disc, _ChainDomain, sample_interior

    P = ("params",)
    _check_keys(params, {"map", "starts", "random_starts", "r_range", "N", "cluster_tol", "delta_floor",
                         "tail_fraction", "audit_samples"}, P)
    mp = _get(params, "map", P, dict)
    MP = P + ("map",)
    mtype = _get(mp, "type", MP, str)
    audit = _get(params, "audit_samples", P, int, dy.AUDIT_SAMPLES)
    M = None
    if mtype in ("hyperbolic", "parabolic", "elliptic"):
        _check_keys(mp, {"type", "b", "center", "theta"}, MP)
        if mtype == "hyperbolic":
            M = dy.hyperbolic_disc_map()
        elif mtype == "parabolic":
            M = dy.parabolic_disc_map(_get(mp, "b", MP, float, 10.0))
        else:
            M = dy.elliptic_disc_map(_complex(mp.get("center", 0.0), MP + ("center",)),
                                     _get(mp, "theta", MP, float, 1.0))
        if isinstance(dom, Disc):
            F = dy.disc_mobius(M, dom, audit, seed)
        elif isinstance(dom, _ChainDomain):
            F = dy.q_conjugate(dom, M, audit, seed)
        else:
            raise ValidationError("Moebius maps need a disc or a chain domain", ("domain", "kind"))
    elif mtype == "product":
        _check_keys(mp, {"type", "lam", "mu", "center"}, MP)
        if not isinstance(dom, CaltropDomain):
            raise ValidationError("product maps need a caltrop", ("domain", "kind"))
        F = dy.caltrop_product(dom, _complex(mp.get("lam", 0.5), MP + ("lam",)), _get(mp, "mu", MP, float, 0.9),
                               _get(mp, "center", MP, float, 0.8), audit_samples=audit, seed=seed)
    else:
        raise ValidationError("expected hyperbolic, parabolic, elliptic or product", MP + ("type",))
    n = dom.dimension
    if "starts" in params:
        starts = [_point(s, n, P + ("starts", i)) for i, s in enumerate(_get(params, "starts", P, list))]
    else:
        rr = _float_list(_get(params, "r_range", P, list, [1e-2, 0.3]), P + ("r_range",), increasing=True)
        starts = list(sample_interior(dom, tuple(rr), _get(params, "random_starts", P, int, 10), seed=seed).points)
    N = _get(params, "N", P, int, 500)
    kw = {"cluster_tol": _get(params, "cluster_tol", P, float, dy.CLUSTER_TOL),
          "delta_floor": _get(params, "delta_floor", P, float, dy.DELTA_FLOOR),
          "tail_fraction": _get(params, "tail_fraction", P, float, dy.TAIL_FRACTION)}
    classes = []
    for i, s in enumerate(starts):
        orb = dy.run_orbit(F, s, N, **kw)
        run.add(f"orbit_{i:03d}.csv", dumps_csv(["nu"] + _coord_header(n) + ["delta"],
                                                [[k] + _coords(p) + [float(d)] for k, p, d in orb.to_rows()]))
        entry = {"start": _coords(s), "label": orb.classification.label,
                 "xi": None if orb.classification.xi is None else _coords(orb.classification.xi),
                 "details": orb.classification.details, "halted": orb.halted, "diagnostics": orb.diagnostics}
        if M is not None and isinstance(dom, _ChainDomain):
            w0 = complex(phi_forward(dom.chain, s))
            entry["disc_oracle"] = dy.classify_orbit(dy.disc_oracle_orbit(M, w0, N), Disc(), **kw).label
        classes.append(entry)
    labels = [c["label"] for c in classes]
    summary = {"labels": labels, "mixed": len(set(labels)) > 1, "invariance_check": F.invariance_check,
               "map": F.description, "N": N, "thresholds": kw}
    if labels and all(lab == dy.BOUNDARY for lab in labels) and len(labels) > 1:
        L = np.array([np.atleast_1d(np.asarray(c["xi"], dtype=float)) for c in classes])
        summary["max_limit_separation"] = float(np.max(np.linalg.norm(L[:, None] - L[None, :], axis=-1)))
    if any("disc_oracle" in c for c in classes):
        summary["oracle_match"] = all(c["label"] == c["disc_oracle"] for c in classes)
    run.add("classification.json", dumps_json({"orbits": classes, "summary": summary}))
    run.inconclusive = [lab for lab in labels if lab == dy.UNDETERMINED]


COMMANDS = {
    "model-domain": cmd_model_domain,
    "caltrop": cmd_caltrop,
    "metric": cmd_metric,
    "distance": cmd_distance,
    "criteria": cmd_criteria,
    "geodesic": cmd_geodesic,
    "visibility": cmd_visibility,
    "iterate": cmd_iterate,
}


def run(subcommand: str, config_path, output=None) -> int:
    """Execute one subcommand; returns the process exit status."""
    try:
        cfg = load_config(config_path)
        seed = _get(cfg, "seed", (), int, 0)
        out = output or _get(cfg, "output", (), str)
        params = _get(cfg, "params", (), dict, {})
        _get(cfg, "tolerances", (), dict, {})
        demand = _get(cfg, "require_conclusive", (), bool, False)
        dom = build_domain(_get(cfg, "domain", ()), base_dir=Path(config_path).parent)
        job = Run(subcommand, cfg, seed)
        COMMANDS[subcommand](job, dom, params, seed)
        job.commit(Path(out))
    except (ValidationError, PreconditionError) as exc:
        # precondition failures here come from values in the config
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (ArtifactError, ArithmeticError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    if demand and job.inconclusive:
        print(f"inconclusive: {job.inconclusive}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="artifact", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON or YAML experiment document")
        p.add_argument("--out", default=None, help="output directory (overrides the config)")
    args = parser.parse_args(argv)
    return run(args.subcommand, args.config, args.out)


if __name__ == "__main__":
    sys.exit(main())
