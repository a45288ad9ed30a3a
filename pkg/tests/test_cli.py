import json

import pytest
import yaml

from artifact.cli import EXIT_INCONCLUSIVE, EXIT_OK, EXIT_VALIDATION, main

Q = {"kind": "cusp_model", "alpha": 2.0, "a": 1.0, "h": 1.0}

CASES = {
    "model-domain": {"domain": Q, "params": {"samples": 50, "M": 2.0}},
    "caltrop": {"domain": {"kind": "caltrop", "p": 1.25, "A": 1.0, "B": 0.5}, "params": {"audit_samples": 200}},
    "metric": {"domain": {"kind": "disc"},
               "params": {"points": [{"z": [0.5, 0.0], "v": [1.0, 0.0]}], "r_grid": [0.1, 0.2],
                          "samples_per_r": 50}},
    "distance": {"domain": Q, "params": {"random_pairs": 2, "r_range": [0.01, 0.2],
                                         "grid": {"spacing": 0.08, "edge_bound": "maximal_ball"}}},
    "criteria": {"domain": {"kind": "caltrop", "p": 1.25},
                 "params": {"m_source": "surrogate", "surrogate": {"s": 0.5}, "r0": 0.1, "f": {"family": "power", "q": 0.25},
                            "witness_x": [1.0e-2, 1.0e-3]}},
    "geodesic": {"domain": Q, "params": {"z": [0.3, 0.0], "w": [0.01, 0.0], "lam": 1.01, "kappa": 0.01}},
    "visibility": {"domain": {"kind": "disc"}, "params": {"xi": 1.0, "eta": -1.0, "radii": [0.25, 0.25],
                                                         "pair_count": 1}},
    "iterate": {"domain": {"kind": "disc"}, "params": {"map": {"type": "hyperbolic"}, "random_starts": 2,
                                                      "r_range": [0.1, 0.5], "N": 60}},
}


def _write(tmp_path, name, cfg, fmt="yaml"):
    path = tmp_path / f"{name}.{fmt}"
    text = yaml.safe_dump(cfg) if fmt == "yaml" else json.dumps(cfg)
    path.write_text(text)
    return path


def _run(tmp_path, name, cfg, out="out", fmt="yaml"):
    cfg = dict(cfg, seed=0)
    path = _write(tmp_path, name, cfg, fmt)
    return main([name, "--config", str(path), "--out", str(tmp_path / out)])


@pytest.mark.parametrize("name", sorted(CASES))
def test_subcommand_writes_manifest(tmp_path, name):
    assert _run(tmp_path, name, CASES[name]) == EXIT_OK
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["seed"] == 0
    for fname in manifest["files"]:
        assert (tmp_path / "out" / fname).is_file()


def test_rerun_is_byte_identical(tmp_path):
    cfg = CASES["iterate"]
    assert _run(tmp_path, "iterate", cfg, out="a") == EXIT_OK
    assert _run(tmp_path, "iterate", cfg, out="b") == EXIT_OK
    a = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert a == sorted(p.name for p in (tmp_path / "b").iterdir())
    for name in a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_json_config_accepted(tmp_path):
    assert _run(tmp_path, "model-domain", CASES["model-domain"], fmt="json") == EXIT_OK


@pytest.mark.parametrize("cfg", [
    {"domain": {"kind": "cusp_model", "alpha": "two", "a": 1.0, "h": 1.0}},
    {"domain": {"kind": "teapot"}},
    {"domain": Q, "params": {"samples": -5}},
    {"params": {}},
])
def test_malformed_config(tmp_path, cfg, capsys):
    assert _run(tmp_path, "model-domain", cfg) == EXIT_VALIDATION
    assert not (tmp_path / "out").exists()
    assert "validation error" in capsys.readouterr().err


def test_require_conclusive(tmp_path):
    cfg = dict(CASES["criteria"], require_conclusive=True)
    assert _run(tmp_path, "criteria", cfg) == EXIT_INCONCLUSIVE
    # the artifacts are still written
    assert (tmp_path / "out" / "criteria.json").is_file()


def test_iterate_hyperbolic_on_model_domain(tmp_path):
    cfg = {"domain": Q, "params": {"map": {"type": "hyperbolic"}, "random_starts": 2, "r_range": [0.01, 0.3],
                                   "N": 200, "audit_samples": 500}}
    assert _run(tmp_path, "iterate", cfg) == EXIT_OK
    result = json.loads((tmp_path / "out" / "classification.json").read_text())
    text = json.dumps(result)
    assert "BOUNDARY_CONVERGENT" in text and "COMPACT_ORBIT" not in text


def test_existing_foreign_directory_untouched(tmp_path):
    (tmp_path / "out").mkdir()
    (tmp_path / "out" / "keep.txt").write_text("x")
    assert _run(tmp_path, "model-domain", CASES["model-domain"]) != EXIT_OK
    assert (tmp_path / "out" / "keep.txt").read_text() == "x"
