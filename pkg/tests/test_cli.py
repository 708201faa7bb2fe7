from __future__ import annotations

import json
import logging

import pytest

from specbesov import suites as S
from specbesov.cli import SCHEMA, main, parse_eps, read_config, UsageError
from specbesov.rate_lab import REGISTRY


def _json(path):
    return json.loads(path.read_text())


def test_list_checks(capsys):
    assert main(["list-checks"]) == 0
    out = capsys.readouterr().out
    for name in list(S.SUITES) + list(REGISTRY):
        assert name in out


def test_unknown_suite_is_a_usage_error(capsys, tmp_path):
    assert main(["check", "nope", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "partition" in err and "circ_in_range" in err


def test_bad_arguments_are_usage_errors(tmp_path, capsys):
    assert main(["experiment", "kpz", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["check", "partition", "--eps", "1/0", "--out", str(tmp_path)]) == 2
    assert main(["experiment", "nope"]) == 2
    assert main([]) == 2
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("colour = blue\n")
    assert main(["experiment", "kpz", "--config", str(cfg)]) == 2
    assert main(["check", "partition", "--profile", "zebra", "--out", str(tmp_path)]) == 2


@pytest.mark.parametrize("kind", ["kpz", "rates", "clusters"])
def test_unresolved_eps_is_a_usage_error(kind, tmp_path, capsys):
    assert main(["experiment", kind, "--N", "64", "--eps", "1/8", "--out", str(tmp_path)]) == 2
    assert "does not resolve" in capsys.readouterr().err
    assert not list(tmp_path.iterdir())


def test_parse_eps_and_config(tmp_path):
    assert parse_eps("1/4, 1/8,0.0625") == [0.25, 0.125, 0.0625]
    for bad in ("", "a", "-1/4"):
        with pytest.raises(UsageError):
            parse_eps(bad)
    p = tmp_path / "run.cfg"
    p.write_text("# comment\nN = 64\neps = 1/2,1/4\ndelta = 0.03125  # inline\nprofile = sin\n")
    assert read_config(str(p)) == {"N": 64, "eps": "1/2,1/4", "delta": 0.03125, "profile": "sin"}


def test_check_partition_report(tmp_path):
    assert main(["check", "partition", "--out", str(tmp_path), "--seed", "3"]) == 0
    rep = _json(tmp_path / "check_partition.json")
    assert rep["schema"] == SCHEMA
    prov = rep["provenance"]
    assert {"version", "config_hash", "seed", "tolerances", "config"} <= set(prov)
    assert prov["seed"] == 3 and prov["tolerances"]["partition_tol"] == 1e-14
    assert rep["summary"]["failed"] == 0
    assert all(c["verdict"] == "pass" for c in rep["suites"]["partition"])


def test_reports_are_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["check", "bony", "--out", str(d)]) == 0
    assert (a / "check_bony.json").read_bytes().replace(b"/a", b"/b") == (b / "check_bony.json").read_bytes()


def test_tol_scale_can_force_failure(tmp_path):
    assert main(["check", "cancellation", "--tol-scale", "1e-12", "--out", str(tmp_path)]) == 1


def test_single_registry_spec(tmp_path):
    assert main(["check", "prec_good", "--samples", "2", "--out", str(tmp_path)]) == 0
    rep = _json(tmp_path / "check_prec_good.json")
    assert [c["name"] for c in rep["suites"]["prec_good"]] == ["prec_good"]


def test_check_all_small_grid(tmp_path):
    code = main(["check", "all", "--N", "128", "--eps", "1/4,1/8", "--samples", "2", "--out", str(tmp_path)])
    rep = _json(tmp_path / "check_all.json")
    assert set(rep["suites"]) == set(S.SUITES)
    assert code == (0 if rep["summary"]["failed"] == 0 else 1)
    # two eps values cannot support a three-point rate fit; those suites fail with the reason recorded
    assert "three paired points" in rep["suites"]["blocks"][0]["details"]["error"]


def test_experiment_clusters(tmp_path, capsys):
    assert main(["experiment", "clusters", "--j", "3", "--eps", "1/8", "--out", str(tmp_path)]) == 0
    rep = _json(tmp_path / "experiment_clusters.json")
    assert rep["params"]["j"] == 3 and rep["params"]["eps"] == 0.125
    assert rep["clusters"] and all(c["verdict"] == "pass" for c in rep["certificates"])
    assert (tmp_path / "clusters.csv").exists()
    assert main(["experiment", "clusters", "--eps", "1/4,1/8", "--out", str(tmp_path)]) == 2


def test_experiment_kpz_from_config(tmp_path):
    cfg = tmp_path / "kpz.cfg"
    cfg.write_text("N = 64\neps = 1,1/2,1/4\ndelta = 0.03125\nT = 0.02\nsteps = 16\nmc = 8\nseed = 1\n")
    code = main(["experiment", "kpz", "--config", str(cfg), "--out", str(tmp_path)])
    assert code in (0, 1)
    rep = _json(tmp_path / "experiment_kpz.json")
    assert rep["schema"] == SCHEMA and rep["result"]["which"] == "kpz"
    assert set(rep["checks"]) == {"solution_gap_decreasing", "solution_rate_positive", "uniform_bound",
                                  "flux_gap_decreasing", "complete"}
    assert code == (0 if all(rep["checks"].values()) else 1)
    lines = (tmp_path / "kpz_gaps.csv").read_text().splitlines()
    assert lines[0].startswith("eps,solution_gap") and len(lines) == 4


def test_experiment_rates(tmp_path):
    assert main(["experiment", "rates", "--N", "256", "--eps", "1/2,1/4,1/8", "--out", str(tmp_path)]) in (0, 1)
    assert (tmp_path / "rates.csv").exists() and (tmp_path / "experiment_rates.json").exists()


def test_report_bundles(tmp_path, caplog):
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["report", str(empty)]) == 0
    assert _json(empty / "bundle" / "index.json") == {"figures": []}

    d = tmp_path / "data"
    d.mkdir()
    (d / "gaps.csv").write_text("eps,gap\n0.25,0.1\n0.125,0.05\n0.0625,0.025\n")
    (d / "broken.csv").write_text("eps,gap\n0.25,abc\n")
    with caplog.at_level(logging.WARNING):
        assert main(["report", str(d), "--out", str(tmp_path / "b")]) == 0
    idx = _json(tmp_path / "b" / "index.json")
    assert [f["name"] for f in idx["figures"]] == ["gaps"]
    series = _json(tmp_path / "b" / "gaps.json")
    assert series["x"] == [0.25, 0.125, 0.0625] and series["series"]["gap"] == [0.1, 0.05, 0.025]
    assert (tmp_path / "b" / "gaps.png").stat().st_size > 0
    assert "broken.csv" in caplog.text
    assert main(["report", str(tmp_path / "missing")]) == 2
