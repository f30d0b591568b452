import json

import pytest

from levyfront.cli import (STAGES, ExperimentConfig, Pipeline, RunManifest, _closure, main, report,
                           run_pipeline)
from levyfront.exceptions import ReportError, StageError


def smoke_doc(**changes):
    cfg = ExperimentConfig.load("smoke").to_dict()
    cfg.update(changes)
    return cfg


def write_config(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("smoke")
    code = main(["run", "--config", "smoke", "--out", str(out), "--threads", "1"])
    return code, out


def test_smoke_run_completes(smoke_run, capsys):
    code, out = smoke_run
    assert code == 0
    manifest = RunManifest.read(out)
    assert [s["name"] for s in manifest.stages] == list(STAGES)
    assert all(s["status"] == "completed" for s in manifest.stages)
    assert manifest.verify() == []
    for name in ("eigen.json", "eigen.csv", "steady.csv", "evolve.json", "fronts.json",
                 "bounds.json", "bounds_witnesses.csv", "report.html", "snapshots/manifest.json"):
        assert (out / name).exists(), name
    html = (out / "report.html").read_text()
    assert "<svg" in html and "Verdict" in html


def test_manifest_detects_tampering(smoke_run, tmp_path):
    _, out = smoke_run
    manifest = RunManifest.read(out)
    rel = "eigen.csv"
    original = (out / rel).read_bytes()
    try:
        (out / rel).write_bytes(original + b"0,0,0\n")
        assert manifest.verify() == [rel]
    finally:
        (out / rel).write_bytes(original)
    assert manifest.verify() == []


def test_report_subcommand(smoke_run, tmp_path, capsys):
    _, out = smoke_run
    assert main(["report", "--out", str(out)]) == 0
    assert "report.html" in capsys.readouterr().out
    assert main(["report", "--out", str(tmp_path)]) == 1
    with pytest.raises(ReportError):
        RunManifest.read(tmp_path)


def test_report_lists_missing_artifacts(smoke_run):
    _, out = smoke_run
    manifest = RunManifest.read(out)
    manifest.artifacts["ghost.csv"] = "0" * 64
    with pytest.raises(ReportError, match="ghost.csv"):
        report(manifest)


def test_rejects_alpha_out_of_range(tmp_path, capsys):
    doc = smoke_doc()
    doc["problem"] = dict(doc["problem"], alpha=2.5)
    code = main(["validate", "--config", write_config(tmp_path, doc), "--out", str(tmp_path / "o")])
    assert code == 1
    assert "must lie in (0,2)" in capsys.readouterr().err


def test_unknown_config_and_missing_file(tmp_path, capsys):
    assert main(["run", "--config", write_config(tmp_path, smoke_doc(colour="red")),
                 "--out", str(tmp_path / "o")]) == 1
    assert main(["run", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 1
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(smoke_doc(snapshots=[[2, 3, 0.1], [0, 1, 0.1]]))
    with pytest.raises(ValueError):
        ExperimentConfig.from_dict(smoke_doc(eigen_tol=0.0))


def test_subcommand_runs_dependency_closure(tmp_path):
    assert list(_closure("eigen")) == ["validate", "eigen"]
    assert set(_closure("fronts")) == {"validate", "eigen", "steady", "evolve", "fronts"}
    assert main(["eigen", "--config", "smoke", "--out", str(tmp_path)]) == 0
    manifest = RunManifest.read(tmp_path)
    assert [s["name"] for s in manifest.stages] == ["validate", "eigen"]
    doc = json.loads((tmp_path / "eigen.json").read_text())
    assert doc["lambda1"] == pytest.approx(-1.0, abs=1e-8)


def test_failed_stage_gives_partial_report(tmp_path, capsys):
    # R_max too small: the evolve stage trips the truncation monitor
    doc = smoke_doc(line={"core_halfwidth": 4.0, "core_spacing": 0.125, "R_max": 60.0,
                          "n_outer": 40, "growth": 1.1})
    cfg = ExperimentConfig.from_dict(doc)
    with pytest.raises(StageError) as info:
        run_pipeline(cfg, tmp_path, stages=_closure("evolve"))
    assert info.value.stage == "evolve"
    manifest = RunManifest.read(tmp_path)
    assert manifest.stage("evolve")["status"] == "failed"
    html = (tmp_path / "report.html").read_text()
    assert "No results: stage failed" in html
    assert main(["evolve", "--config", write_config(tmp_path, doc), "--out",
                 str(tmp_path / "cli")]) == 1
    assert "stage evolve" in capsys.readouterr().err


def test_empty_eps_list_note(tmp_path):
    cfg = ExperimentConfig.from_dict(smoke_doc(eps=[], T=3.0, snapshots=[[0, 3, 0.1]]))
    Pipeline(cfg, tmp_path).run(list(_closure("fronts")) + ["report"])
    html = (tmp_path / "report.html").read_text()
    assert "Homogenization section omitted: empty eps list." in html


def test_gated_failure_exit_code(tmp_path, capsys):
    # the smoke horizon is far too short for the front rate to settle
    doc = smoke_doc(gates=["front_rate"])
    code = main(["front", "--config", write_config(tmp_path, doc), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "FAIL fronts.front_rate" in capsys.readouterr().out
