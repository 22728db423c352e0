import json
import os

import numpy as np
import pytest

from poplex.cli import main
from poplex.pipeline import PipelineRun, load_pipeline_config

TINY_CONFIG = {
    "seed": 5,
    "synth": {"num_nodes": 300, "num_years": 2, "twin_rate": 0.7},
    "walk": {"modes": ["aware", "blind"], "walk_length": 10, "walks_per_node": 2},
    "train": {"dim": 8, "window": 3, "negatives": 3, "epochs": 2},
    "align": {"eval_pairs": 300},
    "partition": {"k": 10},
    "audit": {"sample_size": 80, "Q": 200, "wiggle_sims": 150},
    "eval": {"hidden": 16},
}


@pytest.fixture(scope="module")
def tiny_config_path(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "tiny.json"
    p.write_text(json.dumps(TINY_CONFIG))
    return str(p)


@pytest.fixture(scope="module")
def completed_run(tiny_config_path, tmp_path_factory):
    out = str(tmp_path_factory.mktemp("run"))
    rc = main(["pipeline", "--config", tiny_config_path, "--out-dir", out])
    assert rc == 0
    return out


def test_pipeline_emits_all_artifacts(completed_run):
    out = completed_run
    assert os.path.exists(os.path.join(out, "report.json"))
    assert os.path.exists(os.path.join(out, "report.csv"))
    for stage in ("synth", "walk", "train", "align", "align-eval", "whiten-fit",
                  "grid", "partition", "retention", "audit", "eval", "report"):
        assert os.path.exists(os.path.join(out, "manifests", f"{stage}.json")), stage


def test_report_content(completed_run):
    with open(os.path.join(completed_run, "report.json")) as f:
        report = json.load(f)
    assert "persistence" in report
    assert "alignment" in report and len(report["alignment"]["rows"]) == 2
    assert "retention" in report
    assert "balance" in report
    assert "audit" in report
    assert set(report["probes"]) == {"aware", "blind"}


def test_rerun_skips_cached(completed_run, tiny_config_path, capsys):
    rc = main(["pipeline", "--config", tiny_config_path, "--out-dir", completed_run])
    assert rc == 0
    outp = capsys.readouterr().out
    assert "skipped (cached)" in outp
    assert "done" not in outp.replace("skipped (cached)", "")


def test_single_stage_force(completed_run, tiny_config_path, capsys):
    rc = main(["pipeline", "--config", tiny_config_path, "--out-dir", completed_run,
               "--only", "grid", "--force"])
    assert rc == 0
    assert "done" in capsys.readouterr().out


def test_corrupt_artifact_format_error(completed_run, tiny_config_path, tmp_path):
    emb_path = os.path.join(completed_run, "embeddings", "emb_aware_0.bin")
    with open(emb_path, "rb") as f:
        data = f.read()
    bad = tmp_path / "corrupt.bin"
    bad.write_bytes(b"XXXXXXXX" + data[8:])
    rc = main(["partition", "--emb", str(bad),
               "--grid", os.path.join(completed_run, "partition", "grid.grd"),
               "--out", str(tmp_path / "p.prt")])
    assert rc == 2


def test_missing_input_fails_fast(tmp_path):
    rc = main(["train", "--corpus", str(tmp_path / "nope.bin"),
               "--out", str(tmp_path / "e.bin")])
    assert rc == 2


def test_pipeline_stage_missing_inputs_named(tiny_config_path, tmp_path, capsys):
    out = str(tmp_path / "fresh")
    rc = main(["pipeline", "--config", tiny_config_path, "--out-dir", out,
               "--only", "train"])
    assert rc == 2
    assert "missing inputs" in capsys.readouterr().err


def test_unknown_config_section_rejected(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text(json.dumps({"seed": 1, "walkz": {}}))
    rc = main(["pipeline", "--config", str(p), "--out-dir", str(tmp_path / "o")])
    assert rc == 2


def test_individual_subcommands_chain(tmp_path, completed_run):
    graph = os.path.join(completed_run, "graphs", "year_0.edges")
    corpus = str(tmp_path / "c.bin")
    emb = str(tmp_path / "e.bin")
    rc = main(["walk", "--graph", graph, "--num-nodes", "300", "--mode", "aware",
               "--p", "0.8", "--len", "8", "--num", "1", "--seed", "3",
               "--out", corpus])
    assert rc == 0
    rc = main(["train", "--corpus", corpus, "--dim", "8", "--epochs", "1",
               "--out", emb])
    assert rc == 0
    grid = str(tmp_path / "g.grd")
    assert main(["grid", "--k", "6", "--dim", "8", "--out", grid]) == 0
    part = str(tmp_path / "p.prt")
    assert main(["partition", "--emb", emb, "--grid", grid, "--out", part]) == 0
    assert main(["retention", "--base", part, "--later", part]) == 0


def test_validate_subcommand(completed_run):
    graph = os.path.join(completed_run, "graphs", "year_0.edges")
    assert main(["validate", "--graph", graph, "--num-nodes", "300"]) == 0


def test_audit_subcommand(tmp_path):
    rng = np.random.default_rng(0)
    c = rng.multinomial(5000, np.full(10, 0.1)).tolist()
    labels = np.repeat(np.arange(10), c)
    x = np.bincount(rng.permutation(labels)[:500], minlength=10).tolist()
    inp = tmp_path / "audit.json"
    inp.write_text(json.dumps({"c": c, "x": x, "Q": 200, "seed": 1}))
    out = tmp_path / "audit_out.json"
    funnel = tmp_path / "funnel.csv"
    rc = main(["audit", "--input", str(inp), "--out", str(out),
               "--funnel-out", str(funnel), "--wiggle-sims", "150"])
    assert rc == 0
    result = json.loads(out.read_text())
    assert 0 < result["p_global"] <= 1
    assert funnel.read_text().startswith("cluster,")


def test_align_eval_subcommand(completed_run, capsys):
    emb = os.path.join(completed_run, "embeddings", "emb_aware_0.bin")
    rc = main(["align-eval", "--emb-a", emb, "--emb-b", emb,
               "--pairs", "100", "--seed", "2"])
    assert rc == 0
    out = json.loads(capsys.readouterr().out)
    assert out["pearson"] == pytest.approx(1.0)


def test_eval_subcommand(completed_run, tmp_path):
    tasks = os.path.join(completed_run, "metrics", "tasks.jsonl")
    emb = os.path.join(completed_run, "embeddings", "emb_aware_0.bin")
    report = str(tmp_path / "probe_report.json")
    rc = main(["eval", "--tasks", tasks, "--emb", emb, "--hidden", "8",
               "--report", report])
    assert rc == 0
    data = json.loads(open(report).read())
    assert len(data["results"]) >= 1


def test_load_pipeline_config_defaults(tiny_config_path):
    cfg = load_pipeline_config(tiny_config_path)
    assert cfg["synth"]["num_nodes"] == 300
    assert cfg["train"]["learning_rate"] == 0.025  # default preserved


def test_tiny_pipeline_reports_byte_identical(tiny_config_path, completed_run,
                                              tmp_path):
    out2 = str(tmp_path / "run2")
    rc = main(["pipeline", "--config", tiny_config_path, "--out-dir", out2])
    assert rc == 0
    for name in ("report.json", "report.csv"):
        a = open(os.path.join(completed_run, name), "rb").read()
        b = open(os.path.join(out2, name), "rb").read()
        assert a == b, f"{name} differs between identical runs"
