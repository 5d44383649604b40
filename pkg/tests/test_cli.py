import json
import os

import numpy as np
import pytest

from synthgauge import __version__, cli, dataio
from synthgauge.dataio import EmbeddingSet

FAST = {
    "n_real": 300, "n_val": 150, "n_gen": 300, "class_ratio": 0.05, "gen_fit_steps": 200,
    "ppl_paths": 50, "proj_targets": 4, "proj_steps": 100, "proj_restarts": 1,
    "tsne_iterations": 300, "tsne_perplexity": 10.0, "scenario_scale": 0.005,
    "client_sizes": [50, 100], "fed_rounds": 2, "fed_exchange_every": 10,
    "latent_dim": 6, "sample_dim": 8, "feature_dim": 8, "kid_block": 10,
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(FAST))
    return p


def _tree(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_unknown_flag(capsys):
    assert cli.main(["gen", "--bogus"]) == 2
    assert "usage" in capsys.readouterr().err


def test_missing_subcommand():
    assert cli.main([]) == 2


def test_metrics_identical(tmp_path, capsys):
    x = np.random.default_rng(0).standard_normal((60, 8)).astype(np.float32)
    es = EmbeddingSet(x, np.arange(60) % 2)
    dataio.write_embeddings(es, tmp_path / "a.emb")
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"sample_dim": 8, "ppl_paths": 20}))
    out = tmp_path / "out"
    code = cli.main(["metrics", "--config", str(cfg), "--real", str(tmp_path / "a.emb"), "--gen", str(tmp_path / "a.emb"), "--out", str(out)])
    assert code == 0
    r = dataio.read_report(out / "metrics.json")
    assert r.fid == pytest.approx(0.0, abs=1e-8) and r.precision == r.recall == 1.0
    assert capsys.readouterr().out.count("\n") == 1


def test_validation_exit_and_manifest(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"class_ratio": 1.5}')
    out = tmp_path / "out"
    assert cli.main(["gen", "--config", str(bad), "--out", str(out)]) == 2
    man = json.loads((out / "manifest.json").read_text())
    assert "class_ratio" in man["error"] and man["version"] == __version__


def test_format_error_exit(tmp_path):
    (tmp_path / "x.emb").write_bytes(b"XXXXjunk")
    assert cli.main(["metrics", "--real", str(tmp_path / "x.emb"), "--gen", str(tmp_path / "x.emb"), "--out", str(tmp_path / "o")]) == 2


def test_numerical_exit(tmp_path, monkeypatch):
    from synthgauge.errors import NumericalError

    def boom(run):
        raise NumericalError("diverged")

    monkeypatch.setitem(cli.COMMANDS, "gen", boom)
    assert cli.main(["gen", "--out", str(tmp_path / "o")]) == 3


def test_other_exit(tmp_path, monkeypatch):
    monkeypatch.setitem(cli.COMMANDS, "gen", lambda run: 1 / 0)
    assert cli.main(["gen", "--out", str(tmp_path / "o")]) == 1
    assert "ZeroDivisionError" in json.loads((tmp_path / "o" / "manifest.json").read_text())["error"]


def test_fedsim_deterministic(tmp_path, cfg_path):
    for name in ("a", "b"):
        assert cli.main(["fedsim", "--config", str(cfg_path), "--out", str(tmp_path / name)]) == 0
    assert (tmp_path / "a" / "federation.json").read_bytes() == (tmp_path / "b" / "federation.json").read_bytes()
    assert (tmp_path / "a" / "client_losses.csv").exists()


def test_seed_override(tmp_path, cfg_path):
    cli.main(["gen", "--config", str(cfg_path), "--seed", "7", "--out", str(tmp_path / "a")])
    cli.main(["gen", "--config", str(cfg_path), "--out", str(tmp_path / "b")])
    assert json.loads((tmp_path / "a" / "manifest.json").read_text())["seed"] == 7
    assert (tmp_path / "a" / "real.emb").read_bytes() != (tmp_path / "b" / "real.emb").read_bytes()


def test_threads_env(tmp_path, cfg_path, monkeypatch):
    monkeypatch.setenv("SYNTHGAUGE_THREADS", "1")
    assert cli.main(["sefa", "--config", str(cfg_path), "--out", str(tmp_path / "s")]) == 0
    assert {"sefa_basis.json", "sefa_sweep.csv", "sefa_sweep.svg"} <= set(os.listdir(tmp_path / "s"))


def test_subcommands_stay_in_out(tmp_path, cfg_path, monkeypatch):
    work = tmp_path / "work"
    work.mkdir()
    monkeypatch.chdir(work)
    out = tmp_path / "out"
    assert cli.main(["gen", "--config", str(cfg_path), "--out", str(out)]) == 0
    real, gen, val = (str(out / f) for f in ("real.emb", "synthetic.emb", "val.emb"))
    gens = str(out / "generators.json")
    runs = [
        ["project", "--real", real, "--generator", gens],
        ["classify", "--real", real, "--val", val, "--gen", gen],
        ["tsne", "--real", val, "--gen", gen],
    ]
    for i, extra in enumerate(runs):
        assert cli.main([extra[0], "--config", str(cfg_path), "--out", str(tmp_path / f"o{i}")] + extra[1:]) == 0
    assert os.listdir(work) == []
    proj = json.loads((tmp_path / "o0" / "projections.json").read_text())
    assert len(proj["projections"]) == 4 and proj["distance_stats"]["count"] == 4
    table = json.loads((tmp_path / "o1" / "scenarios.json").read_text())
    assert [r["scenario"] for r in table] == ["baseline", "synth", "aug"]


def test_pipeline(tmp_path, cfg_path, capsys):
    out = tmp_path / "run"
    assert cli.main(["pipeline", "--config", str(cfg_path), "--out", str(out)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert [l.split("]")[0] for l in lines][0] == "[gen"
    man = json.loads((out / "manifest.json").read_text())
    assert man["error"] is None
    for rel in man["outputs"]:
        assert (out / rel).exists()
    assert {"report.json", "scenarios.json", "scenarios.csv", "projections.json", "tsne.svg"} <= set(man["outputs"])
    for row in json.loads((out / "report.json").read_text()):
        dataio.MetricReport.from_dict(row)


def test_bad_threads(tmp_path, monkeypatch):
    assert cli.main(["sefa", "--threads", "-1", "--out", str(tmp_path / "a")]) == 2
    monkeypatch.setenv("SYNTHGAUGE_THREADS", "many")
    assert cli.main(["sefa", "--out", str(tmp_path / "b")]) == 2
