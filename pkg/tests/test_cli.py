import csv
import json
from pathlib import Path

import numpy as np
import pytest

from panelcausal import cli
from panelcausal.notears import LearnResult, WeightedAdjacency

FIXTURE = Path(cli.__file__).parent / "data" / "paperlike.toml"


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert cli.main(["simulate", "--kind", "paperlike", "--output-dir", str(out)]) == 0
    return out


def run(*args):
    return cli.main([str(a) for a in args])


def test_simulate_writes_ingest_schemas(sim):
    for name in ("epidemic.csv", "country_stats.csv", "attention.csv", "paperlike_table.csv", "panel.toml"):
        assert (sim / name).is_file()
    assert (sim / "epidemic.csv").read_text().splitlines()[0] == "country,date,cumulative_infections,cumulative_deaths"


def test_simulate_same_seed_identical(sim, tmp_path):
    assert run("simulate", "--kind", "paperlike", "--output-dir", tmp_path) == 0
    for f in sim.iterdir():
        if f.is_file():
            assert (tmp_path / f.name).read_bytes() == f.read_bytes()


def test_simulate_sem(tmp_path):
    assert run("simulate", "--kind", "sem", "--rows", 50, "--output-dir", tmp_path / "a") == 0
    assert run("simulate", "--kind", "sem", "--rows", 50, "--output-dir", tmp_path / "b") == 0
    text = (tmp_path / "a" / "sem.csv").read_text()
    assert text.splitlines()[0] == "x0,x1"
    assert len(text.splitlines()) == 51
    assert text == (tmp_path / "b" / "sem.csv").read_text()


def test_simulate_sem_spec(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"weights": [[0, 1, 0], [0, 0, -1], [0, 0, 0]]}))
    assert run("simulate", "--kind", "sem", "--sem-spec", spec, "--output-dir", tmp_path) == 0
    assert (tmp_path / "sem.csv").read_text().splitlines()[0] == "x0,x1,x2"
    spec.write_text(json.dumps({"weights": [[0, 1], [1, 0]]}))
    assert run("simulate", "--kind", "sem", "--sem-spec", spec, "--output-dir", tmp_path) == 1


def test_features_dump(sim, tmp_path):
    assert run("features", "dump", "--config", sim / "panel.toml", "--output-dir", tmp_path) == 0
    numeric = (tmp_path / "numeric_features.csv").read_text().splitlines()
    discrete = (tmp_path / "discrete_features.csv").read_text().splitlines()
    assert len(numeric) == len(discrete) == 685
    assert numeric[0].split(",")[2:] == list(cli.engineer.__globals__["FEATURES"])


def _dot_edges(text):
    return [line.strip().rstrip(";") for line in text.splitlines() if "->" in line]


def test_learn_dot_matches_dag(tmp_path):
    assert run("learn", "--config", FIXTURE, "--output-dir", tmp_path) == 0
    dag = json.loads((tmp_path / "dag.json").read_text())
    dot = (tmp_path / "dag.dot").read_text()
    lines = _dot_edges(dot)
    assert len(lines) == len(dag["edges"])
    for e, line in zip(dag["edges"], lines):
        assert line.startswith(f'"{e["from"]}" -> "{e["to"]}" [label="{e["weight"]:.2f}"]')
    assert dot.startswith("digraph G {\n  rankdir=LR;")
    assert 'class="attention"' in dot and 'class="intervention"' in dot
    W = json.loads((tmp_path / "learned_W.json").read_text())
    assert set(W) == {"labels", "values", "omega", "lambda1", "h_final", "converged"}
    assert len(W["values"]) == 144


def test_learn_rerun_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("learn", "--config", FIXTURE, "--output-dir", tmp_path / d) == 0
    for name in ("dag.dot", "dag.json", "learned_W.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_learn_forbidden_edge_absent(tmp_path):
    base = tmp_path / "base"
    assert run("learn", "--config", FIXTURE, "--output-dir", base) == 0
    dag = json.loads((base / "dag.json").read_text())
    victim = dag["edges"][0]
    cons = tmp_path / "c.json"
    cons.write_text(json.dumps([victim]))
    assert run("learn", "--config", FIXTURE, "--constraints", cons, "--output-dir", tmp_path / "m") == 0
    dot = (tmp_path / "m" / "dag.dot").read_text()
    assert not any(line.startswith(f'"{victim["from"]}" -> "{victim["to"]}"') for line in _dot_edges(dot))


def test_learn_nonconvergence_exit_code(tmp_path, monkeypatch):
    def fake(X, labels, mask, opts):
        from panelcausal.notears import DagStructure

        W = WeightedAdjacency(tuple(labels), np.zeros((len(labels), len(labels))))
        return DagStructure(tuple(labels)), LearnResult(W, 0.5, False, 1e16, [])

    monkeypatch.setattr(cli, "learn_dag", fake)
    assert run("learn", "--config", FIXTURE, "--output-dir", tmp_path) == 2
    assert (tmp_path / "dag.dot").is_file()


def test_missing_input_exit_code(tmp_path, capsys):
    assert run("learn", "--table", tmp_path / "nope.csv", "--output-dir", tmp_path) == 1
    assert "config" in capsys.readouterr().err


def test_ingest_error_names_module(sim, tmp_path, capsys):
    bad = tmp_path / "epi.csv"
    bad.write_text("country,date,cumulative_infections,cumulative_deaths\nAT,2020-01-22,5,0\nAT,2020-01-23,4,0\n")
    code = run("learn", "--config", sim / "panel.toml", "--epidemic", bad, "--output-dir", tmp_path)
    assert code == 1
    err = capsys.readouterr().err
    assert "ingest" in err and "AT" in err


@pytest.fixture(scope="module")
def model(tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    assert cli.main(["fit", "--config", str(FIXTURE), "--output-dir", str(out)]) == 0
    return out / "model.json"


def test_query_default_battery(model, tmp_path):
    out = tmp_path / "q.csv"
    assert run("query", "--model", model, "--out", out) == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 12
    for r in rows:
        assert len(r["probability"].split(".")[1]) == 3
        assert 0 <= float(r["probability"]) <= 1


def test_query_prior_and_json(model, tmp_path):
    from panelcausal import bayesnet

    bn = bayesnet.load_model(model)
    battery = tmp_path / "b.json"
    battery.write_text(json.dumps([{"evidence": {}, "target": "pct_over_65", "state": "High"}]))
    out = tmp_path / "q.json"
    assert run("query", "--model", model, "--battery", battery, "--format", "json", "--out", out) == 0
    (row,) = json.loads(out.read_text())
    assert row["probability"] == f"{bn.cpts['pct_over_65'].table[1]:.3f}"


def test_query_partial_failure(tmp_path, capsys):
    from panelcausal import bayesnet
    from panelcausal.bayesnet import BayesianNetwork, Cpt
    from panelcausal.notears import DagStructure

    bn = BayesianNetwork(DagStructure(("a", "b"), {("a", "b"): None}),
                         {"a": Cpt("a", (), np.array([1.0, 0.0])), "b": Cpt("b", ("a",), np.full((2, 2), 0.5))},
                         {"a": ("Low", "High"), "b": ("Low", "High")})
    bayesnet.save_model(bn, tmp_path / "m.json")
    battery = tmp_path / "b.json"
    battery.write_text(json.dumps([
        {"evidence": {"a": "High"}, "target": "b", "state": "High"},
        {"evidence": {}, "target": "b", "state": "High"},
    ]))
    assert run("query", "--model", tmp_path / "m.json", "--battery", battery) == 3
    out = capsys.readouterr().out.splitlines()
    assert out[1].endswith("ERROR:InconsistentEvidence")
    assert out[2].endswith("0.500")


def test_query_malformed_battery(model, tmp_path, capsys):
    battery = tmp_path / "b.json"
    battery.write_text('[\n  {"target": "x",\n')
    assert run("query", "--model", model, "--battery", battery) == 1
    assert "line" in capsys.readouterr().err


def test_crossval_report_files(tmp_path):
    assert run("crossval", "--config", FIXTURE, "--output-dir", tmp_path) == 0
    lines = (tmp_path / "cv_report.csv").read_text().splitlines()
    assert lines[0] == "country,auroc"
    assert len(lines) == 14 and lines[-1].startswith("average,")
    doc = json.loads((tmp_path / "cv_report.json").read_text())
    assert doc["metadata"]["variant"] == "per-fold-cutoffs"


def test_crossval_global_cutoffs_label(sim, tmp_path):
    assert run("crossval", "--config", sim / "panel.toml", "--global-cutoffs", "--output-dir", tmp_path) == 0
    doc = json.loads((tmp_path / "cv_report.json").read_text())
    assert doc["metadata"]["variant"] == "global-cutoffs"
    assert doc["metadata"]["global_cutoffs"] is True


def test_crossval_seed_stability(tmp_path):
    reports = []
    for seed in range(5):
        out = tmp_path / str(seed)
        assert run("crossval", "--config", FIXTURE, "--seed", seed, "--output-dir", out) == 0
        reports.append(json.loads((out / "cv_report.json").read_text())["per_country"])
    for country in reports[0]:
        vals = [r[country] for r in reports]
        assert max(vals) - min(vals) < 0.02


def test_export_dot(tmp_path):
    assert run("learn", "--config", FIXTURE, "--output-dir", tmp_path) == 0
    assert run("export-dot", tmp_path / "learned_W.json", "--out", tmp_path / "w.dot") == 0
    assert run("export-dot", tmp_path / "dag.json", "--out", tmp_path / "d.dot") == 0
    assert (tmp_path / "w.dot").read_text() == (tmp_path / "dag.dot").read_text()
    assert _dot_edges((tmp_path / "d.dot").read_text()) == _dot_edges((tmp_path / "dag.dot").read_text())


def test_config_flags_override(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text('table = "t.csv"\nlambda1 = 0.5\ncountries = ["AT", "BE"]\nstart = "2020-02-01"\n')
    args = cli.build_parser().parse_args(["learn", "--config", str(cfg), "--lambda1", "0.2"])
    rc = cli.build_config(args)
    assert rc.lambda1 == 0.2
    assert rc.table == tmp_path / "t.csv"
    assert rc.countries == ["AT", "BE"]
    assert str(rc.start) == "2020-02-01"
    cfg.write_text("bogus = 1\n")
    with pytest.raises(cli.CliError):
        cli.load_config(cfg)
