import json
import math

import numpy as np
import pytest

from gtct.cli import parse_labels, run_cli
from gtct.formats import (
    FormatError,
    graph_from_json,
    graph_to_json,
    lattice_from_bytes,
    lattice_to_bytes,
    read_graph,
    read_lattice,
    write_graph,
    write_lattice,
)
from gtct.numerics import JoinerLattice
from gtct.topology import GraphError, build_graph

REPORT_KEYS = {"version", "command", "seed", "config_hash"}


def test_lattice_roundtrip_f64(tmp_path, rng):
    lat = JoinerLattice.random(3, 2, 4, rng)
    write_lattice(tmp_path / "x.jlat", lat)
    back = read_lattice(tmp_path / "x.jlat")
    assert np.array_equal(back.logits, lat.logits)
    raw = (tmp_path / "x.jlat").read_bytes()
    assert raw[:4] == b"JLAT" and len(raw) == 20 + 3 * 3 * 4 * 8


def test_lattice_f32_upcast(rng):
    x = rng.normal(size=(2, 1, 3))
    back = lattice_from_bytes(lattice_to_bytes(x, dtype=1))
    assert back.dtype == np.float64
    assert np.allclose(back, x.astype(np.float32))


@pytest.mark.parametrize("mutate", [
    lambda b: b[:10],
    lambda b: b"XLAT" + b[4:],
    lambda b: b[:4] + bytes([2]) + b[5:],
    lambda b: b[:5] + bytes([7]) + b[6:],
    lambda b: b[:-1],
    lambda b: b + b"\0",
])
def test_malformed_lattice(mutate):
    good = lattice_to_bytes(np.zeros((2, 2, 3)))
    with pytest.raises(FormatError):
        lattice_from_bytes(mutate(good))


def test_lattice_writer_rejects_bad_input():
    with pytest.raises(FormatError):
        lattice_to_bytes(np.zeros((2, 3)))
    with pytest.raises(FormatError):
        lattice_to_bytes(np.zeros((1, 1, 2)), dtype=3)


@pytest.mark.parametrize("topology", ["ctct", "monornnt"])
def test_graph_roundtrip(tmp_path, topology):
    g = build_graph(topology, (1, 2, 2), 0, 3)
    write_graph(tmp_path / "g.json", g)
    assert read_graph(tmp_path / "g.json") == g


def test_malformed_graphs(tmp_path):
    g = graph_to_json(build_graph("ctct", (1,), 0, 3))
    with pytest.raises(FormatError):
        graph_from_json({k: v for k, v in g.items() if k != "edges"})
    bad = json.loads(json.dumps(g))
    bad["edges"].append({"from": 1, "to": 0, "u": 0})
    with pytest.raises(GraphError):
        graph_from_json(bad)
    bad = json.loads(json.dumps(g))
    bad["end"] = 1
    with pytest.raises(GraphError):
        graph_from_json(bad)
    (tmp_path / "x.json").write_text("{not json")
    with pytest.raises(FormatError):
        read_graph(tmp_path / "x.json")


def test_parse_labels():
    assert parse_labels("a b") == [1, 2]
    assert parse_labels("1,3") == [1, 3]
    assert parse_labels("") == []
    with pytest.raises(ValueError):
        parse_labels("ab")


def _run(capsys, argv):
    code = run_cli(argv)
    return code, json.loads(capsys.readouterr().out)


def test_cli_uniform_ctct(capsys):
    code, out = _run(capsys, ["loss", "--loss", "ctct", "--labels", "a", "--T", "2", "--K", "2",
                              "--uniform", "--oracle-check"])
    assert code == 0 and REPORT_KEYS <= out.keys()
    assert out["loss"] == pytest.approx(-math.log(0.75))
    assert out["oracle_check"]["ok"]


@pytest.mark.parametrize("loss", ["rnnt", "ctct", "monornnt", "ctc"])
def test_cli_gradcheck(capsys, loss):
    code, out = _run(capsys, ["loss", "--loss", loss, "--labels", "a b", "--T", "3",
                              "--gradcheck", "--oracle-check", "--seed", "3"])
    assert code == 0 and out["gradcheck"]["ok"] and out["oracle_check"]["ok"]


def test_cli_ar_rnnt(capsys):
    code, out = _run(capsys, ["loss", "--loss", "ar-rnnt", "--labels", "a b", "--T", "4",
                              "--alignment", "1,3", "--gradcheck", "--oracle-check"])
    assert code == 0 and out["gradcheck"]["ok"]


def test_cli_infeasible_reports_inf(capsys):
    code, out = _run(capsys, ["loss", "--loss", "ctct", "--labels", "a a", "--T", "2"])
    assert code == 0 and out["loss"] == "inf" and out["empty_alignment_set"]


def test_cli_graph_and_lattice_files(tmp_path, capsys, rng):
    code, out = _run(capsys, ["build-graph", "--topology", "monornnt", "--labels", "a b", "--K", "3",
                              "-o", str(tmp_path / "g.json")])
    assert code == 0 and out["min_path_len"] == 2
    write_lattice(tmp_path / "x.jlat", JoinerLattice.random(4, 2, 3, rng))
    code, out = _run(capsys, ["loss", "--graph", str(tmp_path / "g.json"), "--lattice",
                              str(tmp_path / "x.jlat"), "--labels", "a b", "--gradcheck", "--oracle-check"])
    assert code == 0 and out["loss_type"] == "graph" and out["oracle_check"]["ok"]
    code, out = _run(capsys, ["decode", "--lattice", str(tmp_path / "x.jlat"), "--topology", "rnnt"])
    assert code == 0 and out["utterances"][0]["nbest"]


def test_cli_errors_exit_one(tmp_path, capsys):
    (tmp_path / "bad.json").write_text('{"nodes": []}')
    code, out = _run(capsys, ["loss", "--graph", str(tmp_path / "bad.json")])
    assert code == 1 and out["error"] == "FormatError"
    (tmp_path / "bad.jlat").write_bytes(b"JLAT")
    code, out = _run(capsys, ["decode", "--lattice", str(tmp_path / "bad.jlat")])
    assert code == 1
    code, out = _run(capsys, ["loss", "--labels", "a", "--K", "1"])
    assert code == 1
    code, out = _run(capsys, ["decode", "--lattice", str(tmp_path / "missing.jlat")])
    assert code == 1 and out["error"] in ("FileNotFoundError", "OSError")


def test_cli_seed_from_env(monkeypatch, capsys):
    monkeypatch.setenv("GTCT_SEED", "17")
    from gtct import cli

    parser = cli.build_parser()
    assert parser.parse_args(["loss"]).seed == 17


def test_cli_demo(capsys):
    code, out = _run(capsys, ["demo-hallucination"])
    assert code == 0 and out["ok"]
    assert out["demo"]["rnnt_greedy"]["runaway"]


def test_cli_train_then_decode(tmp_path, capsys):
    cfg = {"data": {"n_train": 20, "n_dev": 5, "K": 4, "F": 4},
           "train": {"loss": "ctct", "epochs": 1, "warmup_iters": 2}}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    ck = tmp_path / "ck"
    code, out = _run(capsys, ["train", "--config", str(tmp_path / "cfg.json"), "--out", str(ck)])
    assert code == 0 and (ck / "manifest.json").exists() and len(out["history"]) == 1
    code, out = _run(capsys, ["decode", "--checkpoint", str(ck), "--synthetic", "2", "--beam", "3"])
    assert code == 0 and len(out["utterances"]) == 2
    lm = tmp_path / "lm.txt"
    lm.write_text("a b\nb c\n")
    code, out = _run(capsys, ["decode", "--checkpoint", str(ck), "--synthetic", "1", "--lm", str(lm)])
    assert code == 0
