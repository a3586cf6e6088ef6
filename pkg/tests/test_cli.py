from __future__ import annotations

import csv
import json
import math

import numpy as np
import pytest

from fermitn.cli import EXIT_INPUT, EXIT_OK, EXIT_STATE, RunConfig, main
from fermitn.models import SiteGraph
from fermitn.peps import canonicalize, checkpoint_dict, init_product_state, load_checkpoint, random_peps


@pytest.fixture
def cwd(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


def read(path):
    with open(path) as f:
        return json.load(f)


def test_generate_diamond(cwd):
    assert main(["generate", "--lattice", "diamond", "--L", "3", "3", "3", "--out", "g.json"]) == EXIT_OK
    d = read("g.json")
    assert d["n"] == 54 and len(d["edges"]) == 81
    assert d["provenance"]["command"] == "generate"


def test_generate_rrg(cwd):
    assert main(["generate", "--rrg", "8", "--seed", "1", "--out", "g.json"]) == EXIT_OK
    d = read("g.json")
    assert len(d["edges"]) == 12
    deg = np.bincount(np.array(d["edges"]).ravel(), minlength=8)
    assert set(deg.tolist()) == {3}


@pytest.mark.parametrize("argv", [
    ["generate", "--rrg", "5"],
    ["generate", "--lattice", "diamond", "--L", "2", "2"],
    ["generate", "--lattice", "grid", "--L", "0", "3"],
    ["generate"],
    ["ed", "--lattice", "chain", "--L", "4", "--n-up", "7"],
    ["simple-update", "--lattice", "chain", "--L", "2", "--schedule", "0.1:x"],
    ["simple-update", "--lattice", "chain", "--L", "2", "--D", "0"],
    ["energy", "--checkpoint", "missing.json"],
    ["nope"],
])
def test_bad_input_exit_2(cwd, argv):
    assert main(argv) == EXIT_INPUT


def _product_checkpoint(path):
    p, gz = init_product_state(SiteGraph(2, [(0, 1)]), "ud", "U1xU1")
    with open(path, "w") as f:
        json.dump(checkpoint_dict(p, gz), f)


@pytest.mark.parametrize("argv", [["--r", "-1"], ["--chi", "0"]])
def test_energy_bad_r_chi(cwd, argv):
    _product_checkpoint("c.json")
    assert main(["energy", "--checkpoint", "c.json"] + argv) == EXIT_INPUT


@pytest.mark.parametrize("text", ["{not json", '{"format": "fermitn.su-checkpoint/1"}', "[]"])
def test_corrupt_checkpoint_exit_3(cwd, text):
    with open("bad.json", "w") as f:
        f.write(text)
    assert main(["energy", "--checkpoint", "bad.json"]) == EXIT_STATE
    assert main(["simple-update", "--resume", "bad.json", "--checkpoint", "c.json"]) == EXIT_STATE


def test_ed_dimer(cwd):
    assert main(["ed", "--lattice", "chain", "--L", "2", "--U", "8", "--out", "ed.json"]) == EXIT_OK
    assert abs(read("ed.json")["energy"] - (8 - math.sqrt(80)) / 2) < 1e-12


def test_simple_update_dimer(cwd):
    argv = ["simple-update", "--lattice", "chain", "--L", "2", "--U", "8", "--D", "4",
            "--schedule", "0.1:200,0.05:200,0.01:200", "--checkpoint", "c.json", "--trace", "t.csv"]
    assert main(argv) == EXIT_OK
    with open("t.csv") as f:
        rows = list(csv.DictReader(f))
    assert abs(float(rows[-1]["energy"]) - (8 - math.sqrt(80)) / 2) < 1e-6
    assert main(["energy", "--checkpoint", "c.json", "--out", "e.json"]) == EXIT_OK
    assert abs(read("e.json")["total"] - float(rows[-1]["energy"])) < 1e-12


def test_zero_sweeps_checkpoint_is_initial_state(cwd):
    assert main(["simple-update", "--lattice", "ring", "--L", "4", "--schedule", "0.1:0",
                 "--occupations", "ud0d", "--checkpoint", "c.json"]) == EXIT_OK
    p, gz, pos, trace, _ = load_checkpoint(read("c.json"))
    p0, g0 = init_product_state(p.graph, "ud0d", "U1xU1")
    assert trace == []
    for i in p0.tensors:
        np.testing.assert_array_equal(p.tensors[i].to_dense(), p0.tensors[i].to_dense())
    assert gz.to_dict() == g0.to_dict()


def test_resume_continues_trace(cwd):
    base = ["simple-update", "--lattice", "chain", "--L", "3", "--n-up", "2", "--n-dn", "1", "--D", "4"]
    assert main(base + ["--schedule", "0.1:6,0.05:4", "--trace", "full.csv", "--checkpoint", "a.json"]) == EXIT_OK
    assert main(base + ["--schedule", "0.1:6", "--checkpoint", "half.json"]) == EXIT_OK
    d = read("half.json")
    d["extra"]["provenance"]["config"]["schedule"] = [[0.1, 6], [0.05, 4]]
    with open("half.json", "w") as f:
        json.dump(d, f)
    assert main(["simple-update", "--resume", "half.json", "--checkpoint", "b.json", "--trace", "res.csv"]) == EXIT_OK
    assert open("full.csv").read() == open("res.csv").read()


def _run_all(root):
    assert main(["generate", "--rrg", "8", "--seed", "3", "--out", "g.json"]) == EXIT_OK
    assert main(["optimize-path", "--graph", "g.json", "--D", "3", "--seed", "3", "--out", "tree.json"]) == EXIT_OK
    assert main(["simple-update", "--graph", "g.json", "--D", "3", "--symmetry", "U1", "--seed", "3",
                 "--schedule", "0.1:4,0.05:3", "--checkpoint", "c.json", "--trace", "t.csv"]) == EXIT_OK
    assert main(["energy", "--checkpoint", "c.json", "--r", "1", "--threads", "2", "--out", "e.json"]) == EXIT_OK
    assert main(["ed", "--graph", "g.json", "--out", "ed.json"]) == EXIT_OK
    return {name: (root / name).read_bytes() for name in ["g.json", "tree.json", "c.json", "t.csv", "e.json", "ed.json"]}


def test_outputs_byte_identical(tmp_path, monkeypatch):
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        d.mkdir()
        monkeypatch.chdir(d)
        outs.append(_run_all(d))
    assert outs[0] == outs[1]


def test_cluster_r0_equals_full_on_tree(cwd):
    g = SiteGraph(5, [(0, 1), (1, 2), (1, 3), (3, 4)])
    p, gz = random_peps(g, D=3, kind="U1xU1", seed=7, occupations=[1, 2, 3, 0, 1])
    canonicalize(p, gz)
    with open("c.json", "w") as f:
        json.dump(checkpoint_dict(p, gz), f)
    assert main(["energy", "--checkpoint", "c.json", "--method", "cluster", "--r", "0", "--out", "a.json"]) == 0
    assert main(["energy", "--checkpoint", "c.json", "--method", "full", "--out", "b.json"]) == 0
    a, b = read("a.json"), read("b.json")
    assert abs(a["total"] - b["total"]) < 1e-8
    for x, y in zip(a["terms"], b["terms"]):
        assert abs(x["energy"] - y["energy"]) < 1e-8


def _check_report(d):
    assert set(d) >= {"total", "per_site", "method", "r", "chi", "terms", "total_discarded_weight", "provenance"}
    assert isinstance(d["total"], float) and d["method"] in ("cluster", "full")
    for t in d["terms"]:
        assert len(t["sites"]) == 2 and isinstance(t["energy"], float)
        assert t["discarded_weight"] >= 0 and t["cluster_size"] >= 2
        assert "seconds" in t
    prov = d["provenance"]
    assert prov["package"] == "fermitn" and prov["command"] == "energy"
    RunConfig(**prov["config"]).validate()


def test_energy_report_schema(cwd):
    _product_checkpoint("c.json")
    assert main(["energy", "--checkpoint", "c.json", "--chi", "4", "--timing", "--out", "e.json"]) == 0
    d = read("e.json")
    _check_report(d)
    _check_report(json.loads(json.dumps(d)))
    assert d["chi"] == 4


def test_config_file_and_flag_override(cwd):
    with open("run.toml", "w") as f:
        f.write('lattice = "chain"\nL = [2]\nU = 4.0\n')
    assert main(["ed", "--config", "run.toml", "--out", "a.json"]) == EXIT_OK
    assert abs(read("a.json")["energy"] - (4 - math.sqrt(32)) / 2) < 1e-12
    assert main(["ed", "--config", "run.toml", "--U", "8", "--out", "b.json"]) == EXIT_OK
    assert abs(read("b.json")["energy"] - (8 - math.sqrt(80)) / 2) < 1e-12
    with open("run.json", "w") as f:
        json.dump({"lattice": "chain", "L": [2], "bogus": 1}, f)
    assert main(["ed", "--config", "run.json"]) == EXIT_INPUT


def test_graph_file_edge_list(cwd):
    with open("g.txt", "w") as f:
        f.write("0 1\n1 2\n2 3\n3 0\n")
    assert main(["ed", "--graph", "g.txt", "--U", "4", "--out", "e.json"]) == EXIT_OK
    assert abs(read("e.json")["energy"] - (-2.1027484834620718)) < 1e-10


def test_rrg8_reproduces_benchmark_value(cwd):
    # N=8, seed 0, D=8 row of results/rrg_benchmark.csv
    argv = ["simple-update", "--rrg", "8", "--seed", "0", "--U", "8", "--D", "8", "--symmetry", "U1",
            "--schedule", "0.1:30,0.05:20,0.02:20", "--energy-every", "5", "--checkpoint", "c.json"]
    assert main(argv) == EXIT_OK
    assert main(["energy", "--checkpoint", "c.json", "--r", "0", "--out", "e.json"]) == EXIT_OK
    assert abs(read("e.json")["total"] - (-3.263651154766728)) < 1e-10
    assert main(["ed", "--rrg", "8", "--seed", "0", "--out", "ed.json"]) == EXIT_OK
    assert abs(read("ed.json")["energy"] - (-3.1751871587789067)) < 1e-10
