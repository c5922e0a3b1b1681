import json

import pytest

from pregelfl.cli import main
from pregelfl.graph import load_edge_list


def records(capsys) -> list[dict]:
    out = capsys.readouterr().out
    return [json.loads(line) for line in out.splitlines() if line.strip()]


def test_generate_writes_edge_list(tmp_path, capsys):
    path = tmp_path / "ff.txt"
    assert main(["generate", "ff", str(path), "--n", "300", "--seed", "2"]) == 0
    (rec,) = records(capsys)
    assert rec["command"] == "generate"
    assert set(rec) == {"command", "params", "metrics", "timestamp"}
    g = load_edge_list(path)
    assert g.n == rec["metrics"]["n"] == 300 and g.m == rec["metrics"]["m"]


def test_generate_weighted_rmat(tmp_path, capsys):
    path = tmp_path / "r.txt"
    assert main(["generate", "rmat", str(path), "--scale", "7", "--edges", "400",
                 "--weights", "1,10"]) == 0
    assert records(capsys)[0]["metrics"]["weighted"]
    assert load_edge_list(path, weighted=True).weighted


def test_solve_record_and_result(tmp_path, capsys):
    res = tmp_path / "res.json"
    args = ["solve", "--ff", "300", "--epsilon", "0.3", "--k", "16", "--result", str(res)]
    assert main(args) == 0
    (rec,) = records(capsys)
    m = rec["metrics"]
    assert m["objective"] == pytest.approx(m["audited_objective"], rel=1e-9)
    assert m["supersteps"] > 0 and m["selected"] >= 1
    full = json.loads(res.read_text())
    assert full["objective"] == m["objective"] and len(full["opened"]) == m["selected"]


def test_solve_repeatable(capsys):
    args = ["solve", "--ff", "200", "--epsilon", "0.5", "--k", "8", "--seed", "3"]
    outs = []
    for _ in range(2):
        assert main(args) == 0
        m = records(capsys)[0]["metrics"]
        m.pop("seconds")
        outs.append(m)
    assert outs[0] == outs[1]


def test_solve_from_files(tmp_path, capsys):
    g = tmp_path / "g.txt"
    g.write_text("0 1 2\n1 2 1\n2 3 4\n")
    c = tmp_path / "c.txt"
    c.write_text("0 5\n3 1\n")
    assert main(["solve", "--graph", str(g), "--weighted", "--costs", str(c), "--mode",
                 "exact"]) == 0
    m = records(capsys)[0]["metrics"]
    assert m["objective"] == m["audited_objective"]


def test_sketch_eval_one_record_per_distance(capsys):
    assert main(["sketch-eval", "--ff", "200", "--k", "4,8", "--samples", "10",
                 "--distances", "1,2,3"]) == 0
    recs = records(capsys)
    assert len(recs) == 6
    assert {(r["params"]["k"], r["params"]["distance"]) for r in recs} == {
        (k, d) for k in (4, 8) for d in (1.0, 2.0, 3.0)}
    assert all(r["metrics"]["mean_error"] >= 0 for r in recs)


def test_compare_with_cache(tmp_path, capsys):
    args = ["compare", "--ff", "150", "--epsilon", "0.1,1", "--k", "16", "--seeds", "0,1",
            "--cache", str(tmp_path / "cache")]
    assert main(args) == 0
    first = records(capsys)
    assert len(first) == 4
    assert main(args) == 0
    second = records(capsys)
    for a, b in zip(first, second):
        assert a["metrics"]["relative_cost"] == b["metrics"]["relative_cost"]
        r = a["metrics"]
        assert r["relative_cost"] == pytest.approx(r["objective"] / r["baseline_objective"])


def test_mis_bench_small(capsys):
    assert main(["mis-bench", "--sizes", "200", "--runs", "2", "--k", "16",
                 "--epsilon", "0.5"]) == 0
    (rec,) = records(capsys)
    assert rec["metrics"]["valid"]
    assert rec["metrics"]["luby_supersteps"] > 0


def test_out_file_appends(tmp_path, capsys):
    out = tmp_path / "rec.jsonl"
    for _ in range(2):
        assert main(["--out", str(out), "generate", "path", str(tmp_path / "p.txt"),
                     "--n", "5"]) == 0
    assert capsys.readouterr().out == ""
    assert len(out.read_text().splitlines()) == 2


def test_usage_errors(tmp_path):
    assert main([]) == 2
    assert main(["solve"]) == 2
    assert main(["solve", "--ff", "50", "--epsilon", "-1"]) == 2
    assert main(["solve", "--graph", str(tmp_path / "missing.txt")]) == 2


def test_infeasible_exit(tmp_path):
    g = tmp_path / "g.txt"
    g.write_text("0 1\n2 3\n")
    c = tmp_path / "c.txt"
    c.write_text("0 1\n")
    assert main(["solve", "--graph", str(g), "--costs", str(c)]) == 3


def test_superstep_cap_exit():
    assert main(["solve", "--ff", "200", "--max-supersteps", "3"]) == 4
