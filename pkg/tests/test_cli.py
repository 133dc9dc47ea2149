import json

import pytest

from confexec import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_rsts(capsys):
    code, out, _ = run(capsys, "analyze", "rsts", "--n", "10", "--m", "4", "--s", "5", "--t", "4")
    assert code == 0 and json.loads(out)["epsilon_exact"] == "1/42"


def test_analyze_rsts_csv(capsys):
    code, out, _ = run(capsys, "analyze", "rsts", "--n", "10000", "--m", "3333", "--s", "38", "--t", "35", "--format", "csv")
    assert code == 0 and out.splitlines()[1].endswith(",True")


def test_analyze_liveness(capsys):
    code, out, _ = run(capsys, "analyze", "liveness", "--n", "20", "--c", "4", "--t", "5", "--trials", "2000")
    data = json.loads(out)
    assert code == 0 and data["delta_exact"] == "2101/3125" and abs(data["montecarlo"] - 0.67232) < 0.05


@pytest.mark.parametrize("argv", [
    ["analyze", "liveness", "--n", "3", "--c", "4", "--t", "1"],
    ["analyze", "rsts", "--n", "10", "--m", "11", "--s", "5", "--t", "4"],
    ["run", "no-such-scenario"],
    ["sweep", "token", "--param", "zzz=1..2"],
    ["sweep", "token", "--param", "c=1..6", "--budget", "10"],
    ["frobnicate"],
])
def test_bad_input_exits_2(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_run_bundled(capsys, tmp_path):
    code, out, _ = run(capsys, "run", "token", "--out", str(tmp_path))
    summary = json.loads(out)
    assert code == 0 and summary["answered"] == summary["requests"] and summary["invariant_violations"] == []
    assert (tmp_path / "report.json").exists()


def test_run_csv(capsys):
    code, out, _ = run(capsys, "run", "compute_cost", "--format", "csv")
    assert code == 0 and out.startswith("id,user,kind")


def test_run_scenario_file_with_error(capsys, tmp_path):
    f = tmp_path / "bad.yaml"
    f.write_text("name: x\nnodes: 2\ncommittee: 1\nblocks: nope\n")
    code, _, err = run(capsys, "run", str(f))
    assert code == 2 and f"{f}:4:" in err


def test_run_violation_exits_1(capsys, tmp_path):
    f = tmp_path / "wrong.yaml"
    f.write_text(
        "name: wrong\nnodes: 2\ncommittee: 1\nblocks: 5\nusers: [a]\nscript:\n"
        "  - {block: 2, user: a, deploy: counter, name: c}\n"
        "  - {block: 3, user: a, invoke: c, function: incr, args: [1], expect: 7}\n"
    )
    code, _, _ = run(capsys, "run", str(f))
    assert code == 1


@pytest.mark.parametrize("text,name,values", [
    ("c=1..3", "committee", [1, 2, 3]),
    ("n=4,8", "nodes", [4, 8]),
    ("dropout=0.1,0.3", "dropout", [0.1, 0.3]),
    ("interval=12", "block_interval", [12]),
])
def test_parse_param(text, name, values):
    assert cli.parse_param(text) == (name, values)


def test_sweep(capsys, tmp_path):
    code, out, _ = run(capsys, "sweep", "token", "--param", "c=1..2", "--out", str(tmp_path))
    lines = out.splitlines()
    assert code == 0 and lines[0].startswith("committee,ratio,trials,availability_gaps")
    assert len(lines) == 3 and (tmp_path / "sweep.csv").read_text() == out
