import csv
import json

import pytest

from nearcrit import __version__
from nearcrit.cli import parse_quad, read_records_csv, run
from nearcrit.config import RunConfig, VALID_KEYS, load_config
from nearcrit.errors import ParameterError
from nearcrit.lattice import BETA_C


def write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_empty_file_gives_defaults(tmp_path):
    cfg = load_config(write(tmp_path, ""))
    assert cfg == RunConfig()
    assert cfg.beta == pytest.approx(0.5 * __import__("math").log(1 + 2 ** 0.5))
    assert cfg.beta == BETA_C and cfg.stride == 3


def test_key_value_and_json_forms(tmp_path):
    a = load_config(write(tmp_path, "a = 1/8\nh: 2.5  # comment\nbudget = 1e5\n"))
    assert str(a.a) == "1/8" and a.h == 2.5 and a.budget == 100_000
    b = load_config(write(tmp_path, json.dumps({"a": "1/8", "h": 2.5, "budget": 100000}), "c.json"))
    assert a == b


def test_unknown_key_lists_valid_keys(tmp_path):
    with pytest.raises(ParameterError) as exc:
        load_config(write(tmp_path, "colour = red\n"))
    for key in VALID_KEYS:
        assert key in str(exc.value)


def test_admissibility_condition(tmp_path):
    with pytest.raises(ParameterError, match="admissibility"):
        load_config(write(tmp_path, "a = 1\nh = 1.5\n"))
    assert load_config(write(tmp_path, "a = 1/4\nh = 10\n")).scaled_field <= 1


@pytest.mark.parametrize("text", ["budget = -5", "stride = 0", "a = 2", "beta = -1",
                                  "field_schedule = staggered", "seed = -1"])
def test_out_of_range_values(tmp_path, text):
    with pytest.raises(ParameterError):
        load_config(write(tmp_path, text))


def test_usage_errors_exit_2(tmp_path, capsys):
    assert run(["frobnicate"]) == 2
    assert run(["verify", "--no-such-flag"]) == 2
    err = capsys.readouterr().err
    assert "usage" in err
    bad = write(tmp_path, "h = 3\n")
    assert run(["enumerate", "--config", str(bad), "--output-dir", str(tmp_path)]) == 2
    assert run(["--help"]) == 0


def test_verify_exact_exit_codes(tmp_path, monkeypatch):
    out = tmp_path / "o"
    assert run(["verify", "--suite", "exact", "--max-edges", "12", "--output-dir", str(out)]) == 0
    rep = json.loads((out / "verify-exact.json").read_text())
    assert rep["header"]["nearcrit_version"] == __version__
    assert rep["header"]["config"]["beta"] == BETA_C
    assert rep["result"]["passed"] and rep["result"]["n_instances"] >= 30

    import nearcrit.suite as suite

    class Failing:
        def to_dict(self):
            return {"passed": False}

    monkeypatch.setattr(suite, "exact_suite", lambda *a, **k: Failing())
    assert run(["verify", "--suite", "exact", "--output-dir", str(out)]) == 1


def test_scan_one_arm_rows_and_determinism(tmp_path):
    argv = ["scan", "one-arm", "--a", "1,1/2,1/4,1/8", "--budget", "1e3", "--seed", "7"]
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        with pytest.warns(Warning):
            assert run(argv + ["--output-dir", str(d)]) == 0
        outs.append(d)
    rows = read_records_csv(outs[0] / "scan-one-arm.csv")
    assert len(rows) == 4 and [r["a"] for r in rows] == ["1", "1/2", "1/4", "1/8"]
    fit = json.loads((outs[0] / "scan-one-arm-fit.json").read_text())
    assert fit["result"]["fit"]["model"] == "power-law"
    text = (outs[0] / "scan-one-arm.csv").read_text()
    assert text.startswith(f"# nearcrit {__version__}")
    for name in ("scan-one-arm.csv", "scan-one-arm-fit.json"):
        a = (outs[0] / name).read_text().replace(str(outs[0]), "X")
        b = (outs[1] / name).read_text().replace(str(outs[1]), "X")
        assert a == b


def test_sampling_commands_are_deterministic(tmp_path):
    for cmd, name in ((["sample-fk", "--box", "4", "--h", "0.3"], "sample-fk.csv"),
                      (["sample-current", "--box", "2"], "sample-current.csv"),
                      (["backbone", "trace", "--box", "4", "--h", "0.5", "--to-ghost",
                        "--count", "3"], "backbone-trace.jsonl")):
        texts = []
        for _ in range(2):
            assert run(cmd + ["--budget", "500", "--output-dir", str(tmp_path)]) == 0
            texts.append((tmp_path / name).read_bytes())
        assert texts[0] == texts[1]
    lines = (tmp_path / "backbone-trace.jsonl").read_text().splitlines()
    assert "header" in json.loads(lines[0])
    steps = [json.loads(x) for x in lines[1:]]
    assert {"sample", "step", "vertex", "explored"} <= set(steps[0])


def test_enumerate_matches_exact(tmp_path):
    assert run(["enumerate", "--box", "2", "--h", "0.2", "--output-dir", str(tmp_path)]) == 0
    res = json.loads((tmp_path / "enumerate.json").read_text())["result"]
    o = res["origin"]
    assert res["two_point"][o] == pytest.approx(1.0)
    # Edwards-Sokal: spin correlations are FK connection probabilities (ghost included)
    for v in range(res["n_vertices"]):
        assert res["two_point"][v] == pytest.approx(res["fk_connection_to_origin"][v], abs=1e-12)
        assert res["magnetization"][v] == pytest.approx(res["fk_connection_to_ghost"][v], abs=1e-12)
    assert run(["enumerate", "--box", "4", "--output-dir", str(tmp_path)]) == 2


QUAD = """# unit square with a diagonal
v 0 0
v 1 0
v 1 1
v 0 1
e 0 1
e 1 2
e 2 3
e 3 0
e 0 2
ab 3 0
bc 0 1
cd 1 2
da 2 3
"""


def test_extremal_length_command(tmp_path, capsys):
    q = write(tmp_path, QUAD, "q.txt")
    assert parse_quad(QUAD).n_edges == 5
    for method, name in (("dirichlet", "dirichlet"), ("oracle", "constraint-generation")):
        assert run(["extremal-length", str(q), "--method", method, "--output-dir", str(tmp_path)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["method"] == name
        assert out["length"] == pytest.approx(1 / 3, abs=1e-9)
        assert set(out) == {"length", "method", "residual"}
    bad = write(tmp_path, "v 0 0\nnonsense\n", "bad.txt")
    assert run(["extremal-length", str(bad), "--output-dir", str(tmp_path)]) == 2


def test_fit_command(tmp_path):
    rows = [("one_arm", a, 0.9 * a ** 0.125) for a in (1, 0.5, 0.25, 0.125)]
    p = tmp_path / "in.csv"
    with open(p, "w", newline="") as fh:
        fh.write("# synthetic\n")
        w = csv.writer(fh)
        w.writerow(["observable", "a", "h", "params", "mean", "stderr", "n", "seed"])
        for obs, a, m in rows:
            w.writerow([obs, a, 0, "{}", m, 0.001, 100, 0])
    assert run(["fit", "--input", str(p), "--observable", "one_arm", "--output-dir", str(tmp_path)]) == 0
    fit = json.loads((tmp_path / "fit.json").read_text())["result"]["fit"]
    assert fit["exponent"] == pytest.approx(0.125, abs=1e-6)
