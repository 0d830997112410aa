import json
import shutil
import subprocess

import pytest

from spectra_lab import SCHEMA
from spectra_lab.cli import EXIT_EXTRACT, EXIT_INVALID, EXIT_MODEL, EXIT_PIECE, load_model, main, parse_model


@pytest.fixture(autouse=True)
def cache_env(tmp_path, monkeypatch):
    d = tmp_path / "cache"
    monkeypatch.setenv("SPECTRA_LAB_CACHE", str(d))
    return d


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_spectrum_examples(capsys):
    code, out, _ = run(capsys, "spectrum", "cf12", "--max-period", "1")
    assert code == 0
    assert out.splitlines() == ["value,witness", "2.23606798,1", "2.82842712,2"]
    code, out, _ = run(capsys, "spectrum", "cf12", "--max-period", "4")
    assert "2.97321375,2211" in out.splitlines()
    assert all(len(line.split(",")) == 2 for line in out.splitlines())
    code, _, err = run(capsys, "spectrum", "cf12", "--max-period", "0")
    assert code == EXIT_INVALID and err


def test_spectrum_cap(capsys):
    code, _, _ = run(capsys, "spectrum", "cf12", "--max-period", "99")
    assert code == EXIT_INVALID


def test_connect_examples(capsys):
    code, out, _ = run(capsys, "connect", "cf12", "1", "2", "--t", "3.05", "--memory", "5")
    assert code == 0
    doc = json.loads(out)
    assert doc["schema"] == SCHEMA and doc["command"] == "connect"
    assert doc["result"]["connected"] is True
    code, out, _ = run(capsys, "connect", "cf12", "1", "2", "--t", "2.95", "--memory", "5")
    assert code == 0 and json.loads(out)["result"]["connected"] is False
    code, _, _ = run(capsys, "connect", "cf12", "12", "2", "--t", "3.0", "--memory", "4")
    assert code == EXIT_PIECE


def test_connect_with_grid(capsys):
    code, out, _ = run(capsys, "connect", "cf12", "1", "2", "--t", "3.05", "--memory", "4",
                       "--q-grid", "2.99,3.0,3.01,3.02,3.03")
    assert code == 0
    assert json.loads(out)["result"]["q_witness"] in (2.99, 3.0, 3.01, 3.02, 3.03)


def test_decompose_example(capsys):
    code, out, _ = run(capsys, "decompose", "cf12", "--t", "2.9", "--memory", "6")
    assert code == 0
    res = json.loads(out)["result"]
    assert len(res["pieces"]) == 2
    assert {p["kind"] for p in res["pieces"]} == {"subhorseshoe_periodic"}
    assert res["transients"] == []
    code, _, _ = run(capsys, "decompose", "cf12", "--t", "2.0", "--memory", "3")
    assert code == EXIT_INVALID


def test_dimension_command(capsys):
    code, out, _ = run(capsys, "dimension", "cf12", "--max-depth", "3", "--memory", "2")
    assert code == 0
    res = json.loads(out)["result"]
    assert 0.5 < res["Du"] < 0.56
    code, out, _ = run(capsys, "dimension", "golden-mean", "--max-depth", "2", "--memory", "2")
    assert code == 0


def test_staircase_files(capsys, tmp_path):
    out = tmp_path / "st.csv"
    code, _, _ = run(capsys, "staircase", "cf12", "--t-min", "2.8", "--t-max", "3.2", "--steps", "3",
                     "--memory", "3", "--out", str(out))
    assert code == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "t,du_in,du_out,ds_in,ds_out,hd_sum,flags"
    assert len(rows) == 4 and all(len(r.split(",")) == 7 for r in rows)
    cols = [[float(x) for x in r.split(",")[1:6]] for r in rows[1:]]
    for a, b in zip(cols, cols[1:]):
        assert all(y >= x - 1e-9 for x, y in zip(a, b))
    assert cols[0] == [0.0] * 5
    plot = (tmp_path / "st.csv.dat").read_text().splitlines()
    assert plot[0].startswith("#") and len([p for p in plot if not p.startswith("#")]) == 3


def test_staircase_edge_cases(capsys, tmp_path):
    code, out, _ = run(capsys, "staircase", "cf12", "--t-min", "3.0", "--t-max", "3.2", "--steps", "1",
                       "--memory", "2")
    assert code == 0
    rows = out.splitlines()
    assert len(rows) == 2 and rows[1].startswith("3,")
    code, _, _ = run(capsys, "staircase", "cf12", "--t-min", "3.2", "--t-max", "3.0", "--memory", "2")
    assert code == EXIT_INVALID


def test_extract_exit_codes(capsys):
    code, _, err = run(capsys, "extract", "cf12", "--t", "2.9", "--memory", "4")
    assert code == EXIT_EXTRACT
    assert "error" in json.loads(err)


def test_bad_models(capsys, tmp_path):
    good = json.loads(json.dumps(load_model("cf12").raw))
    cases = {
        "unknown_field": {**good, "colour": "red"},
        "no_schema": {k: v for k, v in good.items() if k != "schema"},
        "bad_schema": {**good, "schema": "spectra-lab/0"},
        "bad_letter": {**good, "transitions": [[1, 3]]},
        "bad_potential": {**good, "potential": {"kind": "nope"}},
    }
    for name, doc in cases.items():
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(doc))
        code, _, err = run(capsys, "spectrum", str(p), "--max-period", "2")
        assert code == EXIT_MODEL, name
        assert "bad model" in err
    (tmp_path / "broken.json").write_text("{")
    assert run(capsys, "spectrum", str(tmp_path / "broken.json"))[0] == EXIT_MODEL
    assert run(capsys, "spectrum", str(tmp_path / "missing.json"))[0] == EXIT_MODEL


def test_model_round_trip(tmp_path, capsys):
    for name in ("cf12", "golden-mean"):
        m = load_model(name)
        again = parse_model(json.loads(json.dumps(m.raw)))
        assert again.ts == m.ts and again.potential == m.potential
        p = tmp_path / f"{name}.json"
        p.write_text(json.dumps(m.raw))
        a = run(capsys, "spectrum", str(p), "--max-period", "3", "--no-cache")
        b = run(capsys, "spectrum", name, "--max-period", "3", "--no-cache")
        assert a == b


def test_determinism_and_cache(capsys, cache_env):
    argv = ("connect", "cf12", "1", "2", "--t", "3.05", "--memory", "4")
    cold = run(capsys, *argv)
    assert any(cache_env.iterdir())
    warm = run(capsys, *argv)
    off = run(capsys, *argv, "--no-cache")
    assert cold == warm == off
    for argv in (("spectrum", "golden-mean", "--max-period", "5"),
                 ("decompose", "golden-mean", "--t", "2.6", "--memory", "2")):
        first = run(capsys, *argv)
        assert first[0] == 0
        assert run(capsys, *argv) == first == run(capsys, *argv, "--no-cache")


def test_json_outputs_reparse(capsys):
    for argv in (("dimension", "cf12", "--max-depth", "2", "--memory", "2"),
                 ("decompose", "cf12", "--t", "3.1", "--memory", "3"),
                 ("connect", "cf12", "1", "2", "--t", "3.05", "--memory", "4")):
        code, out, _ = run(capsys, *argv)
        assert code == 0
        doc = json.loads(out)
        assert set(doc) == {"schema", "command", "version", "result"}
        assert json.dumps(doc, sort_keys=True, indent=2) + "\n" == out


def test_console_script_installed(tmp_path):
    exe = shutil.which("spectra-lab")
    if exe is None:
        pytest.skip("console script not on PATH")
    env = {"SPECTRA_LAB_CACHE": str(tmp_path), "PATH": "/usr/bin:/bin"}
    proc = subprocess.run([exe, "spectrum", "cf12", "--max-period", "1"], capture_output=True, text=True,
                          env=env)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[1] == "2.23606798,1"
