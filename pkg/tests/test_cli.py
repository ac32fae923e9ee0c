"""Command-line interface: formats, determinism, exit codes."""

import json
import os

import pytest

from tautring.cli import EXIT_OK, EXIT_USAGE, main


def run_cli(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_compute_json_schema(capsys):
    code, out, err = run_cli(
        capsys, "compute", "--genus", "2", "--mode", "ttilde", "--max-codim", "3")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["genus"] == 2 and doc["mode"] == "ttilde"
    assert doc["complete"] is True
    dims = {(tuple(r["bidegree"]), r["codim"]): r["dim"] for r in doc["dimensions"]}
    assert dims[((0, 0), 0)] == 1
    total = {}
    for r in doc["dimensions"]:
        total[r["codim"]] = total.get(r["codim"], 0) + r["dim"]
    assert [total[c] for c in range(4)] == [1, 3, 3, 1]
    assert doc["socle"]["codim"] == 3 and doc["socle"]["dim"] == 1
    assert doc["engine"]["primes_seed"] == 20240911
    # progress only on stderr
    assert "computing" in err


def test_compute_csv(capsys):
    code, out, _ = run_cli(
        capsys, "compute", "--genus", "2", "--max-codim", "2", "--format", "csv")
    assert code == EXIT_OK
    lines = out.strip().splitlines()
    assert lines[0] == "i,j,codim,monomials,relation_rank,dim"
    assert len(lines) > 3


def test_compute_deterministic_across_threads_and_cache(tmp_path, capsys):
    base = ["compute", "--genus", "3", "--mode", "ttilde", "--max-codim", "5"]
    outs = []
    cache = str(tmp_path / "cache")
    for extra in ([], ["--threads", "8"],
                  ["--cache-dir", cache],      # cold cache
                  ["--cache-dir", cache]):     # warm cache
        code, out, _ = run_cli(capsys, *base, *extra)
        assert code == EXIT_OK
        outs.append(out)
    assert len(set(outs)) == 1  # byte-identical


def test_pairing_text_verdict(capsys):
    code, out, _ = run_cli(
        capsys, "pairing", "--genus", "2", "--mode", "ttilde", "--format", "text")
    assert code == EXIT_OK
    assert "gorenstein: true" in out


def test_pairing_json_modular_engine(capsys):
    code, out, _ = run_cli(
        capsys, "pairing", "--genus", "4", "--mode", "rtilde",
        "--engine", "modular")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert doc["gorenstein"] is True
    assert doc["engine"]["method"] == "modular"
    assert len(doc["engine"]["primes"]) >= 2
    assert [r["dim"] for r in doc["dimensions"]] == [1, 2, 2, 1]


def test_mg_command(capsys):
    code, out, _ = run_cli(capsys, "mg", "--genus", "3", "--format", "text")
    assert code == EXIT_OK
    assert "gorenstein: true" in out


def test_sympow_command(capsys):
    code, out, _ = run_cli(capsys, "sympow", "--genus", "2", "--n", "3")
    assert code == EXIT_OK
    doc = json.loads(out)
    assert [r["dim"] for r in doc["dimensions"]] == [1, 4, 6, 4, 1]
    assert doc["socle"] == {"codim": 4, "dim": 1, "location": None}
    assert doc["gorenstein"] is True


def test_house_command(capsys):
    code, out, _ = run_cli(capsys, "house", "--genus", "2", "--format", "svg")
    assert code == EXIT_OK
    assert out.lstrip().startswith("<svg")
    code, out, _ = run_cli(capsys, "house", "--genus", "2", "--max-codim", "3")
    assert code == EXIT_OK
    assert "j=" in out


def test_out_file(tmp_path, capsys):
    target = tmp_path / "result.json"
    code, _, _ = run_cli(
        capsys, "compute", "--genus", "2", "--max-codim", "2",
        "--out", str(target))
    assert code == EXIT_OK
    assert json.loads(target.read_text())["genus"] == 2


@pytest.mark.parametrize("argv", [
    ["compute", "--genus", "0"],
    ["compute", "--genus", "2", "--mode", "bogus"],
    ["compute", "--genus", "2", "--max-codim", "-1"],
    ["compute", "--genus", "2", "--engine", "modular"],
    ["sympow", "--genus", "2"],             # missing --n
    ["sympow", "--genus", "2", "--n", "2"],  # below the 2g-1 band
    ["compute", "--genus", "2", "--config", "/nonexistent/path.conf"],
])
def test_usage_errors(capsys, argv):
    code, _, _ = run_cli(capsys, *argv)
    assert code == EXIT_USAGE


def test_config_file_and_env_override(tmp_path, capsys, monkeypatch):
    conf = tmp_path / "job.conf"
    conf.write_text("# job settings\nmode = ttilde\nmax_codim = 2\nseed = 7\n")
    code, out, _ = run_cli(
        capsys, "compute", "--genus", "2", "--config", str(conf))
    assert code == EXIT_OK
    assert json.loads(out)["engine"]["primes_seed"] == 7
    monkeypatch.setenv("TAUTRING_PRIME_SEED", "99")
    code, out, _ = run_cli(
        capsys, "compute", "--genus", "2", "--config", str(conf))
    assert code == EXIT_OK
    assert json.loads(out)["engine"]["primes_seed"] == 99


def test_bad_config_line(tmp_path, capsys):
    conf = tmp_path / "bad.conf"
    conf.write_text("mode ttilde\n")
    code, _, _ = run_cli(capsys, "compute", "--genus", "2", "--config", str(conf))
    assert code == EXIT_USAGE


def test_version_flag(capsys):
    assert main(["--version"]) == 0
