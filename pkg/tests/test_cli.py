import csv
import io
import json
import subprocess
import sys

import pytest

from frolicher.cli import main, parse_complex, parse_grid


def _run(capsys, *argv):
    status = main(list(argv))
    return status, capsys.readouterr().out


def _csv_rows(text):
    lines = text.splitlines()
    assert lines[0].startswith("# tool=frolicher")
    return list(csv.DictReader(io.StringIO("\n".join(lines[1:]))))


def test_parse_helpers():
    assert parse_complex("1i") == 1j
    assert parse_complex("-0.5+2i") == complex(-0.5, 2)
    assert list(parse_grid("0,1,1i")) == [0, 1, 1j]
    sq = parse_grid("square:0.3:5")
    assert len(sq) == 25 and max(abs(t.real) for t in sq) == pytest.approx(0.3)
    assert parse_grid(",") == ()


def test_pages_iwasawa(capsys):
    status, out = _run(capsys, "pages", "--model", "iwasawa")
    assert status == 0
    assert "degeneration_page: 2" in out


def test_pages_csv_schema(capsys):
    status, out = _run(capsys, "pages", "--model", "iwasawa", "--format", "csv")
    rows = _csv_rows(out)
    assert list(rows[0]) == ["r", "p", "q", "dim"]
    cell = [r for r in rows if (r["r"], r["p"], r["q"]) == ("2", "1", "0")]
    assert cell[0]["dim"] == "2"
    header = out.splitlines()[0]
    for key in ("version=", "seed=0", "tol_rank=", "tol_zero=", "model_hash="):
        assert key in header


def test_favb_torus_constant(capsys):
    status, out = _run(capsys, "favb", "--model", "torus_2", "--k", "1", "--r", "1", "--format", "csv")
    assert status == 0
    rows = _csv_rows(out)
    assert list(rows[0]) == ["h_real", "h_imag", "kernel_dim", "lambda_bk", "lambda_bk_plus_1"]
    assert {r["kernel_dim"] for r in rows} == {"4"}


def test_favb_iwasawa_rank_jump(capsys):
    status, out = _run(capsys, "favb", "--model", "iwasawa", "--k", "1", "--r", "1", "--format", "csv")
    assert status == 1
    rows = _csv_rows(out)
    jumps = [(r["h_real"], r["h_imag"]) for r in rows if r["kernel_dim"] != "4"]
    assert jumps == [("0", "0")]


def test_favb_default_r_is_degeneration_page(capsys):
    status, _ = _run(capsys, "favb", "--model", "iwasawa", "--k", "1")
    assert status == 0


def test_validate_dh_tower_sg(capsys):
    for argv in (
        ["validate", "--model", "nilmanifold_e3"],
        ["dh", "--model", "iwasawa", "--h-grid", "0,0.5,1i"],
        ["tower", "--model", "iwasawa"],
        ["sg", "--model", "iwasawa"],
        ["sg", "--model", "iwasawa", "--metric", "random", "--seed", "3"],
    ):
        status, out = _run(capsys, *argv)
        assert status == 0, argv


def test_family_commands(capsys):
    status, out = _run(
        capsys, "family", "--model", "iwasawa_family", "--k", "1", "--h-grid", "0.5,1i", "--t-grid", "0,0.1", "--format", "csv"
    )
    assert status == 0
    rows = _csv_rows(out)
    assert list(rows[0]) == ["t_real", "t_imag", "h_real", "h_imag", "kernel_dim", "degen_page"]
    status, _ = _run(capsys, "family", "--model", "iwasawa_family", "--mode", "sg", "--t-grid", "square:0.2:3")
    assert status == 0


def test_file_source(tmp_path, capsys):
    path = tmp_path / "iw.txt"
    path.write_text("n = 3\nd1 = 0\nd2 = 0\nd3 = -12\n")
    status, out = _run(capsys, "pages", "--file", str(path))
    assert status == 0 and "degeneration_page: 2" in out


def test_input_errors_exit_2(tmp_path, capsys):
    assert _run(capsys, "pages", "--model", "no_such_model")[0] == 2
    bad = tmp_path / "bad.txt"
    bad.write_text("n = 3\nd1 = 0\nd2 = 0\nd3 = -1x\n")
    status, out = _run(capsys, "pages", "--file", str(bad))
    assert status == 2 and "line 4" in out
    assert _run(capsys, "favb", "--model", "iwasawa", "--k", "9")[0] == 2
    assert _run(capsys, "favb", "--model", "iwasawa", "--h-grid", "20")[0] == 2
    assert _run(capsys, "pages", "--model", "iwasawa", "--tol-rank", "-1")[0] == 2
    assert _run(capsys, "dh", "--model", "iwasawa", "--h-grid", ",")[0] == 2


def test_out_and_json(tmp_path, capsys):
    out = tmp_path / "pages.json"
    status, _ = _run(capsys, "pages", "--model", "iwasawa", "--format", "json", "--out", str(out))
    assert status == 0
    data = json.loads(out.read_text())
    assert data["summary"]["degeneration_page"] == 2
    assert data["meta"]["model"] == "iwasawa" and data["columns"] == ["r", "p", "q", "dim"]


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_byte_identical_runs(fmt, tmp_path):
    outs = []
    for i in range(2):
        path = tmp_path / f"run{i}.{fmt}"
        cmd = [sys.executable, "-m", "frolicher", "favb", "--model", "iwasawa", "--k", "2", "--format", fmt, "--out", str(path)]
        subprocess.run(cmd, check=True)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_jobs_do_not_change_output(capsys):
    _, a = _run(capsys, "favb", "--model", "nilmanifold_e3", "--k", "2", "--format", "csv", "--jobs", "1")
    _, b = _run(capsys, "favb", "--model", "nilmanifold_e3", "--k", "2", "--format", "csv", "--jobs", "4")
    assert a == b
