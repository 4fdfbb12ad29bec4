"""コマンドラインのテスト"""

import joblib
import pandas as pd
import pytest

from los_cli import EXIT_BUDGET, EXIT_CONVERGENCE, EXIT_INPUT, EXIT_OK, main
from matrix_io import load_matrix
from state_metadata import CompileMetadata

from conftest import PROGRAMS, ROOT, WIN_ABSTRACTION

CONFIG = str(ROOT / "config.yaml")


def run(*argv, out):
    return main([*argv, "--config", CONFIG, "--output-dir", str(out), "--quiet"])


def test_compile(tmp_path, capsys):
    assert run("compile", str(PROGRAMS / "monty_ht.pw"), out=tmp_path) == EXIT_OK
    assert "dim=162 nnz=324" in capsys.readouterr().out
    assert load_matrix(tmp_path / "monty_ht.mtx").shape == (162, 162)
    meta = CompileMetadata.load(tmp_path / "monty_ht.meta.json")
    assert meta.labels == [1, 2, 3, 4, 5, 6]
    assert meta.stop_label == 6


@pytest.mark.parametrize("fmt, suffix", [("json", ".json"), ("csv", ".csv")])
def test_compile_formats(tmp_path, fmt, suffix):
    assert run("compile", str(PROGRAMS / "xor_swap.pw"), "--format", fmt, out=tmp_path) == EXIT_OK
    assert (tmp_path / f"xor_swap{suffix}").exists()


def test_analyze_writes_tables(tmp_path):
    code = run("analyze", str(PROGRAMS / "monty_hw.pw"), "--abstraction", WIN_ABSTRACTION,
               "--s0", "d=0,g=0,o=0", out=tmp_path)
    assert code == EXIT_OK
    abstract = pd.read_csv(tmp_path / "monty_hw_abstract.csv")
    assert abstract["probability"].tolist() == pytest.approx([2 / 3, 1 / 3], abs=1e-6)
    terminal = pd.read_csv(tmp_path / "monty_hw_terminal.csv")
    assert len(terminal) == 12
    assert set(terminal["label"]) == {9}
    assert terminal["configuration"].str.endswith("@9").all()


def test_analyze_parametric_program(tmp_path):
    code = run("analyze", str(PROGRAMS / "monty_hp.pw"), "--param", "p=1", "--abstraction", WIN_ABSTRACTION,
               "--s0", "d=0,g=0,o=0", out=tmp_path)
    assert code == EXIT_OK
    abstract = pd.read_csv(tmp_path / "monty_hp_abstract.csv")
    assert abstract["probability"].iloc[0] == pytest.approx(2 / 3, abs=1e-6)


def test_simulate(tmp_path, capsys):
    code = run("simulate", str(PROGRAMS / "monty_hw.pw"), "--runs", "20000", "--seed", "1",
               "--condition", "d==g", out=tmp_path)
    assert code == EXIT_OK
    line = [l for l in capsys.readouterr().out.splitlines() if l.startswith("d==g:")][0]
    assert abs(float(line.split(":")[1]) - 2 / 3) < 0.02
    table = pd.read_csv(tmp_path / "monty_hw_simulation.csv")
    assert table["frequency"].sum() == pytest.approx(1.0)


def test_sweep(tmp_path):
    assert run("sweep", str(PROGRAMS / "monty_sketch.yaml"), "--grid", "0:0.25:1", out=tmp_path) == EXIT_OK
    df = pd.read_csv(tmp_path / "monty_sketch_sweep.csv")
    assert df["p"].tolist() == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert df["phi"].tolist() == pytest.approx([(1 + p) / 3 for p in df["p"]], abs=1e-9)


def test_synthesize_monty(tmp_path, capsys):
    assert run("synthesize", str(PROGRAMS / "monty_sketch.yaml"), out=tmp_path) == EXIT_OK
    assert "Φ*=0.6666666" in capsys.readouterr().out
    assert (tmp_path / "monty_sketch_lambda.csv").exists()
    assert (tmp_path / "monty_sketch_trace.csv").exists()
    assert (tmp_path / "monty_sketch_program.txt").exists()
    result = joblib.load(tmp_path / "monty_sketch_result.joblib")
    assert result.lam.tolist() == [[1.0, 0.0]]


def test_synthesize_budget_exhausted(tmp_path):
    sketch = tmp_path / "hopeless.yaml"
    sketch.write_text(
        "variables:\n  x: [0, 1]\nlibrary:\n  - skip\nsteps: 1\ntarget:\n  permutation: [2, 1]\n",
        encoding="utf-8",
    )
    assert run("synthesize", str(sketch), "--restarts", "1", out=tmp_path) == EXIT_BUDGET


def test_synthesize_unknown_start(tmp_path):
    assert run("synthesize", str(PROGRAMS / "swap_sketch.yaml"), "--start", "nope", out=tmp_path) == EXIT_INPUT


def test_missing_file(tmp_path):
    assert run("compile", str(tmp_path / "missing.pw"), out=tmp_path) == EXIT_INPUT


def test_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.pw"
    bad.write_text("var x:{0,1};\nx := ;\n", encoding="utf-8")
    out = tmp_path / "out"
    assert run("compile", str(bad), out=out) == EXIT_INPUT
    assert "2" in capsys.readouterr().err
    assert not out.exists() or not any(out.iterdir())


def test_unbound_parameter_and_bad_param(tmp_path):
    assert run("compile", str(PROGRAMS / "monty_hp.pw"), out=tmp_path) == EXIT_INPUT
    assert run("simulate", str(PROGRAMS / "monty_hp.pw"), "--param", "p", out=tmp_path) == EXIT_INPUT


def test_non_convergence(tmp_path):
    assert run("analyze", str(PROGRAMS / "monty_ht.pw"), "--max-steps", "1", out=tmp_path) == EXIT_CONVERGENCE


@pytest.mark.parametrize("argv", [
    ("synthesize", str(PROGRAMS / "monty_sketch.yaml"), "--seed", "3"),
    ("synthesize", str(PROGRAMS / "swap_sketch.yaml"), "--start", "random", "--seed", "3"),
    ("simulate", str(PROGRAMS / "monty_hw.pw"), "--runs", "5000", "--seed", "5"),
])
def test_same_seed_gives_identical_files(tmp_path, argv):
    first, second = tmp_path / "first", tmp_path / "second"
    assert run(*argv, out=first) == EXIT_OK
    assert run(*argv, out=second) == EXIT_OK
    names = sorted(p.name for p in first.iterdir())
    assert names and names == sorted(p.name for p in second.iterdir())
    for name in names:
        assert (first / name).read_bytes() == (second / name).read_bytes(), name
