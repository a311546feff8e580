import csv
import io
import json

import pytest

from cocycle_lab.cli import EXIT_FAIL, EXIT_INCOMPLETE, EXIT_PASS, EXIT_USAGE, run
from cocycle_lab.report import CSV_COLUMNS

LAZY = """\
experiment: lazy-small
seed: 5
measures:
  lz: {backend: {kind: free_group, rank: 2}, family: lazy, q: 0.5}
params:
  measure: lz
  n_max: 3
"""

PROGRESS = """\
experiment: progress-small
seed: 5
budget: {max_steps: 1000}
measures:
  srw: {backend: {kind: free_group, rank: 2}, family: srw}
params:
  measure: srw
  n_grid: [8, 16]
  samples: 500
"""


def call(argv):
    buf = io.StringIO()
    code = run(argv, stdout=buf)
    return code, buf.getvalue()


def write(tmp_path, text, name="c.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_list_and_describe():
    code, out = call(["list"])
    assert code == EXIT_PASS
    names = [ln.split()[0] for ln in out.splitlines()]
    assert names == ["deviation", "clt", "green", "entropy", "sensitivity", "decompose-check", "lazy-check", "linear-progress"]
    code, out = call(["describe", "green"])
    assert code == EXIT_PASS and "symmetric" in out


def test_unknown_suite_suggests(capsys):
    code, _ = call(["gren", "--config", "x"])
    assert code == EXIT_USAGE
    assert "did you mean green" in capsys.readouterr().err


def test_run_writes_reports(tmp_path):
    cfg = write(tmp_path, LAZY)
    out = tmp_path / "out"
    code, text = call(["lazy-check", "--config", cfg, "--out", str(out), "--dump-trajectories", "2", "--dump-length", "5"])
    assert code == EXIT_PASS
    assert text.count("PASS") == 3
    rows = list(csv.reader(open(out / "lazy-small.csv")))
    assert rows[0] == CSV_COLUMNS
    assert all(r[0] == "lazy-small" and r[-1] == "5" for r in rows[1:])
    verdict = json.load(open(out / "lazy-small.json"))
    assert {"experiment_id", "fingerprint", "criteria"} <= set(verdict)
    assert all(set(c) == {"name", "value", "threshold", "pass"} for c in verdict["criteria"])
    assert list((out / "plot_data").glob("*.dat"))
    assert list((out / "figures").glob("*.png"))
    dump = (out / "lazy-small.trajectories.txt").read_text().splitlines()
    assert dump[0] == "# walk 0" and dump[1].startswith("0 - id ")
    assert len(dump[2].split()) == 4


def test_seed_override_changes_fingerprint(tmp_path):
    cfg = write(tmp_path, LAZY)
    call(["lazy-check", "--config", cfg, "--out", str(tmp_path / "a"), "--no-figures"])
    call(["lazy-check", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "6", "--no-figures"])
    fa = json.load(open(tmp_path / "a" / "lazy-small.json"))["fingerprint"]
    fb = json.load(open(tmp_path / "b" / "lazy-small.json"))["fingerprint"]
    assert fa != fb


def test_missing_seed_is_an_error(tmp_path, capsys):
    cfg = write(tmp_path, LAZY.replace("seed: 5\n", ""))
    code, _ = call(["lazy-check", "--config", cfg, "--out", str(tmp_path / "o")])
    assert code == EXIT_USAGE
    assert "seed" in capsys.readouterr().err


def test_unknown_key_diagnostic(tmp_path, capsys):
    cfg = write(tmp_path, LAZY + "  speed: 2\n")
    code, _ = call(["lazy-check", "--config", cfg])
    assert code == EXIT_USAGE
    assert "line 8: params.speed: unknown key" in capsys.readouterr().err


def test_budget_exhaustion_marks_incomplete(tmp_path):
    cfg = write(tmp_path, PROGRESS)
    out = tmp_path / "o"
    code, text = call(["linear-progress", "--config", cfg, "--out", str(out), "--no-figures"])
    assert code == EXIT_INCOMPLETE
    assert "INCOMPLETE" in text
    verdict = json.load(open(out / "progress-small.json"))
    assert verdict["incomplete"] is True and verdict["passed"] is False


def test_failing_criterion_exit_code(tmp_path):
    text = PROGRESS.replace("budget: {max_steps: 1000}\n", "").replace("samples: 500", "samples: 200") + "  min_r2: 1.01\n"
    code, out = call(["linear-progress", "--config", write(tmp_path, text), "--out", str(tmp_path / "o"), "--no-figures"])
    assert code == EXIT_FAIL
    assert "FAIL progress_fit_r2" in out


def test_asymmetric_green_measure_is_refused(tmp_path, capsys):
    text = """\
experiment: g
seed: 1
measures:
  m: {backend: {kind: free_group, rank: 2}, family: table, table: {a: 0.4, A: 0.1, b: 0.25, B: 0.25}}
params:
  measure: m
  targets: [{word: a, trials: 10}]
"""
    code, _ = call(["green", "--config", write(tmp_path, text), "--out", str(tmp_path / "o")])
    assert code == EXIT_USAGE
    assert "symmetric" in capsys.readouterr().err


def test_green_cache_file_format(tmp_path):
    cache = tmp_path / "green.cache"
    text = f"""\
experiment: g
seed: 1
measures:
  m: {{backend: {{kind: free_group, rank: 2}}, family: srw}}
params:
  measure: m
  targets: [{{word: a, trials: 300}}, {{word: ab, trials: 600}}]
  horizon: 200
  tolerance: 0.5
  cache: {cache}
"""
    cfg = write(tmp_path, text)
    call(["green", "--config", cfg, "--out", str(tmp_path / "o1"), "--no-figures"])
    lines = cache.read_text().splitlines()
    assert len(lines) == 2
    for ln in lines:
        key, word, N, M, hits = ln.split()
        assert word in ("a", "ab") and N == "200" and float(hits) <= int(M)
    call(["green", "--config", cfg, "--out", str(tmp_path / "o2"), "--no-figures"])
    assert cache.read_text().splitlines() == lines
