import json
import subprocess
import sys

import numpy as np
import pytest

from markovfield import corpus, dump_form, load_form, parse_form
from markovfield.fileio import FormFormatError, matrix_csv
from markovfield.cli import main

from conftest import fixture_path


def run_cli(*args):
    proc = subprocess.run(
        [sys.executable, "-m", "markovfield.cli", *args],
        capture_output=True, text=True,
    )
    return proc.returncode, proc.stdout, proc.stderr


def test_parse_killed_path_fixture():
    form = load_form(fixture_path("path3.gdf"))
    np.testing.assert_array_equal(
        form.dense_q(), [[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]]
    )
    assert form.space.ref_edges == frozenset({(0, 1), (1, 2)})


def test_parse_rejects_duplicate_edge_with_line_number():
    with pytest.raises(FormFormatError) as info:
        parse_form("v 0 1\nv 1 1\ne 0 1 1\ne 1 0 2\n")
    assert info.value.line_no == 4


@pytest.mark.parametrize("text,fragment", [
    ("v 0 1\nv 0 2\n", "duplicate vertex"),
    ("v 0 1\nv 2 1\n", "contiguous"),
    ("v 0 1\nv 1 1\ne 0 0 1\n", "self-loop"),
    ("v 0 1\nv 1 1\ne 0 1 -1\n", "negative edge"),
    ("v 0 1\nv 1 1\nk 0 1\nk 0 2\n", "duplicate killing"),
    ("v 0 1\nv 1 1\nref 0 1\nref 1 0\n", "duplicate reference"),
    ("v 0 0.0\n", "positive"),
    ("v 0 1\nv 1 1\ne 0 5 1\n", "undeclared"),
    ("x 0 1\n", "unknown record"),
    ("", "no vertices"),
])
def test_parse_rejections(text, fragment):
    with pytest.raises(FormFormatError, match=fragment):
        parse_form(text)


def test_parse_ignores_comments_and_blank_lines():
    form = parse_form("\n# header\nv 0 1.0  # trailing\n\nk 0 2.0\n")
    assert form.n == 1
    assert form.killing[0] == 2.0


def test_dump_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(10):
        space = corpus.random_connected_space(int(rng.integers(2, 9)),
                                              extra_edges=1,
                                              seed=int(rng.integers(1 << 31)))
        k = np.zeros(space.n)
        k[0] = 0.5
        form = corpus.local_form(space, killing=k, seed=int(rng.integers(1 << 31)))
        again = parse_form(dump_form(form))
        assert (again.Q != form.Q).nnz == 0
        assert again.space.ref_edges == form.space.ref_edges
        np.testing.assert_array_equal(again.space.m, form.space.m)


def test_matrix_csv_shape():
    text = matrix_csv(np.arange(6.0).reshape(2, 3), ["a", "b", "c"])
    lines = text.strip().split("\n")
    assert lines[0] == "a,b,c"
    assert len(lines) == 3


def test_cli_check_markov_holds():
    code, out, _ = run_cli("check-markov", "--form", fixture_path("path3.gdf"),
                           "--set", "0,1")
    assert code == 0
    assert json.loads(out)["verdict"] == "holds"


def test_cli_check_markov_fails_on_jump():
    code, out, _ = run_cli("check-markov", "--form", fixture_path("jump3.gdf"),
                           "--set", "0,1")
    assert code == 1
    assert json.loads(out)["verdict"] == "fails"


def test_cli_pseudo_markov_on_jump_holds():
    code, out, _ = run_cli("check-markov", "--form", fixture_path("jump3.gdf"),
                           "--set", "0,1", "--check", "pseudo")
    assert code == 0


def test_cli_two_set_requires_set_b():
    code, _, err = run_cli("check-markov", "--form", fixture_path("path3.gdf"),
                           "--set", "0,1", "--check", "two-set")
    assert code == 2
    assert "set-b" in err


def test_cli_malformed_form_exits_2_with_line_number():
    code, _, err = run_cli("check-markov", "--form", fixture_path("malformed.gdf"),
                           "--set", "0")
    assert code == 2
    assert "line 4" in err


def test_cli_scan_exit_codes(tmp_path):
    code, out, _ = run_cli("scan", "--form", fixture_path("path3.gdf"),
                           "--form", fixture_path("jump3.gdf"))
    assert code == 0
    assert "path3.gdf" in out and "jump3.gdf" in out
    csv_path = tmp_path / "scan.csv"
    code, _, _ = run_cli("scan", "--form", fixture_path("path3.gdf"),
                         "--csv", str(csv_path))
    assert code == 0
    assert csv_path.read_text().startswith("name,")


def test_cli_trace(tmp_path):
    out_path = tmp_path / "trace.gdf"
    csv_path = tmp_path / "trace.csv"
    code, _, _ = run_cli("trace", "--form", fixture_path("path3.gdf"),
                         "--set", "0,2", "--out", str(out_path),
                         "--csv", str(csv_path))
    assert code == 0
    traced = load_form(str(out_path))
    np.testing.assert_allclose(traced.dense_q(), [[1.5, -0.5], [-0.5, 0.5]],
                               atol=1e-12)
    rows = csv_path.read_text().strip().split("\n")
    assert rows[0] == "0,2"


def test_cli_example_half_line_exact(tmp_path):
    json_path = tmp_path / "report.json"
    code, _, err = run_cli("example", "half-line", "--n", "30", "--samples", "0",
                           "--json", str(json_path))
    assert code == 0
    data = json.loads(json_path.read_text())
    assert data["passed"] is True
    assert all(c["passed"] for c in data["criteria"])


def test_cli_example_diagonal_stdout():
    code, out, err = run_cli("example", "diagonal", "--n", "8")
    assert code == 0
    assert json.loads(out)["experiment"] == "diagonal"
    assert "PASS" in err


def test_cli_sample_determinism(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for path in (a, b):
        code, _, _ = run_cli("sample", "--form", fixture_path("path3.gdf"),
                             "--samples", "5", "--seed", "11", "--csv", str(path))
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().strip().split("\n")
    assert lines[0] == "0,1,2"
    assert len(lines) == 6


def test_cli_report_bytes_deterministic(tmp_path):
    p1, p2 = tmp_path / "r1.json", tmp_path / "r2.json"
    for p in (p1, p2):
        code, _, _ = run_cli("example", "diagonal", "--n", "8", "--seed", "3",
                             "--json", str(p))
        assert code == 0
    assert p1.read_bytes() == p2.read_bytes()


def test_cli_strong_markov(tmp_path):
    code, out, _ = run_cli("check-strong-markov",
                           "--form", fixture_path("path30_anchored.gdf"),
                           "--rule", fixture_path("rule_path30.json"),
                           "--samples", "20000", "--seed", "0")
    assert code == 0
    data = json.loads(out)
    assert data["passed"] is True


def test_cli_main_callable_directly(capsys):
    code = main(["check-markov", "--form", fixture_path("path3.gdf"), "--set", "0,1"])
    assert code == 0
