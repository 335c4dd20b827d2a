import json
import math
import subprocess
import sys

import numpy as np
import pytest
import scipy.linalg

from _systems import DIAG, DIAG_A, DIAG_B, ROT, random_laplacian_connectivity
from tcs.cli import main


def save(path, a):
    np.savetxt(path, a, delimiter=",", fmt="%.17g")
    return str(path)


@pytest.fixture
def diag_file(tmp_path):
    return save(tmp_path / "diag.csv", DIAG)


@pytest.fixture
def rot_file(tmp_path):
    return save(tmp_path / "rot.csv", ROT)


def run_json(argv, tmp_path, name="out.json"):
    out = tmp_path / name
    code = main([*argv, "--out", str(out)])
    return code, json.loads(out.read_text())


def test_score_diagonal_example_aecs(diag_file, tmp_path):
    code, doc = run_json(["score", "--input", diag_file, "--targets", "1,2", "--T", "1", "--kind", "aecs"],
                         tmp_path)
    assert code == 0
    p1 = math.sqrt(DIAG_B) / (math.sqrt(DIAG_A) + math.sqrt(DIAG_B))
    np.testing.assert_allclose(doc["result"]["p_star"], [p1, 1 - p1], atol=1e-6)
    assert doc["result"]["converged"] is True
    assert set(doc) == {"command", "inputs", "options", "tolerances", "versions", "result"}
    assert doc["inputs"]["target_indices"] == [1, 2]
    assert {"numpy", "scipy", "python"} <= set(doc["versions"])


def test_output_is_byte_identical_across_runs(diag_file, tmp_path):
    argv = ["compare", "--input", diag_file, "--targets", "2,1", "--T", "1.5"]
    main([*argv, "--out", str(tmp_path / "a.json")])
    main([*argv, "--out", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_uniqueness_reduced_rotation(rot_file, tmp_path):
    # at T = pi the reduced Gramians are linearly dependent
    code, doc = run_json(["uniqueness", "--input", rot_file, "--targets", "1,2", "--T", repr(math.pi),
                          "--reduced"], tmp_path)
    assert code == 0 and doc["result"]["verdict"] == "indeterminate"
    # eight significant digits of pi leave a singular value near 1.6e-9, above the 1e-10 threshold
    _, doc = run_json(["uniqueness", "--input", rot_file, "--targets", "1,2", "--T", "3.14159265",
                       "--reduced"], tmp_path, "short.json")
    assert doc["result"]["verdict"] == "unique"
    assert 1e-9 < doc["result"]["smallest_normalized_singular_value"] < 1e-8
    _, doc = run_json(["uniqueness", "--input", rot_file, "--targets", "1,2", "--T", repr(math.pi)],
                      tmp_path, "full.json")
    assert doc["result"]["verdict"] == "unique" and doc["result"]["full_row_rank"]


def test_compare_block_diagonal(tmp_path, rng):
    a = scipy.linalg.block_diag([[-1.0, 0.3], [0.0, -2.0]], [[-0.5, 1.0], [-1.0, -0.5]])
    code, doc = run_json(["compare", "--input", save(tmp_path / "bd.csv", a), "--targets", "1,2",
                          "--T", "1"], tmp_path)
    assert code == 0
    r = doc["result"]
    assert r["diff_norm"] == 0 and r["delta_star"] == 0 and r["bound_holds"] is True


def test_bounds_command(rot_file, tmp_path):
    code, doc = run_json(["bounds", "--input", rot_file, "--targets", "1,2", "--T", "1"], tmp_path)
    r = doc["result"]
    assert code == 0 and r["bound_holds"] is True
    assert r["integral_representation_rel_diff"] <= 1e-6


def test_top_m_targets_with_laplacian(tmp_path, rng):
    k = random_laplacian_connectivity(rng, 6, density=0.6)
    code, doc = run_json(["score", "--input", save(tmp_path / "k.csv", k), "--laplacian",
                          "--targets", "top:3", "--T", "1"], tmp_path)
    assert code == 0 and len(doc["inputs"]["target_indices"]) == 3


def test_csv_output(diag_file, tmp_path):
    out = tmp_path / "s.csv"
    assert main(["score", "--input", diag_file, "--targets", "1,2", "--T", "1", "--format", "csv",
                 "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "node,label,p_star" and len(lines) == 3
    assert lines[1].startswith("1,node_1,")


def exit_code(argv):
    # argparse rejects some inputs by raising SystemExit before main returns
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


@pytest.mark.parametrize("argv", [
    ["score", "--input", "missing.csv", "--targets", "1", "--T", "1"],
    ["score", "--input", "{diag}", "--targets", "7", "--T", "1"],
    ["score", "--input", "{diag}", "--targets", "1,2", "--T", "-1"],
    ["score", "--input", "{diag}", "--targets", "a,b", "--T", "1"],
    ["score", "--input", "{diag}", "--targets", "1", "--T", "1", "--sigma", "2"],
])
def test_input_errors_exit_1(diag_file, argv, capsys):
    assert exit_code([a.replace("{diag}", diag_file) for a in argv]) == 1
    assert "error" in capsys.readouterr().err


def test_nonconvergence_exits_2_with_partial_output(diag_file, tmp_path):
    code, doc = run_json(["score", "--input", diag_file, "--targets", "1,2", "--T", "1", "--kind", "aecs",
                          "--max-iters", "1"], tmp_path)
    assert code == 2
    assert doc["result"]["converged"] is False and doc["result"]["iterations"] == 1


def test_cohort_command(tmp_path, rng):
    d = tmp_path / "cohort"
    d.mkdir()
    for s in range(3):
        save(d / f"sub{s}.csv", random_laplacian_connectivity(rng, 6, density=0.6))
    code, doc = run_json(["cohort", "--input", str(d), "--T", "1", "--m", "3", "--jobs", "1"], tmp_path)
    assert code == 0
    r = doc["result"]
    assert len(r["per_subject"]) == 3 and r["n_failed"] == 0 and len(r["target_indices"]) == 3
    assert main(["cohort", "--input", str(d), "--T", "1", "--m", "3", "--jobs", "1", "--format", "csv",
                 "--out", str(tmp_path / "tab")]) == 0
    assert (tmp_path / "tab_summary.csv").exists()


def test_console_entry_point(diag_file):
    proc = subprocess.run([sys.executable, "-m", "tcs.cli", "score", "--input", diag_file, "--targets", "1,2",
                           "--T", "1"], capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    np.testing.assert_allclose(json.loads(proc.stdout)["result"]["p_star"], [0.5, 0.5], atol=1e-8)
