import json
import math

import numpy as np
import pytest
import scipy.io
import scipy.sparse

from _systems import random_laplacian_connectivity
from tcs.errors import ParseError, ValidationError
from tcs.ingest import (
    Connectivity,
    build_system,
    cohort_run,
    laplacian_mu,
    load_matrix,
    load_system,
    top_m,
    write_cohort,
)


def test_dense_csv(tmp_path):
    f = tmp_path / "c.csv"
    f.write_text("0,1,0\n0,0,1\n1,0,0\n")
    c = load_matrix(f)
    np.testing.assert_array_equal(c.matrix, [[0, 1, 0], [0, 0, 1], [1, 0, 0]])
    assert c.labels == ("node_1", "node_2", "node_3") and c.subject_id == "c"


def test_header_row_labels(tmp_path):
    f = tmp_path / "h.csv"
    f.write_text("a,b\n0,2\n1,0\n")
    assert load_matrix(f).labels == ("a", "b")


def test_sidecar_labels(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("0,2\n1,0\n")
    (tmp_path / "s.labels").write_text("left\nright\n")
    assert load_matrix(f).labels == ("left", "right")


def test_matrix_market_coordinate(tmp_path):
    f = tmp_path / "m.mtx"
    scipy.io.mmwrite(str(f), scipy.sparse.coo_matrix(([0.5, 2.0], ([0, 3], [2, 1])), shape=(4, 4)))
    c = load_matrix(f)
    want = np.zeros((4, 4))
    want[0, 2], want[3, 1] = 0.5, 2.0
    np.testing.assert_array_equal(c.matrix, want)


def test_matrix_market_array(tmp_path):
    f = tmp_path / "d.mtx"
    scipy.io.mmwrite(str(f), np.array([[0.0, 1.0], [3.0, 0.0]]))
    np.testing.assert_array_equal(load_matrix(f).matrix, [[0, 1], [3, 0]])


@pytest.mark.parametrize("text, where", [
    ("0,1,0\n0,0\n1,0,0\n", "line 2"),
    ("0,1\n0,x\n", "line 2, column 2"),
    ("0,1,2\n3,4,5\n", "square"),
    ("0,1\n-1,0\n", "line 2, column 1"),
    ("", "empty"),
])
def test_parse_errors_carry_location(tmp_path, text, where):
    f = tmp_path / "bad.csv"
    f.write_text(text)
    with pytest.raises(ParseError, match=where):
        load_matrix(f)


def test_negative_entries_allowed_for_system_matrices(tmp_path):
    f = tmp_path / "a.csv"
    f.write_text("-1,0\n0,-2\n")
    np.testing.assert_array_equal(load_system(f).entries, [[-1, 0], [0, -2]])


def test_missing_file(tmp_path):
    with pytest.raises(ValidationError, match="no such file"):
        load_matrix(tmp_path / "nope.csv")


def test_connectivity_validation():
    with pytest.raises(ValidationError):
        Connectivity(np.array([[0.0, -1.0], [0.0, 0.0]]))


def test_build_system_two_cycle():
    np.testing.assert_array_equal(build_system(Connectivity(np.array([[0.0, 1], [1, 0]]))).entries,
                                  [[-1, 1], [1, -1]])


def test_build_system_hand_expansion():
    k = np.array([[0.0, 2, 0], [0, 0, 1], [0, 0, 0]])
    cp = np.array([[0.0, 0, 0], [2, 0, 0], [0, 1, 0]])
    a = build_system(Connectivity(k)).entries
    np.testing.assert_array_equal(a, -np.diag([0.0, 2, 1]) + cp)
    np.testing.assert_array_equal(a @ np.ones(3), 0)


def test_laplacian_rows_sum_to_zero(rng):
    for n in (3, 10, 40):
        a = build_system(Connectivity(rng.random((n, n)))).entries
        assert np.linalg.norm(a @ np.ones(n)) <= 1e-12 * np.linalg.norm(a) * math.sqrt(n)


def test_directed_laplacian_log_norm_flag(rng):
    k = random_laplacian_connectivity(rng, 8)
    mu, flagged = laplacian_mu(build_system(Connectivity(k)))
    assert flagged and mu > 1e-8
    mu_s, flagged_s = laplacian_mu(build_system(Connectivity(k + k.T)))
    assert not flagged_s and abs(mu_s) <= 1e-10


def test_top_m_tie_break():
    assert top_m([0.2, 0.3, 0.3, 0.2], 3) == [2, 3, 1]
    with pytest.raises(ValidationError):
        top_m([1.0, 2.0], 3)


def write_cohort_dir(path, mats):
    path.mkdir(exist_ok=True)
    for k, mat in enumerate(mats):
        np.savetxt(path / f"sub{k:02d}.csv", mat, delimiter=",")
    return path


def test_single_block_diagonal_subject(tmp_path):
    k = np.zeros((5, 5))
    k[0, 1] = k[1, 0] = 1.0
    k[2, 3] = k[3, 4] = k[4, 2] = 0.5
    d = write_cohort_dir(tmp_path / "one", [k])
    s = cohort_run(d, 1.0, 2, "vcs", ranking="degree")
    assert s.target_indices == [1, 2]
    assert s.mean_diff == 0 and s.std_diff == 0 and s.mean_a12 == 0


def test_identical_subjects_have_zero_std(tmp_path, rng):
    k = random_laplacian_connectivity(rng, 6, density=0.6)
    d = write_cohort_dir(tmp_path / "twins", [k, k])
    s = cohort_run(d, 1.0, 3, "aecs")
    assert len(s.per_subject) == 2 and s.n_failed == 0
    assert s.std_diff == 0 and s.std_a12 == 0
    assert s.ranking_basis == "mean-AECS"


def test_aggregates_match_two_pass_oracle(tmp_path, rng):
    mats = [random_laplacian_connectivity(rng, 7, density=0.5) for _ in range(4)]
    s = cohort_run([Connectivity(m, f"s{k}") for k, m in enumerate(mats)], 1.0, 3, "vcs")
    vals = [r.diff_norm for r in s.per_subject]
    mean = sum(vals) / len(vals)
    std = math.sqrt(sum((v - mean) ** 2 for v in vals) / len(vals))
    assert s.mean_diff == pytest.approx(mean, rel=1e-12, abs=1e-300)
    assert s.std_diff == pytest.approx(std, rel=1e-12, abs=1e-15)
    a12 = [r.a12_norm for r in s.per_subject]
    assert s.mean_a12 == pytest.approx(sum(a12) / len(a12), rel=1e-12)


def test_ranking_uses_mean_all_node_scores(tmp_path, rng):
    mats = [random_laplacian_connectivity(rng, 6, density=0.6) for _ in range(3)]
    s = cohort_run([Connectivity(m, f"s{k}") for k, m in enumerate(mats)], 1.0, 2, "vcs")
    assert s.target_indices == top_m(s.node_scores.mean(axis=0), 2)
    np.testing.assert_allclose(s.node_scores.sum(axis=1), 1.0, atol=1e-12)


def test_mismatched_subject_named(tmp_path, rng):
    d = write_cohort_dir(tmp_path / "mix", [np.ones((3, 3)), np.ones((4, 4))])
    with pytest.raises(ValidationError, match="sub01.csv"):
        cohort_run(d, 1.0, 2, "vcs")


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_failures_excluded_and_counted(rng):
    good = random_laplacian_connectivity(rng, 5, density=0.8)
    # weights this large overflow the exponential, so the solve cannot start
    s = cohort_run([Connectivity(good, "good"), Connectivity(good * 1e200, "huge")], 1.0, 2, "vcs",
                   ranking="degree")
    assert [r.subject_id for r in s.per_subject] == ["good"]
    assert s.n_failed == 1 and s.failures[0]["subject_id"] == "huge"
    assert s.mean_diff == s.per_subject[0].diff_norm and s.std_diff == 0


def test_parallel_matches_serial(tmp_path, rng):
    mats = [random_laplacian_connectivity(rng, 6, density=0.6) for _ in range(3)]
    d = write_cohort_dir(tmp_path / "par", mats)
    a = cohort_run(d, 1.0, 3, "vcs", jobs=1)
    b = cohort_run(d, 1.0, 3, "vcs", jobs=3)
    assert a.target_indices == b.target_indices
    for ra, rb in zip(a.per_subject, b.per_subject):
        np.testing.assert_array_equal(ra.p_target, rb.p_target)
        assert ra.diff_norm == rb.diff_norm


def test_write_outputs(tmp_path, rng):
    mats = [random_laplacian_connectivity(rng, 6, density=0.6) for _ in range(2)]
    s = cohort_run([Connectivity(m, f"s{k}") for k, m in enumerate(mats)], 1.0, 3, "vcs")
    (js,) = write_cohort(s, tmp_path / "out.json", "json")
    doc = json.loads(js.read_text())
    assert doc["result"]["target_indices"] == s.target_indices
    assert len(doc["result"]["per_subject"]) == 2
    files = write_cohort(s, tmp_path / "tab", "csv")
    names = sorted(p.name for p in files)
    assert names == ["tab_scores_all_nodes.csv", "tab_scores_reduced.csv", "tab_scores_target.csv",
                     "tab_subjects.csv", "tab_summary.csv"]
    rows = (tmp_path / "tab_scores_target.csv").read_text().splitlines()
    assert len(rows) == 3 and rows[0].count(",") == 3
