import glob
import json
import os

import numpy as np
import pytest

from planecal import InvalidArgumentError, fileio


def test_pool_csv_round_trip(tmp_path):
    path = str(tmp_path / "pool.csv")
    ids = np.array([0, 1, 2])
    tids = np.array([4, 4, 7])
    q = np.array([[0.1, -0.2], [1.5, 2.25], [-3.0, 0.0625]])
    fileio.write_pool_csv(path, ids, tids, q)
    r_ids, r_tids, r_q = fileio.read_pool_csv(path)
    np.testing.assert_array_equal(r_ids, ids)
    np.testing.assert_array_equal(r_tids, tids)
    # repr-formatted floats survive the trip bit-exactly
    np.testing.assert_array_equal(r_q, q)


def test_dataset_csv_round_trip(tmp_path):
    path = str(tmp_path / "ds.csv")
    ids = np.array([3, 9])
    q = np.array([[0.25, 1e-17, -4.0], [np.pi, -0.5, 2.0]])
    fileio.write_dataset_csv(path, ids, q)
    r_ids, r_q = fileio.read_dataset_csv(path)
    np.testing.assert_array_equal(r_ids, ids)
    np.testing.assert_array_equal(r_q, q)


def test_dataset_csv_empty_rejected(tmp_path):
    path = str(tmp_path / "empty.csv")
    with open(path, "w") as fh:
        fh.write("posture_id,q_1,q_2\n")
    with pytest.raises(InvalidArgumentError):
        fileio.read_dataset_csv(path)


def test_residuals_csv_round_trip(tmp_path):
    path = str(tmp_path / "res.csv")
    ids = np.array([1, 2])
    before = np.array([[1e-3, 2e-4, -3e-4], [0.5e-3, 0.0, 1e-5]])
    after = before / 10
    fileio.write_residuals_csv(path, ids, before, after)
    r_ids, r_before, r_after = fileio.read_residuals_csv(path)
    np.testing.assert_array_equal(r_ids, ids)
    np.testing.assert_array_equal(r_before, before)
    np.testing.assert_array_equal(r_after, after)


def test_curve_weights_trace_writers(tmp_path):
    curve = str(tmp_path / "curve.csv")
    fileio.write_curve_csv(curve, [[9, 0.5], [10, 0.625]])
    assert fileio.check_artifact(curve) == "curve_csv"
    weights = str(tmp_path / "weights.csv")
    fileio.write_weights_csv(weights, [0.5, 0.25, 0.0])
    assert fileio.check_artifact(weights) == "weights_csv"
    trace = str(tmp_path / "trace.csv")
    fileio.write_trace_csv(trace, [0.1, 0.2, 0.3])
    np.testing.assert_array_equal(fileio.read_trace_csv(trace), [0.1, 0.2, 0.3])


def test_dump_json_is_deterministic_and_validated(tmp_path):
    ok = {
        "kind": "report_summary",
        "figures": ["a.png"],
        "sources": ["selection.json"],
    }
    p1, p2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
    fileio.dump_json(ok, p1)
    fileio.dump_json(ok, p2)
    with open(p1, "rb") as f1, open(p2, "rb") as f2:
        assert f1.read() == f2.read()
    with pytest.raises(InvalidArgumentError):
        fileio.dump_json({"kind": "report_summary"}, str(tmp_path / "c.json"))
    with pytest.raises(InvalidArgumentError):
        fileio.dump_json({"kind": "nonsense"}, str(tmp_path / "d.json"))
    with pytest.raises(InvalidArgumentError):
        fileio.dump_json(["not", "a", "dict"], str(tmp_path / "e.json"))


def test_no_temp_files_left(tmp_path):
    fileio.dump_json(
        {"kind": "report_summary", "figures": [], "sources": []},
        str(tmp_path / "r.json"),
    )
    fileio.write_curve_csv(str(tmp_path / "c.csv"), [[1, 1.0]])
    assert glob.glob(str(tmp_path / "*.tmp")) == []


def test_check_artifact_rejects_malformed(tmp_path):
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json")
    with pytest.raises(InvalidArgumentError):
        fileio.check_artifact(str(bad_json))

    unknown = tmp_path / "unknown.csv"
    unknown.write_text("alpha,beta\n1,2\n")
    with pytest.raises(InvalidArgumentError):
        fileio.check_artifact(str(unknown))

    ragged = tmp_path / "ragged.csv"
    ragged.write_text("k,o1\n1,0.5\n2\n")
    with pytest.raises(InvalidArgumentError):
        fileio.check_artifact(str(ragged))

    textual = tmp_path / "textual.csv"
    textual.write_text("k,o1\n1,abc\n")
    with pytest.raises(InvalidArgumentError):
        fileio.check_artifact(str(textual))

    empty = tmp_path / "empty.csv"
    empty.write_text("")
    with pytest.raises(InvalidArgumentError):
        fileio.check_artifact(str(empty))

    with pytest.raises(InvalidArgumentError):
        fileio.check_artifact(str(tmp_path / "image.png"))


def test_check_artifact_accepts_chain(tmp_path):
    from planecal import chain_to_dict, load_chain

    from conftest import fixture_path

    chain = load_chain(fixture_path("chain_6r.json"))
    path = str(tmp_path / "chain.json")
    fileio.dump_json_raw(chain_to_dict(chain), path)
    assert fileio.check_artifact(path) == "chain"


def test_schema_validation_catches_wrong_types():
    bad = {
        "kind": "selection_report",
        "method": "iroc",
        "ranked_ids": [0, 1],
        "selected_ids": [0],
        "k_star": "one",
        "o1_curve": [[1, 0.5]],
        "o1_at_k_star": 0.5,
    }
    with pytest.raises(InvalidArgumentError):
        fileio.validate_report(bad)
    bad["k_star"] = 1
    assert fileio.validate_report(bad) == "selection_report"


def test_artifact_files_are_world_readable(tmp_path):
    # atomic temp+rename must not leak mkstemp's 0600 mode
    path = str(tmp_path / "perm.json")
    fileio.dump_json(
        {"kind": "report_summary", "figures": [], "sources": []}, path
    )
    mode = os.stat(path).st_mode & 0o777
    assert mode & 0o044 == 0o044


def test_pool_sidecar_dict_schema(chain_6r, plane_6r):
    from planecal import PoolSpec, TargetSpec, build_pool

    pool = build_pool(
        chain_6r,
        plane_6r,
        TargetSpec(points=[[0.05, 0.0]], quota=2),
        PoolSpec(size=2, seed=3),
    )
    d = fileio.pool_sidecar_dict(pool, {"note": 1})
    assert fileio.validate_report(d) == "pool_sidecar"
    assert d["size"] == 2
    assert d["stats"]["accepted"] == 2
