"""Artifact files: deterministic JSON and CSV writers, readers, validators.

Every JSON artifact carries a `kind` field that selects its schema; CSVs are
identified by their headers.  Writers are byte-deterministic for identical
inputs (sorted keys, repr floats, LF line endings) and atomic (temp file in
the target directory, then rename).
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile

import jsonschema
import numpy as np

from .errors import InvalidArgumentError

_NUM = {"type": "number"}
_INT = {"type": "integer"}
_STR = {"type": "string"}
_NUM_LIST = {"type": "array", "items": _NUM}
_INT_LIST = {"type": "array", "items": _INT}
_STR_LIST = {"type": "array", "items": _STR}
_NUM_MATRIX = {"type": "array", "items": _NUM_LIST}
_STATS = {
    "type": "object",
    "additionalProperties": {
        "type": "object",
        "properties": {k: _NUM for k in ("mean", "abs_mean", "std", "rms")},
    },
}

SCHEMAS = {
    "scenario_config": {
        "type": "object",
        "required": ["kind", "chain", "plane", "targets", "pool"],
        "properties": {
            "kind": {"const": "scenario_config"},
            "chain": _STR,
            "plane": {"type": "array", "items": _NUM, "minItems": 6, "maxItems": 6},
            "targets": {
                "type": "object",
                "required": ["points"],
                "properties": {
                    "points": _NUM_MATRIX,
                    "quota": {"anyOf": [_INT, _INT_LIST]},
                    "workspace": {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4},
                },
            },
            "pool": {
                "type": "object",
                "required": ["size", "seed"],
                "properties": {
                    "size": _INT,
                    "seed": _INT,
                    "max_iterations": _INT,
                    "tolerance": _NUM,
                    "balance": {"type": "boolean"},
                    "margin": _NUM,
                },
            },
            "noise": {
                "type": "object",
                "properties": {
                    "encoder_sigma": _NUM,
                    "residual_sigma_z": _NUM,
                    "residual_sigma_ang": _NUM,
                    "seed": _INT,
                },
                "additionalProperties": False,
            },
            "selection": {
                "type": "object",
                "properties": {
                    "k_0": {"anyOf": [_INT, {"type": "null"}]},
                    "seed": _INT,
                    "n_runs": _INT,
                    "smoothed": {"type": "boolean"},
                },
            },
            "ground_truth": {
                "type": "object",
                "properties": {
                    "translation_range": _NUM,
                    "rotation_range": _NUM,
                    "seed": _INT,
                },
            },
            "pool_file": _STR,
            "output": _STR,
        },
    },
    "pool_sidecar": {
        "type": "object",
        "required": ["kind", "chain_name", "seed", "size", "stats"],
        "properties": {
            "kind": {"const": "pool_sidecar"},
            "chain_name": _STR,
            "seed": _INT,
            "size": _INT,
            "n_joints": _INT,
            "stats": {
                "type": "object",
                "required": ["attempts", "accepted"],
                "properties": {"attempts": _INT, "accepted": _INT},
            },
            "generation": {"type": "object"},
        },
    },
    "base_parameterization": {
        "type": "object",
        "required": ["kind", "n_b", "rank_tolerance", "independent", "eliminated", "groups"],
        "properties": {
            "kind": {"const": "base_parameterization"},
            "n_b": _INT,
            "rank_tolerance": _NUM,
            "independent": _STR_LIST,
            "eliminated": _STR_LIST,
            "groups": {
                "type": "array",
                "items": {
                    "type": "object",
                    "required": ["base", "combines"],
                    "properties": {
                        "base": _STR,
                        "combines": {
                            "type": "array",
                            "items": {
                                "type": "object",
                                "required": ["label", "coefficient"],
                                "properties": {"label": _STR, "coefficient": _NUM},
                            },
                        },
                    },
                },
            },
        },
    },
    "selection_report": {
        "type": "object",
        "required": ["kind", "method", "ranked_ids", "selected_ids", "k_star", "o1_curve", "o1_at_k_star"],
        "properties": {
            "kind": {"const": "selection_report"},
            "method": {"enum": ["iroc", "detmax", "random"]},
            "ranked_ids": _INT_LIST,
            "selected_ids": _INT_LIST,
            "k_star": _INT,
            "o1_curve": _NUM_MATRIX,
            "o1_at_k_star": _NUM,
            "o1_full_pool": _NUM,
            "weights": {"anyOf": [_NUM_LIST, {"type": "null"}]},
            "objective_trace": {"anyOf": [_NUM_LIST, {"type": "null"}]},
            "flags": _STR_LIST,
        },
    },
    "calibration_report": {
        "type": "object",
        "required": ["kind", "dxb", "iterations", "initial_cost", "final_cost", "stopped_by"],
        "properties": {
            "kind": {"const": "calibration_report"},
            "dxb": _NUM_LIST,
            "param_values": _NUM_LIST,
            "param_mask": _INT_LIST,
            "iterations": _INT,
            "initial_cost": _NUM,
            "final_cost": _NUM,
            "cost_trace": _NUM_LIST,
            "stopped_by": _STR,
            "condition_number": _NUM,
            "ill_conditioned": {"type": "boolean"},
            "sigma2": _NUM,
            "covariance": {"anyOf": [_NUM_MATRIX, {"type": "null"}]},
            "stats_before": _STATS,
            "stats_after": _STATS,
        },
    },
    "validation_report": {
        "type": "object",
        "required": ["kind", "nominal_abs_mean", "calibrated_abs_mean", "factors", "mean_factor", "capped"],
        "properties": {
            "kind": {"const": "validation_report"},
            "nominal_abs_mean": {"type": "object", "additionalProperties": _NUM},
            "calibrated_abs_mean": {"type": "object", "additionalProperties": _NUM},
            "factors": {"type": "object", "additionalProperties": _NUM},
            "mean_factor": _NUM,
            "capped": {"type": "boolean"},
            "calibration": {"type": "object"},
        },
    },
    "ground_truth": {
        "type": "object",
        "required": ["kind", "values", "mask", "translation_range", "rotation_range", "seed"],
        "properties": {
            "kind": {"const": "ground_truth"},
            "values": _NUM_LIST,
            "mask": _INT_LIST,
            "translation_range": _NUM,
            "rotation_range": _NUM,
            "seed": {},
        },
    },
    "noise_model": {
        "type": "object",
        "required": ["kind", "encoder_sigma", "seed"],
        "properties": {
            "kind": {"const": "noise_model"},
            "encoder_sigma": _NUM,
            "residual_sigma_z": _NUM,
            "residual_sigma_ang": _NUM,
            "seed": {},
        },
    },
    "expected_recovery": {
        "type": "object",
        "required": ["kind", "labels", "expected"],
        "properties": {
            "kind": {"const": "expected_recovery"},
            "labels": _STR_LIST,
            "expected": _NUM_LIST,
            "n_b": _INT,
        },
    },
    "recovery_report": {
        "type": "object",
        "required": ["kind", "labels", "expected", "estimated", "error", "max_abs_error", "final_cost"],
        "properties": {
            "kind": {"const": "recovery_report"},
            "labels": _STR_LIST,
            "expected": _NUM_LIST,
            "estimated": _NUM_LIST,
            "error": _NUM_LIST,
            "max_abs_error": _NUM,
            "final_cost": _NUM,
        },
    },
    "report_summary": {
        "type": "object",
        "required": ["kind", "figures", "sources"],
        "properties": {
            "kind": {"const": "report_summary"},
            "figures": _STR_LIST,
            "sources": _STR_LIST,
        },
    },
}

# header prefix -> (name, indices of text columns exempt from numeric checks)
_CSV_KINDS = (
    ("posture_id,target_id,q_1", "pool_csv", ()),
    ("posture_id,component,before,after", "residuals_csv", (1,)),
    ("posture_id,q_1", "dataset_csv", ()),
    ("k,o1", "curve_csv", ()),
    ("rank,weight", "weights_csv", ()),
    ("round,o1", "trace_csv", ()),
)


def _umask():
    cur = os.umask(0)
    os.umask(cur)
    return cur


def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.chmod(tmp, 0o666 & ~_umask())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def validate_report(obj):
    """Schema-check a report dict; unknown or missing kinds are rejected."""
    kind = obj.get("kind") if isinstance(obj, dict) else None
    if kind not in SCHEMAS:
        raise InvalidArgumentError(f"unknown artifact kind {kind!r}")
    try:
        jsonschema.validate(obj, SCHEMAS[kind])
    except jsonschema.ValidationError as exc:
        raise InvalidArgumentError(f"{kind} artifact invalid: {exc.message}") from exc
    return kind


def dump_json(obj, path):
    """Validate and write a report dict; deterministic byte output."""
    validate_report(obj)
    _atomic_write(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def dump_json_raw(obj, path):
    """Deterministic JSON write without schema validation (chain copies)."""
    _atomic_write(path, json.dumps(obj, sort_keys=True, indent=2) + "\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _atomic_write(path, buf.getvalue())


def _fmt(v):
    return repr(float(v))


def write_pool_csv(path, posture_ids, target_ids, postures):
    q = np.asarray(postures, dtype=float)
    header = ["posture_id", "target_id"] + [f"q_{j + 1}" for j in range(q.shape[1])]
    rows = [
        [int(pid), int(tid)] + [_fmt(v) for v in qi]
        for pid, tid, qi in zip(posture_ids, target_ids, q)
    ]
    _write_csv(path, header, rows)


def read_pool_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[:2] != ["posture_id", "target_id"]:
            raise InvalidArgumentError(f"{path} is not a pool CSV")
        raw = list(rd)
    if not raw:
        raise InvalidArgumentError(f"{path} holds no postures")
    ids = np.array([int(r[0]) for r in raw])
    tids = np.array([int(r[1]) for r in raw])
    q = np.array([[float(v) for v in r[2:]] for r in raw])
    return ids, tids, q


def write_dataset_csv(path, posture_ids, postures):
    q = np.asarray(postures, dtype=float)
    header = ["posture_id"] + [f"q_{j + 1}" for j in range(q.shape[1])]
    rows = [[int(pid)] + [_fmt(v) for v in qi] for pid, qi in zip(posture_ids, q)]
    _write_csv(path, header, rows)


def read_dataset_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[:1] != ["posture_id"] or len(header) < 2 or not header[1].startswith("q_"):
            raise InvalidArgumentError(f"{path} is not a posture dataset CSV")
        raw = list(rd)
    if not raw:
        raise InvalidArgumentError(f"{path} holds no postures")
    ids = np.array([int(r[0]) for r in raw])
    q = np.array([[float(v) for v in r[1:]] for r in raw])
    return ids, q


def write_curve_csv(path, curve):
    rows = [[int(k), _fmt(o1)] for k, o1 in np.asarray(curve, dtype=float)]
    _write_csv(path, ["k", "o1"], rows)


def write_weights_csv(path, weights_ranked):
    rows = [[r + 1, _fmt(w)] for r, w in enumerate(weights_ranked)]
    _write_csv(path, ["rank", "weight"], rows)


def write_trace_csv(path, trace):
    rows = [[i, _fmt(v)] for i, v in enumerate(trace)]
    _write_csv(path, ["round", "o1"], rows)


def read_trace_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header[:2] != ["round", "o1"] and header[:2] != ["k", "o1"]:
            raise InvalidArgumentError(f"{path} is not a trace or curve CSV")
        return np.array([float(r[1]) for r in rd])


def read_residuals_csv(path):
    with open(path, newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd)
        if header != ["posture_id", "component", "before", "after"]:
            raise InvalidArgumentError(f"{path} is not a residuals CSV")
        raw = list(rd)
    if len(raw) % 3 != 0 or not raw:
        raise InvalidArgumentError(f"{path}: expected 3 component rows per posture")
    ids = np.array([int(raw[i][0]) for i in range(0, len(raw), 3)])
    before = np.array([float(r[2]) for r in raw]).reshape(-1, 3)
    after = np.array([float(r[3]) for r in raw]).reshape(-1, 3)
    return ids, before, after


def write_residuals_csv(path, posture_ids, before, after):
    b = np.asarray(before, dtype=float).reshape(-1, 3)
    a = np.asarray(after, dtype=float).reshape(-1, 3)
    rows = []
    for i, pid in enumerate(posture_ids):
        for c, name in enumerate(("z", "roll", "pitch")):
            rows.append([int(pid), name, _fmt(b[i, c]), _fmt(a[i, c])])
    _write_csv(path, ["posture_id", "component", "before", "after"], rows)


def pool_sidecar_dict(pool, generation=None):
    return {
        "kind": "pool_sidecar",
        "chain_name": pool.chain_name,
        "seed": int(pool.seed),
        "size": int(pool.size),
        "n_joints": int(pool.postures.shape[1]),
        "stats": pool.stats,
        "generation": generation or {},
    }


def selection_report_dict(sel, o1_full=None):
    return {
        "kind": "selection_report",
        "method": sel.method,
        "ranked_ids": [int(v) for v in sel.ranked_ids],
        "selected_ids": [int(v) for v in sel.selected_ids],
        "k_star": int(sel.k_star),
        "o1_curve": [[float(k), float(v)] for k, v in sel.o1_curve],
        "o1_at_k_star": float(sel.o1_at_k_star),
        "o1_full_pool": None if o1_full is None else float(o1_full),
        "weights": None if sel.weights is None else [float(v) for v in sel.weights],
        "objective_trace": None
        if sel.objective_trace is None
        else [float(v) for v in sel.objective_trace],
        "flags": list(sel.flags),
    }


def calibration_report_dict(res):
    return {
        "kind": "calibration_report",
        "dxb": [float(v) for v in res.dxb],
        "param_values": [float(v) for v in res.params.values],
        "param_mask": [int(v) for v in res.params.mask],
        "iterations": int(res.iterations),
        "initial_cost": float(res.initial_cost),
        "final_cost": float(res.final_cost),
        "cost_trace": [float(v) for v in res.cost_trace],
        "stopped_by": res.stopped_by,
        "condition_number": float(res.condition_number),
        "ill_conditioned": bool(res.ill_conditioned),
        "sigma2": float(res.sigma2),
        "covariance": None if res.covariance is None else [
            [float(v) for v in row] for row in res.covariance
        ],
        "stats_before": res.stats_before,
        "stats_after": res.stats_after,
    }


def validation_report_dict(cv):
    d = calibration_report_dict(cv.calibration)
    d.pop("kind")
    return {
        "kind": "validation_report",
        "nominal_abs_mean": cv.nominal_abs_mean,
        "calibrated_abs_mean": cv.calibrated_abs_mean,
        "factors": cv.factors,
        "mean_factor": float(cv.mean_factor),
        "capped": bool(cv.capped),
        "calibration": d,
    }


def ground_truth_dict(gt):
    seed = gt.seed
    return {
        "kind": "ground_truth",
        "values": [float(v) for v in gt.params.values],
        "mask": [int(v) for v in gt.params.mask],
        "translation_range": float(gt.translation_range),
        "rotation_range": float(gt.rotation_range),
        "seed": list(seed) if isinstance(seed, tuple) else seed,
    }


def noise_dict(noise):
    seed = noise.seed
    return {
        "kind": "noise_model",
        "encoder_sigma": float(noise.encoder_sigma),
        "residual_sigma_z": float(noise.residual_sigma_z),
        "residual_sigma_ang": float(noise.residual_sigma_ang),
        "seed": list(seed) if isinstance(seed, tuple) else seed,
    }


def expected_recovery_dict(base, gt):
    return {
        "kind": "expected_recovery",
        "labels": base.independent_labels(),
        "expected": [float(v) for v in gt.base_values(base)],
        "n_b": int(base.n_b),
    }


def check_artifact(path):
    """Validate one artifact file by its kind (JSON) or header (CSV).

    Returns the artifact's kind string; raises InvalidArgumentError when the
    file does not match any known format.
    """
    if path.endswith(".json"):
        try:
            obj = load_json(path)
        except json.JSONDecodeError as exc:
            raise InvalidArgumentError(f"{path}: not valid JSON ({exc})") from exc
        # chain files predate the report kinds; recognize them structurally
        if isinstance(obj, dict) and "kind" not in obj and "joints" in obj:
            from .kinematics import chain_from_dict

            chain_from_dict(obj)
            return "chain"
        return validate_report(obj)
    if path.endswith(".csv"):
        with open(path, newline="") as fh:
            rd = csv.reader(fh)
            try:
                header = next(rd)
            except StopIteration:
                raise InvalidArgumentError(f"{path}: empty CSV") from None
            head = ",".join(header)
            for prefix, name, text_cols in _CSV_KINDS:
                if not head.startswith(prefix):
                    continue
                width = len(header)
                for ln, row in enumerate(rd, start=2):
                    if len(row) != width:
                        raise InvalidArgumentError(
                            f"{path}:{ln}: expected {width} columns, got {len(row)}"
                        )
                    for c, v in enumerate(row):
                        if c not in text_cols and not _is_number(v):
                            raise InvalidArgumentError(
                                f"{path}:{ln}: non-numeric value {v!r}"
                            )
                return name
            raise InvalidArgumentError(f"{path}: unrecognized CSV header {head!r}")
    raise InvalidArgumentError(f"{path}: unknown artifact type (expect .json or .csv)")


def _is_number(v):
    try:
        float(v)
        return True
    except ValueError:
        return False
