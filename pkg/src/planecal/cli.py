"""Command-line pipeline driver.

Subcommands cover the pipeline end to end: generate a contact-posture pool,
rank and select an informative subset, calibrate against a measurement set,
cross-validate on held-out postures, build synthetic scenario bundles, and
render figures from the artifacts.  All randomness flows from seeds in the
config file, so rerunning a subcommand with the same inputs reproduces its
outputs byte for byte.

Exit codes: 0 success, 2 bad input or partial result, 3 numerical failure.
Failures emit one machine-readable JSON object on stderr.
"""

import argparse
import glob
import json
import os
import sys

import numpy as np

from . import fileio
from .calibrate import cross_validate, solve
from .design import (
    detmax_select,
    iroc_select,
    o1_index,
    pool_info_matrices,
    random_select,
)
from .errors import (
    InvalidArgumentError,
    PartialPoolError,
    PlanecalError,
    SingularPoolError,
)
from .identifiability import qr_reduce, regressor_from_postures
from .kinematics import chain_to_dict, load_chain
from .posegen import PoolSpec, TargetSpec, build_pool
from .residual import Dataset, ParameterVector, PlaneParams, stack_residuals
from .simulator import GroundTruth, NoiseModel, corrupt, make_scenario

_INPUT_ERRORS = (
    InvalidArgumentError,
    PartialPoolError,
    FileNotFoundError,
    IsADirectoryError,
    NotADirectoryError,
    PermissionError,
    json.JSONDecodeError,
)


def _load_config(path):
    cfg = fileio.load_json(path)
    if not isinstance(cfg, dict) or cfg.get("kind") != "scenario_config":
        raise InvalidArgumentError(f"{path}: expected a scenario_config JSON object")
    fileio.validate_report(cfg)
    # file references resolve against the config's own directory
    root = os.path.dirname(os.path.abspath(path))
    for key in ("chain", "pool_file"):
        if key in cfg and not os.path.isabs(cfg[key]):
            cfg[key] = os.path.join(root, cfg[key])
    return cfg


def _override_seeds(cfg, seed):
    if seed is None:
        return
    for section in ("pool", "selection", "noise", "ground_truth"):
        cfg.setdefault(section, {})["seed"] = seed


def _chain_plane(cfg):
    chain = load_chain(cfg["chain"])
    return chain, PlaneParams(*cfg["plane"])


def _target_spec(cfg):
    t = cfg["targets"]
    ws = t.get("workspace")
    return TargetSpec(
        points=np.array(t["points"], dtype=float),
        quota=t.get("quota", 1),
        workspace=None if ws is None else tuple(ws),
    )


def _pool_spec(cfg):
    p = cfg["pool"]
    return PoolSpec(
        size=int(p["size"]),
        seed=int(p["seed"]),
        max_iterations=int(p.get("max_iterations", 50)),
        tolerance=float(p.get("tolerance", 1e-8)),
        balance=bool(p.get("balance", False)),
        margin=float(p.get("margin", 0.01)),
    )


def _out_dir(args, cfg):
    out = args.out or cfg.get("output")
    if not out:
        raise InvalidArgumentError("no output directory: pass --out or set `output`")
    os.makedirs(out, exist_ok=True)
    return out


def _pool_base(chain, plane, postures):
    """Base parameterization as contact data sees it: built on the pool itself."""
    return qr_reduce(regressor_from_postures(chain, plane, postures))


def _write_pool(out, pool, cfg):
    generation = {k: cfg[k] for k in ("plane", "targets", "pool") if k in cfg}
    generation["chain"] = os.path.basename(cfg["chain"])
    fileio.write_pool_csv(
        os.path.join(out, "pool.csv"), pool.posture_ids, pool.target_ids, pool.postures
    )
    fileio.dump_json(
        fileio.pool_sidecar_dict(pool, generation), os.path.join(out, "pool.json")
    )


def cmd_genpool(args):
    cfg = _load_config(args.config)
    _override_seeds(cfg, args.seed)
    out = _out_dir(args, cfg)
    chain, plane = _chain_plane(cfg)
    tspec, pspec = _target_spec(cfg), _pool_spec(cfg)
    partial = None
    try:
        pool = build_pool(chain, plane, tspec, pspec)
    except PartialPoolError as exc:
        pool, partial = exc.pool, exc
    _write_pool(out, pool, cfg)
    print(f"pool: {pool.size} postures -> {os.path.join(out, 'pool.csv')}")
    if partial is not None:
        return _fail(partial, 2)
    return 0


def _load_pool_postures(args, cfg, out):
    path = cfg.get("pool_file") or os.path.join(out, "pool.csv")
    ids, _, q = fileio.read_pool_csv(path)
    return path, ids, q


def cmd_select(args):
    cfg = _load_config(args.config)
    _override_seeds(cfg, args.seed)
    out = _out_dir(args, cfg)
    chain, plane = _chain_plane(cfg)
    pool_path, ids, q = _load_pool_postures(args, cfg, out)
    base = _pool_base(chain, plane, q)
    fileio.dump_json(base.as_report_dict(), os.path.join(out, "base.json"))
    infos = pool_info_matrices(chain, plane, base, q)
    try:
        np.linalg.cholesky(infos.sum(axis=0))
    except np.linalg.LinAlgError:
        raise SingularPoolError(
            f"{pool_path}: pool information matrix is singular, base not excited"
        ) from None
    sel_cfg = cfg.get("selection", {})
    seed = int(sel_cfg.get("seed", 0))
    runs = None
    if args.method == "iroc":
        sel = iroc_select(
            infos,
            k_0=sel_cfg.get("k_0"),
            seed=seed,
            ids=ids,
            smoothed=bool(sel_cfg.get("smoothed", False)),
        )
    else:
        m = sel_cfg.get("m")
        if m is None:
            raise InvalidArgumentError(f"selection.m is required for {args.method}")
        if args.method == "detmax":
            sel, runs = detmax_select(
                infos, int(m), n_runs=int(sel_cfg.get("n_runs", 10)), seed=seed, ids=ids
            )
        else:
            sel = random_select(infos, int(m), seed=seed, ids=ids)
    fileio.dump_json(
        fileio.selection_report_dict(sel, o1_full=o1_index(infos)),
        os.path.join(out, "selection.json"),
    )
    fileio.write_curve_csv(os.path.join(out, "o1_curve.csv"), sel.o1_curve)
    if sel.weights is not None:
        ranked = np.sort(np.asarray(sel.weights))[::-1]
        fileio.write_weights_csv(os.path.join(out, "weights.csv"), ranked)
    for run in runs or ():
        fileio.write_trace_csv(
            os.path.join(out, f"detmax_run_{run.run + 1:02d}.csv"), run.trace
        )
    print(
        f"{sel.method}: k*={sel.k_star} O1={sel.o1_at_k_star:.6f} -> "
        f"{os.path.join(out, 'selection.json')}"
    )
    return 0


def cmd_calibrate(args):
    cfg = _load_config(args.config)
    out = _out_dir(args, cfg)
    chain, plane = _chain_plane(cfg)
    ids, q = fileio.read_dataset_csv(args.dataset)
    ds = Dataset(chain, plane, q, posture_ids=ids)
    base = _pool_base(chain, plane, q)
    fileio.dump_json(base.as_report_dict(), os.path.join(out, "base.json"))
    res = solve(ds, base)
    before = stack_residuals(ds, ParameterVector.zeros(chain))
    after = stack_residuals(ds, res.params)
    fileio.dump_json(
        fileio.calibration_report_dict(res), os.path.join(out, "calibration.json")
    )
    fileio.write_residuals_csv(os.path.join(out, "residuals.csv"), ids, before, after)
    print(
        f"calibrated: cost {res.initial_cost:.3e} -> {res.final_cost:.3e} "
        f"({res.stopped_by}, {res.iterations} iterations)"
    )
    return 0


def cmd_validate(args):
    cfg = _load_config(args.config)
    out = _out_dir(args, cfg)
    chain, plane = _chain_plane(cfg)
    train_ids, train_q = fileio.read_dataset_csv(args.train)
    test_ids, test_q = fileio.read_dataset_csv(args.test)
    shared = np.intersect1d(train_ids, test_ids)
    if shared.size:
        raise InvalidArgumentError(
            f"train and test share posture ids {shared[:5].tolist()}"
        )
    train = Dataset(chain, plane, train_q, posture_ids=train_ids)
    test = Dataset(chain, plane, test_q, posture_ids=test_ids)
    base = _pool_base(chain, plane, train_q)
    cv = cross_validate(train, test, base)
    fileio.dump_json(
        fileio.validation_report_dict(cv), os.path.join(out, "validation.json")
    )
    print(f"held-out abs-mean improvement factor: {cv.mean_factor:.2f}")
    return 0


def cmd_simulate(args):
    cfg = _load_config(args.config)
    _override_seeds(cfg, args.seed)
    out = _out_dir(args, cfg)
    chain, plane = _chain_plane(cfg)
    tspec, pspec = _target_spec(cfg), _pool_spec(cfg)
    gt_cfg = cfg.get("ground_truth", {})
    noise = NoiseModel(**cfg.get("noise", {}))
    # pass 1: what does contact data identify for this chain and plane
    prospect = build_pool(chain, plane, tspec, pspec)
    base = _pool_base(chain, plane, prospect.postures)
    # pass 2: true model drawn inside that base, pool re-projected under it
    draw_kwargs = {
        k: float(gt_cfg[k])
        for k in ("translation_range", "rotation_range")
        if k in gt_cfg
    }
    gt = GroundTruth.draw(chain, seed=gt_cfg.get("seed", 0), base=base, **draw_kwargs)
    ds, pool = make_scenario(chain, plane, gt, tspec, pspec)
    noisy = corrupt(ds, noise)
    fileio.dump_json_raw(chain_to_dict(chain), os.path.join(out, "chain.json"))
    fileio.dump_json(fileio.ground_truth_dict(gt), os.path.join(out, "ground_truth.json"))
    fileio.dump_json(fileio.noise_dict(noise), os.path.join(out, "noise.json"))
    fileio.dump_json(base.as_report_dict(), os.path.join(out, "base.json"))
    fileio.dump_json(
        fileio.expected_recovery_dict(base, gt),
        os.path.join(out, "expected_recovery.json"),
    )
    _write_pool(out, pool, cfg)
    fileio.write_dataset_csv(
        os.path.join(out, "dataset.csv"), noisy.posture_ids, noisy.postures
    )
    print(f"scenario bundle: {pool.size} postures -> {out}")
    return 0


def cmd_report(args):
    # imported lazily: pulls in matplotlib, which the data path never needs
    from . import reporting

    src = args.directory
    if not os.path.isdir(src):
        raise InvalidArgumentError(f"{src} is not a directory")
    out = args.out or src
    os.makedirs(out, exist_ok=True)
    figures, sources = [], []

    sel_path = os.path.join(src, "selection.json")
    if os.path.isfile(sel_path):
        sel = fileio.load_json(sel_path)
        fileio.validate_report(sel)
        reporting.render_o1_curve(
            sel["o1_curve"], os.path.join(out, "o1_curve.png"), k_star=sel["k_star"]
        )
        figures.append("o1_curve.png")
        sources.append("selection.json")
        if sel.get("weights"):
            reporting.render_weights(sel["weights"], os.path.join(out, "weights.png"))
            figures.append("weights.png")

    trace_paths = sorted(glob.glob(os.path.join(src, "detmax_run_*.csv")))
    if trace_paths:
        traces = [fileio.read_trace_csv(p) for p in trace_paths]
        reporting.render_detmax_traces(traces, os.path.join(out, "detmax_traces.png"))
        figures.append("detmax_traces.png")
        sources.extend(os.path.basename(p) for p in trace_paths)

    res_path = os.path.join(src, "residuals.csv")
    if os.path.isfile(res_path):
        ids, before, after = fileio.read_residuals_csv(res_path)
        reporting.render_residuals(
            ids, before, after, os.path.join(out, "residuals.png")
        )
        figures.append("residuals.png")
        sources.append("residuals.csv")

    if not figures:
        raise InvalidArgumentError(f"{src}: no renderable artifacts found")
    fileio.dump_json(
        {"kind": "report_summary", "figures": figures, "sources": sources},
        os.path.join(out, "report.json"),
    )
    print(f"rendered {len(figures)} figures -> {out}")
    return 0


def _run_check(paths):
    for path in paths:
        kind = fileio.check_artifact(path)
        print(f"{path}: {kind}")
    return 0


_COMMANDS = {
    "genpool": cmd_genpool,
    "select": cmd_select,
    "calibrate": cmd_calibrate,
    "validate": cmd_validate,
    "simulate": cmd_simulate,
    "report": cmd_report,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="planecal",
        description="Plane-contact calibration pipeline: pools, selection, calibration.",
    )
    parser.add_argument(
        "--check",
        nargs="+",
        metavar="PATH",
        help="validate artifact files (JSON by kind, CSV by header) and exit",
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p, config_required=True):
        if config_required:
            p.add_argument("--config", required=True, help="scenario config JSON")
        p.add_argument("--out", help="output directory (overrides config `output`)")
        p.add_argument(
            "--seed", type=int, help="override every seed in the config sections"
        )

    common(sub.add_parser("genpool", help="generate a contact-posture pool"))
    p = sub.add_parser("select", help="rank postures and pick an informative subset")
    common(p)
    p.add_argument(
        "--method", choices=("iroc", "detmax", "random"), default="iroc"
    )
    p = sub.add_parser("calibrate", help="least-squares calibration of a dataset")
    common(p)
    p.add_argument("dataset", help="posture dataset CSV")
    p = sub.add_parser("validate", help="cross-validate on held-out postures")
    common(p)
    p.add_argument("train", help="training dataset CSV")
    p.add_argument("test", help="held-out dataset CSV")
    common(sub.add_parser("simulate", help="build a synthetic scenario bundle"))
    p = sub.add_parser("report", help="render figures from pipeline artifacts")
    p.add_argument("directory", help="directory holding pipeline artifacts")
    p.add_argument("--out", help="directory for figures (defaults to the source)")
    return parser


def _fail(exc, code):
    print(
        json.dumps(
            {"error": type(exc).__name__, "message": str(exc), "exit_code": code}
        ),
        file=sys.stderr,
    )
    return code


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.check:
            return _run_check(args.check)
        if not args.command:
            parser.print_usage(sys.stderr)
            return 2
        return _COMMANDS[args.command](args)
    except _INPUT_ERRORS as exc:
        return _fail(exc, 2)
    except (PlanecalError, np.linalg.LinAlgError) as exc:
        return _fail(exc, 3)


if __name__ == "__main__":
    sys.exit(main())
