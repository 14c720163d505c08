import numpy as np
import pytest

from planecal import (
    Dataset,
    GroundTruth,
    InvalidArgumentError,
    LMOptions,
    NoiseModel,
    PoolSpec,
    TargetSpec,
    corrupt,
    cross_validate,
    make_scenario,
    qr_reduce,
    regressor_from_postures,
    residual_stats,
    solve,
    stack_residuals,
)

TSPEC = TargetSpec(points=[[0.1, 0.0], [-0.1, 0.08], [0.0, -0.08]], quota=8)
PSPEC = PoolSpec(size=24, seed=13)


def _scenario(chain, plane, seed=0, noise=None):
    """Contact-consistent base, ground truth inside it, projected dataset."""
    from planecal import build_pool

    prospect = build_pool(chain, plane, TSPEC, PSPEC)
    base = qr_reduce(regressor_from_postures(chain, plane, prospect.postures))
    gt = GroundTruth.draw(chain, seed=(77, seed), base=base)
    ds, _ = make_scenario(chain, plane, gt, TSPEC, PSPEC)
    if noise is not None:
        ds = corrupt(ds, noise)
    return ds, base, gt


def test_residual_stats_hand_values():
    stacked = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
    st = residual_stats(stacked)
    assert st["z"]["mean"] == pytest.approx(2.5)
    assert st["z"]["abs_mean"] == pytest.approx(2.5)
    assert st["z"]["std"] == pytest.approx(1.5)
    assert st["z"]["rms"] == pytest.approx(np.sqrt((1 + 16) / 2))
    assert st["roll"]["mean"] == pytest.approx(3.5)
    assert st["pitch"]["rms"] == pytest.approx(np.sqrt((9 + 36) / 2))


def test_noiseless_recovery(chain_6r, plane_6r):
    ds, base, gt = _scenario(chain_6r, plane_6r, seed=1)
    res = solve(ds, base)
    expected = gt.base_values(base)
    assert np.max(np.abs(res.dxb - expected)) < 1e-7
    assert res.final_cost < 1e-18
    assert res.final_cost <= res.initial_cost
    assert res.stopped_by in ("cost", "gradient", "max_iterations", "stalled")


def test_cost_trace_non_increasing(chain_6r, plane_6r):
    ds, base, _ = _scenario(chain_6r, plane_6r, seed=2)
    res = solve(ds, base)
    assert np.all(np.diff(res.cost_trace) <= 1e-30)
    assert res.iterations + 1 == res.cost_trace.shape[0]


def test_solve_reports_residual_stats(chain_6r, plane_6r):
    noise = NoiseModel(encoder_sigma=0.0008726646259971648, seed=4)
    ds, base, _ = _scenario(chain_6r, plane_6r, seed=3, noise=noise)
    res = solve(ds, base)
    for comp in ("z", "roll", "pitch"):
        assert res.stats_after[comp]["abs_mean"] <= res.stats_before[comp]["abs_mean"]
    assert res.sigma2 >= 0.0
    assert res.covariance.shape == (base.n_b, base.n_b)


def test_component_weights_change_solution(chain_6r, plane_6r):
    noise = NoiseModel(encoder_sigma=0.002, seed=5)
    ds, base, _ = _scenario(chain_6r, plane_6r, seed=4, noise=noise)
    plain = solve(ds, base)
    weighted = solve(ds, base, LMOptions(component_weights=(1.0, 0.1, 0.1)))
    assert not np.allclose(plain.dxb, weighted.dxb)
    with pytest.raises(InvalidArgumentError):
        solve(ds, base, LMOptions(component_weights=(1.0, -1.0, 0.5)))


def test_solve_rejects_empty_dataset(chain_6r, plane_6r, pool300):
    _, _, postures = pool300
    base = qr_reduce(regressor_from_postures(chain_6r, plane_6r, postures[:30]))
    empty = Dataset(chain_6r, plane_6r, np.empty((0, 6)))
    with pytest.raises(InvalidArgumentError):
        solve(empty, base)


def test_cross_validate_improvement(chain_6r, plane_6r):
    noise = NoiseModel(encoder_sigma=0.0008726646259971648, seed=6)
    ds, base, _ = _scenario(chain_6r, plane_6r, seed=5, noise=noise)
    train = Dataset(chain_6r, plane_6r, ds.postures[:18], posture_ids=ds.posture_ids[:18])
    test = Dataset(chain_6r, plane_6r, ds.postures[18:], posture_ids=ds.posture_ids[18:])
    cv = cross_validate(train, test, base)
    assert cv.mean_factor > 1.0
    assert set(cv.factors) == {"z", "roll", "pitch"}
    assert not cv.capped


def test_cross_validate_caps_perfect_fit(chain_6r, plane_6r):
    # noiseless train == test: calibrated residuals vanish, factors explode
    # and are capped rather than reported as inf
    ds, base, _ = _scenario(chain_6r, plane_6r, seed=6)
    cv = cross_validate(ds, ds, base)
    assert cv.capped
    assert max(cv.factors.values()) <= 1e6
    assert np.isfinite(cv.mean_factor)


def test_calibration_reduces_stacked_residual(chain_6r, plane_6r):
    ds, base, _ = _scenario(chain_6r, plane_6r, seed=7)
    res = solve(ds, base)
    before = stack_residuals(ds, type(res.params).zeros(chain_6r))
    after = stack_residuals(ds, res.params)
    assert np.linalg.norm(after) < 1e-6 * np.linalg.norm(before)
