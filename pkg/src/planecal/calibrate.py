"""Least-squares calibration of the plane-contact model.

The solver works in base coordinates: the search vector dx_b holds only the
independent parameters, lifted to the full model by `remap_base_to_full`
(dependent entries stay zero).  Levenberg-Marquardt with identity damping; the
components z, roll and pitch are stacked unweighted, metres against radians
being comparable at the millimetre / milliradian scale of interest, with an
optional diagonal weighting for sensitivity studies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError, NonFiniteResidualError
from .identifiability import remap_base_to_full
from .residual import ParameterVector, residual_jacobian, stack_residuals

_COMPONENTS = ("z", "roll", "pitch")
_FACTOR_CAP = 1e6
_ILL_CONDITIONED = 1e12


@dataclass(frozen=True)
class LMOptions:
    max_iterations: int = 200
    lambda_init: float = 1e-3
    cost_rtol: float = 1e-12
    grad_atol: float = 1e-10
    lambda_max: float = 1e14
    component_weights: tuple = None


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    dxb: np.ndarray
    params: ParameterVector
    iterations: int
    initial_cost: float
    final_cost: float
    cost_trace: np.ndarray
    stopped_by: str
    condition_number: float
    ill_conditioned: bool
    sigma2: float
    covariance: np.ndarray
    stats_before: dict
    stats_after: dict


def residual_stats(stacked):
    """Per-component mean, abs-mean, std and rms of a stacked residual."""
    r = np.asarray(stacked, dtype=float).reshape(-1, 3)
    out = {}
    for c, name in enumerate(_COMPONENTS):
        v = r[:, c]
        out[name] = {
            "mean": float(np.mean(v)),
            "abs_mean": float(np.mean(np.abs(v))),
            "std": float(np.std(v)),
            "rms": float(np.sqrt(np.mean(v * v))),
        }
    return out


def _row_weights(opt, n_postures):
    if opt.component_weights is None:
        return None
    w = np.asarray(opt.component_weights, dtype=float)
    if w.shape != (3,) or np.any(w <= 0):
        raise InvalidArgumentError("component_weights must be 3 positive values")
    return np.tile(w, n_postures)


def solve(ds, base, options=None):
    """Calibrate a dataset, starting from zero variation.

    Damping starts at lambda_init, divides by 10 on accepted steps and
    multiplies by 10 on rejected ones.  Stops on relative cost decrease below
    cost_rtol, gradient infinity-norm below grad_atol, or max_iterations.
    """
    opt = options or LMOptions()
    n_b = base.n_b
    if 3 * ds.n_postures < n_b:
        raise InvalidArgumentError(
            f"{ds.n_postures} postures give {3 * ds.n_postures} rows for {n_b} parameters"
        )
    cols = base.global_independent
    wvec = _row_weights(opt, ds.n_postures)

    def fun(x):
        r = stack_residuals(ds, remap_base_to_full(base, x))
        if not np.all(np.isfinite(r)):
            raise NonFiniteResidualError("residual evaluation produced non-finite values")
        return r

    def jac(x):
        j = residual_jacobian(ds, remap_base_to_full(base, x), cols)
        return j if wvec is None else j * wvec[:, None]

    x = np.zeros(n_b)
    r_raw = fun(x)
    stats_before = residual_stats(r_raw)
    r = r_raw if wvec is None else r_raw * wvec
    cost = 0.5 * float(r @ r)
    initial_cost = cost
    trace = [cost]
    lam = opt.lambda_init
    iterations = 0
    stopped_by = "max_iterations"
    j = None
    eye = np.eye(n_b)
    for _ in range(opt.max_iterations):
        j = jac(x)
        grad = j.T @ r
        if np.max(np.abs(grad)) < opt.grad_atol:
            stopped_by = "gradient"
            break
        hess = j.T @ j
        accepted = False
        while lam <= opt.lambda_max:
            try:
                delta = np.linalg.solve(hess + lam * eye, -grad)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            x_new = x + delta
            r_new_raw = fun(x_new)
            r_new = r_new_raw if wvec is None else r_new_raw * wvec
            cost_new = 0.5 * float(r_new @ r_new)
            if cost_new < cost:
                accepted = True
                break
            lam *= 10.0
        if not accepted:
            stopped_by = "stalled"
            break
        lam = lam / 10.0
        prev = cost
        x, r, r_raw, cost = x_new, r_new, r_new_raw, cost_new
        trace.append(cost)
        iterations += 1
        if prev - cost < opt.cost_rtol * max(prev, 1e-300):
            stopped_by = "cost"
            break
    if j is None:
        j = jac(x)
    hess = j.T @ j
    cond = float(np.linalg.cond(hess))
    dof = 3 * ds.n_postures - n_b
    sigma2 = 2.0 * cost / dof if dof > 0 else float("nan")
    try:
        covariance = sigma2 * np.linalg.inv(hess) if dof > 0 else None
    except np.linalg.LinAlgError:
        covariance = None
    return CalibrationResult(
        dxb=x,
        params=remap_base_to_full(base, x),
        iterations=iterations,
        initial_cost=initial_cost,
        final_cost=cost,
        cost_trace=np.array(trace),
        stopped_by=stopped_by,
        condition_number=cond,
        ill_conditioned=bool(cond > _ILL_CONDITIONED),
        sigma2=sigma2,
        covariance=covariance,
        stats_before=stats_before,
        stats_after=residual_stats(r_raw),
    )


@dataclass(frozen=True, eq=False)
class CrossValidationResult:
    calibration: CalibrationResult
    nominal_abs_mean: dict
    calibrated_abs_mean: dict
    factors: dict
    mean_factor: float
    capped: bool


def _abs_means(stacked):
    r = np.asarray(stacked).reshape(-1, 3)
    return {name: float(np.mean(np.abs(r[:, c]))) for c, name in enumerate(_COMPONENTS)}


def cross_validate(train, test, base, options=None):
    """Calibrate on `train`, score improvement on `test`.

    The improvement factor per component is nominal / calibrated abs-mean,
    capped at 1e6 (a noiseless test set can reach an exact zero).  Whether the
    two sets overlap is the caller's concern; scoring the training set itself
    is legitimate for sanity checks.
    """
    cal = solve(train, base, options)
    nominal = ParameterVector.zeros(train.chain, mask=base.mask)
    nom = _abs_means(stack_residuals(test, nominal))
    cald = _abs_means(stack_residuals(test, cal.params))
    factors = {}
    capped = False
    for name in _COMPONENTS:
        if nom[name] == 0.0 and cald[name] == 0.0:
            factors[name] = 1.0
            continue
        if cald[name] * _FACTOR_CAP <= nom[name]:
            factors[name] = _FACTOR_CAP
            capped = True
        else:
            factors[name] = min(nom[name] / cald[name], _FACTOR_CAP)
    return CrossValidationResult(
        calibration=cal,
        nominal_abs_mean=nom,
        calibrated_abs_mean=cald,
        factors=factors,
        mean_factor=float(np.mean([factors[n] for n in _COMPONENTS])),
        capped=capped,
    )
