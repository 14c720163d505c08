"""Synthetic calibration scenarios with known ground truth.

A scenario perturbs the model by a drawn ground truth, projects contact
postures under that true model (so the true residuals vanish up to the
projection tolerance) and hands back a dataset referencing the nominal plane
model.  Corruption adds encoder noise to the recorded joint values and,
optionally, measurement-side offsets to the residual components.  Recovery is
judged in base coordinates against A . gt.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .posegen import PoolSpec, build_pool
from .residual import Dataset, ParameterVector, n_parameters

DEFAULT_TRANSLATION_RANGE = 0.006  # m
DEFAULT_ROTATION_RANGE = math.radians(1.5)
DEFAULT_ENCODER_SIGMA = math.radians(0.05)

# scenario pools project much tighter than field pools so that the noiseless
# residual floor stays far below the solver's convergence thresholds
SCENARIO_TOLERANCE = 1e-12


def _translation_mask_from_length(n):
    out = np.zeros(n, dtype=bool)
    out[: n - 6] = (np.arange(n - 6) % 6) < 3
    out[n - 6] = True  # z_c
    out[n - 3] = True  # z_p
    return out


def translation_entry_mask(chain):
    """True where a parameter is a length (translations plus z_c and z_p)."""
    return _translation_mask_from_length(n_parameters(chain))


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """A drawn true parameter variation with its draw ranges."""

    params: ParameterVector
    translation_range: float
    rotation_range: float
    seed: int

    def __post_init__(self):
        is_len = _translation_mask_from_length(self.params.n)
        ranges = np.where(is_len, self.translation_range, self.rotation_range)
        if np.any(np.abs(self.params.values) > ranges + 1e-15):
            raise InvalidArgumentError("ground truth exceeds its stated ranges")

    @classmethod
    def draw(
        cls,
        chain,
        seed,
        base=None,
        translation_range=DEFAULT_TRANSLATION_RANGE,
        rotation_range=DEFAULT_ROTATION_RANGE,
        mask=None,
    ):
        """Draw uniform variations, optionally only on base-independent entries.

        With `base` given, only independent parameters receive a variation:
        the true model then lies inside the base-coordinate search family and
        exact recovery is well defined.  Otherwise every unmasked entry is
        drawn.
        """
        n = n_parameters(chain)
        if base is not None:
            indices = base.global_independent
            mask = base.mask
        else:
            mask = np.ones(n, dtype=bool) if mask is None else np.asarray(mask, bool)
            indices = np.flatnonzero(mask)
        rng = np.random.default_rng(seed)
        is_len = translation_entry_mask(chain)
        ranges = np.where(is_len, translation_range, rotation_range)
        values = np.zeros(n)
        values[indices] = rng.uniform(-1.0, 1.0, indices.shape[0]) * ranges[indices]
        return cls(
            params=ParameterVector(values, mask),
            translation_range=translation_range,
            rotation_range=rotation_range,
            seed=seed if np.isscalar(seed) else int(np.asarray(seed).ravel()[0]),
        )

    def base_values(self, base):
        """Ground truth expressed in base coordinates: A . gt."""
        return base.combination_matrix @ self.params.values[base.free_indices]


@dataclass(frozen=True)
class NoiseModel:
    encoder_sigma: float = DEFAULT_ENCODER_SIGMA
    residual_sigma_z: float = 0.0
    residual_sigma_ang: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if min(self.encoder_sigma, self.residual_sigma_z, self.residual_sigma_ang) < 0:
            raise InvalidArgumentError("noise levels must be non-negative")


def make_scenario(chain, plane, gt, tspec, pspec, feasibility=None, support_polygon=None):
    """Project a pool under the true model and wrap it as a nominal-plane dataset.

    The pool spec's tolerance is tightened to SCENARIO_TOLERANCE if looser, so
    noiseless scenarios calibrate down to the documented cost floor.
    """
    tol = min(pspec.tolerance, SCENARIO_TOLERANCE)
    pspec = PoolSpec(
        size=pspec.size,
        seed=pspec.seed,
        max_iterations=pspec.max_iterations,
        tolerance=tol,
        balance=pspec.balance,
        margin=pspec.margin,
    )
    pool = build_pool(
        chain,
        plane,
        tspec,
        pspec,
        params=gt.params,
        feasibility=feasibility,
        support_polygon=support_polygon,
    )
    ds = Dataset(chain, plane, pool.postures, pool.posture_ids)
    return ds, pool


def corrupt(ds, noise):
    """Apply a noise model to a dataset; zero sigmas reproduce it exactly."""
    rng = np.random.default_rng(noise.seed)
    q = ds.postures + rng.normal(0.0, noise.encoder_sigma, ds.postures.shape)
    offsets = ds.residual_offsets
    if noise.residual_sigma_z > 0 or noise.residual_sigma_ang > 0:
        sig = np.tile(
            [noise.residual_sigma_z, noise.residual_sigma_ang, noise.residual_sigma_ang],
            ds.n_postures,
        )
        drawn = rng.normal(0.0, 1.0, 3 * ds.n_postures) * sig
        offsets = drawn if offsets is None else offsets + drawn
    return Dataset(ds.chain, ds.plane, q, ds.posture_ids, offsets)


def recovery_report(chain, plane, base, gt, result):
    """Compare an estimate against the ground truth in base coordinates.

    The comparison happens in base-parameter space; the full-space remap is
    non-unique so per-entry full-space errors would be meaningless.
    """
    if result.dxb.shape != (base.n_b,):
        raise InvalidArgumentError(
            "estimate and base parameterization disagree on N_b"
        )
    if gt.params.n != n_parameters(chain):
        raise InvalidArgumentError("ground truth does not match the chain")
    if len(plane.as_array()) != 6:
        raise InvalidArgumentError("plane must carry six nominal entries")
    expected = gt.base_values(base)
    error = result.dxb - expected
    return {
        "kind": "recovery_report",
        "labels": base.independent_labels(),
        "expected": [float(v) for v in expected],
        "estimated": [float(v) for v in result.dxb],
        "error": [float(v) for v in error],
        "max_abs_error": float(np.max(np.abs(error))),
        "final_cost": float(result.final_cost),
    }
