"""Identifiable-parameter analysis of the stacked residual Jacobian.

The regressor R stacks single-posture residual Jacobians over random
configurations.  A column-pivoted rank-revealing QR splits its columns into
independent, dependent and non-influential sets; dependent columns are exact
linear combinations of independent ones, so the model is rewritten in base
parameters dx_b = A dx with R dx = R_b (A dx) and R_b the independent columns.
Co-linear or parallel consecutive joints surface here as grouped offsets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InvalidArgumentError
from .residual import ParameterVector, param_labels, posture_jacobian

# dependency coefficients below this are treated as structural zeros
_COEFF_ZERO = 1e-10


@dataclass(frozen=True, eq=False)
class Regressor:
    """Stacked residual Jacobian over the free parameter columns."""

    matrix: np.ndarray
    column_labels: tuple
    free_indices: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.matrix.ndim != 2 or self.matrix.shape[1] != len(self.column_labels):
            raise InvalidArgumentError("regressor shape does not match its labels")

    @property
    def n_free(self):
        return self.matrix.shape[1]


@dataclass(frozen=True, eq=False)
class BaseParameterization:
    """Result of the rank-revealing reduction.

    `independent_columns`/`eliminated_columns` index regressor columns
    (ascending).  `combination_matrix` A maps a free-parameter vector to base
    coordinates; restricted to the independent columns it is the identity, and
    eliminated columns contribute nothing.
    """

    independent_columns: np.ndarray
    eliminated_columns: np.ndarray
    combination_matrix: np.ndarray
    rank_tolerance: float
    column_labels: tuple
    free_indices: np.ndarray
    mask: np.ndarray

    @property
    def n_b(self):
        return self.independent_columns.shape[0]

    @property
    def global_independent(self):
        """Global parameter indices of the base (independent) columns."""
        return self.free_indices[self.independent_columns]

    def independent_labels(self):
        return [self.column_labels[c] for c in self.independent_columns]

    def eliminated_labels(self):
        return [self.column_labels[c] for c in self.eliminated_columns]

    def groups(self):
        """Per base parameter, the dependent labels folded into it."""
        out = []
        for row, c in enumerate(self.independent_columns):
            combined = []
            for j in np.flatnonzero(self.combination_matrix[row]):
                if j == c:
                    continue
                combined.append(
                    {
                        "label": self.column_labels[j],
                        "coefficient": float(self.combination_matrix[row, j]),
                    }
                )
            out.append({"base": self.column_labels[c], "combines": combined})
        return out

    def as_report_dict(self):
        return {
            "kind": "base_parameterization",
            "n_b": int(self.n_b),
            "rank_tolerance": self.rank_tolerance,
            "independent": self.independent_labels(),
            "eliminated": self.eliminated_labels(),
            "groups": self.groups(),
        }


def build_random_regressor(chain, plane, n_configs=None, seed=0, mask=None):
    """Stack residual Jacobians at the nominal model over random configurations.

    Configurations are drawn uniformly inside the joint limits; the Jacobian is
    evaluated at zero parameter variation, where the identifiability structure
    of the nominal geometry lives.  `n_configs` defaults to twice the minimum
    ceil(N_free / 3) and may not go below that minimum.
    """
    params = ParameterVector.zeros(chain, mask=mask)
    free = params.free_indices()
    labels = param_labels(chain)
    min_configs = math.ceil(free.shape[0] / 3)
    if n_configs is None:
        n_configs = 2 * min_configs
    if n_configs < min_configs:
        raise InvalidArgumentError(
            f"n_configs={n_configs} is below the minimum {min_configs}"
        )
    rng = np.random.default_rng(seed)
    lo, hi = chain.lower_limits(), chain.upper_limits()
    rows = np.empty((3 * n_configs, free.shape[0]))
    for i in range(n_configs):
        q = rng.uniform(lo, hi)
        rows[3 * i : 3 * i + 3] = posture_jacobian(chain, plane, q, params, free)
    return Regressor(
        matrix=rows,
        column_labels=tuple(labels[i] for i in free),
        free_indices=free,
        mask=params.mask.copy(),
    )


def regressor_from_postures(chain, plane, postures, mask=None):
    """Stack residual Jacobians at the nominal model over given configurations.

    Random free-space configurations overstate what plane-contact data can
    see: postures restricted to the contact manifold span fewer directions, so
    a base built here is the one an actual measurement campaign identifies.
    """
    params = ParameterVector.zeros(chain, mask=mask)
    free = params.free_indices()
    labels = param_labels(chain)
    q_all = np.asarray(postures, dtype=float)
    if q_all.ndim != 2 or q_all.shape[1] != chain.n_joints or q_all.shape[0] == 0:
        raise InvalidArgumentError("postures must be a non-empty (N, n_joints) array")
    rows = np.empty((3 * q_all.shape[0], free.shape[0]))
    for i, q in enumerate(q_all):
        rows[3 * i : 3 * i + 3] = posture_jacobian(chain, plane, q, params, free)
    return Regressor(
        matrix=rows,
        column_labels=tuple(labels[i] for i in free),
        free_indices=free,
        mask=params.mask.copy(),
    )


def qr_reduce(reg, tol=1e-8, column_scales=None):
    """Split regressor columns into independent / dependent / eliminated sets.

    Columns whose norm is at most `tol` times the largest are non-influential
    and eliminated outright.  A column-pivoted QR of the rest marks pivots with
    |r_kk| <= tol * |r_11| as dependent; their expansion onto the independent
    columns comes from the leading triangular solve.  Optional positive
    `column_scales` precondition the pivoting; the combination matrix is
    reported in unscaled coordinates either way.
    """
    m = np.array(reg.matrix, dtype=float)
    nfree = m.shape[1]
    if column_scales is not None:
        s = np.asarray(column_scales, dtype=float)
        if s.shape != (nfree,) or np.any(s <= 0) or not np.all(np.isfinite(s)):
            raise InvalidArgumentError("column_scales must be positive, one per column")
        m = m * s[None, :]
    else:
        s = np.ones(nfree)
    norms = np.linalg.norm(m, axis=0)
    max_norm = norms.max(initial=0.0)
    if max_norm == 0.0:
        raise InvalidArgumentError("regressor is identically zero")
    keep = norms > tol * max_norm
    kept_idx = np.flatnonzero(keep)
    _, r, piv = scipy.linalg.qr(m[:, keep], mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    rank = int(np.sum(diag > tol * diag[0]))
    ind_local, dep_local = piv[:rank], piv[rank:]
    if dep_local.size:
        beta = scipy.linalg.solve_triangular(r[:rank, :rank], r[:rank, rank:])
    else:
        beta = np.zeros((rank, 0))
    ind = kept_idx[ind_local]
    dep = kept_idx[dep_local]
    # undo the preconditioning on the dependency coefficients
    beta = beta * s[ind][:, None] / s[dep][None, :]
    beta[np.abs(beta) < _COEFF_ZERO] = 0.0
    a = np.zeros((rank, nfree))
    a[np.arange(rank), ind] = 1.0
    a[:, dep] = beta
    order = np.argsort(ind)
    return BaseParameterization(
        independent_columns=ind[order],
        eliminated_columns=np.flatnonzero(~keep),
        combination_matrix=a[order],
        rank_tolerance=float(tol),
        column_labels=reg.column_labels,
        free_indices=reg.free_indices,
        mask=reg.mask,
    )


def remap_base_to_full(base, dxb):
    """Lift base coordinates to a full parameter vector (dependents zeroed)."""
    dxb = np.asarray(dxb, dtype=float)
    if dxb.shape != (base.n_b,):
        raise InvalidArgumentError(
            f"expected {base.n_b} base coordinates, got shape {dxb.shape}"
        )
    values = np.zeros(base.mask.shape[0])
    values[base.global_independent] = dxb
    return ParameterVector(values, base.mask)
