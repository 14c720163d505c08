"""Plane-contact residual model.

With the gripper's three contact points resting on the table, the pose of the
contact frame R_c expressed in the plane frame R_p has zero height, roll and
pitch.  The residual of a posture is that partial pose (z, roll, pitch); a
dataset stacks the triples of N postures into a 3N-vector whose norm the
calibration minimizes.

Parameter layout (one global column index space):
    0 .. 6*(N_J+2)-1   placement variations of base, joints 1..N_J, flange
    then 6 plane-model entries (z_c, phi_x_c, theta_y_c, z_p, phi_x_p, theta_y_p)
where the contact offset locates R_c in the flange and (z_p, phi_x_p,
theta_y_p) locate the plane in the world.  Plane yaw and in-plane position are
structurally absent: the contact leaves them unobservable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DegenerateOrientationError, InvalidArgumentError
from .kinematics import (
    ChainFactors,
    _placement_derivatives,
    _placement_matrix,
    n_placement_params,
    wrap_angle,
)

_SLOT_LABELS = ("px", "py", "pz", "phix", "phiy", "phiz")
PLANE_LABELS = (
    "contact_zc",
    "contact_phix",
    "contact_thetay",
    "plane_zp",
    "plane_phix",
    "plane_thetay",
)

# |sin(pitch)| above this is treated as gimbal lock
_LOCK_TOL = 1.0 - 1e-12


def plane_offset(chain):
    """Global column index of the first plane-model parameter."""
    return n_placement_params(chain)


def n_parameters(chain):
    return n_placement_params(chain) + 6


def param_labels(chain):
    labels = [f"base_{s}" for s in _SLOT_LABELS]
    for i in range(1, chain.n_joints + 1):
        labels += [f"j{i:02d}_{s}" for s in _SLOT_LABELS]
    labels += [f"flange_{s}" for s in _SLOT_LABELS]
    labels += list(PLANE_LABELS)
    return labels


@dataclass(frozen=True, eq=False)
class PlaneParams:
    """Nominal plane-model values: contact offset in the flange, plane in the world.

    The contact offset is the placement (0, 0, z_c, phi_x_c, theta_y_c, 0); the
    plane frame is the placement (0, 0, z_p, phi_x_p, theta_y_p, 0).  Yaw of
    both frames is fixed at zero by construction.
    """

    z_c: float
    phix_c: float
    thetay_c: float
    z_p: float
    phix_p: float
    thetay_p: float

    def __post_init__(self):
        vals = self.as_tuple()
        if not all(math.isfinite(v) for v in vals):
            raise InvalidArgumentError(f"non-finite plane parameters: {vals}")
        for name in ("phix_c", "thetay_c", "phix_p", "thetay_p"):
            object.__setattr__(self, name, wrap_angle(getattr(self, name)))

    def as_tuple(self):
        return (
            self.z_c,
            self.phix_c,
            self.thetay_c,
            self.z_p,
            self.phix_p,
            self.thetay_p,
        )

    def as_array(self):
        return np.array(self.as_tuple())

    @classmethod
    def from_array(cls, kappa):
        kappa = np.asarray(kappa, dtype=float)
        if kappa.shape != (6,):
            raise InvalidArgumentError("plane parameters need 6 entries")
        return cls(*kappa)


@dataclass(frozen=True, eq=False)
class ParameterVector:
    """Variation of all calibration parameters with a free/frozen mask.

    `values` has length 6*(N_J+2) + 6; `mask` is True where the entry is
    calibrated.  Frozen entries must be exactly zero.
    """

    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        m = np.array(self.mask, dtype=bool)
        if v.ndim != 1 or m.shape != v.shape:
            raise InvalidArgumentError("values and mask must be equal-length vectors")
        if not np.all(np.isfinite(v)):
            raise InvalidArgumentError("non-finite parameter values")
        if np.any(v[~m] != 0.0):
            raise InvalidArgumentError("frozen (masked) entries must be exactly zero")
        v.flags.writeable = False
        m.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m)

    @classmethod
    def zeros(cls, chain, mask=None):
        n = n_parameters(chain)
        if mask is None:
            mask = np.ones(n, dtype=bool)
        return cls(np.zeros(n), mask)

    def replace_values(self, values):
        return ParameterVector(values, self.mask)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def dx(self):
        """Placement part (everything before the plane-model entries)."""
        return self.values[:-6]

    @property
    def dplane(self):
        return self.values[-6:]

    def free_indices(self):
        return np.flatnonzero(self.mask)


class ResidualTriple(NamedTuple):
    z: float
    roll: float
    pitch: float


@dataclass(frozen=True, eq=False)
class Dataset:
    """Measured postures of one chain against one nominal plane model.

    `residual_offsets`, when present, is a 3N vector added to the stacked
    residual; it carries synthetic measurement-side noise.
    """

    chain: object
    plane: PlaneParams
    postures: np.ndarray
    posture_ids: np.ndarray = None
    residual_offsets: np.ndarray = None

    def __post_init__(self):
        p = np.array(self.postures, dtype=float)
        if p.ndim != 2 or p.shape[1] != self.chain.n_joints:
            raise InvalidArgumentError(
                f"postures must be (N, {self.chain.n_joints}), got {p.shape}"
            )
        if not np.all(np.isfinite(p)):
            raise InvalidArgumentError("non-finite postures")
        p.flags.writeable = False
        object.__setattr__(self, "postures", p)
        ids = self.posture_ids
        ids = np.arange(p.shape[0]) if ids is None else np.array(ids, dtype=int)
        if ids.shape != (p.shape[0],):
            raise InvalidArgumentError("posture_ids must match posture count")
        ids.flags.writeable = False
        object.__setattr__(self, "posture_ids", ids)
        off = self.residual_offsets
        if off is not None:
            off = np.array(off, dtype=float)
            if off.shape != (3 * p.shape[0],):
                raise InvalidArgumentError("residual_offsets must have length 3N")
            off.flags.writeable = False
            object.__setattr__(self, "residual_offsets", off)

    @property
    def n_postures(self):
        return self.postures.shape[0]


def _rigid_inverse(t):
    out = np.eye(4)
    rt = t[:3, :3].T
    out[:3, :3] = rt
    out[:3, 3] = -rt @ t[:3, 3]
    return out


def _plane_six(kappa_plane):
    return np.array([0.0, 0.0, kappa_plane[0], kappa_plane[1], kappa_plane[2], 0.0])


def _extract_partial_pose(t_rel):
    r = t_rel[:3, :3]
    sp = -r[2, 0]
    if abs(sp) > _LOCK_TOL:
        raise DegenerateOrientationError(
            "pitch at +-pi/2: roll and pitch are not separable"
        )
    return ResidualTriple(
        z=t_rel[2, 3],
        roll=math.atan2(r[2, 1], r[2, 2]),
        pitch=math.asin(min(1.0, max(-1.0, sp))),
    )


def _extract_rows(t_rel, d_rels):
    """Rows d(z, roll, pitch)/d(column) given d(T_rel)/d(column) stacks."""
    r = t_rel[:3, :3]
    den = r[2, 1] ** 2 + r[2, 2] ** 2
    cp = math.sqrt(max(1.0 - r[2, 0] ** 2, 1e-300))
    rows = np.empty((d_rels.shape[0], 3))
    rows[:, 0] = d_rels[:, 2, 3]
    rows[:, 1] = (r[2, 2] * d_rels[:, 2, 1] - r[2, 1] * d_rels[:, 2, 2]) / den
    rows[:, 2] = -d_rels[:, 2, 0] / cp
    return rows


def _effective_kappa(plane, params):
    return plane.as_array() + params.dplane


def _posture_eval(chain, plane, q, params, columns=None):
    """Residual triple and, when columns are given, its Jacobian rows.

    `columns` are global parameter indices; plane-frame columns are handled
    through the inverse-transform derivative, everything else through the
    chain factor products.
    """
    kappa = _effective_kappa(plane, params)
    factors = ChainFactors.build(chain, q, params.dx, contact3=kappa[:3])
    t_c = factors.pose_matrix()
    plane_six = _plane_six(kappa[3:])
    t_p_inv = _rigid_inverse(_placement_matrix(plane_six))
    t_rel = t_p_inv @ t_c
    triple = _extract_partial_pose(t_rel)
    if columns is None:
        return triple, None
    k = plane_offset(chain)
    columns = np.asarray(columns, dtype=int)
    chain_cols = columns < k + 3
    d_rels = np.zeros((columns.shape[0], 4, 4))
    if np.any(chain_cols):
        d_chain = factors.column_derivatives(columns[chain_cols])
        d_rels[chain_cols] = np.einsum("ab,nbc->nac", t_p_inv, d_chain)
    if np.any(~chain_cols):
        d_plane6 = _placement_derivatives(plane_six)
        slots = {k + 3: 2, k + 4: 3, k + 5: 4}
        d_list = np.stack([d_plane6[slots[c]] for c in columns[~chain_cols]])
        d_rels[~chain_cols] = -np.einsum(
            "ab,nbc,cd->nad", t_p_inv, d_list, t_rel
        )
    return triple, _extract_rows(t_rel, d_rels)


def plane_residual(chain, plane, q, params):
    """Partial pose (z, roll, pitch) of the contact frame in the plane frame."""
    _check_params(chain, params)
    triple, _ = _posture_eval(chain, plane, q, params)
    return triple


def _check_params(chain, params):
    if params.n != n_parameters(chain):
        raise InvalidArgumentError(
            f"parameter vector length {params.n} does not match chain "
            f"({n_parameters(chain)})"
        )


def _check_columns(chain, params, free_columns):
    if free_columns is None:
        return params.free_indices()
    cols = np.asarray(free_columns, dtype=int)
    if cols.ndim != 1:
        raise InvalidArgumentError("free_columns must be a 1-d index list")
    if cols.size and (cols.min() < 0 or cols.max() >= params.n):
        raise InvalidArgumentError("free_columns out of range")
    if not np.all(params.mask[cols]):
        raise InvalidArgumentError("free_columns includes frozen (masked) parameters")
    return cols


def stack_residuals(ds, params):
    """Stacked residual of all postures, grouped (z, roll, pitch) per posture."""
    _check_params(ds.chain, params)
    out = np.empty(3 * ds.n_postures)
    for i in range(ds.n_postures):
        triple, _ = _posture_eval(ds.chain, ds.plane, ds.postures[i], params)
        out[3 * i : 3 * i + 3] = triple
    if ds.residual_offsets is not None:
        out = out + ds.residual_offsets
    return out


def residual_jacobian(ds, params, free_columns=None):
    """Analytic Jacobian of the stacked residual w.r.t. the given columns.

    Columns default to every unmasked parameter and keep the order they are
    passed in.  Built from the factor-product rule along the chain; agreement
    with `residual_jacobian_fd` is the correctness check.
    """
    _check_params(ds.chain, params)
    cols = _check_columns(ds.chain, params, free_columns)
    jac = np.empty((3 * ds.n_postures, cols.shape[0]))
    for i in range(ds.n_postures):
        _, rows = _posture_eval(ds.chain, ds.plane, ds.postures[i], params, cols)
        jac[3 * i : 3 * i + 3] = rows.T
    return jac


def residual_jacobian_fd(ds, params, free_columns=None, step=1e-6):
    """Central finite-difference Jacobian; the independent check route."""
    _check_params(ds.chain, params)
    cols = _check_columns(ds.chain, params, free_columns)
    jac = np.empty((3 * ds.n_postures, cols.shape[0]))
    base = params.values
    for n, c in enumerate(cols):
        hi = base.copy()
        lo = base.copy()
        hi[c] += step
        lo[c] -= step
        r_hi = stack_residuals(ds, params.replace_values(hi))
        r_lo = stack_residuals(ds, params.replace_values(lo))
        jac[:, n] = (r_hi - r_lo) / (2.0 * step)
    return jac


def posture_jacobian(chain, plane, q, params, columns):
    """Jacobian rows (3, len(columns)) of a single posture's residual."""
    _check_params(chain, params)
    cols = _check_columns(chain, params, columns)
    _, rows = _posture_eval(chain, plane, q, params, cols)
    return rows.T
