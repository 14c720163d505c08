"""Serial-chain kinematics with 6-parameter frame placements.

A placement is (p_x, p_y, p_z, phi_x, phi_y, phi_z): translation in the parent
frame followed by the fixed-axis XYZ rotation Rz(phi_z) . Ry(phi_y) . Rx(phi_x),
the URDF xyz/rpy convention.  A chain is

    base . (placement_i . motion_i) for i = 1..N_J . flange [. contact_offset]

where motion_i is a rotation (revolute) or translation (prismatic) about the
joint's axis, a fixed unit vector in the joint frame.  Axis directions are not
calibration parameters; axis misalignment is absorbed by placement angles.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError

_EYE4 = np.eye(4)


def wrap_angle(a):
    """Wrap an angle to (-pi, pi]."""
    return -((-a + math.pi) % (2.0 * math.pi) - math.pi)


def rot_x(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rpy_matrix(phi_x, phi_y, phi_z):
    """Rotation matrix Rz(phi_z) . Ry(phi_y) . Rx(phi_x)."""
    return rot_z(phi_z) @ rot_y(phi_y) @ rot_x(phi_x)


def skew(v):
    return np.array(
        [[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]]
    )


def rodrigues(axis, angle):
    """Rotation by `angle` about the unit vector `axis`."""
    k = skew(axis)
    return np.eye(3) + math.sin(angle) * k + (1.0 - math.cos(angle)) * (k @ k)


@dataclass(frozen=True, eq=False)
class JointPlacement:
    """Fixed transform from a parent frame: translation then XYZ roll-pitch-yaw."""

    p_x: float
    p_y: float
    p_z: float
    phi_x: float
    phi_y: float
    phi_z: float

    def __post_init__(self):
        vals = (self.p_x, self.p_y, self.p_z, self.phi_x, self.phi_y, self.phi_z)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidArgumentError(f"non-finite placement entries: {vals}")
        object.__setattr__(self, "phi_x", wrap_angle(self.phi_x))
        object.__setattr__(self, "phi_y", wrap_angle(self.phi_y))
        object.__setattr__(self, "phi_z", wrap_angle(self.phi_z))

    @classmethod
    def from_sequence(cls, six):
        six = [float(v) for v in six]
        if len(six) != 6:
            raise InvalidArgumentError(f"placement needs 6 entries, got {len(six)}")
        return cls(*six)

    def as_array(self):
        return np.array(
            [self.p_x, self.p_y, self.p_z, self.phi_x, self.phi_y, self.phi_z]
        )


@dataclass(frozen=True, eq=False)
class Joint:
    """One revolute or prismatic degree of freedom."""

    kind: str
    axis: np.ndarray
    limits: tuple

    def __post_init__(self):
        if self.kind not in ("revolute", "prismatic"):
            raise InvalidArgumentError(f"unknown joint kind {self.kind!r}")
        axis = np.asarray(self.axis, dtype=float)
        if axis.shape != (3,) or not np.all(np.isfinite(axis)):
            raise InvalidArgumentError("joint axis must be a finite 3-vector")
        if abs(np.linalg.norm(axis) - 1.0) > 1e-12:
            raise InvalidArgumentError("joint axis must be a unit vector")
        axis.flags.writeable = False
        object.__setattr__(self, "axis", axis)
        lo, hi = float(self.limits[0]), float(self.limits[1])
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise InvalidArgumentError(f"bad joint limits ({lo}, {hi})")
        object.__setattr__(self, "limits", (lo, hi))


@dataclass(frozen=True, eq=False)
class KinematicChain:
    """Single serial chain from a world-fixed base frame to a flange.

    `joints` is an ordered tuple of (Joint, JointPlacement) pairs; each
    placement locates the joint frame in its predecessor.  Optional
    `link_masses`/`link_coms` (length N_J + 1, CoM in the frame after the
    preceding joint motion, index 0 in the base placement frame) enable
    quasi-static balance checks.
    """

    name: str
    base_placement: JointPlacement
    joints: tuple
    flange_placement: JointPlacement
    link_masses: tuple = None
    link_coms: tuple = None

    def __post_init__(self):
        if len(self.joints) == 0:
            raise InvalidArgumentError("chain needs at least one joint")
        if (self.link_masses is None) != (self.link_coms is None):
            raise InvalidArgumentError("link_masses and link_coms come together")
        if self.link_masses is not None:
            n = self.n_joints + 1
            if len(self.link_masses) != n or len(self.link_coms) != n:
                raise InvalidArgumentError(f"mass data must have length {n}")

    @property
    def n_joints(self):
        return len(self.joints)

    def lower_limits(self):
        return np.array([j.limits[0] for j, _ in self.joints])

    def upper_limits(self):
        return np.array([j.limits[1] for j, _ in self.joints])


def n_placement_params(chain):
    """Count of placement parameters: 6 per frame for base, joints, flange."""
    return 6 * (chain.n_joints + 2)


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform with validated rotation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=float)
        t = np.asarray(self.translation, dtype=float)
        if r.shape != (3, 3) or t.shape != (3,):
            raise InvalidArgumentError("pose needs a 3x3 rotation and 3-vector")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise InvalidArgumentError("non-finite pose")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-10:
            raise InvalidArgumentError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > 1e-10:
            raise InvalidArgumentError("rotation determinant is not +1")
        r = r.copy()
        t = t.copy()
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    @classmethod
    def from_matrix(cls, m):
        return cls(m[:3, :3], m[:3, 3])

    def compose(self, other):
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def inverse(self):
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)


def placement_to_pose(placement):
    """Pose of a placement in its parent frame."""
    if isinstance(placement, JointPlacement):
        six = placement.as_array()
    else:
        six = np.asarray(placement, dtype=float)
        if six.shape != (6,) or not np.all(np.isfinite(six)):
            raise InvalidArgumentError("placement must be a finite 6-vector")
    return Pose(rpy_matrix(six[3], six[4], six[5]), six[:3])


# 4x4 fast paths used by the derivative engine; no Pose validation along them.

def _placement_matrix(six):
    m = np.eye(4)
    m[:3, :3] = rpy_matrix(six[3], six[4], six[5])
    m[:3, 3] = six[:3]
    return m


_EX = np.array([1.0, 0.0, 0.0])
_EY = np.array([0.0, 1.0, 0.0])
_EZ = np.array([0.0, 0.0, 1.0])


def _placement_derivatives(six):
    """d(placement matrix)/d(entry) for the 6 placement entries.

    With R = Rz.Ry.Rx:  dR/dphi_x = R [e_x]x,  dR/dphi_y = R [Rx^T e_y]x,
    dR/dphi_z = [e_z]x R.  Translation entries are parent-frame directions.
    """
    r = rpy_matrix(six[3], six[4], six[5])
    out = np.zeros((6, 4, 4))
    for i in range(3):
        out[i, i, 3] = 1.0
    out[3, :3, :3] = r @ skew(_EX)
    out[4, :3, :3] = r @ skew(rot_x(six[3]).T @ _EY)
    out[5, :3, :3] = skew(_EZ) @ r
    return out


def _joint_matrix(joint, qi):
    m = np.eye(4)
    if joint.kind == "revolute":
        m[:3, :3] = rodrigues(joint.axis, qi)
    else:
        m[:3, 3] = qi * joint.axis
    return m


def _joint_q_derivative(joint, qi):
    d = np.zeros((4, 4))
    if joint.kind == "revolute":
        d[:3, :3] = skew(joint.axis) @ rodrigues(joint.axis, qi)
    else:
        d[:3, 3] = joint.axis
    return d


def _check_q(chain, q):
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.n_joints,):
        raise InvalidArgumentError(
            f"expected {chain.n_joints} joint values, got shape {q.shape}"
        )
    if not np.all(np.isfinite(q)):
        raise InvalidArgumentError("non-finite joint values")
    return q


def _coerce_dx(chain, delta):
    """Accept None, a raw placement-variation vector, or anything with a .dx."""
    if delta is None:
        return np.zeros(n_placement_params(chain))
    dx = getattr(delta, "dx", delta)
    dx = np.asarray(dx, dtype=float)
    if dx.shape != (n_placement_params(chain),):
        raise InvalidArgumentError(
            f"placement variation must have length {n_placement_params(chain)}"
        )
    return dx


class ChainFactors:
    """Factor decomposition of a chain pose with parameter tagging.

    Global parameter columns 0 .. 6*(N_J+2)-1 address the placement entries of
    base, joints 1..N_J and flange in order; columns 6*(N_J+2)+0..2 address the
    contact offset (z_c, phi_x_c, theta_y_c) when a contact offset is present.
    """

    __slots__ = ("mats", "sixes", "column_of", "joint_at", "joints", "q", "_pre", "_suf")

    def __init__(self, mats, sixes, column_of, joint_at, joints, q):
        self.mats = mats
        self.sixes = sixes
        self.column_of = column_of
        self.joint_at = joint_at
        self.joints = joints
        self.q = q
        self._pre = None
        self._suf = None

    @classmethod
    def build(cls, chain, q, dx=None, contact3=None):
        q = _check_q(chain, q)
        dx = _coerce_dx(chain, dx)
        mats = []
        sixes = []
        column_of = {}  # global column -> (factor index, placement slot)
        joint_at = []  # factor index -> joint index or None
        joints = [j for j, _ in chain.joints]

        # base
        six = chain.base_placement.as_array() + dx[0:6]
        mats.append(_placement_matrix(six))
        sixes.append(six)
        joint_at.append(None)
        for s in range(6):
            column_of[s] = (0, s)
        # joints
        for i, (joint, placement) in enumerate(chain.joints):
            off = 6 * (i + 1)
            six = placement.as_array() + dx[off : off + 6]
            j = len(mats)
            mats.append(_placement_matrix(six))
            sixes.append(six)
            joint_at.append(None)
            for s in range(6):
                column_of[off + s] = (j, s)
            mats.append(_joint_matrix(joint, q[i]))
            sixes.append(None)
            joint_at.append(i)
        # flange
        off = 6 * (chain.n_joints + 1)
        six = chain.flange_placement.as_array() + dx[off : off + 6]
        j = len(mats)
        mats.append(_placement_matrix(six))
        sixes.append(six)
        joint_at.append(None)
        for s in range(6):
            column_of[off + s] = (j, s)
        # contact offset: placement (0, 0, z_c, phi_x_c, theta_y_c, 0)
        if contact3 is not None:
            contact3 = np.asarray(contact3, dtype=float)
            if contact3.shape != (3,) or not np.all(np.isfinite(contact3)):
                raise InvalidArgumentError("contact offset needs (z_c, phi_x, theta_y)")
            six = np.array([0.0, 0.0, contact3[0], contact3[1], contact3[2], 0.0])
            j = len(mats)
            mats.append(_placement_matrix(six))
            sixes.append(six)
            joint_at.append(None)
            k = 6 * (chain.n_joints + 2)
            column_of[k + 0] = (j, 2)
            column_of[k + 1] = (j, 3)
            column_of[k + 2] = (j, 4)
        return cls(mats, sixes, column_of, joint_at, joints, q)

    def _products(self):
        if self._pre is None:
            m = len(self.mats)
            pre = [_EYE4] * (m + 1)
            for j in range(m):
                pre[j + 1] = pre[j] @ self.mats[j]
            suf = [_EYE4] * (m + 1)
            for j in range(m - 1, -1, -1):
                suf[j] = self.mats[j] @ suf[j + 1]
            self._pre, self._suf = pre, suf
        return self._pre, self._suf

    def pose_matrix(self):
        pre, _ = self._products()
        return pre[len(self.mats)]

    def column_derivatives(self, columns):
        """d(pose)/d(column) stacked as (len(columns), 4, 4)."""
        pre, suf = self._products()
        cache = {}
        out = np.zeros((len(columns), 4, 4))
        for n, col in enumerate(columns):
            j, s = self.column_of[col]
            if j not in cache:
                cache[j] = _placement_derivatives(self.sixes[j])
            out[n] = pre[j] @ cache[j][s] @ suf[j + 1]
        return out

    def q_derivatives(self):
        """d(pose)/d(q_i) stacked as (N_J, 4, 4)."""
        pre, suf = self._products()
        nj = len([i for i in self.joint_at if i is not None])
        out = np.zeros((nj, 4, 4))
        for j, i in enumerate(self.joint_at):
            if i is None:
                continue
            d = _joint_q_derivative(self.joints[i], self.q[i])
            out[i] = pre[j] @ d @ suf[j + 1]
        return out


def forward_kinematics(chain, q, delta=None):
    """Pose of the flange frame in the world frame.

    `delta` is an optional placement-variation vector (or a parameter vector
    exposing one through `.dx`) added to the nominal placements.
    """
    f = ChainFactors.build(chain, q, delta)
    return Pose.from_matrix(f.pose_matrix())


def contact_frame_pose(chain, q, delta, contact_params):
    """Pose of the contact frame: flange pose composed with the contact offset.

    `contact_params` supplies (z_c, phi_x_c, theta_y_c), either directly or as
    an object with those attributes.
    """
    c = contact_params
    if hasattr(c, "z_c"):
        c = (c.z_c, c.phix_c, c.thetay_c)
    f = ChainFactors.build(chain, q, delta, contact3=np.asarray(c, dtype=float))
    return Pose.from_matrix(f.pose_matrix())


def chain_link_poses(chain, q, delta=None):
    """World 4x4 of the base placement frame and of each post-motion joint frame."""
    q = _check_q(chain, q)
    dx = _coerce_dx(chain, delta)
    t = _placement_matrix(chain.base_placement.as_array() + dx[0:6])
    out = [t]
    for i, (joint, placement) in enumerate(chain.joints):
        off = 6 * (i + 1)
        t = t @ _placement_matrix(placement.as_array() + dx[off : off + 6])
        t = t @ _joint_matrix(joint, q[i])
        out.append(t)
    return out


def whole_chain_com(chain, q, delta=None):
    """World center of mass of the chain links; requires mass data."""
    if chain.link_masses is None:
        raise InvalidArgumentError(f"chain {chain.name!r} has no mass data")
    poses = chain_link_poses(chain, q, delta)
    masses = np.asarray(chain.link_masses, dtype=float)
    coms = np.asarray(chain.link_coms, dtype=float)
    world = np.zeros(3)
    for m, c, t in zip(masses, coms, poses):
        world += m * (t[:3, :3] @ c + t[:3, 3])
    return world / masses.sum()


def chain_from_dict(d):
    try:
        joints = tuple(
            (
                Joint(j["kind"], np.asarray(j["axis"], dtype=float), tuple(j["limits"])),
                JointPlacement.from_sequence(j["placement"]),
            )
            for j in d["joints"]
        )
        masses = d.get("link_masses")
        coms = d.get("link_coms")
        return KinematicChain(
            name=str(d["name"]),
            base_placement=JointPlacement.from_sequence(d["base_placement"]),
            joints=joints,
            flange_placement=JointPlacement.from_sequence(d["flange_placement"]),
            link_masses=tuple(masses) if masses is not None else None,
            link_coms=tuple(tuple(c) for c in coms) if coms is not None else None,
        )
    except (KeyError, TypeError, IndexError) as e:
        raise InvalidArgumentError(f"malformed chain description: {e}") from e


def chain_to_dict(chain):
    d = {
        "name": chain.name,
        "base_placement": list(chain.base_placement.as_array()),
        "joints": [
            {
                "kind": j.kind,
                "axis": list(j.axis),
                "placement": list(p.as_array()),
                "limits": list(j.limits),
            }
            for j, p in chain.joints
        ],
        "flange_placement": list(chain.flange_placement.as_array()),
    }
    if chain.link_masses is not None:
        d["link_masses"] = list(chain.link_masses)
        d["link_coms"] = [list(c) for c in chain.link_coms]
    return d


def load_chain(path):
    with open(path) as f:
        return chain_from_dict(json.load(f))
