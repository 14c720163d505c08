import math

import numpy as np
import pytest

from planecal import (
    InvalidArgumentError,
    chain_from_dict,
    chain_to_dict,
    contact_frame_pose,
    forward_kinematics,
    load_chain,
    placement_to_pose,
    whole_chain_com,
)
from planecal.kinematics import (
    JointPlacement,
    rodrigues,
    rot_x,
    rot_y,
    rot_z,
    rpy_matrix,
    wrap_angle,
)

from conftest import random_postures


def test_elementary_rotations_against_hand_values():
    a = 0.3
    c, s = math.cos(a), math.sin(a)
    np.testing.assert_allclose(rot_x(a), [[1, 0, 0], [0, c, -s], [0, s, c]], atol=1e-15)
    np.testing.assert_allclose(rot_y(a), [[c, 0, s], [0, 1, 0], [-s, 0, c]], atol=1e-15)
    np.testing.assert_allclose(rot_z(a), [[c, -s, 0], [s, c, 0], [0, 0, 1]], atol=1e-15)


def test_rpy_composition_order():
    # fixed-axis convention: first x, then y, then z
    r = rpy_matrix(0.1, -0.2, 0.3)
    np.testing.assert_allclose(r, rot_z(0.3) @ rot_y(-0.2) @ rot_x(0.1), atol=1e-15)


def test_rodrigues_matches_elementary_axes():
    for axis, ref in (
        ([1, 0, 0], rot_x),
        ([0, 1, 0], rot_y),
        ([0, 0, 1], rot_z),
    ):
        for a in (-1.2, 0.0, 0.4, 2.9):
            np.testing.assert_allclose(
                rodrigues(np.array(axis, dtype=float), a), ref(a), atol=1e-14
            )


def test_rodrigues_is_a_rotation():
    rng = np.random.default_rng(3)
    for _ in range(50):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        r = rodrigues(axis, rng.uniform(-np.pi, np.pi))
        np.testing.assert_allclose(r @ r.T, np.eye(3), atol=1e-13)
        assert np.linalg.det(r) == pytest.approx(1.0, abs=1e-13)


def test_wrap_angle_period():
    assert wrap_angle(2 * np.pi + 0.1) == pytest.approx(0.1)
    assert wrap_angle(-2 * np.pi - 0.1) == pytest.approx(-0.1)
    assert wrap_angle(0.0) == 0.0
    rng = np.random.default_rng(1)
    for a in rng.uniform(-30, 30, 100):
        w = wrap_angle(a)
        assert -np.pi <= w <= np.pi
        assert math.cos(w - a) == pytest.approx(1.0, abs=1e-12)


def _placement_matrix_oracle(six):
    t = np.eye(4)
    t[:3, :3] = rot_z(six[5]) @ rot_y(six[4]) @ rot_x(six[3])
    t[:3, 3] = six[:3]
    return t


def test_forward_kinematics_against_explicit_products(chain_6r):
    # rebuild the pose from raw matrix products, no shared code path
    rng = np.random.default_rng(7)
    for _ in range(10):
        q = rng.uniform(chain_6r.lower_limits(), chain_6r.upper_limits())
        t = _placement_matrix_oracle(chain_6r.base_placement.as_array())
        for (joint, placement), qi in zip(chain_6r.joints, q):
            t = t @ _placement_matrix_oracle(placement.as_array())
            rj = np.eye(4)
            rj[:3, :3] = rodrigues(joint.axis, qi)
            t = t @ rj
        t = t @ _placement_matrix_oracle(chain_6r.flange_placement.as_array())
        pose = forward_kinematics(chain_6r, q)
        np.testing.assert_allclose(pose.matrix(), t, atol=1e-12)


def test_contact_frame_extends_flange(chain_6r):
    q = np.zeros(chain_6r.n_joints)
    flange = forward_kinematics(chain_6r, q).matrix()
    contact = contact_frame_pose(chain_6r, q, None, np.array([0.07, 0.0, 0.0]))
    # pure z offset in the flange frame
    np.testing.assert_allclose(
        contact.matrix()[:3, 3], flange[:3, 3] + flange[:3, 2] * 0.07, atol=1e-14
    )
    np.testing.assert_allclose(contact.matrix()[:3, :3], flange[:3, :3], atol=1e-14)


def test_chain_dict_round_trip(chain_6r):
    clone = chain_from_dict(chain_to_dict(chain_6r))
    q = random_postures(chain_6r, 1, 5)[0]
    np.testing.assert_array_equal(
        forward_kinematics(chain_6r, q).matrix(), forward_kinematics(clone, q).matrix()
    )
    assert clone.name == chain_6r.name


def test_chain_from_dict_rejects_malformed():
    with pytest.raises(InvalidArgumentError):
        chain_from_dict({"name": "x"})
    with pytest.raises(InvalidArgumentError):
        chain_from_dict(
            {
                "name": "x",
                "base_placement": [0, 0, 0, 0, 0, 0],
                "joints": [{"kind": "revolute"}],
                "flange_placement": [0, 0, 0, 0, 0, 0],
            }
        )


def test_forward_kinematics_input_validation(chain_6r):
    with pytest.raises(InvalidArgumentError):
        forward_kinematics(chain_6r, np.zeros(chain_6r.n_joints - 1))
    q = np.zeros(chain_6r.n_joints)
    q[0] = np.nan
    with pytest.raises(InvalidArgumentError):
        forward_kinematics(chain_6r, q)


def test_placement_to_pose_matches_matrix_oracle():
    six = [0.1, -0.2, 0.3, 0.4, -0.5, 0.6]
    pose = placement_to_pose(JointPlacement.from_sequence(six))
    np.testing.assert_allclose(pose.matrix(), _placement_matrix_oracle(six), atol=1e-14)


def test_com_requires_masses(chain_6r):
    # fixture carries no inertial data; com queries must refuse, not guess
    with pytest.raises(InvalidArgumentError):
        whole_chain_com(chain_6r, np.zeros(chain_6r.n_joints))


def test_load_chain_15j(chain_15j):
    assert chain_15j.n_joints == 15
    q = np.zeros(15)
    pose = forward_kinematics(chain_15j, q)
    assert np.all(np.isfinite(pose.matrix()))
