"""Forward kinematics, Jacobians, and mechanical bookkeeping helpers.

Everything here is read-only with respect to the state and runs at Python
speed; the hot per-step code paths live in ``_kernels``.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .model import RobotModel


def quat_to_rot(q: np.ndarray) -> np.ndarray:
    R = np.empty((3, 3))
    K._quat_to_rot(np.asarray(q, dtype=float), R)
    return R


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def quat_mul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def fk(model: RobotModel, base_pos, base_quat, u, q):
    """World rotations/positions and own-frame twists for all 13 bodies."""
    a = model.arrays()
    R_w = np.empty((K.NB, 3, 3))
    p_w = np.empty((K.NB, 3))
    vel = np.empty((K.NB, 6))
    K.fk_kernel(
        a.parent, a.joint_axis, a.joint_origin,
        np.asarray(base_pos, float), np.asarray(base_quat, float),
        np.asarray(u, float), np.asarray(q, float),
        R_w, p_w, vel,
    )
    return R_w, p_w, vel


def body_index(model: RobotModel, name: str) -> int:
    if name == model.base.name:
        return 0
    for i, link in enumerate(model.links):
        if link.name == name:
            return i + 1
    raise KeyError(f"unknown body {name!r}")


def _ancestor_joints(model: RobotModel, body: int) -> list[int]:
    a = model.arrays()
    out = []
    b = body
    while a.parent[b] != -1:
        out.append(b - 1)
        b = a.parent[b]
    return out[::-1]


def point_jacobian(model: RobotModel, R_w, p_w, body: int, point_local) -> np.ndarray:
    """3x18 Jacobian of the world velocity of a body-fixed point.

    Columns follow the generalized-velocity layout [omega_base, v_base, qdot],
    with the base twist in base coordinates.
    """
    a = model.arrays()
    pt_w = p_w[body] + R_w[body] @ np.asarray(point_local, float)
    J = np.zeros((3, K.NV))
    r = pt_w - p_w[0]
    J[:, 0:3] = -_skew(r) @ R_w[0]
    J[:, 3:6] = R_w[0]
    for j in _ancestor_joints(model, body):
        axis_w = R_w[j + 1] @ a.joint_axis[j]
        J[:, 6 + j] = np.cross(axis_w, pt_w - p_w[j + 1])
    return J


def body_jacobian(model: RobotModel, R_w, p_w, body: int) -> np.ndarray:
    """6x18 world-frame Jacobian at the body origin, angular rows first.

    Its transpose maps a world (torque, force) wrench applied at the body
    origin to generalized forces.
    """
    a = model.arrays()
    J = np.zeros((6, K.NV))
    J[0:3, 0:3] = R_w[0]
    J[3:6, :] = point_jacobian(model, R_w, p_w, body, np.zeros(3))
    for j in _ancestor_joints(model, body):
        J[0:3, 6 + j] = R_w[j + 1] @ a.joint_axis[j]
    return J


def _skew(v) -> np.ndarray:
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def total_com(model: RobotModel, R_w, p_w) -> tuple[float, np.ndarray]:
    a = model.arrays()
    m_total = float(np.sum(a.mass))
    com = np.zeros(3)
    for b in range(K.NB):
        com += a.mass[b] * (p_w[b] + R_w[b] @ a.com[b])
    return m_total, com / m_total


def linear_momentum(model: RobotModel, R_w, vel) -> np.ndarray:
    """Total linear momentum in world coordinates."""
    a = model.arrays()
    p = np.zeros(3)
    for b in range(K.NB):
        v_com = vel[b, 3:6] + np.cross(vel[b, 0:3], a.com[b])
        p += a.mass[b] * (R_w[b] @ v_com)
    return p


def potential_energy(model: RobotModel, R_w, p_w, gravity: float = 9.81) -> float:
    a = model.arrays()
    e = 0.0
    for b in range(K.NB):
        z_com = p_w[b, 2] + (R_w[b] @ a.com[b])[2]
        e += a.mass[b] * gravity * z_com
    return e


def advance_configuration(base_pos, base_quat, q, u, eps: float):
    """Move the configuration along the generalized velocity by `eps` seconds.

    Used for directional finite differences of configuration-dependent
    quantities (e.g. dM/dt along a trajectory).
    """
    base_pos = np.asarray(base_pos, float).copy()
    base_quat = np.asarray(base_quat, float).copy()
    q = np.asarray(q, float).copy()
    R = quat_to_rot(base_quat)
    base_pos += R @ u[3:6] * eps
    K._quat_integrate(base_quat, np.asarray(u[0:3], float), eps)
    q += u[6:] * eps
    return base_pos, base_quat, q
