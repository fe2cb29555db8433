"""Rigid-body rotational dynamics and quaternion kinematics.

Conventions
-----------
Quaternions are scalar-last: q = (q1, q2, q3, q4) with vector part
(q1, q2, q3) and scalar part q4.  The direction cosine matrix returned by
:func:`quat_to_dcm` rotates inertial-frame vectors into the body frame
(C_I^B).  Euler angles use the aerospace 3-2-1 (yaw-pitch-roll) sequence
and are expressed in degrees.

The hot integration path is written in plain float arithmetic on purpose:
a 20 s / dt=0.01 propagation has to run in well under 0.1 s and small
numpy arrays carry too much per-call overhead for that.
"""

from __future__ import annotations

import math
import warnings
from typing import NamedTuple

import numpy as np

__all__ = [
    "Quaternion",
    "AngularVelocity",
    "InertiaTensor",
    "Torque",
    "BodyState",
    "EulerAngles",
    "IntegrationDivergedError",
    "dynamics_rhs",
    "kinematics_rhs",
    "integrate_step",
    "quat_to_dcm",
    "quat_multiply",
    "euler_to_quat",
    "quat_to_euler",
    "quaternion_error",
    "kinetic_energy",
    "angular_momentum",
]

UNIT_NORM_TOL = 1e-9
GIMBAL_LOCK_DEG = 89.99


class IntegrationDivergedError(RuntimeError):
    """Raised when the propagated state stops being finite."""


class Quaternion(NamedTuple):
    q1: float
    q2: float
    q3: float
    q4: float

    @staticmethod
    def identity() -> "Quaternion":
        return Quaternion(0.0, 0.0, 0.0, 1.0)

    @staticmethod
    def from_axis_angle(axis, angle_rad: float) -> "Quaternion":
        """Unit quaternion for a rotation of angle_rad about a (unit) axis."""
        ax = np.asarray(axis, dtype=float)
        n = float(np.linalg.norm(ax))
        if n == 0.0:
            raise ValueError("rotation axis must be nonzero")
        ax = ax / n
        s = math.sin(0.5 * angle_rad)
        return Quaternion(ax[0] * s, ax[1] * s, ax[2] * s, math.cos(0.5 * angle_rad))

    def norm(self) -> float:
        return math.sqrt(self.q1 * self.q1 + self.q2 * self.q2
                         + self.q3 * self.q3 + self.q4 * self.q4)

    def normalized(self) -> "Quaternion":
        n = self.norm()
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("cannot normalize a zero or non-finite quaternion")
        return Quaternion(self.q1 / n, self.q2 / n, self.q3 / n, self.q4 / n)

    def conjugate(self) -> "Quaternion":
        return Quaternion(-self.q1, -self.q2, -self.q3, self.q4)

    def vector(self) -> tuple[float, float, float]:
        return (self.q1, self.q2, self.q3)


class AngularVelocity(NamedTuple):
    """Body-frame angular velocity, rad/s."""
    w1: float
    w2: float
    w3: float

    @staticmethod
    def zero() -> "AngularVelocity":
        return AngularVelocity(0.0, 0.0, 0.0)


class Torque(NamedTuple):
    """Body-frame moment, N*m."""
    m1: float
    m2: float
    m3: float

    @staticmethod
    def zero() -> "Torque":
        return Torque(0.0, 0.0, 0.0)


class InertiaTensor(NamedTuple):
    """Principal moments of inertia, kg*m^2."""
    i1: float
    i2: float
    i3: float

    def validated(self) -> "InertiaTensor":
        if not all(math.isfinite(i) and i > 0.0 for i in self):
            raise ValueError(f"principal moments must be positive and finite, got {tuple(self)}")
        i1, i2, i3 = self
        if i1 + i2 < i3 or i2 + i3 < i1 or i1 + i3 < i2:
            warnings.warn(
                f"inertia {tuple(self)} violates the triangle inequality; "
                "not realizable by a rigid mass distribution",
                stacklevel=2,
            )
        return self


class BodyState(NamedTuple):
    q: Quaternion
    w: AngularVelocity


class EulerAngles(NamedTuple):
    """3-2-1 Euler angles in degrees: roll phi, pitch theta, yaw psi."""
    phi: float
    theta: float
    psi: float


def dynamics_rhs(state: BodyState, inertia: InertiaTensor,
                 mc: Torque, md: Torque) -> AngularVelocity:
    """Angular acceleration of a rigid body about its principal axes."""
    w1, w2, w3 = state.w
    i1, i2, i3 = inertia
    return AngularVelocity(
        (mc.m1 + md.m1 - (i3 - i2) * w2 * w3) / i1,
        (mc.m2 + md.m2 - (i1 - i3) * w1 * w3) / i2,
        (mc.m3 + md.m3 - (i2 - i1) * w2 * w1) / i3,
    )


def kinematics_rhs(q: Quaternion, w: AngularVelocity) -> tuple[float, float, float, float]:
    """Quaternion rate q_dot = 0.5 * Omega(w) * q."""
    q1, q2, q3, q4 = q
    w1, w2, w3 = w
    return (
        0.5 * (w3 * q2 - w2 * q3 + w1 * q4),
        0.5 * (-w3 * q1 + w1 * q3 + w2 * q4),
        0.5 * (w2 * q1 - w1 * q2 + w3 * q4),
        0.5 * (-w1 * q1 - w2 * q2 - w3 * q3),
    )


def integrate_step(state: BodyState, inertia: InertiaTensor,
                   mc: Torque, md: Torque, dt: float) -> BodyState:
    """One classical RK4 step of the coupled rotational dynamics + kinematics.

    Torques are held constant over the step.  The quaternion is renormalized
    afterwards so norm drift never accumulates.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    i1, i2, i3 = inertia
    m1 = mc.m1 + md.m1
    m2 = mc.m2 + md.m2
    m3 = mc.m3 + md.m3

    q1, q2, q3, q4 = state.q
    w1, w2, w3 = state.w

    def rhs(q1, q2, q3, q4, w1, w2, w3):
        return (
            0.5 * (w3 * q2 - w2 * q3 + w1 * q4),
            0.5 * (-w3 * q1 + w1 * q3 + w2 * q4),
            0.5 * (w2 * q1 - w1 * q2 + w3 * q4),
            0.5 * (-w1 * q1 - w2 * q2 - w3 * q3),
            (m1 - (i3 - i2) * w2 * w3) / i1,
            (m2 - (i1 - i3) * w1 * w3) / i2,
            (m3 - (i2 - i1) * w2 * w1) / i3,
        )

    k1 = rhs(q1, q2, q3, q4, w1, w2, w3)
    h = 0.5 * dt
    k2 = rhs(q1 + h * k1[0], q2 + h * k1[1], q3 + h * k1[2], q4 + h * k1[3],
             w1 + h * k1[4], w2 + h * k1[5], w3 + h * k1[6])
    k3 = rhs(q1 + h * k2[0], q2 + h * k2[1], q3 + h * k2[2], q4 + h * k2[3],
             w1 + h * k2[4], w2 + h * k2[5], w3 + h * k2[6])
    k4 = rhs(q1 + dt * k3[0], q2 + dt * k3[1], q3 + dt * k3[2], q4 + dt * k3[3],
             w1 + dt * k3[4], w2 + dt * k3[5], w3 + dt * k3[6])

    s = dt / 6.0
    q1 += s * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
    q2 += s * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
    q3 += s * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
    q4 += s * (k1[3] + 2.0 * k2[3] + 2.0 * k3[3] + k4[3])
    w1 += s * (k1[4] + 2.0 * k2[4] + 2.0 * k3[4] + k4[4])
    w2 += s * (k1[5] + 2.0 * k2[5] + 2.0 * k3[5] + k4[5])
    w3 += s * (k1[6] + 2.0 * k2[6] + 2.0 * k3[6] + k4[6])

    n = math.sqrt(q1 * q1 + q2 * q2 + q3 * q3 + q4 * q4)
    if not (math.isfinite(n) and n > 0.0
            and math.isfinite(w1) and math.isfinite(w2) and math.isfinite(w3)):
        raise IntegrationDivergedError("state became non-finite during integration")
    return BodyState(Quaternion(q1 / n, q2 / n, q3 / n, q4 / n),
                     AngularVelocity(w1, w2, w3))


def quat_to_dcm(q: Quaternion) -> np.ndarray:
    """Direction cosine matrix C_I^B: rotates inertial vectors into the body frame."""
    q1, q2, q3, q4 = q
    return np.array([
        [1.0 - 2.0 * (q2 * q2 + q3 * q3), 2.0 * (q1 * q2 + q3 * q4), 2.0 * (q1 * q3 - q2 * q4)],
        [2.0 * (q1 * q2 - q3 * q4), 1.0 - 2.0 * (q1 * q1 + q3 * q3), 2.0 * (q2 * q3 + q1 * q4)],
        [2.0 * (q1 * q3 + q2 * q4), 2.0 * (q2 * q3 - q1 * q4), 1.0 - 2.0 * (q1 * q1 + q2 * q2)],
    ])


def quat_multiply(p: Quaternion, q: Quaternion) -> Quaternion:
    """Frame-rotation composition: apply q first, then p.

    Satisfies quat_to_dcm(quat_multiply(p, q)) == quat_to_dcm(p) @ quat_to_dcm(q).
    """
    p1, p2, p3, p4 = p
    q1, q2, q3, q4 = q
    return Quaternion(
        q4 * p1 + p4 * q1 + (q2 * p3 - q3 * p2),
        q4 * p2 + p4 * q2 + (q3 * p1 - q1 * p3),
        q4 * p3 + p4 * q3 + (q1 * p2 - q2 * p1),
        p4 * q4 - (p1 * q1 + p2 * q2 + p3 * q3),
    )


def _axis_quat(axis_index: int, angle_rad: float) -> Quaternion:
    s = math.sin(0.5 * angle_rad)
    c = math.cos(0.5 * angle_rad)
    v = [0.0, 0.0, 0.0]
    v[axis_index] = s
    return Quaternion(v[0], v[1], v[2], c)


def euler_to_quat(e: EulerAngles) -> Quaternion:
    """Quaternion of the 3-2-1 rotation C = Rx(phi) Ry(theta) Rz(psi)."""
    phi = math.radians(e.phi)
    theta = math.radians(e.theta)
    psi = math.radians(e.psi)
    q = quat_multiply(_axis_quat(0, phi),
                      quat_multiply(_axis_quat(1, theta), _axis_quat(2, psi)))
    return q.normalized()


def quat_to_euler(q: Quaternion) -> EulerAngles:
    """3-2-1 Euler angles of a unit quaternion.

    Near pitch = +/-90 deg the sequence is singular; within 0.01 deg of the
    singularity a warning is emitted and yaw is conventionally set to zero
    (the roll angle absorbs the full in-plane rotation).
    """
    c = quat_to_dcm(q)
    s_theta = -c[0, 2]
    s_theta = min(1.0, max(-1.0, s_theta))
    theta = math.asin(s_theta)
    if abs(math.degrees(theta)) > GIMBAL_LOCK_DEG:
        warnings.warn("pitch within 0.01 deg of gimbal lock; yaw set to zero",
                      stacklevel=2)
        psi = 0.0
        # at theta = +/-90 only phi -/+ psi is observable; fold it all into phi
        phi = math.atan2(c[1, 0], c[1, 1]) if theta > 0 else math.atan2(-c[1, 0], c[1, 1])
        return EulerAngles(math.degrees(phi), math.degrees(theta), math.degrees(psi))
    phi = math.atan2(c[1, 2], c[2, 2])
    psi = math.atan2(c[0, 1], c[0, 0])
    return EulerAngles(math.degrees(phi), math.degrees(theta), math.degrees(psi))


def quaternion_error(q: Quaternion, qc: Quaternion) -> Quaternion:
    """Error quaternion: rotation from the commanded attitude qc to the current q.

    Coincident attitudes give the identity (0, 0, 0, 1); with qc = identity the
    error is q itself.
    """
    return quat_multiply(q, qc.conjugate())


def kinetic_energy(state: BodyState, inertia: InertiaTensor) -> float:
    """Rotational kinetic energy 0.5 * w^T I w (J)."""
    w1, w2, w3 = state.w
    return 0.5 * (inertia.i1 * w1 * w1 + inertia.i2 * w2 * w2 + inertia.i3 * w3 * w3)


def angular_momentum(state: BodyState, inertia: InertiaTensor) -> float:
    """Magnitude of the body angular momentum |I w| (N*m*s)."""
    w1, w2, w3 = state.w
    return math.sqrt((inertia.i1 * w1) ** 2 + (inertia.i2 * w2) ** 2 + (inertia.i3 * w3) ** 2)
