"""Planar two-link leg kinematics and the quadruped-to-biped transition.

Angle conventions (all radians, counter-clockwise positive, sagittal plane):

* The hip frame is attached to the torso: +x points from the hip joint
  towards the shoulder, +y is dorsal.  World pitch of the torso is the
  angle of that +x axis above the horizontal.
* Hind leg zero pose is straight down.  The thigh points along
  ``hip - pi/2`` and the shank along ``hip + knee - pi/2``; negative knee
  angles fold the shank behind the thigh, which is how the hind legs bend
  in the bipedal stance.
* The front limb is a single rigid link.  Its world direction is
  ``pitch - front_hip - pi/2``, so a positive front-hip increment swings
  the hand backwards (towards the tail).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from arrl.errors import DegenerateTarget, Infeasible, OutOfDomain, Unreachable

# Joint channel layout of the 8-dim joint vector and action.
JOINT_NAMES = (
    "abd_front_left",
    "abd_front_right",
    "hip_front_left",
    "hip_front_right",
    "hip_hind_left",
    "hip_hind_right",
    "knee_hind_left",
    "knee_hind_right",
)
ABD = (0, 1)
FRONT_HIP = (2, 3)
HIND_HIP = (4, 5)
HIND_KNEE = (6, 7)
FRONT_CHANNELS = (0, 1, 2, 3)

_IK_TOL = 1e-12


class LegGeometry(BaseModel):
    """Robot dimensions used by kinematics, the transition and the simulator."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    torso_len_a: float = Field(0.38, gt=0)
    thigh_len_b: float = Field(0.209, gt=0)
    shank_len_c: float = Field(0.195, gt=0)
    stick_angle_gamma: float = Field(0.6, gt=0, lt=math.pi / 2)
    com_frac_k: float = Field(0.5, gt=0, le=1)
    # Toe-to-stick-tip contact distance; the support span of the equivalent foot.
    stick_len_l: float = Field(0.20, gt=0)
    front_limb_len: float = Field(0.40, gt=0)
    hip_limits: tuple[float, float] = (-2.6, 2.6)
    knee_limits: tuple[float, float] = (-2.6, 2.6)
    front_hip_limits: tuple[float, float] = (-2.6, 2.6)
    abd_limits: tuple[float, float] = (-0.8, 0.8)
    knee_sign: int = -1

    @model_validator(mode="after")
    def _check(self) -> "LegGeometry":
        for name in ("hip_limits", "knee_limits", "front_hip_limits", "abd_limits"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValueError(f"{name} must satisfy lo < hi")
        if self.knee_sign not in (-1, 1):
            raise ValueError("knee_sign must be +1 or -1")
        return self

    def joint_limits(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-channel (lo, hi) arrays in :data:`JOINT_NAMES` order."""
        pairs = [self.abd_limits] * 2 + [self.front_hip_limits] * 2
        pairs += [self.hip_limits] * 2 + [self.knee_limits] * 2
        arr = np.array(pairs, dtype=float)
        return arr[:, 0].copy(), arr[:, 1].copy()


class JointAngles(NamedTuple):
    hip_alpha1: float
    knee_alpha2: float


class FootTarget(NamedTuple):
    x: float
    y: float


def leg_fk(angles: JointAngles, geom: LegGeometry) -> FootTarget:
    """Foot position in the hip frame for the given hip/knee angles."""
    a1, a2 = angles
    b, c = geom.thigh_len_b, geom.shank_len_c
    x = b * math.sin(a1) + c * math.sin(a1 + a2)
    y = -b * math.cos(a1) - c * math.cos(a1 + a2)
    return FootTarget(x, y)


def knee_point(angles: JointAngles, geom: LegGeometry) -> tuple[float, float]:
    a1 = angles[0]
    return (geom.thigh_len_b * math.sin(a1), -geom.thigh_len_b * math.cos(a1))


def leg_ik(target: FootTarget, geom: LegGeometry, knee_sign: int | None = None) -> JointAngles:
    """Closed-form inverse kinematics of the hind leg.

    Raises:
        DegenerateTarget: target at the hip origin.
        Unreachable: target outside the annulus ``|b-c| <= d <= b+c``.
    """
    x, y = float(target[0]), float(target[1])
    b, c = geom.thigh_len_b, geom.shank_len_c
    sign = geom.knee_sign if knee_sign is None else knee_sign
    d2 = x * x + y * y
    if d2 == 0.0:
        raise DegenerateTarget("foot target at the hip joint")
    d = math.sqrt(d2)
    if d > b + c + _IK_TOL or d < abs(b - c) - _IK_TOL:
        raise Unreachable(f"target distance {d:.6f} outside [{abs(b - c):.6f}, {b + c:.6f}]")
    cos_k = (d2 - b * b - c * c) / (2.0 * b * c)
    cos_k = min(1.0, max(-1.0, cos_k))
    knee = sign * math.acos(cos_k)
    # foot = R(hip) @ v with v the foot position at zero hip angle
    vx, vy = c * math.sin(knee), -b - c * math.cos(knee)
    hip = math.atan2(y, x) - math.atan2(vy, vx)
    hip = math.atan2(math.sin(hip), math.cos(hip))
    return JointAngles(hip, knee)


def standing_arccos_arg(knee_alpha2: float, geom: LegGeometry) -> float:
    a, b, c = geom.torso_len_a, geom.thigh_len_b, geom.shank_len_c
    g, k, l = geom.stick_angle_gamma, geom.com_frac_k, geom.stick_len_l
    return (l / 2 - b * math.cos(knee_alpha2 - g) - c * math.cos(g)) / (a * k)


def standing_hip_angle(knee_alpha2: float, geom: LegGeometry) -> float:
    """Hip angle that keeps the CoM above the centre of the toe-stick footprint.

    The torso then makes ``arccos(arg)`` with the ground, where ``arg`` is
    the horizontal hip-to-CoM offset divided by ``a*k``.
    """
    arg = standing_arccos_arg(knee_alpha2, geom)
    if abs(arg) > 1.0 + 1e-12:
        raise OutOfDomain(f"knee angle {knee_alpha2:.4f} gives arccos argument {arg:.4f}")
    arg = min(1.0, max(-1.0, arg))
    return -math.pi / 2 - knee_alpha2 + geom.stick_angle_gamma - math.acos(arg)


def standing_pitch(knee_alpha2: float, geom: LegGeometry) -> float:
    """Torso pitch of the balanced stance for ``knee_alpha2``."""
    arg = standing_arccos_arg(knee_alpha2, geom)
    if abs(arg) > 1.0 + 1e-12:
        raise OutOfDomain(f"knee angle {knee_alpha2:.4f} gives arccos argument {arg:.4f}")
    return math.acos(min(1.0, max(-1.0, arg)))


def standing_knee_interval(geom: LegGeometry) -> tuple[float, float]:
    """Knee angles (on the folded branch) for which the balanced stance exists."""
    a, b, c = geom.torso_len_a, geom.thigh_len_b, geom.shank_len_c
    g, k, l = geom.stick_angle_gamma, geom.com_frac_k, geom.stick_len_l
    base = l / 2 - c * math.cos(g)
    # arg in [-1, 1]  <=>  cos(knee - g) in [(base - ak)/b, (base + ak)/b]
    lo_c = max(-1.0, (base - a * k) / b)
    hi_c = min(1.0, (base + a * k) / b)
    if lo_c > hi_c:
        raise Infeasible("no knee angle balances the torso over the footprint")
    # knee = g - u with u in [0, pi]; cos is decreasing there
    knee_lo = g - math.acos(lo_c)
    knee_hi = g - math.acos(hi_c)
    lim_lo, lim_hi = geom.knee_limits
    lo, hi = max(knee_lo, lim_lo), min(knee_hi, lim_hi)
    if lo > hi:
        raise Infeasible("balanced stance lies outside the knee limits")
    return lo, hi


def upright_knee(geom: LegGeometry) -> float:
    """Knee angle at which the balanced torso is exactly vertical."""
    b, c, g, l = geom.thigh_len_b, geom.shank_len_c, geom.stick_angle_gamma, geom.stick_len_l
    ratio = (l / 2 - c * math.cos(g)) / b
    if abs(ratio) > 1.0:
        raise OutOfDomain("geometry admits no vertical-torso stance")
    return g - math.acos(ratio)


# --------------------------------------------------------------------------
# Whole-robot planar poses


@dataclass
class Keyframe:
    """One static configuration of the transition, with toe 0 at the origin."""

    phase: str
    pitch: float
    hip: tuple[float, float]
    joints: np.ndarray
    contacts_x: list[float]
    com: tuple[float, float]
    points: dict[str, tuple[float, float]] = field(default_factory=dict)
    # shoulder-to-hand distance; below front_limb_len while the front knee flexes
    front_reach: float = 0.0

    def support_interval(self) -> tuple[float, float]:
        return min(self.contacts_x), max(self.contacts_x)

    def statically_stable(self, tol: float = 1e-9) -> bool:
        lo, hi = self.support_interval()
        return lo - tol <= self.com[0] <= hi + tol


def _pose_from_shank(
    shank_angle: float, knee: float, pitch: float, geom: LegGeometry
) -> tuple[tuple[float, float], tuple[float, float], float]:
    """Knee/hip positions and hip joint angle for a toe planted at the origin.

    ``shank_angle`` is the toe-to-knee direction above the ground.
    """
    b, c = geom.thigh_len_b, geom.shank_len_c
    kp = (c * math.cos(shank_angle), c * math.sin(shank_angle))
    thigh_dir = shank_angle - knee  # knee -> hip
    hip = (kp[0] + b * math.cos(thigh_dir), kp[1] + b * math.sin(thigh_dir))
    hip_angle = -math.pi / 2 - knee + shank_angle - pitch
    return kp, hip, hip_angle


def _keyframe(
    phase: str,
    shank_angle: float,
    knee: float,
    pitch: float,
    arm_dir: float,
    hand_on_ground: bool,
    geom: LegGeometry,
    reach: float | None = None,
) -> Keyframe:
    a, k = geom.torso_len_a, geom.com_frac_k
    la = geom.front_limb_len if reach is None else reach
    g, l = geom.stick_angle_gamma, geom.stick_len_l
    kp, hip, hip_angle = _pose_from_shank(shank_angle, knee, pitch, geom)
    shoulder = (hip[0] + a * math.cos(pitch), hip[1] + a * math.sin(pitch))
    hand = (shoulder[0] + la * math.cos(arm_dir), shoulder[1] + la * math.sin(arm_dir))
    com = (hip[0] + a * k * math.cos(pitch), hip[1] + a * k * math.sin(pitch))
    stick_dir = shank_angle - g
    stick = (l * math.cos(stick_dir), l * math.sin(stick_dir))
    contacts = [0.0]
    if abs(stick[1]) < 1e-9:
        contacts.append(stick[0])
    if hand_on_ground:
        contacts.append(hand[0])
    front_hip = pitch - arm_dir - math.pi / 2
    joints = np.array([0.0, 0.0, front_hip, front_hip, hip_angle, hip_angle, knee, knee])
    pts = {"toe": (0.0, 0.0), "knee": kp, "hip": hip, "shoulder": shoulder, "hand": hand, "stick": stick}
    return Keyframe(phase, pitch, hip, joints, contacts, com, pts, la)


def _hand_on_ground_dir(shoulder_y: float, la: float, forward: bool) -> float:
    if shoulder_y > la + 1e-12 or shoulder_y < 0:
        raise Infeasible(f"front limb cannot reach the ground from height {shoulder_y:.3f}")
    tilt = math.acos(min(1.0, shoulder_y / la))
    return -math.pi / 2 + tilt if forward else -math.pi / 2 - tilt


def _shank_angle_for_hip_height(knee: float, height: float, geom: LegGeometry) -> float:
    b, c = geom.thigh_len_b, geom.shank_len_c
    # c sin(s) + b sin(s - knee) = height  ->  R sin(s + phi) = height
    p = c + b * math.cos(knee)
    q = -b * math.sin(knee)
    r = math.hypot(p, q)
    if height > r:
        raise Infeasible("quadruped hip height unreachable")
    phi = math.atan2(q, p)
    return math.pi - math.asin(height / r) - phi


@dataclass
class TransitionPlan:
    """Knee angles and heights that parameterise the four transition phases."""

    quad_height: float = 0.30
    quad_knee: float = -1.0
    bend_knee: float = -2.4
    stand_knee: float | None = None  # default: vertical torso
    front_rest: float = 1.27


def _plan_phases(geom: LegGeometry, plan: TransitionPlan) -> list[tuple]:
    """Per-phase parameters (shank, knee, pitch, arm_dir, hand_on_ground)."""
    g, a, la = geom.stick_angle_gamma, geom.torso_len_a, geom.front_limb_len
    stand_knee = upright_knee(geom) if plan.stand_knee is None else plan.stand_knee
    try:
        lo, hi = standing_knee_interval(geom)
        for kn in (plan.bend_knee, stand_knee):
            if not lo - 1e-12 <= kn <= hi + 1e-12:
                raise Infeasible(f"knee {kn:.3f} outside balanced interval [{lo:.3f}, {hi:.3f}]")
        pitch2 = standing_pitch(plan.bend_knee, geom)
        pitch4 = standing_pitch(stand_knee, geom)
    except OutOfDomain as exc:
        raise Infeasible(str(exc)) from exc

    shank1 = _shank_angle_for_hip_height(plan.quad_knee, plan.quad_height, geom)
    if shank1 < g:
        raise Infeasible("quadruped stance would press the stick into the ground")
    arm1 = _hand_on_ground_dir(plan.quad_height, la, forward=True)

    _, hip2, _ = _pose_from_shank(g, plan.bend_knee, pitch2, geom)
    sh2_y = hip2[1] + a * math.sin(pitch2)
    arm2 = _hand_on_ground_dir(sh2_y, la, forward=True)
    arm3 = _hand_on_ground_dir(sh2_y, la, forward=False)
    arm4 = pitch4 - plan.front_rest - math.pi / 2
    return [
        ("quadruped", shank1, plan.quad_knee, 0.0, arm1, True),
        ("hind_bend", g, plan.bend_knee, pitch2, arm2, True),
        ("hands_in", g, plan.bend_knee, pitch2, arm3, True),
        ("standing", g, stand_knee, pitch4, arm4, False),
    ]


def transition_sequence(
    geom: LegGeometry, n_keyframes: int = 4, plan: TransitionPlan | None = None
) -> list[Keyframe]:
    """Static keyframes from the quadruped stance to the bipedal stance.

    The four anchor phases are: quadruped stance, hind legs bent until the
    sticks touch, front hands walked back towards the hind feet, and the
    stand-up.  Extra keyframes are spread over the three segments.  Between
    the last two anchors the hind joints follow :func:`standing_hip_angle`
    so the CoM stays over the footprint centre.

    Raises:
        ValueError: ``n_keyframes < 4``.
        Infeasible: a keyframe breaks a joint limit, loses reach of the
            ground, or puts the CoM outside the support interval.
    """
    if n_keyframes < 4:
        raise ValueError("n_keyframes must be >= 4")
    plan = plan or TransitionPlan()
    anchors = _plan_phases(geom, plan)
    extra = n_keyframes - 4
    per_seg = [extra // 3 + (1 if i < extra % 3 else 0) for i in range(3)]

    frames = [_keyframe(*anchors[0], geom)]
    for seg, n_mid in enumerate(per_seg):
        p0, p1 = anchors[seg], anchors[seg + 1]
        for j in range(1, n_mid + 1):
            s = j / (n_mid + 1)
            frames.append(_interpolate(seg, s, p0, p1, geom))
        frames.append(_keyframe(*p1, geom))

    lo, hi = geom.joint_limits()
    for fr in frames:
        if np.any(fr.joints < lo - 1e-12) or np.any(fr.joints > hi + 1e-12):
            raise Infeasible(f"{fr.phase}: joint limit violated")
        if not fr.statically_stable():
            raise Infeasible(f"{fr.phase}: CoM outside the support interval")
    return frames


def _interpolate(seg: int, s: float, p0: tuple, p1: tuple, geom: LegGeometry) -> Keyframe:
    a, la = geom.torso_len_a, geom.front_limb_len
    _, shank0, knee0, pitch0, arm0, _ = p0
    _, shank1, knee1, pitch1, arm1, _ = p1
    if seg == 0:
        # hind legs fold while the hands stay planted
        shank = shank0 + s * (shank1 - shank0)
        knee = knee0 + s * (knee1 - knee0)
        pitch = pitch0 + s * (pitch1 - pitch0)
        _, hip, _ = _pose_from_shank(shank, knee, pitch, geom)
        arm = _hand_on_ground_dir(hip[1] + a * math.sin(pitch), la, forward=True)
        return _keyframe("hind_bend", shank, knee, pitch, arm, True, geom)
    if seg == 1:
        # hands slide back along the ground; the front knee shortens the reach
        _, hip, _ = _pose_from_shank(shank0, knee0, pitch0, geom)
        sh = (hip[0] + a * math.cos(pitch0), hip[1] + a * math.sin(pitch0))
        x0 = sh[0] + la * math.cos(arm0)
        x1 = sh[0] + la * math.cos(arm1)
        hx = x0 + s * (x1 - x0)
        arm = math.atan2(-sh[1], hx - sh[0])
        reach = math.hypot(hx - sh[0], sh[1])
        return _keyframe("hands_in", shank0, knee0, pitch0, arm, True, geom, reach)
    knee = knee0 + s * (knee1 - knee0)
    pitch = standing_pitch(knee, geom)
    arm = arm0 + s * (arm1 - arm0)
    return _keyframe("standing", shank0, knee, pitch, arm, False, geom)
