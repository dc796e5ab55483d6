"""Open-loop periodic foot trajectories for the hind legs.

Foot targets live in a gravity-aligned hip frame (x forward, y up) fixed
at the nominal standing pitch.  Every gait splits its period ``2*pi/omega``
into a swing half, during which the foot is lifted, and a stance half,
during which it slides linearly back to the neutral point ``(x0, y0)``.
The right leg runs half a period ahead of the left.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from arrl.kinematics import (
    FootTarget,
    JointAngles,
    LegGeometry,
    TransitionPlan,
    leg_ik,
    transition_sequence,
)
from arrl.params import ResidualParams


class GaitKind(str, enum.Enum):
    LINE = "Line"
    SINE = "Sine"
    ROSE = "Rose"
    TRIANGLE = "Triangle"


class Leg(str, enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"


# metres of foot lift per unit of (A/omega) * omega
DEFAULT_AMPLITUDE_UNIT = {
    GaitKind.LINE: 0.002,
    GaitKind.SINE: 0.002,
    GaitKind.ROSE: 0.002,
    GaitKind.TRIANGLE: 0.0005,
}


@dataclass(frozen=True)
class GaitSpec:
    kind: GaitKind
    x0: float
    y0: float
    geometry: LegGeometry
    frame_pitch: float = math.pi / 2
    waypoints: tuple[float, float, float] | None = None
    amplitude_unit: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", GaitKind(self.kind))
        geom = self.geometry
        reach = geom.thigh_len_b + geom.shank_len_c
        if math.hypot(self.x0, self.y0) > reach:
            raise ValueError("neutral foot position is unreachable")
        if self.waypoints is not None:
            x1, y1, x2 = self.waypoints
            if max(math.hypot(x1, y1), math.hypot(x2, self.y0)) > reach:
                raise ValueError("triangle waypoints are unreachable")

    @classmethod
    def from_stance(
        cls, kind: GaitKind | str, geom: LegGeometry, plan: TransitionPlan | None = None, **kw
    ) -> "GaitSpec":
        """Gait centred on the toe position of the bipedal stance."""
        stand = transition_sequence(geom, 4, plan)[-1]
        hx, hy = stand.hip
        return cls(GaitKind(kind), -hx, -hy, geom, frame_pitch=stand.pitch, **kw)

    def amplitude(self, params: ResidualParams) -> float:
        unit = self.amplitude_unit if self.amplitude_unit is not None else DEFAULT_AMPLITUDE_UNIT[self.kind]
        return unit * params.A_over_omega * params.omega

    def triangle_waypoints(self, params: ResidualParams) -> tuple[float, float, float]:
        if self.waypoints is not None:
            return self.waypoints
        dx = params.delta_x
        return (self.x0 + dx / 2, self.y0 + self.amplitude(params), self.x0 + dx)


def period(params: ResidualParams) -> float:
    return 2.0 * math.pi / params.omega


def gait_foot_target(spec: GaitSpec, params: ResidualParams, t: float) -> FootTarget:
    """Foot target of the left leg at time ``t`` (seconds)."""
    w = params.omega
    half = math.pi / w
    tau = math.fmod(t, 2.0 * half)
    if tau < 0:
        tau += 2.0 * half
    x0, y0, dx = spec.x0, spec.y0, params.delta_x
    amp = spec.amplitude(params)
    kind = spec.kind

    if tau >= half:
        # stance: slide back to the neutral point at constant speed
        back = (tau - half) * w / math.pi
        if kind is GaitKind.LINE:
            return FootTarget(x0, y0)
        if kind is GaitKind.TRIANGLE:
            x2 = spec.triangle_waypoints(params)[2]
            return FootTarget(x2 + (x0 - x2) * back, y0)
        return FootTarget(x0 + dx - dx * back, y0)

    if kind is GaitKind.LINE:
        return FootTarget(x0, y0 + amp * math.sin(w * tau))
    if kind is GaitKind.SINE:
        return FootTarget(x0 + w * tau * dx / math.pi, y0 + amp * math.sin(w * tau))
    if kind is GaitKind.ROSE:
        ap = 0.25 * w * (half - tau)
        petal = math.cos(2.0 * ap)
        return FootTarget(x0 + dx * petal * math.cos(ap), y0 + 4.0 * amp * petal * math.sin(ap))
    # Triangle: smooth-step up to the apex, then on to x2 while descending
    x1, y1, x2 = spec.triangle_waypoints(params)
    s = 0.5 * (math.sin(2.0 * w * tau - math.pi / 2) + 1.0)
    y = y0 + s * (y1 - y0)
    if tau < 0.5 * half:
        return FootTarget(x0 + s * (x1 - x0), y)
    return FootTarget(x1 + (1.0 - s) * (x2 - x1), y)


def gait_joint_angles(spec: GaitSpec, params: ResidualParams, t: float, leg: Leg | str = Leg.LEFT) -> JointAngles:
    """Torso-relative hip/knee angles tracking the gait; right leg leads by half a period."""
    if Leg(leg) is Leg.RIGHT:
        t = t + math.pi / params.omega
    target = gait_foot_target(spec, params, t)
    hip_g, knee = leg_ik(target, spec.geometry)
    return JointAngles(hip_g - spec.frame_pitch, knee)
