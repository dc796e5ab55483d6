"""Planar rigid-body model of the robot standing on its hind legs.

The floating base is integrated in centroidal form: the system CoM
position/velocity (driven by gravity and contact forces) and the scalar
angular momentum about the CoM.  Joints are servo-tracked kinematic
coordinates, so limb motion enters the torso dynamics through the
configuration-dependent CoM offset, composite inertia and internal
angular momentum.  With the joints frozen and no contacts the system is a
single rigid body in ballistic flight, which the integrator reproduces
exactly up to round-off.

Ground contacts are penalty springs with a stick-slip tangential spring
capped by Coulomb friction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from arrl.kinematics import LegGeometry

# Contact points, tagged by the link they sit on.
CONTACT_NAMES = (
    "toe_left", "stick_left", "toe_right", "stick_right",
    "knee_left", "knee_right", "hip", "shoulder", "hand_left", "hand_right",
)


@dataclass
class MassModel:
    torso: float = 6.0
    thigh: float = 0.6
    shank: float = 0.2
    front_limb: float = 0.5
    torso_inertia: float = 0.08


@dataclass
class ContactModel:
    stiffness: float = 1.0e4
    damping: float = 100.0
    tangential_stiffness: float = 1.0e4
    tangential_damping: float = 100.0
    friction: float = 0.8


@dataclass
class BodyState:
    com: np.ndarray            # system CoM, world (x, y)
    vel: np.ndarray            # system CoM velocity
    pitch: float               # torso angle above horizontal
    momentum: float            # angular momentum about the CoM
    q: np.ndarray              # 8 joint angles
    qd: np.ndarray             # 8 joint rates
    anchors: list = field(default_factory=lambda: [None] * len(CONTACT_NAMES))

    def copy(self) -> "BodyState":
        return BodyState(self.com.copy(), self.vel.copy(), self.pitch, self.momentum,
                         self.q.copy(), self.qd.copy(), list(self.anchors))


class PlanarBiped:
    """Geometry, mass distribution and the substep integrator."""

    def __init__(self, geom: LegGeometry, masses: MassModel | None = None,
                 contact: ContactModel | None = None, gravity: float = 9.81,
                 servo_kp: float = 400.0, servo_kd: float = 40.0):
        self.geom = geom
        self.m = masses or MassModel()
        self.contact = contact or ContactModel()
        self.gravity = gravity
        self.servo_kp = servo_kp
        self.servo_kd = servo_kd
        self.q_lo, self.q_hi = geom.joint_limits()
        m = self.m
        self.total_mass = m.torso + 2 * (m.thigh + m.shank + m.front_limb)
        g = geom
        self._link_inertia = (
            m.thigh * g.thigh_len_b ** 2 / 12.0,
            m.shank * g.shank_len_c ** 2 / 12.0,
            m.front_limb * g.front_limb_len ** 2 / 12.0,
        )

    # ------------------------------------------------------------------ geometry

    def body_frame(self, q, qd):
        """Link CoMs and contact points in the torso frame (hip joint at origin).

        Returns ``(links, points)``.  ``links`` is a list of
        ``(mass, x, y, vx, vy, inertia, rel_angle_rate)``; ``points`` a list of
        ``(x, y, vx, vy)`` in :data:`CONTACT_NAMES` order.
        """
        g, m = self.geom, self.m
        a, b, c, la = g.torso_len_a, g.thigh_len_b, g.shank_len_c, g.front_limb_len
        i_th, i_sh, i_fl = self._link_inertia
        links = [(m.torso, g.com_frac_k * a, 0.0, 0.0, 0.0, m.torso_inertia, 0.0)]
        points = [None] * len(CONTACT_NAMES)
        for side, (hi, ki, fi) in enumerate(((4, 6, 2), (5, 7, 3))):
            a1, a2, af = q[hi], q[ki], q[fi]
            w1, w2, wf = qd[hi], qd[ki], qd[fi]
            th = a1 - math.pi / 2
            sh = a1 + a2 - math.pi / 2
            cth, sth, csh, ssh = math.cos(th), math.sin(th), math.cos(sh), math.sin(sh)
            kx, ky = b * cth, b * sth
            kvx, kvy = -b * sth * w1, b * cth * w1
            tx, ty = kx + c * csh, ky + c * ssh
            tvx, tvy = kvx - c * ssh * (w1 + w2), kvy + c * csh * (w1 + w2)
            links.append((m.thigh, 0.5 * kx, 0.5 * ky, 0.5 * kvx, 0.5 * kvy, i_th, w1))
            links.append((m.shank, 0.5 * (kx + tx), 0.5 * (ky + ty),
                          0.5 * (kvx + tvx), 0.5 * (kvy + tvy), i_sh, w1 + w2))
            # stick lies along the ground direction when the shank meets it at gamma
            st = sh + math.pi - g.stick_angle_gamma
            cst, sst = math.cos(st), math.sin(st)
            l = g.stick_len_l
            sx, sy = tx + l * cst, ty + l * sst
            svx, svy = tvx - l * sst * (w1 + w2), tvy + l * cst * (w1 + w2)
            ar = -af - math.pi / 2
            car, sar = math.cos(ar), math.sin(ar)
            hx, hy = a + la * car, la * sar
            hvx, hvy = la * sar * wf, -la * car * wf
            links.append((m.front_limb, a + 0.5 * la * car, 0.5 * la * sar,
                          0.5 * hvx, 0.5 * hvy, i_fl, -wf))
            points[2 * side] = (tx, ty, tvx, tvy)
            points[2 * side + 1] = (sx, sy, svx, svy)
            points[4 + side] = (kx, ky, kvx, kvy)
            points[8 + side] = (hx, hy, hvx, hvy)
        points[6] = (0.0, 0.0, 0.0, 0.0)
        points[7] = (a, 0.0, 0.0, 0.0)
        return links, points

    def centroidal(self, links):
        """CoM offset, its rate, composite inertia and internal angular momentum."""
        mt = px = py = pvx = pvy = 0.0
        for mi, x, y, vx, vy, _, _ in links:
            mt += mi
            px += mi * x
            py += mi * y
            pvx += mi * vx
            pvy += mi * vy
        px, py, pvx, pvy = px / mt, py / mt, pvx / mt, pvy / mt
        inertia = l_int = 0.0
        for mi, x, y, vx, vy, ii, w in links:
            dx, dy, dvx, dvy = x - px, y - py, vx - pvx, vy - pvy
            inertia += mi * (dx * dx + dy * dy) + ii
            l_int += mi * (dx * dvy - dy * dvx) + ii * w
        return px, py, pvx, pvy, inertia, l_int

    def world_points(self, s: BodyState):
        """World positions/velocities of the contact points plus derived kinematics."""
        links, pts = self.body_frame(s.q, s.qd)
        px, py, pvx, pvy, inertia, l_int = self.centroidal(links)
        omega = (s.momentum - l_int) / inertia
        cth, sth = math.cos(s.pitch), math.sin(s.pitch)
        out = []
        for x, y, vx, vy in pts:
            dx, dy = x - px, y - py
            rx, ry = cth * dx - sth * dy, sth * dx + cth * dy
            rvx, rvy = cth * (vx - pvx) - sth * (vy - pvy), sth * (vx - pvx) + cth * (vy - pvy)
            out.append((s.com[0] + rx, s.com[1] + ry,
                        s.vel[0] - omega * ry + rvx, s.vel[1] + omega * rx + rvy))
        return out, omega, (px, py, inertia, l_int)

    def hip_position(self, s: BodyState) -> tuple[float, float]:
        links, _ = self.body_frame(s.q, s.qd)
        px, py, *_ = self.centroidal(links)
        cth, sth = math.cos(s.pitch), math.sin(s.pitch)
        return (s.com[0] - (cth * px - sth * py), s.com[1] - (sth * px + cth * py))

    def torso_com(self, s: BodyState) -> tuple[float, float]:
        hx, hy = self.hip_position(s)
        r = self.geom.com_frac_k * self.geom.torso_len_a
        return (hx + r * math.cos(s.pitch), hy + r * math.sin(s.pitch))

    def angular_velocity(self, s: BodyState) -> float:
        links, _ = self.body_frame(s.q, s.qd)
        *_, inertia, l_int = self.centroidal(links)
        return (s.momentum - l_int) / inertia

    def energy(self, s: BodyState) -> float:
        """Total mechanical energy (kinetic, including limb motion, plus gravity)."""
        links, _ = self.body_frame(s.q, s.qd)
        px, py, pvx, pvy, inertia, l_int = self.centroidal(links)
        omega = (s.momentum - l_int) / inertia
        ke = 0.5 * self.total_mass * (s.vel[0] ** 2 + s.vel[1] ** 2)
        for mi, x, y, vx, vy, ii, w in links:
            dx, dy, dvx, dvy = x - px, y - py, vx - pvx, vy - pvy
            ux, uy = -omega * dy + dvx, omega * dx + dvy
            ke += 0.5 * mi * (ux * ux + uy * uy) + 0.5 * ii * (omega + w) ** 2
        return ke + self.total_mass * self.gravity * s.com[1]

    # ------------------------------------------------------------------ state setup

    def place(self, q: np.ndarray, pitch: float, anchor_x: float = 0.0) -> BodyState:
        """Robot at rest with its lowest contact point touching the ground."""
        q = np.asarray(q, dtype=float).copy()
        s = BodyState(np.zeros(2), np.zeros(2), float(pitch), 0.0, q, np.zeros(8))
        pts, _, _ = self.world_points(s)
        lowest = min(p[1] for p in pts)
        s.com = np.array([anchor_x - pts[0][0], -lowest])
        return s

    # ------------------------------------------------------------------ dynamics

    def contact_forces(self, s: BodyState, pts, scales=(1.0, 1.0)):
        """Net contact force and torque about the CoM; updates stick anchors."""
        ct = self.contact
        k = ct.stiffness * scales[0]
        mu = ct.friction * scales[1]
        fx = fy = tau = 0.0
        cx, cy = s.com
        anchors = s.anchors
        for i, (x, y, vx, vy) in enumerate(pts):
            if y >= 0.0:
                anchors[i] = None
                continue
            fn = -k * y - ct.damping * vy
            if fn <= 0.0:
                anchors[i] = None
                continue
            if anchors[i] is None:
                anchors[i] = x
            ft = -ct.tangential_stiffness * (x - anchors[i]) - ct.tangential_damping * vx
            cap = mu * fn
            if abs(ft) > cap:
                ft = math.copysign(cap, ft)
                anchors[i] = x + (ft + ct.tangential_damping * vx) / ct.tangential_stiffness
            fx += ft
            fy += fn
            tau += (x - cx) * fn - (y - cy) * ft
        return fx, fy, tau

    def substep(self, s: BodyState, target: np.ndarray | None, h: float,
                scales=(1.0, 1.0), mass_scale: float = 1.0) -> None:
        """Advance ``s`` in place by ``h`` seconds.

        ``target=None`` switches the servos off and freezes the joints.
        """
        if target is not None:
            q, qd = s.q, s.qd
            qd += h * (self.servo_kp * (target - q) - self.servo_kd * qd)
            q += h * qd
            hit = (q < self.q_lo) | (q > self.q_hi)
            if hit.any():
                np.clip(q, self.q_lo, self.q_hi, out=q)
                qd[hit] = 0.0
        pts, _, (_, _, inertia, l_int) = self.world_points(s)
        fx, fy, tau = self.contact_forces(s, pts, scales)
        mass = self.total_mass * mass_scale
        vx0, vy0 = s.vel
        vx1 = vx0 + h * fx / mass
        vy1 = vy0 + h * (fy / mass - self.gravity)
        s.vel[0], s.vel[1] = vx1, vy1
        s.com[0] += 0.5 * h * (vx0 + vx1)
        s.com[1] += 0.5 * h * (vy0 + vy1)
        # inertia scales with mass; momentum kept in nominal units
        s.momentum += h * tau / mass_scale
        s.pitch += h * (s.momentum - l_int) / inertia
