"""Deterministic fixed-timestep 2.5D physics of the Foosball table.

The table is modelled top-down: the ball is a disc on the plane, each rod
carries a prismatic (translation) and a revolute (rotation) joint, and every
figurine contributes a contact disc at its foot tip whose position depends on
the rod rotation.  Contact is only possible while the figurine is close to
upright (|wrapped angle| <= contact_angle_window).

All stepping code is written against batched numpy arrays of shape (n, ...)
so that many table instances advance in lockstep.  Every operation is
elementwise per instance, which makes trajectories bitwise independent of the
batch size or how a batch is partitioned.  The scalar API (WorldState,
step_world) is a view onto a batch of size 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

CONFIG_VERSION = 1

PHYSICS_DT = 1.0 / 240.0
CONTROL_SUBSTEPS = 4  # 240 Hz physics, 60 Hz control

WHITE = "white"
BLACK = "black"

# Ball status codes
IN_PLAY = 0
IN_GOAL_WHITE = 1  # ball in the -x goal (scored against white)
IN_GOAL_BLACK = 2  # ball in the +x goal (scored against black)
OUT_OF_TABLE = 3


class PhysicsError(ValueError):
    """Invalid input handed to the physics layer."""


@dataclass(frozen=True)
class RodConfig:
    team: str               # "white" | "black"
    role: str               # "keeper" | "defense" | "midfield" | "offense"
    x_position: float       # m, world frame, origin at table centre
    figurine_count: int
    figurine_spacing: float  # m between neighbouring figurines
    prismatic_range: Tuple[float, float]   # m, carriage offset
    revolute_range: Tuple[float, float] = (-4.0 * math.pi, 4.0 * math.pi)
    prismatic_v_max: float = 2.0     # m/s
    prismatic_a_max: float = 50.0    # m/s^2
    revolute_v_max: float = 100.0    # rad/s
    revolute_a_max: float = 4000.0   # rad/s^2
    foot_length: float = 0.04        # m, rod axis to foot tip
    foot_radius: float = 0.012      # m, contact disc radius
    contact_angle_window: float = math.radians(50.0)

    def figurine_base_y(self, index: int) -> float:
        """Resting y of figurine `index` with the carriage centred."""
        if not 0 <= index < self.figurine_count:
            raise PhysicsError(
                f"figurine index {index} out of range for {self.team} {self.role}"
            )
        return (index - (self.figurine_count - 1) / 2.0) * self.figurine_spacing


def default_rods() -> Tuple[RodConfig, ...]:
    """Standard 8-rod tournament layout, white defending -x."""
    pr = {"keeper": 0.11, "defense": 0.09, "midfield": 0.055, "offense": 0.06}
    spacing = {"keeper": 0.0, "defense": 0.24, "midfield": 0.12, "offense": 0.185}
    count = {"keeper": 1, "defense": 2, "midfield": 5, "offense": 3}

    def rod(team: str, role: str, x: float) -> RodConfig:
        return RodConfig(
            team=team,
            role=role,
            x_position=x,
            figurine_count=count[role],
            figurine_spacing=spacing[role],
            prismatic_range=(-pr[role], pr[role]),
        )

    return (
        rod(WHITE, "keeper", -0.525),
        rod(WHITE, "defense", -0.375),
        rod(BLACK, "offense", -0.225),
        rod(WHITE, "midfield", -0.075),
        rod(BLACK, "midfield", 0.075),
        rod(WHITE, "offense", 0.225),
        rod(BLACK, "defense", 0.375),
        rod(BLACK, "keeper", 0.525),
    )


@dataclass(frozen=True)
class TableConfig:
    field_length: float = 1.2
    field_width: float = 0.68
    goal_width: float = 0.205
    goal_depth: float = 0.03
    ball_radius: float = 0.01725
    ball_mass: float = 0.024
    wall_restitution: float = 0.7
    wall_tangential_factor: float = 0.9
    disc_restitution: float = 0.85
    rolling_decel: float = 0.3       # m/s^2
    launch_speed_threshold: float = 12.0  # m/s, post-impulse out-of-table surrogate
    physics_dt: float = PHYSICS_DT
    rods: Tuple[RodConfig, ...] = field(default_factory=default_rods)
    config_version: int = CONFIG_VERSION

    def __post_init__(self):
        if not (0.0 < self.wall_restitution <= 1.0):
            raise PhysicsError("wall_restitution must be in (0, 1]")
        if self.goal_width >= self.field_width:
            raise PhysicsError("goal_width must be smaller than field_width")
        if len(self.rods) != 8:
            raise PhysicsError("expected 8 rods")
        xs = [r.x_position for r in self.rods]
        if xs != sorted(xs):
            raise PhysicsError("rods must be sorted by x position")
        for team in (WHITE, BLACK):
            counts = sorted(
                r.figurine_count for r in self.rods if r.team == team
            )
            if counts != [1, 2, 3, 5]:
                raise PhysicsError(f"{team} figurine counts must be {{1,2,5,3}}")
        for r in self.rods:
            travel = r.prismatic_range[1] - r.prismatic_range[0]
            if r.figurine_spacing * (r.figurine_count - 1) + travel > self.field_width:
                raise PhysicsError(f"rod {r.team} {r.role} does not fit the field")

    # -- rod lookups ------------------------------------------------------

    def rod_indices(self, team: str) -> List[int]:
        return [i for i, r in enumerate(self.rods) if r.team == team]

    def keeper_index(self, team: str) -> int:
        return next(
            i for i, r in enumerate(self.rods) if r.team == team and r.role == "keeper"
        )

    def mirror_rod_index(self, index: int) -> int:
        """Index of the rod at the point-mirrored position (x -> -x)."""
        x = self.rods[index].x_position
        for j, r in enumerate(self.rods):
            if abs(r.x_position + x) < 1e-12:
                return j
        raise PhysicsError("table is not point symmetric")

    # -- serialization ----------------------------------------------------

    def to_json(self) -> str:
        doc = {
            "config_version": self.config_version,
            "field_length": self.field_length,
            "field_width": self.field_width,
            "goal_width": self.goal_width,
            "goal_depth": self.goal_depth,
            "ball_radius": self.ball_radius,
            "ball_mass": self.ball_mass,
            "wall_restitution": self.wall_restitution,
            "wall_tangential_factor": self.wall_tangential_factor,
            "disc_restitution": self.disc_restitution,
            "rolling_decel": self.rolling_decel,
            "launch_speed_threshold": self.launch_speed_threshold,
            "physics_dt": self.physics_dt,
            "rods": [
                {
                    "team": r.team,
                    "role": r.role,
                    "x_position": r.x_position,
                    "figurine_count": r.figurine_count,
                    "figurine_spacing": r.figurine_spacing,
                    "prismatic_range": list(r.prismatic_range),
                    "revolute_range": list(r.revolute_range),
                    "prismatic_v_max": r.prismatic_v_max,
                    "prismatic_a_max": r.prismatic_a_max,
                    "revolute_v_max": r.revolute_v_max,
                    "revolute_a_max": r.revolute_a_max,
                    "foot_length": r.foot_length,
                    "foot_radius": r.foot_radius,
                    "contact_angle_window": r.contact_angle_window,
                }
                for r in self.rods
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "TableConfig":
        doc = json.loads(text)
        version = doc.get("config_version")
        if version != CONFIG_VERSION:
            raise PhysicsError(
                f"unsupported config_version {version!r} (expected {CONFIG_VERSION})"
            )
        rods = tuple(
            RodConfig(
                team=r["team"],
                role=r["role"],
                x_position=r["x_position"],
                figurine_count=r["figurine_count"],
                figurine_spacing=r["figurine_spacing"],
                prismatic_range=tuple(r["prismatic_range"]),
                revolute_range=tuple(r["revolute_range"]),
                prismatic_v_max=r["prismatic_v_max"],
                prismatic_a_max=r["prismatic_a_max"],
                revolute_v_max=r["revolute_v_max"],
                revolute_a_max=r["revolute_a_max"],
                foot_length=r["foot_length"],
                foot_radius=r["foot_radius"],
                contact_angle_window=r["contact_angle_window"],
            )
            for r in doc["rods"]
        )
        keys = dict(doc)
        keys.pop("rods")
        return TableConfig(rods=rods, **keys)


# ---------------------------------------------------------------------------
# Scalar state types (spec-level API, views onto a batch of size 1)
# ---------------------------------------------------------------------------


@dataclass
class JointState:
    position: float
    velocity: float
    target: float


@dataclass
class BallState:
    position: Tuple[float, float]
    velocity: Tuple[float, float]
    status: int = IN_PLAY


@dataclass
class StepEvents:
    goal_against: Optional[str] = None  # team whose goal was hit
    ball_out: bool = False
    contacts: List[Tuple[int, int]] = field(default_factory=list)


@dataclass
class WorldState:
    tick: int
    ball: BallState
    rods: List[Tuple[JointState, JointState]]  # (prismatic, revolute) per rod


def wrap_angle(theta: float) -> float:
    """Map angle to (-pi, pi]."""
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


# ---------------------------------------------------------------------------
# Vectorized kernels
# ---------------------------------------------------------------------------


def track_joint(pos, vel, target, v_max, a_max, lo, hi, dt):
    """One step of trapezoidal position tracking; arrays broadcast.

    The commanded velocity is capped by v_max, by the braking curve
    sqrt(2*a_max*|d|), and by |d|/dt (exact landing once close), and the
    velocity change per step never exceeds a_max*dt.  Positions are clamped
    to [lo, hi] with velocity zeroed at the stop.
    """
    d = target - pos
    v_allow = np.minimum(np.sqrt(2.0 * a_max * np.abs(d)), np.abs(d) / dt)
    v_des = np.sign(d) * np.minimum(v_max, v_allow)
    dv = np.clip(v_des - vel, -a_max * dt, a_max * dt)
    vel = vel + dv
    pos = pos + vel * dt
    clamped = (pos < lo) | (pos > hi)
    pos = np.clip(pos, lo, hi)
    vel = np.where(clamped, 0.0, vel)
    return pos, vel


class BatchWorld:
    """n table instances advanced in lockstep.

    All per-instance arrays have leading dimension n.  Instances whose ball
    is no longer InPlay are frozen until reset_instances() is called for
    them (done by the environment layer).
    """

    def __init__(self, cfg: TableConfig, n: int):
        self.cfg = cfg
        self.n = n
        self.tick = np.zeros(n, dtype=np.int64)
        self.ball_pos = np.zeros((n, 2))
        self.ball_vel = np.zeros((n, 2))
        self.ball_status = np.full(n, IN_PLAY, dtype=np.int8)

        self.pris_pos = np.zeros((n, 8))
        self.pris_vel = np.zeros((n, 8))
        self.pris_target = np.zeros((n, 8))
        self.rev_pos = np.zeros((n, 8))
        self.rev_vel = np.zeros((n, 8))
        self.rev_target = np.zeros((n, 8))

        # Static per-rod limit rows, broadcast over instances.
        rods = cfg.rods
        self._pris_lo = np.array([r.prismatic_range[0] for r in rods])
        self._pris_hi = np.array([r.prismatic_range[1] for r in rods])
        self._pris_vmax = np.array([r.prismatic_v_max for r in rods])
        self._pris_amax = np.array([r.prismatic_a_max for r in rods])
        self._rev_lo = np.array([r.revolute_range[0] for r in rods])
        self._rev_hi = np.array([r.revolute_range[1] for r in rods])
        self._rev_vmax = np.array([r.revolute_v_max for r in rods])
        self._rev_amax = np.array([r.revolute_a_max for r in rods])

        # Disc table: one row per (rod, figurine).
        discs = []
        for ri, rod in enumerate(rods):
            for fi in range(rod.figurine_count):
                discs.append((ri, fi, rod.figurine_base_y(fi)))
        self.disc_rod = np.array([d[0] for d in discs], dtype=np.int64)
        self.disc_fig = np.array([d[1] for d in discs], dtype=np.int64)
        self.disc_base_y = np.array([d[2] for d in discs])
        self.num_discs = len(discs)

    # -- instance management ---------------------------------------------

    def reset_instances(self, idx, ball_pos, ball_vel):
        """Reset instances `idx` with joints centred at rest."""
        self.tick[idx] = 0
        self.ball_pos[idx] = ball_pos
        self.ball_vel[idx] = ball_vel
        self.ball_status[idx] = IN_PLAY
        for arr in (
            self.pris_pos,
            self.pris_vel,
            self.pris_target,
            self.rev_pos,
            self.rev_vel,
            self.rev_target,
        ):
            arr[idx] = 0.0

    def set_targets(self, pris_target=None, rev_target=None, instance_mask=None):
        if pris_target is not None:
            if instance_mask is None:
                self.pris_target[:] = pris_target
            else:
                self.pris_target[instance_mask] = pris_target[instance_mask]
        if rev_target is not None:
            if instance_mask is None:
                self.rev_target[:] = rev_target
            else:
                self.rev_target[instance_mask] = rev_target[instance_mask]

    # -- geometry ---------------------------------------------------------

    def disc_state(self, active_rods: np.ndarray):
        """Positions/velocities/activity of all contact discs.

        active_rods: bool (8,) — rods not in play contribute no contacts.
        Returns (centers (n, D, 2), vels (n, D, 2), active (n, D)).
        """
        cfg = self.cfg
        ri = self.disc_rod
        theta = self.rev_pos[:, ri]
        omega = self.rev_vel[:, ri]
        foot_l = np.array([cfg.rods[r].foot_length for r in ri])
        window = np.array([cfg.rods[r].contact_angle_window for r in ri])
        rod_x = np.array([cfg.rods[r].x_position for r in ri])

        wrapped = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
        active = (np.abs(wrapped) <= window) & active_rods[ri][None, :]
        cx = rod_x[None, :] + foot_l[None, :] * np.sin(theta)
        cy = self.disc_base_y[None, :] + self.pris_pos[:, ri]
        vx = foot_l[None, :] * np.cos(theta) * omega
        vy = self.pris_vel[:, ri]
        centers = np.stack([cx, cy], axis=-1)
        vels = np.stack([vx, vy], axis=-1)
        return centers, vels, active

    # -- stepping ---------------------------------------------------------

    def step(self, n_substeps: int = CONTROL_SUBSTEPS, active_rods=None):
        """Advance n_substeps physics substeps; returns accumulated events.

        Events dict: goal_against (n,) int8 (0 none, IN_GOAL_* code),
        ball_out (n,) bool, contacts (n, D) bool.
        """
        if n_substeps < 1:
            raise PhysicsError("n_substeps must be >= 1")
        cfg = self.cfg
        if active_rods is None:
            active_rods = np.ones(8, dtype=bool)
        if not (
            np.all(np.isfinite(self.pris_target)) and np.all(np.isfinite(self.rev_target))
        ):
            raise PhysicsError("non-finite joint target")

        dt = cfg.physics_dt
        goal_against = np.zeros(self.n, dtype=np.int8)
        ball_out = np.zeros(self.n, dtype=bool)
        contacts = np.zeros((self.n, self.num_discs), dtype=bool)
        r_sum_all = cfg.ball_radius + np.array(
            [cfg.rods[r].foot_radius for r in self.disc_rod]
        )

        for _ in range(n_substeps):
            in_play = self.ball_status == IN_PLAY

            # Instances whose ball left play are frozen until the caller
            # resets them, so joints only move where the ball is in play.
            m = in_play[:, None]
            p, v = track_joint(
                self.pris_pos,
                self.pris_vel,
                self.pris_target,
                self._pris_vmax,
                self._pris_amax,
                self._pris_lo,
                self._pris_hi,
                dt,
            )
            self.pris_pos = np.where(m, p, self.pris_pos)
            self.pris_vel = np.where(m, v, self.pris_vel)
            p, v = track_joint(
                self.rev_pos,
                self.rev_vel,
                self.rev_target,
                self._rev_vmax,
                self._rev_amax,
                self._rev_lo,
                self._rev_hi,
                dt,
            )
            self.rev_pos = np.where(m, p, self.rev_pos)
            self.rev_vel = np.where(m, v, self.rev_vel)

            # Ball free flight with rolling deceleration; exact rest below
            # one decel step (quiescence).
            speed = np.hypot(self.ball_vel[:, 0], self.ball_vel[:, 1])
            new_speed = np.maximum(speed - cfg.rolling_decel * dt, 0.0)
            scale = np.where(speed > 0.0, new_speed / np.where(speed > 0, speed, 1.0), 0.0)
            self.ball_vel = np.where(m, self.ball_vel * scale[:, None], self.ball_vel)
            self.ball_pos = np.where(m, self.ball_pos + self.ball_vel * dt, self.ball_pos)

            # Walls first, then discs in (rod, figurine) order.
            self._collide_walls(in_play, goal_against)
            in_play = self.ball_status == IN_PLAY

            centers, vels, active = self.disc_state(active_rods)
            for j in range(self.num_discs):
                self._collide_disc(
                    in_play,
                    centers[:, j],
                    vels[:, j],
                    active[:, j],
                    r_sum_all[j],
                    contacts[:, j],
                    ball_out,
                )
                in_play = self.ball_status == IN_PLAY

            self.tick += 1

        if not np.all(np.isfinite(self.ball_pos)) or not np.all(
            np.isfinite(self.ball_vel)
        ):
            raise FloatingPointError("NaN/Inf in ball state")
        return {
            "goal_against": goal_against,
            "ball_out": ball_out,
            "contacts": contacts,
        }

    def _collide_walls(self, in_play, goal_against):
        cfg = self.cfg
        x = self.ball_pos[:, 0]
        y = self.ball_pos[:, 1]
        vx = self.ball_vel[:, 0]
        vy = self.ball_vel[:, 1]
        e = cfg.wall_restitution
        tf = cfg.wall_tangential_factor
        y_lim = cfg.field_width / 2.0 - cfg.ball_radius
        x_lim = cfg.field_length / 2.0 - cfg.ball_radius
        half_mouth = cfg.goal_width / 2.0

        # Side walls (y).
        for sign in (1.0, -1.0):
            over = in_play & (sign * y > y_lim)
            bounce = over & (sign * vy > 0.0)
            y = np.where(over, sign * y_lim, y)
            vx = np.where(bounce, vx * tf, vx)
            vy = np.where(bounce, -e * vy, vy)

        # End walls (x) outside the goal mouth; goal inside the mouth.
        in_mouth = np.abs(y) < half_mouth
        for sign, code in ((1.0, IN_GOAL_BLACK), (-1.0, IN_GOAL_WHITE)):
            goal = in_play & in_mouth & (sign * x > cfg.field_length / 2.0)
            goal_against[goal] = code
            self.ball_status[goal] = code
            over = in_play & ~in_mouth & (sign * x > x_lim) & ~goal
            bounce = over & (sign * vx > 0.0)
            x = np.where(over, sign * x_lim, x)
            vy = np.where(bounce, vy * tf, vy)
            vx = np.where(bounce, -e * vx, vx)

        self.ball_pos[:, 0] = x
        self.ball_pos[:, 1] = y
        self.ball_vel[:, 0] = vx
        self.ball_vel[:, 1] = vy

    def _collide_disc(self, in_play, center, vel, active, r_sum, contact_out, ball_out):
        cfg = self.cfg
        d = self.ball_pos - center
        dist = np.hypot(d[:, 0], d[:, 1])
        hit = in_play & active & (dist < r_sum)
        if not np.any(hit):
            return
        safe = np.where(dist > 1e-12, dist, 1.0)
        nx = np.where(dist > 1e-12, d[:, 0] / safe, 1.0)
        ny = np.where(dist > 1e-12, d[:, 1] / safe, 0.0)
        rel_n = (self.ball_vel[:, 0] - vel[:, 0]) * nx + (
            self.ball_vel[:, 1] - vel[:, 1]
        ) * ny
        bounce = hit & (rel_n < 0.0)
        imp = (1.0 + cfg.disc_restitution) * rel_n
        self.ball_vel[:, 0] = np.where(bounce, self.ball_vel[:, 0] - imp * nx, self.ball_vel[:, 0])
        self.ball_vel[:, 1] = np.where(bounce, self.ball_vel[:, 1] - imp * ny, self.ball_vel[:, 1])
        # Positional projection out of penetration.
        self.ball_pos[:, 0] = np.where(hit, center[:, 0] + nx * r_sum, self.ball_pos[:, 0])
        self.ball_pos[:, 1] = np.where(hit, center[:, 1] + ny * r_sum, self.ball_pos[:, 1])
        contact_out |= hit

        speed = np.hypot(self.ball_vel[:, 0], self.ball_vel[:, 1])
        launched = bounce & (speed > cfg.launch_speed_threshold)
        if np.any(launched):
            self.ball_status[launched] = OUT_OF_TABLE
            ball_out |= launched

    # -- scalar views -----------------------------------------------------

    def world_state(self, i: int = 0) -> WorldState:
        rods = []
        for r in range(8):
            rods.append(
                (
                    JointState(
                        float(self.pris_pos[i, r]),
                        float(self.pris_vel[i, r]),
                        float(self.pris_target[i, r]),
                    ),
                    JointState(
                        float(self.rev_pos[i, r]),
                        float(self.rev_vel[i, r]),
                        float(self.rev_target[i, r]),
                    ),
                )
            )
        return WorldState(
            tick=int(self.tick[i]),
            ball=BallState(
                position=(float(self.ball_pos[i, 0]), float(self.ball_pos[i, 1])),
                velocity=(float(self.ball_vel[i, 0]), float(self.ball_vel[i, 1])),
                status=int(self.ball_status[i]),
            ),
            rods=rods,
        )

    def load_world_state(self, world: WorldState, i: int = 0):
        self.tick[i] = world.tick
        self.ball_pos[i] = world.ball.position
        self.ball_vel[i] = world.ball.velocity
        self.ball_status[i] = world.ball.status
        for r, (pj, rj) in enumerate(world.rods):
            self.pris_pos[i, r] = pj.position
            self.pris_vel[i, r] = pj.velocity
            self.pris_target[i, r] = pj.target
            self.rev_pos[i, r] = rj.position
            self.rev_vel[i, r] = rj.velocity
            self.rev_target[i, r] = rj.target


# ---------------------------------------------------------------------------
# Scalar operations (spec-level API)
# ---------------------------------------------------------------------------


def motor_track(
    joint: JointState,
    limits: Tuple[float, float, Tuple[float, float]],
    dt: float,
) -> JointState:
    """One tracking step of a single joint toward its position target."""
    v_max, a_max, rng = limits
    if dt <= 0.0:
        raise PhysicsError("dt must be positive")
    if not math.isfinite(joint.target):
        raise PhysicsError("non-finite joint target")
    pos, vel = track_joint(
        np.array([joint.position]),
        np.array([joint.velocity]),
        np.array([joint.target]),
        v_max,
        a_max,
        rng[0],
        rng[1],
        dt,
    )
    return JointState(float(pos[0]), float(vel[0]), joint.target)


@dataclass
class ContactDisc:
    center: Tuple[float, float]
    radius: float
    velocity: Tuple[float, float]
    active: bool


def foot_pose(
    rod: RodConfig,
    prismatic: JointState,
    revolute: JointState,
    figurine_index: int,
) -> ContactDisc:
    """Contact disc of one figurine foot in world coordinates."""
    base_y = rod.figurine_base_y(figurine_index)
    theta = revolute.position
    omega = revolute.velocity
    cx = rod.x_position + rod.foot_length * math.sin(theta)
    cy = base_y + prismatic.position
    return ContactDisc(
        center=(cx, cy),
        radius=rod.foot_radius,
        velocity=(rod.foot_length * math.cos(theta) * omega, prismatic.velocity),
        active=abs(wrap_angle(theta)) <= rod.contact_angle_window,
    )


def resolve_collisions(
    ball: BallState, discs: Sequence[ContactDisc], cfg: TableConfig
) -> Tuple[BallState, StepEvents]:
    """Resolve wall and disc contacts for a single ball state."""
    if ball.status != IN_PLAY:
        raise PhysicsError("ball is not in play")
    x, y = ball.position
    vx, vy = ball.velocity
    if not all(math.isfinite(v) for v in (x, y, vx, vy)):
        raise FloatingPointError("NaN/Inf in ball state")
    events = StepEvents()
    status = IN_PLAY
    e = cfg.wall_restitution
    tf = cfg.wall_tangential_factor
    y_lim = cfg.field_width / 2.0 - cfg.ball_radius
    x_lim = cfg.field_length / 2.0 - cfg.ball_radius
    half_mouth = cfg.goal_width / 2.0

    for sign in (1.0, -1.0):
        if sign * y > y_lim:
            y = sign * y_lim
            if sign * vy > 0.0:
                vx *= tf
                vy *= -e
    if abs(y) < half_mouth:
        if x > cfg.field_length / 2.0:
            events.goal_against = BLACK
            status = IN_GOAL_BLACK
        elif x < -cfg.field_length / 2.0:
            events.goal_against = WHITE
            status = IN_GOAL_WHITE
    else:
        for sign in (1.0, -1.0):
            if sign * x > x_lim:
                x = sign * x_lim
                if sign * vx > 0.0:
                    vy *= tf
                    vx *= -e

    if status == IN_PLAY:
        for j, disc in enumerate(discs):
            if not disc.active:
                continue
            dx = x - disc.center[0]
            dy = y - disc.center[1]
            dist = math.hypot(dx, dy)
            r_sum = cfg.ball_radius + disc.radius
            if dist >= r_sum:
                continue
            if dist > 1e-12:
                nx, ny = dx / dist, dy / dist
            else:
                nx, ny = 1.0, 0.0
            rel_n = (vx - disc.velocity[0]) * nx + (vy - disc.velocity[1]) * ny
            if rel_n < 0.0:
                imp = (1.0 + cfg.disc_restitution) * rel_n
                vx -= imp * nx
                vy -= imp * ny
            x = disc.center[0] + nx * r_sum
            y = disc.center[1] + ny * r_sum
            events.contacts.append((j, 0))
            if math.hypot(vx, vy) > cfg.launch_speed_threshold and rel_n < 0.0:
                events.ball_out = True
                status = OUT_OF_TABLE
                break

    out = BallState(position=(x, y), velocity=(vx, vy), status=status)
    return out, events


def step_world(
    world: WorldState,
    pris_targets: Sequence[float],
    rev_targets: Sequence[float],
    cfg: TableConfig,
    n_substeps: int = CONTROL_SUBSTEPS,
    active_rods: Optional[np.ndarray] = None,
) -> Tuple[WorldState, StepEvents]:
    """Advance one scalar WorldState through the batch engine (n = 1)."""
    batch = BatchWorld(cfg, 1)
    batch.load_world_state(world, 0)
    batch.pris_target[0] = np.asarray(pris_targets, dtype=float)
    batch.rev_target[0] = np.asarray(rev_targets, dtype=float)
    ev = batch.step(n_substeps, active_rods=active_rods)
    events = StepEvents()
    code = int(ev["goal_against"][0])
    if code == IN_GOAL_WHITE:
        events.goal_against = WHITE
    elif code == IN_GOAL_BLACK:
        events.goal_against = BLACK
    events.ball_out = bool(ev["ball_out"][0])
    hit = np.nonzero(ev["contacts"][0])[0]
    events.contacts = [
        (int(batch.disc_rod[j]), int(batch.disc_fig[j])) for j in hit
    ]
    return batch.world_state(0), events
