"""Training tasks over the physics core.

Six task kinds: blocking, scoring_resting, scoring_incoming,
scoring_obstacles, keeper_vs_keeper and full_game.  Each task declares which
rods are controlled per side, how episodes reset, the observation layout and
the reward coefficients.  Environments are stepped in vectorized batches;
a batch of size 1 behaves identically to a serial environment.

The table is point symmetric: the black side's observations and actions live
in the 180-degree rotated frame, so one policy can play either side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .estimator import BatchBallEstimator, CameraModel, SensorConfig
from .physics import (
    BLACK,
    CONTROL_SUBSTEPS,
    IN_GOAL_BLACK,
    IN_GOAL_WHITE,
    IN_PLAY,
    WHITE,
    BatchWorld,
    TableConfig,
)

TASK_KINDS = (
    "blocking",
    "scoring_resting",
    "scoring_incoming",
    "scoring_obstacles",
    "keeper_vs_keeper",
    "full_game",
)

CONTROL_DT = CONTROL_SUBSTEPS * (1.0 / 240.0)


class ContractViolation(ValueError):
    pass


@dataclass(frozen=True)
class ObsFlags:
    include_own_pos: bool = True
    include_own_vel: bool = False
    opponent_prismatic_only: bool = True
    use_filtered_ball: bool = False


@dataclass(frozen=True)
class RewardCoeffs:
    goal_reward: float = 1000.0
    out_penalty: float = -500.0
    c_goal_distance: float = 10.0
    c_figurine_ball: float = 5.0
    c_action_reg: float = 0.01

    def __post_init__(self):
        if min(self.c_goal_distance, self.c_figurine_ball, self.c_action_reg) < 0:
            raise ContractViolation("shaping coefficients must be >= 0")


@dataclass(frozen=True)
class TaskSpec:
    kind: str
    two_sided: bool
    controlled_rods: Dict[str, Tuple[int, ...]]
    action_joints: Dict[str, Tuple[Tuple[int, str], ...]]  # (rod index, "p"|"r")
    obstacle_rods: Tuple[int, ...] = ()
    obs_flags: ObsFlags = ObsFlags()
    reward_coeffs: RewardCoeffs = RewardCoeffs()
    episode_cap: int = 600  # control steps (10 s at 60 Hz)
    ball_speed_range: Tuple[float, float] = (2.0, 7.0)

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ContractViolation(f"unknown task kind {self.kind!r}")
        if not self.controlled_rods.get(WHITE):
            raise ContractViolation("protagonist side must control at least one rod")
        for side, rods in self.controlled_rods.items():
            if set(rods) & set(self.obstacle_rods):
                raise ContractViolation("obstacle rods must not be controlled")

    def action_dim(self, side: str = WHITE) -> int:
        return len(self.action_joints.get(side, ()))

    def to_json(self) -> str:
        doc = {
            "kind": self.kind,
            "two_sided": self.two_sided,
            "controlled_rods": {k: list(v) for k, v in self.controlled_rods.items()},
            "action_joints": {
                k: [[r, j] for r, j in v] for k, v in self.action_joints.items()
            },
            "obstacle_rods": list(self.obstacle_rods),
            "obs_flags": vars(self.obs_flags) | {},
            "reward_coeffs": vars(self.reward_coeffs) | {},
            "episode_cap": self.episode_cap,
            "ball_speed_range": list(self.ball_speed_range),
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "TaskSpec":
        doc = json.loads(text)
        return TaskSpec(
            kind=doc["kind"],
            two_sided=doc["two_sided"],
            controlled_rods={k: tuple(v) for k, v in doc["controlled_rods"].items()},
            action_joints={
                k: tuple((r, j) for r, j in v)
                for k, v in doc["action_joints"].items()
            },
            obstacle_rods=tuple(doc["obstacle_rods"]),
            obs_flags=ObsFlags(**doc["obs_flags"]),
            reward_coeffs=RewardCoeffs(**doc["reward_coeffs"]),
            episode_cap=doc["episode_cap"],
            ball_speed_range=tuple(doc["ball_speed_range"]),
        )


# ---------------------------------------------------------------------------
# Task builders
# ---------------------------------------------------------------------------


def side_rod_order(cfg: TableConfig, side: str) -> List[int]:
    """A side's rods as (keeper, defense, midfield, offense) indices."""
    order = ["keeper", "defense", "midfield", "offense"]
    rods = {cfg.rods[i].role: i for i in cfg.rod_indices(side)}
    return [rods[r] for r in order]


def make_task(kind: str, cfg: Optional[TableConfig] = None, **overrides) -> TaskSpec:
    cfg = cfg or TableConfig()
    kw = cfg.keeper_index(WHITE)
    kb = cfg.keeper_index(BLACK)
    white_order = side_rod_order(cfg, WHITE)
    black_order = side_rod_order(cfg, BLACK)

    if kind == "blocking":
        spec = TaskSpec(
            kind=kind,
            two_sided=False,
            controlled_rods={WHITE: (kw,)},
            action_joints={WHITE: ((kw, "p"),)},
            obs_flags=ObsFlags(include_own_pos=True, include_own_vel=False),
        )
    elif kind in ("scoring_resting", "scoring_incoming"):
        spec = TaskSpec(
            kind=kind,
            two_sided=False,
            controlled_rods={WHITE: (kw,)},
            action_joints={WHITE: ((kw, "p"), (kw, "r"))},
            obs_flags=ObsFlags(include_own_pos=True, include_own_vel=False),
        )
    elif kind == "scoring_obstacles":
        # Static opponent keeper, defense and offense; midfield absent.
        obstacles = tuple(
            i
            for i in cfg.rod_indices(BLACK)
            if cfg.rods[i].role in ("keeper", "defense", "offense")
        )
        spec = TaskSpec(
            kind=kind,
            two_sided=False,
            controlled_rods={WHITE: (kw,)},
            action_joints={WHITE: ((kw, "p"), (kw, "r"))},
            obstacle_rods=obstacles,
            obs_flags=ObsFlags(include_own_pos=True, include_own_vel=False),
        )
    elif kind == "keeper_vs_keeper":
        spec = TaskSpec(
            kind=kind,
            two_sided=True,
            controlled_rods={WHITE: (kw,), BLACK: (kb,)},
            action_joints={
                WHITE: ((kw, "p"), (kw, "r")),
                BLACK: ((kb, "p"), (kb, "r")),
            },
            obs_flags=ObsFlags(include_own_pos=True, include_own_vel=True),
            episode_cap=1800,
        )
    elif kind == "full_game":
        spec = TaskSpec(
            kind=kind,
            two_sided=True,
            controlled_rods={WHITE: tuple(white_order), BLACK: tuple(black_order)},
            action_joints={
                WHITE: tuple((r, j) for r in white_order for j in ("p", "r")),
                BLACK: tuple((r, j) for r in black_order for j in ("p", "r")),
            },
            obs_flags=ObsFlags(
                include_own_pos=True,
                include_own_vel=True,
                opponent_prismatic_only=False,
            ),
            episode_cap=1800,
        )
    else:
        raise ContractViolation(f"unknown task kind {kind!r}")
    if overrides:
        flag_keys = {k for k in overrides if hasattr(spec.obs_flags, k)}
        flags = replace(spec.obs_flags, **{k: overrides.pop(k) for k in flag_keys})
        spec = replace(spec, obs_flags=flags, **overrides)
    return spec


# ---------------------------------------------------------------------------
# Observation layout
# ---------------------------------------------------------------------------


def obs_layout(spec: TaskSpec, cfg: TableConfig) -> List[Tuple[str, object]]:
    """Side-relative observation tokens in documented order:
    own positions ++ own velocities ++ opponent block ++ ball."""
    flags = spec.obs_flags
    own = spec.action_joints[WHITE]  # own joints, white perspective template
    tokens: List[Tuple[str, object]] = []
    if flags.include_own_pos:
        tokens += [("own_pos", slot) for slot in range(len(own))]
    if flags.include_own_vel:
        tokens += [("own_vel", slot) for slot in range(len(own))]
    if spec.kind == "scoring_obstacles":
        tokens += [("obstacle_pos", r) for r in spec.obstacle_rods]
    if spec.two_sided:
        opp = spec.action_joints[BLACK]
        if flags.opponent_prismatic_only:
            opp_slots = [s for s, (_, j) in enumerate(opp) if j == "p"]
        else:
            opp_slots = list(range(len(opp)))
        tokens += [("opp_pos", s) for s in opp_slots]
        tokens += [("opp_vel", s) for s in opp_slots]
    tokens += [("ball", k) for k in range(4)]
    return tokens


def observation_dim(spec: TaskSpec, cfg: Optional[TableConfig] = None) -> int:
    return len(obs_layout(spec, cfg or TableConfig()))


def mirror_observation(obs: np.ndarray, spec: TaskSpec, cfg: Optional[TableConfig] = None) -> np.ndarray:
    """180-degree table rotation applied to an observation vector.

    Negates every entry and swaps the own/opponent blocks.  Only defined for
    two-sided tasks whose own and opponent blocks carry the same joints
    (full_game); keeper_vs_keeper exposes opponent prismatic joints only, so
    its mirror is taken at the world level instead.
    """
    cfg = cfg or TableConfig()
    if not spec.two_sided:
        raise ContractViolation("mirror_observation requires a two-sided task")
    tokens = obs_layout(spec, cfg)
    own_pos = [i for i, (b, _) in enumerate(tokens) if b == "own_pos"]
    own_vel = [i for i, (b, _) in enumerate(tokens) if b == "own_vel"]
    opp_pos = [i for i, (b, _) in enumerate(tokens) if b == "opp_pos"]
    opp_vel = [i for i, (b, _) in enumerate(tokens) if b == "opp_vel"]
    if len(own_pos) != len(opp_pos) or len(own_vel) != len(opp_vel):
        raise ContractViolation(
            "own/opponent blocks are asymmetric; mirror at the world level"
        )
    perm = np.arange(len(tokens))
    perm[own_pos] = opp_pos
    perm[opp_pos] = own_pos
    perm[own_vel] = opp_vel
    perm[opp_vel] = own_vel
    obs = np.asarray(obs)
    return -obs[..., perm]


def mirror_action(action: np.ndarray) -> np.ndarray:
    """Actions transform between sides by negation (point symmetry)."""
    return -np.asarray(action)


# ---------------------------------------------------------------------------
# Action scaling
# ---------------------------------------------------------------------------


def joint_range(cfg: TableConfig, rod: int, jtype: str) -> Tuple[float, float]:
    r = cfg.rods[rod]
    return r.prismatic_range if jtype == "p" else r.revolute_range


def scale_action(a: np.ndarray, spec: TaskSpec, cfg: TableConfig, side: str = WHITE) -> np.ndarray:
    """Affine map from [-1, 1] to joint-range position targets (world frame).

    Black actions are given in the mirrored frame and come out negated.
    """
    a = np.clip(np.asarray(a, dtype=float), -1.0, 1.0)
    joints = spec.action_joints[side]
    out = np.zeros(a.shape)
    sign = 1.0 if side == WHITE else -1.0
    for k, (rod, jtype) in enumerate(joints):
        lo, hi = joint_range(cfg, rod, jtype)
        mid, half = (lo + hi) / 2.0, (hi - lo) / 2.0
        out[..., k] = mid + sign * a[..., k] * half
    return out


# ---------------------------------------------------------------------------
# Batched environment
# ---------------------------------------------------------------------------


class EnvBatch:
    """N independent task environments stepped in lockstep.

    step() consumes per-side action matrices in [-1, 1] and returns
    (obs, rewards, dones, infos).  With auto_reset (default), instances that
    finish an episode are immediately reset and return the first observation
    of the new episode; their terminal statistics are reported in infos.
    """

    def __init__(
        self,
        spec: TaskSpec,
        cfg: Optional[TableConfig] = None,
        num_envs: int = 1,
        seed: int = 0,
        auto_reset: bool = True,
        sensor: Optional[SensorConfig] = None,
        camera: Optional[CameraModel] = None,
    ):
        self.spec = spec
        self.cfg = cfg or TableConfig()
        self.n = num_envs
        self.auto_reset = auto_reset
        self.seed = seed
        self.batch = BatchWorld(self.cfg, num_envs)
        self.rngs = [np.random.default_rng([seed, i]) for i in range(num_envs)]

        active = np.zeros(8, dtype=bool)
        for rods in spec.controlled_rods.values():
            active[list(rods)] = True
        if spec.obstacle_rods:
            active[list(spec.obstacle_rods)] = True
        self.active_rods = active

        self.episode_steps = np.zeros(num_envs, dtype=np.int64)
        self.touched = np.zeros(num_envs, dtype=bool)
        self.done = np.zeros(num_envs, dtype=bool)

        if spec.obs_flags.use_filtered_ball:
            self.sensor = sensor or SensorConfig()
            self.camera = camera or CameraModel()
            self.ball_filter = BatchBallEstimator(
                num_envs, self.camera, self.sensor, self.cfg, master_seed=seed
            )
        else:
            if sensor is not None:
                raise ContractViolation(
                    "sensor config given but task does not use filtered ball"
                )
            self.ball_filter = None
        self._filtered_ball = np.zeros((num_envs, 4))

        self._layout = obs_layout(spec, self.cfg)
        self.obs_dim = len(self._layout)
        self._keepers = {s: self.cfg.keeper_index(s) for s in (WHITE, BLACK)}
        # Disc rows belonging to each side's controlled rods (for d_fig and
        # the blocking touch flag).
        self._side_discs = {}
        for side, rods in spec.controlled_rods.items():
            rows = [
                j
                for j in range(self.batch.num_discs)
                if int(self.batch.disc_rod[j]) in rods
            ]
            self._side_discs[side] = np.array(rows, dtype=np.int64)
        self.reset_all()

    # -- resets -----------------------------------------------------------

    def reset_all(self) -> np.ndarray:
        self.reset_instances(np.arange(self.n))
        return self.observations(WHITE)

    def reset_instances(self, idx: np.ndarray):
        idx = np.atleast_1d(np.asarray(idx, dtype=np.int64))
        if idx.size == 0:
            return
        pos = np.zeros((idx.size, 2))
        vel = np.zeros((idx.size, 2))
        for k, i in enumerate(idx):
            pos[k], vel[k] = self._draw_reset(self.rngs[int(i)])
        self.batch.reset_instances(idx, pos, vel)
        if self.spec.kind == "scoring_obstacles":
            for k, i in enumerate(idx):
                rng = self.rngs[int(i)]
                for rod in self.spec.obstacle_rods:
                    lo, hi = self.cfg.rods[rod].prismatic_range
                    p = rng.uniform(lo, hi)
                    self.batch.pris_pos[i, rod] = p
                    self.batch.pris_target[i, rod] = p
        self.episode_steps[idx] = 0
        self.touched[idx] = False
        self.done[idx] = False
        if self.ball_filter is not None:
            self.ball_filter.reset_instances(idx)
            self._filtered_ball[idx] = 0.0

    def _draw_reset(self, rng: np.random.Generator):
        cfg = self.cfg
        kind = self.spec.kind
        if kind in ("blocking", "scoring_incoming"):
            # Ball on the opponent (black) half, aimed at a uniform point on
            # the white goal mouth.
            x = rng.uniform(0.05, cfg.field_length / 2.0 - 0.05)
            y = rng.uniform(-(cfg.field_width / 2.0 - 0.05), cfg.field_width / 2.0 - 0.05)
            speed = rng.uniform(*self.spec.ball_speed_range)
            aim_y = rng.uniform(-cfg.goal_width / 2.0, cfg.goal_width / 2.0)
            d = np.array([-cfg.field_length / 2.0 - x, aim_y - y])
            v = d / np.linalg.norm(d) * speed
            return np.array([x, y]), v
        if kind in ("scoring_resting", "scoring_obstacles"):
            return self._resting_near_keeper(rng, WHITE), np.zeros(2)
        if kind == "keeper_vs_keeper":
            side = WHITE if rng.uniform() < 0.5 else BLACK
            return self._resting_near_keeper(rng, side), np.zeros(2)
        if kind == "full_game":
            # Centre kickoff with a random lateral offset.
            return np.array([0.0, rng.uniform(-0.2, 0.2)]), np.zeros(2)
        raise ContractViolation(f"no reset law for {kind!r}")

    def _resting_near_keeper(self, rng: np.random.Generator, side: str) -> np.ndarray:
        cfg = self.cfg
        keeper = cfg.rods[self._keepers[side]]
        sign = 1.0 if side == WHITE else -1.0
        # In front of the keeper, inside kicking reach of the foot sweep and
        # prismatic travel, just outside resting contact distance.
        x = keeper.x_position + sign * rng.uniform(0.032, 0.055)
        reach = keeper.prismatic_range[1] - 0.01
        y = rng.uniform(-reach, reach)
        return np.array([x, y])

    # -- observations -----------------------------------------------------

    def observations(self, side: str) -> np.ndarray:
        spec, cfg, batch = self.spec, self.cfg, self.batch
        if side == BLACK and not spec.two_sided:
            raise ContractViolation("one-sided task has no black observation")
        sign = 1.0 if side == WHITE else -1.0
        other = BLACK if side == WHITE else WHITE
        own_joints = spec.action_joints[side]
        opp_joints = spec.action_joints.get(other, ())
        obs = np.zeros((self.n, self.obs_dim))
        if spec.obs_flags.use_filtered_ball:
            ball = self._filtered_ball
        else:
            ball = np.concatenate([batch.ball_pos, batch.ball_vel], axis=1)
        for col, (block, slot) in enumerate(self._layout):
            if block == "ball":
                obs[:, col] = sign * ball[:, slot]
            elif block == "obstacle_pos":
                obs[:, col] = sign * batch.pris_pos[:, slot]
            else:
                joints = own_joints if block.startswith("own") else opp_joints
                rod, jtype = joints[slot]
                pos = block.endswith("pos")
                if jtype == "p":
                    arr = batch.pris_pos if pos else batch.pris_vel
                else:
                    arr = batch.rev_pos if pos else batch.rev_vel
                obs[:, col] = sign * arr[:, rod]
        return obs

    # -- potentials -------------------------------------------------------

    def _d_goal(self, side: str) -> np.ndarray:
        sign = 1.0 if side == WHITE else -1.0
        goal = np.array([sign * self.cfg.field_length / 2.0, 0.0])
        d = self.batch.ball_pos - goal[None, :]
        return np.hypot(d[:, 0], d[:, 1])

    def _d_fig(self, side: str) -> np.ndarray:
        rows = self._side_discs[side]
        ri = self.batch.disc_rod[rows]
        y_foot = self.batch.disc_base_y[None, rows] + self.batch.pris_pos[:, ri]
        return np.min(np.abs(y_foot - self.batch.ball_pos[:, 1:2]), axis=1)

    # -- stepping ---------------------------------------------------------

    def step(self, actions_white: np.ndarray, actions_black: Optional[np.ndarray] = None):
        spec, cfg = self.spec, self.cfg
        if np.any(self.done):
            raise ContractViolation("stepping a done environment (auto_reset off)")
        actions_white = np.clip(
            np.asarray(actions_white, dtype=float).reshape(self.n, -1), -1.0, 1.0
        )
        if actions_white.shape[1] != spec.action_dim(WHITE):
            raise ContractViolation("white action dimension mismatch")
        sides = [WHITE]
        acts = {WHITE: actions_white}
        if spec.two_sided:
            if actions_black is None:
                raise ContractViolation("two-sided task needs black actions")
            actions_black = np.clip(
                np.asarray(actions_black, dtype=float).reshape(self.n, -1), -1.0, 1.0
            )
            if actions_black.shape[1] != spec.action_dim(BLACK):
                raise ContractViolation("black action dimension mismatch")
            sides.append(BLACK)
            acts[BLACK] = actions_black
        elif actions_black is not None:
            raise ContractViolation("one-sided task takes no black actions")

        prev_goal = {s: self._d_goal(s) for s in sides}
        prev_fig = {s: self._d_fig(s) for s in sides}

        for side in sides:
            targets = scale_action(acts[side], spec, cfg, side)
            for k, (rod, jtype) in enumerate(spec.action_joints[side]):
                if jtype == "p":
                    self.batch.pris_target[:, rod] = targets[:, k]
                else:
                    self.batch.rev_target[:, rod] = targets[:, k]

        ev = self.batch.step(CONTROL_SUBSTEPS, active_rods=self.active_rods)
        self.episode_steps += 1

        if self.ball_filter is not None:
            self._filtered_ball = self.ball_filter.observe(self.batch.ball_pos)

        white_rows = self._side_discs[WHITE]
        self.touched |= np.any(ev["contacts"][:, white_rows], axis=1)

        goal_against = ev["goal_against"]
        conceded_white = goal_against == IN_GOAL_WHITE
        conceded_black = goal_against == IN_GOAL_BLACK
        ball_out = ev["ball_out"]

        rewards = {}
        for side in sides:
            own_conceded = conceded_white if side == WHITE else conceded_black
            opp_conceded = conceded_black if side == WHITE else conceded_white
            c = spec.reward_coeffs
            r = np.zeros(self.n)
            r += np.where(opp_conceded, c.goal_reward, 0.0)
            r -= np.where(own_conceded, c.goal_reward, 0.0)
            r += np.where(ball_out, c.out_penalty, 0.0)
            r += c.c_goal_distance * (prev_goal[side] - self._d_goal(side))
            r += c.c_figurine_ball * (prev_fig[side] - self._d_fig(side))
            r -= c.c_action_reg * np.sum(acts[side] ** 2, axis=1)
            rewards[side] = r

        done, success, outcome = self._termination(
            conceded_white, conceded_black, ball_out
        )
        infos = {
            "done": done,
            "success": success,
            "outcome": outcome,
            "goal_against": goal_against,
            "ball_out": ball_out,
            "touched": self.touched.copy(),
            "episode_steps": self.episode_steps.copy(),
        }

        if self.auto_reset:
            self.reset_instances(np.nonzero(done)[0])
        else:
            self.done = done

        obs = {side: self.observations(side) for side in sides}
        if spec.two_sided:
            return obs, rewards, done, infos
        return obs[WHITE], rewards[WHITE], done, infos

    def _termination(self, conceded_white, conceded_black, ball_out):
        spec = self.spec
        capped = self.episode_steps >= spec.episode_cap
        any_goal = conceded_white | conceded_black
        speed = np.hypot(self.batch.ball_vel[:, 0], self.batch.ball_vel[:, 1])
        at_rest = (speed == 0.0) & (self.batch.ball_status == IN_PLAY)

        if spec.kind == "blocking":
            cleared = (
                self.touched
                & (self.batch.ball_pos[:, 0] > 0.0)
                & (self.batch.ball_vel[:, 0] > 0.0)
            )
            done = any_goal | ball_out | capped | cleared | at_rest
            success = done & ~conceded_white & ~ball_out & (
                cleared | at_rest | conceded_black | (capped & self.touched)
            )
            outcome = np.where(success, 1, np.where(done, -1, 0))
            return done, success, outcome

        if spec.kind.startswith("scoring"):
            done = any_goal | ball_out | capped
            success = conceded_black.copy()
            outcome = np.where(success, 1, np.where(done, -1, 0))
            return done, success, outcome

        # Two-sided: win/loss/draw from the white perspective.
        done = any_goal | ball_out | capped
        success = conceded_black.copy()
        outcome = np.where(
            conceded_black, 1, np.where(conceded_white, -1, 0)
        )
        outcome = np.where(done, outcome, 0)
        return done, success, outcome


# ---------------------------------------------------------------------------
# Episode traces
# ---------------------------------------------------------------------------


def write_trace(path, rows: Sequence[dict]):
    """Episode trace as JSONL: {tick, obs, action, reward, events} rows."""
    with open(path, "w") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")


def trace_row(tick: int, obs, action, reward: float, events: dict) -> dict:
    return {
        "tick": int(tick),
        "obs": np.asarray(obs, dtype=float).tolist(),
        "action": np.asarray(action, dtype=float).tolist(),
        "reward": float(reward),
        "events": events,
    }
