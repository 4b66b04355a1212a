"""Authoritative real-time match runtime.

A Match owns the world and advances it at the 60 Hz control rate: each tick
it applies the latest human setpoints (holding the previous ones when the
client is silent), runs the machine policy, steps the physics, appends a log
record and emits a `state` wire message.  Timing is injected through a clock
object so the loop is exactly testable headless.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional

import numpy as np

from .physics import IN_GOAL_BLACK, IN_GOAL_WHITE
from .tasks import BLACK, WHITE, ContractViolation, EnvBatch, TaskSpec, make_task

PROTOCOL_VERSION = 1
CONTROL_HZ = 60.0
GOAL_PAUSE_TICKS = 120  # 2 s reset countdown between goals


class ProtocolError(ValueError):
    pass


@dataclass
class MatchConfig:
    task_kind: str = "keeper_vs_keeper"
    human_side: str = WHITE
    checkpoint_path: Optional[str] = None
    sensing: str = "ground_truth"  # or "filtered"
    score_limit: int = 5
    time_limit_s: float = 300.0
    seed: int = 0

    def __post_init__(self):
        if self.task_kind not in ("keeper_vs_keeper", "full_game"):
            raise ContractViolation("match task must be keeper_vs_keeper or full_game")
        if self.human_side not in (WHITE, BLACK):
            raise ContractViolation("human_side must be white or black")
        if self.sensing not in ("ground_truth", "filtered"):
            raise ContractViolation("sensing must be ground_truth or filtered")


class MonotonicClock:
    """Wall clock; swap for MockClock in tests."""

    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float):
        if seconds > 0:
            time.sleep(seconds)


class MockClock:
    def __init__(self):
        self.t = 0.0
        self.slept: List[float] = []

    def now(self) -> float:
        return self.t

    def sleep(self, seconds: float):
        if seconds > 0:
            self.slept.append(seconds)
            self.t += seconds


def _side_name(code: int) -> Optional[str]:
    if code == IN_GOAL_WHITE:
        return WHITE
    if code == IN_GOAL_BLACK:
        return BLACK
    return None


class Match:
    """One human-vs-machine (or scripted-vs-machine) match instance."""

    def __init__(self, config: MatchConfig, params=None):
        self.config = config
        self.spec: TaskSpec = make_task(config.task_kind)
        if config.sensing == "filtered":
            self.spec = make_task(config.task_kind, use_filtered_ball=True)
        self.env = EnvBatch(
            self.spec, num_envs=1, seed=config.seed, auto_reset=True
        )
        self.machine_side = BLACK if config.human_side == WHITE else WHITE

        if params is None and config.checkpoint_path is not None:
            from .checkpoint import load_checkpoint

            params, _ = load_checkpoint(config.checkpoint_path, spec=self.spec)
        self.params = params

        self.tick = 0
        self.score = {WHITE: 0, BLACK: 0}
        self.pause_ticks = 0
        self.finished = False
        self.result: Optional[Dict] = None
        self.log: List[Dict] = []
        dims = {s: self.spec.action_dim(s) for s in (WHITE, BLACK)}
        self._latest = {s: np.zeros(dims[s]) for s in (WHITE, BLACK)}

    # -- wire input -------------------------------------------------------

    def handle_action(self, side: str, msg: Dict) -> Dict:
        """Apply an `action` wire message for a joined side.

        Values are clamped to [-1, 1]; rods not owned by the side are a
        protocol violation answered with an `error` reply.  The latest
        message before a tick wins."""
        if msg.get("type") != "action":
            raise ProtocolError("expected an action message")
        owned = set(self.spec.controlled_rods[side])
        action = self._latest[side].copy()
        joints = self.spec.action_joints[side]
        index = {jt: k for k, jt in enumerate(joints)}
        for entry in msg.get("rods", []):
            rod = int(entry["rod"])
            if rod not in owned:
                raise ProtocolError(f"rod {rod} is not controlled by side {side!r}")
            for field_name, jtype in (("prismatic", "p"), ("revolute", "r")):
                if field_name in entry and (rod, jtype) in index:
                    v = float(entry[field_name])
                    action[index[(rod, jtype)]] = min(max(v, -1.0), 1.0)
        self._latest[side] = action
        return {"type": "ack", "protocol_version": PROTOCOL_VERSION}

    def set_action(self, side: str, action: np.ndarray):
        """Scripted-client path: raw action vector in [-1, 1]."""
        a = np.clip(np.asarray(action, dtype=float), -1.0, 1.0)
        if a.shape != self._latest[side].shape:
            raise ContractViolation("scripted action dimension mismatch")
        self._latest[side] = a

    # -- loop body --------------------------------------------------------

    def _machine_action(self) -> np.ndarray:
        if self.params is None:
            return np.zeros(self.spec.action_dim(self.machine_side))
        from .ppo import policy_forward

        obs = self.env.observations(self.machine_side)
        mean, _, _ = policy_forward(self.params, obs)
        return mean[0]

    def step(self) -> Dict:
        """Advance one control tick and return the `state` wire message."""
        if self.finished:
            raise ContractViolation("match already finished")
        events: List[Dict] = []
        if self.pause_ticks > 0:
            # Reset countdown: world holds (the env already respawned).
            self.pause_ticks -= 1
            applied = {s: self._latest[s].tolist() for s in (WHITE, BLACK)}
        else:
            self._latest[self.machine_side] = np.asarray(
                self._machine_action(), dtype=float
            )
            acts = {s: self._latest[s] for s in (WHITE, BLACK)}
            applied = {s: acts[s].tolist() for s in (WHITE, BLACK)}
            _, _, done, infos = self.env.step(
                acts[WHITE][None, :], acts[BLACK][None, :]
            )
            against = _side_name(int(infos["goal_against"][0]))
            if against is not None:
                scorer = WHITE if against == BLACK else BLACK
                self.score[scorer] += 1
                events.append({"type": "goal", "against": against})
                self.pause_ticks = GOAL_PAUSE_TICKS
            elif bool(infos["ball_out"][0]):
                events.append({"type": "ball_out"})

        self.tick += 1
        state = self.state_message(events)
        self.log.append(
            {**state, "actions": applied}
        )
        if (
            max(self.score.values()) >= self.config.score_limit
            or self.tick / CONTROL_HZ >= self.config.time_limit_s
        ):
            self.finished = True
            w, b = self.score[WHITE], self.score[BLACK]
            self.result = {
                "score": dict(self.score),
                "winner": WHITE if w > b else BLACK if b > w else "draw",
            }
        return state

    def state_message(self, events: Optional[List[Dict]] = None) -> Dict:
        w = self.env.batch
        rods = [
            {
                "p": float(w.pris_pos[0, r]),
                "p_dot": float(w.pris_vel[0, r]),
                "theta": float(w.rev_pos[0, r]),
                "omega": float(w.rev_vel[0, r]),
            }
            for r in range(8)
        ]
        return {
            "type": "state",
            "protocol_version": PROTOCOL_VERSION,
            "tick": self.tick,
            "time_s": self.tick / CONTROL_HZ,
            "ball": {
                "x": float(w.ball_pos[0, 0]),
                "y": float(w.ball_pos[0, 1]),
                "vx": float(w.ball_vel[0, 0]),
                "vy": float(w.ball_vel[0, 1]),
            },
            "rods": rods,
            "score": dict(self.score),
            "events": events or [],
        }

    def end_message(self) -> Dict:
        return {
            "type": "end",
            "protocol_version": PROTOCOL_VERSION,
            "result": self.result,
        }


def run_headless(
    match: Match,
    max_ticks: int,
    scripted: Optional[Callable[[Match, int], Optional[np.ndarray]]] = None,
) -> List[Dict]:
    """Run a match without networking; scripted(match, tick) may return the
    human-side action each tick.  Returns the wire messages (states + end)."""
    out = []
    for t in range(max_ticks):
        if scripted is not None:
            a = scripted(match, t)
            if a is not None:
                match.set_action(match.config.human_side, a)
        out.append(match.step())
        if match.finished:
            out.append(match.end_message())
            break
    return out


def write_match_log(path, match: Match):
    with open(path, "w") as f:
        for row in match.log:
            f.write(json.dumps(row) + "\n")
        if match.result is not None:
            f.write(json.dumps(match.end_message()) + "\n")


def replay(path, speed: float = 1.0, clock=None) -> Iterator[Dict]:
    """Re-broadcast a recorded log at scaled cadence; no physics runs.

    Ends with the recorded `end` message, or `end{result: truncated}` when
    the log stops without one."""
    if speed <= 0:
        raise ContractViolation("replay speed must be positive")
    clock = clock or MonotonicClock()
    dt = 1.0 / (CONTROL_HZ * speed)
    saw_end = False
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if row.get("type") == "end":
                saw_end = True
                yield row
                break
            clock.sleep(dt)
            yield row
    if not saw_end:
        yield {
            "type": "end",
            "protocol_version": PROTOCOL_VERSION,
            "result": "truncated",
        }


def serve_loop(
    match: Match,
    broadcast: Callable[[Dict], None],
    clock=None,
    max_ticks: Optional[int] = None,
    poll: Optional[Callable[[], None]] = None,
):
    """Fixed-rate authoritative loop: poll inputs, step, broadcast.

    `poll` drains queued client actions into the match; `broadcast` must not
    block.  One state message is emitted per control tick, paced by the
    clock (ticks are never skipped, the loop catches up after stalls)."""
    clock = clock or MonotonicClock()
    dt = 1.0 / CONTROL_HZ
    next_tick = clock.now() + dt
    while not match.finished:
        if max_ticks is not None and match.tick >= max_ticks:
            break
        if poll is not None:
            poll()
        broadcast(match.step())
        clock.sleep(next_tick - clock.now())
        next_tick += dt
    if match.finished:
        broadcast(match.end_message())
