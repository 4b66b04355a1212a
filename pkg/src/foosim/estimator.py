"""Synthetic detection stream and Kalman tracking for ball and rods.

A virtual overhead camera projects world positions to pixels; detections are
the projections plus isotropic pixel noise, dropped out with a configurable
probability.  A constant-velocity Kalman filter per tracked object recovers
velocities; predictions can look ahead several frames and reflect the ball
off the table walls using the same restitution law as the physics core.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .physics import TableConfig

BALL_ID = "ball"


class EstimatorError(ValueError):
    pass


@dataclass(frozen=True)
class SensorConfig:
    resolution: Tuple[int, int] = (1280, 720)
    fps: float = 60.0
    noise_sigma_px: float = 2.0
    dropout_prob: float = 0.05
    latency_frames: int = 2

    def __post_init__(self):
        if self.fps > 90.0:
            raise EstimatorError("camera supports at most 90 fps")
        if self.noise_sigma_px < 0.0:
            raise EstimatorError("noise_sigma_px must be >= 0")
        if not 0.0 <= self.dropout_prob < 1.0:
            raise EstimatorError("dropout_prob must be in [0, 1)")

    @property
    def frame_dt(self) -> float:
        return 1.0 / self.fps


@dataclass(frozen=True)
class CameraModel:
    """Affine world->pixel map; image v axis points down."""

    scale: float = 1000.0  # px per metre
    offset: Tuple[float, float] = (640.0, 360.0)

    def world_to_pixel(self, x: float, y: float) -> Tuple[float, float]:
        return (self.offset[0] + self.scale * x, self.offset[1] - self.scale * y)

    def pixel_to_world(self, u: float, v: float) -> Tuple[float, float]:
        return ((u - self.offset[0]) / self.scale, (self.offset[1] - v) / self.scale)

    def measurement_covariance(self, noise_sigma_px: float) -> np.ndarray:
        var = (noise_sigma_px / self.scale) ** 2
        # Zero pixel noise still needs an invertible R; floor at 0.1 mm.
        return np.eye(2) * max(var, 1e-8)


@dataclass
class Detection:
    object_id: str          # "ball" or "rod<k>"
    frame: int
    present: bool
    u: float = 0.0
    v: float = 0.0


def render_measurement(
    objects: Dict[str, Tuple[float, float]],
    frame: int,
    cam: CameraModel,
    cfg: SensorConfig,
    rng: np.random.Generator,
) -> List[Detection]:
    """Project world positions to noisy pixel detections with dropout."""
    out = []
    for oid, (x, y) in objects.items():
        if rng.uniform() < cfg.dropout_prob:
            out.append(Detection(oid, frame, present=False))
            continue
        u, v = cam.world_to_pixel(x, y)
        if cfg.noise_sigma_px > 0.0:
            noise = rng.normal(0.0, cfg.noise_sigma_px, size=2)
            u, v = u + noise[0], v + noise[1]
        out.append(Detection(oid, frame, present=True, u=u, v=v))
    return out


# ---------------------------------------------------------------------------
# Constant-velocity Kalman filter, position-only measurements
# ---------------------------------------------------------------------------

INIT_VARIANCE = 1e4
MAHALANOBIS_GATE = 5.0
# Consecutive gated-out measurements before a track is declared lost and
# re-initialized from the next measurement (e.g. after an unmodelled kick).
REACQUIRE_AFTER = 5
# Process-noise accelerations (white-noise-acceleration CV model).  The ball
# rolls almost freely between contacts, so its tuning is small; rods are
# motor-driven and manoeuvre hard.
BALL_SIGMA_A = 0.2
ROD_SIGMA_A = 30.0


def cv_matrices(dim: int, dt: float, sigma_a: float):
    """Transition and process noise for a [pos, vel] per-axis CV model."""
    axes = dim // 2
    F = np.eye(dim)
    Q = np.zeros((dim, dim))
    q = sigma_a**2 * np.array(
        [[dt**4 / 4.0, dt**3 / 2.0], [dt**3 / 2.0, dt**2]]
    )
    for a in range(axes):
        F[a, axes + a] = dt
        Q[np.ix_([a, axes + a], [a, axes + a])] = q
    return F, Q


class TrackFilter:
    """CV Kalman track; state layout [positions..., velocities...].

    When the tracked object is the ball, its known rolling deceleration can
    be folded into the mean propagation (substepped at `decel_dt` to match
    the physics integrator); the covariance still follows the linear CV
    model, whose Jacobian the friction term barely perturbs.
    """

    def __init__(self, dim: int, sigma_a: float, decel: float = 0.0,
                 decel_dt: Optional[float] = None):
        self.dim = dim
        self.axes = dim // 2
        self.sigma_a = sigma_a
        self.decel = decel
        self.decel_dt = decel_dt
        self.mean = np.zeros(dim)
        self.cov = np.eye(dim) * INIT_VARIANCE
        self.initialized = False
        self.last_update_frame: Optional[int] = None
        self.gated_streak = 0
        H = np.zeros((self.axes, dim))
        H[:, : self.axes] = np.eye(self.axes)
        self.H = H

    def reset(self):
        self.mean[:] = 0.0
        self.cov = np.eye(self.dim) * INIT_VARIANCE
        self.initialized = False
        self.last_update_frame = None
        self.gated_streak = 0

    def predict(self, dt: float):
        if dt <= 0.0:
            raise EstimatorError("dt must be positive")
        if not self.initialized:
            return
        F, Q = cv_matrices(self.dim, dt, self.sigma_a)
        if self.decel > 0.0:
            sub = self.decel_dt or dt
            n = max(1, round(dt / sub))
            pos = self.mean[: self.axes].copy()
            vel = self.mean[self.axes :].copy()
            for _ in range(n):
                speed = float(np.hypot(*vel)) if self.axes == 2 else abs(vel[0])
                if speed > 0.0:
                    vel *= max(speed - self.decel * sub, 0.0) / speed
                pos += vel * sub
            self.mean = np.concatenate([pos, vel])
        else:
            self.mean = F @ self.mean
        self.cov = F @ self.cov @ F.T + Q
        self.cov = 0.5 * (self.cov + self.cov.T)

    def update(self, z: np.ndarray, R: np.ndarray, frame: Optional[int] = None):
        z = np.asarray(z, dtype=float)
        eigs = np.linalg.eigvalsh(R)
        if np.any(eigs <= 0.0):
            raise EstimatorError("measurement covariance must be SPD")
        if not self.initialized:
            self.mean[: self.axes] = z
            self.mean[self.axes :] = 0.0
            self.cov = np.eye(self.dim) * INIT_VARIANCE
            self.initialized = True
            self.last_update_frame = frame
            self.gated_streak = 0
            return
        H = self.H
        S = H @ self.cov @ H.T + R
        innov = z - H @ self.mean
        maha = float(innov @ np.linalg.solve(S, innov))
        if maha > MAHALANOBIS_GATE**2:
            # Outlier; treat as a predict-only frame, but give up on the
            # track after a run of rejections (unmodelled impulse).
            self.gated_streak += 1
            if self.gated_streak >= REACQUIRE_AFTER:
                self.initialized = False
                self.update(z, R, frame=frame)
            return
        self.gated_streak = 0
        K = self.cov @ H.T @ np.linalg.inv(S)
        self.mean = self.mean + K @ innov
        I_KH = np.eye(self.dim) - K @ H
        # Joseph form keeps the covariance symmetric positive-definite.
        self.cov = I_KH @ self.cov @ I_KH.T + K @ R @ K.T
        self.cov = 0.5 * (self.cov + self.cov.T)
        self.last_update_frame = frame


def predict_ball_ahead(
    mean: np.ndarray,
    horizon_frames: int,
    frame_dt: float,
    table: TableConfig,
) -> np.ndarray:
    """Free-flight look-ahead of a ball track mean with wall reflections.

    Replays the physics core's free-ball law (rolling deceleration, then
    walls with the normal scaled by wall_restitution and the tangential
    component by wall_tangential_factor) at the physics timestep, so the
    prediction agrees with an actual rollout whenever no figurine is hit.
    Balls crossing the end line inside the goal mouth are left untouched.
    """
    if horizon_frames < 0:
        raise EstimatorError("horizon must be >= 0")
    x, y, vx, vy = [float(v) for v in mean]
    y_lim = table.field_width / 2.0 - table.ball_radius
    x_lim = table.field_length / 2.0 - table.ball_radius
    half_mouth = table.goal_width / 2.0
    e = table.wall_restitution
    tf = table.wall_tangential_factor
    dt = table.physics_dt
    substeps = max(1, round(frame_dt / dt))
    for _ in range(horizon_frames * substeps):
        speed = math.hypot(vx, vy)
        if speed > 0.0:
            scale = max(speed - table.rolling_decel * dt, 0.0) / speed
            vx *= scale
            vy *= scale
        x += vx * dt
        y += vy * dt
        if y > y_lim:
            y = y_lim
            if vy > 0.0:
                vy = -e * vy
                vx *= tf
        elif y < -y_lim:
            y = -y_lim
            if vy < 0.0:
                vy = -e * vy
                vx *= tf
        if abs(y) >= half_mouth:
            if x > x_lim:
                x = x_lim
                if vx > 0.0:
                    vx = -e * vx
                    vy *= tf
            elif x < -x_lim:
                x = -x_lim
                if vx < 0.0:
                    vx = -e * vx
                    vy *= tf
    return np.array([x, y, vx, vy])


class BallEstimator:
    """Latency-aware ball tracker over a synthetic camera stream.

    Detections are consumed with `latency_frames` delay: the estimate at
    frame t has only seen measurements from frames <= t - L and compensates
    by predicting L frames ahead.
    """

    def __init__(
        self,
        cam: CameraModel,
        sensor: SensorConfig,
        table: TableConfig,
        sigma_a: float = BALL_SIGMA_A,
    ):
        self.cam = cam
        self.sensor = sensor
        self.table = table
        self.filter = TrackFilter(
            4, sigma_a, decel=table.rolling_decel, decel_dt=table.physics_dt
        )
        self.R = cam.measurement_covariance(sensor.noise_sigma_px)
        self._pending: List[Optional[Detection]] = []

    def reset(self):
        self.filter.reset()
        self._pending = []

    def observe(self, detection: Optional[Detection]):
        """Feed this frame's detection; returns the latency-compensated
        [x, y, vx, vy] estimate for the current frame."""
        self._pending.append(detection)
        dt = self.sensor.frame_dt
        lat = self.sensor.latency_frames
        if len(self._pending) > lat:
            d = self._pending.pop(0)
            if self.filter.initialized:
                self.filter.predict(dt)
            if d is not None and d.present:
                z = np.array(self.cam.pixel_to_world(d.u, d.v))
                self.filter.update(z, self.R, frame=d.frame)
        if not self.filter.initialized:
            return None
        return predict_ball_ahead(self.filter.mean, lat, dt, self.table)


class RodEstimator:
    """Prismatic-position tracker for one opponent rod."""

    def __init__(self, cam: CameraModel, sensor: SensorConfig, sigma_a: float = ROD_SIGMA_A):
        self.cam = cam
        self.sensor = sensor
        self.filter = TrackFilter(2, sigma_a)
        var = (sensor.noise_sigma_px / cam.scale) ** 2
        self.R = np.array([[max(var, 1e-8)]])

    def observe(self, detection: Optional[Detection], rod_x: float):
        if self.filter.initialized:
            self.filter.predict(self.sensor.frame_dt)
        if detection is not None and detection.present:
            _, y = self.cam.pixel_to_world(detection.u, detection.v)
            self.filter.update(np.array([y]), self.R, frame=detection.frame)
        if not self.filter.initialized:
            return None
        return self.filter.mean.copy()


# ---------------------------------------------------------------------------
# Vectorized ball filter for estimator-in-the-loop training
# ---------------------------------------------------------------------------


class BatchBallEstimator:
    """One latency-compensated CV ball track per environment instance.

    All instances share the camera, sensor config and per-frame matrices;
    means are (n, 4) and covariances (n, 4, 4).  Per-instance measurement
    noise and dropout come from independent RNG streams so trajectories
    stay independent of the batch size.
    """

    def __init__(
        self,
        n: int,
        cam: CameraModel,
        sensor: SensorConfig,
        table: TableConfig,
        master_seed: int,
        sigma_a: float = BALL_SIGMA_A,
    ):
        self.n = n
        self.cam = cam
        self.sensor = sensor
        self.table = table
        self.sigma_a = sigma_a
        self.mean = np.zeros((n, 4))
        self.cov = np.tile(np.eye(4) * INIT_VARIANCE, (n, 1, 1))
        self.initialized = np.zeros(n, dtype=bool)
        self.gated_streak = np.zeros(n, dtype=int)
        self.R = cam.measurement_covariance(sensor.noise_sigma_px)
        self.F, self.Q = cv_matrices(4, sensor.frame_dt, sigma_a)
        self.rngs = [
            np.random.default_rng([master_seed, 0xE57, i]) for i in range(n)
        ]
        # Per-instance measurement FIFO; NaN marks a dropped-out frame.
        self._pending: List[List[np.ndarray]] = [[] for _ in range(n)]

    def reset_instances(self, idx):
        self.mean[idx] = 0.0
        self.cov[idx] = np.eye(4) * INIT_VARIANCE
        self.initialized[idx] = False
        self.gated_streak[idx] = 0
        for i in np.atleast_1d(idx):
            self._pending[int(i)] = []

    def observe(self, true_pos: np.ndarray) -> np.ndarray:
        """Feed one camera frame of ball truth (n, 2); returns (n, 4)
        latency-compensated estimates (zeros until a track initializes)."""
        n = self.n
        lat = self.sensor.latency_frames
        due = np.full((n, 2), np.nan)
        ready = np.zeros(n, dtype=bool)
        for i in range(n):
            rng = self.rngs[i]
            if rng.uniform() < self.sensor.dropout_prob:
                meas_i = np.array([np.nan, np.nan])
            else:
                u, v = self.cam.world_to_pixel(true_pos[i, 0], true_pos[i, 1])
                if self.sensor.noise_sigma_px > 0.0:
                    noise = rng.normal(0.0, self.sensor.noise_sigma_px, size=2)
                    u, v = u + noise[0], v + noise[1]
                meas_i = np.array(self.cam.pixel_to_world(u, v))
            fifo = self._pending[i]
            fifo.append(meas_i)
            if len(fifo) > lat:
                due[i] = fifo.pop(0)
                ready[i] = True

        self._advance(due, ready)
        est = np.zeros((n, 4))
        init = self.initialized
        if np.any(init):
            est[init] = self._predict_ahead(self.mean[init], lat)
        return est

    def _advance(self, meas: np.ndarray, ready: np.ndarray):
        init = self.initialized & ready
        if np.any(init):
            pos = self.mean[init, 0:2].copy()
            vel = self.mean[init, 2:4].copy()
            sub = self.table.physics_dt
            d = self.table.rolling_decel
            for _ in range(max(1, round(self.sensor.frame_dt / sub))):
                speed = np.hypot(vel[:, 0], vel[:, 1])
                scale = np.where(
                    speed > 0.0,
                    np.maximum(speed - d * sub, 0.0)
                    / np.where(speed > 0.0, speed, 1.0),
                    0.0,
                )
                vel *= scale[:, None]
                pos += vel * sub
            self.mean[init, 0:2] = pos
            self.mean[init, 2:4] = vel
            self.cov[init] = (
                np.einsum("ij,njk,lk->nil", self.F, self.cov[init], self.F) + self.Q
            )
        have = ready & ~np.isnan(meas[:, 0])
        fresh = have & ~self.initialized
        if np.any(fresh):
            self.mean[fresh, 0:2] = meas[fresh]
            self.mean[fresh, 2:4] = 0.0
            self.cov[fresh] = np.eye(4) * INIT_VARIANCE
            self.initialized[fresh] = True
        upd = have & ~fresh & self.initialized
        if np.any(upd):
            idx = np.nonzero(upd)[0]
            H = np.zeros((2, 4))
            H[0, 0] = H[1, 1] = 1.0
            P = self.cov[idx]
            S = np.einsum("ij,njk,lk->nil", H, P, H) + self.R
            innov = meas[idx] - self.mean[idx, 0:2]
            Sinv = np.linalg.inv(S)
            maha = np.einsum("ni,nij,nj->n", innov, Sinv, innov)
            ok = maha <= MAHALANOBIS_GATE**2
            gated = idx[~ok]
            if gated.size:
                self.gated_streak[gated] += 1
                lost = gated[self.gated_streak[gated] >= REACQUIRE_AFTER]
                if lost.size:
                    self.mean[lost, 0:2] = meas[lost]
                    self.mean[lost, 2:4] = 0.0
                    self.cov[lost] = np.eye(4) * INIT_VARIANCE
                    self.gated_streak[lost] = 0
            idx = idx[ok]
            if idx.size:
                self.gated_streak[idx] = 0
                P = self.cov[idx]
                Sinv = Sinv[ok]
                innov = innov[ok]
                K = np.einsum("nij,jk,nkl->nil", P, H.T, Sinv)
                self.mean[idx] = self.mean[idx] + np.einsum("nij,nj->ni", K, innov)
                I_KH = np.eye(4) - np.einsum("nij,jk->nik", K, H)
                self.cov[idx] = np.einsum(
                    "nij,njk,nlk->nil", I_KH, P, I_KH
                ) + np.einsum("nij,jk,nlk->nil", K, self.R, K)
                self.cov[idx] = 0.5 * (
                    self.cov[idx] + np.transpose(self.cov[idx], (0, 2, 1))
                )

    def _predict_ahead(self, means: np.ndarray, horizon: int) -> np.ndarray:
        t = self.table
        dt = t.physics_dt
        substeps = max(1, round(self.sensor.frame_dt / dt))
        x = means[:, 0].copy()
        y = means[:, 1].copy()
        vx = means[:, 2].copy()
        vy = means[:, 3].copy()
        y_lim = t.field_width / 2.0 - t.ball_radius
        x_lim = t.field_length / 2.0 - t.ball_radius
        half_mouth = t.goal_width / 2.0
        e, tf = t.wall_restitution, t.wall_tangential_factor
        for _ in range(horizon * substeps):
            speed = np.hypot(vx, vy)
            scale = np.where(
                speed > 0.0,
                np.maximum(speed - t.rolling_decel * dt, 0.0)
                / np.where(speed > 0.0, speed, 1.0),
                0.0,
            )
            vx *= scale
            vy *= scale
            x += vx * dt
            y += vy * dt
            for sign in (1.0, -1.0):
                over = sign * y > y_lim
                bounce = over & (sign * vy > 0.0)
                y = np.where(over, sign * y_lim, y)
                vx = np.where(bounce, vx * tf, vx)
                vy = np.where(bounce, -e * vy, vy)
            outside = np.abs(y) >= half_mouth
            for sign in (1.0, -1.0):
                over = outside & (sign * x > x_lim)
                bounce = over & (sign * vx > 0.0)
                x = np.where(over, sign * x_lim, x)
                vy = np.where(bounce, vy * tf, vy)
                vx = np.where(bounce, -e * vx, vx)
        return np.stack([x, y, vx, vy], axis=-1)


# ---------------------------------------------------------------------------
# Benchmark (synthetic stand-in for the camera pipeline evaluation)
# ---------------------------------------------------------------------------

BENCH_CSV_COLUMNS = [
    "frame",
    "truth_x",
    "truth_y",
    "meas_u",
    "meas_v",
    "est_x",
    "est_y",
    "est_vx",
    "est_vy",
    "pred_x",
    "pred_y",
]


def rollout_free_ball(
    table: TableConfig,
    start_pos,
    start_vel,
    frames: int,
    frame_dt: float,
) -> np.ndarray:
    """Ground-truth free-flight ball trajectory: (frames, 4) [x y vx vy]."""
    from .physics import BatchWorld

    substeps = max(1, round(frame_dt / table.physics_dt))
    batch = BatchWorld(table, 1)
    batch.ball_pos[0] = start_pos
    batch.ball_vel[0] = start_vel
    out = np.zeros((frames, 4))
    for t in range(frames):
        out[t, 0:2] = batch.ball_pos[0]
        out[t, 2:4] = batch.ball_vel[0]
        batch.step(substeps, active_rods=np.zeros(8, dtype=bool))
    return out


def run_estimator_bench(
    truth: np.ndarray,
    sensor: SensorConfig,
    table: TableConfig,
    cam: Optional[CameraModel] = None,
    seed: int = 0,
    prediction_horizon: int = 6,
    sigma_a: float = BALL_SIGMA_A,
    warmup_frames: int = 30,
):
    """Track a ground-truth ball trajectory through the synthetic camera.

    Returns (records, summary).  Each record matches BENCH_CSV_COLUMNS plus
    naive-extrapolation columns: the filtered estimate in row t is the filter
    posterior for frame t (written once the delayed detection has been
    processed), while pred/naive in row t are forecasts made at frame t for
    frame t + prediction_horizon from the latency-compensated state.  Summary
    RMSEs cover the steady segment (frames >= warmup_frames), so they measure
    tracking quality after the filter has converged from its diffuse start.
    """
    cam = cam or CameraModel()
    rng = np.random.default_rng(seed)
    est = BallEstimator(cam, sensor, table, sigma_a=sigma_a)
    lat = sensor.latency_frames
    frames = truth.shape[0]
    records = []
    sq_raw, sq_est, sq_pred, sq_naive = [], [], [], []
    for t in range(frames):
        dets = render_measurement(
            {BALL_ID: (truth[t, 0], truth[t, 1])}, t, cam, sensor, rng
        )
        det = dets[0]
        state = est.observe(det if det.present else None)
        row = {
            "frame": t,
            "truth_x": truth[t, 0],
            "truth_y": truth[t, 1],
            "meas_u": det.u if det.present else math.nan,
            "meas_v": det.v if det.present else math.nan,
            "est_x": math.nan,
            "est_y": math.nan,
            "est_vx": math.nan,
            "est_vy": math.nan,
            "pred_x": math.nan,
            "pred_y": math.nan,
            "naive_x": math.nan,
            "naive_y": math.nan,
        }
        records.append(row)
        if det.present:
            wx, wy = cam.pixel_to_world(det.u, det.v)
            if t >= warmup_frames:
                sq_raw.append((wx - truth[t, 0]) ** 2 + (wy - truth[t, 1]) ** 2)
        if est.filter.initialized and t >= lat:
            post = est.filter.mean
            records[t - lat].update(
                est_x=post[0], est_y=post[1], est_vx=post[2], est_vy=post[3]
            )
            if t - lat >= warmup_frames:
                sq_est.append(
                    (post[0] - truth[t - lat, 0]) ** 2
                    + (post[1] - truth[t - lat, 1]) ** 2
                )
        if state is not None and t + prediction_horizon < frames:
            h = prediction_horizon
            pred = predict_ball_ahead(state, h, sensor.frame_dt, table)
            naive = state[0:2] + state[2:4] * sensor.frame_dt * h
            row.update(
                pred_x=pred[0], pred_y=pred[1], naive_x=naive[0], naive_y=naive[1]
            )
            if t >= warmup_frames:
                tgt = truth[t + h, 0:2]
                sq_pred.append(float(np.sum((pred[0:2] - tgt) ** 2)))
                sq_naive.append(float(np.sum((naive - tgt) ** 2)))

    def rmse(sq):
        return float(np.sqrt(np.mean(sq))) if sq else math.nan

    summary = {
        "frames": frames,
        "warmup_frames": warmup_frames,
        "rmse_raw": rmse(sq_raw),
        "rmse_filtered": rmse(sq_est),
        "rmse_prediction": rmse(sq_pred),
        "rmse_naive_extrapolation": rmse(sq_naive),
        "prediction_horizon": prediction_horizon,
    }
    return records, summary


def write_bench_outputs(records, summary, jsonl_path, csv_path):
    with open(jsonl_path, "w") as f:
        for row in records:
            f.write(json.dumps(row) + "\n")
        f.write(json.dumps({"summary": summary}) + "\n")
    with open(csv_path, "w") as f:
        f.write(",".join(BENCH_CSV_COLUMNS) + "\n")
        for row in records:
            f.write(",".join(repr(float(row[c])) for c in BENCH_CSV_COLUMNS) + "\n")
