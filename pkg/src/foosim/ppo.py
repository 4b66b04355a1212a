"""Actor-critic PPO with GAE, Adam, and a self-play opponent league.

Everything is plain numpy: a small tanh MLP with hand-written backprop, the
clipped-surrogate PPO update, and a league that freezes the learner whenever
it beats the active opponent in at least 20% of recent games.  float32 is
the working precision; float64 is supported for finite-difference checks.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .tasks import (
    BLACK,
    WHITE,
    ContractViolation,
    EnvBatch,
    TaskSpec,
)

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
LOG_STD_INIT = -0.5
HIDDEN_SIZES = (256, 128, 64)
NORM_CLIP = 10.0
LR_MIN, LR_MAX = 1e-6, 1e-2
ADAPT_FACTOR = 1.5


class TrainingError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# Parameters and forward/backward pass
# ---------------------------------------------------------------------------


@dataclass
class PolicyParams:
    """MLP weights plus the observation-normalizer state.

    `weights` holds, in documented order, trunk layers W{i}/b{i}, the action
    mean head Wm/bm, the value head Wv/bv and the state-independent log_std.
    """

    weights: Dict[str, np.ndarray]
    norm_mean: np.ndarray
    norm_var: np.ndarray
    norm_count: float
    hidden: Tuple[int, ...] = HIDDEN_SIZES

    @property
    def obs_dim(self) -> int:
        return self.weights["W0"].shape[0]

    @property
    def act_dim(self) -> int:
        return self.weights["Wm"].shape[1]

    @property
    def dtype(self):
        return self.weights["W0"].dtype

    def weight_keys(self) -> List[str]:
        keys = []
        for i in range(len(self.hidden)):
            keys += [f"W{i}", f"b{i}"]
        return keys + ["Wm", "bm", "Wv", "bv", "log_std"]

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            weights={k: v.copy() for k, v in self.weights.items()},
            norm_mean=self.norm_mean.copy(),
            norm_var=self.norm_var.copy(),
            norm_count=self.norm_count,
            hidden=self.hidden,
        )

    def astype(self, dtype) -> "PolicyParams":
        return PolicyParams(
            weights={k: v.astype(dtype) for k, v in self.weights.items()},
            norm_mean=self.norm_mean.astype(dtype),
            norm_var=self.norm_var.astype(dtype),
            norm_count=self.norm_count,
            hidden=self.hidden,
        )


def init_params(
    obs_dim: int,
    act_dim: int,
    seed: int = 0,
    hidden: Sequence[int] = HIDDEN_SIZES,
    dtype=np.float32,
    log_std_init: float = LOG_STD_INIT,
) -> PolicyParams:
    """He-style random trunk, small-scale heads, zeroed normalizer."""
    rng = np.random.default_rng([seed, 0x990])
    hidden = tuple(int(h) for h in hidden)
    weights: Dict[str, np.ndarray] = {}
    fan_in = obs_dim
    for i, h in enumerate(hidden):
        weights[f"W{i}"] = (
            rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(fan_in, h))
        ).astype(dtype)
        weights[f"b{i}"] = np.zeros(h, dtype=dtype)
        fan_in = h
    weights["Wm"] = (rng.normal(0.0, 0.01, size=(fan_in, act_dim))).astype(dtype)
    weights["bm"] = np.zeros(act_dim, dtype=dtype)
    weights["Wv"] = (rng.normal(0.0, 1.0 / math.sqrt(fan_in), size=(fan_in, 1))).astype(
        dtype
    )
    weights["bv"] = np.zeros(1, dtype=dtype)
    weights["log_std"] = np.full(act_dim, log_std_init, dtype=dtype)
    return PolicyParams(
        weights=weights,
        norm_mean=np.zeros(obs_dim, dtype=dtype),
        norm_var=np.ones(obs_dim, dtype=dtype),
        norm_count=0.0,
        hidden=hidden,
    )


def normalize_obs(params: PolicyParams, obs: np.ndarray) -> np.ndarray:
    if obs.shape[-1] != params.obs_dim:
        raise ContractViolation(
            f"obs dim {obs.shape[-1]} does not match network input {params.obs_dim}"
        )
    x = (obs - params.norm_mean) / np.sqrt(params.norm_var + 1e-8)
    return np.clip(x, -NORM_CLIP, NORM_CLIP).astype(params.dtype)


def update_normalizer(params: PolicyParams, obs: np.ndarray):
    """Merge a batch of raw observations into the running mean/variance."""
    obs = obs.reshape(-1, obs.shape[-1]).astype(np.float64)
    b = obs.shape[0]
    if b == 0:
        return
    b_mean = obs.mean(axis=0)
    b_var = obs.var(axis=0)
    n = params.norm_count
    tot = n + b
    delta = b_mean - params.norm_mean
    new_mean = params.norm_mean + delta * (b / tot)
    m_a = params.norm_var * n
    m_b = b_var * b
    new_var = (m_a + m_b + delta**2 * n * b / tot) / tot
    params.norm_mean = new_mean.astype(params.dtype)
    params.norm_var = np.maximum(new_var, 1e-8).astype(params.dtype)
    params.norm_count = tot


def _forward_cached(params: PolicyParams, x: np.ndarray):
    w = params.weights
    acts = [x]
    h = x
    for i in range(len(params.hidden)):
        h = np.tanh(h @ w[f"W{i}"] + w[f"b{i}"])
        acts.append(h)
    z_mean = h @ w["Wm"] + w["bm"]
    mean = np.tanh(z_mean)
    value = (h @ w["Wv"] + w["bv"])[:, 0]
    return mean, value, acts


def policy_forward(params: PolicyParams, obs: np.ndarray):
    """(mean in [-1,1], clamped log_std, value) for a batch of raw obs."""
    obs = np.asarray(obs)
    squeeze = obs.ndim == 1
    if squeeze:
        obs = obs[None, :]
    x = normalize_obs(params, obs)
    mean, value, _ = _forward_cached(params, x)
    log_std = np.clip(params.weights["log_std"], LOG_STD_MIN, LOG_STD_MAX)
    if squeeze:
        return mean[0], log_std, value[0]
    return mean, log_std, value


def _backward(params: PolicyParams, acts, d_mean_z, d_value):
    """Backprop through the trunk given gradients at the pre-squash mean
    output and at the value output; returns a weight-keyed grad dict."""
    w = params.weights
    grads: Dict[str, np.ndarray] = {}
    h_last = acts[-1]
    grads["Wm"] = h_last.T @ d_mean_z
    grads["bm"] = d_mean_z.sum(axis=0)
    grads["Wv"] = h_last.T @ d_value[:, None]
    grads["bv"] = np.array([d_value.sum()], dtype=h_last.dtype)
    d_h = d_mean_z @ w["Wm"].T + d_value[:, None] @ w["Wv"].T
    for i in reversed(range(len(params.hidden))):
        d_z = d_h * (1.0 - acts[i + 1] ** 2)
        grads[f"W{i}"] = acts[i].T @ d_z
        grads[f"b{i}"] = d_z.sum(axis=0)
        d_h = d_z @ w[f"W{i}"].T
    return grads


def gaussian_log_prob(actions, mean, log_std):
    var = np.exp(2.0 * log_std)
    return (
        -0.5 * np.sum((actions - mean) ** 2 / var, axis=-1)
        - np.sum(log_std)
        - 0.5 * mean.shape[-1] * math.log(2.0 * math.pi)
    )


def sample_actions(params: PolicyParams, obs: np.ndarray, rng: np.random.Generator):
    """Gaussian around the squashed mean.  Returns (env_actions clamped to
    [-1,1], raw samples, log-probs of the raw samples, values)."""
    mean, log_std, value = policy_forward(params, obs)
    std = np.exp(log_std)
    raw = mean + rng.standard_normal(mean.shape).astype(mean.dtype) * std.astype(
        mean.dtype
    )
    logp = gaussian_log_prob(raw, mean, log_std)
    return np.clip(raw, -1.0, 1.0), raw, logp, value


# ---------------------------------------------------------------------------
# Loss and gradients
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PPOConfig:
    clip: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    lr_init: float = 1e-3
    lr_schedule: str = "adaptive"  # or "none"
    horizon: int = 16
    mini_epochs: int = 8
    minibatch_size: int = 1024
    num_envs: int = 256
    value_coef: float = 2.0
    entropy_coef: float = 0.0
    max_grad_norm: float = 1.0
    kl_target: float = 0.008
    log_std_init: float = LOG_STD_INIT
    # Optional exploration-noise annealing: cap log_std on a linear schedule
    # from log_std_init down to log_std_final over the first
    # log_std_anneal_end updates.  Useful for precision tasks where late
    # training benefits from near-deterministic rollouts.
    log_std_final: Optional[float] = None
    log_std_anneal_end: int = 0

    def __post_init__(self):
        if self.log_std_final is not None and self.log_std_anneal_end <= 0:
            raise ContractViolation(
                "log_std_final requires a positive log_std_anneal_end"
            )
        if self.lr_schedule not in ("adaptive", "none"):
            raise ContractViolation("lr_schedule must be 'adaptive' or 'none'")
        if (self.num_envs * self.horizon) % self.minibatch_size != 0:
            raise ContractViolation(
                "minibatch_size must divide num_envs * horizon "
                f"({self.num_envs}*{self.horizon} vs {self.minibatch_size})"
            )


def compute_gae(rewards, values, dones, bootstrap_value, gamma, lam):
    """Recursive generalized advantage estimate over a (T, N) rollout.

    `dones[t]` marks transitions whose successor state starts a new episode,
    masking the bootstrap across the boundary.  Returns (advantages,
    returns = advantages + values), both (T, N).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones)
    if not (rewards.shape == values.shape == dones.shape):
        raise ContractViolation("rewards/values/dones must share one shape")
    T = rewards.shape[0]
    adv = np.zeros_like(rewards)
    next_value = np.asarray(bootstrap_value, dtype=np.float64)
    gae = np.zeros_like(next_value)
    for t in reversed(range(T)):
        not_done = 1.0 - dones[t].astype(np.float64)
        delta = rewards[t] + gamma * next_value * not_done - values[t]
        gae = delta + gamma * lam * not_done * gae
        adv[t] = gae
        next_value = values[t]
    return adv, adv + values


@dataclass
class RolloutBuffer:
    obs: np.ndarray        # (T, N, obs_dim)
    actions: np.ndarray    # (T, N, act_dim) raw (unclamped) samples
    log_probs: np.ndarray  # (T, N)
    values: np.ndarray     # (T, N)
    rewards: np.ndarray    # (T, N)
    dones: np.ndarray      # (T, N)
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    def finish(self, bootstrap_value, gamma, lam):
        self.advantages, self.returns = compute_gae(
            self.rewards, self.values, self.dones, bootstrap_value, gamma, lam
        )

    def flat(self):
        T, N = self.rewards.shape
        return (
            self.obs.reshape(T * N, -1),
            self.actions.reshape(T * N, -1),
            self.log_probs.reshape(T * N),
            self.values.reshape(T * N),
            self.advantages.reshape(T * N),
            self.returns.reshape(T * N),
        )


def ppo_loss_and_grads(params: PolicyParams, batch, cfg: PPOConfig):
    """Clipped-surrogate loss over one minibatch; returns (loss, grads, stats).

    batch = (obs_normalized, actions, logp_old, values_old, advantages,
    returns); gradients cover every entry of params.weights.
    """
    x, actions, logp_old, v_old, adv, ret = batch
    dtype = params.dtype
    B = x.shape[0]
    mean, value, acts = _forward_cached(params, x)
    log_std = np.clip(params.weights["log_std"], LOG_STD_MIN, LOG_STD_MAX)
    var = np.exp(2.0 * log_std)
    logp = gaussian_log_prob(actions, mean, log_std)

    ratio = np.exp(logp - logp_old)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip) * adv
    take_unclipped = surr1 <= surr2
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))

    v_clip = v_old + np.clip(value - v_old, -cfg.clip, cfg.clip)
    l_un = (value - ret) ** 2
    l_cl = (v_clip - ret) ** 2
    value_loss = 0.5 * float(np.mean(np.maximum(l_un, l_cl)))

    entropy = float(np.sum(log_std) + 0.5 * len(log_std) * math.log(2 * math.pi * math.e))
    loss = policy_loss + cfg.value_coef * value_loss - cfg.entropy_coef * entropy
    if not math.isfinite(loss):
        raise TrainingError(
            f"non-finite loss (policy {policy_loss}, value {value_loss})"
        )

    # --- backward ---
    # d policy_loss / d logp: only where the unclipped branch is selected.
    d_logp = np.where(take_unclipped, -ratio * adv / B, 0.0).astype(dtype)
    d_mean = d_logp[:, None] * (actions - mean) / var
    d_mean_z = (d_mean * (1.0 - mean**2)).astype(dtype)
    # log-std gradient: through logp plus the entropy bonus; zero where the
    # clamp is saturated.
    d_logstd = np.sum(
        d_logp[:, None] * ((actions - mean) ** 2 / var - 1.0), axis=0
    ) - cfg.entropy_coef
    raw_ls = params.weights["log_std"]
    d_logstd = np.where(
        (raw_ls > LOG_STD_MIN) & (raw_ls < LOG_STD_MAX), d_logstd, 0.0
    ).astype(dtype)

    d_value_un = np.where(l_un >= l_cl, value - ret, 0.0)
    inner = np.abs(value - v_old) < cfg.clip
    d_value_cl = np.where((l_cl > l_un) & inner, v_clip - ret, 0.0)
    d_value = (cfg.value_coef * (d_value_un + d_value_cl) / B).astype(dtype)

    grads = _backward(params, acts, d_mean_z, d_value)
    grads["log_std"] = d_logstd

    stats = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "approx_kl": float(np.mean(logp_old - logp)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > cfg.clip)),
    }
    return loss, grads, stats


def clip_grad_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values()))
    if max_norm > 0.0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return total


class Adam:
    def __init__(self, params: PolicyParams, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.weights.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.weights.items()}

    def step(self, params: PolicyParams, grads: Dict[str, np.ndarray]):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            step = self.lr * (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
            params.weights[k] = params.weights[k] - step.astype(params.dtype)


def adapt_lr(lr: float, approx_kl: float, cfg: PPOConfig) -> float:
    if cfg.lr_schedule == "none":
        return lr
    if approx_kl > 2.0 * cfg.kl_target:
        lr = lr / ADAPT_FACTOR
    elif approx_kl < 0.5 * cfg.kl_target:
        lr = lr * ADAPT_FACTOR
    return min(max(lr, LR_MIN), LR_MAX)


def ppo_update(
    params: PolicyParams,
    buffer: RolloutBuffer,
    cfg: PPOConfig,
    optimizer: Adam,
    rng: np.random.Generator,
):
    """One PPO update: normalizer refresh, then mini_epochs shuffled passes.

    Mutates params/optimizer in place; returns averaged stats."""
    update_normalizer(params, buffer.obs)
    obs, actions, logp_old, v_old, adv, ret = buffer.flat()
    x = normalize_obs(params, obs)
    adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    n = x.shape[0]
    agg: Dict[str, float] = {}
    count = 0
    for _ in range(cfg.mini_epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.minibatch_size):
            idx = perm[start : start + cfg.minibatch_size]
            batch = (
                x[idx],
                actions[idx].astype(params.dtype),
                logp_old[idx],
                v_old[idx],
                adv[idx],
                ret[idx],
            )
            loss, grads, stats = ppo_loss_and_grads(params, batch, cfg)
            stats["grad_norm"] = clip_grad_norm(grads, cfg.max_grad_norm)
            optimizer.step(params, grads)
            for k, v in stats.items():
                agg[k] = agg.get(k, 0.0) + v
            count += 1
    out = {k: v / count for k, v in agg.items()}
    optimizer.lr = adapt_lr(optimizer.lr, out["approx_kl"], cfg)
    out["lr"] = optimizer.lr
    return out


# ---------------------------------------------------------------------------
# Self-play league
# ---------------------------------------------------------------------------

WIN, LOSS, DRAW = "win", "loss", "draw"


class ReturnNormalizer:
    """Running scale for rewards: tracks the discounted-return variance per
    env (VecNormalize-style) and divides rewards by its std so that goal
    payoffs of +/-1000 do not swamp the clipped value loss."""

    def __init__(self, num_envs: int, gamma: float):
        self.gamma = gamma
        self.ret = np.zeros(num_envs)
        self.count = 0.0
        self.mean = 0.0
        self.var = 1.0

    @property
    def scale(self) -> float:
        return math.sqrt(self.var) + 1e-8

    def __call__(self, rewards: np.ndarray, dones: np.ndarray) -> np.ndarray:
        self.ret = self.ret * self.gamma + rewards
        b = self.ret.shape[0]
        b_mean = float(self.ret.mean())
        b_var = float(self.ret.var())
        tot = self.count + b
        delta = b_mean - self.mean
        self.mean += delta * (b / tot)
        self.var = (self.var * self.count + b_var * b + delta**2 * self.count * b / tot) / tot
        self.count = tot
        self.ret[dones.astype(bool)] = 0.0
        return rewards / self.scale


@dataclass
class OpponentPool:
    """Frozen checkpoints plus the 20%-win-rate promotion window."""

    window_size: int = 200
    min_episodes: int = 200
    threshold: float = 0.20
    members: List[PolicyParams] = field(default_factory=list)
    window: deque = field(default_factory=deque)
    promotions: int = 0
    promotion_log: List[Dict] = field(default_factory=list)

    def __post_init__(self):
        self.window = deque(self.window, maxlen=self.window_size)

    @property
    def active(self) -> PolicyParams:
        if not self.members:
            raise TrainingError("opponent pool is empty")
        return self.members[-1]

    def add(self, params: PolicyParams):
        self.members.append(params.copy())

    def record(self, outcome: str, protagonist: PolicyParams) -> bool:
        """Append one episode outcome; promotes (and returns True) when the
        window is full enough and the protagonist wins >= threshold of it."""
        if outcome not in (WIN, LOSS, DRAW):
            raise ContractViolation(f"bad outcome {outcome!r}")
        self.window.append(outcome)
        if len(self.window) < self.min_episodes:
            return False
        wins = sum(1 for o in self.window if o == WIN)
        if wins / len(self.window) >= self.threshold:
            self.add(protagonist)
            self.promotion_log.append(
                {"promotion": self.promotions + 1,
                 "win_rate": wins / len(self.window),
                 "window": len(self.window)}
            )
            self.window.clear()
            self.promotions += 1
            return True
        return False

    def rates(self):
        n = max(len(self.window), 1)
        return {
            "win_rate": sum(o == WIN for o in self.window) / n,
            "loss_rate": sum(o == LOSS for o in self.window) / n,
            "draw_rate": sum(o == DRAW for o in self.window) / n,
            "window": len(self.window),
        }


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def episode_outcome(outcome_code: int) -> str:
    """Map a white-perspective outcome code (+1/0/-1) to win/draw/loss."""
    if outcome_code > 0:
        return WIN
    if outcome_code < 0:
        return LOSS
    return DRAW


def train(
    spec: TaskSpec,
    cfg: PPOConfig,
    seed: int = 0,
    max_updates: int = 100,
    params: Optional[PolicyParams] = None,
    metrics_path: Optional[str] = None,
    checkpoint_dir: Optional[str] = None,
    checkpoint_every: int = 0,
    stop_fn: Optional[Callable[[Dict], bool]] = None,
    pool: Optional[OpponentPool] = None,
    env_kwargs: Optional[Dict] = None,
):
    """Collect -> GAE -> update loop for one task.

    Two-sided tasks play against the newest frozen pool member (black side,
    acting on its own point-symmetric observations).  Emits one metrics dict
    per update (also JSONL when metrics_path is set) and returns
    (params, history).
    """
    from . import checkpoint as ckpt

    env = EnvBatch(spec, num_envs=cfg.num_envs, seed=seed, **(env_kwargs or {}))
    act_dim = spec.action_dim(WHITE)
    if params is None:
        params = init_params(
            env.obs_dim, act_dim, seed=seed, log_std_init=cfg.log_std_init
        )
    if spec.two_sided and pool is None:
        pool = OpponentPool()
    if pool is not None and not pool.members:
        pool.add(params)

    ret_norm = ReturnNormalizer(cfg.num_envs, cfg.gamma)
    rng_act = np.random.default_rng([seed, 0xAC7])
    rng_opp = np.random.default_rng([seed, 0x0BB])
    rng_upd = np.random.default_rng([seed, 0x4BD])
    optimizer = Adam(params, cfg.lr_init)

    obs = env.observations(WHITE)
    history: List[Dict] = []
    sink = open(metrics_path, "w") if metrics_path else None
    # Episode-outcome tallies since the last update.
    ep_done = 0
    ep_success = 0
    try:
        for update in range(max_updates):
            T, N = cfg.horizon, cfg.num_envs
            buf = RolloutBuffer(
                obs=np.zeros((T, N, env.obs_dim), dtype=np.float64),
                actions=np.zeros((T, N, act_dim), dtype=np.float64),
                log_probs=np.zeros((T, N)),
                values=np.zeros((T, N)),
                rewards=np.zeros((T, N)),
                dones=np.zeros((T, N)),
            )
            promoted = False
            reward_acc = 0.0
            for t in range(T):
                act_env, act_raw, logp, value = sample_actions(params, obs, rng_act)
                if spec.two_sided:
                    opp = pool.active
                    opp_obs = env.observations(BLACK)
                    opp_act, _, _, _ = sample_actions(opp, opp_obs, rng_opp)
                    next_obs, rewards, done, infos = env.step(act_env, opp_act)
                else:
                    next_obs, rewards, done, infos = env.step(act_env)
                buf.obs[t] = obs
                buf.actions[t] = act_raw
                buf.log_probs[t] = logp
                buf.values[t] = value
                raw_rewards = rewards[WHITE] if spec.two_sided else rewards
                buf.rewards[t] = ret_norm(raw_rewards, done)
                buf.dones[t] = done
                reward_acc += float(raw_rewards.mean())
                obs = next_obs[WHITE] if spec.two_sided else next_obs
                for i in np.nonzero(done)[0]:
                    ep_done += 1
                    ep_success += bool(infos["success"][i])
                    if spec.two_sided:
                        code = int(infos["outcome"][i])
                        promoted |= pool.record(episode_outcome(code), params)
            _, _, bootstrap = policy_forward(params, obs)
            buf.finish(bootstrap, cfg.gamma, cfg.lam)
            stats = ppo_update(params, buf, cfg, optimizer, rng_upd)
            if cfg.log_std_final is not None:
                frac = min(update / cfg.log_std_anneal_end, 1.0)
                cap = cfg.log_std_init + (cfg.log_std_final - cfg.log_std_init) * frac
                np.minimum(
                    params.weights["log_std"],
                    params.dtype.type(cap),
                    out=params.weights["log_std"],
                )

            row = {
                "update": update,
                "mean_reward": reward_acc / T,
                "reward_scale": ret_norm.scale,
                "episodes": ep_done,
                "success_rate": (ep_success / ep_done) if ep_done else math.nan,
                **stats,
            }
            if pool is not None:
                row.update(pool.rates())
                row["pool_size"] = len(pool.members)
                row["promotions"] = pool.promotions
                row["promoted"] = promoted
            history.append(row)
            if sink:
                sink.write(json.dumps(row) + "\n")
                sink.flush()
            ep_done = ep_success = 0
            if checkpoint_dir and checkpoint_every and (update + 1) % checkpoint_every == 0:
                ckpt.save_checkpoint(
                    f"{checkpoint_dir}/update_{update + 1:05d}.ckpt",
                    params,
                    meta={"task": spec.kind, "update": update + 1, "seed": seed},
                    spec=spec,
                )
            if stop_fn is not None and stop_fn(row):
                break
    finally:
        if sink:
            sink.close()
    return params, history
