"""Command-line entry point: train, eval, bench-estimator, serve, replay.

Failures print one machine-readable JSON error line to stderr and exit 1;
argparse handles unknown flags with usage text and exit status 2.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="foosim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--num-envs", type=int, default=None)
        p.add_argument("--out-dir", type=Path, default=Path("out"))

    p = sub.add_parser("train", help="PPO training on one task")
    common(p)
    p.add_argument("--task", default="blocking")
    p.add_argument("--updates", type=int, default=100)
    p.add_argument("--config", type=Path, help="JSON file with PPOConfig fields")
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--minibatch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--checkpoint-every", type=int, default=0)
    p.add_argument("--filtered-ball", action="store_true",
                   help="route ball observations through the state estimator")

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    common(p)
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--task", default="blocking")
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--filtered-ball", action="store_true")

    p = sub.add_parser("bench-estimator", help="synthetic tracking benchmark")
    common(p)
    p.add_argument("--frames", type=int, default=150)
    p.add_argument("--noise-sigma-px", type=float, default=2.0)
    p.add_argument("--dropout", type=float, default=0.05)

    p = sub.add_parser("serve", help="run the realtime match service")
    common(p)
    p.add_argument("--task", default="keeper_vs_keeper")
    p.add_argument("--side", default="white", help="human side")
    p.add_argument("--checkpoint", type=Path, default=None)
    p.add_argument("--sensing", default="ground_truth",
                   choices=["ground_truth", "filtered"])
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8765)
    p.add_argument("--score-limit", type=int, default=5)
    p.add_argument("--time-limit", type=float, default=300.0)
    p.add_argument("--static-dir", type=Path, default=None)

    p = sub.add_parser("replay", help="re-emit a recorded match log")
    p.add_argument("log", type=Path)
    p.add_argument("--speed", type=float, default=1.0)
    p.add_argument("--max-wait", type=float, default=None,
                   help="emit without pacing (for piping) when 0")
    return parser


def cmd_train(args) -> int:
    from .ppo import PPOConfig, train
    from .reports import training_figure
    from .tasks import make_task

    spec = make_task(args.task, use_filtered_ball=True) if args.filtered_ball \
        else make_task(args.task)
    fields = {}
    if args.config:
        fields.update(json.loads(args.config.read_text()))
    if args.num_envs is not None:
        fields["num_envs"] = args.num_envs
    if args.horizon is not None:
        fields["horizon"] = args.horizon
    if args.minibatch_size is not None:
        fields["minibatch_size"] = args.minibatch_size
    if args.lr is not None:
        fields["lr_init"] = args.lr
    fields.setdefault("num_envs", 256)
    fields.setdefault(
        "minibatch_size", max(1, fields["num_envs"] * fields.get("horizon", 16) // 4)
    )
    cfg = PPOConfig(**fields)

    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    params, history = train(
        spec,
        cfg,
        seed=args.seed,
        max_updates=args.updates,
        metrics_path=str(out / "metrics.jsonl"),
        checkpoint_dir=str(out),
        checkpoint_every=args.checkpoint_every,
    )
    from .checkpoint import save_checkpoint

    save_checkpoint(out / "final.ckpt", params,
                    meta={"task": args.task, "updates": len(history)}, spec=spec)
    training_figure(history, out / "training.png")
    last = history[-1] if history else {}
    print(json.dumps({
        "task": args.task,
        "updates": len(history),
        "final_success_rate": last.get("success_rate"),
        "out_dir": str(out),
    }))
    return 0


def evaluate_policy(params, spec, episodes: int, seed: int, num_envs: int = 64):
    """Deterministic-mean rollouts; success/win/draw rates over `episodes`."""
    from .ppo import episode_outcome, policy_forward, sample_actions
    from .tasks import BLACK, WHITE, EnvBatch

    env = EnvBatch(spec, num_envs=num_envs, seed=seed)
    obs = env.observations(WHITE)
    done_count = succ = wins = losses = draws = 0
    while done_count < episodes:
        mean, _, _ = policy_forward(params, obs)
        if spec.two_sided:
            opp_obs = env.observations(BLACK)
            opp_mean, _, _ = policy_forward(params, opp_obs)
            next_obs, _, done, infos = env.step(mean, opp_mean)
            obs = next_obs[WHITE]
        else:
            obs, _, done, infos = env.step(mean)
        for i in np.nonzero(done)[0]:
            if done_count >= episodes:
                break
            done_count += 1
            succ += bool(infos["success"][i])
            out = episode_outcome(int(infos["outcome"][i]))
            wins += out == "win"
            losses += out == "loss"
            draws += out == "draw"
    report = {"episodes": done_count, "success_rate": succ / done_count}
    if spec.two_sided:
        report.update(
            win_rate=wins / done_count,
            loss_rate=losses / done_count,
            draw_rate=draws / done_count,
        )
    return report


def cmd_eval(args) -> int:
    from .checkpoint import load_checkpoint
    from .tasks import make_task

    spec = make_task(args.task, use_filtered_ball=True) if args.filtered_ball \
        else make_task(args.task)
    params, meta = load_checkpoint(args.checkpoint, spec=spec)
    report = evaluate_policy(
        params, spec, args.episodes, args.seed, num_envs=args.num_envs or 64
    )
    report["checkpoint"] = str(args.checkpoint)
    report["task"] = args.task
    print(json.dumps(report))
    return 0


def cmd_bench_estimator(args) -> int:
    from .estimator import (
        SensorConfig,
        rollout_free_ball,
        run_estimator_bench,
        write_bench_outputs,
    )
    from .physics import TableConfig
    from .reports import bench_figure

    table = TableConfig()
    sensor = SensorConfig(
        noise_sigma_px=args.noise_sigma_px, dropout_prob=args.dropout
    )
    rng = np.random.default_rng(args.seed)
    start = (rng.uniform(-0.3, 0.3), rng.uniform(-0.15, 0.15))
    ang = rng.uniform(0, 2 * np.pi)
    speed = rng.uniform(1.5, 3.0)
    truth = rollout_free_ball(
        table, start, (speed * np.cos(ang), speed * np.sin(ang)),
        args.frames, sensor.frame_dt,
    )
    records, summary = run_estimator_bench(
        truth, sensor, table, seed=args.seed
    )
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    write_bench_outputs(records, summary, out / "bench.jsonl", out / "bench.csv")
    bench_figure(records, summary, out / "bench.png")
    print(json.dumps(summary))
    return 0


def cmd_serve(args) -> int:
    from .arena import Match, MatchConfig
    from .server import serve

    match = Match(
        MatchConfig(
            task_kind=args.task,
            human_side=args.side,
            checkpoint_path=str(args.checkpoint) if args.checkpoint else None,
            sensing=args.sensing,
            score_limit=args.score_limit,
            time_limit_s=args.time_limit,
            seed=args.seed,
        )
    )
    serve(match, host=args.host, port=args.port,
          static_dir=str(args.static_dir) if args.static_dir else None)
    return 0


def cmd_replay(args) -> int:
    from .arena import MockClock, replay

    clock = MockClock() if args.max_wait == 0 else None
    for msg in replay(args.log, speed=args.speed, clock=clock):
        print(json.dumps(msg))
    return 0


COMMANDS = {
    "train": cmd_train,
    "eval": cmd_eval,
    "bench-estimator": cmd_bench_estimator,
    "serve": cmd_serve,
    "replay": cmd_replay,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except (BrokenPipeError, KeyboardInterrupt):
        return 130
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1


if __name__ == "__main__":
    sys.exit(main())
