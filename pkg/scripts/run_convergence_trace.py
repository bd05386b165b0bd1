#!/usr/bin/env python3
"""Train one agent on one seed and dump its full learning trace.

Produces two CSVs: the per-step trace (episode, step, slot, epsilon,
action, reward, loss, sum rate) and a per-episode file with the episode
return and its moving average.  The printed first/last decile summary is
the quick convergence check; the moving average should end above where
it started.
"""

import argparse
import csv
from dataclasses import replace

import numpy as np

from irsnoma.config import RL_SCHEMES, ScenarioConfig, load_config
from irsnoma.numerics import SeededRng
from irsnoma.rl import (
    ActionSpace,
    DqnAgent,
    TabularAgent,
    train_agent,
    training_trace_to_csv,
)
from irsnoma.sim import _hyperparams, build_slot_data, make_env


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", help="key = value scenario file")
    parser.add_argument("--scheme", default="dqn_continuous", choices=RL_SCHEMES)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--episodes", type=int, help="override the configured count")
    parser.add_argument("--window", type=int, default=100, help="moving-average window")
    parser.add_argument("--trace-out", default="training_trace.csv")
    parser.add_argument("--episodes-out", default="episode_rewards.csv")
    args = parser.parse_args()

    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.episodes is not None:
        cfg = replace(cfg, episodes=args.episodes)

    data = build_slot_data(cfg, args.seed)
    env = make_env(cfg, args.scheme, data)
    hp = _hyperparams(cfg, args.scheme)
    space = ActionSpace(
        n_elements=cfg.n_elements,
        phase_bits=cfg.action_bits(args.scheme),
        n_users=cfg.n_users,
    )
    opt = SeededRng(args.seed).substream(f"opt|{args.scheme}|none=0")
    if args.scheme == "qlearning":
        agent = TabularAgent.create(space, hp)
    else:
        agent = DqnAgent.create(space, hp, opt.substream("agent"))
    training = train_agent(
        env, agent, hp, cfg.episodes, opt.substream("train"), keep_traces=True
    )

    training_trace_to_csv(training.traces, args.trace_out)

    rewards = np.asarray(training.episode_rewards)
    w = min(args.window, max(1, len(rewards) // 2))
    moving = np.convolve(rewards, np.ones(w) / w, mode="valid")
    with open(args.episodes_out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["episode", "reward", f"moving_avg_{w}"])
        for i, r in enumerate(rewards):
            avg = moving[i - w + 1] if i >= w - 1 else ""
            writer.writerow([i, f"{r:.6g}", f"{avg:.6g}" if avg != "" else ""])

    k = max(1, len(moving) // 10)
    print(
        f"{args.scheme} seed {args.seed}: {len(rewards)} episodes, "
        f"moving avg ({w}) first decile {np.mean(moving[:k]):.3f} "
        f"-> last decile {np.mean(moving[-k:]):.3f}"
    )
    print(f"wrote {len(training.traces)} trace rows to {args.trace_out}")
    print(f"wrote {len(rewards)} episode rows to {args.episodes_out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
