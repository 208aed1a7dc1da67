#!/usr/bin/env python3
"""Quick pilot rollout experiment.

Runs a handful of episodes of one task and prints per-episode stats plus a
summary line: success rate, mean completion margin against the budget, and
peak overlap fractions. Handy when tuning controller gains.

    python3 scripts/rollout_stats.py --town a --task oneturn --episodes 10
    python3 scripts/rollout_stats.py --pilot-config my_gains.json
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from microcarla import bench
from microcarla.pilot import PilotConfig
from microcarla.town import load_bundled


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--town", default="a")
    ap.add_argument("--task", default="straight", choices=bench.TASK_KINDS)
    ap.add_argument("--weathers", default="training", choices=["training", "test"])
    ap.add_argument("--episodes", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--pilot-config", default=None)
    args = ap.parse_args()

    town = load_bundled(args.town)
    config = PilotConfig.from_json(args.pilot_config) if args.pilot_config else None
    suite = bench.make_suite(town, args.weathers, args.task,
                             args.seed)[: args.episodes]
    wins = 0
    margins = []
    t0 = time.time()
    for i, episode in enumerate(suite):
        agent = bench.PilotAgent(town, config)
        result = bench.run_episode(town, episode, agent, collect_reward=True)
        wins += result.success
        margin = episode.time_budget_s - result.completion_time_s
        if result.success:
            margins.append(margin)
        print(f"ep {i:02d} {episode.weather:<22} "
              f"{'ok  ' if result.success else 'FAIL'} "
              f"t={result.completion_time_s:6.1f}s budget={episode.time_budget_s:6.1f}s "
              f"d={result.distance_km:5.2f}km infr={len(result.infractions)} "
              f"reward={result.reward_total:8.1f}")
    wall = time.time() - t0
    mean_margin = sum(margins) / len(margins) if margins else float("nan")
    print(f"\n{wins}/{len(suite)} succeeded, mean budget margin "
          f"{mean_margin:.1f} s, wall {wall:.1f} s")


if __name__ == "__main__":
    main()
