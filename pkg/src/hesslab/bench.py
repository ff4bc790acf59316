"""Compiled vs pure-Python backend timing.

    python -m hesslab.bench [--cycles N] [--episodes N]

Each backend runs in its own interpreter (the backend is fixed at import
time by ``HESSLAB_NUMBA``).  Reported times exclude compilation: one
warm-up pass runs before the clock starts.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def _measure(cycles: int, episodes: int) -> dict:
    import numpy as np

    from . import backend
    from .config import Config, QConfig
    from .cycles import get_cycle
    from .harness import Policy, QEnv, Simulator, calibrate_reward

    cfg = Config(qlearning=QConfig(n_dischg=10, n_chg=10))
    cyc = get_cycle("udds_like")
    reward = calibrate_reward(cfg, cyc)
    sim = Simulator(cfg, cyc, reward)
    pol = Policy("heuristic2", cfg.heuristic2.vector())
    sim.run(pol, sim.initial_state())  # warm-up / compile

    t0 = time.perf_counter()
    for _ in range(cycles):
        sim.run(pol, sim.initial_state())
    t_sim = (time.perf_counter() - t0) / cycles

    env = QEnv(sim)
    q = sim.new_table()
    rng = np.random.default_rng(0)
    env(q, 0.1, rng)
    t0 = time.perf_counter()
    for _ in range(episodes):
        env(q, 0.1, rng)
    t_ep = (time.perf_counter() - t0) / episodes
    return {"backend": backend(), "steps_per_cycle": sim.n_steps,
            "seconds_per_cycle": t_sim, "seconds_per_episode": t_ep,
            "steps_per_second": sim.n_steps / t_sim}


def run_backend(use_numba: bool, cycles: int, episodes: int) -> dict:
    env = dict(os.environ, HESSLAB_NUMBA="1" if use_numba else "0")
    out = subprocess.run(
        [sys.executable, "-m", "hesslab.bench", "--worker", "--cycles", str(cycles),
         "--episodes", str(episodes)],
        env=env, check=True, capture_output=True, text=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--cycles", type=int, default=20)
    ap.add_argument("--episodes", type=int, default=20)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args(argv)
    if args.worker:
        print(json.dumps(_measure(args.cycles, args.episodes)))
        return 0
    fast = run_backend(True, args.cycles, args.episodes)
    slow = run_backend(False, max(1, args.cycles // 10), max(1, args.episodes // 10))
    print(f"{'backend':>8}  {'s/cycle':>10}  {'s/episode':>10}  {'steps/s':>10}")
    for r in (fast, slow):
        print(f"{r['backend']:>8}  {r['seconds_per_cycle']:10.5f}  "
              f"{r['seconds_per_episode']:10.5f}  {r['steps_per_second']:10.0f}")
    print(f"speedup: {slow['seconds_per_cycle'] / fast['seconds_per_cycle']:.1f}x per cycle, "
          f"{slow['seconds_per_episode'] / fast['seconds_per_episode']:.1f}x per episode")
    return 0


if __name__ == "__main__":
    sys.exit(main())
