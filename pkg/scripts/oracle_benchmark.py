"""Score the oracle follower and a seeded random walker on synthetic grids.

The oracle row should read SR = OSR = SPL = 100; the random walker row is a
floor to compare live runs against.

    python3 scripts/oracle_benchmark.py --grids 20 --episodes 5
"""

import argparse
import random
import time

from navgraph.agent import AgentConfig, run_batch
from navgraph.backends import OracleBackend, RandomWalkerBackend
from navgraph.evaluation import aggregate, format_table, score_episode
from navgraph.synthetic import generate_synthetic_episodes, generate_synthetic_grid


def build_suite(grids: int, episodes: int, seed: int):
    rng = random.Random(seed)
    catalog, eps = {}, []
    for _ in range(grids):
        env = generate_synthetic_grid(rng.randint(3, 5), rng.randint(3, 5), 2.0, rng.randrange(1 << 30))
        catalog[env.scan_id] = env
        eps.extend(generate_synthetic_episodes(env, episodes, rng.randrange(1 << 30), min_hops=2))
    return catalog, eps


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grids", type=int, default=20)
    ap.add_argument("--episodes", type=int, default=5, help="episodes per grid")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=4)
    ap.add_argument("--max-steps", type=int, default=15)
    args = ap.parse_args()

    catalog, eps = build_suite(args.grids, args.episodes, args.seed)
    config = AgentConfig(max_steps=args.max_steps)
    agents = {
        "oracle": OracleBackend,
        "random": lambda ep: RandomWalkerBackend(args.seed * 7919 + ep.path_id, p_stop=0.1),
    }
    for name, factory in agents.items():
        t0 = time.perf_counter()
        results = run_batch(catalog, eps, factory, config=config, workers=args.workers)
        metrics = [score_episode(catalog[r.episode.scan_id], r.episode, r) for r in results]
        print(format_table(aggregate(metrics), name))
        print(f"  {len(results)} episodes in {time.perf_counter() - t0:.2f}s\n")


if __name__ == "__main__":
    main()
