"""Run one agent across view granularities and object/depth settings.

Each cell reports the metric row plus the mean step-prompt size, so the
cost side of a setting is visible even with a scripted agent. Synthetic
grids store one summary per heading, so fov60x12 and fov30x36 render the
same 12-sector text; they only diverge when a summarizer merges captions. Pass
``--backend live`` (with NAVGRAPH_API_KEY set) for a real ablation.

    python3 scripts/observation_ablation.py --grids 5 --backend random
"""

import argparse
import random
import statistics

from navgraph.agent import AgentConfig, run_batch
from navgraph.backends import BackendConfig, ChatCompletionClient, ExtractiveSummarizer, RandomWalkerBackend
from navgraph.env import GRANULARITY_PRESETS
from navgraph.evaluation import aggregate, format_table, score_episode
from navgraph.observation import ObservationOptions
from navgraph.prompts import estimate_tokens
from navgraph.synthetic import generate_synthetic_episodes, generate_synthetic_grid

SETTINGS = {
    "full": ObservationOptions(),
    "no-depth": ObservationOptions(include_depth=False),
    "no-objects": ObservationOptions(include_objects=False),
}


def suite(preset: str, grids: int, episodes: int, seed: int):
    rng = random.Random(seed)
    catalog, eps = {}, []
    for _ in range(grids):
        env = generate_synthetic_grid(4, 4, 2.0, rng.randrange(1 << 30), GRANULARITY_PRESETS[preset])
        catalog[env.scan_id] = env
        eps.extend(generate_synthetic_episodes(env, episodes, rng.randrange(1 << 30), min_hops=2))
    return catalog, eps


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grids", type=int, default=5)
    ap.add_argument("--episodes", type=int, default=4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--backend", choices=["random", "live"], default="random")
    ap.add_argument("--config", help="backend config JSON for --backend live")
    ap.add_argument("--max-steps", type=int, default=10)
    ap.add_argument("--workers", type=int, default=4)
    args = ap.parse_args()

    if args.backend == "live":
        cfg = BackendConfig.from_file(args.config) if args.config else BackendConfig()
        client = ChatCompletionClient(cfg.with_env_key())
        factory, summarizer = (lambda ep: client), client
    else:
        factory = lambda ep: RandomWalkerBackend(args.seed * 7919 + ep.path_id, p_stop=0.1)  # noqa: E731
        summarizer = ExtractiveSummarizer()

    for preset in ("fov60x12", "fov45x24", "fov30x36"):
        catalog, eps = suite(preset, args.grids, args.episodes, args.seed)
        for label, options in SETTINGS.items():
            config = AgentConfig(max_steps=args.max_steps, observation=options)
            results = run_batch(catalog, eps, factory, summarizer, config, workers=args.workers)
            metrics = [score_episode(catalog[r.episode.scan_id], r.episode, r) for r in results]
            tokens = [estimate_tokens(t["prompt"]) for r in results for t in r.transcript]
            print(format_table(aggregate(metrics), f"{preset}/{label}"))
            print(f"  mean prompt ~{statistics.fmean(tokens):.0f} tokens over {len(tokens)} calls\n")


if __name__ == "__main__":
    main()
