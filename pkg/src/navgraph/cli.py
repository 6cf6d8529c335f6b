"""Command-line entry point: ``navgraph <command> ...``.

Exit codes: 0 ok, 2 usage, 3 validation (bad input files), 4 backend failure.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .agent import AgentConfig, run_batch
from .backends import (
    BackendConfig, ChatCompletionClient, EchoBackend, ExtractiveSummarizer,
    OracleBackend, RandomWalkerBackend, ReplayBackend,
)
from .env import GRANULARITY_PRESETS, load_environment, load_episodes, save_environment, save_episodes
from .errors import BackendError, NavGraphError, ParseError, ValidationError
from .evaluation import export_topdown, format_table, read_results, aggregate, rescore_records, write_results
from .observation import AgentState, ObservationOptions, compose_observation, render_observation
from .prompts import TEMPLATE_VERSION, TEMPLATES
from .synthetic import generate_synthetic_episodes, generate_synthetic_grid

log = logging.getLogger("navgraph")

EXIT_OK, EXIT_USAGE, EXIT_VALIDATION, EXIT_BACKEND = 0, 2, 3, 4


class UsageError(NavGraphError):
    pass


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_path, config: dict, inputs) -> Path:
    manifest = {
        "config": config,
        "code_version": __version__,
        "template_version": TEMPLATE_VERSION,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "inputs": {str(p): _sha256(p) for p in inputs},
    }
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _load_catalog(paths, granularity: str | None = None) -> dict:
    catalog = {}
    for p in paths:
        env = load_environment(p)
        if granularity and env.granularity != GRANULARITY_PRESETS[granularity]:
            raise ValidationError(
                f"{p}: environment granularity {env.granularity.to_dict()} does not match preset {granularity}",
                granularity)
        catalog[env.scan_id] = env
    return catalog


def _observation_options(args) -> ObservationOptions:
    return ObservationOptions(include_objects=not args.no_objects, include_depth=not args.no_depth)


def _live_client(args) -> ChatCompletionClient:
    config = BackendConfig.from_file(args.config) if args.config else BackendConfig()
    return ChatCompletionClient(config.with_env_key())


def _backend_factory(args):
    kind = args.backend
    if kind == "oracle":
        return OracleBackend
    if kind == "echo":
        return lambda ep: EchoBackend()
    if kind == "random":
        return lambda ep: RandomWalkerBackend(
            int(hashlib.sha256(f"{args.seed}:{ep.path_id}:{ep.instruction_index}".encode()).hexdigest()[:12], 16),
            args.p_stop)
    if kind == "replay":
        if not args.replay:
            raise UsageError("--backend replay needs --replay <transcript.jsonl>")
        by_key: dict = {}
        with open(args.replay, encoding="utf-8") as fh:
            for line in fh:
                if line.strip():
                    rec = json.loads(line)
                    by_key.setdefault((rec["path_id"], rec["instruction_index"]), []).append(rec["response"])
        return lambda ep: ReplayBackend(by_key.get(ep.key, []))
    if kind == "live":
        client = _live_client(args)
        return lambda ep: client
    raise UsageError(f"unknown backend {kind!r}")


def cmd_run(args) -> int:
    catalog = _load_catalog(args.env, args.granularity)
    episodes = load_episodes(args.episodes, catalog)
    factory = _backend_factory(args)
    if args.summarizer == "live" or (args.summarizer == "auto" and args.backend == "live"):
        summarizer = _live_client(args)
    else:
        summarizer = ExtractiveSummarizer()
    config = AgentConfig(max_steps=args.max_steps, observation=_observation_options(args))
    snapshot = {
        "backend": args.backend, "summarizer": type(summarizer).__name__, "granularity": args.granularity,
        "max_steps": args.max_steps, "seed": args.seed, "p_stop": args.p_stop, "workers": args.workers,
        "no_objects": args.no_objects, "no_depth": args.no_depth, "distance": args.distance,
    }
    if args.config:
        snapshot["backend_config"] = json.loads(Path(args.config).read_text(encoding="utf-8"))
    inputs = [*args.env, args.episodes] + ([args.config] if args.config else []) + ([args.replay] if args.replay else [])
    write_manifest(args.out, snapshot, inputs)

    results = run_batch(catalog, episodes, factory, summarizer, config, workers=args.workers)
    agg = write_results(args.out, results, catalog, mode=args.distance)
    if args.transcript:
        with open(args.transcript, "w", encoding="utf-8") as fh:
            for res in results:
                for rec in res.transcript:
                    rec = {"path_id": res.episode.path_id, "instruction_index": res.episode.instruction_index, **rec}
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    print(format_table(agg, args.backend))
    failed = [r for r in results if r.stop_reason == "backend_failure"]
    for r in failed:
        log.error("episode %s failed: %s", r.episode.key, r.error)
    return EXIT_BACKEND if failed else EXIT_OK


def cmd_eval(args) -> int:
    catalog = _load_catalog(args.env)
    records, _ = read_results(args.results)
    agg = aggregate(rescore_records(records, catalog, mode=args.distance))
    print(format_table(agg, Path(args.results).stem))
    return EXIT_OK


def cmd_synth(args) -> int:
    env = generate_synthetic_grid(args.rows, args.cols, args.spacing, args.seed,
                                  GRANULARITY_PRESETS[args.granularity], with_summaries=not args.no_summaries)
    save_environment(env, args.out_env)
    print(f"wrote {len(env)} viewpoints to {args.out_env}")
    if args.out_episodes:
        episodes = generate_synthetic_episodes(env, args.episodes, args.seed, args.min_hops)
        save_episodes(episodes, args.out_episodes)
        print(f"wrote {len(episodes)} episodes to {args.out_episodes}")
    return EXIT_OK


def cmd_describe(args) -> int:
    env = load_environment(args.env)
    obs = compose_observation(env, AgentState(args.viewpoint, args.heading), ExtractiveSummarizer(),
                              _observation_options(args))
    sys.stdout.write(render_observation(obs))
    return EXIT_OK


def cmd_prompts(args) -> int:
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        for name, t in TEMPLATES.items():
            (out / f"{name}.txt").write_text(t.body, encoding="utf-8")
        print(f"wrote {len(TEMPLATES)} templates (version {TEMPLATE_VERSION}) to {out}")
        return EXIT_OK
    for name, t in TEMPLATES.items():
        print(f"===== {name} (v{TEMPLATE_VERSION}) =====")
        print(t.body)
        print()
    return EXIT_OK


def cmd_export_traj(args) -> int:
    catalog = _load_catalog(args.env)
    records, _ = read_results(args.results)
    for rec in records:
        if rec["path_id"] == args.path_id and rec.get("instruction_index", 0) == args.instruction_index:
            trajectory = list(zip(rec["trajectory"], rec["headings"]))
            export_topdown(catalog[rec["scan"]], trajectory, args.out)
            print(f"wrote {len(trajectory)} states to {args.out}")
            return EXIT_OK
    raise ValidationError(f"no result for path {args.path_id} instruction {args.instruction_index}",
                          (args.path_id, args.instruction_index))


def _add_observation_flags(p) -> None:
    p.add_argument("--no-objects", action="store_true", help="omit detected objects from observations")
    p.add_argument("--no-depth", action="store_true", help="omit object distances from observations")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="navgraph", description="LLM navigation agent on viewpoint graphs")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run an agent over an episode file")
    p.add_argument("--env", action="append", required=True, help="environment JSON (repeatable)")
    p.add_argument("--episodes", required=True)
    p.add_argument("--backend", choices=["live", "oracle", "random", "replay", "echo"], default="oracle")
    p.add_argument("--summarizer", choices=["auto", "extractive", "live"], default="auto")
    p.add_argument("--config", help="backend config JSON for the live backend")
    p.add_argument("--replay", help="transcript JSONL for --backend replay")
    p.add_argument("--out", required=True, help="results JSONL")
    p.add_argument("--transcript", help="write per-step transcript JSONL here")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--max-steps", type=int, default=15)
    p.add_argument("--granularity", choices=sorted(GRANULARITY_PRESETS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--p-stop", type=float, default=0.1, help="stop probability for --backend random")
    p.add_argument("--distance", choices=["geodesic", "euclidean"], default="geodesic")
    _add_observation_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval", help="re-score a results file")
    p.add_argument("--results", required=True)
    p.add_argument("--env", action="append", required=True)
    p.add_argument("--distance", choices=["geodesic", "euclidean"], default="geodesic")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic grid world")
    p.add_argument("--rows", type=int, default=3)
    p.add_argument("--cols", type=int, default=3)
    p.add_argument("--spacing", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--granularity", choices=sorted(GRANULARITY_PRESETS), default="fov45x24")
    p.add_argument("--no-summaries", action="store_true", help="leave direction summaries to a summarizer")
    p.add_argument("--out-env", required=True)
    p.add_argument("--out-episodes")
    p.add_argument("--episodes", type=int, default=10, help="number of episodes to sample")
    p.add_argument("--min-hops", type=int, default=1)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("describe", help="render the observation at one pose")
    p.add_argument("--env", required=True)
    p.add_argument("--viewpoint", required=True)
    p.add_argument("--heading", type=float, default=0.0)
    _add_observation_flags(p)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("prompts", help="dump the prompt templates")
    p.add_argument("--out", help="directory to write templates into (default: stdout)")
    p.set_defaults(func=cmd_prompts)

    p = sub.add_parser("export-traj", help="export one trajectory as a top-down CSV")
    p.add_argument("--results", required=True)
    p.add_argument("--env", action="append", required=True)
    p.add_argument("--path-id", type=int, required=True)
    p.add_argument("--instruction-index", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_traj)
    return parser


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"navgraph: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ParseError, ValidationError) as exc:
        print(f"navgraph: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except BackendError as exc:
        print(f"navgraph: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    except NavGraphError as exc:
        print(f"navgraph: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except FileNotFoundError as exc:
        print(f"navgraph: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
