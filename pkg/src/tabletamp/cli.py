"""Command-line entry point.

Subcommands:
    run       one episode of a scenario, writing the trace (and SVGs)
    bench     seeded trials over all or selected scenarios, CSV summary
    sample    inspect the sub-goal pipeline for one plan step
    validate  symbolically validate a plan-skeleton file against a scenario
    export    write the built-in scenario definitions as JSON files

Exit codes: 0 success, 1 task failure, 2 input error, 3 no feasible sub-goal
pose. All outputs land under --out.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .domain import SkeletonParseError, parse_skeleton, validate_skeleton
from .harness import (
    benchmark_csv,
    episode_trace_json,
    observe,
    randomize,
    randomized_goal,
    run_benchmark,
    run_episode,
)
from .planner import PlannerConfig
from .render import render_scene
from .scenarios import SCENARIO_IDS, all_scenarios, build_scenario, dump_scenario, load_scenario
from .subgoal import NoFeasiblePose, filter_and_rank, resolve_anchor, sample_candidates

EXIT_OK = 0
EXIT_TASK_FAILURE = 1
EXIT_INPUT_ERROR = 2
EXIT_NO_FEASIBLE_POSE = 3


def _load_scenario_arg(value: str):
    if value in SCENARIO_IDS:
        return build_scenario(value)
    path = Path(value)
    if not path.exists():
        raise FileNotFoundError(f"no such scenario: {value!r} (not a built-in "
                                f"name or readable file)")
    return load_scenario(str(path))


def _planner_config(args) -> PlannerConfig:
    return PlannerConfig(
        backend=args.planner,
        endpoint=getattr(args, "endpoint", "") or "",
        model=getattr(args, "model", "") or "",
        timeout_s=getattr(args, "timeout", 30.0),
        max_retries=getattr(args, "max_retries", 2),
    )


def _apply_config_file(args):
    """Config file supplies defaults; explicit flags win."""
    if not getattr(args, "config", None):
        return args
    with open(args.config, encoding="utf-8") as fh:
        defaults = json.load(fh)
    for key, value in defaults.items():
        if not hasattr(args, key):
            continue
        if getattr(args, key) in (None, "", argparse.SUPPRESS):
            setattr(args, key, value)
    return args


def cmd_run(args) -> int:
    try:
        scenario = _load_scenario_arg(args.scenario)
    except (FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = run_episode(scenario, args.seed, _planner_config(args),
                         ablation=args.ablation, render=args.render)
    trace_path = out_dir / f"{scenario.id}_seed{args.seed}.json"
    trace_path.write_text(episode_trace_json(result), encoding="utf-8")
    if args.render:
        episode_dir = out_dir / f"{scenario.id}_seed{args.seed}"
        for revision, step_idx, svgs in result.step_renderings:
            step_dir = episode_dir / f"rev{revision}_step{step_idx}"
            step_dir.mkdir(parents=True, exist_ok=True)
            for k, svg in enumerate(svgs):
                (step_dir / f"cand_{k}.svg").write_text(svg, encoding="utf-8")
    if args.render and result.final_scene is not None:
        svg = render_scene(
            result.final_scene,
            goal_pose=(scenario.primary_object, result.goal.target)
            if result.goal and result.goal.kind == "pose" else None,
            goal_zone=result.goal.zone if result.goal and result.goal.kind == "region" else None,
            caption=f"{scenario.id} seed {args.seed} "
                    f"{'success' if result.success else 'failure'}",
        )
        (out_dir / f"{scenario.id}_seed{args.seed}_final.svg").write_text(
            svg, encoding="utf-8"
        )
    verdict = "success" if result.success else "failure"
    print(f"{scenario.id} seed {args.seed}: {verdict} "
          f"(replans {result.replans_used}, {result.wall_ms:.0f} ms) "
          f"-> {trace_path}")
    return EXIT_OK if result.success else EXIT_TASK_FAILURE


def cmd_bench(args) -> int:
    try:
        if args.scenarios:
            scenarios = [_load_scenario_arg(s) for s in args.scenarios]
        else:
            scenarios = all_scenarios()
    except (FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows, results = run_benchmark(
        scenarios, args.trials, _planner_config(args),
        ablation=args.ablation, workers=args.workers,
    )
    csv_text = benchmark_csv(rows)
    (out_dir / "benchmark.csv").write_text(csv_text, encoding="utf-8")
    if args.traces:
        traces_dir = out_dir / "traces"
        traces_dir.mkdir(exist_ok=True)
        for r in results:
            (traces_dir / f"{r.scenario_id}_seed{r.seed}.json").write_text(
                episode_trace_json(r), encoding="utf-8"
            )
    print(csv_text, end="")
    return EXIT_OK


def cmd_sample(args) -> int:
    try:
        scenario = _load_scenario_arg(args.scenario)
    except (FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    scene = randomize(scenario, args.seed)
    goal = randomized_goal(scenario, args.seed)
    from .planner import make_planner
    from .scenarios import fallback_builders

    planner = make_planner(_planner_config(args), fallbacks=fallback_builders(scenario))
    plan = planner.plan(observe(scene, goal, scenario, render=False))
    if not 0 <= args.step < len(plan.steps):
        print(f"error: step index {args.step} out of range for "
              f"{len(plan.steps)} steps", file=sys.stderr)
        return EXIT_INPUT_ERROR
    step = plan.steps[args.step]
    if step.kind.value not in ("push", "rotate", "moveto"):
        print(f"error: step {args.step} is {step.kind.value}; only push, "
              f"rotate, and moveto take sub-goal poses", file=sys.stderr)
        return EXIT_INPUT_ERROR
    registry = scenario.region_registry(goal)
    if step.target_pose_hint is not None:
        anchor = step.target_pose_hint.position
    else:
        anchor = resolve_anchor(step.region, scene, registry,
                                object_id=step.object_id)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    twin = scene.as_twin()
    samples = sample_candidates(step, anchor, twin, rng_seed=args.seed)
    try:
        cset = filter_and_rank(samples, step.object_id, twin)
    except NoFeasiblePose as exc:
        print(f"no-feasible-pose: {exc}", file=sys.stderr)
        return EXIT_NO_FEASIBLE_POSE
    manifest = []
    for k, cand in enumerate(cset.candidates):
        svg_path = out_dir / f"cand_{k}.svg"
        svg_path.write_text(cand.rendering, encoding="utf-8")
        manifest.append({
            "index": k,
            "xyz": [round(c, 6) for c in cand.pose.position],
            "quat_wxyz": [round(c, 9) for c in cand.pose.orientation],
            "reachability": round(cand.reachability_score, 4),
            "stability_margin": round(cand.stability_margin, 4),
            "rendering": svg_path.name,
        })
    (out_dir / "candidates.json").write_text(
        json.dumps(manifest, indent=2), encoding="utf-8"
    )
    print(f"{len(manifest)} candidates for {step.describe()} -> {out_dir}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        scenario = _load_scenario_arg(args.scenario)
        document = Path(args.skeleton).read_text(encoding="utf-8")
    except (FileNotFoundError, KeyError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    try:
        skeleton = parse_skeleton(document)
    except SkeletonParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_INPUT_ERROR
    scene = scenario.scene_template
    goal = randomized_goal(scenario, 0)
    state = observe(scene, goal, scenario, render=False).symbolic_state()
    violations = validate_skeleton(skeleton, state)
    if not violations:
        print("ok")
        return EXIT_OK
    for v in violations:
        print(str(v))
    return EXIT_TASK_FAILURE


def cmd_export(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for scenario in all_scenarios():
        path = out_dir / f"{scenario.id}.json"
        dump_scenario(scenario, str(path))
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tabletamp",
        description="Desk-scale hybrid pick/push task-and-motion-planning sandbox",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_planner=True):
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--config", default=None,
                       help="JSON config file supplying flag defaults")
        if with_planner:
            p.add_argument("--planner", choices=("scripted", "http"),
                           default="scripted")
            p.add_argument("--endpoint", default="",
                           help="chat-completions URL for the http planner")
            p.add_argument("--model", default="", help="model name")
            p.add_argument("--timeout", type=float, default=30.0)
            p.add_argument("--max-retries", dest="max_retries", type=int, default=2)

    p_run = sub.add_parser("run", help="run one episode")
    p_run.add_argument("--scenario", required=True,
                       help="built-in name or scenario JSON path")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--ablation", choices=("full", "no_pose", "no_reflection"),
                       default="full")
    p_run.add_argument("--render", action="store_true")
    common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_bench = sub.add_parser("bench", help="run the seeded benchmark")
    p_bench.add_argument("--scenarios", nargs="*", default=None,
                         help="subset of scenarios (default: all eight)")
    p_bench.add_argument("--trials", type=int, default=10)
    p_bench.add_argument("--ablation", choices=("full", "no_pose", "no_reflection"),
                         default="full")
    p_bench.add_argument("--workers", type=int, default=1)
    p_bench.add_argument("--traces", action="store_true",
                         help="also write per-episode trace JSON")
    common(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_sample = sub.add_parser("sample", help="inspect sub-goal candidates")
    p_sample.add_argument("--scenario", required=True)
    p_sample.add_argument("--seed", type=int, default=0)
    p_sample.add_argument("--step", type=int, default=0,
                          help="plan step index to sample for")
    common(p_sample)
    p_sample.set_defaults(func=cmd_sample)

    p_val = sub.add_parser("validate", help="validate a skeleton file")
    p_val.add_argument("--scenario", required=True)
    p_val.add_argument("--skeleton", required=True, help="skeleton JSON path")
    common(p_val, with_planner=False)
    p_val.set_defaults(func=cmd_validate)

    p_exp = sub.add_parser("export", help="write built-in scenarios as JSON")
    common(p_exp, with_planner=False)
    p_exp.set_defaults(func=cmd_export)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config_file(args)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
