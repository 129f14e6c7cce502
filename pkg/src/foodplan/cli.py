"""Command line interface.

Exit codes: 0 success, 1 a command ran but something failed (episode errors,
replay mismatch, unknown scenario), 2 bad usage.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .backend import DEFAULT_CREDENTIAL_VAR, create_backend
from .harness import EpisodeResult, aggregate, load_traces, run_batch
from .planner import PRESETS, EpisodeTrace, PipelineConfig, replay
from .prompts import object_list
from .render import render_topdown
from .scenarios import TaskCategory, generate, generate_all, load_scenarios, save_scenarios
from .world import describe_scene


def cmd_gen(args) -> int:
    t0 = time.perf_counter()
    if args.category == "all":
        scenarios = generate_all(args.seed, args.count)
    else:
        scenarios = generate(args.category, args.seed, args.count)
    manifest = save_scenarios(scenarios, args.out)
    print(f"wrote {len(scenarios)} scenarios and {manifest} in {time.perf_counter() - t0:.2f}s")
    return 0


def cmd_run(args) -> int:
    scenarios = load_scenarios(args.scenarios)
    if args.ids:
        wanted = set(args.ids.split(","))
        scenarios = [sc for sc in scenarios if sc.id in wanted]
    overrides = {}
    if args.max_iterations:
        overrides["max_iterations"] = args.max_iterations
    config = PipelineConfig.preset(args.config, **overrides)
    out = Path(args.out)
    traces = run_batch(
        scenarios,
        lambda: create_backend(args.backend, args.credential_var),
        config, out, args.workers,
        (lambda: create_backend(args.resolver, args.credential_var)) if args.resolver else None,
    )
    results = [EpisodeResult.from_trace(t) for t in traces]
    manifest = {
        "config": config.to_dict(),
        "backend": args.backend,
        "resolver": args.resolver,
        "episodes": [{"id": r.scenario_id, "file": f"{r.scenario_id}.json", "success": r.judgment.success,
                      "failure_reasons": list(r.judgment.failure_reasons)} for r in results],
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    print(aggregate(results).to_text(), end="")
    errors = [t for t in traces if t.termination == "backend_error"]
    for t in errors:
        print(f"{t.scenario_id}: backend error: {t.termination_detail}", file=sys.stderr)
    return 1 if errors else 0


def cmd_report(args) -> int:
    traces = [t for d in args.traces for t in load_traces(d)]
    if not traces:
        print("no traces found", file=sys.stderr)
        return 1
    report = aggregate(EpisodeResult.from_trace(t) for t in traces)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report.to_csv())
    (out / "report.txt").write_text(report.to_text())
    print(report.to_text(), end="")
    return 0


def cmd_replay(args) -> int:
    trace = EpisodeTrace.load(args.trace)
    problems = replay(trace)
    if problems:
        for p in problems:
            print(p)
        return 1
    print("states identical")
    return 0


def cmd_inspect(args) -> int:
    matches = [sc for sc in load_scenarios(args.scenarios) if sc.id == args.id]
    if not matches:
        print(f"no scenario {args.id!r}", file=sys.stderr)
        return 1
    sc = matches[0]
    print(f"{sc.id} ({sc.category.value})")
    print(f"Instruction: {sc.instruction}")
    print(f"Objects: {object_list(sc.initial_state)}")
    print(describe_scene(sc.initial_state))
    print("Reference plan: " + ", ".join(sk.name for sk in sc.reference_plan))
    if args.render:
        Path(args.render).write_bytes(render_topdown(sc.initial_state))
        print(f"rendered {args.render}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="foodplan", description="Closed-loop food-manipulation task planning.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate benchmark scenarios")
    g.add_argument("--category", default="all", choices=["all"] + [c.value for c in TaskCategory])
    g.add_argument("--seed", type=int, default=7)
    g.add_argument("--count", type=int, default=30)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    r = sub.add_parser("run", help="run episodes and write traces")
    r.add_argument("--scenarios", required=True)
    r.add_argument("--backend", required=True,
                   help="oracle | scripted:<path> | faulty:<path-or-oracle>:<rule> | remote:<url>:<model>")
    r.add_argument("--resolver", help="separate backend spec for conflict resolution")
    r.add_argument("--config", default="full", choices=list(PRESETS))
    r.add_argument("--max-iterations", type=int)
    r.add_argument("--ids", help="comma separated scenario ids")
    r.add_argument("--workers", type=int, default=4)
    r.add_argument("--credential-var", default=DEFAULT_CREDENTIAL_VAR)
    r.add_argument("--out", required=True)
    r.set_defaults(fn=cmd_run)

    rp = sub.add_parser("report", help="aggregate trace directories")
    rp.add_argument("--traces", nargs="+", required=True)
    rp.add_argument("--out", required=True)
    rp.set_defaults(fn=cmd_report)

    rl = sub.add_parser("replay", help="re-execute a trace and compare states")
    rl.add_argument("trace")
    rl.set_defaults(fn=cmd_replay)

    i = sub.add_parser("inspect", help="show a scenario")
    i.add_argument("--scenarios", required=True)
    i.add_argument("--id", required=True)
    i.add_argument("--render", help="write a P6 top-down image here")
    i.set_defaults(fn=cmd_inspect)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (OSError, ValueError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
