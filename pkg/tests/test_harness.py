import csv
import io
import json
from collections import Counter

import pytest
from scripting import suffix_replies

from foodplan.backend import FaultRule, FaultyBackend, OracleBackend, ScriptedBackend
from foodplan.cli import main
from foodplan.harness import (
    EpisodeResult,
    SuccessJudgment,
    TraceMismatch,
    aggregate,
    judge,
    load_traces,
    run_batch,
    step_budget,
)
from foodplan.planner import PipelineConfig, run_episode
from foodplan.prompts import SkillLabels
from foodplan.world import DONE, Skill, SkillKind, move_to

S = SkillKind
COT = PipelineConfig.preset("cot")


def scripted(scenario, plan, config=COT):
    replies = suffix_replies(SkillLabels(scenario.skills), list(plan))
    return run_episode(scenario, ScriptedBackend(replies), config)


def padded(scenario, extra):
    """The reference plan preceded by ``extra`` harmless moves."""
    wander = [move_to(b.color) for b in scenario.initial_state.bowls] * extra
    return wander[:extra] + list(scenario.reference_plan)


# judge -----------------------------------------------------------------------


def test_budget_excludes_done(two_scoop):
    assert step_budget(two_scoop) == 9 + 3


def test_reference_run_succeeds(two_scoop):
    j = judge(scripted(two_scoop, two_scoop.reference_plan), two_scoop)
    assert j == SuccessJudgment(True, (), 9, 12, ())


def test_budget_boundary(two_scoop):
    at = judge(scripted(two_scoop, padded(two_scoop, 3)), two_scoop)
    over = judge(scripted(two_scoop, padded(two_scoop, 4)), two_scoop)
    assert at.success and at.steps == 12
    assert not over.success and over.failure_reasons == ("exceeded_step_budget",) and over.steps == 13


def test_spill_fails(far_white):
    plan = [Skill(S.GRASP_SPOON), move_to("white"), Skill(S.SCOOP), move_to("blue"), Skill(S.DROP_FOOD), DONE]
    j = judge(scripted(far_white, plan), far_white)
    assert "bowl_spilled" in j.failure_reasons


def test_uninstructed_transfer(two_scoop):
    # pudding scooped into the bean bowl, then the real task
    plan = [Skill(S.GRASP_SPOON), move_to("purple"), Skill(S.SCOOP), move_to("red"), Skill(S.DROP_FOOD), DONE]
    j = judge(scripted(two_scoop, plan), two_scoop)
    assert "uninstructed_transfer" in j.failure_reasons and "goal_not_met" in j.failure_reasons


def test_dumbwaiter_opened_and_closed_still_fails(two_scoop):
    plan = [Skill(S.OPEN_DUMBWAITER), Skill(S.CLOSE_DUMBWAITER)] + list(two_scoop.reference_plan)
    trace = scripted(two_scoop, plan)
    assert trace.final_world().dumbwaiter == two_scoop.initial_state.dumbwaiter
    j = judge(trace, two_scoop)
    assert j.failure_reasons == ("uninstructed_dumbwaiter_op",)


def test_non_termination(two_scoop):
    trace = scripted(two_scoop, two_scoop.reference_plan[:-1])
    j = judge(trace, two_scoop)
    assert trace.termination == "backend_error"
    assert j.failure_reasons == ("non_termination",)


def test_early_done_is_goal_not_met(two_scoop):
    j = judge(scripted(two_scoop, [Skill(S.GRASP_SPOON), DONE]), two_scoop)
    assert j.failure_reasons == ("goal_not_met",)


def test_judge_rejects_other_scenario(two_scoop, far_white):
    with pytest.raises(TraceMismatch):
        judge(scripted(two_scoop, two_scoop.reference_plan), far_white)


# aggregation -----------------------------------------------------------------


def result(config, category, ok, conflicts=0, majority=0, reasons=()):
    return EpisodeResult(config, category, "x", SuccessJudgment(ok, tuple(reasons)), conflicts, majority)


def test_all_successes_rate_one():
    rep = aggregate(result("full", "semantic_reasoning", True) for _ in range(30))
    assert rep.cells[("full", "semantic_reasoning")].rate == 1.0
    assert rep.overall("full").rate == 1.0
    assert rep.consistency_rate("full") is None


def test_consistency_rate_half():
    rs = [result("full", "semantic_reasoning", True, 1, 1) for _ in range(9)]
    rs += [result("full", "semantic_reasoning", False, 1, 0, ["goal_not_met"]) for _ in range(9)]
    rep = aggregate(rs)
    assert rep.conflicts["full"] == 18
    assert rep.consistency_rate("full") == 0.5
    assert rep.failures["full"] == Counter({"goal_not_met": 9})
    assert "conflicts: 18, resolved toward majority: 9 (0.50)" in rep.to_text()


def test_csv_schema_and_conservation():
    rs = ([result("cot", "semantic_reasoning", i < 4) for i in range(10)]
          + [result("cot", "collision_avoidance", i < 1) for i in range(5)]
          + [result("full", "semantic_reasoning", True) for _ in range(3)])
    rep = aggregate(rs)
    rows = list(csv.DictReader(io.StringIO(rep.to_csv())))
    assert list(rows[0]) == ["config", "category", "successes", "total", "rate"]
    assert [r["config"] for r in rows] == ["cot"] * 3 + ["full"] * 2
    for cfg in ("cot", "full"):
        cats = [r for r in rows if r["config"] == cfg and r["category"] != "overall"]
        overall = next(r for r in rows if r["config"] == cfg and r["category"] == "overall")
        assert sum(int(r["successes"]) for r in cats) == int(overall["successes"])
        assert sum(int(r["total"]) for r in cats) == int(overall["total"])
    cot = {r["category"]: r for r in rows if r["config"] == "cot"}
    assert cot["semantic_reasoning"]["rate"] == "0.4000"
    assert cot["collision_avoidance"]["rate"] == "0.2000"
    assert cot["overall"]["rate"] == f"{5 / 15:.4f}"


def test_text_table_orders_configs():
    rep = aggregate([result("full", "semantic_reasoning", True), result("naive_llm", "semantic_reasoning", False)])
    lines = rep.to_text().splitlines()
    assert lines[2].startswith("naive_llm") and lines[3].startswith("full")


def test_aggregate_empty():
    with pytest.raises(ValueError):
        aggregate([])


def test_from_trace_counts_conflicts(two_scoop):
    trace = run_episode(two_scoop, FaultyBackend(OracleBackend(), [FaultRule.parse("done@3")]),
                        PipelineConfig(), OracleBackend())
    r = EpisodeResult.from_trace(trace)
    assert (r.config, r.conflicts, r.resolved_to_majority, r.judgment.success) == ("full", 1, 1, True)


def test_run_batch_writes_traces(benchmark, tmp_path):
    some = benchmark[::30]
    traces = run_batch(some, OracleBackend, PipelineConfig(), tmp_path, workers=3)
    assert [t.scenario_id for t in traces] == [s.id for s in some]
    loaded = load_traces(tmp_path)
    assert sorted(t.scenario_id for t in loaded) == sorted(s.id for s in some)


# command line ----------------------------------------------------------------


def test_cli_round_trip(tmp_path, capsys):
    scen, runs, rep = tmp_path / "scen", tmp_path / "runs", tmp_path / "rep"
    assert main(["gen", "--seed", "5", "--count", "2", "--out", str(scen)]) == 0
    assert len(json.loads((scen / "manifest.json").read_text())["scenarios"]) == 10
    assert main(["run", "--scenarios", str(scen), "--backend", "oracle", "--out", str(runs)]) == 0
    manifest = json.loads((runs / "manifest.json").read_text())
    assert len(manifest["episodes"]) == 10 and all(e["success"] for e in manifest["episodes"])
    assert main(["report", "--traces", str(runs), "--out", str(rep)]) == 0
    assert "full,overall,10,10,1.0000" in (rep / "report.csv").read_text()
    first = manifest["episodes"][0]["file"]
    capsys.readouterr()
    assert main(["replay", str(runs / first)]) == 0
    assert capsys.readouterr().out.strip() == "states identical"


def test_cli_replay_mismatch(two_scoop, tmp_path, capsys):
    trace = run_episode(two_scoop, OracleBackend(), PipelineConfig())
    trace.records[2].executed = "stir"
    path = trace.save(tmp_path / "bad.json")
    assert main(["replay", str(path)]) == 1
    assert capsys.readouterr().out.strip()


def test_cli_inspect(tmp_path, capsys):
    scen = tmp_path / "scen"
    main(["gen", "--category", "reachability_analysis", "--seed", "1", "--count", "1", "--out", str(scen)])
    capsys.readouterr()
    img = tmp_path / "scene.ppm"
    sid = "reachability_analysis-s1-000"
    assert main(["inspect", "--scenarios", str(scen), "--id", sid, "--render", str(img)]) == 0
    out = capsys.readouterr().out
    assert out.startswith(sid) and "Reference plan: " in out and "pull_bowl_closer" in out
    assert img.read_bytes().startswith(b"P6")
    assert main(["inspect", "--scenarios", str(scen), "--id", "nope"]) == 1


def test_cli_run_backend_error_exit(tmp_path):
    scen = tmp_path / "scen"
    main(["gen", "--category", "semantic_reasoning", "--count", "1", "--out", str(scen)])
    script = tmp_path / "s.json"
    script.write_text("[]")
    assert main(["run", "--scenarios", str(scen), "--backend", f"scripted:{script}", "--out",
                 str(tmp_path / "r")]) == 1


def test_cli_missing_dir(tmp_path):
    assert main(["report", "--traces", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 1
