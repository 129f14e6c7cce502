"""Judging episodes and aggregating success rates into reports."""

from __future__ import annotations

import csv
import io
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from .backend import Backend
from .planner import EpisodeTrace, PipelineConfig, run_episode
from .scenarios import Scenario, TaskCategory, goal_problems
from .world import FoodKind, SkillKind

STEP_SLACK = 3
FAILURE_REASONS = (
    "exceeded_step_budget",
    "bowl_spilled",
    "uninstructed_transfer",
    "uninstructed_dumbwaiter_op",
    "goal_not_met",
    "non_termination",
)
DUMBWAITER_SKILLS = (
    SkillKind.OPEN_DUMBWAITER,
    SkillKind.CLOSE_DUMBWAITER,
    SkillKind.START_DUMBWAITER,
    SkillKind.PUT_BOWL_INTO_DUMBWAITER,
)
# shown under the text table for orientation only
REFERENCE_RATES = {"full": 0.767, "cot": 0.367}
REFERENCE_ORDER = ("naive_llm", "naive_mllm", "cot", "cot_sc", "full")


class TraceMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SuccessJudgment:
    success: bool
    failure_reasons: tuple[str, ...] = ()
    steps: int = 0
    budget: int = 0
    details: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"success": self.success, "failure_reasons": list(self.failure_reasons),
                "steps": self.steps, "budget": self.budget, "details": list(self.details)}


def step_budget(scenario: Scenario) -> int:
    ref = sum(1 for sk in scenario.reference_plan if sk.kind is not SkillKind.DONE)
    return ref + STEP_SLACK


def uninstructed_gains(scenario: Scenario, trace: EpisodeTrace) -> list[str]:
    """Food that ended up in a bowl the instruction did not ask for."""
    init, final = scenario.initial_state, trace.final_world()
    allowed = {(t.food, t.destination) for t in scenario.goal.transfers}
    out = []
    for b in init.bowls:
        fb = final.bowl(b.id)
        for kind in FoodKind:
            if (kind, b.id) in allowed:
                continue
            gain = fb.amount_of(kind) - b.amount_of(kind)
            if gain > 1e-9:
                out.append(f"{kind.value} moved into {b.label}")
    return out


def judge(trace: EpisodeTrace, scenario: Scenario) -> SuccessJudgment:
    if trace.scenario_id != scenario.id:
        raise TraceMismatch(f"trace for {trace.scenario_id} judged against {scenario.id}")
    final = trace.final_world()
    reasons, details = [], []
    budget = step_budget(scenario)
    if trace.steps > budget:
        reasons.append("exceeded_step_budget")
        details.append(f"{trace.steps} steps > budget {budget}")
    if final.spill_events:
        reasons.append("bowl_spilled")
        details += [e.description for e in final.spill_events]
    gains = uninstructed_gains(scenario, trace)
    if gains:
        reasons.append("uninstructed_transfer")
        details += gains
    if scenario.goal.dumbwaiter_bowl is None:
        ops = [sk.name for sk in trace.executed_skills if sk.kind in DUMBWAITER_SKILLS]
        if ops:
            reasons.append("uninstructed_dumbwaiter_op")
            details += ops
    problems = goal_problems(scenario.goal, scenario.initial_state, final)
    if problems:
        reasons.append("goal_not_met")
        details += problems
    if trace.termination != "done":
        reasons.append("non_termination")
        details.append(f"terminated: {trace.termination} {trace.termination_detail}".strip())
    return SuccessJudgment(not reasons, tuple(reasons), trace.steps, budget, tuple(details))


# aggregation -----------------------------------------------------------------


@dataclass(frozen=True)
class EpisodeResult:
    config: str
    category: str
    scenario_id: str
    judgment: SuccessJudgment
    conflicts: int = 0
    resolved_to_majority: int = 0

    @classmethod
    def from_trace(cls, trace: EpisodeTrace, judgment: SuccessJudgment | None = None) -> "EpisodeResult":
        scenario = Scenario.from_dict(trace.scenario)
        judgment = judgment or judge(trace, scenario)
        conflicts = trace.conflicts
        return cls(trace.config.get("name", "custom"), scenario.category.value, scenario.id, judgment,
                   len(conflicts), sum(1 for c in conflicts if c.resolved == c.majority))


@dataclass
class Cell:
    successes: int = 0
    total: int = 0

    @property
    def rate(self) -> float:
        return self.successes / self.total if self.total else 0.0


@dataclass
class Report:
    cells: dict[tuple[str, str], Cell] = field(default_factory=dict)
    failures: dict[str, Counter] = field(default_factory=dict)
    conflicts: dict[str, int] = field(default_factory=dict)
    resolved_to_majority: dict[str, int] = field(default_factory=dict)

    @property
    def configs(self) -> list[str]:
        order = list(REFERENCE_ORDER)
        return sorted({c for c, _ in self.cells}, key=lambda c: (order.index(c) if c in order else len(order), c))

    @property
    def categories(self) -> list[str]:
        present = {cat for _, cat in self.cells}
        return [c.value for c in TaskCategory if c.value in present] + sorted(present - {c.value for c in TaskCategory})

    def overall(self, config: str) -> Cell:
        cell = Cell()
        for (c, _), v in self.cells.items():
            if c == config:
                cell.successes += v.successes
                cell.total += v.total
        return cell

    def consistency_rate(self, config: str) -> float | None:
        n = self.conflicts.get(config, 0)
        return self.resolved_to_majority.get(config, 0) / n if n else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["config", "category", "successes", "total", "rate"])
        for cfg in self.configs:
            for cat in self.categories:
                cell = self.cells.get((cfg, cat))
                if cell:
                    w.writerow([cfg, cat, cell.successes, cell.total, f"{cell.rate:.4f}"])
            o = self.overall(cfg)
            w.writerow([cfg, "overall", o.successes, o.total, f"{o.rate:.4f}"])
        return buf.getvalue()

    def to_text(self) -> str:
        cats = self.categories
        head = ["Method"] + [c.replace("_", " ") for c in cats] + ["overall"]
        rows = []
        for cfg in self.configs:
            row = [cfg]
            for cat in cats:
                cell = self.cells.get((cfg, cat))
                row.append("-" if cell is None else f"{cell.rate:.3f}")
            row.append(f"{self.overall(cfg).rate:.3f}")
            rows.append(row)
        widths = [max(len(r[i]) for r in [head] + rows) for i in range(len(head))]
        fmt = lambda r: " | ".join(v.ljust(w) for v, w in zip(r, widths))
        lines = [fmt(head), "-+-".join("-" * w for w in widths)] + [fmt(r) for r in rows]
        lines.append("")
        for cfg in self.configs:
            hist = self.failures.get(cfg, Counter())
            if hist:
                lines.append(f"{cfg} failures: " + ", ".join(f"{k}={hist[k]}" for k in FAILURE_REASONS if hist[k]))
            n = self.conflicts.get(cfg, 0)
            if n:
                lines.append(f"{cfg} conflicts: {n}, resolved toward majority: {self.resolved_to_majority[cfg]} "
                             f"({self.consistency_rate(cfg):.2f})")
        lines.append("Reference overall rates (not asserted): "
                     + ", ".join(f"{k} {v:.3f}" for k, v in REFERENCE_RATES.items()))
        return "\n".join(lines) + "\n"


def aggregate(results: Iterable[EpisodeResult]) -> Report:
    results = list(results)
    if not results:
        raise ValueError("nothing to aggregate")
    rep = Report()
    for r in results:
        cell = rep.cells.setdefault((r.config, r.category), Cell())
        cell.total += 1
        cell.successes += r.judgment.success
        rep.failures.setdefault(r.config, Counter()).update(r.judgment.failure_reasons)
        rep.conflicts[r.config] = rep.conflicts.get(r.config, 0) + r.conflicts
        rep.resolved_to_majority[r.config] = rep.resolved_to_majority.get(r.config, 0) + r.resolved_to_majority
    return rep


# batch runs ------------------------------------------------------------------


def run_batch(scenarios: Sequence[Scenario], backend_factory: Callable[[], Backend], config: PipelineConfig,
              out_dir: str | Path | None = None, workers: int = 1,
              resolver_factory: Callable[[], Backend] | None = None) -> list[EpisodeTrace]:
    """Run every scenario; episodes overlap only when the backend allows concurrent calls.

    With ``out_dir`` each trace is written atomically as soon as it finishes,
    so an interrupted batch keeps its completed episodes.
    """
    backend = backend_factory()
    resolver = resolver_factory() if resolver_factory else None
    concurrent = backend.concurrent and (resolver is None or resolver.concurrent)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    def one(sc: Scenario) -> EpisodeTrace:
        tr = run_episode(sc, backend, config, resolver)
        if out is not None:
            tr.save(out / f"{sc.id}.json")
        return tr

    if concurrent and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, scenarios))
    return [one(sc) for sc in scenarios]


def load_traces(directory: str | Path) -> list[EpisodeTrace]:
    return [EpisodeTrace.load(p) for p in sorted(Path(directory).glob("*.json")) if p.name != "manifest.json"]
