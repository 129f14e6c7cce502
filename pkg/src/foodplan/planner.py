"""Closed-loop planning: propose, vote against the sequence buffer, gate, execute.

One episode is a sequential state machine.  Each iteration asks the model for
the remaining skill sequence, checks the skill for the current iteration
against earlier proposals (self-consistency), gates it with the affordance
checker (replanning with feedback when infeasible) and executes it.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

from . import affordance
from .backend import Backend, BackendError, ModelRequest, RequestContext
from .prompts import (
    Observation,
    ParseError,
    PromptFlags,
    ProposedSequence,
    SkillLabels,
    build_system_prompt,
    build_user_prompt,
    conflict_prompt,
    format_reminder,
    parse_choice,
    parse_response,
)
from .render import render_topdown
from .scenarios import Scenario
from .world import DONE, Skill, SkillKind, WorldState, apply_skill, describe_scene

TRACE_SCHEMA_VERSION = 1
TERMINATION_REASONS = ("done", "max_iterations", "parse_failure", "replan_exhausted", "backend_error")


@dataclass(frozen=True)
class PipelineConfig:
    use_observation: bool = True
    use_cot: bool = True
    use_sc: bool = True
    use_sa: bool = True
    max_iterations: int = 30
    max_replans_per_iteration: int = 3
    parse_retries: int = 2
    temperature: float = 0.0
    max_tokens: int = 1024
    name: str = "full"

    @property
    def flags(self) -> PromptFlags:
        return PromptFlags(self.use_observation, self.use_cot, self.use_sc, self.use_sa)

    @property
    def flag_tuple(self) -> tuple[bool, bool, bool, bool]:
        return (self.use_observation, self.use_cot, self.use_sc, self.use_sa)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PipelineConfig":
        return cls(**d)

    @classmethod
    def preset(cls, name: str, **overrides) -> "PipelineConfig":
        try:
            obs, cot, sc, sa = PRESETS[name]
        except KeyError:
            raise ValueError(f"unknown config {name!r}; choose from {', '.join(PRESETS)}") from None
        return cls(obs, cot, sc, sa, name=name, **overrides)


# (observation, CoT, self-consistency, skill affordance)
PRESETS: dict[str, tuple[bool, bool, bool, bool]] = {
    "naive_llm": (False, False, False, False),
    "naive_mllm": (True, False, False, False),
    "cot": (True, True, False, False),
    "cot_sc": (True, True, True, False),
    "full": (True, True, True, True),
}


# self-consistency ------------------------------------------------------------


class SequenceBuffer:
    """Previously proposed sequences, each anchored at the iteration that produced it."""

    def __init__(self):
        self.sequences: list[ProposedSequence] = []

    def __len__(self) -> int:
        return len(self.sequences)

    def add(self, seq: ProposedSequence) -> None:
        self.sequences.append(seq)

    def clear(self) -> None:
        self.sequences.clear()

    def votes(self, iteration: int) -> list[Skill]:
        """One vote per buffered sequence; a sequence that already ended votes DONE."""
        out = []
        for seq in self.sequences:
            if seq.start > iteration:
                continue
            sk = seq.skill_at(iteration)
            out.append(DONE if sk is None else sk)
        return out


@dataclass(frozen=True)
class Consistent:
    votes: tuple[Skill, ...] = ()


@dataclass(frozen=True)
class Conflict:
    majority: Skill
    votes: tuple[Skill, ...] = ()


def consistency_check(buffer: SequenceBuffer, iteration: int, proposed: Skill) -> Consistent | Conflict:
    votes = tuple(buffer.votes(iteration))
    if not votes:
        return Consistent(votes)
    ranked = Counter(votes).most_common()
    top = ranked[0][1]
    modes = [sk for sk, n in ranked if n == top]
    if len(modes) > 1 or modes[0] == proposed:
        return Consistent(votes)
    return Conflict(modes[0], votes)


# trace records ---------------------------------------------------------------


@dataclass
class Exchange:
    kind: str  # plan | resolve
    iteration: int
    user_text: str
    response: str | None
    backend_id: str = ""
    latency_ms: float = 0.0
    image_sha256: str | None = None
    error: str | None = None


@dataclass
class ConsistencyEvent:
    event: str  # consistent | conflict
    votes: list[str]
    majority: str | None = None
    proposed: str | None = None
    resolved: str | None = None
    defaulted: bool = False


@dataclass
class Attempt:
    """One proposal within an iteration; gated attempts are followed by a replan."""

    proposal: dict | None
    skill: str | None = None
    consistency: ConsistencyEvent | None = None
    verdict: dict | None = None
    gated: bool = False
    parse_errors: list[str] = field(default_factory=list)


@dataclass
class IterationRecord:
    iteration: int
    attempts: list[Attempt] = field(default_factory=list)
    executed: str | None = None
    outcome: dict | None = None
    state_digest: str | None = None
    buffer_size_before: int = 0


def state_digest(state: WorldState) -> str:
    return hashlib.sha256(state.to_json().encode()).hexdigest()


@dataclass
class EpisodeTrace:
    scenario: dict
    config: dict
    backend_id: str
    system_prompt: str
    exchanges: list[Exchange] = field(default_factory=list)
    records: list[IterationRecord] = field(default_factory=list)
    termination: str = "done"
    termination_detail: str = ""
    final_state: dict | None = None
    version: int = TRACE_SCHEMA_VERSION

    @property
    def scenario_id(self) -> str:
        return self.scenario["id"]

    @property
    def executed_skills(self) -> list[Skill]:
        return [Skill.parse(r.executed) for r in self.records if r.executed is not None]

    @property
    def steps(self) -> int:
        """Executed skills excluding DONE."""
        return sum(1 for sk in self.executed_skills if sk.kind is not SkillKind.DONE)

    @property
    def outcomes(self) -> list[dict]:
        return [r.outcome for r in self.records if r.outcome is not None]

    @property
    def gated_attempts(self) -> list[Attempt]:
        return [a for r in self.records for a in r.attempts if a.gated]

    @property
    def consistency_events(self) -> list[ConsistencyEvent]:
        return [a.consistency for r in self.records for a in r.attempts if a.consistency is not None]

    @property
    def conflicts(self) -> list[ConsistencyEvent]:
        return [e for e in self.consistency_events if e.event == "conflict"]

    def final_world(self) -> WorldState:
        return WorldState.from_dict(self.final_state)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EpisodeTrace":
        if d.get("version") != TRACE_SCHEMA_VERSION:
            raise ValueError(f"unsupported trace version {d.get('version')!r}")
        records = []
        for r in d["records"]:
            attempts = []
            for a in r["attempts"]:
                ce = a.get("consistency")
                attempts.append(Attempt(
                    a["proposal"], a["skill"], None if ce is None else ConsistencyEvent(**ce),
                    a["verdict"], a["gated"], list(a["parse_errors"]),
                ))
            records.append(IterationRecord(r["iteration"], attempts, r["executed"], r["outcome"],
                                           r["state_digest"], r["buffer_size_before"]))
        return cls(
            d["scenario"], d["config"], d["backend_id"], d["system_prompt"],
            [Exchange(**e) for e in d["exchanges"]], records, d["termination"],
            d["termination_detail"], d["final_state"], d["version"],
        )

    @classmethod
    def from_json(cls, text: str) -> "EpisodeTrace":
        return cls.from_dict(json.loads(text))

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(self.to_json(), encoding="utf-8")
        tmp.replace(path)
        return path

    @classmethod
    def load(cls, path: str | Path) -> "EpisodeTrace":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


# episode ---------------------------------------------------------------------


class _Abort(Exception):
    def __init__(self, reason: str, detail: str):
        super().__init__(detail)
        self.reason = reason
        self.detail = detail


class Episode:
    """Mutable state of one closed-loop run."""

    def __init__(self, scenario: Scenario, backend: Backend, config: PipelineConfig,
                 resolver: Backend | None = None):
        self.scenario = scenario
        self.backend = backend
        self.resolver = resolver or backend
        self.config = config
        self.labels = SkillLabels(scenario.skills)
        self.state = scenario.initial_state
        self.history: list[Skill] = []
        self.feedback_log: dict[int, list[str]] = {}
        self.buffer = SequenceBuffer()
        self.trace = EpisodeTrace(
            scenario.to_dict(), config.to_dict(), backend.backend_id,
            build_system_prompt(self.labels, config.flags),
        )

    # prompting ---------------------------------------------------------------

    def observation(self) -> Observation | None:
        if not self.config.use_observation:
            return None
        return Observation(describe_scene(self.state), render_topdown(self.state))

    def _call(self, backend: Backend, kind: str, iteration: int, user_text: str, image: bytes | None,
              options: tuple[Skill, ...] = ()) -> str:
        ctx = RequestContext(self.scenario, tuple(self.history), {k: list(v) for k, v in self.feedback_log.items()},
                             iteration, kind, options)
        req = ModelRequest(self.trace.system_prompt, user_text, image if backend.multimodal else None,
                           self.config.temperature, self.config.max_tokens, ctx)
        ex = Exchange(kind, iteration, user_text, None, backend.backend_id,
                      image_sha256=None if req.image is None else hashlib.sha256(req.image).hexdigest())
        self.trace.exchanges.append(ex)
        try:
            resp = backend.complete(req)
        except BackendError as e:
            ex.error = str(e)
            raise
        ex.response, ex.latency_ms = resp.text, resp.latency_ms
        return resp.text

    def propose(self, iteration: int, attempt: Attempt) -> ProposedSequence:
        bundle = build_user_prompt(self.scenario, self.history, self.feedback_log if self.config.use_sa else {},
                                   self.observation(), self.labels)
        text = bundle.user_text
        for _ in range(self.config.parse_retries + 1):
            try:
                reply = self._call(self.backend, "plan", iteration, text, bundle.image)
            except BackendError as e:
                raise _Abort("backend_error", str(e)) from e
            try:
                return parse_response(reply, self.labels, iteration, require_description=self.config.use_cot)
            except ParseError as e:
                attempt.parse_errors.append(str(e))
                text = bundle.user_text + "\n\n" + format_reminder(iteration, self.config.flags)
        raise _Abort("parse_failure", attempt.parse_errors[-1])

    def resolve_conflict(self, iteration: int, proposed: Skill, majority: Skill,
                         event: ConsistencyEvent) -> Skill:
        """Ask the model to pick one of the two skills; defaults to the majority."""
        bundle = build_user_prompt(self.scenario, self.history, self.feedback_log if self.config.use_sa else {},
                                   self.observation(), self.labels)
        text = bundle.user_text + "\n\n" + conflict_prompt(self.labels, iteration, proposed, majority)
        for _ in range(self.config.parse_retries + 1):
            try:
                reply = self._call(self.resolver, "resolve", iteration, text, bundle.image, (proposed, majority))
                return parse_choice(reply, self.labels, (proposed, majority))
            except (ParseError, BackendError):
                continue
        event.defaulted = True
        return majority

    # loop --------------------------------------------------------------------

    def step(self, iteration: int) -> Skill:
        """Run one iteration to the execution of a single skill."""
        rec = IterationRecord(iteration, buffer_size_before=len(self.buffer))
        self.trace.records.append(rec)
        replans = 0
        while True:
            attempt = Attempt(None)
            rec.attempts.append(attempt)
            seq = self.propose(iteration, attempt)
            attempt.proposal = seq.to_dict()
            skill = seq.first
            stored = seq
            if self.config.use_sc:
                check = consistency_check(self.buffer, iteration, skill)
                votes = [v.name for v in check.votes]
                if isinstance(check, Conflict):
                    ev = ConsistencyEvent("conflict", votes, check.majority.name, skill.name)
                    chosen = self.resolve_conflict(iteration, skill, check.majority, ev)
                    ev.resolved = chosen.name
                    if chosen != skill:
                        stored = ProposedSequence(seq.description, ((iteration, chosen),) + seq.steps[1:], seq.raw_text)
                        if chosen.kind is SkillKind.DONE:
                            stored = ProposedSequence(seq.description, ((iteration, chosen),), seq.raw_text)
                    skill = chosen
                else:
                    ev = ConsistencyEvent("consistent", votes)
                attempt.consistency = ev
            attempt.skill = skill.name
            if self.config.use_sa:
                verdict = affordance.check(self.state, skill)
                attempt.verdict = verdict.to_dict()
                if not verdict.feasible:
                    attempt.gated = True
                    replans += 1
                    self.replan(iteration, list(verdict.feedback))
                    if replans > self.config.max_replans_per_iteration:
                        raise _Abort("replan_exhausted",
                                     f"iteration {iteration}: gate fired {replans} times")
                    continue
            self.state, outcome = apply_skill(self.state, skill)
            self.history.append(skill)
            rec.executed = skill.name
            rec.outcome = {"status": outcome.status, "detail": outcome.detail}
            rec.state_digest = state_digest(self.state)
            if self.config.use_sc:
                self.buffer.add(stored)
            return skill

    def replan(self, iteration: int, feedback: list[str]) -> None:
        """Clear the buffer and record feedback; the iteration does not advance."""
        self.buffer.clear()
        self.feedback_log.setdefault(iteration, []).extend(feedback)

    def run(self) -> EpisodeTrace:
        try:
            for iteration in range(1, self.config.max_iterations + 1):
                if self.step(iteration).kind is SkillKind.DONE:
                    self.trace.termination = "done"
                    break
            else:
                self.trace.termination = "max_iterations"
        except _Abort as a:
            self.trace.termination = a.reason
            self.trace.termination_detail = a.detail
        self.trace.final_state = self.state.to_dict()
        return self.trace


def run_episode(scenario: Scenario, backend: Backend, config: PipelineConfig = PipelineConfig(),
                resolver: Backend | None = None) -> EpisodeTrace:
    """Run one closed-loop episode; failures end up as termination reasons, never exceptions."""
    return Episode(scenario, backend, config, resolver).run()


# replay ----------------------------------------------------------------------


def conservation_problems(initial: WorldState, state: WorldState, tol: float = 1e-9) -> list[str]:
    a, b = initial.totals(), state.totals()
    return [f"{k.value}: {a.get(k, 0.0):g} -> {b.get(k, 0.0):g}"
            for k in sorted(set(a) | set(b), key=lambda k: k.value)
            if abs(a.get(k, 0.0) - b.get(k, 0.0)) > tol]


def replay(trace: EpisodeTrace) -> list[str]:
    """Re-execute the trace's skill log; returns every mismatch found (empty when faithful)."""
    scenario = Scenario.from_dict(trace.scenario)
    state = scenario.initial_state
    problems = []
    for rec in trace.records:
        if rec.executed is None:
            continue
        state, out = apply_skill(state, Skill.parse(rec.executed))
        if rec.outcome and out.status != rec.outcome["status"]:
            problems.append(f"iteration {rec.iteration}: outcome {out.status} != recorded {rec.outcome['status']}")
        if state_digest(state) != rec.state_digest:
            problems.append(f"iteration {rec.iteration}: state differs from recorded digest")
        problems += [f"iteration {rec.iteration}: food not conserved ({p})"
                     for p in conservation_problems(scenario.initial_state, state)]
    if trace.final_state is not None and state.to_dict() != trace.final_state:
        problems.append("final state differs")
    return problems
