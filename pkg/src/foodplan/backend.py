"""Model backends: remote chat endpoint, scripted replies, oracle, and fault injection.

Every backend exposes ``complete(request) -> ModelResponse`` and a ``concurrent``
flag telling the planner whether calls from several episodes may overlap.
"""

from __future__ import annotations

import base64
import json
import os
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .prompts import ParseError, ProposedSequence, SkillLabels, parse_response, render_response
from .render import ppm_to_png
from .scenarios import Scenario, next_skill, plan_from_state
from .world import DONE, Skill, SkillKind, WorldState, apply_skill

DEFAULT_CREDENTIAL_VAR = "MODEL_API_KEY"
DEFAULT_ATTEMPTS = 3


@dataclass(frozen=True)
class RequestContext:
    """Structured view of what the prompt says; only local backends read it."""

    scenario: Scenario
    history: tuple[Skill, ...] = ()
    feedback: Mapping[int, Sequence[str]] = field(default_factory=dict)
    iteration: int = 1
    kind: str = "plan"  # or "resolve"
    options: tuple[Skill, ...] = ()


@dataclass(frozen=True)
class ModelRequest:
    system_text: str
    user_text: str
    image: bytes | None = None
    temperature: float = 0.0
    max_tokens: int = 1024
    context: RequestContext | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    latency_ms: float
    backend_id: str


class BackendError(RuntimeError):
    def __init__(self, message: str, retryable: bool = False):
        super().__init__(message)
        self.retryable = retryable


class ScriptExhausted(BackendError):
    pass


class Backend(Protocol):
    backend_id: str
    concurrent: bool
    multimodal: bool

    def complete(self, request: ModelRequest) -> ModelResponse: ...


def _timed(backend_id: str, fn: Callable[[], str]) -> ModelResponse:
    t0 = time.perf_counter()
    text = fn()
    return ModelResponse(text, (time.perf_counter() - t0) * 1000.0, backend_id)


# remote ----------------------------------------------------------------------


class RemoteBackend:
    """Chat-completions style JSON endpoint with bounded retry and exponential backoff."""

    concurrent = True
    multimodal = True

    def __init__(self, url: str, model: str, credential_var: str = DEFAULT_CREDENTIAL_VAR,
                 attempts: int = DEFAULT_ATTEMPTS, backoff: float = 1.0, timeout: float = 60.0,
                 transport: httpx.BaseTransport | None = None, sleep: Callable[[float], None] = time.sleep,
                 env: Mapping[str, str] | None = None):
        self.url = url
        self.model = model
        self.credential_var = credential_var
        self.attempts = attempts
        self.backoff = backoff
        self.sleep = sleep
        self.env = os.environ if env is None else env
        self.backend_id = f"remote:{model}"
        self.client = httpx.Client(timeout=timeout, transport=transport)

    def payload(self, request: ModelRequest) -> dict:
        if request.image is not None:
            png = ppm_to_png(request.image) if request.image.startswith(b"P6") else request.image
            url = "data:image/png;base64," + base64.b64encode(png).decode("ascii")
            user = [{"type": "text", "text": request.user_text},
                    {"type": "image_url", "image_url": {"url": url}}]
        else:
            user = request.user_text
        return {
            "model": self.model,
            "messages": [{"role": "system", "content": request.system_text},
                         {"role": "user", "content": user}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }

    def _once(self, body: dict, key: str) -> str:
        try:
            r = self.client.post(self.url, json=body, headers={"Authorization": f"Bearer {key}"})
        except httpx.HTTPError as e:
            raise BackendError(f"transport error: {e}", retryable=True) from e
        if r.status_code == 429 or r.status_code >= 500:
            raise BackendError(f"HTTP {r.status_code}", retryable=True)
        if r.status_code >= 400:
            raise BackendError(f"HTTP {r.status_code}: {r.text[:200]}")
        try:
            text = r.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise BackendError(f"malformed reply: {r.text[:200]}") from e
        if not isinstance(text, str) or not text.strip():
            raise BackendError("empty reply", retryable=True)
        return text

    def complete(self, request: ModelRequest) -> ModelResponse:
        key = self.env.get(self.credential_var)
        if not key:
            raise BackendError(f"credential variable {self.credential_var} is not set")
        body = self.payload(request)

        def call() -> str:
            for attempt in range(self.attempts):
                try:
                    return self._once(body, key)
                except BackendError as e:
                    if not e.retryable or attempt == self.attempts - 1:
                        raise
                    self.sleep(self.backoff * 2 ** attempt)
            raise AssertionError("unreachable")

        return _timed(self.backend_id, call)


# scripted --------------------------------------------------------------------


class ScriptedBackend:
    """Returns canned replies in order, one per call."""

    concurrent = False
    multimodal = True

    def __init__(self, replies: Sequence[str], backend_id: str = "scripted"):
        self.replies = list(replies)
        self.backend_id = backend_id
        self._next = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, list) or not all(isinstance(x, str) for x in data):
            raise ValueError(f"{path}: script must be a JSON array of strings")
        return cls(data, f"scripted:{Path(path).name}")

    @property
    def remaining(self) -> int:
        return len(self.replies) - self._next

    def complete(self, request: ModelRequest) -> ModelResponse:
        def take() -> str:
            with self._lock:
                if self._next >= len(self.replies):
                    raise ScriptExhausted(f"script exhausted after {len(self.replies)} replies")
                self._next += 1
                return self.replies[self._next - 1]

        return _timed(self.backend_id, take)


# oracle ----------------------------------------------------------------------


def replay_history(scenario: Scenario, history: Sequence[Skill]) -> WorldState:
    state = scenario.initial_state
    for sk in history:
        state, _ = apply_skill(state, sk)
    return state


def oracle_sequence(scenario: Scenario, history: Sequence[Skill]) -> ProposedSequence:
    state = replay_history(scenario, history)
    plan = plan_from_state(scenario, state)
    start = len(history) + 1
    desc = ("Continue the task from the current state, pulling bowls that are too far or in the way "
            "before using the spoon.")
    return ProposedSequence(desc, tuple((start + i, sk) for i, sk in enumerate(plan)))


def oracle_respond(scenario: Scenario, history: Sequence[Skill],
                   feedback: Mapping[int, Sequence[str]] | None = None) -> ModelResponse:
    """Render the oracle's plan from the current state in the response format.

    Feedback needs no special handling: the oracle replans from the actual
    state, which already reflects whatever the feedback complained about.
    """
    labels = SkillLabels(scenario.skills)
    return _timed("oracle", lambda: render_response(oracle_sequence(scenario, history), labels))


def oracle_choice(scenario: Scenario, history: Sequence[Skill]) -> Skill:
    return next_skill(scenario, replay_history(scenario, history))


class OracleBackend:
    concurrent = True
    multimodal = True
    backend_id = "oracle"

    def complete(self, request: ModelRequest) -> ModelResponse:
        ctx = _require_context(request, self.backend_id)
        if ctx.kind == "resolve":
            labels = SkillLabels(ctx.scenario.skills)
            sk = oracle_choice(ctx.scenario, ctx.history)
            return _timed(self.backend_id, lambda: f"Output: {labels.labeled(sk)}")
        return oracle_respond(ctx.scenario, ctx.history, ctx.feedback)


def _require_context(request: ModelRequest, who: str) -> RequestContext:
    if request.context is None:
        raise BackendError(f"{who} backend needs a request context")
    return request.context


# fault injection -------------------------------------------------------------


@dataclass(frozen=True)
class FaultRule:
    action: str  # "swap" or "done"
    iteration: int

    @classmethod
    def parse(cls, text: str) -> "FaultRule":
        try:
            action, it = text.strip().split("@")
            rule = cls(action.strip().lower(), int(it))
        except ValueError as e:
            raise ValueError(f"bad fault rule {text!r}; expected swap@N or done@N") from e
        if rule.action not in ("swap", "done") or rule.iteration < 1:
            raise ValueError(f"bad fault rule {text!r}")
        return rule


def perturb(seq: ProposedSequence, rule: FaultRule, labels: SkillLabels) -> ProposedSequence:
    """Change the step at ``rule.iteration``; all other steps are kept.

    ``done`` ends the sequence there.  ``swap`` substitutes the next skill in
    label order, skipping DONE so the sequence stays well formed.
    """
    steps = list(seq.steps)
    for pos, (i, sk) in enumerate(steps):
        if i != rule.iteration:
            continue
        if rule.action == "done":
            return ProposedSequence(seq.description, tuple(steps[:pos]) + ((i, DONE),))
        skills = labels.skills
        j = skills.index(sk)
        for k in range(1, len(skills)):
            alt = skills[(j + k) % len(skills)]
            if alt.kind is not SkillKind.DONE and alt != sk:
                break
        steps[pos] = (i, alt)
        return ProposedSequence(seq.description, tuple(steps))
    return seq


class FaultyBackend:
    """Wraps another backend and perturbs the current-iteration step of plan replies."""

    multimodal = True

    def __init__(self, base: Backend, rules: Sequence[FaultRule]):
        self.base = base
        self.rules = list(rules)
        self.concurrent = base.concurrent
        self.backend_id = f"faulty({base.backend_id})"

    def complete(self, request: ModelRequest) -> ModelResponse:
        resp = self.base.complete(request)
        ctx = request.context
        if ctx is None or ctx.kind != "plan":
            return resp
        rules = [r for r in self.rules if r.iteration == ctx.iteration]
        if not rules:
            return resp
        labels = SkillLabels(ctx.scenario.skills)
        try:
            seq = parse_response(resp.text, labels, ctx.iteration, require_description=False)
        except ParseError:
            return resp
        for r in rules:
            seq = perturb(seq, r, labels)
        return ModelResponse(render_response(seq, labels, with_description=bool(seq.description)),
                             resp.latency_ms, self.backend_id)


# factory ---------------------------------------------------------------------


def create_backend(spec: str, credential_var: str = DEFAULT_CREDENTIAL_VAR) -> Backend:
    """Build a backend from ``oracle``, ``scripted:<path>``, ``faulty:<base>:<rules>`` or ``remote:<url>:<model>``."""
    if spec == "oracle":
        return OracleBackend()
    kind, _, rest = spec.partition(":")
    if kind == "scripted" and rest:
        return ScriptedBackend.from_file(rest)
    if kind == "faulty" and ":" in rest:
        base, rules = rest.rsplit(":", 1)
        return FaultyBackend(create_backend(base if base == "oracle" else f"scripted:{base}", credential_var),
                             [FaultRule.parse(r) for r in rules.split(",")])
    if kind == "remote" and ":" in rest:
        url, model = rest.rsplit(":", 1)
        if not url or not model:
            raise ValueError(f"bad remote spec {spec!r}")
        return RemoteBackend(url, model, credential_var)
    raise ValueError(f"unknown backend spec {spec!r}")
