"""Prompt construction and parsing of chain-of-thought skill-sequence responses."""

from __future__ import annotations

import re
import string
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .world import Skill, SkillKind

INDENT = "    "


@dataclass(frozen=True)
class PromptFlags:
    """The prompt-relevant subset of a pipeline configuration."""

    use_observation: bool = True
    use_cot: bool = True
    use_sc: bool = True
    use_sa: bool = True


@dataclass(frozen=True)
class Observation:
    scene_text: str
    image: bytes | None = None


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    image: bytes | None = None


@dataclass(frozen=True)
class ProposedSequence:
    description: str
    steps: tuple[tuple[int, Skill], ...]
    raw_text: str = field(default="", compare=False)

    @property
    def start(self) -> int:
        return self.steps[0][0]

    @property
    def first(self) -> Skill:
        return self.steps[0][1]

    @property
    def terminated(self) -> bool:
        return bool(self.steps) and self.steps[-1][1].kind is SkillKind.DONE

    def skill_at(self, iteration: int) -> Skill | None:
        for i, sk in self.steps:
            if i == iteration:
                return sk
        return None

    def to_dict(self) -> dict:
        return {
            "description": self.description,
            "steps": [[i, sk.name] for i, sk in self.steps],
            "terminated": self.terminated,
            "raw_text": self.raw_text,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ProposedSequence":
        return cls(d["description"], tuple((i, Skill.parse(n)) for i, n in d["steps"]), d.get("raw_text", ""))


# labels ----------------------------------------------------------------------


class SkillLabels:
    """Letter labels A, B, C, ... assigned to a scenario's skill list in order."""

    def __init__(self, skills: Sequence[Skill]):
        if not skills:
            raise ValueError("empty skill set")
        if len(skills) > 26:
            raise ValueError("at most 26 skills can be labeled")
        if len(set(skills)) != len(skills):
            raise ValueError("duplicate skills")
        self.pairs: tuple[tuple[str, Skill], ...] = tuple(zip(string.ascii_uppercase, skills))
        self._by_letter = dict(self.pairs)
        self._by_skill = {sk: letter for letter, sk in self.pairs}

    def __getitem__(self, letter: str) -> Skill:
        return self._by_letter[letter]

    def __contains__(self, item: object) -> bool:
        return item in self._by_letter or item in self._by_skill

    def letter(self, skill: Skill) -> str:
        return self._by_skill[skill]

    def labeled(self, skill: Skill) -> str:
        return f"{self.letter(skill)}. {skill.display}"

    @property
    def skills(self) -> list[Skill]:
        return [sk for _, sk in self.pairs]

    def skill_set_line(self) -> str:
        return "[" + ", ".join(f"'{letter}. {sk.display}'" for letter, sk in self.pairs) + "]"


# system prompt ---------------------------------------------------------------

_SCENARIO = """\
# Scenario
You are a robotic arm specialized in food manipulation tasks. Your mission is to complete the assigned task step-by-step by selecting the most appropriate actions from the provided list. Your decisions should balance precision, safety, efficiency, and task progression.
Take the previous actions into consideration and choose the best actions for the remaining sequence from the skill set."""

_COT_LINE = ("You should describe the reasoning behind your decision and consider the high-level goal "
             "of the task before making a choice.")

_KNOWLEDGE = """\
# Additional Knowledges
1. Scooping guidelines
A single scoop should be done by selecting [move_to_container(with food), scoop, move_to_container(destination), drop_food] when the spoon is on the gripper.
2. Collision Avoidance
If an action risks a collision or task failure, pull the bowl to a safer location before proceeding.
3. Scooping limitations
Avoid scooping from bowls with insufficient food (e.g., only a few beans).
If a bowl is too far, pull it closer before attempting to scoop."""

_ACTIONS = """\
# Action Description
1. grasp_spoon: Grasp the spoon from the tool holder. The robot arm must have no tools in the gripper when choosing this action.
2. put_spoon_back: Put the spoon back to the tool holder.
3. move_to_container: Move to a container for actions like pulling or scooping.
4. scoop: Scoop food, with the speed adapted to the food's state.
5. stir: Stir the food.
6. drop_food: When the robot arm is positioned above a container, drop the food from the spoon into the container.
7. pull_bowl_closer: When the gripper is empty, pull the nearest bowl toward the center of the table.
8. open_dumbwaiter: Open the dumbwaiter door.
9. close_dumbwaiter: Close the dumbwaiter door.
10. put_bowl_into_dumbwaiter: Place the nearest bowl into the dumbwaiter.
11. start_dumbwaiter: Start the dumbwaiter.
12. DONE: Indicate that the task is complete."""

_FORMAT_HEAD = """\
# Scenario Format
You will be presented with a single scenario containing the following details:
Skill set: A list of all actions that the robot can perform, formatted as character. action.
Initial Object List: A detailed inventory of objects present in the environment, formatted as container_name (food inside).
Instruction: The high-level task or goal that the robot must accomplish.
Iterative Previous Actions: A chronological record of the actions the robot has executed in prior iterations."""

_FEEDBACK_LINE = ("Previous Affordance Feedback: A record of action names, their failure reasons, and some "
                  "suggestion from previous iterations. Please consider this information when making your decision.")
_OBSERVATION_LINE = "Current Observation: An image of the robot's current environment."

_INPUT = """\
# Input Format
You will be provided with several examples, each illustrating a unique scenario in the format described above.
Following these, another scenario will be presented, requiring you to deduce and choose the next optimal action."""

_OUTPUT_HEAD = """\
# Output Requirements
Select and output some actions from the provided Skill set in your task as the actions to execute in order.
The response should exclude all formatting characters such as backticks, quotes, or additional symbols."""

_SEQUENCE_LINE = "You should provide a sequence of action as answer, starting from current iteration until selecting DONE."
_SINGLE_LINE = "You should provide only the action for the current iteration."
_DESCRIPTION_LINE = "Format the first line of your response strictly as: Description: [your description]."

_FIXED_SKILL_NAMES = ("'scoop', 'stir', 'drop food', 'pull bowl closer', 'open dumbwaiter', 'close dumbwaiter', "
                      "'start dumbwaiter', 'put bowl into dumbwaiter', 'DONE', 'grasp spoon', 'put spoon back'")

_EXAMPLES = [
    (
        ["white", "green", "blue"],
        "['white bowl (with mung beans)', 'green bowl (with mung beans)', 'blue bowl (with tofu pudding)']",
        "Try your best to get more beans into the bowl with tofu pudding in one scoop. "
        "Put it into the dumbwaiter after you finish scooping.",
        ["grasp spoon", "move to white bowl", "scoop", "move to blue bowl", "drop food", "put spoon back",
         "move to green bowl", "pull bowl closer", "open dumbwaiter", "move to blue bowl",
         "put bowl into dumbwaiter", "close dumbwaiter", "start dumbwaiter", "DONE"],
        ["White bowl has more beans to scoop, so you should scoop from white bowl to blue bowl.",
         "Green bowl is too close to the dumbwaiter door, potentially obstructing the door from opening during execution."],
    ),
    (
        ["purple", "red"],
        "['red bowl (with mung beans)', 'purple bowl (with tofu pudding)']",
        "Place two scoop of beans into purple bowl.",
        ["grasp spoon", "move to red bowl", "scoop", "move to purple bowl", "drop food",
         "move to red bowl", "scoop", "move to purple bowl", "drop food", "DONE"],
        ["This example demonstrate how scoops should be done.",
         "Iteration 2 to 5 demonstrates how to scoop from red bowl to purple bowl once, and iteration 6 to 9 repeats it."],
    ),
]


def _examples_section() -> str:
    out = ["# Examples"]
    for n, (colors, objects, instruction, outputs, notes) in enumerate(_EXAMPLES, 1):
        moves = ", ".join(f"'move to {c} bowl'" for c in colors)
        out.append(f"Example {n}:")
        out.append(f"{INDENT}Skill set: [{_FIXED_SKILL_NAMES}, {moves}]")
        out.append(f"{INDENT}Initial object list: {objects}")
        out.append(f"{INDENT}Instruction: {instruction}")
        out.append("")
        for i, o in enumerate(outputs, 1):
            out.append(f"{INDENT}Iteration {i}:")
            out.append(f"{INDENT * 2}Output: {o}")
        out.append("")
        out.append(f"{INDENT}Explanation:")
        out.extend(f"{INDENT * 2}- {note}" for note in notes)
    return "\n".join(out)


SECTION_HEADERS = (
    "# Scenario",
    "# Additional Knowledges",
    "# Action Description",
    "# Scenario Format",
    "# Input Format",
    "# Output Requirements",
    "# Examples",
)


def build_system_prompt(labels: SkillLabels | Sequence[Skill], flags: PromptFlags = PromptFlags()) -> str:
    """The fixed six-section system prompt followed by the two worked examples.

    ``labels`` only has to be a valid labeled skill set; the system text itself
    does not depend on the scenario.
    """
    if not isinstance(labels, SkillLabels):
        SkillLabels(labels)
    scenario = _SCENARIO + ("\n" + _COT_LINE if flags.use_cot else "")
    fmt = _FORMAT_HEAD
    if flags.use_sa:
        fmt += "\n" + _FEEDBACK_LINE
    if flags.use_observation:
        fmt += "\n" + _OBSERVATION_LINE
    output = _OUTPUT_HEAD + "\n" + (_SEQUENCE_LINE if flags.use_sc else _SINGLE_LINE)
    if flags.use_cot:
        output += "\n" + _DESCRIPTION_LINE
        output += '\nFormat the rest of the line of your response strictly as: "'
    else:
        output += '\nFormat your response strictly as: "'
    output += f'\nIteration [number]:\n{INDENT}Output: [character]. [action]". Please use the format in the examples as a reference.'
    return "\n\n".join([scenario, _KNOWLEDGE, _ACTIONS, fmt, _INPUT, output, _examples_section()]) + "\n"


# user prompt -----------------------------------------------------------------


def object_list(state) -> str:
    from .world import object_line

    return "[" + ", ".join(f"'{object_line(b)}'" for b in sorted(state.bowls, key=lambda b: b.id)) + "]"


def feedback_lines(feedback_log: Mapping[int, Sequence[str]]) -> list[str]:
    """One ``In iteration k, ...`` line per iteration that received feedback."""
    return [f"In iteration {k}, " + " ".join(lines) for k, lines in sorted(feedback_log.items()) if lines]


def build_user_prompt(
    scenario,
    history: Sequence[Skill],
    feedback_log: Mapping[int, Sequence[str]] | None = None,
    observation: Observation | None = None,
    labels: SkillLabels | None = None,
) -> PromptBundle:
    """The ``Your task:`` block for the next iteration.  ``system_text`` is left empty."""
    labels = labels or SkillLabels(scenario.skills)
    lines = [
        "Your task:",
        f"{INDENT}Skill set: {labels.skill_set_line()}",
        f"{INDENT}Initial object list: {object_list(scenario.initial_state)}",
        f"{INDENT}Instruction: {scenario.instruction}",
    ]
    fb = feedback_lines(feedback_log or {})
    if fb:
        lines.append(f"{INDENT}Previous Affordance Feedback:")
        lines.extend(f"{INDENT * 2}{line}" for line in fb)
    if observation is not None:
        lines.append(f"{INDENT}Current Observation: an image of the current scene is attached. Detected objects:")
        lines.extend(f"{INDENT * 2}{line}" for line in observation.scene_text.splitlines())
    lines.append("")
    for i, sk in enumerate(history, 1):
        lines.append(f"{INDENT}Iteration {i}:")
        lines.append(f"{INDENT * 2}Output: {labels.labeled(sk)}")
    lines.append(f"{INDENT}Iteration {len(history) + 1}:")
    lines.append(f"{INDENT * 2}Output:")
    return PromptBundle("", "\n".join(lines), None if observation is None else observation.image)


def format_reminder(iteration: int, flags: PromptFlags = PromptFlags()) -> str:
    head = "a first line 'Description: ...', then " if flags.use_cot else ""
    return (f"Reminder: answer with {head}'Iteration N:' and 'Output: [character]. [action]' line pairs "
            f"starting at iteration {iteration}.")


def conflict_prompt(labels: SkillLabels, iteration: int, proposed: Skill, majority: Skill) -> str:
    return (
        f"Your proposed action for iteration {iteration} is '{labels.labeled(proposed)}', but your previous plans "
        f"chose '{labels.labeled(majority)}' for this iteration. Reconsider and choose exactly one of these two "
        f"actions. Answer with exactly one line: Output: [character]. [action]"
    )


# parsing ---------------------------------------------------------------------


class ParseErrorKind(str, Enum):
    MISSING_DESCRIPTION = "missing_description"
    BAD_ITERATION_NUMBERING = "bad_iteration_numbering"
    UNKNOWN_SKILL = "unknown_skill"
    LABEL_NAME_MISMATCH = "label_name_mismatch"


class ParseError(ValueError):
    def __init__(self, kind: ParseErrorKind, message: str):
        super().__init__(f"{kind.value}: {message}")
        self.kind = kind


_ITER_RE = re.compile(r"iteration\s*(\d+)\s*:\s*(.*)", re.IGNORECASE)
_OUTPUT_RE = re.compile(r"output\s*:\s*(.*)", re.IGNORECASE)
_LABELED_RE = re.compile(r"([A-Za-z])\s*\.\s+(.+)|([A-Za-z])\.(\S.*)")
_STRIP = " \t`'\"*"


def resolve_output(value: str, labels: SkillLabels) -> Skill:
    """Map ``J. grasp spoon`` (or a bare skill name) to a skill of this scenario."""
    value = value.strip(_STRIP)
    if not value:
        raise ParseError(ParseErrorKind.UNKNOWN_SKILL, "empty output")
    m = _LABELED_RE.fullmatch(value)
    letter = None
    name = value
    if m:
        letter = (m.group(1) or m.group(3)).upper()
        name = (m.group(2) or m.group(4)).strip(_STRIP)
    try:
        skill = Skill.parse(name)
    except ValueError:
        skill = None
    if letter is not None:
        if letter not in labels:
            raise ParseError(ParseErrorKind.UNKNOWN_SKILL, f"unknown label {letter!r}")
        if skill is None or skill not in labels:
            raise ParseError(ParseErrorKind.UNKNOWN_SKILL, f"unknown skill {name!r}")
        if labels[letter] != skill:
            raise ParseError(ParseErrorKind.LABEL_NAME_MISMATCH,
                             f"{letter} is {labels[letter].display!r}, not {name!r}")
        return skill
    if skill is None or skill not in labels:
        raise ParseError(ParseErrorKind.UNKNOWN_SKILL, f"unknown skill {name!r}")
    return skill


def parse_response(text: str, labels: SkillLabels, expected_start_iteration: int,
                   require_description: bool = True) -> ProposedSequence:
    """Parse ``Description:`` plus ``Iteration N:`` / ``Output: L. name`` pairs.

    Raises ParseError for every malformed input.  Sequences without DONE are
    returned with ``terminated`` False.
    """
    if not isinstance(text, str):
        raise ParseError(ParseErrorKind.MISSING_DESCRIPTION, "response is not text")
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln.strip(_STRIP)]
    description = ""
    if lines and lines[0].lstrip(_STRIP).lower().startswith("description:"):
        head = lines[0]
        description = head[head.lower().index("description:") + len("description:"):].strip()
        lines = lines[1:]
    elif require_description:
        raise ParseError(ParseErrorKind.MISSING_DESCRIPTION, "first line must start with 'Description:'")

    steps: list[tuple[int, Skill]] = []
    pending: int | None = None
    expected = expected_start_iteration
    for ln in lines:
        ln = ln.strip(_STRIP)
        if pending is None:
            m = _ITER_RE.fullmatch(ln)
            if not m:
                raise ParseError(ParseErrorKind.BAD_ITERATION_NUMBERING, f"expected 'Iteration {expected}:', got {ln!r}")
            n = int(m.group(1))
            if n != expected:
                raise ParseError(ParseErrorKind.BAD_ITERATION_NUMBERING, f"expected iteration {expected}, got {n}")
            if steps and steps[-1][1].kind is SkillKind.DONE:
                raise ParseError(ParseErrorKind.BAD_ITERATION_NUMBERING, "steps after DONE")
            rest = m.group(2).strip(_STRIP)
            if rest:
                om = _OUTPUT_RE.fullmatch(rest)
                if not om:
                    raise ParseError(ParseErrorKind.BAD_ITERATION_NUMBERING, f"expected 'Output:', got {rest!r}")
                steps.append((n, resolve_output(om.group(1), labels)))
                expected += 1
            else:
                pending = n
        else:
            om = _OUTPUT_RE.fullmatch(ln)
            if not om:
                raise ParseError(ParseErrorKind.BAD_ITERATION_NUMBERING, f"expected 'Output:', got {ln!r}")
            steps.append((pending, resolve_output(om.group(1), labels)))
            pending = None
            expected += 1
    if pending is not None:
        raise ParseError(ParseErrorKind.BAD_ITERATION_NUMBERING, f"iteration {pending} has no output")
    if not steps:
        raise ParseError(ParseErrorKind.BAD_ITERATION_NUMBERING, "no iterations found")
    return ProposedSequence(description, tuple(steps), text)


def parse_choice(text: str, labels: SkillLabels, options: Iterable[Skill]) -> Skill:
    """Parse a one-line conflict answer; the skill must be one of ``options``."""
    options = list(options)
    found = None
    for ln in text.splitlines():
        m = _OUTPUT_RE.search(ln.strip(_STRIP))
        if m:
            found = resolve_output(m.group(1), labels)
            break
    if found is None:
        found = resolve_output(text.strip(), labels)
    if found not in options:
        raise ParseError(ParseErrorKind.UNKNOWN_SKILL, f"{found.name} is not one of the conflicting skills")
    return found


def render_response(seq: ProposedSequence, labels: SkillLabels, with_description: bool = True) -> str:
    """Inverse of :func:`parse_response`."""
    out = [f"Description: {seq.description}"] if with_description else []
    for i, sk in seq.steps:
        out.append(f"Iteration {i}:")
        out.append(f"{INDENT}Output: {labels.labeled(sk)}")
    return "\n".join(out)
