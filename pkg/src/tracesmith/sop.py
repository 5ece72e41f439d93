"""Demonstration-to-SOP compilation.

Two generation routes share one output model: a provider route (build the
generation prompt, send it to a completion endpoint, parse the tagged
response) and a fully offline fallback that derives the SOP mechanically
from the filtered recording. The fallback keeps the whole pipeline and test
suite reproducible with no network.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

from .errors import FormatError, TracesmithError
from .ingest import emit_recording_json
from .model import (
    DemoRecording,
    RecordedStep,
    StepKind,
    TaskDefinition,
    placeholder_names,
    step_label,
)


class MissingTag(FormatError):
    """A required tag is absent from the SOP response text."""

    def __init__(self, name: str):
        super().__init__(f"missing <{name}> tag in SOP response")
        self.name = name


class BadParamJson(FormatError):
    """The <input_param> block is not a JSON object."""


class EmptySteps(FormatError):
    """The instructions block contains no numbered steps."""


class NoNavigationStep(TracesmithError):
    """The recording never navigates anywhere, so no SOP can start."""


class UnresolvedPlaceholder(TracesmithError):
    def __init__(self, name: str):
        super().__init__(f"no binding for placeholder <{name}>")
        self.name = name


class UnusedParam(TracesmithError):
    def __init__(self, name: str):
        super().__init__(f"parameter {name!r} matches no placeholder")
        self.name = name


# Generation prompt. The three <INPUT_*>/<TEXT_REPLAY> slots are substituted
# verbatim; everything else is a frozen contract covered by a golden-file test.
PROMPT_TEMPLATE = """\
<role>
You are a professional operations manager whose expertise is to document Standard Operating Procedure (SOP) in a clear and precise manner.
This SOP will be used as a step-by-step instruction for an AI-powered browsing agent to complete similar tasks.
</role>

You are now given a demo of the operation procedure performed by a human associate for the following task described within <task_description> tags:
<task_description>
<INPUT_TASK_DESCRIPTION_EXAMPLE>
</task_description>

The demo peration procedure is recorded as a browser replay in .json format within the <browser_replay_in_json> tags:
<demo>
<browser_replay_in_json>
<TEXT_REPLAY>
</browser_replay_in_json>
</demo>

You are asked to compose an SOP which an AI-powered browsing agent can follow and complete similar tasks within the <task_for_sop> tags below:
<task_for_sop>
<INPUT_TASK_DESCRIPTION_GENERAL>
</task_for_sop>

Below is the requirement of what should be included in the SOP that you are going to compose:
<requirement>
1. For the first step in your SOP:
  - Use both website name and the exact URL in your instruction
2. For the second step and onwards in your SOP:
  - Look holistically at the demo and identify the intention and goal behind each browsing action and step recorded.\x20
  - Use the intention and purpose behind to guide your composition of SOP.\x20
  - If navigating to a specific website is a critical action to achieve the goal, always include the web page name and the exact URL of this navigatio action.
  - For other actions, e.g., mouse clicks, keyboard inputs, that are related to the task, include them as illustration examples in your instrcution.
3. Your SOP should only include the knowledge that can be drawn from the demo replay within <demo> tags.\x20
  - Do not come up with an SOP from your memory.
4. Exclude steps within <demo> tages that are unrelated to the task within <task_for_sop> tags. Examples of such steps are:
  - Steps related to solving CAPTCHA.
  - Steps related to close pop up windows.
  - Mouse clicks on non-interactable elements such as background, or plain text.
</requirement>

You should follow the formatting instructions below to provide an SOP as your final answer:
<format_instructions>
1. Using <sop> tags to include all contents below.
2. Restate the task description content within <task_for_sop> tags above, now using <task> tags.
3. <task_for_sop> may be a general version of the <demo> example. Please identify proper input parameters so that <task_for_sop> can be faithfully represented.
  - Format the input parameters as .json within <input_param> tags. E.g., {input_param_1: "Explanation"}.
  - If no input parameter needed, output an empty dict within <input_param> tags. I.e., {}.
4. Document your final SOP within <instructions-step-by-step> tags.
  - Only provide the instructions within <instructions-step-by-step> tags. No need to explain within <instructions-step-by-step> tags.
  - Use proper referece to the input parameters identified. E.g., using <INPUT_PARAMETER_1>
  - Using numbered points to organize your sop.
</format_instructions>
"""


@dataclass(slots=True)
class SopTemplate:
    """A generalizable SOP: task text, named input parameters, numbered
    placeholder-bearing steps."""

    task: str
    input_params: dict[str, str]
    steps: list[str]

    def placeholders(self) -> list[str]:
        seen: dict[str, None] = {}
        for text in [self.task, *self.steps]:
            for name in placeholder_names(text):
                seen.setdefault(name)
        return list(seen)

    def unbound_placeholders(self) -> list[str]:
        return [n for n in self.placeholders() if n not in self.input_params]

    def unused_params(self) -> list[str]:
        used = set(self.placeholders())
        return [n for n in self.input_params if n not in used]


@dataclass(slots=True)
class SopInstance:
    """A concrete execution plan: the template with parameters substituted."""

    task: str
    steps: list[str]
    params: dict[str, str]
    warnings: list[str] = field(default_factory=list)


def build_prompt(task: TaskDefinition, rec: DemoRecording) -> str:
    """Fill the generation prompt template for one demonstration."""
    return (
        PROMPT_TEMPLATE
        .replace("<INPUT_TASK_DESCRIPTION_EXAMPLE>", task.example_description)
        .replace("<TEXT_REPLAY>", emit_recording_json(rec))
        .replace("<INPUT_TASK_DESCRIPTION_GENERAL>", task.general_description)
    )


def _tag_content(text: str, name: str) -> str:
    m = re.search(rf"<{name}>(.*?)</{name}>", text, re.DOTALL)
    if m is None:
        raise MissingTag(name)
    return m.group(1)


_NUMBERED_LINE_RE = re.compile(r"^\s*\d+\.\s?")


def parse_sop_response(text: str) -> SopTemplate:
    """Parse a tagged SOP response into a template.

    Numbered lines open steps; indented continuations and sub-bullets attach
    to the preceding step.
    """
    sop = _tag_content(text, "sop")
    task = _tag_content(sop, "task").strip()
    raw_params = _tag_content(sop, "input_param").strip()
    try:
        params = json.loads(raw_params)
    except json.JSONDecodeError as exc:
        raise BadParamJson(f"input_param is not valid JSON: {exc}") from exc
    if not isinstance(params, dict):
        raise BadParamJson("input_param must be a JSON object")
    instructions = _tag_content(sop, "instructions-step-by-step")

    steps: list[str] = []
    for line in instructions.splitlines():
        if _NUMBERED_LINE_RE.match(line):
            steps.append(_NUMBERED_LINE_RE.sub("", line).rstrip())
        elif steps and line.strip():
            steps[-1] += "\n" + line.rstrip()
    if not steps:
        raise EmptySteps("no numbered steps in <instructions-step-by-step>")
    return SopTemplate(
        task=task,
        input_params={str(k): str(v) for k, v in params.items()},
        steps=steps,
    )


def emit_tagged_sop(tpl: SopTemplate) -> str:
    """Template back to tagged text (provider interop form)."""
    numbered = "\n".join(f"{i + 1}. {s}" for i, s in enumerate(tpl.steps))
    params = json.dumps(tpl.input_params, indent=2, sort_keys=True)
    return (
        "<sop>\n"
        f"<task>\n{tpl.task}\n</task>\n\n"
        f"<input_param>\n{params}\n</input_param>\n\n"
        f"<instructions-step-by-step>\n{numbered}\n</instructions-step-by-step>\n"
        "</sop>\n"
    )


@dataclass(frozen=True, slots=True)
class PlannedStep:
    """One SOP line in the making: its 1-based index and source step."""

    sop_index: int
    kind: str
    step: RecordedStep


def sop_step_plan(rec: DemoRecording) -> list[PlannedStep]:
    """Map a (filtered) recording onto SOP step positions.

    The first navigation is always SOP step 1; interactive steps and any
    later navigations follow in recording order. Other step kinds carry no
    SOP line.
    """
    first_nav = next((s for s in rec.steps if s.kind is StepKind.NAVIGATE), None)
    if first_nav is None:
        raise NoNavigationStep("recording has no navigate step")
    plan = [PlannedStep(1, "navigate", first_nav)]
    index = 2
    for step in rec.steps:
        if step is first_nav:
            continue
        if step.kind is StepKind.NAVIGATE:
            plan.append(PlannedStep(index, "navigate", step))
            index += 1
        elif step.is_interactive:
            plan.append(PlannedStep(index, step.kind.value, step))
            index += 1
    return plan


_VALUE_TOKEN_RE = re.compile(r"[A-Za-z0-9]+")


def _value_occurs_in(value: str, example_text_lower: str) -> bool:
    # A change value is "present" in the example description when any of
    # its alphanumeric tokens (3+ chars) occurs there, case-insensitively;
    # recorded values are often partial ("japa") or composite ("2020-01").
    return any(
        len(tok) >= 3 and tok.lower() in example_text_lower
        for tok in _VALUE_TOKEN_RE.findall(value)
    )


def _param_slug(label: str, taken: set[str]) -> str:
    slug = re.sub(r"[^a-z0-9]+", "_", label.lower()).strip("_") or "value"
    if not slug[0].isalpha():
        slug = "p_" + slug
    base, n = slug, 2
    while slug in taken:
        slug = f"{base}_{n}"
        n += 1
    taken.add(slug)
    return slug


def generate_fallback_sop(task: TaskDefinition, rec: DemoRecording) -> SopTemplate:
    """Deterministic no-provider SOP from a filtered recording.

    Step 1 names the exact URL; clicks and changes become one line each in
    order. A change value is lifted to a named input parameter when it
    (or a token of it) occurs in the example task description — values the
    demonstration does not tie to the task stay literal.
    """
    plan = sop_step_plan(rec)
    example_lower = task.example_description.lower()
    steps: list[str] = []
    params: dict[str, str] = {}
    taken: set[str] = set()
    for planned in plan:
        step = planned.step
        if planned.kind == "navigate":
            steps.append(f"Navigate to {step.url}")
        elif planned.kind == "change":
            label = step_label(step)
            value = step.value or ""
            if value and _value_occurs_in(value, example_lower):
                name = _param_slug(label, taken)
                params[name] = f"Value entered for '{label}' in the demonstration (e.g. '{value}')"
                steps.append(f"Enter '<{name}>' into '{label}'")
            else:
                steps.append(f"Enter '{value}' into '{label}'")
        else:
            steps.append(f"Click on the element '{step_label(step)}'")
    return SopTemplate(task=task.general_description, input_params=params, steps=steps)


def instantiate(
    tpl: SopTemplate, params: dict[str, str], strict: bool = False
) -> SopInstance:
    """Substitute parameter values into every step and the task text.

    Strict mode errors on unresolved placeholders and unused parameters;
    lenient mode records warnings and leaves unknown placeholders verbatim.
    """
    for name, value in params.items():
        if not isinstance(value, str) or not value:
            raise ValueError(f"parameter {name!r} must be a non-empty string")

    def substitute(text: str) -> str:
        for name, value in params.items():
            text = text.replace(f"<{name}>", value)
        return text

    task = substitute(tpl.task)
    steps = [substitute(s) for s in tpl.steps]
    warnings: list[str] = []

    unresolved: dict[str, None] = {}
    for text in [task, *steps]:
        for name in placeholder_names(text):
            unresolved.setdefault(name)
    if unresolved:
        if strict:
            raise UnresolvedPlaceholder(next(iter(unresolved)))
        warnings.extend(f"unresolved placeholder <{n}>" for n in unresolved)

    all_placeholders = set(tpl.placeholders())
    unused = [n for n in params if n not in all_placeholders]
    if unused:
        if strict:
            raise UnusedParam(unused[0])
        warnings.extend(f"unused parameter {n!r}" for n in unused)

    return SopInstance(task=task, steps=steps, params=dict(params), warnings=warnings)


# --- sop.json / instance JSON (external interfaces) ---

def template_to_dict(tpl: SopTemplate) -> dict:
    return {"task": tpl.task, "input_param": dict(tpl.input_params), "steps": list(tpl.steps)}


def template_from_dict(data: dict) -> SopTemplate:
    try:
        return SopTemplate(
            task=data["task"],
            input_params={str(k): str(v) for k, v in data.get("input_param", {}).items()},
            steps=[str(s) for s in data["steps"]],
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad SOP template JSON: {exc}") from exc


def save_template(tpl: SopTemplate, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(template_to_dict(tpl), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_template(path: str | Path) -> SopTemplate:
    try:
        return template_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc


def instance_to_dict(inst: SopInstance) -> dict:
    return {
        "task": inst.task,
        "steps": list(inst.steps),
        "params": dict(inst.params),
        "warnings": list(inst.warnings),
    }


def instance_from_dict(data: dict) -> SopInstance:
    try:
        return SopInstance(
            task=data["task"],
            steps=[str(s) for s in data["steps"]],
            params={str(k): str(v) for k, v in data.get("params", {}).items()},
            warnings=[str(w) for w in data.get("warnings", [])],
        )
    except (KeyError, TypeError) as exc:
        raise FormatError(f"bad SOP instance JSON: {exc}") from exc


def load_instance(path: str | Path) -> SopInstance:
    try:
        return instance_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc


def save_instance(inst: SopInstance, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(instance_to_dict(inst), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )
