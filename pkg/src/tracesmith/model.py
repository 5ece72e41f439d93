"""Core domain types: recordings, selectors, step features, execution traces.

Includes the recorded-selector prefix grammar and the canonical step-text
serialization that every consumer of trace features relies on. Both are
deterministic byte-level contracts: other components (including non-Python
ones) must reproduce them exactly.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping, Sequence

from .errors import FormatError, TracesmithError


class EmptySelector(FormatError):
    """Raised when a selector string is empty, or empty after its prefix."""


class EmptyTrace(TracesmithError):
    """Raised when an operation needs a non-empty execution trace."""


ACTION_VOCABULARY = ("navigate", "click", "type", "select", "scroll", "extract")

SELECTOR_SCHEMES = ("css", "xpath", "aria", "text", "pierce")


class StepKind(str, Enum):
    SET_VIEWPORT = "setViewport"
    NAVIGATE = "navigate"
    CLICK = "click"
    CHANGE = "change"
    SCROLL = "scroll"
    KEYPRESS = "keypress"
    OTHER = "other"

    @classmethod
    def from_recorded(cls, raw: str) -> "StepKind":
        try:
            return cls(raw)
        except ValueError:
            return cls.OTHER


@dataclass(frozen=True, slots=True)
class Selector:
    """One recorded selector: a scheme plus its body.

    The scheme is determined purely by the string prefix: ``aria/``,
    ``xpath//`` (body keeps its leading slashes), ``pierce/``, ``text/``;
    anything else is bare CSS.
    """

    scheme: str
    body: str

    def __post_init__(self) -> None:
        if self.scheme not in SELECTOR_SCHEMES:
            raise ValueError(f"unknown selector scheme {self.scheme!r}")
        if not self.body:
            raise EmptySelector("selector body is empty")

    @property
    def raw(self) -> str:
        """The original prefixed string form."""
        if self.scheme == "css":
            return self.body
        if self.scheme == "xpath":
            return "xpath/" + self.body
        return f"{self.scheme}/{self.body}"


def parse_selector(raw: str) -> Selector:
    """Parse a recorded selector string into its scheme and body.

    Unrecognized prefixes fall back to CSS because the recorder emits
    plain CSS selectors without any prefix.
    """
    if not raw:
        raise EmptySelector("selector string is empty")
    if raw.startswith("aria/"):
        return Selector("aria", raw[len("aria/"):])
    if raw.startswith("xpath//"):
        # Strip only "xpath/" so the body keeps its leading slashes.
        return Selector("xpath", raw[len("xpath/"):])
    if raw.startswith("pierce/"):
        return Selector("pierce", raw[len("pierce/"):])
    if raw.startswith("text/"):
        return Selector("text", raw[len("text/"):])
    return Selector("css", raw)


@dataclass(slots=True)
class RecordedStep:
    """One step of a recorder export, normalized.

    ``selectors`` keeps the recorder's group structure: a list of groups,
    each an ordered list of alternative selectors for the same target.
    ``extra`` carries unmapped recorder fields (viewport geometry, offsets'
    siblings, ...) so a recording can be re-emitted without loss.
    """

    kind: StepKind
    raw_type: str
    url: str | None = None
    value: str | None = None
    selectors: list[list[Selector]] = field(default_factory=list)
    offsets: tuple[float, float] | None = None
    asserted_navigations: list[tuple[str, str]] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @property
    def flat_selectors(self) -> list[Selector]:
        return [sel for group in self.selectors for sel in group]

    @property
    def is_interactive(self) -> bool:
        return self.kind in (StepKind.CLICK, StepKind.CHANGE)


@dataclass(slots=True)
class DemoRecording:
    """A parsed demonstration: title plus ordered recorded steps."""

    title: str
    steps: list[RecordedStep]

    def counts_by_kind(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for step in self.steps:
            out[step.kind.value] = out.get(step.kind.value, 0) + 1
        return out


@dataclass(frozen=True, slots=True)
class TaskDefinition:
    """The task half of a demonstration: one concrete example description
    and the general description the SOP should satisfy."""

    example_description: str
    general_description: str

    def __post_init__(self) -> None:
        if not self.example_description.strip():
            raise ValueError("example description must be non-empty")
        if not self.general_description.strip():
            raise ValueError("general description must be non-empty")


@dataclass(frozen=True, slots=True)
class StepFeature:
    """Feature view of one executed step: goal text, action verb, and the
    attribute pairs of the element that was acted on."""

    goal: str
    action: str
    attributes: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.action not in ACTION_VOCABULARY:
            raise ValueError(
                f"action {self.action!r} not in vocabulary {ACTION_VOCABULARY}"
            )
        object.__setattr__(self, "attributes", dict(self.attributes))


@dataclass(slots=True)
class ExecutionTrace:
    """Ordered step features produced by executing one task."""

    task_id: str
    steps: list[StepFeature]
    meta: dict[str, str] = field(default_factory=dict)


_ESCAPES = (("%", "%25"), ("|", "%7C"), (";", "%3B"), ("=", "%3D"))


def _escape(text: str) -> str:
    for ch, repl in _ESCAPES:
        text = text.replace(ch, repl)
    return text


def canonical_step_text(step: StepFeature) -> str:
    """Serialize a step feature to its canonical one-line text.

    Format: ``g=<goal>|a=<action>|attrs=<k1>=<v1>;<k2>=<v2>;...`` with keys
    bytewise-sorted and ``| ; = %`` percent-encoded inside free text. Equal
    inputs produce byte-equal outputs; differing inputs differ.
    """
    attrs = ";".join(
        f"{_escape(k)}={_escape(step.attributes[k])}"
        for k in sorted(step.attributes)
    )
    return f"g={_escape(step.goal)}|a={step.action}|attrs={attrs}"


_PLACEHOLDER_RE = re.compile(r"<([A-Za-z][A-Za-z0-9_]*)>")


def placeholder_names(text: str) -> list[str]:
    """All ``<ident>`` placeholders in *text*, in order of appearance."""
    return _PLACEHOLDER_RE.findall(text)


# Attribute keys ordered from most to least stable. Ids rank low because
# recorders capture plenty of them but sites regenerate them per session.
DEFAULT_KEY_RANKING = (
    "data-testid",
    "aria-label",
    "name",
    "role",
    "type",
    "id",
    "placeholder",
    "title",
    "href",
)

_ARIA_ROLE_SUFFIX_RE = re.compile(r"\[role=\"[^\"]*\"\]$")
_CSS_ATTR_RE = re.compile(r"\[([\w-]+)=(\"([^\"]*)\"|'([^']*)'|([^\]]*))\]")
_XPATH_ATTR_RE = re.compile(r"\[@([\w-]+)=(\"([^\"]*)\"|'([^']*)')\]")
_CSS_ID_RE = re.compile(r"#([\w-]+)")


def aria_selector_name(body: str) -> str:
    """Accessible-name part of an aria selector body (role suffix stripped)."""
    return _ARIA_ROLE_SUFFIX_RE.sub("", body)


def recorded_attribute_hints(step: RecordedStep) -> dict[str, str]:
    """Attribute pairs implied by a step's recorded selectors.

    These stand in for the recorded element when the step must be matched
    semantically (no live DOM was captured alongside the recording).
    """
    hints: dict[str, str] = {}
    for sel in step.flat_selectors:
        if sel.scheme == "aria":
            name = aria_selector_name(sel.body)
            if name:
                hints.setdefault("aria-label", name)
        elif sel.scheme in ("css", "pierce"):
            for m in _CSS_ATTR_RE.finditer(sel.body):
                value = next(g for g in m.groups()[2:] if g is not None)
                hints.setdefault(m.group(1).lower(), value)
            m_id = _CSS_ID_RE.search(sel.body)
            if m_id:
                hints.setdefault("id", m_id.group(1))
        elif sel.scheme == "xpath":
            for m in _XPATH_ATTR_RE.finditer(sel.body):
                value = m.group(3) if m.group(3) is not None else m.group(4)
                hints.setdefault(m.group(1).lower(), value)
    return hints


_TAG_TOKEN_RE = re.compile(r"^[A-Za-z][\w-]*")


def recorded_tag_hint(step: RecordedStep) -> str | None:
    """Tag of the step's target element, when a selector names one."""
    for sel in step.flat_selectors:
        if sel.scheme in ("css", "pierce", "xpath"):
            stripped = re.sub(r"\[[^\]]*\]", "", sel.body)
            last = re.split(r"[>\s/]+", stripped.strip())[-1]
            m = _TAG_TOKEN_RE.match(last)
            if m and last != "*":
                return m.group(0).lower()
    return None


def step_label(step: RecordedStep) -> str:
    """Best human-readable label for a recorded step's target element.

    Preference order: aria selector name, text selector body, then the
    highest-ranked attribute pair in ``[key="value"]`` form.
    """
    for sel in step.flat_selectors:
        if sel.scheme == "aria":
            name = aria_selector_name(sel.body)
            if name:
                return name
    for sel in step.flat_selectors:
        if sel.scheme == "text" and sel.body:
            return sel.body
    hints = recorded_attribute_hints(step)
    if hints:
        rank = {key: i for i, key in enumerate(DEFAULT_KEY_RANKING)}
        key = min(hints, key=lambda k: (rank.get(k, len(rank)), k))
        return f'[{key}="{hints[key]}"]'
    selectors = step.flat_selectors
    return selectors[0].raw if selectors else ""


# --- execution-trace JSON (external interface) ---

def trace_to_dict(trace: ExecutionTrace) -> dict:
    return {
        "taskId": trace.task_id,
        "steps": [
            {"goal": s.goal, "action": s.action, "attributes": dict(s.attributes)}
            for s in trace.steps
        ],
        "meta": dict(trace.meta),
    }


def trace_from_dict(data: dict) -> ExecutionTrace:
    try:
        steps = [
            StepFeature(
                goal=s["goal"],
                action=s["action"],
                attributes=s.get("attributes", {}),
            )
            for s in data["steps"]
        ]
        return ExecutionTrace(
            task_id=data["taskId"],
            steps=steps,
            meta=dict(data.get("meta", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"bad execution-trace JSON: {exc}") from exc


def dump_trace(trace: ExecutionTrace, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(trace_to_dict(trace), indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_trace(path: str | Path) -> ExecutionTrace:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON: {exc}") from exc
    return trace_from_dict(data)


def load_traces(paths: Sequence[str | Path]) -> list[ExecutionTrace]:
    return [load_trace(p) for p in paths]
