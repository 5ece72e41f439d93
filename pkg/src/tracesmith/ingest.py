"""Parse, re-emit, and filter Chrome-Recorder-style demonstration exports.

Filtering applies deterministic keyword heuristics for the step classes a
task-focused SOP should never contain: CAPTCHA interactions, popup-close
clicks, and clicks on non-interactable page chrome. Viewport setup is
dropped from SOP input but stays available in the parsed model.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import FormatError
from .model import DemoRecording, RecordedStep, Selector, StepKind, parse_selector


class MalformedRecording(FormatError):
    """Recording JSON is structurally invalid; message carries the JSON path."""


_KNOWN_STEP_FIELDS = {"type", "url", "value", "selectors", "offsetX", "offsetY", "assertedEvents"}

_CAPTCHA_TOKENS = ("captcha", "recaptcha", "hcaptcha")
_CLOSE_TOKENS = ("close", "dismiss")
_DIALOG_TOKENS = ('role="dialog"', "role='dialog'", "aria-modal")


def parse_recording(raw: bytes | str) -> DemoRecording:
    """Parse a recorder JSON export into a :class:`DemoRecording`.

    Unknown step types are preserved as ``other``; unmapped step fields are
    kept in ``extra`` so :func:`emit_recording` can round-trip them.
    """
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise MalformedRecording(f"$: not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedRecording("$: recording must be a JSON object")
    title = data.get("title", "")
    if not isinstance(title, str):
        raise MalformedRecording("$.title: must be a string")
    raw_steps = data.get("steps")
    if not isinstance(raw_steps, list):
        raise MalformedRecording("$.steps: missing or not a list")
    if not raw_steps:
        raise MalformedRecording("$.steps: must be non-empty")

    steps = []
    for i, obj in enumerate(raw_steps):
        steps.append(_parse_step(obj, path=f"$.steps[{i}]"))
    return DemoRecording(title=title, steps=steps)


def _parse_step(obj, path: str) -> RecordedStep:
    if not isinstance(obj, dict):
        raise MalformedRecording(f"{path}: step must be an object")
    raw_type = obj.get("type")
    if not isinstance(raw_type, str):
        raise MalformedRecording(f"{path}.type: missing or not a string")
    kind = StepKind.from_recorded(raw_type)

    url = obj.get("url")
    if url is not None and not isinstance(url, str):
        raise MalformedRecording(f"{path}.url: must be a string")
    if kind is StepKind.NAVIGATE and not url:
        raise MalformedRecording(f"{path}.url: navigate step requires a url")

    value = obj.get("value")
    if value is not None and not isinstance(value, str):
        raise MalformedRecording(f"{path}.value: must be a string")
    if kind is StepKind.CHANGE and value is None:
        raise MalformedRecording(f"{path}.value: change step requires a value")

    selectors: list[list[Selector]] = []
    raw_groups = obj.get("selectors", [])
    if not isinstance(raw_groups, list):
        raise MalformedRecording(f"{path}.selectors: must be a list")
    for gi, group in enumerate(raw_groups):
        if not isinstance(group, list):
            raise MalformedRecording(f"{path}.selectors[{gi}]: must be a list")
        parsed_group = []
        for si, sel in enumerate(group):
            if not isinstance(sel, str) or not sel:
                raise MalformedRecording(
                    f"{path}.selectors[{gi}][{si}]: must be a non-empty string"
                )
            parsed_group.append(parse_selector(sel))
        selectors.append(parsed_group)
    if kind in (StepKind.CLICK, StepKind.CHANGE) and not selectors:
        raise MalformedRecording(f"{path}.selectors: {kind.value} step requires selectors")

    offsets = None
    if "offsetX" in obj or "offsetY" in obj:
        try:
            offsets = (float(obj.get("offsetX", 0)), float(obj.get("offsetY", 0)))
        except (TypeError, ValueError):
            raise MalformedRecording(f"{path}.offsetX/offsetY: must be numbers") from None

    asserted = []
    for ei, event in enumerate(obj.get("assertedEvents", []) or []):
        if not isinstance(event, dict):
            raise MalformedRecording(f"{path}.assertedEvents[{ei}]: must be an object")
        if event.get("type") == "navigation":
            asserted.append((str(event.get("url", "")), str(event.get("title", ""))))

    extra = {k: v for k, v in obj.items() if k not in _KNOWN_STEP_FIELDS}
    return RecordedStep(
        kind=kind,
        raw_type=raw_type,
        url=url,
        value=value,
        selectors=selectors,
        offsets=offsets,
        asserted_navigations=asserted,
        extra=extra,
    )


def emit_recording(rec: DemoRecording) -> dict:
    """Recording back to recorder-format JSON (dict form)."""
    steps = []
    for step in rec.steps:
        obj: dict = {"type": step.raw_type}
        obj.update(step.extra)
        if step.url is not None:
            obj["url"] = step.url
        if step.value is not None:
            obj["value"] = step.value
        if step.selectors:
            obj["selectors"] = [[sel.raw for sel in group] for group in step.selectors]
        if step.offsets is not None:
            obj["offsetX"], obj["offsetY"] = step.offsets
        if step.asserted_navigations:
            obj["assertedEvents"] = [
                {"type": "navigation", "url": url, "title": title}
                for url, title in step.asserted_navigations
            ]
        steps.append(obj)
    return {"title": rec.title, "steps": steps}


def emit_recording_json(rec: DemoRecording, indent: int = 2) -> str:
    return json.dumps(emit_recording(rec), indent=indent)


@dataclass(slots=True)
class IngestReport:
    """Filtered recording plus the source indices that were dropped and why."""

    recording: DemoRecording
    dropped: list[tuple[int, str]]


def _step_haystacks(step: RecordedStep) -> list[str]:
    texts = [sel.raw for sel in step.flat_selectors]
    if step.url:
        texts.append(step.url)
    if step.value:
        texts.append(step.value)
    return [t.lower() for t in texts]


def _is_captcha(step: RecordedStep) -> bool:
    return any(tok in hay for hay in _step_haystacks(step) for tok in _CAPTCHA_TOKENS)


def _is_body_only_click(step: RecordedStep) -> bool:
    if step.kind is not StepKind.CLICK:
        return False
    css = [s for s in step.flat_selectors if s.scheme in ("css", "pierce")]
    others = [s for s in step.flat_selectors if s.scheme not in ("css", "pierce")]
    if not css or others:
        return False
    return all(s.body.strip().lower() in ("body", "html") for s in css)


_WORD_RE = re.compile(r"[a-z]+")


def _is_popup_close(step: RecordedStep) -> bool:
    if step.kind is not StepKind.CLICK:
        return False
    hays = _step_haystacks(step)
    for sel in step.flat_selectors:
        if sel.scheme == "aria" and sel.body.strip().lower() in _CLOSE_TOKENS:
            return True
    has_close = any(
        tok in _WORD_RE.findall(hay) for hay in hays for tok in _CLOSE_TOKENS
    )
    in_dialog = any(tok in hay for hay in hays for tok in _DIALOG_TOKENS)
    return has_close and in_dialog


def filter_irrelevant(rec: DemoRecording) -> IngestReport:
    """Drop task-irrelevant steps, keeping the rest in source order.

    Dropped reasons: ``captcha``, ``popupClose``, ``nonInteractable``,
    ``viewportOnly`` (viewport setup, kept in the parsed model but excluded
    from SOP input). Idempotent: filtering a filtered recording drops
    nothing new.
    """
    kept: list[RecordedStep] = []
    dropped: list[tuple[int, str]] = []
    for i, step in enumerate(rec.steps):
        if step.kind is StepKind.SET_VIEWPORT:
            dropped.append((i, "viewportOnly"))
        elif _is_captcha(step):
            dropped.append((i, "captcha"))
        elif _is_popup_close(step):
            dropped.append((i, "popupClose"))
        elif _is_body_only_click(step):
            dropped.append((i, "nonInteractable"))
        else:
            kept.append(step)
    return IngestReport(recording=DemoRecording(title=rec.title, steps=kept), dropped=dropped)


def report_to_dict(report: IngestReport) -> dict:
    return {
        "recording": emit_recording(report.recording),
        "dropped": [{"stepIndex": i, "reason": r} for i, r in report.dropped],
    }


def load_recording(path: str | Path) -> DemoRecording:
    return parse_recording(Path(path).read_bytes())
