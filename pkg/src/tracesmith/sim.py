"""Fixture-site simulator: executes SOP instances against DOM snapshots.

A fixture site is a set of page snapshots plus an explicit transition table
(page, element match, action) -> next page, standing in for a live browser.
Running an instance yields an execution trace whose goals are the SOP step
texts; the simulator also produces perturbed trace variants and labeled
similar/dissimilar suites for consistency testing.
"""
from __future__ import annotations

import json
import math
import random
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .dom import Element, Snapshot, UnsupportedSelector, load_snapshot, rank_by_overlap, resolve_selector
from .errors import FormatError, SimulationError
from .model import (
    ACTION_VOCABULARY,
    ExecutionTrace,
    Selector,
    StepFeature,
    parse_selector,
    trace_to_dict,
)
from .signer import SignatureConfig, StabilityPolicy, candidate_attributes


class ElementUnresolvable(SimulationError):
    def __init__(self, step_index: int, detail: str):
        super().__init__(f"step {step_index}: cannot resolve target element ({detail})")
        self.step_index = step_index


class NoTransition(SimulationError):
    def __init__(self, step_index: int, detail: str):
        super().__init__(f"step {step_index}: no transition matches ({detail})")
        self.step_index = step_index


class BadNavigation(SimulationError):
    def __init__(self, url: str):
        super().__init__(f"no page declares data-url {url!r}")
        self.url = url


class TraceTooShort(SimulationError):
    """Positional perturbations need at least two steps."""


class InapplicablePerturbation(SimulationError):
    """The trace has no position where this perturbation kind applies."""


@dataclass(frozen=True, slots=True)
class MatchRule:
    """Transition matcher: attribute pairs the element must carry, or a
    recorded selector that must resolve to it."""

    attrs: Mapping[str, str] | None = None
    selector: Selector | None = None

    def matches(self, snap: Snapshot, elem: Element) -> bool:
        if self.attrs is not None:
            return all(elem.attributes.get(k) == v for k, v in self.attrs.items())
        try:
            return elem in resolve_selector(snap, self.selector)
        except UnsupportedSelector:
            return False


@dataclass(frozen=True, slots=True)
class Transition:
    page: str
    match: MatchRule
    action: str
    next_page: str
    value: str | None = None


@dataclass(slots=True)
class FixtureSite:
    pages: dict[str, Path]
    initial: str
    transitions: list[Transition]
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self) -> None:
        if self.initial not in self.pages:
            raise FormatError(f"initial page {self.initial!r} not in pages")
        for t in self.transitions:
            if t.page not in self.pages or t.next_page not in self.pages:
                raise FormatError(f"transition references unknown page: {t}")


def load_site(path: str | Path) -> FixtureSite:
    """Read a site.json; page paths resolve relative to the file."""
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
        pages = {pid: path.parent / rel for pid, rel in data["pages"].items()}
        transitions = []
        for row in data["transitions"]:
            match_spec = row["match"]
            if "attrs" in match_spec:
                match = MatchRule(attrs=dict(match_spec["attrs"]))
            elif "selector" in match_spec:
                match = MatchRule(selector=parse_selector(match_spec["selector"]))
            else:
                raise FormatError(f"transition match needs attrs or selector: {row}")
            transitions.append(
                Transition(
                    page=row["page"],
                    match=match,
                    action=row["action"],
                    next_page=row["next"],
                    value=row.get("value"),
                )
            )
        return FixtureSite(
            pages=pages,
            initial=data["initial"],
            transitions=transitions,
            base_dir=path.parent,
        )
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: bad site file: {exc}") from exc


_NAVIGATE_RE = re.compile(r"^Navigate to (\S+)")
_TYPE_RE = re.compile(r"^Enter '(.*)' into '(.*)'$", re.DOTALL)
_CLICK_RE = re.compile(r"^Click on the element '(.*)'$", re.DOTALL)
_QUOTED_RE = re.compile(r"[\"']([^\"']+)[\"']")
_VERB_HINTS = {
    "navigate": "navigate",
    "click": "click",
    "enter": "type",
    "type": "type",
    "select": "select",
    "scroll": "scroll",
    "extract": "extract",
}

_SELECT_LIKE_TAGS = frozenset({"select"})
_SELECT_LIKE_ROLES = frozenset({"combobox", "listbox"})


@dataclass(frozen=True, slots=True)
class _StepIntent:
    verb: str
    label: str | None = None
    value: str | None = None
    url: str | None = None


def _parse_step_text(text: str) -> _StepIntent:
    """Interpret one SOP step line. Fallback-SOP grammar is recognized
    exactly; anything else gets a first-word verb plus first quoted label."""
    m = _NAVIGATE_RE.match(text)
    if m:
        return _StepIntent(verb="navigate", url=m.group(1))
    m = _TYPE_RE.match(text)
    if m:
        return _StepIntent(verb="type", value=m.group(1), label=m.group(2))
    m = _CLICK_RE.match(text)
    if m:
        return _StepIntent(verb="click", label=m.group(1))
    first = text.split()[0].lower() if text.split() else ""
    verb = _VERB_HINTS.get(first.rstrip(".,:"), "click")
    quoted = _QUOTED_RE.search(text)
    return _StepIntent(verb=verb, label=quoted.group(1) if quoted else None)


def _page_url(snap: Snapshot) -> str | None:
    return snap.root.attributes.get("data-url")


def _resolve_label(snap: Snapshot, label: str) -> list[Element]:
    if label.startswith("["):
        try:
            return resolve_selector(snap, Selector("css", label))
        except UnsupportedSelector:
            return []
    found = resolve_selector(snap, Selector("aria", label))
    if found:
        return found
    return resolve_selector(snap, Selector("text", label))


def _feature_attributes(elem: Element, policy: StabilityPolicy) -> dict[str, str]:
    # The signature-relevant view of an element: top two surviving
    # attributes in ranking order.
    return dict(candidate_attributes(elem, policy)[:2])


def run(
    sop,
    site: FixtureSite,
    config: SignatureConfig | None = None,
    *,
    task_id: str | None = None,
) -> ExecutionTrace:
    """Execute a strict-instantiated SOP instance against a fixture site.

    Per step, the target element is resolved with the signature config
    first, then the label embedded in the step text, then attribute-overlap
    ranking (accepted at >= 0.5); the transition table then advances the
    page. Deterministic: equal inputs produce byte-equal traces.
    """
    policy = StabilityPolicy()
    snapshots: dict[str, Snapshot] = {}

    def page(page_id: str) -> Snapshot:
        if page_id not in snapshots:
            snapshots[page_id] = load_snapshot(site.pages[page_id])
        return snapshots[page_id]

    current = site.initial
    features: list[StepFeature] = []
    for index, text in enumerate(sop.steps, start=1):
        intent = _parse_step_text(text)
        if intent.verb == "navigate":
            target_page = next(
                (pid for pid in site.pages if _page_url(page(pid)) == intent.url), None
            )
            if target_page is None:
                raise BadNavigation(intent.url or "")
            current = target_page
            features.append(StepFeature(goal=text, action="navigate", attributes={}))
            continue

        snap = page(current)
        elem: Element | None = None
        used_signature = None
        if config is not None and index in config.entries:
            sig = config.entries[index]
            matches = [
                e
                for e in snap.elements
                if (sig.tag is None or e.tag == sig.tag)
                and all(e.attributes.get(k) == v for k, v in sig.attrs.items())
            ]
            if len(matches) == 1:
                elem = matches[0]
                used_signature = sig
        if elem is None and intent.label:
            found = _resolve_label(snap, intent.label)
            if len(found) == 1:
                elem = found[0]
        if elem is None and intent.label:
            ranked = rank_by_overlap(snap, {"aria-label": intent.label})
            if ranked and ranked[0][1] >= 0.5:
                elem = ranked[0][0]
        if elem is None:
            raise ElementUnresolvable(index, f"label {intent.label!r} on page {current!r}")

        verb = intent.verb
        if verb == "click" and (
            elem.tag in _SELECT_LIKE_TAGS
            or elem.attributes.get("role") in _SELECT_LIKE_ROLES
        ):
            verb = "select"

        transition = next(
            (
                t
                for t in site.transitions
                if t.page == current
                and t.action == verb
                and (t.value is None or t.value == intent.value)
                and t.match.matches(snap, elem)
            ),
            None,
        )
        if transition is None:
            raise NoTransition(index, f"page {current!r}, action {verb!r}, element <{elem.tag}>")

        attributes = (
            dict(used_signature.attrs)
            if used_signature is not None
            else _feature_attributes(elem, policy)
        )
        features.append(StepFeature(goal=text, action=verb, attributes=attributes))
        current = transition.next_page

    return ExecutionTrace(
        task_id=task_id or "task",
        steps=features,
        meta={"finalPage": current, "sopSteps": str(len(sop.steps))},
    )


# --- perturbations ---

NON_CRITICAL_KINDS = ("insert_scroll", "duplicate_click", "merge_click_type")
CRITICAL_KINDS = ("drop_step", "change_action", "change_goal", "mutate_attrs")

_FILLER_WORDS = (
    "umbra quartz nimbus fjord zephyr krypton obelisk tundra vortex saffron "
    "basalt cobalt onyx juniper mesa talon cinder harbor plume crag"
).split()


@dataclass(frozen=True, slots=True)
class PerturbationSpec:
    kind: str
    position: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in NON_CRITICAL_KINDS + CRITICAL_KINDS:
            raise ValueError(f"unknown perturbation kind {self.kind!r}")

    @property
    def critical(self) -> bool:
        return self.kind in CRITICAL_KINDS


def functional_core(trace: ExecutionTrace) -> tuple:
    """Structure preserved by non-critical perturbations: the non-scroll
    step sequence with consecutive duplicates collapsed and clicks that
    immediately precede a same-target type absorbed into it."""
    items = [
        (s.goal, s.action, tuple(sorted(s.attributes.items())))
        for s in trace.steps
        if s.action != "scroll"
    ]
    no_dups = [item for i, item in enumerate(items) if i == 0 or item != items[i - 1]]
    core = []
    for i, item in enumerate(no_dups):
        nxt = no_dups[i + 1] if i + 1 < len(no_dups) else None
        if (
            item[1] == "click"
            and nxt is not None
            and nxt[1] == "type"
            and nxt[2] == item[2]
        ):
            continue  # absorbed by the same-target type that follows
        core.append(item)
    return tuple(core)


def _mergeable_positions(trace: ExecutionTrace) -> list[int]:
    return [
        i
        for i in range(len(trace.steps) - 1)
        if trace.steps[i].action == "click"
        and trace.steps[i + 1].action == "type"
        and trace.steps[i].attributes == trace.steps[i + 1].attributes
    ]


def _core_positions(trace: ExecutionTrace) -> list[int]:
    """Positions whose mutation is guaranteed to change the functional core."""
    absorbed = set(_mergeable_positions(trace))
    return [
        i
        for i, s in enumerate(trace.steps)
        if s.action != "scroll" and i not in absorbed
    ]


def applicable_kinds(trace: ExecutionTrace) -> list[str]:
    kinds = ["insert_scroll", "change_goal", "change_action"]
    if any(s.action == "click" for s in trace.steps):
        kinds.append("duplicate_click")
    if _mergeable_positions(trace):
        kinds.append("merge_click_type")
    if len(trace.steps) > 2:
        kinds.append("drop_step")
    if any(s.attributes for s in trace.steps):
        kinds.append("mutate_attrs")
    return [k for k in NON_CRITICAL_KINDS + CRITICAL_KINDS if k in kinds]


def perturb(trace: ExecutionTrace, spec: PerturbationSpec) -> ExecutionTrace:
    """Apply exactly one mutation; deterministic for a given spec.

    Critical kinds pick among positions that affect the functional core, so
    the structural similar/dissimilar distinction stays checkable without
    any embedder.
    """
    if len(trace.steps) < 2:
        raise TraceTooShort(f"need >= 2 steps, trace has {len(trace.steps)}")
    rng = random.Random(spec.seed)
    steps = list(trace.steps)

    def pick(positions: Sequence[int]) -> int:
        if not positions:
            raise InapplicablePerturbation(
                f"{spec.kind} has no applicable position in this trace"
            )
        if spec.position is not None:
            if spec.position not in positions:
                raise InapplicablePerturbation(
                    f"{spec.kind} not applicable at position {spec.position}"
                )
            return spec.position
        return positions[rng.randrange(len(positions))]

    if spec.kind == "insert_scroll":
        pos = pick(range(len(steps)))
        steps.insert(pos, StepFeature(goal=steps[pos].goal, action="scroll", attributes={}))
    elif spec.kind == "duplicate_click":
        clicks = [i for i, s in enumerate(steps) if s.action == "click"]
        pos = pick(clicks or range(len(steps)))
        steps.insert(pos + 1, steps[pos])
    elif spec.kind == "merge_click_type":
        pos = pick(_mergeable_positions(trace))
        merged = StepFeature(
            goal=steps[pos + 1].goal,
            action="type",
            attributes=dict(steps[pos].attributes),
        )
        steps[pos : pos + 2] = [merged]
    elif spec.kind == "drop_step":
        pos = pick(_core_positions(trace))
        del steps[pos]
    elif spec.kind == "change_action":
        pos = pick(_core_positions(trace))
        old = steps[pos]
        # Non-scroll verbs only, so the mutated step stays in the core.
        choices = [v for v in ACTION_VOCABULARY if v not in (old.action, "scroll")]
        steps[pos] = StepFeature(
            goal=old.goal,
            action=choices[rng.randrange(len(choices))],
            attributes=old.attributes,
        )
    elif spec.kind == "change_goal":
        pos = pick(_core_positions(trace))
        old = steps[pos]
        words = [
            _FILLER_WORDS[rng.randrange(len(_FILLER_WORDS))]
            for _ in range(rng.randint(3, 6))
        ]
        steps[pos] = StepFeature(
            goal=" ".join(words), action=old.action, attributes=old.attributes
        )
    elif spec.kind == "mutate_attrs":
        attr_positions = [
            i for i in _core_positions(trace) if trace.steps[i].attributes
        ]
        pos = pick(attr_positions)
        old = steps[pos]
        mutated = {
            k: f"{_FILLER_WORDS[rng.randrange(len(_FILLER_WORDS))]}{rng.randrange(1000)}"
            for k in old.attributes
        }
        steps[pos] = StepFeature(goal=old.goal, action=old.action, attributes=mutated)

    meta = dict(trace.meta)
    meta["perturbation"] = spec.kind
    meta["perturbationSeed"] = str(spec.seed)
    return ExecutionTrace(task_id=trace.task_id, steps=steps, meta=meta)


# --- labeled suite generation ---

def _similar_variant(trace: ExecutionTrace, rng: random.Random) -> ExecutionTrace:
    out = trace
    for _ in range(rng.randint(1, 2)):
        kinds = [k for k in NON_CRITICAL_KINDS if k in applicable_kinds(out)]
        kind = kinds[rng.randrange(len(kinds))]
        out = perturb(out, PerturbationSpec(kind=kind, seed=rng.randrange(2**31)))
    return out


def _dissimilar_variant(trace: ExecutionTrace, rng: random.Random) -> ExecutionTrace:
    # A dissimilar execution is a substantively different behavior pattern:
    # a divergent sub-path. Around 60% of positions get fully replaced
    # (goal, attributes, and action), sometimes plus a dropped step.
    out = trace
    core = _core_positions(out)
    k = max(2, math.ceil(len(core) * 0.6))
    positions = sorted(rng.sample(core, min(k, len(core))))
    for pos in positions:
        out = perturb(out, PerturbationSpec("change_goal", position=pos, seed=rng.randrange(2**31)))
        if out.steps[pos].attributes:
            out = perturb(out, PerturbationSpec("mutate_attrs", position=pos, seed=rng.randrange(2**31)))
        out = perturb(out, PerturbationSpec("change_action", position=pos, seed=rng.randrange(2**31)))
    if rng.random() < 0.5 and len(out.steps) > 4:
        out = perturb(out, PerturbationSpec("drop_step", seed=rng.randrange(2**31)))
    meta = dict(out.meta)
    meta["perturbation"] = "divergent_subpath"
    meta["perturbedPositions"] = ",".join(str(p) for p in positions)
    return ExecutionTrace(task_id=out.task_id, steps=list(out.steps), meta=meta)


def generate_suite(
    base: Sequence[ExecutionTrace],
    n_per_trace: int,
    seed: int,
    out_dir: str | Path,
    pairs_name: str = "pairs.jsonl",
) -> Path:
    """Write a labeled pair suite: for each base trace, ``n_per_trace``
    non-critical variants paired as similar and the same number of
    divergent variants paired as dissimilar. Deterministic by seed."""
    if not base:
        raise ValueError("base trace set is empty")
    out_dir = Path(out_dir)
    traces_dir = out_dir / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(seed)
    rows = []

    def write_trace(trace: ExecutionTrace, name: str) -> str:
        path = traces_dir / name
        path.write_text(
            json.dumps(trace_to_dict(trace), indent=2, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return f"traces/{name}"

    for t_idx, trace in enumerate(base):
        base_rel = write_trace(trace, f"base_{t_idx:02d}.json")
        for v_idx in range(n_per_trace):
            sim = _similar_variant(trace, rng)
            rel = write_trace(sim, f"base_{t_idx:02d}_sim_{v_idx:02d}.json")
            rows.append({"a": base_rel, "b": rel, "label": "similar"})
            dis = _dissimilar_variant(trace, rng)
            rel = write_trace(dis, f"base_{t_idx:02d}_dis_{v_idx:02d}.json")
            rows.append({"a": base_rel, "b": rel, "label": "dissimilar"})

    pairs_path = out_dir / pairs_name
    pairs_path.write_text(
        "".join(json.dumps(row, sort_keys=True) + "\n" for row in rows),
        encoding="utf-8",
    )
    return pairs_path
