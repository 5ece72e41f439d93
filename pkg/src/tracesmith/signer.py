"""Critical-element signing: presence verification, minimal stable key-value
signature assignment, and configuration persistence.

Raw recorded selectors break when a site regenerates ids and framework
class hashes between sessions, so each interactive step is reduced to the
smallest set of stable attribute pairs that still uniquely identifies its
element on the step's snapshot. Uniqueness is always re-checked against the
snapshot — including for provider-proposed signatures — before anything is
persisted.
"""
from __future__ import annotations

import json
import logging
import os
import re
import tempfile
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Mapping

from .dom import Snapshot, UnsupportedSelector, count_matches, rank_by_overlap, resolve_selector
from .errors import TracesmithError
from .model import (
    DEFAULT_KEY_RANKING,
    DemoRecording,
    RecordedStep,
    recorded_attribute_hints,
    recorded_tag_hint,
)

logger = logging.getLogger(__name__)


class ElementNotFound(TracesmithError):
    """No recorded selector, provider match, or overlap candidate worked."""


class NotUnique(TracesmithError):
    """No attribute subset within policy bounds uniquely identifies the element."""


class ConfigWriteFailed(TracesmithError):
    """The signature configuration could not be persisted."""


# Values matching these look machine-generated: long hex runs and
# framework hash tokens like the styled-components "sc-bBjSGg" class.
DEFAULT_DYNAMIC_VALUE_PATTERNS = (
    r"[0-9a-fA-F]{8,}",
    r"\b[a-z]{2}-[A-Za-z0-9]{6,}\b",
)


@dataclass(frozen=True)
class StabilityPolicy:
    """What counts as a stable attribute and how hard to search."""

    key_ranking: tuple[str, ...] = DEFAULT_KEY_RANKING
    volatile_keys: frozenset[str] = frozenset({"class", "style"})
    dynamic_value_patterns: tuple[str, ...] = DEFAULT_DYNAMIC_VALUE_PATTERNS
    redundancy: int = 2
    max_subset: int = 4
    max_provider_retries: int = 3

    def __post_init__(self) -> None:
        if self.redundancy > self.max_subset:
            raise ValueError("redundancy must not exceed max_subset")

    @classmethod
    def from_file(cls, path: str | Path) -> "StabilityPolicy":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            key_ranking=tuple(data.get("keyRanking", DEFAULT_KEY_RANKING)),
            volatile_keys=frozenset(data.get("volatileKeys", ("class", "style"))),
            dynamic_value_patterns=tuple(
                data.get("dynamicValuePatterns", DEFAULT_DYNAMIC_VALUE_PATTERNS)
            ),
            redundancy=int(data.get("redundancy", 2)),
            max_subset=int(data.get("maxSubset", 4)),
            max_provider_retries=int(data.get("maxProviderRetries", 3)),
        )


@dataclass(frozen=True, slots=True)
class ElementSignature:
    """Minimal stable attribute pairs uniquely identifying one element."""

    attrs: Mapping[str, str]
    tag: str | None
    step_index: int
    provenance: str = "deterministic"

    def __post_init__(self) -> None:
        object.__setattr__(self, "attrs", dict(self.attrs))
        if not self.attrs:
            raise ValueError("a signature needs at least one attribute pair")
        if self.provenance not in ("deterministic", "provider"):
            raise ValueError(f"bad provenance {self.provenance!r}")


@dataclass(slots=True)
class SignatureConfig:
    task_id: str
    entries: dict[int, ElementSignature]
    version: int = 1


def candidate_attributes(elem, policy: StabilityPolicy) -> list[tuple[str, str]]:
    """Element attributes that survive the stability policy, ordered by key
    ranking (unranked keys follow, bytewise-sorted)."""
    patterns = [re.compile(p) for p in policy.dynamic_value_patterns]
    survivors = {
        k: v
        for k, v in elem.attributes.items()
        if k not in policy.volatile_keys
        and not any(p.search(v) for p in patterns)
    }
    rank = {key: i for i, key in enumerate(policy.key_ranking)}
    ordered = sorted(survivors, key=lambda k: (rank.get(k, len(rank)), k))
    return [(k, survivors[k]) for k in ordered]


def verify_presence(
    snap: Snapshot,
    step: RecordedStep,
    policy: StabilityPolicy | None = None,
    provider=None,
):
    """Locate the element a recorded step interacted with on *snap*.

    Tries the recorded selectors in recorded order and returns the first
    that resolves to exactly one element. Falls back to provider semantic
    matching, then to attribute-overlap ranking (accepted at score >= 0.5).
    """
    policy = policy or StabilityPolicy()
    if not step.flat_selectors:
        raise ElementNotFound("step carries no selectors")
    for sel in step.flat_selectors:
        try:
            found = resolve_selector(snap, sel)
        except UnsupportedSelector:
            continue
        if len(found) == 1:
            return found[0]

    recorded_attrs = recorded_attribute_hints(step)
    if provider is not None:
        elem = _provider_semantic_match(snap, recorded_attrs, provider)
        if elem is not None:
            return elem

    if recorded_attrs:
        ranked = rank_by_overlap(snap, recorded_attrs, tag=recorded_tag_hint(step))
        if ranked and ranked[0][1] >= 0.5:
            return ranked[0][0]
    raise ElementNotFound(
        f"no selector matched uniquely and no fallback candidate scored >= 0.5 "
        f"(selectors: {[s.raw for s in step.flat_selectors]})"
    )


def _serialize_for_provider(snap: Snapshot, limit: int = 200) -> str:
    lines = []
    for elem in snap.elements[:limit]:
        attrs = " ".join(f'{k}="{v}"' for k, v in sorted(elem.attributes.items()))
        lines.append(f"<{elem.tag}{' ' + attrs if attrs else ''}>")
    return "\n".join(lines)


def _provider_semantic_match(snap: Snapshot, recorded_attrs: Mapping[str, str], provider):
    prompt = (
        "Find the element on the page that best matches the recorded element.\n"
        f"Recorded attributes: {json.dumps(dict(recorded_attrs), sort_keys=True)}\n"
        "Page elements:\n"
        f"{_serialize_for_provider(snap)}\n"
        'Reply with JSON only: {"tag": str, "attrs": {key: value}} for the match.'
    )
    try:
        reply = provider.complete(prompt)
        data = json.loads(_extract_json(reply))
        attrs = {str(k).lower(): str(v) for k, v in data.get("attrs", {}).items()}
        tag = data.get("tag")
    except (TracesmithError, ValueError, KeyError, AttributeError) as exc:
        logger.warning("provider semantic match failed: %s", exc)
        return None
    if not attrs:
        return None
    count, first = count_matches(snap, attrs, tag=tag)
    return first if count == 1 else None


def _extract_json(text: str) -> str:
    start = text.find("{")
    end = text.rfind("}")
    if start == -1 or end <= start:
        raise ValueError(f"no JSON object in provider reply: {text[:80]!r}")
    return text[start : end + 1]


def assign_signature(
    snap: Snapshot,
    elem,
    policy: StabilityPolicy | None = None,
    provider=None,
    step_index: int = 0,
) -> ElementSignature:
    """Find the smallest stable attribute subset unique on *snap*.

    Subsets are searched in increasing size and, within a size, in key-
    ranking order; the first unique subset is padded with the next-ranked
    surviving attributes up to the policy's redundancy (supersets of a
    unique set stay unique). When nothing within ``max_subset`` works the
    provider may propose pairs, which are re-verified with the same
    uniqueness gate before acceptance.
    """
    policy = policy or StabilityPolicy()
    candidates = candidate_attributes(elem, policy)
    for size in range(1, min(policy.max_subset, len(candidates)) + 1):
        for combo in combinations(candidates, size):
            attrs = dict(combo)
            count, _ = count_matches(snap, attrs)
            if count == 1:
                for extra in candidates:
                    if len(attrs) >= policy.redundancy:
                        break
                    attrs.setdefault(extra[0], extra[1])
                return ElementSignature(
                    attrs=attrs, tag=elem.tag, step_index=step_index
                )

    if provider is not None:
        proposal = _provider_signature(snap, elem, policy, provider, step_index)
        if proposal is not None:
            return proposal
    raise NotUnique(
        f"no unique attribute subset of size <= {policy.max_subset} for "
        f"<{elem.tag}> with candidates {[k for k, _ in candidates]}"
    )


def _provider_signature(snap, elem, policy, provider, step_index):
    feedback = ""
    for attempt in range(policy.max_provider_retries):
        prompt = (
            "Propose stable attribute key-value pairs that uniquely identify "
            "this element on the page.\n"
            f"Element: tag={elem.tag} attributes={json.dumps(elem.attributes, sort_keys=True)}\n"
            "Page elements:\n"
            f"{_serialize_for_provider(snap)}\n"
            f"{feedback}"
            f'Reply with JSON only: an object of at most {policy.max_subset} pairs.'
        )
        try:
            reply = provider.complete(prompt)
            attrs = {
                str(k).lower(): str(v)
                for k, v in json.loads(_extract_json(reply)).items()
            }
        except (TracesmithError, ValueError, AttributeError) as exc:
            logger.warning("provider signature attempt %d failed: %s", attempt + 1, exc)
            continue
        if not attrs or len(attrs) > policy.max_subset:
            feedback = f"Previous proposal had a bad size ({len(attrs)} pairs). "
            continue
        if any(elem.attributes.get(k) != v for k, v in attrs.items()):
            feedback = "Previous proposal used pairs the element does not carry. "
            continue
        count, _ = count_matches(snap, attrs)
        if count == 1:
            return ElementSignature(
                attrs=attrs, tag=elem.tag, step_index=step_index, provenance="provider"
            )
        feedback = f"Previous proposal matched {count} elements, need exactly 1. "
    return None


@dataclass(slots=True)
class SigningDiagnostic:
    step_index: int
    reason: str


def build_config(
    rec: DemoRecording,
    snapshots: Mapping[int, Snapshot],
    policy: StabilityPolicy | None = None,
    provider=None,
    *,
    task_id: str | None = None,
    version: int = 1,
) -> tuple[SignatureConfig, list[SigningDiagnostic]]:
    """Sign every interactive step of a (filtered) recording.

    ``snapshots`` is keyed by the step's position in the derived SOP (the
    navigation line is step 1, each interactive step follows in order).
    Steps that end unresolvable or not-unique become diagnostics; the
    config is still built for the rest.
    """
    from .sop import sop_step_plan  # local import to keep module layering simple

    policy = policy or StabilityPolicy()
    entries: dict[int, ElementSignature] = {}
    diagnostics: list[SigningDiagnostic] = []
    for planned in sop_step_plan(rec):
        if planned.step is None or not planned.step.is_interactive:
            continue
        snap = snapshots.get(planned.sop_index)
        if snap is None:
            diagnostics.append(
                SigningDiagnostic(planned.sop_index, "no snapshot supplied")
            )
            continue
        try:
            elem = verify_presence(snap, planned.step, policy, provider)
            entries[planned.sop_index] = assign_signature(
                snap, elem, policy, provider, step_index=planned.sop_index
            )
        except (ElementNotFound, NotUnique) as exc:
            diagnostics.append(SigningDiagnostic(planned.sop_index, str(exc)))
    config = SignatureConfig(
        task_id=task_id or _slug(rec.title) or "task",
        entries=entries,
        version=version,
    )
    return config, diagnostics


def _slug(text: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", text.lower()).strip("-")


def config_to_dict(config: SignatureConfig) -> dict:
    return {
        "taskId": config.task_id,
        "version": config.version,
        "entries": {
            str(idx): {
                "tag": sig.tag,
                "attrs": dict(sig.attrs),
                "provenance": sig.provenance,
            }
            for idx, sig in sorted(config.entries.items())
        },
    }


def config_from_dict(data: dict) -> SignatureConfig:
    entries = {
        int(idx): ElementSignature(
            attrs=entry["attrs"],
            tag=entry.get("tag"),
            step_index=int(idx),
            provenance=entry.get("provenance", "deterministic"),
        )
        for idx, entry in data["entries"].items()
    }
    return SignatureConfig(
        task_id=data["taskId"], entries=entries, version=int(data.get("version", 1))
    )


def save_config(config: SignatureConfig, path: str | Path) -> None:
    """Write signatures.json atomically (write-temp-then-rename)."""
    path = Path(path)
    payload = json.dumps(config_to_dict(config), indent=2, sort_keys=True) + "\n"
    try:
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".signatures-")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except OSError as exc:
        raise ConfigWriteFailed(f"cannot write {path}: {exc}") from exc


def load_config(path: str | Path) -> SignatureConfig:
    return config_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
