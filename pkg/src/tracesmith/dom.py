"""HTML snapshot parsing and element queries.

The selector engines implement the documented subsets only:

* CSS: tag, ``#id``, ``.class``, ``[attr=value]``, descendant and child
  combinators, and compounds of those.
* XPath: absolute paths, ``//`` descendant steps, ``*`` or tag node tests,
  ``[@attr="value"]`` and positional ``[n]`` predicates.
* aria: accessible-name match (aria-label, else title, else owned text)
  with an optional trailing ``[role="..."]`` filter.
* text: owned text equality after whitespace collapse.
* pierce: CSS over the flattened tree (shadow content is stored inline).

Anything outside a subset raises :class:`UnsupportedSelector`, which callers
treat as a non-match rather than a failure.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from html.parser import HTMLParser
from pathlib import Path
from typing import Iterator, Mapping

from .errors import FormatError, TracesmithError
from .model import Selector


class UnparsableSnapshot(FormatError):
    """No root element could be recovered from the snapshot bytes."""


class UnsupportedSelector(TracesmithError):
    """Selector syntax falls outside the supported subset."""


@dataclass(eq=False, slots=True)
class Element:
    """One element node: lowercase tag, lowercase-keyed attributes, owned
    text, ordered children."""

    tag: str
    attributes: dict[str, str] = field(default_factory=dict)
    text: str = ""
    children: list["Element"] = field(default_factory=list)
    parent: "Element | None" = field(default=None, repr=False)

    def iter_subtree(self) -> Iterator["Element"]:
        yield self
        for child in self.children:
            yield from child.iter_subtree()

    def ancestors(self) -> Iterator["Element"]:
        node = self.parent
        while node is not None:
            yield node
            node = node.parent

    def classes(self) -> list[str]:
        return self.attributes.get("class", "").split()


@dataclass(slots=True)
class Snapshot:
    """An immutable parsed page: single root plus document-order index."""

    root: Element
    source_path: str = ""
    _order: list[Element] = field(default_factory=list, repr=False)

    def __post_init__(self) -> None:
        if not self._order:
            self._order = list(self.root.iter_subtree())

    @property
    def elements(self) -> list[Element]:
        return self._order

    def __len__(self) -> int:
        return len(self._order)


_VOID_TAGS = frozenset(
    "area base br col embed hr img input link meta param source track wbr".split()
)


class _TreeBuilder(HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.top_level: list[Element] = []
        self.stack: list[Element] = []

    def _attach(self, elem: Element) -> None:
        if self.stack:
            elem.parent = self.stack[-1]
            self.stack[-1].children.append(elem)
        else:
            self.top_level.append(elem)

    def handle_starttag(self, tag: str, attrs) -> None:
        attributes: dict[str, str] = {}
        for key, value in attrs:
            attributes.setdefault(key.lower(), value if value is not None else "")
        elem = Element(tag=tag.lower(), attributes=attributes)
        self._attach(elem)
        if tag.lower() not in _VOID_TAGS:
            self.stack.append(elem)

    def handle_startendtag(self, tag: str, attrs) -> None:
        self.handle_starttag(tag, attrs)
        if tag.lower() not in _VOID_TAGS and self.stack and self.stack[-1].tag == tag.lower():
            self.stack.pop()

    def handle_endtag(self, tag: str) -> None:
        tag = tag.lower()
        for i in range(len(self.stack) - 1, -1, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return
        # Stray end tag: tolerated.

    def handle_data(self, data: str) -> None:
        if self.stack and data:
            self.stack[-1].text += data


def parse_snapshot(html: bytes | str, source_path: str = "") -> Snapshot:
    """Leniently parse HTML bytes into a snapshot.

    Unclosed tags are closed at EOF; stray end tags are ignored; multiple
    top-level elements are wrapped in a synthetic ``html`` root.
    """
    if isinstance(html, bytes):
        html = html.decode("utf-8", errors="replace")
    builder = _TreeBuilder()
    builder.feed(html)
    builder.close()
    roots = builder.top_level
    if not roots:
        raise UnparsableSnapshot(f"{source_path or '<bytes>'}: no root element recovered")
    if len(roots) == 1:
        root = roots[0]
    else:
        root = Element(tag="html")
        for child in roots:
            child.parent = root
        root.children = roots
    return Snapshot(root=root, source_path=source_path)


def load_snapshot(path: str | Path) -> Snapshot:
    return parse_snapshot(Path(path).read_bytes(), source_path=str(path))


def count_matches(
    snap: Snapshot, attrs: Mapping[str, str], tag: str | None = None
) -> tuple[int, Element | None]:
    """Count elements whose attributes contain every given pair exactly
    (and whose tag matches, when given); also return the first match in
    document order."""
    if not attrs and tag is None:
        raise ValueError("need at least one attribute pair or a tag")
    count = 0
    first: Element | None = None
    for elem in snap.elements:
        if tag is not None and elem.tag != tag:
            continue
        ea = elem.attributes
        if all(ea.get(k) == v for k, v in attrs.items()):
            count += 1
            if first is None:
                first = elem
    return count, first


# --- CSS subset ---

_IDENT = r"[A-Za-z_][\w-]*|[\w-]+"
_CSS_PART_RE = re.compile(
    rf"(?P<tag>{_IDENT})"
    rf"|\#(?P<id>{_IDENT})"
    rf"|\.(?P<cls>{_IDENT})"
    rf"|\[(?P<attr>[\w-]+)=(?P<val>\"[^\"]*\"|'[^']*'|[^\]]*)\]"
)


@dataclass(frozen=True, slots=True)
class _Compound:
    tag: str | None
    elem_id: str | None
    classes: tuple[str, ...]
    attrs: tuple[tuple[str, str], ...]

    def matches(self, elem: Element) -> bool:
        if self.tag is not None and elem.tag != self.tag:
            return False
        if self.elem_id is not None and elem.attributes.get("id") != self.elem_id:
            return False
        if self.classes and not set(self.classes).issubset(elem.classes()):
            return False
        return all(elem.attributes.get(k) == v for k, v in self.attrs)


def _parse_compound(token: str) -> _Compound:
    tag = elem_id = None
    classes: list[str] = []
    attrs: list[tuple[str, str]] = []
    pos = 0
    first = True
    while pos < len(token):
        m = _CSS_PART_RE.match(token, pos)
        if m is None or (m.lastgroup == "tag" and not first):
            raise UnsupportedSelector(f"unsupported CSS at {token[pos:]!r}")
        if m.lastgroup == "tag":
            tag = m.group("tag").lower()
        elif m.group("id") is not None:
            elem_id = m.group("id")
        elif m.group("cls") is not None:
            classes.append(m.group("cls"))
        else:
            val = m.group("val")
            if val and val[0] in "\"'" and val[-1] == val[0]:
                val = val[1:-1]
            attrs.append((m.group("attr").lower(), val))
        first = False
        pos = m.end()
    return _Compound(tag, elem_id, tuple(classes), tuple(attrs))


_CSS_COMPOUND_RE = re.compile(r"(?:\[[^\]]*\]|[^\s>\[])+")


def _parse_css(body: str) -> tuple[list[_Compound], list[str]]:
    """Returns (compounds, combinators); combinators[i] joins i and i+1."""
    # Probe for unsupported syntax outside bracketed attribute values.
    probe = re.sub(r"\[[^\]]*\]", "[]", body)
    if any(ch in probe for ch in ",+~:*"):
        raise UnsupportedSelector(f"unsupported CSS syntax in {body!r}")
    compounds: list[_Compound] = []
    combinators: list[str] = []
    pending: str | None = None  # combinator awaiting its right-hand compound
    pos = 0
    while pos < len(body):
        ch = body[pos]
        if ch.isspace():
            if compounds and pending is None:
                pending = " "
            pos += 1
        elif ch == ">":
            if not compounds or pending == ">":
                raise UnsupportedSelector(f"misplaced '>' in {body!r}")
            pending = ">"
            pos += 1
        else:
            m = _CSS_COMPOUND_RE.match(body, pos)
            if m is None:
                raise UnsupportedSelector(f"unsupported CSS at {body[pos:]!r}")
            if compounds:
                combinators.append(pending or " ")
            compounds.append(_parse_compound(m.group(0)))
            pending = None
            pos = m.end()
    if not compounds:
        raise UnsupportedSelector("empty CSS selector")
    if pending == ">":
        raise UnsupportedSelector(f"dangling combinator in {body!r}")
    return compounds, combinators


def _matches_chain(elem: Element, compounds: list[_Compound], combinators: list[str]) -> bool:
    if not compounds[-1].matches(elem):
        return False
    if len(compounds) == 1:
        return True
    head, joints = compounds[:-1], combinators[:-1] if combinators else []
    joint = combinators[-1]
    if joint == ">":
        return elem.parent is not None and _matches_chain(elem.parent, head, joints)
    return any(_matches_chain(anc, head, joints) for anc in elem.ancestors())


def _resolve_css(snap: Snapshot, body: str) -> list[Element]:
    compounds, combinators = _parse_css(body)
    return [e for e in snap.elements if _matches_chain(e, compounds, combinators)]


# --- XPath subset ---

_XPATH_STEP_RE = re.compile(r"(//|/)(\*|[\w-]+)((?:\[[^\]]*\])*)")
_XPATH_PRED_RE = re.compile(r"\[@([\w-]+)=(\"([^\"]*)\"|'([^']*)')\]|\[(\d+)\]")


def _parse_xpath(body: str):
    steps = []
    pos = 0
    while pos < len(body):
        m = _XPATH_STEP_RE.match(body, pos)
        if m is None:
            raise UnsupportedSelector(f"unsupported XPath at {body[pos:]!r}")
        axis, nodetest, preds_raw = m.group(1), m.group(2), m.group(3)
        preds = []
        ppos = 0
        while ppos < len(preds_raw):
            pm = _XPATH_PRED_RE.match(preds_raw, ppos)
            if pm is None:
                raise UnsupportedSelector(f"unsupported XPath predicate in {preds_raw!r}")
            if pm.group(5) is not None:
                preds.append(("pos", int(pm.group(5))))
            else:
                value = pm.group(3) if pm.group(3) is not None else pm.group(4)
                preds.append(("attr", (pm.group(1).lower(), value)))
            ppos = pm.end()
        steps.append((axis, nodetest.lower() if nodetest != "*" else "*", preds))
        pos = m.end()
    if not steps:
        raise UnsupportedSelector(f"empty XPath {body!r}")
    return steps


def _resolve_xpath(snap: Snapshot, body: str) -> list[Element]:
    steps = _parse_xpath(body)
    # The virtual document node: its children are [root], descendants all.
    contexts: list[Element | None] = [None]
    for axis, nodetest, preds in steps:
        matched: list[Element] = []
        seen: set[int] = set()
        for ctx in contexts:
            if axis == "//":
                pool = snap.elements if ctx is None else [
                    e for e in ctx.iter_subtree() if e is not ctx
                ]
            else:
                pool = [snap.root] if ctx is None else ctx.children
            candidates = [e for e in pool if nodetest == "*" or e.tag == nodetest]
            for kind, arg in preds:
                if kind == "attr":
                    key, value = arg
                    candidates = [e for e in candidates if e.attributes.get(key) == value]
                else:
                    candidates = [candidates[arg - 1]] if len(candidates) >= arg else []
            for e in candidates:
                if id(e) not in seen:
                    seen.add(id(e))
                    matched.append(e)
        contexts = matched  # type: ignore[assignment]
    order = {id(e): i for i, e in enumerate(snap.elements)}
    return sorted(contexts, key=lambda e: order[id(e)])  # type: ignore[arg-type]


# --- aria / text ---

_ARIA_ROLE_RE = re.compile(r"^(.*?)(?:\[role=\"([^\"]*)\"\])?$", re.DOTALL)

_IMPLICIT_ROLES = {
    "a": "link",
    "button": "button",
    "select": "combobox",
    "textarea": "textbox",
    "nav": "navigation",
    "option": "option",
}

_INPUT_TYPE_ROLES = {
    "checkbox": "checkbox",
    "radio": "radio",
    "button": "button",
    "submit": "button",
    "reset": "button",
    "number": "spinbutton",
    "search": "searchbox",
}


def _collapse_ws(text: str) -> str:
    return " ".join(text.split())


def accessible_name(elem: Element) -> str:
    """Simplified accessible name: aria-label, else title, else owned text
    (the text fallback only for role-bearing elements)."""
    name = elem.attributes.get("aria-label") or elem.attributes.get("title")
    if name:
        return name
    return _collapse_ws(elem.text) if element_role(elem) else ""


def element_role(elem: Element) -> str:
    explicit = elem.attributes.get("role")
    if explicit:
        return explicit
    if elem.tag == "input":
        return _INPUT_TYPE_ROLES.get(elem.attributes.get("type", "text"), "textbox")
    return _IMPLICIT_ROLES.get(elem.tag, "")


def _resolve_aria(snap: Snapshot, body: str) -> list[Element]:
    m = _ARIA_ROLE_RE.match(body)
    name, role = m.group(1), m.group(2)
    out = []
    for elem in snap.elements:
        if accessible_name(elem) != name:
            continue
        if role is not None and element_role(elem) != role:
            continue
        out.append(elem)
    return out


def _resolve_text(snap: Snapshot, body: str) -> list[Element]:
    wanted = _collapse_ws(body)
    return [e for e in snap.elements if _collapse_ws(e.text) == wanted]


def resolve_selector(snap: Snapshot, sel: Selector) -> list[Element]:
    """Resolve one recorded selector to matching elements in document order."""
    if sel.scheme in ("css", "pierce"):
        return _resolve_css(snap, sel.body)
    if sel.scheme == "xpath":
        return _resolve_xpath(snap, sel.body)
    if sel.scheme == "aria":
        return _resolve_aria(snap, sel.body)
    return _resolve_text(snap, sel.body)


def rank_by_overlap(
    snap: Snapshot, attrs: Mapping[str, str], tag: str | None = None
) -> list[tuple[Element, float]]:
    """Rank snapshot elements by similarity to a recorded element.

    Score is 0.8 * Jaccard of attribute pair sets plus 0.2 for an equal tag;
    ties break by document order.
    """
    if not attrs and tag is None:
        raise ValueError("recorded element needs at least one attribute or a tag")
    recorded_pairs = set(attrs.items())
    scored = []
    for elem in snap.elements:
        elem_pairs = set(elem.attributes.items())
        union = recorded_pairs | elem_pairs
        jaccard = len(recorded_pairs & elem_pairs) / len(union) if union else 1.0
        value = 0.8 * jaccard + (0.2 if tag is not None and elem.tag == tag else 0.0)
        scored.append((elem, value))
    scored.sort(key=lambda pair: -pair[1])
    return scored
