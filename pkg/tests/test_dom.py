from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from tracesmith.dom import (
    UnparsableSnapshot,
    UnsupportedSelector,
    count_matches,
    parse_snapshot,
    rank_by_overlap,
    resolve_selector,
)
from tracesmith.model import parse_selector


class TestParseSnapshot:
    def test_attribute_keys_lowercased(self):
        snap = parse_snapshot(b'<input id="a" TYPE="text">')
        assert len(snap.elements) == 1
        elem = snap.elements[0]
        assert elem.tag == "input"
        assert elem.attributes == {"id": "a", "type": "text"}

    def test_empty_file_rejected(self):
        with pytest.raises(UnparsableSnapshot):
            parse_snapshot(b"")

    def test_unclosed_tags_tolerated(self):
        snap = parse_snapshot(b"<div><p>one<p>two")
        assert snap.root.tag == "div"
        assert [e.tag for e in snap.elements] == ["div", "p", "p"]

    def test_multiple_roots_wrapped(self):
        snap = parse_snapshot(b"<div>a</div><div>b</div>")
        assert snap.root.tag == "html"
        assert len(snap.root.children) == 2

    def test_document_order(self):
        snap = parse_snapshot(b"<div><a></a><b><c></c></b></div><e></e>")
        assert [e.tag for e in snap.elements] == ["html", "div", "a", "b", "c", "e"]

    def test_header_fixture_has_search_testid(self, header_snapshot):
        count, first = count_matches(header_snapshot, {"data-testid": "suggestion-search"})
        assert count == 1
        assert first.tag == "input"


class TestCountMatches:
    def test_two_text_inputs(self):
        snap = parse_snapshot(b'<form><input type="text"><input type="text"></form>')
        count, first = count_matches(snap, {"type": "text"})
        assert count == 2
        assert first is snap.elements[1]

    def test_paper_signature_is_unique(self, header_snapshot):
        count, first = count_matches(
            header_snapshot,
            {"data-testid": "suggestion-search", "aria-label": "Search IMDb"},
        )
        assert count == 1
        assert first.attributes["id"] == "suggestion-search"

    def test_absent_value(self, header_snapshot):
        count, _ = count_matches(header_snapshot, {"data-testid": "nope"})
        assert count == 0

    def test_tag_filter(self):
        snap = parse_snapshot(b'<div id="x"></div><span id="x"></span>')
        assert count_matches(snap, {"id": "x"})[0] == 2
        assert count_matches(snap, {"id": "x"}, tag="span")[0] == 1

    @given(
        st.dictionaries(
            st.sampled_from(["a", "b", "c"]), st.sampled_from(["1", "2"]), min_size=1
        ),
        st.dictionaries(
            st.sampled_from(["a", "b", "c"]), st.sampled_from(["1", "2"]), min_size=1
        ),
    )
    @settings(max_examples=60, deadline=None)
    def test_monotone_under_attr_growth(self, attrs_a, attrs_b):
        html = "".join(
            f'<i a="{x}" b="{y}" c="{z}"></i>'
            for x in "12" for y in "12" for z in "12"
        )
        snap = parse_snapshot(f"<div>{html}</div>".encode())
        merged = {**attrs_a, **attrs_b}
        assert count_matches(snap, merged)[0] <= count_matches(snap, attrs_a)[0]


HEADER_CASES = [
    ('xpath///*[@data-testid="releaseYearMonth-start"]', 1, "input"),
    ("aria/See results", 1, "button"),
    ("css-missing:.missing", 0, None),
]


class TestResolveSelector:
    def test_xpath_testid(self, header_snapshot):
        found = resolve_selector(
            header_snapshot, parse_selector('xpath///*[@data-testid="releaseYearMonth-start"]')
        )
        assert len(found) == 1
        assert found[0].attributes["aria-label"] == "Enter release date above"

    def test_xpath_child_and_position(self):
        snap = parse_snapshot(
            b'<div id="nav"><div><span>a</span><span>b</span></div><div></div></div>'
        )
        found = resolve_selector(snap, parse_selector('xpath///*[@id="nav"]/div[1]/span[2]'))
        assert len(found) == 1
        assert found[0].text == "b"

    def test_xpath_absolute(self):
        snap = parse_snapshot(b"<html><body><p>hi</p></body></html>")
        found = resolve_selector(snap, parse_selector("xpath//html/body/p"))
        assert [e.text for e in found] == ["hi"]

    def test_aria_results_button(self, header_snapshot):
        found = resolve_selector(header_snapshot, parse_selector("aria/See results"))
        assert len(found) == 1
        assert found[0].tag == "button"

    def test_aria_role_filter(self, header_snapshot):
        sel = parse_selector('aria/Enter release date above[role="textbox"]')
        found = resolve_selector(header_snapshot, sel)
        assert len(found) == 1
        assert found[0].attributes["data-testid"] == "releaseYearMonth-start"
        wrong_role = parse_selector('aria/Enter release date above[role="button"]')
        assert resolve_selector(header_snapshot, wrong_role) == []

    def test_css_missing_class(self, header_snapshot):
        assert resolve_selector(header_snapshot, parse_selector(".missing")) == []

    def test_css_compound_chain(self):
        snap = parse_snapshot(
            b'<div id="c"><ul><a><span class="ipc-list-item__text">x</span></a></ul></div>'
            b'<span class="ipc-list-item__text">decoy</span>'
        )
        found = resolve_selector(snap, parse_selector("#c a > span.ipc-list-item__text"))
        assert len(found) == 1
        assert found[0].text == "x"

    def test_css_attr_with_space_in_value(self):
        snap = parse_snapshot(b'<input aria-label="Search IMDb"><input aria-label="x">')
        found = resolve_selector(snap, parse_selector('[aria-label="Search IMDb"]'))
        assert len(found) == 1

    def test_pierce_behaves_like_css(self, header_snapshot):
        css = resolve_selector(header_snapshot, parse_selector("[data-testid='suggestion-search']"))
        pierce = resolve_selector(header_snapshot, parse_selector("pierce/[data-testid='suggestion-search']"))
        assert css == pierce

    def test_text_selector_whitespace_collapse(self):
        snap = parse_snapshot(b"<div><span>Advanced   Search </span></div>")
        found = resolve_selector(snap, parse_selector("text/Advanced Search"))
        assert len(found) == 1

    @pytest.mark.parametrize(
        "bad",
        ["a:hover", "a, b", "a ~ b", "a + b", "*"],
    )
    def test_unsupported_css(self, bad):
        snap = parse_snapshot(b"<div></div>")
        with pytest.raises(UnsupportedSelector):
            resolve_selector(snap, parse_selector(bad))

    def test_unsupported_xpath(self):
        snap = parse_snapshot(b"<div></div>")
        with pytest.raises(UnsupportedSelector):
            resolve_selector(snap, parse_selector("xpath//div[contains(@id, 'x')]"))

    def test_results_in_document_order_and_subset(self, header_snapshot):
        found = resolve_selector(header_snapshot, parse_selector("input"))
        order = {id(e): i for i, e in enumerate(header_snapshot.elements)}
        indices = [order[id(e)] for e in found]
        assert indices == sorted(indices)
        assert all(any(e is el for el in header_snapshot.elements) for e in found)


class TestRankByOverlap:
    def test_exact_copy_scores_one(self, header_snapshot):
        target = next(
            e for e in header_snapshot.elements
            if e.attributes.get("data-testid") == "suggestion-search"
        )
        ranked = rank_by_overlap(header_snapshot, dict(target.attributes), tag=target.tag)
        assert ranked[0][0] is target
        assert ranked[0][1] == 1.0

    def test_disjoint_attrs_tag_match_scores_point_two(self):
        snap = parse_snapshot(b'<input type="text"><div></div>')
        ranked = rank_by_overlap(snap, {"nope": "x"}, tag="input")
        assert ranked[0][0].tag == "input"
        assert ranked[0][1] == pytest.approx(0.2)

    def test_churned_id_still_ranked_first(self):
        # The target's id changed between sessions; data-testid plus
        # aria-label overlap still wins over a decoy sharing only the tag.
        snap = parse_snapshot(
            b'<input id="r-9f2" data-testid="suggestion-search" aria-label="Search IMDb" type="text">'
            b'<input id="other" type="text">'
        )
        recorded = {
            "id": "suggestion-search-old",
            "data-testid": "suggestion-search",
            "aria-label": "Search IMDb",
            "type": "text",
        }
        ranked = rank_by_overlap(snap, recorded, tag="input")
        assert ranked[0][0].attributes["data-testid"] == "suggestion-search"
        # hand-computed: |∩|=3 (testid, label, type), |∪|=5 -> 0.8*0.6+0.2=0.68
        assert ranked[0][1] == pytest.approx(0.68)

    def test_scores_bounded_and_one_iff_equal(self, header_snapshot):
        for elem, value in rank_by_overlap(header_snapshot, {"type": "text"}, tag="input"):
            assert 0.0 <= value <= 1.0
            is_exact = (
                dict(elem.attributes) == {"type": "text"} and elem.tag == "input"
            )
            assert (value == 1.0) == is_exact
