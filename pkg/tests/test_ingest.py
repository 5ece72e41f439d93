from __future__ import annotations

import json

import pytest

from tracesmith.ingest import (
    MalformedRecording,
    emit_recording,
    emit_recording_json,
    filter_irrelevant,
    parse_recording,
)
from tracesmith.model import StepKind


class TestParseRecording:
    def test_title_and_step_count(self, recording):
        assert recording.title == "Recording IMDB"
        assert len(recording.steps) == 16

    def test_kind_counts(self, recording):
        counts = recording.counts_by_kind()
        assert counts == {"setViewport": 1, "navigate": 1, "click": 10, "change": 4}

    def test_selector_groups_preserved(self, recording):
        step = recording.steps[2]  # the category-selector click
        assert [len(g) for g in step.selectors] == [2, 1, 1, 1]
        assert step.selectors[0][0].scheme == "aria"
        assert step.selectors[2][0].scheme == "xpath"

    def test_empty_steps_rejected(self):
        with pytest.raises(MalformedRecording, match=r"\$\.steps"):
            parse_recording(b'{"title":"t","steps":[]}')

    def test_error_carries_json_path(self):
        bad = {"title": "t", "steps": [{"type": "navigate"}]}
        with pytest.raises(MalformedRecording, match=r"\$\.steps\[0\]\.url"):
            parse_recording(json.dumps(bad).encode())

    def test_unknown_kind_preserved_as_other(self):
        rec = parse_recording(
            json.dumps(
                {"title": "t", "steps": [{"type": "navigate", "url": "https://x"},
                                          {"type": "hover", "weird": 1}]}
            ).encode()
        )
        assert rec.steps[1].kind is StepKind.OTHER
        assert rec.steps[1].raw_type == "hover"
        assert rec.steps[1].extra == {"weird": 1}

    def test_round_trip_preserves_structure(self, recording, recording_bytes):
        emitted = emit_recording(recording)
        reparsed = parse_recording(json.dumps(emitted).encode())
        assert reparsed.title == recording.title
        assert [s.kind for s in reparsed.steps] == [s.kind for s in recording.steps]
        assert [
            [sel.raw for sel in s.flat_selectors] for s in reparsed.steps
        ] == [[sel.raw for sel in s.flat_selectors] for s in recording.steps]
        # and it also matches the source export field-for-field
        assert emitted == json.loads(recording_bytes)

    def test_emit_is_deterministic(self, recording):
        assert emit_recording_json(recording) == emit_recording_json(recording)


def _click(selector_groups, **kwargs):
    return {"type": "click", "selectors": selector_groups, **kwargs}


def _recording(steps):
    return parse_recording(json.dumps({"title": "t", "steps": steps}).encode())


class TestFilterIrrelevant:
    def test_captcha_click_dropped(self):
        rec = _recording(
            [
                {"type": "navigate", "url": "https://x.test/"},
                _click([["div.g-recaptcha"]]),
                _click([["aria/Submit"]]),
            ]
        )
        report = filter_irrelevant(rec)
        assert report.dropped == [(1, "captcha")]
        assert len(report.recording.steps) == 2

    def test_body_only_click_dropped(self):
        rec = _recording(
            [{"type": "navigate", "url": "https://x.test/"}, _click([["body"]])]
        )
        report = filter_irrelevant(rec)
        assert report.dropped == [(1, "nonInteractable")]

    def test_popup_close_dropped(self):
        rec = _recording(
            [
                {"type": "navigate", "url": "https://x.test/"},
                _click([['[role="dialog"] [aria-label="Close"]']]),
                _click([["aria/Close"]]),
            ]
        )
        report = filter_irrelevant(rec)
        assert [r for _, r in report.dropped] == ["popupClose", "popupClose"]

    def test_viewport_flagged_only_on_fixture(self, recording):
        report = filter_irrelevant(recording)
        assert report.dropped == [(0, "viewportOnly")]
        assert len(report.recording.steps) == 15

    def test_kept_plus_dropped_covers_source(self, recording):
        report = filter_irrelevant(recording)
        assert len(report.recording.steps) + len(report.dropped) == len(recording.steps)

    def test_kept_order_is_subsequence(self):
        rec = _recording(
            [
                {"type": "navigate", "url": "https://x.test/"},
                _click([["div.g-recaptcha"]]),
                _click([["aria/A"]]),
                _click([["aria/B"]]),
            ]
        )
        kept = filter_irrelevant(rec).recording.steps
        labels = [s.flat_selectors[0].raw for s in kept if s.kind is StepKind.CLICK]
        assert labels == ["aria/A", "aria/B"]

    def test_idempotent(self, recording):
        once = filter_irrelevant(recording)
        twice = filter_irrelevant(once.recording)
        assert twice.dropped == []
        assert len(twice.recording.steps) == len(once.recording.steps)
