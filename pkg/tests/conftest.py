from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))  # for sitegen

import sitegen
from tracesmith import ingest
from tracesmith.dom import parse_snapshot
from tracesmith.model import TaskDefinition

DATA_DIR = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def recording_bytes() -> bytes:
    return (DATA_DIR / "recording_imdb.json").read_bytes()


@pytest.fixture(scope="session")
def recording(recording_bytes):
    return ingest.parse_recording(recording_bytes)


@pytest.fixture(scope="session")
def filtered_recording(recording):
    return ingest.filter_irrelevant(recording).recording


@pytest.fixture(scope="session")
def imdb_task() -> TaskDefinition:
    return TaskDefinition(
        example_description=sitegen.EXAMPLE_TASK,
        general_description=sitegen.GENERAL_TASK,
    )


@pytest.fixture(scope="session")
def header_snapshot():
    return parse_snapshot(sitegen.imdb_header_html(), source_path="imdb_header.html")


@pytest.fixture(scope="session")
def site_a(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("site_a")
    sitegen.write_site(root, "a")
    return root


@pytest.fixture(scope="session")
def site_b(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("site_b")
    sitegen.write_site(root, "b")
    return root


@pytest.fixture(scope="session")
def sample_sop_text() -> str:
    return (DATA_DIR / "sample_sop_response.txt").read_text(encoding="utf-8")
