"""Trace-consistency scoring: feature extraction, embeddings, verdicts, metrics.

The baseline embedder is deliberately simple and fully specified (ASCII
tokenization, FNV-1a-64 signed hashing into 768 dims, per-step L2 norm, mean
pooling) so independent implementations are bit-compatible. A trained encoder
can be swapped in through the ``service`` embedder, which talks to the
``POST /embed`` wire contract.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernel
from .errors import FormatError, ProviderFailure, TracesmithError
from .model import (
    EmptyTrace,
    ExecutionTrace,
    canonical_step_text,
    load_trace,
)

EMBEDDING_DIM = 768

# Table-style presets: fine-tuned encoder vs out-of-the-box encoder.
THRESHOLD_FINE_TUNED = 0.811
THRESHOLD_OUT_OF_THE_BOX = 0.998


class DegenerateStep(TracesmithError):
    """A step's canonical text produced no tokens or a zero vector."""


class DegenerateEmbedding(TracesmithError):
    """An embedding collapsed to the zero vector and cannot be scored."""


class UnparsableScore(ProviderFailure):
    """The completion provider did not return a usable decimal in [0, 1]."""


class EmptyGoldenSet(TracesmithError):
    """Monitoring requires at least one golden trace."""


class EmptyDataset(TracesmithError):
    """Evaluation requires at least one labeled pair."""


class SingleClassDataset(TracesmithError):
    """Threshold selection requires both similar and dissimilar pairs."""


@dataclass(frozen=True, slots=True)
class FeatureSequence:
    """Canonical step texts of one trace, in execution order."""

    items: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.items)

    def render(self) -> str:
        """Whole-trace text form: items joined by newline (service contract)."""
        return "\n".join(self.items)


@dataclass(frozen=True)
class TraceEmbedding:
    """A unit-norm 768-dim trace embedding (or a flagged degenerate one)."""

    vector: np.ndarray
    degenerate: bool = False

    def __post_init__(self) -> None:
        v = np.asarray(self.vector, dtype=np.float64)
        if v.shape != (EMBEDDING_DIM,):
            raise ValueError(f"embedding must have shape ({EMBEDDING_DIM},), got {v.shape}")
        object.__setattr__(self, "vector", v)
        if not self.degenerate and not np.isclose(np.linalg.norm(v), 1.0, atol=1e-6):
            raise ValueError("non-degenerate embedding must be unit-norm")


@dataclass(frozen=True, slots=True)
class ConsistencyConfig:
    threshold: float = THRESHOLD_FINE_TUNED
    aggregation: str = "max"
    embedder: str = "baseline"

    def __post_init__(self) -> None:
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError(f"threshold must be in [0, 1], got {self.threshold}")
        if self.aggregation not in ("max", "mean"):
            raise ValueError(f"aggregation must be max or mean, got {self.aggregation!r}")
        if self.embedder not in ("baseline", "service"):
            raise ValueError(f"embedder must be baseline or service, got {self.embedder!r}")


@dataclass(frozen=True, slots=True)
class ConsistencyReport:
    score: float
    verdict: str
    nearest_golden_id: str | None
    config: ConsistencyConfig

    @property
    def consistent(self) -> bool:
        return self.verdict == "consistent"


@dataclass(frozen=True, slots=True)
class LabeledPair:
    a: ExecutionTrace
    b: ExecutionTrace
    label: str

    def __post_init__(self) -> None:
        if self.label not in ("similar", "dissimilar"):
            raise ValueError(f"label must be similar or dissimilar, got {self.label!r}")


def extract_features(trace: ExecutionTrace) -> FeatureSequence:
    """Canonical step text per step, order preserved."""
    if not trace.steps:
        raise EmptyTrace(f"trace {trace.task_id!r} has no steps")
    return FeatureSequence(tuple(canonical_step_text(s) for s in trace.steps))


_ASCII_LOWER = bytes(b + 32 if 0x41 <= b <= 0x5A else b for b in range(256))
_TOKEN_RE = re.compile(rb"[a-z0-9]+")


def tokenize(text: str) -> list[bytes]:
    """ASCII-lowercase *text* and split into maximal [a-z0-9] runs."""
    return _TOKEN_RE.findall(text.encode("utf-8").translate(_ASCII_LOWER))


def embed_baseline(fs: FeatureSequence) -> TraceEmbedding:
    """Deterministic hashed embedding: signed FNV token hashing per step,
    L2-normalized step vectors, mean-pooled and re-normalized."""
    if not fs.items:
        raise EmptyTrace("cannot embed an empty feature sequence")
    pooled = np.zeros(EMBEDDING_DIM, dtype=np.float64)
    for item in fs.items:
        tokens = tokenize(item)
        if not tokens:
            raise DegenerateStep(f"step text has no tokens: {item!r}")
        vec = np.zeros(EMBEDDING_DIM, dtype=np.float64)
        kernel.accumulate_tokens(vec, tokens)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            raise DegenerateStep(f"step text hashed to the zero vector: {item!r}")
        pooled += vec / norm
    pooled /= len(fs.items)
    norm = float(np.linalg.norm(pooled))
    if norm == 0.0:
        return TraceEmbedding(pooled, degenerate=True)
    return TraceEmbedding(pooled / norm)


def score(e1: TraceEmbedding, e2: TraceEmbedding) -> float:
    """Cosine of two unit embeddings, clamped into [0, 1]."""
    if e1.degenerate or e2.degenerate:
        raise DegenerateEmbedding("cannot score a degenerate embedding")
    if np.array_equal(e1.vector, e2.vector):
        return 1.0  # cos(v, v) is 1 by definition; skip the float round-trip
    return min(1.0, max(0.0, float(np.dot(e1.vector, e2.vector))))


Embedder = Callable[[FeatureSequence], TraceEmbedding]


def baseline_embedder() -> Embedder:
    return embed_baseline


def service_embedder(gateway) -> Embedder:
    """Embedder backed by the ``POST /embed`` wire contract.

    The whole trace is rendered to one newline-joined text, matching what
    the trained encoder was fitted on.
    """

    def _embed(fs: FeatureSequence) -> TraceEmbedding:
        vectors = gateway.embed([fs.render()])
        vec = np.asarray(vectors[0], dtype=np.float64)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            return TraceEmbedding(vec, degenerate=True)
        return TraceEmbedding(vec / norm)

    return _embed


def get_embedder(cfg: ConsistencyConfig, gateway=None) -> Embedder:
    if cfg.embedder == "service":
        if gateway is None:
            raise ProviderFailure("service embedder requires a configured gateway")
        return service_embedder(gateway)
    return embed_baseline


_DECIMAL_RE = re.compile(r"\d+\.\d+|\.\d+|\d+")

_LLM_RUBRIC = """You compare two web-task execution traces for behavioral consistency.
Two traces are consistent when they achieve the same outcome through a
logically coherent pattern, even if one contains extra scrolls, redundant
clicks, or merges a click-then-type into a single type action.

Trace A steps:
{a}

Trace B steps:
{b}

Reply with a single decimal number between 0 and 1, where 1 means perfectly
consistent and 0 means entirely different behavior. Reply with the number only.
"""


def score_llm(f1: FeatureSequence, f2: FeatureSequence, provider) -> float:
    """Ask a completion provider to judge consistency of two traces."""
    prompt = _LLM_RUBRIC.format(
        a="\n".join(f"{i + 1}. {s}" for i, s in enumerate(f1.items)),
        b="\n".join(f"{i + 1}. {s}" for i, s in enumerate(f2.items)),
    )
    reply = provider.complete(prompt)
    match = _DECIMAL_RE.search(reply)
    if match is None:
        raise UnparsableScore(f"no decimal in provider reply: {reply[:80]!r}")
    value = float(match.group(0))
    if not 0.0 <= value <= 1.0:
        raise UnparsableScore(f"score {value} outside [0, 1]")
    return value


def monitor(
    trace: ExecutionTrace,
    golden: Sequence[ExecutionTrace],
    cfg: ConsistencyConfig | None = None,
    *,
    ids: Sequence[str] | None = None,
    embedder: Embedder | None = None,
) -> ConsistencyReport:
    """Score *trace* against a golden set and classify by threshold.

    ``ids`` names the golden traces for reporting; defaults to their task
    ids suffixed with their position. Ties on the best score break toward
    the lexicographically smallest id so the report is stable under
    permutation of the golden set.
    """
    cfg = cfg or ConsistencyConfig()
    if not golden:
        raise EmptyGoldenSet("golden set is empty")
    if ids is None:
        ids = [f"{g.task_id}#{i}" for i, g in enumerate(golden)]
    embed = embedder or embed_baseline
    target = embed(extract_features(trace))
    scored = [
        (score(target, embed(extract_features(g))), gid)
        for g, gid in zip(golden, ids)
    ]
    values = [s for s, _ in scored]
    agg = max(values) if cfg.aggregation == "max" else sum(values) / len(values)
    nearest = min(scored, key=lambda sv: (-sv[0], sv[1]))[1]
    verdict = "consistent" if agg >= cfg.threshold else "inconsistent"
    return ConsistencyReport(score=agg, verdict=verdict, nearest_golden_id=nearest, config=cfg)


@dataclass(frozen=True, slots=True)
class EvalResult:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int
    threshold: float
    mean_similar: float
    mean_dissimilar: float

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "threshold": self.threshold,
            "meanSimilar": self.mean_similar,
            "meanDissimilar": self.mean_dissimilar,
        }


def _pair_scores(pairs: Sequence[LabeledPair], embed: Embedder) -> list[tuple[float, str]]:
    out = []
    for pair in pairs:
        ea = embed(extract_features(pair.a))
        eb = embed(extract_features(pair.b))
        out.append((score(ea, eb), pair.label))
    return out


def _metrics_at(scored: Sequence[tuple[float, str]], threshold: float) -> EvalResult:
    tp = fp = tn = fn = 0
    sim_scores, dis_scores = [], []
    for value, label in scored:
        predicted_similar = value >= threshold
        if label == "similar":
            sim_scores.append(value)
            tp += predicted_similar
            fn += not predicted_similar
        else:
            dis_scores.append(value)
            fp += predicted_similar
            tn += not predicted_similar
    total = tp + fp + tn + fn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalResult(
        accuracy=(tp + tn) / total,
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        threshold=threshold,
        mean_similar=sum(sim_scores) / len(sim_scores) if sim_scores else float("nan"),
        mean_dissimilar=sum(dis_scores) / len(dis_scores) if dis_scores else float("nan"),
    )


def evaluate(
    pairs: Sequence[LabeledPair],
    cfg: ConsistencyConfig | None = None,
    *,
    embedder: Embedder | None = None,
) -> EvalResult:
    """Binary-classification metrics with similar as the positive class."""
    cfg = cfg or ConsistencyConfig()
    if not pairs:
        raise EmptyDataset("no labeled pairs to evaluate")
    scored = _pair_scores(pairs, embedder or embed_baseline)
    return _metrics_at(scored, cfg.threshold)


def sweep_candidates(scores: Iterable[float]) -> list[float]:
    """Candidate thresholds: 0, 1, and midpoints of adjacent distinct scores."""
    distinct = sorted(set(scores))
    mids = [(a + b) / 2.0 for a, b in zip(distinct, distinct[1:])]
    return sorted({0.0, 1.0, *mids})


def select_threshold(
    pairs: Sequence[LabeledPair],
    *,
    embedder: Embedder | None = None,
) -> float:
    """Sweep candidate thresholds and return the smallest one maximizing F1."""
    if not pairs:
        raise EmptyDataset("no labeled pairs to sweep")
    labels = {p.label for p in pairs}
    if len(labels) < 2:
        raise SingleClassDataset(f"need both labels, got only {labels}")
    scored = _pair_scores(pairs, embedder or embed_baseline)
    best_threshold, best_f1 = 0.0, -1.0
    for cand in sweep_candidates(s for s, _ in scored):
        f1 = _metrics_at(scored, cand).f1
        if f1 > best_f1:
            best_threshold, best_f1 = cand, f1
    return best_threshold


# --- labeled-pairs JSONL and golden store (external interfaces) ---

def load_pairs(path: str | Path) -> list[LabeledPair]:
    """Read a labeled-pairs JSONL file; trace paths resolve relative to it."""
    path = Path(path)
    base = path.parent
    pairs: list[LabeledPair] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
            pair = LabeledPair(
                a=load_trace(base / row["a"]),
                b=load_trace(base / row["b"]),
                label=row["label"],
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise FormatError(f"{path}:{lineno}: bad pair record: {exc}") from exc
        pairs.append(pair)
    if not pairs:
        raise EmptyDataset(f"{path}: no pairs")
    return pairs


@dataclass(slots=True)
class GoldenStore:
    task_id: str
    traces: list[ExecutionTrace]
    ids: list[str]
    threshold: float
    aggregation: str


def load_golden_store(directory: str | Path) -> GoldenStore:
    """Read a golden-trace directory: manifest.json plus the trace files."""
    directory = Path(directory)
    manifest_path = directory / "manifest.json"
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        names = manifest["traces"]
        store = GoldenStore(
            task_id=manifest["taskId"],
            traces=[load_trace(directory / name) for name in names],
            ids=[str(name) for name in names],
            threshold=float(manifest.get("threshold", THRESHOLD_FINE_TUNED)),
            aggregation=manifest.get("aggregation", "max"),
        )
    except FileNotFoundError as exc:
        raise FormatError(f"golden store {directory}: missing manifest.json") from exc
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"golden store {directory}: bad manifest: {exc}") from exc
    if not store.traces:
        raise EmptyGoldenSet(f"golden store {directory}: manifest lists no traces")
    return store
