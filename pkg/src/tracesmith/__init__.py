"""tracesmith: compile browser demonstrations into SOPs, derive stable
element signatures from DOM snapshots, and score execution-trace
consistency against golden references — all runnable offline."""

from .consistency import (
    ConsistencyConfig,
    ConsistencyReport,
    EMBEDDING_DIM,
    FeatureSequence,
    LabeledPair,
    THRESHOLD_FINE_TUNED,
    THRESHOLD_OUT_OF_THE_BOX,
    TraceEmbedding,
    embed_baseline,
    evaluate,
    extract_features,
    monitor,
    score,
    score_llm,
    select_threshold,
)
from .dom import Element, Snapshot, count_matches, parse_snapshot, rank_by_overlap, resolve_selector
from .ingest import IngestReport, filter_irrelevant, parse_recording
from .model import (
    ACTION_VOCABULARY,
    DemoRecording,
    ExecutionTrace,
    RecordedStep,
    Selector,
    StepFeature,
    TaskDefinition,
    canonical_step_text,
    parse_selector,
)
from .signer import (
    ElementSignature,
    SignatureConfig,
    StabilityPolicy,
    assign_signature,
    build_config,
    verify_presence,
)
from .sim import FixtureSite, PerturbationSpec, generate_suite, perturb, run
from .sop import (
    SopInstance,
    SopTemplate,
    build_prompt,
    generate_fallback_sop,
    instantiate,
    parse_sop_response,
)

__version__ = "0.1.0"
