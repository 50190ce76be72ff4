"""story-spine: narrative-backbone extraction, dataset export, evaluation."""

from .errors import StorySpineError
from .ingest import (
    Element,
    ElementKind,
    Scene,
    Screenplay,
    SourceFormat,
    TagSchema,
    parse_prose,
    parse_script,
    roundtrip_text,
)
from .world import (
    AttributeSet,
    Character,
    Delta,
    Event,
    NarrativeWorld,
    StateTransition,
    TransitionKind,
    apply_delta,
    classify_transition,
    continuity_check,
    diff_states,
    events_inducing_transitions,
)
from .pipeline import (
    NEAgent,
    NarrativeUnit,
    NaturalizedScene,
    PipelineConfig,
    PipelineResult,
    RollingMemory,
    SceneResult,
    UnitLabel,
    run_pipeline,
    vote,
)
from .backend import (
    CachedBackend,
    ChatRequest,
    ChatResponse,
    FinishReason,
    HttpBackend,
    ResponseCache,
    ScriptedBackend,
    mock_from_world,
)
from .distill import (
    DistillRecord,
    PackedExample,
    SumRecord,
    build_distill,
    build_sum,
    pack_fewshot,
)
from .evaluation import (
    DimensionScores,
    JudgeTally,
    RougeScore,
    compression_ratio,
    export_rubric,
    judge_dimensions,
    judge_ood,
    rouge_l,
    rouge_n,
)

__version__ = "0.1.0"
