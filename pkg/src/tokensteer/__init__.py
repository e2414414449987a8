"""Interactive token-level steering of LLM code completions.

Surfaces per-token decision points in a code completion, scores and
explains local alternatives, highlights critical decisions via a
corrected entropy, and regenerates downstream code with minimal
disturbance when a token is replaced.
"""

from .model import (
    BaseCompletion,
    CompletionContext,
    GenerationParams,
    StepDistribution,
    SuffixSample,
    SuffixSampleBatch,
    TokenCandidate,
)
from .uncertainty import (
    HighlightAnnotation,
    HighlightConfig,
    ImportanceProfile,
    classify_step,
    corrected_entropy,
    corrected_weights,
    shannon_entropy,
)
from .distance import edit_distance, select_closest_suffix
from .analysis import (
    AlternativeAssessment,
    AssessmentRequest,
    HeuristicAnalyzer,
    truncate_summary,
    validate_assessment,
)
from .alternatives import AlternativePreview, RegenerationResult, apply_selection
from .scripted import ScriptedBackend, ScriptedTrace
from .session import InteractionEvent, SessionManager, replay_events

__all__ = [
    "AlternativeAssessment",
    "AlternativePreview",
    "AssessmentRequest",
    "BaseCompletion",
    "CompletionContext",
    "GenerationParams",
    "HeuristicAnalyzer",
    "HighlightAnnotation",
    "HighlightConfig",
    "ImportanceProfile",
    "InteractionEvent",
    "RegenerationResult",
    "ScriptedBackend",
    "ScriptedTrace",
    "SessionManager",
    "StepDistribution",
    "SuffixSample",
    "SuffixSampleBatch",
    "TokenCandidate",
    "apply_selection",
    "classify_step",
    "corrected_entropy",
    "corrected_weights",
    "edit_distance",
    "replay_events",
    "select_closest_suffix",
    "shannon_entropy",
    "truncate_summary",
    "validate_assessment",
]
