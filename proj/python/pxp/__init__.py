from ._pxp import (
    PxpError,
    analyze,
    classify,
    decide_tag,
    exact_match,
    jaccard,
    normalize_text,
    replay,
    resume,
    run,
    session_stopped,
    tags,
    validate_config,
)

__all__ = [
    "PxpError",
    "analyze",
    "classify",
    "decide_tag",
    "exact_match",
    "jaccard",
    "normalize_text",
    "replay",
    "resume",
    "run",
    "session_stopped",
    "tags",
    "validate_config",
]
