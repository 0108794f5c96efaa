"""Evidential fusion and hybrid attention for weakly supervised temporal action localization."""

from ._core import (
    BeliefMass,
    FormatError,
    TotalConflictError,
    ValidationError,
    combine,
    combine_many,
    conflict,
    evaluate,
    gradient_check,
    infer,
    masses_from_evidence,
    read_features,
    schedule_weight,
    synthesize,
    tiou,
    train,
    vacuous,
    write_features,
)

__all__ = [
    "BeliefMass",
    "FormatError",
    "TotalConflictError",
    "ValidationError",
    "combine",
    "combine_many",
    "conflict",
    "evaluate",
    "gradient_check",
    "infer",
    "masses_from_evidence",
    "read_features",
    "schedule_weight",
    "synthesize",
    "tiou",
    "train",
    "vacuous",
    "write_features",
]
