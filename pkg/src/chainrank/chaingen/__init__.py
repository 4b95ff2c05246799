"""Totally ordered caption chains built by repeated error-conditioned edits."""

from .audit import AuditReport, audit_chain, structural_reasons
from .chain import (
    INDEPENDENT_FLAG,
    TRUNCATED_FLAG,
    CaptionChain,
    CaptionSource,
    SeedRecord,
    Step,
    read_chains,
    read_seeds,
    write_chains,
)
from .generate import (
    GenerationConfig,
    GenerationReport,
    Mutation,
    Rejection,
    SeedCaption,
    chain_rng,
    generate_chain,
    generate_chains,
    generate_independent_negatives,
    mutate_caption,
    recaption_seed,
)
from .taxonomy import (
    ErrorType,
    applicable_errors,
    default_taxonomy,
    load_taxonomy,
    sample_error,
    save_taxonomy,
)

__all__ = [
    "INDEPENDENT_FLAG",
    "TRUNCATED_FLAG",
    "AuditReport",
    "CaptionChain",
    "CaptionSource",
    "ErrorType",
    "GenerationConfig",
    "GenerationReport",
    "Mutation",
    "Rejection",
    "SeedCaption",
    "SeedRecord",
    "Step",
    "applicable_errors",
    "audit_chain",
    "chain_rng",
    "default_taxonomy",
    "generate_chain",
    "generate_chains",
    "generate_independent_negatives",
    "load_taxonomy",
    "mutate_caption",
    "read_chains",
    "read_seeds",
    "recaption_seed",
    "sample_error",
    "save_taxonomy",
    "structural_reasons",
    "write_chains",
]
