"""Causal chain generation and diagnostic evaluation harness."""

from .model import (
    BeliefGroup,
    CausalChain,
    CEPair,
    ChainFlag,
    ChainProbeError,
    Dataset,
    EmptyAfterNormalization,
    Event,
    IntermediatePair,
    ModelRef,
    ProbeKind,
    Verdict,
    normalize_event_text,
)

__version__ = "0.1.0"

__all__ = [
    "BeliefGroup",
    "CausalChain",
    "CEPair",
    "ChainFlag",
    "ChainProbeError",
    "Dataset",
    "EmptyAfterNormalization",
    "Event",
    "IntermediatePair",
    "ModelRef",
    "ProbeKind",
    "Verdict",
    "normalize_event_text",
    "__version__",
]
