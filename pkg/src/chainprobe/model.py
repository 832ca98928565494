"""Shared domain types and event-text normalization.

Normalized event text is the unit of identity everywhere in the pipeline:
anchor matching, pair deduplication, and cache keys all compare normalized
strings byte for byte.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from enum import Enum
from typing import Any


class ChainProbeError(Exception):
    """Base class for every error raised by this package."""


class EmptyAfterNormalization(ChainProbeError):
    """Event text normalized down to the empty string."""


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

_WHITESPACE = re.compile(r"\s+")
_BULLET_MARKER = re.compile(r"^(?:[-*•–—>]+\s*)+")
_NUMBER_MARKER = re.compile(r"^\(?\d{1,3}[.)]\s+")
_EDGE_PUNCT = "\"'`´“”‘’.…"


def normalize_event_text(text: str) -> str:
    """Lowercase, collapse whitespace, strip edge punctuation and list markers.

    Deliberately conservative: case, whitespace, and surrounding punctuation
    only. No stemming or synonym folding, so distinct phrasings remain
    distinct events. Idempotent: normalizing a normalized string is a no-op.
    """
    s = _WHITESPACE.sub(" ", text.lower()).strip()
    while True:
        before = s
        s = _BULLET_MARKER.sub("", s)
        s = _NUMBER_MARKER.sub("", s)
        s = s.strip(_EDGE_PUNCT).strip()
        if s == before:
            break
    if not s:
        raise EmptyAfterNormalization(f"no content left after normalizing {text!r}")
    return s


# ---------------------------------------------------------------------------
# Enumerations
# ---------------------------------------------------------------------------


class Dataset(str, Enum):
    POLARIS3 = "PolarIs3CAUS"
    POLARIS4 = "PolarIs4CAUS"
    OTHER = "Other"


class BeliefGroup(str, Enum):
    BELIEVER = "believer"
    SKEPTIC = "skeptic"
    UNKNOWN = "unknown"


class ChainFlag(str, Enum):
    ANCHOR_REPAIRED_HEAD = "AnchorRepairedHead"
    ANCHOR_REPAIRED_TAIL = "AnchorRepairedTail"
    CONTAINS_REPEATED_EVENT = "ContainsRepeatedEvent"
    STRUCTURALLY_INVALID = "StructurallyInvalid"


class ProbeKind(str, Enum):
    """The four yes/no probe framings.

    A1 asks the forward question, A2 the reversed one; the *_Passive variants
    keep the causal direction but flip the surface order of the two events.
    """

    A1_ACTIVE = "A1_Active"
    A2_REVERSED_ACTIVE = "A2_ReversedActive"
    A1_PASSIVE = "A1_Passive"
    A2_REVERSED_PASSIVE = "A2_ReversedPassive"


class Verdict(str, Enum):
    CAUSAL = "Causal"
    NON_CAUSAL = "NonCausal"
    INVALID = "Invalid"


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelRef:
    """Identifies one model configuration within a run."""

    provider: str
    model_name: str
    temperature: float | None = None  # None = provider default
    run_tag: str = "main"

    def __post_init__(self) -> None:
        if not self.provider or not self.model_name:
            raise ValueError("provider and model_name must be nonempty")
        if self.temperature is not None and self.temperature < 0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")

    def key(self) -> str:
        return f"{self.provider}:{self.model_name}:{self.run_tag}"

    def to_dict(self) -> dict[str, Any]:
        return {
            "provider": self.provider,
            "model_name": self.model_name,
            "temperature": self.temperature,
            "run_tag": self.run_tag,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ModelRef":
        return cls(
            provider=d["provider"],
            model_name=d["model_name"],
            temperature=d.get("temperature"),
            run_tag=d.get("run_tag", "main"),
        )

    @classmethod
    def parse(cls, spec: str, temperature: float | None = None) -> "ModelRef":
        """Parse ``provider:model_name[:run_tag]`` as used on the CLI."""
        parts = spec.split(":")
        if len(parts) == 2:
            return cls(provider=parts[0], model_name=parts[1], temperature=temperature)
        if len(parts) == 3:
            return cls(
                provider=parts[0],
                model_name=parts[1],
                run_tag=parts[2],
                temperature=temperature,
            )
        raise ValueError(f"model spec must be provider:model_name[:run_tag], got {spec!r}")


@dataclass(frozen=True, eq=False)
class Event:
    """A single step in a causal chain: surface text plus its normalized form.

    Two events compare equal iff their normalized fields are byte-equal.
    """

    text: str
    normalized: str

    def __post_init__(self) -> None:
        if normalize_event_text(self.text) != self.normalized:
            raise ValueError(
                f"normalized field {self.normalized!r} does not match "
                f"normalize_event_text({self.text!r})"
            )

    @classmethod
    def from_text(cls, text: str) -> "Event":
        return cls(text=text.strip(), normalized=normalize_event_text(text))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Event):
            return NotImplemented
        return self.normalized == other.normalized

    def __hash__(self) -> int:
        return hash(self.normalized)

    def to_dict(self) -> dict[str, Any]:
        return {"text": self.text, "normalized": self.normalized}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "Event":
        return cls(text=d["text"], normalized=d["normalized"])


@dataclass(frozen=True)
class CEPair:
    """An annotated cause -> effect anchor pair with source metadata."""

    id: str
    cause_text: str
    effect_text: str
    dataset: Dataset = Dataset.OTHER
    source_message: str | None = None
    group: BeliefGroup | None = None

    def __post_init__(self) -> None:
        cause = normalize_event_text(self.cause_text)
        effect = normalize_event_text(self.effect_text)
        if cause == effect:
            raise ValueError(
                f"cause and effect normalize to the same text {cause!r} for pair {self.id}"
            )

    @property
    def cause_event(self) -> Event:
        return Event.from_text(self.cause_text)

    @property
    def effect_event(self) -> Event:
        return Event.from_text(self.effect_text)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "cause_text": self.cause_text,
            "effect_text": self.effect_text,
            "dataset": self.dataset.value,
            "source_message": self.source_message,
            "group": self.group.value if self.group else None,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CEPair":
        return cls(
            id=d["id"],
            cause_text=d["cause_text"],
            effect_text=d["effect_text"],
            dataset=Dataset(d.get("dataset", "Other")),
            source_message=d.get("source_message"),
            group=BeliefGroup(d["group"]) if d.get("group") else None,
        )


@dataclass(frozen=True)
class CausalChain:
    """An ordered event sequence connecting a CE pair's anchors.

    ``chain_length`` counts links, i.e. one less than the number of events.
    Chains shorter than three events must carry the StructurallyInvalid flag.
    """

    id: str
    ce_pair_id: str
    generator_model: ModelRef
    events: tuple[Event, ...]
    raw_span: str
    flags: frozenset[ChainFlag] = frozenset()

    def __post_init__(self) -> None:
        if len(self.events) < 3 and ChainFlag.STRUCTURALLY_INVALID not in self.flags:
            raise ValueError(
                f"chain {self.id} has {len(self.events)} events but is not "
                "flagged StructurallyInvalid"
            )

    @property
    def chain_length(self) -> int:
        """Number of links (adjacent event pairs)."""
        return len(self.events) - 1

    @property
    def is_structurally_valid(self) -> bool:
        return ChainFlag.STRUCTURALLY_INVALID not in self.flags

    @property
    def anchor_repaired(self) -> bool:
        return bool(
            self.flags & {ChainFlag.ANCHOR_REPAIRED_HEAD, ChainFlag.ANCHOR_REPAIRED_TAIL}
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "ce_pair_id": self.ce_pair_id,
            "generator_model": self.generator_model.to_dict(),
            "events": [e.to_dict() for e in self.events],
            "raw_span": self.raw_span,
            "flags": sorted(f.value for f in self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "CausalChain":
        return cls(
            id=d["id"],
            ce_pair_id=d["ce_pair_id"],
            generator_model=ModelRef.from_dict(d["generator_model"]),
            events=tuple(Event.from_dict(e) for e in d["events"]),
            raw_span=d["raw_span"],
            flags=frozenset(ChainFlag(f) for f in d.get("flags", [])),
        )


@dataclass(frozen=True)
class IntermediatePair:
    """One directed link within a chain: the probe unit."""

    chain_id: str
    position: int
    cause_event: Event
    effect_event: Event

    def __post_init__(self) -> None:
        if self.position < 0:
            raise ValueError(f"position must be >= 0, got {self.position}")

    @property
    def key(self) -> tuple[str, str]:
        """Direction-sensitive identity: (normalized cause, normalized effect)."""
        return (self.cause_event.normalized, self.effect_event.normalized)

    def to_dict(self) -> dict[str, Any]:
        return {
            "chain_id": self.chain_id,
            "position": self.position,
            "cause_event": self.cause_event.to_dict(),
            "effect_event": self.effect_event.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "IntermediatePair":
        return cls(
            chain_id=d["chain_id"],
            position=d["position"],
            cause_event=Event.from_dict(d["cause_event"]),
            effect_event=Event.from_dict(d["effect_event"]),
        )


# ---------------------------------------------------------------------------
# Canonical serialization helpers
# ---------------------------------------------------------------------------


def canonical_json(value: Any) -> str:
    """Deterministic JSON used for stored records and content hashing."""
    return json.dumps(value, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def content_digest(value: Any) -> str:
    """SHA-256 hex digest of the canonical JSON encoding of ``value``."""
    return hashlib.sha256(canonical_json(value).encode("utf-8")).hexdigest()
