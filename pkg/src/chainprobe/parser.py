"""Parses raw generation output into validated chains.

The target grammar is events separated by <step> and chains separated by
<chain>, but real model output drifts: intros, chain labels, numbered lists,
HTML-escaped separators, trailing commentary. Every tolerated deviation is
recorded as a ChainIssue so repaired output stays auditable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .model import (
    CausalChain,
    CEPair,
    ChainFlag,
    ChainProbeError,
    Event,
    ModelRef,
    content_digest,
    normalize_event_text,
    EmptyAfterNormalization,
)

# Chains beyond this many events are treated as degenerate output, not data.
MAX_CHAIN_EVENTS = 600

_STEP_SEP = re.compile(r"(?:<|&lt;)\s*step\s*(?:>|&gt;)", re.IGNORECASE)
_CHAIN_SEP = re.compile(r"(?:<|&lt;)\s*chain\s*(?:>|&gt;)", re.IGNORECASE)
_CHAIN_LABEL = re.compile(r"^\s*(?:(?:causal\s+)?chains?\s*#?\d*|\d+)\s*:\s*", re.IGNORECASE)
_STEP_LABEL = re.compile(r"^\s*steps?\s*#?\d+\s*:\s*", re.IGNORECASE)
_WHITESPACE = re.compile(r"\s+")
_BULLET_MARKER = re.compile(r"^(?:[-*•–—>]+\s*)+")
_NUMBER_MARKER = re.compile(r"^\(?\d{1,3}[.)]\s+")
_EDGE_PUNCT = "\"'`´“”‘’.…"


class NoChainsFound(ChainProbeError):
    """The output contains no parseable chain segment at all."""


class IssueCode(str, Enum):
    PREAMBLE_STRIPPED = "PreambleStripped"
    EMPTY_STEP = "EmptyStep"
    TOO_SHORT = "TooShort"
    ANCHOR_REPAIRED_HEAD = "AnchorRepairedHead"
    ANCHOR_REPAIRED_TAIL = "AnchorRepairedTail"
    REPEATED_EVENT = "RepeatedEvent"
    UNPARSEABLE_SEGMENT = "UnparseableSegment"


@dataclass(frozen=True)
class ChainIssue:
    code: IssueCode
    chain_index: int | None = None
    detail: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {"code": self.code.value, "chain_index": self.chain_index, "detail": self.detail}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ChainIssue":
        return cls(code=IssueCode(d["code"]), chain_index=d.get("chain_index"), detail=d.get("detail", ""))


@dataclass(frozen=True)
class ParsedChainSet:
    """All chains recovered from one generation call, plus parse diagnostics.

    ``n_chains`` counts structurally valid chains only; flagged-invalid chains
    are kept for auditing but excluded from that count.
    """

    ce_pair_id: str
    generator_model: ModelRef
    chains: tuple[CausalChain, ...]
    issues: tuple[ChainIssue, ...]

    @property
    def n_chains(self) -> int:
        return sum(1 for c in self.chains if c.is_structurally_valid)

    def to_dict(self) -> dict[str, Any]:
        return {
            "ce_pair_id": self.ce_pair_id,
            "generator_model": self.generator_model.to_dict(),
            "chains": [c.to_dict() for c in self.chains],
            "issues": [i.to_dict() for i in self.issues],
            "n_chains": self.n_chains,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ParsedChainSet":
        return cls(
            ce_pair_id=d["ce_pair_id"],
            generator_model=ModelRef.from_dict(d["generator_model"]),
            chains=tuple(CausalChain.from_dict(c) for c in d["chains"]),
            issues=tuple(ChainIssue.from_dict(i) for i in d.get("issues", [])),
        )


def trim_event_surface(text: str) -> str:
    """Case-preserving edge cleanup mirroring normalize_event_text.

    Returns the empty string (it never raises) when nothing survives.
    """
    s = _WHITESPACE.sub(" ", text).strip()
    while True:
        before = s
        s = _BULLET_MARKER.sub("", s)
        s = _NUMBER_MARKER.sub("", s)
        s = s.strip(_EDGE_PUNCT).strip()
        if s == before:
            return s


def _safe_normalize(text: str) -> str:
    try:
        return normalize_event_text(text)
    except EmptyAfterNormalization:
        return ""


def _clip(text: str, limit: int = 80) -> str:
    text = text.strip()
    return text if len(text) <= limit else text[: limit - 1] + "…"


def _last_content_line(piece: str) -> tuple[str, str]:
    """Split a first event piece into (dropped prose, kept last line)."""
    lines = [ln for ln in piece.splitlines() if ln.strip()]
    if len(lines) <= 1:
        return "", piece
    return "\n".join(lines[:-1]), lines[-1]


def _first_content_line(piece: str) -> tuple[str, str]:
    """Split a final event piece into (kept first line, dropped trailing prose)."""
    lines = [ln for ln in piece.splitlines() if ln.strip()]
    if len(lines) <= 1:
        return piece, ""
    return lines[0], "\n".join(lines[1:])


@dataclass
class _SegmentResult:
    events: list[Event] = field(default_factory=list)
    issues: list[ChainIssue] = field(default_factory=list)
    preamble: str = ""  # prose removed ahead of the first event


def _parse_segment(segment: str, chain_index: int) -> _SegmentResult:
    result = _SegmentResult()
    pieces = _STEP_SEP.split(segment)
    if len(pieces) > MAX_CHAIN_EVENTS:
        result.issues.append(
            ChainIssue(
                IssueCode.UNPARSEABLE_SEGMENT,
                chain_index,
                f"segment with {len(pieces)} events exceeds the {MAX_CHAIN_EVENTS}-event cap",
            )
        )
        return result

    for position, piece in enumerate(pieces):
        if position == 0:
            dropped, piece = _last_content_line(piece)
            if dropped.strip():
                result.preamble = dropped
            label_match = _CHAIN_LABEL.match(piece)
            if label_match and piece[label_match.end() :].strip():
                result.issues.append(
                    ChainIssue(
                        IssueCode.PREAMBLE_STRIPPED,
                        chain_index,
                        f"chain label removed: {_clip(label_match.group(0))}",
                    )
                )
                piece = piece[label_match.end() :]
        if position == len(pieces) - 1 and position > 0:
            piece, dropped = _first_content_line(piece)
            if dropped.strip():
                result.issues.append(
                    ChainIssue(
                        IssueCode.UNPARSEABLE_SEGMENT,
                        chain_index,
                        f"trailing prose after final step dropped: {_clip(dropped)}",
                    )
                )
        # "Step 2:" prefixes are numbering noise, same as list markers.
        piece = _STEP_LABEL.sub("", piece)
        surface = trim_event_surface(piece)
        if not surface or not _safe_normalize(surface):
            result.issues.append(
                ChainIssue(IssueCode.EMPTY_STEP, chain_index, f"empty step at position {position}")
            )
            continue
        result.events.append(Event.from_text(surface))
    return result


def _segments_of(raw: str) -> tuple[list[str], list[ChainIssue]]:
    """Split raw output into chain segments.

    With no <chain> token present, falls back to one-chain-per-line when
    multiple lines each carry at least two step tokens (numbered-list drift).
    """
    if _CHAIN_SEP.search(raw):
        return [s for s in _CHAIN_SEP.split(raw) if s.strip()], []
    lines = raw.splitlines()
    step_lines = [ln for ln in lines if len(_STEP_SEP.findall(ln)) >= 2]
    if len(step_lines) < 2:
        return [raw], []
    issues: list[ChainIssue] = []
    first_step_at = lines.index(step_lines[0])
    for i, ln in enumerate(lines):
        if ln in step_lines or not ln.strip():
            continue
        code = IssueCode.PREAMBLE_STRIPPED if i < first_step_at else IssueCode.UNPARSEABLE_SEGMENT
        issues.append(ChainIssue(code, None, f"non-chain line dropped: {_clip(ln)}"))
    return step_lines, issues


def parse_generation_output(raw: str, ce: CEPair, model: ModelRef) -> ParsedChainSet:
    """Parse one generation reply into chains anchored to ``ce``.

    Missing anchors are repaired (prepended/appended) and flagged; segments
    that still have fewer than three events are kept but flagged TooShort and
    StructurallyInvalid. Raises NoChainsFound when no segment yields at least
    one event.
    """
    if not _STEP_SEP.search(raw):
        raise NoChainsFound(f"no step separators anywhere in output: {_clip(raw)}")

    segments, issues = _segments_of(raw)

    cause_norm = normalize_event_text(ce.cause_text)
    effect_norm = normalize_event_text(ce.effect_text)

    chains: list[CausalChain] = []
    seen_step_segment = False
    for segment in segments:
        if not _STEP_SEP.search(segment):
            code = IssueCode.PREAMBLE_STRIPPED if not seen_step_segment else IssueCode.UNPARSEABLE_SEGMENT
            if segment.strip():
                issues.append(ChainIssue(code, None, f"segment without steps dropped: {_clip(segment)}"))
            continue
        seen_step_segment = True

        chain_index = len(chains)
        parsed = _parse_segment(segment, chain_index)
        if parsed.preamble:
            issues.append(
                ChainIssue(
                    IssueCode.PREAMBLE_STRIPPED,
                    chain_index if chains else None,
                    f"prose before first event dropped: {_clip(parsed.preamble)}",
                )
            )
        if not parsed.events:
            # The segment consumed no chain slot, so detach its diagnostics
            # from the candidate index.
            issues.extend(
                ChainIssue(i.code, None, i.detail) for i in parsed.issues
            )
            continue
        issues.extend(parsed.issues)

        events = list(parsed.events)
        flags: set[ChainFlag] = set()
        if events[0].normalized != cause_norm:
            events.insert(0, ce.cause_event)
            flags.add(ChainFlag.ANCHOR_REPAIRED_HEAD)
            issues.append(
                ChainIssue(IssueCode.ANCHOR_REPAIRED_HEAD, chain_index, "cause anchor prepended")
            )
        if events[-1].normalized != effect_norm:
            events.append(ce.effect_event)
            flags.add(ChainFlag.ANCHOR_REPAIRED_TAIL)
            issues.append(
                ChainIssue(IssueCode.ANCHOR_REPAIRED_TAIL, chain_index, "effect anchor appended")
            )
        if len(events) < 3:
            flags.add(ChainFlag.STRUCTURALLY_INVALID)
            issues.append(
                ChainIssue(
                    IssueCode.TOO_SHORT, chain_index, f"{len(events)} events after repair (need 3)"
                )
            )
        normalized_seq = [e.normalized for e in events]
        repeated = sorted({n for n in normalized_seq if normalized_seq.count(n) > 1})
        if repeated:
            flags.add(ChainFlag.CONTAINS_REPEATED_EVENT)
            for text in repeated:
                issues.append(ChainIssue(IssueCode.REPEATED_EVENT, chain_index, f"event repeats: {text}"))

        chain_id = content_digest([ce.id, model.key(), normalized_seq, chain_index])[:16]
        chains.append(
            CausalChain(
                id=chain_id,
                ce_pair_id=ce.id,
                generator_model=model,
                events=tuple(events),
                raw_span=segment.strip(),
                flags=frozenset(flags),
            )
        )

    if not chains:
        raise NoChainsFound(f"no segment yielded any event: {_clip(raw)}")
    return ParsedChainSet(
        ce_pair_id=ce.id, generator_model=model, chains=tuple(chains), issues=tuple(issues)
    )


def validate_chain(chain: CausalChain, ce: CEPair) -> list[ChainIssue]:
    """Re-derive the structural issues of a chain against its anchors.

    Pure function of its inputs; repair flags already on the chain are
    reported so repaired chains stay visible in audits.
    """
    issues: list[ChainIssue] = []
    cause_norm = normalize_event_text(ce.cause_text)
    effect_norm = normalize_event_text(ce.effect_text)

    if ChainFlag.ANCHOR_REPAIRED_HEAD in chain.flags:
        issues.append(ChainIssue(IssueCode.ANCHOR_REPAIRED_HEAD, None, "head anchor was repaired"))
    elif not chain.events or chain.events[0].normalized != cause_norm:
        issues.append(ChainIssue(IssueCode.ANCHOR_REPAIRED_HEAD, None, "first event does not match cause anchor"))

    if ChainFlag.ANCHOR_REPAIRED_TAIL in chain.flags:
        issues.append(ChainIssue(IssueCode.ANCHOR_REPAIRED_TAIL, None, "tail anchor was repaired"))
    elif not chain.events or chain.events[-1].normalized != effect_norm:
        issues.append(ChainIssue(IssueCode.ANCHOR_REPAIRED_TAIL, None, "last event does not match effect anchor"))

    if len(chain.events) < 3:
        issues.append(ChainIssue(IssueCode.TOO_SHORT, None, f"{len(chain.events)} events (need 3)"))

    normalized_seq = [e.normalized for e in chain.events]
    for text in sorted({n for n in normalized_seq if normalized_seq.count(n) > 1}):
        issues.append(ChainIssue(IssueCode.REPEATED_EVENT, None, f"event repeats: {text}"))

    for position, event in enumerate(chain.events):
        if not event.normalized:
            issues.append(ChainIssue(IssueCode.EMPTY_STEP, None, f"empty event at position {position}"))

    return issues


def chain_set_to_text(chain_set: ParsedChainSet) -> str:
    """Serialize chains back to separator grammar (round-trip inverse of parse)."""
    return " <chain> ".join(
        " <step> ".join(event.text for event in chain.events) for chain in chain_set.chains
    )
