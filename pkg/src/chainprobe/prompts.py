"""Prompt catalog: renders the five checked-in templates bit-exactly.

Templates live as UTF-8 text assets under ``templates/``, one per template
id, with ``{cause}`` / ``{effect}`` slot markers. Rendering is a pure
string substitution; downstream consistency metrics depend on the rendered
text being byte-stable, so templates are never edited at runtime and every
template carries a content-hash version id.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from importlib import resources
from typing import Any

from .model import CEPair, ChainProbeError, IntermediatePair, ProbeKind


class TemplateId(str, Enum):
    GEN = "Gen"
    A1 = "A1"
    A2 = "A2"
    A1P = "A1P"
    A2P = "A2P"


_TEMPLATE_FILES = {
    TemplateId.GEN: "gen.txt",
    TemplateId.A1: "a1.txt",
    TemplateId.A2: "a2.txt",
    TemplateId.A1P: "a1p.txt",
    TemplateId.A2P: "a2p.txt",
}

_PROBE_TEMPLATE = {
    ProbeKind.A1_ACTIVE: TemplateId.A1,
    ProbeKind.A2_REVERSED_ACTIVE: TemplateId.A2,
    ProbeKind.A1_PASSIVE: TemplateId.A1P,
    ProbeKind.A2_REVERSED_PASSIVE: TemplateId.A2P,
}

_SLOT_MARKERS = ("{cause}", "{effect}")


class ResidualSlotMarker(ChainProbeError):
    """A rendered prompt still contains an unfilled slot marker."""


@dataclass(frozen=True)
class PromptText:
    """A fully rendered prompt plus the slot values that produced it."""

    text: str
    template_id: TemplateId
    slots: dict[str, str]

    def __post_init__(self) -> None:
        for marker in _SLOT_MARKERS:
            if marker in self.text:
                raise ResidualSlotMarker(f"unfilled slot {marker} in rendered prompt")

    def to_dict(self) -> dict[str, Any]:
        return {
            "text": self.text,
            "template_id": self.template_id.value,
            "slots": dict(self.slots),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PromptText":
        return cls(text=d["text"], template_id=TemplateId(d["template_id"]), slots=d["slots"])


@lru_cache(maxsize=None)
def template_text(template_id: TemplateId) -> str:
    """Raw template bytes as checked in, decoded as UTF-8."""
    name = _TEMPLATE_FILES[template_id]
    return resources.files("chainprobe.templates").joinpath(name).read_text("utf-8")


@lru_cache(maxsize=None)
def template_version(template_id: TemplateId) -> str:
    """Content-hash version of a template; changes iff the asset bytes change."""
    digest = hashlib.sha256(template_text(template_id).encode("utf-8")).hexdigest()
    return digest[:12]


def all_template_versions() -> dict[str, str]:
    return {tid.value: template_version(tid) for tid in TemplateId}


def _render(template_id: TemplateId, cause: str, effect: str) -> PromptText:
    text = template_text(template_id).replace("{cause}", cause).replace("{effect}", effect)
    return PromptText(text=text, template_id=template_id, slots={"cause": cause, "effect": effect})


def render_generation_prompt(ce: CEPair) -> PromptText:
    """Fill the chain-generation template with the pair's anchor texts."""
    return _render(TemplateId.GEN, ce.cause_text, ce.effect_text)


def render_probe_prompt_texts(kind: ProbeKind, cause_text: str, effect_text: str) -> PromptText:
    """Fill a probe template from already-normalized link texts.

    ``cause_text`` is always the earlier event of the link and ``effect_text``
    the later one; the template itself encodes surface order and question
    direction for the given probe kind.
    """
    return _render(_PROBE_TEMPLATE[kind], cause_text, effect_text)


def render_probe_prompt(kind: ProbeKind, pair: IntermediatePair) -> PromptText:
    """Render the yes/no probe for one intermediate pair.

    Uses the normalized event texts so that links deduplicated under
    normalization always produce byte-identical prompts.
    """
    return render_probe_prompt_texts(
        kind, pair.cause_event.normalized, pair.effect_event.normalized
    )
