from __future__ import annotations

import re

import pytest

from chainprobe.model import CEPair, Dataset, Event, IntermediatePair, ProbeKind
from chainprobe.prompts import (
    PromptText,
    ResidualSlotMarker,
    TemplateId,
    all_template_versions,
    render_generation_prompt,
    render_probe_prompt,
    render_probe_prompt_texts,
    template_text,
    template_version,
)

GOLDEN_GEN = (
    "A causal chain is a sequence of events in which each event directly causes the next, "
    "forming a connected series of cause-and-effect relations. Unfolding a causal chain means "
    "identifying and linking individual events. A step of the chain presents only one noun "
    "phrase containing the event. Unfold all possible causal chains that connect CO2 emissions "
    "(initial cause) to Ocean acidification (final effect) and separate the steps of the chain "
    "with the token <step>, and the chains with the token <chain>."
)

GOLDEN_PROBES = {
    ProbeKind.A1_ACTIVE: "Answer with 'yes' or 'no' only. Does deforestation cause nutrient loss in the soils?",
    ProbeKind.A2_REVERSED_ACTIVE: "Answer with 'yes' or 'no' only. Does nutrient loss in the soils cause deforestation?",
    ProbeKind.A1_PASSIVE: "Answer with 'yes' or 'no' only. Is nutrient loss in the soils caused by deforestation?",
    ProbeKind.A2_REVERSED_PASSIVE: "Answer with 'yes' or 'no' only. Is deforestation caused by nutrient loss in the soils?",
}


@pytest.fixture
def probe_pair() -> IntermediatePair:
    return IntermediatePair(
        chain_id="c",
        position=0,
        cause_event=Event.from_text("deforestation"),
        effect_event=Event.from_text("nutrient loss in the soils"),
    )


def test_generation_prompt_golden():
    ce = CEPair(
        id="ce-001",
        cause_text="CO2 emissions",
        effect_text="Ocean acidification",
        dataset=Dataset.POLARIS4,
    )
    prompt = render_generation_prompt(ce)
    assert prompt.text == GOLDEN_GEN
    assert prompt.template_id == TemplateId.GEN
    assert prompt.slots == {"cause": "CO2 emissions", "effect": "Ocean acidification"}


def test_generation_prompt_leaves_no_braces():
    ce = CEPair(id="ce-002", cause_text="Business", effect_text="Climate change")
    prompt = render_generation_prompt(ce)
    assert not re.search(r"\{(cause|effect)\}", prompt.text)
    assert "Business (initial cause)" in prompt.text
    assert "Climate change (final effect)" in prompt.text


@pytest.mark.parametrize("kind", list(ProbeKind))
def test_probe_prompts_golden(kind, probe_pair):
    assert render_probe_prompt(kind, probe_pair).text == GOLDEN_PROBES[kind]


def test_probe_prompt_uses_normalized_texts():
    pair = IntermediatePair(
        chain_id="c",
        position=0,
        cause_event=Event.from_text("  Deforestation. "),
        effect_event=Event.from_text("Nutrient LOSS in the soils"),
    )
    prompt = render_probe_prompt(ProbeKind.A1_ACTIVE, pair)
    assert prompt.text == GOLDEN_PROBES[ProbeKind.A1_ACTIVE]


def test_rendering_is_pure(probe_pair):
    a = render_probe_prompt(ProbeKind.A1_PASSIVE, probe_pair)
    b = render_probe_prompt(ProbeKind.A1_PASSIVE, probe_pair)
    assert a.text == b.text and a.slots == b.slots


def test_active_passive_swap_surface_positions_same_direction(probe_pair):
    active = render_probe_prompt(ProbeKind.A1_ACTIVE, probe_pair).text
    passive = render_probe_prompt(ProbeKind.A1_PASSIVE, probe_pair).text
    cause = probe_pair.cause_event.normalized
    effect = probe_pair.effect_event.normalized
    assert active.index(cause) < active.index(effect)
    assert passive.index(effect) < passive.index(cause)


def test_reversed_probes_swap_question_direction(probe_pair):
    forward = render_probe_prompt(ProbeKind.A1_ACTIVE, probe_pair).text
    reverse = render_probe_prompt(ProbeKind.A2_REVERSED_ACTIVE, probe_pair).text
    cause = probe_pair.cause_event.normalized
    effect = probe_pair.effect_event.normalized
    assert forward.endswith(f"Does {cause} cause {effect}?")
    assert reverse.endswith(f"Does {effect} cause {cause}?")


def test_residual_marker_rejected():
    with pytest.raises(ResidualSlotMarker):
        PromptText(text="unfilled {cause}", template_id=TemplateId.A1, slots={})


def test_template_versions_are_content_hashes():
    versions = all_template_versions()
    assert set(versions) == {tid.value for tid in TemplateId}
    for tid in TemplateId:
        assert re.fullmatch(r"[0-9a-f]{12}", template_version(tid))
        assert "{cause}" in template_text(tid) and "{effect}" in template_text(tid)
    assert len(set(versions.values())) == len(versions)


def test_probe_texts_helper_matches_pair_rendering(probe_pair):
    for kind in ProbeKind:
        via_pair = render_probe_prompt(kind, probe_pair)
        via_texts = render_probe_prompt_texts(
            kind, probe_pair.cause_event.normalized, probe_pair.effect_event.normalized
        )
        assert via_pair == via_texts
