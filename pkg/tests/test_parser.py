from __future__ import annotations

import pytest
from hypothesis import given, settings, strategies as st

from chainprobe.model import CEPair, ChainFlag, ModelRef
from chainprobe.parser import (
    ChainIssue,
    IssueCode,
    MAX_CHAIN_EVENTS,
    NoChainsFound,
    ParsedChainSet,
    chain_set_to_text,
    parse_generation_output,
    trim_event_surface,
    validate_chain,
)

from conftest import make_chain

MODEL = ModelRef(provider="replay", model_name="mock-alpha")
CE = CEPair(id="ce-test", cause_text="alpha event", effect_text="omega event")


def parse(raw, ce=CE):
    return parse_generation_output(raw, ce, MODEL)


def events_of(chain):
    return [e.normalized for e in chain.events]


class TestGrammar:
    def test_two_chains_with_preamble(self):
        raw = (
            "Here are chains:\nalpha event <step> beta event <step> omega event "
            "<chain> alpha event <step> delta event <step> omega event"
        )
        result = parse(raw)
        assert len(result.chains) == 2
        assert events_of(result.chains[0]) == ["alpha event", "beta event", "omega event"]
        assert events_of(result.chains[1]) == ["alpha event", "delta event", "omega event"]
        assert any(i.code == IssueCode.PREAMBLE_STRIPPED for i in result.issues)
        assert result.n_chains == 2
        assert not result.chains[0].flags

    def test_head_anchor_repair(self):
        result = parse("beta event <step> omega event")
        chain = result.chains[0]
        assert events_of(chain) == ["alpha event", "beta event", "omega event"]
        assert chain.flags == {ChainFlag.ANCHOR_REPAIRED_HEAD}
        assert any(i.code == IssueCode.ANCHOR_REPAIRED_HEAD for i in result.issues)

    def test_tail_anchor_repair(self):
        result = parse("alpha event <step> beta event <step> gamma event")
        chain = result.chains[0]
        assert events_of(chain)[-1] == "omega event"
        assert chain.flags == {ChainFlag.ANCHOR_REPAIRED_TAIL}

    def test_refusal_text_raises(self):
        with pytest.raises(NoChainsFound):
            parse("I cannot produce causal chains for this request.")

    def test_chain_tokens_but_no_steps_raises(self):
        with pytest.raises(NoChainsFound):
            parse("alpha event <chain> omega event")

    def test_too_short_flagged_not_dropped(self):
        result = parse("alpha event <step> omega event")
        chain = result.chains[0]
        assert ChainFlag.STRUCTURALLY_INVALID in chain.flags
        assert any(i.code == IssueCode.TOO_SHORT for i in result.issues)
        assert result.n_chains == 0

    def test_repeated_event_kept_and_flagged(self):
        raw = (
            "alpha event <step> industrialization <step> enhanced greenhouse effect "
            "<step> alpha event <step> overconsumption <step> omega event"
        )
        result = parse(raw)
        chain = result.chains[0]
        assert ChainFlag.CONTAINS_REPEATED_EVENT in chain.flags
        assert chain.is_structurally_valid
        assert any(i.code == IssueCode.REPEATED_EVENT for i in result.issues)

    def test_empty_steps_dropped_with_issue(self):
        result = parse("alpha event <step> <step> beta event <step> omega event")
        assert events_of(result.chains[0]) == ["alpha event", "beta event", "omega event"]
        assert any(i.code == IssueCode.EMPTY_STEP for i in result.issues)


class TestFormattingDrift:
    def test_separator_case_and_whitespace(self):
        result = parse("alpha event < STEP > beta event <Step> omega event")
        assert events_of(result.chains[0]) == ["alpha event", "beta event", "omega event"]

    def test_html_escaped_separators(self):
        result = parse("alpha event &lt;step&gt; beta event &lt;step&gt; omega event")
        assert events_of(result.chains[0]) == ["alpha event", "beta event", "omega event"]

    def test_numbered_list_fallback(self):
        raw = (
            "Possible chains:\n"
            "1. alpha event <step> beta event <step> omega event\n"
            "2. alpha event <step> delta event <step> omega event\n"
        )
        result = parse(raw)
        assert len(result.chains) == 2
        assert events_of(result.chains[1]) == ["alpha event", "delta event", "omega event"]

    def test_single_line_no_fallback(self):
        raw = "alpha event <step> beta event <step> omega event"
        result = parse(raw)
        assert len(result.chains) == 1

    def test_chain_labels_stripped(self):
        raw = (
            "Chain 1: alpha event <step> beta event <step> omega event <chain> "
            "Chain 2: alpha event <step> delta event <step> omega event"
        )
        result = parse(raw)
        assert len(result.chains) == 2
        assert all(events_of(c)[0] == "alpha event" for c in result.chains)
        assert not any(c.anchor_repaired for c in result.chains)

    def test_trailing_prose_trimmed(self):
        raw = "alpha event <step> beta event <step> omega event\nI hope these chains help!"
        result = parse(raw)
        assert events_of(result.chains[0]) == ["alpha event", "beta event", "omega event"]
        assert any(i.code == IssueCode.UNPARSEABLE_SEGMENT for i in result.issues)

    def test_list_markers_trimmed_from_events(self):
        result = parse("alpha event <step> - beta event <step> 3. omega event")
        assert events_of(result.chains[0]) == ["alpha event", "beta event", "omega event"]

    def test_step_labels_trimmed_from_events(self):
        result = parse("Step 1: alpha event <step> Step 2: beta event <step> Step 3: omega event")
        assert events_of(result.chains[0]) == ["alpha event", "beta event", "omega event"]
        assert not result.chains[0].anchor_repaired

    def test_oversized_segment_rejected(self):
        raw = " <step> ".join(f"event {i}" for i in range(MAX_CHAIN_EVENTS + 2))
        result_raw = raw + " <chain> alpha event <step> beta event <step> omega event"
        result = parse(result_raw)
        assert len(result.chains) == 1
        assert any(
            i.code == IssueCode.UNPARSEABLE_SEGMENT and "cap" in i.detail for i in result.issues
        )

    def test_degenerate_523_step_chain_accepted(self):
        events = ["alpha event"] + [f"middle {i}" for i in range(522)] + ["omega event"]
        result = parse(" <step> ".join(events))
        assert result.chains[0].chain_length == 523
        assert result.n_chains == 1


class TestValidateChain:
    def test_clean_chain_no_issues(self):
        chain = make_chain(["alpha event", "beta event", "omega event"])
        assert validate_chain(chain, CE) == []

    def test_too_short(self):
        chain = make_chain(
            ["alpha event", "omega event"], flags=frozenset({ChainFlag.STRUCTURALLY_INVALID})
        )
        codes = {i.code for i in validate_chain(chain, CE)}
        assert codes == {IssueCode.TOO_SHORT}

    def test_repeated_event_reported(self):
        chain = make_chain(
            [
                "alpha event",
                "industrialization",
                "fossil fuel combustion",
                "enhanced greenhouse effect",
                "alpha event",
                "overconsumption",
                "resource depletion",
                "environmental degradation",
                "omega event",
            ],
            flags=frozenset({ChainFlag.CONTAINS_REPEATED_EVENT}),
        )
        codes = [i.code for i in validate_chain(chain, CE)]
        assert codes == [IssueCode.REPEATED_EVENT]

    def test_anchor_mismatch_reported(self):
        chain = make_chain(["beta event", "gamma event", "delta event"])
        codes = {i.code for i in validate_chain(chain, CE)}
        assert codes == {IssueCode.ANCHOR_REPAIRED_HEAD, IssueCode.ANCHOR_REPAIRED_TAIL}


class TestRoundTrip:
    def test_simple_round_trip(self):
        raw = (
            "alpha event <step> beta event <step> omega event <chain> "
            "alpha event <step> delta event <step> gamma event <step> omega event"
        )
        first = parse(raw)
        second = parse(chain_set_to_text(first))
        assert [events_of(c) for c in first.chains] == [events_of(c) for c in second.chains]
        assert [c.flags for c in first.chains] == [c.flags for c in second.chains]
        assert [c.id for c in first.chains] == [c.id for c in second.chains]

    EVENT_TEXT = st.text(
        alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"), max_codepoint=0x2FF),
        min_size=1,
        max_size=12,
    ).filter(lambda s: trim_event_surface(s) != "")

    @given(
        middles=st.lists(
            st.lists(EVENT_TEXT, min_size=1, max_size=4), min_size=1, max_size=4
        )
    )
    @settings(max_examples=50, deadline=None)
    def test_round_trip_property(self, middles):
        chains_text = " <chain> ".join(
            " <step> ".join([CE.cause_text, *middle, CE.effect_text]) for middle in middles
        )
        first = parse(chains_text)
        second = parse(chain_set_to_text(first))
        assert [events_of(c) for c in first.chains] == [events_of(c) for c in second.chains]
        assert first.n_chains == second.n_chains


@given(text=st.text(max_size=80))
@settings(max_examples=200, deadline=None)
def test_surface_trim_preserves_normalization(text):
    """trim_event_surface keeps case but never changes the normalized form."""
    from chainprobe.model import EmptyAfterNormalization, normalize_event_text

    trimmed = trim_event_surface(text)
    try:
        expected = normalize_event_text(text)
    except EmptyAfterNormalization:
        assert trimmed == ""
        return
    assert normalize_event_text(trimmed) == expected


@given(raw=st.text(max_size=400))
@settings(max_examples=200, deadline=None)
def test_parser_never_crashes(raw):
    try:
        result = parse_generation_output(raw, CE, MODEL)
    except NoChainsFound:
        return
    assert isinstance(result, ParsedChainSet)
    for chain in result.chains:
        assert all(e.normalized for e in chain.events)
        assert chain.events[0].normalized == "alpha event"
        assert chain.events[-1].normalized == "omega event" or not chain.is_structurally_valid


def test_issue_round_trip():
    issue = ChainIssue(IssueCode.EMPTY_STEP, 3, "detail")
    assert ChainIssue.from_dict(issue.to_dict()) == issue


def test_chain_set_serialization_round_trip():
    raw = (
        "Intro:\nbeta event <step> gamma event <chain> "
        "alpha event <step> delta event <step> omega event"
    )
    parsed = parse(raw)
    restored = ParsedChainSet.from_dict(parsed.to_dict())
    assert restored == parsed
    assert restored.n_chains == parsed.n_chains
