from __future__ import annotations

import pytest

from chainprobe.model import (
    CausalChain,
    CEPair,
    ChainFlag,
    Event,
    ModelRef,
)


@pytest.fixture
def model_ref() -> ModelRef:
    return ModelRef(provider="replay", model_name="mock-alpha")


@pytest.fixture
def ce_pair() -> CEPair:
    return CEPair(id="ce-test", cause_text="deforestation", effect_text="monoculture")


def make_chain(
    event_texts: list[str],
    *,
    ce_pair_id: str = "ce-test",
    chain_id: str = "chain-0",
    model: ModelRef | None = None,
    flags: frozenset[ChainFlag] = frozenset(),
) -> CausalChain:
    return CausalChain(
        id=chain_id,
        ce_pair_id=ce_pair_id,
        generator_model=model or ModelRef(provider="replay", model_name="mock-alpha"),
        events=tuple(Event.from_text(t) for t in event_texts),
        raw_span=" <step> ".join(event_texts),
        flags=flags,
    )
