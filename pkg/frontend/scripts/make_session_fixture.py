#!/usr/bin/env python3
"""Regenerates tests/fixtures/session_6items.json: a servable annotation
session with 6 chain-pair items, 4 annotators, and 4 raters per chain
(each annotator is assigned all 6 items, the standard per-annotator load).
"""

from __future__ import annotations

import json
from pathlib import Path

from chainprobe.humaneval import EvalSample, assign_annotators
from chainprobe.service import default_instructions

HERE = Path(__file__).parent.parent

CHAIN_EVENTS = {
    "web-ce-00-m": ["Deforestation", "Loss of tree cover", "Soil erosion", "Nutrient loss in the soils"],
    "web-ce-00-v": ["Deforestation", "Timber exports", "Nutrient loss in the soils"],
    "web-ce-01-m": ["CO2 emissions", "Ocean uptake of CO2", "Carbonic acid formation", "Ocean acidification"],
    "web-ce-01-v": ["CO2 emissions", "Warmer winters", "Ocean acidification"],
    "web-ce-02-m": ["Climate change", "Earlier seasonal changes", "Mismatched reproductive cycles", "Population decline"],
    "web-ce-02-v": ["Climate change", "Public debate", "Population decline"],
    "web-ce-03-m": ["Business", "Industrial production", "Fossil fuel combustion", "Climate change"],
    "web-ce-03-v": ["Business", "Office buildings", "Climate change"],
    "web-ce-04-m": ["Melting ice", "Lower surface reflectivity", "More absorbed solar energy", "Further warming"],
    "web-ce-04-v": ["Melting ice", "New shipping routes", "Further warming"],
    "web-ce-05-m": ["Air pollution", "Tree damage", "Weakened forests", "Harm to trees"],
    "web-ce-05-v": ["Air pollution", "Smog alerts", "Harm to trees"],
}


def main() -> None:
    samples = [
        EvalSample(
            ce_pair_id=f"web-ce-{i:02d}",
            maintained_chain_id=f"web-ce-{i:02d}-m",
            violated_chain_id=f"web-ce-{i:02d}-v",
            agreement_scores=(6 - (i % 3), 5),
            length_delta=1,
        )
        for i in range(6)
    ]
    annotators = [f"anno-{i:02d}" for i in range(1, 5)]
    plan = assign_annotators(samples, annotators, 4, max_items_per_annotator=6, seed=17)
    payload = {
        "samples": [s.to_dict() for s in samples],
        "plan": plan.to_dict(),
        "chains": {
            chain_id: {"chain_id": chain_id, "events": events}
            for chain_id, events in CHAIN_EVENTS.items()
        },
        "instructions": default_instructions(),
    }
    out = HERE / "tests" / "fixtures" / "session_6items.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
