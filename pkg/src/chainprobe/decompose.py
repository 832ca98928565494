"""Splits chains into intermediate pairs and maintains the unique-pair index.

Probing happens once per unique (normalized cause, normalized effect) key;
the index keeps every (chain, position) occurrence so per-chain metrics can
be rebuilt from per-unique-pair verdicts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

from .model import CausalChain, ChainFlag, ChainProbeError, IntermediatePair

PairKey = tuple[str, str]


class StructurallyInvalidChain(ChainProbeError):
    """Decomposition requested on a chain flagged StructurallyInvalid."""


def decompose_chain(chain: CausalChain) -> list[IntermediatePair]:
    """Adjacent-window split: link t connects events[t] and events[t+1]."""
    if ChainFlag.STRUCTURALLY_INVALID in chain.flags:
        raise StructurallyInvalidChain(f"chain {chain.id} is flagged StructurallyInvalid")
    return [
        IntermediatePair(
            chain_id=chain.id,
            position=t,
            cause_event=chain.events[t],
            effect_event=chain.events[t + 1],
        )
        for t in range(chain.chain_length)
    ]


@dataclass(frozen=True)
class UniquePairRecord:
    """One deduplicated directed link, identified by normalized texts."""

    cause_text: str
    effect_text: str

    @property
    def key(self) -> PairKey:
        return (self.cause_text, self.effect_text)

    def to_dict(self) -> dict[str, Any]:
        return {"cause_text": self.cause_text, "effect_text": self.effect_text}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "UniquePairRecord":
        return cls(cause_text=d["cause_text"], effect_text=d["effect_text"])


@dataclass
class PairIndex:
    """Unique directed pairs with their (chain, position) occurrences."""

    unique_pairs: dict[PairKey, UniquePairRecord] = field(default_factory=dict)
    occurrences: dict[PairKey, list[tuple[str, int]]] = field(default_factory=dict)

    def add(self, pair: IntermediatePair) -> None:
        key = pair.key
        if key not in self.unique_pairs:
            self.unique_pairs[key] = UniquePairRecord(
                cause_text=pair.cause_event.normalized,
                effect_text=pair.effect_event.normalized,
            )
            self.occurrences[key] = []
        self.occurrences[key].append((pair.chain_id, pair.position))

    @property
    def unique_count(self) -> int:
        return len(self.unique_pairs)

    @property
    def occurrence_count(self) -> int:
        return sum(len(v) for v in self.occurrences.values())

    def sorted_keys(self) -> list[PairKey]:
        return sorted(self.unique_pairs)

    def chain_links(self, chain_id: str) -> list[tuple[int, PairKey]]:
        """Reconstruct a chain's (position, pair key) list from occurrences."""
        found = [
            (position, key)
            for key, occ in self.occurrences.items()
            for cid, position in occ
            if cid == chain_id
        ]
        return sorted(found)

    def to_records(self) -> list[dict[str, Any]]:
        """Stable, serializable view: one record per unique pair."""
        records = []
        for key in self.sorted_keys():
            record = self.unique_pairs[key].to_dict()
            record["occurrences"] = [
                {"chain_id": cid, "position": pos} for cid, pos in sorted(self.occurrences[key])
            ]
            records.append(record)
        return records

    @classmethod
    def from_records(cls, records: Iterable[dict[str, Any]]) -> "PairIndex":
        index = cls()
        for record in records:
            unique = UniquePairRecord.from_dict(record)
            index.unique_pairs[unique.key] = unique
            index.occurrences[unique.key] = [
                (occ["chain_id"], occ["position"]) for occ in record.get("occurrences", [])
            ]
        return index


def build_pair_index(chains: Iterable[CausalChain]) -> PairIndex:
    """Index every decomposable chain; StructurallyInvalid chains are skipped."""
    index = PairIndex()
    for chain in chains:
        if ChainFlag.STRUCTURALLY_INVALID in chain.flags:
            continue
        for pair in decompose_chain(chain):
            index.add(pair)
    return index
