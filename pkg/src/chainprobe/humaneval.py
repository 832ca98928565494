"""Human evaluation protocol: sample curation, annotator assignment,
majority voting, and agreement statistics.

The judgment capture HTTP API lives in ``service``; this module is the pure
logic underneath it and is fully usable offline via CSV import/export.
"""

from __future__ import annotations

import csv
import io
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Iterable, Mapping, Sequence

from .metrics import KappaResult, fleiss_kappa
from .model import CausalChain, ChainProbeError

DEFAULT_CE_SAMPLE_COUNT = 18
DEFAULT_RATERS_PER_CHAIN = 4
DEFAULT_MAX_ITEMS_PER_ANNOTATOR = 6


class InsufficientEligiblePairs(ChainProbeError):
    def __init__(self, found: int, requested: int):
        super().__init__(f"only {found} eligible CE pairs, {requested} requested")
        self.found = found
        self.requested = requested


class InfeasibleAssignment(ChainProbeError):
    pass


class WrongJudgmentCount(ChainProbeError):
    pass


class IncompleteJudgments(ChainProbeError):
    def __init__(self, missing: list[str]):
        super().__init__(f"{len(missing)} chain(s) lack complete judgments: {missing[:5]}")
        self.missing = missing


class NotAssigned(ChainProbeError):
    pass


class SessionClosed(ChainProbeError):
    pass


class DuplicateSubmission(ChainProbeError):
    pass


class SessionIncomplete(ChainProbeError):
    pass


# ---------------------------------------------------------------------------
# Domain records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EvalSample:
    """One curated CE pair: its most agreed-upon maintained and violated chains."""

    ce_pair_id: str
    maintained_chain_id: str
    violated_chain_id: str
    agreement_scores: tuple[int, int]  # (maintained votes, violated votes)
    length_delta: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "ce_pair_id": self.ce_pair_id,
            "maintained_chain_id": self.maintained_chain_id,
            "violated_chain_id": self.violated_chain_id,
            "agreement_scores": list(self.agreement_scores),
            "length_delta": self.length_delta,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EvalSample":
        return cls(
            ce_pair_id=d["ce_pair_id"],
            maintained_chain_id=d["maintained_chain_id"],
            violated_chain_id=d["violated_chain_id"],
            agreement_scores=(d["agreement_scores"][0], d["agreement_scores"][1]),
            length_delta=d["length_delta"],
        )


@dataclass(frozen=True)
class AnnotationRecord:
    """One annotator's judgment of one chain within a session."""

    session_id: str
    annotator_id: str
    chain_id: str
    integrity_judgment: bool
    coherence_judgment: bool
    submitted_at: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "session_id": self.session_id,
            "annotator_id": self.annotator_id,
            "chain_id": self.chain_id,
            "integrity_judgment": self.integrity_judgment,
            "coherence_judgment": self.coherence_judgment,
            "submitted_at": self.submitted_at,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AnnotationRecord":
        return cls(
            session_id=d["session_id"],
            annotator_id=d["annotator_id"],
            chain_id=d["chain_id"],
            integrity_judgment=bool(d["integrity_judgment"]),
            coherence_judgment=bool(d["coherence_judgment"]),
            submitted_at=d["submitted_at"],
        )


@dataclass(frozen=True)
class SurveyRecord:
    """Exit survey: difficulty on a 1-5 Likert scale plus self-assessment."""

    annotator_id: str
    difficulty: int
    can_construct_chain: bool
    comparison_note: str = ""

    def __post_init__(self) -> None:
        if self.difficulty not in (1, 2, 3, 4, 5):
            raise ValueError(f"difficulty must be 1..5, got {self.difficulty}")

    def to_dict(self) -> dict[str, Any]:
        return {
            "annotator_id": self.annotator_id,
            "difficulty": self.difficulty,
            "can_construct_chain": self.can_construct_chain,
            "comparison_note": self.comparison_note,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SurveyRecord":
        return cls(
            annotator_id=d["annotator_id"],
            difficulty=int(d["difficulty"]),
            can_construct_chain=bool(d["can_construct_chain"]),
            comparison_note=d.get("comparison_note", ""),
        )


# ---------------------------------------------------------------------------
# Sample selection
# ---------------------------------------------------------------------------


@dataclass
class SelectionResult:
    """Selected samples plus the shortfall signal when fewer were eligible."""

    samples: list[EvalSample]
    requested: int
    eligible: int

    @property
    def insufficient(self) -> bool:
        return self.eligible < self.requested

    def raise_if_insufficient(self) -> None:
        if self.insufficient:
            raise InsufficientEligiblePairs(self.eligible, self.requested)


def select_eval_sample(
    chains: Sequence[CausalChain],
    integrity_votes: Mapping[str, Mapping[str, bool]],
    n_ce: int = DEFAULT_CE_SAMPLE_COUNT,
) -> SelectionResult:
    """Pick, per CE pair, the most agreed-upon maintained and violated chains.

    ``integrity_votes`` maps chain id -> evaluator key -> integrity verdict.
    Maintained = argmax of true votes, violated = argmax of false votes; when
    several (maintained, violated) pairs tie on votes the one minimizing the
    link-count delta wins, then lexicographic chain ids. CE pairs that cannot
    produce two distinct chains are skipped. Samples are ranked by combined
    vote strength; the deterministic output makes reruns reproducible.
    """
    generators = {c.generator_model.key() for c in chains}
    if len(generators) > 1:
        raise ChainProbeError(
            f"sample selection expects chains from a single generator, got {sorted(generators)}"
        )

    by_ce: dict[str, list[CausalChain]] = {}
    for chain in chains:
        if chain.id in integrity_votes:
            by_ce.setdefault(chain.ce_pair_id, []).append(chain)

    candidates: list[EvalSample] = []
    for ce_id in sorted(by_ce):
        group = sorted(by_ce[ce_id], key=lambda c: c.id)
        if len(group) < 2:
            continue
        maintained_votes = {
            c.id: sum(1 for v in integrity_votes[c.id].values() if v) for c in group
        }
        violated_votes = {
            c.id: sum(1 for v in integrity_votes[c.id].values() if not v) for c in group
        }
        best_maintained = max(maintained_votes.values())
        best_violated = max(violated_votes.values())
        maintained_pool = [c for c in group if maintained_votes[c.id] == best_maintained]
        violated_pool = [c for c in group if violated_votes[c.id] == best_violated]
        links = {c.id: c.chain_length for c in group}
        pairings = [
            (abs(links[m.id] - links[v.id]), m.id, v.id)
            for m in maintained_pool
            for v in violated_pool
            if m.id != v.id
        ]
        if not pairings:
            continue
        delta, maintained_id, violated_id = min(pairings)
        candidates.append(
            EvalSample(
                ce_pair_id=ce_id,
                maintained_chain_id=maintained_id,
                violated_chain_id=violated_id,
                agreement_scores=(best_maintained, best_violated),
                length_delta=delta,
            )
        )

    candidates.sort(key=lambda s: (-(s.agreement_scores[0] + s.agreement_scores[1]), s.ce_pair_id))
    return SelectionResult(samples=candidates[:n_ce], requested=n_ce, eligible=len(candidates))


# ---------------------------------------------------------------------------
# Annotator assignment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ItemAssignment:
    """One chain pair with its raters and per-rater A/B display order."""

    item_id: str
    sample: EvalSample
    annotators: tuple[str, ...]
    ab_orders: Mapping[str, tuple[str, str]]  # annotator -> (chain shown as A, as B)

    def to_dict(self) -> dict[str, Any]:
        return {
            "item_id": self.item_id,
            "sample": self.sample.to_dict(),
            "annotators": list(self.annotators),
            "ab_orders": {a: list(order) for a, order in sorted(self.ab_orders.items())},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ItemAssignment":
        return cls(
            item_id=d["item_id"],
            sample=EvalSample.from_dict(d["sample"]),
            annotators=tuple(d["annotators"]),
            ab_orders={a: (o[0], o[1]) for a, o in d["ab_orders"].items()},
        )


@dataclass(frozen=True)
class AssignmentPlan:
    seed: int
    raters_per_chain: int
    items: tuple[ItemAssignment, ...]

    def items_for(self, annotator_id: str) -> list[ItemAssignment]:
        return [item for item in self.items if annotator_id in item.annotators]

    @property
    def annotators(self) -> list[str]:
        return sorted({a for item in self.items for a in item.annotators})

    @property
    def chain_ids(self) -> list[str]:
        return sorted(
            {item.sample.maintained_chain_id for item in self.items}
            | {item.sample.violated_chain_id for item in self.items}
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "raters_per_chain": self.raters_per_chain,
            "items": [item.to_dict() for item in self.items],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AssignmentPlan":
        return cls(
            seed=d["seed"],
            raters_per_chain=d["raters_per_chain"],
            items=tuple(ItemAssignment.from_dict(i) for i in d["items"]),
        )


def assign_annotators(
    samples: Sequence[EvalSample],
    annotator_ids: Sequence[str],
    per_chain: int = DEFAULT_RATERS_PER_CHAIN,
    *,
    max_items_per_annotator: int = DEFAULT_MAX_ITEMS_PER_ANNOTATOR,
    seed: int = 0,
) -> AssignmentPlan:
    """Cover every chain pair with exactly ``per_chain`` distinct annotators.

    Least-loaded greedy assignment; the per-annotator workload cap counts
    chain pairs (each pair means judging two chains). A/B display order is
    randomized per (item, annotator) from the recorded seed.
    """
    annotators = sorted(set(annotator_ids))
    if len(annotators) < per_chain:
        raise InfeasibleAssignment(
            f"{per_chain} distinct raters per chain impossible with {len(annotators)} annotators"
        )
    slots_needed = len(samples) * per_chain
    capacity = len(annotators) * max_items_per_annotator
    if slots_needed > capacity:
        raise InfeasibleAssignment(
            f"{len(samples)} items x {per_chain} raters = {slots_needed} assignments exceed "
            f"capacity {len(annotators)} annotators x {max_items_per_annotator} items = {capacity}"
        )

    rng = random.Random(seed)
    load = {a: 0 for a in annotators}
    items: list[ItemAssignment] = []
    for index, sample in enumerate(samples):
        open_annotators = [a for a in annotators if load[a] < max_items_per_annotator]
        if len(open_annotators) < per_chain:
            raise InfeasibleAssignment(
                f"item {index}: only {len(open_annotators)} annotators under the "
                f"{max_items_per_annotator}-item cap, need {per_chain}"
            )
        chosen = sorted(open_annotators, key=lambda a: (load[a], a))[:per_chain]
        ab_orders: dict[str, tuple[str, str]] = {}
        for annotator in chosen:
            load[annotator] += 1
            pair = [sample.maintained_chain_id, sample.violated_chain_id]
            rng.shuffle(pair)
            ab_orders[annotator] = (pair[0], pair[1])
        items.append(
            ItemAssignment(
                item_id=f"item-{index:03d}",
                sample=sample,
                annotators=tuple(chosen),
                ab_orders=ab_orders,
            )
        )
    return AssignmentPlan(seed=seed, raters_per_chain=per_chain, items=tuple(items))


# ---------------------------------------------------------------------------
# Majority vote and agreement
# ---------------------------------------------------------------------------


class VoteOutcome(str, Enum):
    CONFIRMED = "Confirmed"
    REJECTED = "Rejected"
    NO_MAJORITY = "NoMajority"


def majority_vote(judgments: Sequence[bool], expected: int) -> VoteOutcome:
    """Strict-majority aggregation; an exact tie is a first-class outcome."""
    if len(judgments) != expected:
        raise WrongJudgmentCount(f"got {len(judgments)} judgments, expected {expected}")
    yes = sum(judgments)
    no = len(judgments) - yes
    if yes > no:
        return VoteOutcome.CONFIRMED
    if no > yes:
        return VoteOutcome.REJECTED
    return VoteOutcome.NO_MAJORITY


@dataclass
class AgreementReport:
    integrity: KappaResult
    coherence: KappaResult
    integrity_tallies: dict[str, int]
    coherence_tallies: dict[str, int]
    per_chain_votes: dict[str, dict[str, str]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "integrity": self.integrity.to_dict(),
            "coherence": self.coherence.to_dict(),
            "integrity_tallies": dict(self.integrity_tallies),
            "coherence_tallies": dict(self.coherence_tallies),
            "per_chain_votes": {k: dict(v) for k, v in sorted(self.per_chain_votes.items())},
        }


def agreement_report(
    records: Sequence[AnnotationRecord],
    expected_chains: Iterable[str],
    per_chain: int = DEFAULT_RATERS_PER_CHAIN,
) -> AgreementReport:
    """Fleiss' kappa and majority tallies over complete judgment tables.

    Each expected chain must have exactly ``per_chain`` records; anything
    else raises IncompleteJudgments listing the offending chains.
    """
    by_chain: dict[str, list[AnnotationRecord]] = {}
    for record in records:
        by_chain.setdefault(record.chain_id, []).append(record)

    expected = sorted(expected_chains)
    missing = [cid for cid in expected if len(by_chain.get(cid, [])) != per_chain]
    if missing:
        raise IncompleteJudgments(missing)

    integrity_table = []
    coherence_table = []
    tallies = {
        "integrity": {o.value: 0 for o in VoteOutcome},
        "coherence": {o.value: 0 for o in VoteOutcome},
    }
    per_chain_votes: dict[str, dict[str, str]] = {}
    for chain_id in expected:
        chain_records = by_chain[chain_id]
        integrity = [r.integrity_judgment for r in chain_records]
        coherence = [r.coherence_judgment for r in chain_records]
        integrity_table.append([sum(integrity), per_chain - sum(integrity)])
        coherence_table.append([sum(coherence), per_chain - sum(coherence)])
        integrity_outcome = majority_vote(integrity, per_chain)
        coherence_outcome = majority_vote(coherence, per_chain)
        tallies["integrity"][integrity_outcome.value] += 1
        tallies["coherence"][coherence_outcome.value] += 1
        per_chain_votes[chain_id] = {
            "integrity": integrity_outcome.value,
            "coherence": coherence_outcome.value,
        }

    return AgreementReport(
        integrity=fleiss_kappa(integrity_table, per_chain),
        coherence=fleiss_kappa(coherence_table, per_chain),
        integrity_tallies=tallies["integrity"],
        coherence_tallies=tallies["coherence"],
        per_chain_votes=per_chain_votes,
    )


# ---------------------------------------------------------------------------
# CSV import/export
# ---------------------------------------------------------------------------

_ANNOTATION_COLUMNS = (
    "session_id",
    "annotator_id",
    "chain_id",
    "integrity_judgment",
    "coherence_judgment",
    "submitted_at",
)
_SURVEY_COLUMNS = ("annotator_id", "difficulty", "can_construct_chain", "comparison_note")


def annotations_to_csv(records: Sequence[AnnotationRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(_ANNOTATION_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.session_id,
                r.annotator_id,
                r.chain_id,
                "yes" if r.integrity_judgment else "no",
                "yes" if r.coherence_judgment else "no",
                r.submitted_at,
            ]
        )
    return out.getvalue()


def annotations_from_csv(text: str) -> list[AnnotationRecord]:
    records = []
    for row in csv.DictReader(io.StringIO(text)):
        records.append(
            AnnotationRecord(
                session_id=row["session_id"],
                annotator_id=row["annotator_id"],
                chain_id=row["chain_id"],
                integrity_judgment=row["integrity_judgment"].strip().lower() == "yes",
                coherence_judgment=row["coherence_judgment"].strip().lower() == "yes",
                submitted_at=row["submitted_at"],
            )
        )
    return records


def surveys_to_csv(records: Sequence[SurveyRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(_SURVEY_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.annotator_id,
                r.difficulty,
                "yes" if r.can_construct_chain else "no",
                r.comparison_note,
            ]
        )
    return out.getvalue()


def surveys_from_csv(text: str) -> list[SurveyRecord]:
    records = []
    for row in csv.DictReader(io.StringIO(text)):
        records.append(
            SurveyRecord(
                annotator_id=row["annotator_id"],
                difficulty=int(row["difficulty"]),
                can_construct_chain=row["can_construct_chain"].strip().lower() == "yes",
                comparison_note=row.get("comparison_note", ""),
            )
        )
    return records
