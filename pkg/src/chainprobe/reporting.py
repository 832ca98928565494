"""Builds the run-level reports: descriptive tables, probe-rate and
prompt-consistency summaries, the cross-model integrity matrix, and the
chain-quality correlations.

Reports are emitted as JSON plus an aligned-column plain-text table per
generator column, and the integrity matrix additionally as CSV.
"""

from __future__ import annotations

from typing import Any, Iterable, Mapping, Sequence

from .decompose import PairIndex, PairKey, build_pair_index
from .metrics import (
    CorrelationReport,
    DescriptiveStats,
    EmptyInput,
    IncompleteVerdicts,
    LinkVerdicts,
    TooFewPoints,
    ZeroVariance,
    chain_quality_correlations,
    descriptive_stats,
    integrity_matrix,
    invalid_rate,
    jaccard_dissimilarity,
    hamming_distance,
    pearson_r,
    yes_rate,
)
from .model import CausalChain, CEPair, ModelRef, ProbeKind, Verdict
from .parser import ParsedChainSet
from .probe import ProbeResult

ResultsByEvaluator = Mapping[ModelRef, Sequence[ProbeResult]]


def group_results(results: Sequence[ProbeResult]) -> dict[PairKey, dict[ProbeKind, Verdict]]:
    """Index probe results as pair key -> probe kind -> verdict."""
    grouped: dict[PairKey, dict[ProbeKind, Verdict]] = {}
    for result in results:
        grouped.setdefault(result.pair_key, {})[result.probe] = result.verdict
    return grouped


def chain_verdict_map(
    index: PairIndex, grouped: Mapping[PairKey, Mapping[ProbeKind, Verdict]]
) -> dict[str, dict[int, LinkVerdicts]]:
    """Broadcast per-unique-pair verdicts back to every (chain, position)."""
    out: dict[str, dict[int, LinkVerdicts]] = {}
    for key, occurrences in index.occurrences.items():
        kind_verdicts = grouped.get(key)
        if not kind_verdicts:
            continue
        forward = kind_verdicts.get(ProbeKind.A1_ACTIVE)
        reverse = kind_verdicts.get(ProbeKind.A2_REVERSED_ACTIVE)
        if forward is None or reverse is None:
            continue
        link = LinkVerdicts(forward=forward, reverse=reverse)
        for chain_id, position in occurrences:
            out.setdefault(chain_id, {})[position] = link
    return out


def _eligible_chains(chain_sets: Iterable[ParsedChainSet], include_repaired: bool) -> list[CausalChain]:
    return [
        chain
        for cs in chain_sets
        for chain in cs.chains
        if chain.is_structurally_valid and (include_repaired or not chain.anchor_repaired)
    ]


def _stats_or_none(values: Sequence[float]) -> dict[str, Any] | None:
    try:
        return descriptive_stats(values).to_dict()
    except EmptyInput:
        return None


def descriptive_section(
    chain_sets: Sequence[ParsedChainSet], *, include_repaired: bool = False
) -> dict[str, Any]:
    """Per-generator chain and link counts with per-CE / per-chain statistics."""
    by_generator: dict[str, list[ParsedChainSet]] = {}
    for cs in chain_sets:
        by_generator.setdefault(cs.generator_model.key(), []).append(cs)

    section: dict[str, Any] = {}
    for generator_key in sorted(by_generator):
        sets = by_generator[generator_key]
        chains = _eligible_chains(sets, include_repaired)
        per_ce: dict[str, int] = {}
        for chain in chains:
            per_ce[chain.ce_pair_id] = per_ce.get(chain.ce_pair_id, 0) + 1
        links_per_chain = [float(c.chain_length) for c in chains]

        entry: dict[str, Any] = {
            "chains_total": len(chains),
            "chains_per_ce": _stats_or_none([float(v) for v in per_ce.values()]),
            "pairs_total": int(sum(links_per_chain)),
            "pairs_per_chain": _stats_or_none(links_per_chain),
        }
        # Chain count vs mean chain length, over CE pairs.
        counts: list[float] = []
        mean_lengths: list[float] = []
        for ce_id in sorted(per_ce):
            ce_chains = [c for c in chains if c.ce_pair_id == ce_id]
            counts.append(float(len(ce_chains)))
            mean_lengths.append(sum(c.chain_length for c in ce_chains) / len(ce_chains))
        try:
            entry["chain_count_vs_length"] = pearson_r(counts, mean_lengths).to_dict()
        except (TooFewPoints, ZeroVariance, EmptyInput) as exc:
            entry["chain_count_vs_length"] = None
            entry["chain_count_vs_length_skipped"] = f"{type(exc).__name__}: {exc}"
        section[generator_key] = entry
    return section


def probe_rate_section(
    indexes: Mapping[str, PairIndex], results_by_evaluator: ResultsByEvaluator
) -> dict[str, Any]:
    """Yes- and invalid-rates per (generator, evaluator, probe kind).

    Rates are computed over each generator's own unique pairs, so shared
    pairs contribute to every generator that produced them.
    """
    section: dict[str, Any] = {}
    for generator_key in sorted(indexes):
        keys = set(indexes[generator_key].unique_pairs)
        per_evaluator: dict[str, Any] = {}
        for evaluator in sorted(results_by_evaluator, key=lambda m: m.key()):
            results = [r for r in results_by_evaluator[evaluator] if r.pair_key in keys]
            by_kind: dict[str, Any] = {}
            for kind in ProbeKind:
                subset = [r for r in results if r.probe == kind]
                if not subset:
                    continue
                by_kind[kind.value] = {
                    "yes_rate": yes_rate(subset),
                    "invalid_rate": invalid_rate(subset),
                    "n": len(subset),
                }
            if by_kind:
                per_evaluator[evaluator.key()] = by_kind
        section[generator_key] = per_evaluator
    return section


def prompt_consistency_section(
    indexes: Mapping[str, PairIndex], results_by_evaluator: ResultsByEvaluator
) -> dict[str, Any]:
    """Active/passive agreement per (generator, evaluator).

    Jaccard dissimilarity over yes-sets and Hamming distance over aligned
    verdict vectors, for the forward framing pair (A1 vs A1-P) and the
    reversed framing pair (A2 vs A2-P).
    """
    section: dict[str, Any] = {}
    framings = {
        "forward": (ProbeKind.A1_ACTIVE, ProbeKind.A1_PASSIVE),
        "reversed": (ProbeKind.A2_REVERSED_ACTIVE, ProbeKind.A2_REVERSED_PASSIVE),
    }
    for generator_key in sorted(indexes):
        keys = sorted(indexes[generator_key].unique_pairs)
        per_evaluator: dict[str, Any] = {}
        for evaluator in sorted(results_by_evaluator, key=lambda m: m.key()):
            grouped = group_results(list(results_by_evaluator[evaluator]))
            entry: dict[str, Any] = {}
            for name, (active_kind, passive_kind) in framings.items():
                covered = [
                    k
                    for k in keys
                    if active_kind in grouped.get(k, {}) and passive_kind in grouped.get(k, {})
                ]
                if not covered:
                    continue
                active = [grouped[k][active_kind] for k in covered]
                passive = [grouped[k][passive_kind] for k in covered]
                yes_active = {k for k, v in zip(covered, active) if v == Verdict.CAUSAL}
                yes_passive = {k for k, v in zip(covered, passive) if v == Verdict.CAUSAL}
                entry[name] = {
                    "jaccard_dissimilarity": jaccard_dissimilarity(yes_active, yes_passive),
                    "hamming_distance": hamming_distance(active, passive),
                    "n_pairs": len(covered),
                }
            if entry:
                per_evaluator[evaluator.key()] = entry
        section[generator_key] = per_evaluator
    return section


def integrity_section(
    chain_sets: Sequence[ParsedChainSet],
    indexes: Mapping[str, PairIndex],
    results_by_evaluator: ResultsByEvaluator,
    *,
    include_repaired: bool = False,
) -> tuple[dict[str, Any] | None, str | None, Any]:
    """Cross-model integrity matrix; returns (json, skip reason, matrix)."""
    chains = _eligible_chains(chain_sets, include_repaired)
    if not chains:
        return None, "no eligible chains", None

    verdicts_by_evaluator: dict[ModelRef, dict[str, dict[int, LinkVerdicts]]] = {}
    for evaluator, results in results_by_evaluator.items():
        grouped = group_results(list(results))
        merged: dict[str, dict[int, LinkVerdicts]] = {}
        for index in indexes.values():
            merged.update(chain_verdict_map(index, grouped))
        verdicts_by_evaluator[evaluator] = merged
    if not verdicts_by_evaluator:
        return None, "no evaluator verdicts", None
    try:
        matrix = integrity_matrix(
            chains, verdicts_by_evaluator, include_repaired=include_repaired
        )
    except IncompleteVerdicts as exc:
        return None, f"IncompleteVerdicts: {exc}", None
    return matrix.to_dict(), None, matrix


def correlation_section(
    chain_sets: Sequence[ParsedChainSet],
    indexes: Mapping[str, PairIndex],
    results_by_evaluator: ResultsByEvaluator,
    *,
    include_repaired: bool = False,
) -> dict[str, Any]:
    """Chain-quality correlations per (generator, evaluator)."""
    by_generator: dict[str, list[CausalChain]] = {}
    for cs in chain_sets:
        by_generator.setdefault(cs.generator_model.key(), []).extend(cs.chains)

    section: dict[str, Any] = {}
    for generator_key in sorted(by_generator):
        index = indexes.get(generator_key)
        if index is None:
            continue
        per_evaluator: dict[str, Any] = {}
        for evaluator in sorted(results_by_evaluator, key=lambda m: m.key()):
            grouped = group_results(list(results_by_evaluator[evaluator]))
            verdict_map = chain_verdict_map(index, grouped)
            chains = [
                c
                for c in by_generator[generator_key]
                if c.is_structurally_valid and c.id in verdict_map
            ]
            report = chain_quality_correlations(
                chains, verdict_map, include_repaired=include_repaired
            )
            per_evaluator[evaluator.key()] = report.to_dict()
        section[generator_key] = per_evaluator
    return section


def build_report(
    chain_sets: Sequence[ParsedChainSet],
    results_by_evaluator: ResultsByEvaluator,
    *,
    include_repaired: bool = False,
    ce_pairs: Sequence[CEPair] | None = None,
) -> dict[str, Any]:
    """Assemble the full JSON report for one run.

    When CE pairs spanning more than one dataset are supplied, the
    descriptive section is additionally broken out per dataset.
    """
    indexes: dict[str, PairIndex] = {}
    by_generator: dict[str, list[CausalChain]] = {}
    for cs in chain_sets:
        by_generator.setdefault(cs.generator_model.key(), []).extend(cs.chains)
    for generator_key, chains in by_generator.items():
        indexes[generator_key] = build_pair_index(chains)

    matrix_json, matrix_skip, _ = integrity_section(
        chain_sets, indexes, results_by_evaluator, include_repaired=include_repaired
    )
    report: dict[str, Any] = {
        "include_repaired": include_repaired,
        "descriptive": descriptive_section(chain_sets, include_repaired=include_repaired),
        "probe_rates": probe_rate_section(indexes, results_by_evaluator),
        "prompt_consistency": prompt_consistency_section(indexes, results_by_evaluator),
        "integrity_matrix": matrix_json,
        "correlations": correlation_section(
            chain_sets, indexes, results_by_evaluator, include_repaired=include_repaired
        ),
    }
    if matrix_skip:
        report["integrity_matrix_skipped"] = matrix_skip

    if ce_pairs:
        dataset_of = {p.id: p.dataset.value for p in ce_pairs}
        datasets = sorted({dataset_of.get(cs.ce_pair_id, "Other") for cs in chain_sets})
        if len(datasets) > 1:
            report["descriptive_by_dataset"] = {
                dataset: descriptive_section(
                    [cs for cs in chain_sets if dataset_of.get(cs.ce_pair_id, "Other") == dataset],
                    include_repaired=include_repaired,
                )
                for dataset in datasets
            }
    return report


# ---------------------------------------------------------------------------
# Plain-text table
# ---------------------------------------------------------------------------


def _fmt(value: Any) -> str:
    if value is None:
        return "/"
    if isinstance(value, float):
        return f"{value:.2f}"
    return str(value)


def descriptive_text_table(descriptive: Mapping[str, Any]) -> str:
    """Aligned-column table with one generator per column.

    Row structure: chain totals, per-CE stats, pair totals, per-chain stats,
    and the chain-count/length correlation.
    """
    generators = sorted(descriptive)
    rows: list[tuple[str, list[str]]] = []

    def stat_rows(label: str, field: str) -> None:
        rows.append((label, ["" for _ in generators]))
        for stat in ("mean", "std", "min", "max"):
            values = []
            for g in generators:
                block = descriptive[g].get(field)
                values.append(_fmt(block[stat]) if block else "/")
            rows.append((f"  {stat}", values))

    rows.append(("# Chains", ["" for _ in generators]))
    rows.append(("Total", [_fmt(descriptive[g]["chains_total"]) for g in generators]))
    stat_rows("Per CE", "chains_per_ce")
    rows.append(("# Intermediate CE Pairs", ["" for _ in generators]))
    rows.append(("Total", [_fmt(descriptive[g]["pairs_total"]) for g in generators]))
    stat_rows("Per chain", "pairs_per_chain")
    rows.append(("Correlation # chains / chain length", ["" for _ in generators]))
    r_values, p_values = [], []
    for g in generators:
        corr = descriptive[g].get("chain_count_vs_length")
        if corr:
            marker = "*" if corr["significant_at_01"] else ""
            r_values.append(f"{corr['r']:.2f}{marker}")
            p_values.append(f"{corr['p_value']:.4f}")
        else:
            r_values.append("/")
            p_values.append("/")
    rows.append(("Pearson's r (* = p<.01)", r_values))
    rows.append(("p-value", p_values))

    label_width = max(len(label) for label, _ in rows)
    col_widths = [
        max(len(g), max(len(row[1][i]) for row in rows)) for i, g in enumerate(generators)
    ]
    lines = [
        " " * label_width
        + "  "
        + "  ".join(g.rjust(col_widths[i]) for i, g in enumerate(generators))
    ]
    for label, cells in rows:
        lines.append(
            label.ljust(label_width)
            + "  "
            + "  ".join(cell.rjust(col_widths[i]) for i, cell in enumerate(cells))
        )
    return "\n".join(lines) + "\n"
