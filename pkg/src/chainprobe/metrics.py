"""Quantitative measures over chains, probe verdicts, and annotator ratings.

Everything here is a pure function. Statistical routines are implemented
directly (sample statistics, product-moment correlation with exact
t-distribution p-values, fixed-rater Fleiss kappa) so they can be checked
against independent reference implementations in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import mpmath

from .model import CausalChain, ChainProbeError, ModelRef, Verdict

SIGNIFICANCE_LEVEL = 0.01


class EmptyInput(ChainProbeError):
    pass


class MixedProbeKind(ChainProbeError):
    pass


class LengthMismatch(ChainProbeError):
    pass


class ZeroVariance(ChainProbeError):
    pass


class TooFewPoints(ChainProbeError):
    pass


class UnequalRaterCounts(ChainProbeError):
    pass


class DegenerateAgreement(ChainProbeError):
    """Expected agreement is exactly 1, so kappa is undefined."""


class MissingLinkVerdict(ChainProbeError):
    def __init__(self, chain_id: str, position: int | None = None):
        where = f"position {position}" if position is not None else "all positions"
        super().__init__(f"chain {chain_id} lacks verdicts for {where}")
        self.chain_id = chain_id
        self.position = position


class IncompleteVerdicts(ChainProbeError):
    pass


# ---------------------------------------------------------------------------
# Descriptive statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DescriptiveStats:
    total: int
    mean: float
    std: float
    min: float
    max: float

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "mean": self.mean,
            "std": self.std,
            "min": self.min,
            "max": self.max,
        }


def descriptive_stats(values: Sequence[float]) -> DescriptiveStats:
    """Count, mean, sample standard deviation (n-1), min, and max.

    The n-1 estimator is used throughout; a singleton input has std 0.
    """
    if not values:
        raise EmptyInput("descriptive_stats requires at least one value")
    n = len(values)
    mean = math.fsum(values) / n
    if n == 1:
        std = 0.0
    else:
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1))
    return DescriptiveStats(total=n, mean=mean, std=std, min=min(values), max=max(values))


# ---------------------------------------------------------------------------
# Verdict-set consistency metrics
# ---------------------------------------------------------------------------


def _check_uniform_kind(results: Sequence[Any]) -> None:
    kinds = {r.probe for r in results}
    if len(kinds) > 1:
        raise MixedProbeKind(f"results mix probe kinds: {sorted(k.value for k in kinds)}")


def yes_rate(results: Sequence[Any]) -> float:
    """Fraction of results judged causal; Invalid answers stay in the denominator."""
    if not results:
        raise EmptyInput("yes_rate requires at least one result")
    _check_uniform_kind(results)
    return sum(1 for r in results if r.verdict == Verdict.CAUSAL) / len(results)


def invalid_rate(results: Sequence[Any]) -> float:
    """Fraction of results whose answer was neither yes nor no."""
    if not results:
        raise EmptyInput("invalid_rate requires at least one result")
    _check_uniform_kind(results)
    return sum(1 for r in results if r.verdict == Verdict.INVALID) / len(results)


def jaccard_dissimilarity(yes_active: set, yes_passive: set) -> float:
    """1 - |A∩B| / |A∪B|; two empty sets count as perfectly similar (0)."""
    union = yes_active | yes_passive
    if not union:
        return 0.0
    return 1.0 - len(yes_active & yes_passive) / len(union)


def hamming_distance(answers_a: Sequence[Verdict], answers_b: Sequence[Verdict]) -> float:
    """Proportion of aligned positions whose verdicts differ.

    Invalid differs from both Causal and NonCausal (plain enum inequality).
    """
    if len(answers_a) != len(answers_b):
        raise LengthMismatch(f"lengths differ: {len(answers_a)} vs {len(answers_b)}")
    if not answers_a:
        raise EmptyInput("hamming_distance requires nonempty vectors")
    differing = sum(1 for a, b in zip(answers_a, answers_b) if a != b)
    return differing / len(answers_a)


# ---------------------------------------------------------------------------
# Chain integrity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinkVerdicts:
    """Verdicts for one link: the forward question and the reversed question."""

    forward: Verdict
    reverse: Verdict

    def to_dict(self) -> dict[str, Any]:
        return {"forward": self.forward.value, "reverse": self.reverse.value}


ChainVerdicts = Mapping[int, LinkVerdicts]


def chain_integrity(chain: CausalChain, verdicts: ChainVerdicts) -> bool:
    """A chain holds together iff every link is causal forward and non-causal reversed.

    Any Invalid verdict on any link breaks integrity (conservative policy).
    """
    for position in range(chain.chain_length):
        if position not in verdicts:
            raise MissingLinkVerdict(chain.id, position)
    return all(
        verdicts[t].forward == Verdict.CAUSAL and verdicts[t].reverse == Verdict.NON_CAUSAL
        for t in range(chain.chain_length)
    )


@dataclass(frozen=True)
class IntegrityMatrix:
    """Cross-model grid: generators on columns, evaluators on rows.

    Cells without any eligible chain are None (absent), never 0.
    """

    generators: tuple[ModelRef, ...]
    evaluators: tuple[ModelRef, ...]
    proportion_valid: tuple[tuple[float | None, ...], ...]
    counts: tuple[tuple[tuple[int, int] | None, ...], ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "generators": [g.to_dict() for g in self.generators],
            "evaluators": [e.to_dict() for e in self.evaluators],
            "proportion_valid": [list(row) for row in self.proportion_valid],
            "counts": [[list(c) if c else None for c in row] for row in self.counts],
        }

    def to_csv(self) -> str:
        lines = ["evaluator\\generator," + ",".join(g.key() for g in self.generators)]
        for evaluator, row in zip(self.evaluators, self.proportion_valid):
            cells = ["" if v is None else f"{v:.6f}" for v in row]
            lines.append(evaluator.key() + "," + ",".join(cells))
        return "\n".join(lines) + "\n"


def _eligible(chains: Iterable[CausalChain], include_repaired: bool) -> list[CausalChain]:
    return [
        c
        for c in chains
        if c.is_structurally_valid and (include_repaired or not c.anchor_repaired)
    ]


def integrity_matrix(
    chains: Iterable[CausalChain],
    verdicts_by_evaluator: Mapping[ModelRef, Mapping[str, ChainVerdicts]],
    *,
    include_repaired: bool = False,
) -> IntegrityMatrix:
    """Proportion of each generator's chains judged intact by each evaluator.

    Anchor-repaired chains are excluded by default and admitted with
    ``include_repaired``; structurally invalid chains never participate.
    """
    by_generator: dict[ModelRef, list[CausalChain]] = {}
    for chain in chains:
        by_generator.setdefault(chain.generator_model, []).append(chain)

    generators = tuple(sorted(by_generator, key=lambda m: m.key()))
    evaluators = tuple(sorted(verdicts_by_evaluator, key=lambda m: m.key()))
    proportions: list[tuple[float | None, ...]] = []
    counts: list[tuple[tuple[int, int] | None, ...]] = []

    for evaluator in evaluators:
        chain_verdicts = verdicts_by_evaluator[evaluator]
        prop_row: list[float | None] = []
        count_row: list[tuple[int, int] | None] = []
        for generator in generators:
            eligible = _eligible(by_generator[generator], include_repaired)
            if not eligible:
                prop_row.append(None)
                count_row.append(None)
                continue
            valid = 0
            for chain in eligible:
                if chain.id not in chain_verdicts:
                    raise IncompleteVerdicts(
                        f"evaluator {evaluator.key()} has no verdicts for chain {chain.id} "
                        f"(generator {generator.key()})"
                    )
                try:
                    if chain_integrity(chain, chain_verdicts[chain.id]):
                        valid += 1
                except MissingLinkVerdict as exc:
                    raise IncompleteVerdicts(
                        f"cell ({generator.key()}, {evaluator.key()}): {exc}"
                    ) from exc
            prop_row.append(valid / len(eligible))
            count_row.append((valid, len(eligible)))
        proportions.append(tuple(prop_row))
        counts.append(tuple(count_row))

    return IntegrityMatrix(
        generators=generators,
        evaluators=evaluators,
        proportion_valid=tuple(proportions),
        counts=tuple(counts),
    )


# ---------------------------------------------------------------------------
# Pearson correlation with exact t-distribution p-values
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationResult:
    r: float
    p_value: float
    n: int
    significant_at_01: bool

    def to_dict(self) -> dict[str, Any]:
        return {
            "r": self.r,
            "p_value": self.p_value,
            "n": self.n,
            "significant_at_01": self.significant_at_01,
        }


def _student_t_two_sided_p(t: float, dof: int) -> float:
    """P(|T| >= t) for T ~ Student-t with ``dof`` degrees of freedom.

    Uses the identity P(|T| >= t) = I_x(dof/2, 1/2) with x = dof/(dof + t^2),
    where I is the regularized incomplete beta function. The exact CDF
    matters at the small n this pipeline sees.
    """
    if math.isinf(t):
        return 0.0
    x = dof / (dof + t * t)
    return float(mpmath.betainc(dof / 2.0, 0.5, 0, x, regularized=True))


def pearson_r(x: Sequence[float], y: Sequence[float]) -> CorrelationResult:
    """Product-moment correlation with a two-sided exact-t p-value.

    t = r * sqrt((n-2) / (1-r^2)) with n-2 degrees of freedom.
    """
    if len(x) != len(y):
        raise LengthMismatch(f"lengths differ: {len(x)} vs {len(y)}")
    n = len(x)
    if n < 3:
        raise TooFewPoints(f"need at least 3 points, got {n}")
    mean_x = math.fsum(x) / n
    mean_y = math.fsum(y) / n
    var_x = math.fsum((v - mean_x) ** 2 for v in x)
    var_y = math.fsum((v - mean_y) ** 2 for v in y)
    if var_x == 0 or var_y == 0:
        raise ZeroVariance("zero variance in x" if var_x == 0 else "zero variance in y")
    cov = math.fsum((a - mean_x) * (b - mean_y) for a, b in zip(x, y))
    r = cov / math.sqrt(var_x * var_y)
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = abs(r) * math.sqrt((n - 2) / (1.0 - r * r))
        p = _student_t_two_sided_p(t, n - 2)
    return CorrelationResult(r=r, p_value=p, n=n, significant_at_01=p < SIGNIFICANCE_LEVEL)


# ---------------------------------------------------------------------------
# Fleiss' kappa (fixed rater count)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KappaResult:
    kappa: float
    n_items: int
    n_raters_per_item: int
    categories: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "kappa": self.kappa,
            "n_items": self.n_items,
            "n_raters_per_item": self.n_raters_per_item,
            "categories": self.categories,
        }


def fleiss_kappa(ratings: Sequence[Sequence[int]], raters_per_item: int) -> KappaResult:
    """Chance-corrected agreement for a fixed number of raters per item.

    ``ratings`` is an item x category table of rating counts. With n raters,
    N items, and n_ij counts:

        P_i   = (sum_j n_ij^2 - n) / (n * (n - 1))   per-item agreement
        p_j   = sum_i n_ij / (N * n)                 category proportions
        P_bar = mean(P_i),  Pe_bar = sum_j p_j^2
        kappa = (P_bar - Pe_bar) / (1 - Pe_bar)

    Undefined cases raise instead of returning NaN: every rating in a single
    category makes Pe_bar = 1 (DegenerateAgreement).
    """
    if not ratings:
        raise EmptyInput("fleiss_kappa requires at least one item")
    categories = len(ratings[0])
    if categories < 2:
        raise ChainProbeError(f"need at least 2 categories, got {categories}")
    if raters_per_item < 2:
        raise UnequalRaterCounts(f"need at least 2 raters per item, got {raters_per_item}")
    for i, row in enumerate(ratings):
        if len(row) != categories:
            raise LengthMismatch(f"item {i} has {len(row)} categories, expected {categories}")
        if any(c < 0 for c in row):
            raise ChainProbeError(f"item {i} has negative rating counts")
        if sum(row) != raters_per_item:
            raise UnequalRaterCounts(
                f"item {i} has {sum(row)} ratings, expected {raters_per_item}"
            )

    n_items = len(ratings)
    n = raters_per_item
    p_bar = math.fsum(
        (math.fsum(c * c for c in row) - n) / (n * (n - 1)) for row in ratings
    ) / n_items
    proportions = [
        math.fsum(row[j] for row in ratings) / (n_items * n) for j in range(categories)
    ]
    pe_bar = math.fsum(p * p for p in proportions)
    if pe_bar >= 1.0:
        raise DegenerateAgreement("all ratings fall in a single category")
    kappa = (p_bar - pe_bar) / (1.0 - pe_bar)
    return KappaResult(
        kappa=kappa, n_items=n_items, n_raters_per_item=n, categories=categories
    )


# ---------------------------------------------------------------------------
# Chain quality correlations
# ---------------------------------------------------------------------------


@dataclass
class CorrelationReport:
    """Named correlation analyses; non-computable ones land in ``skipped``."""

    results: dict[str, CorrelationResult] = field(default_factory=dict)
    skipped: dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "results": {k: v.to_dict() for k, v in sorted(self.results.items())},
            "skipped": dict(sorted(self.skipped.items())),
        }


def _causal_fraction(chain: CausalChain, verdicts: ChainVerdicts, *, reverse: bool) -> float:
    hits = 0
    for t in range(chain.chain_length):
        if t not in verdicts:
            raise MissingLinkVerdict(chain.id, t)
        verdict = verdicts[t].reverse if reverse else verdicts[t].forward
        hits += verdict == Verdict.CAUSAL
    return hits / chain.chain_length


def chain_quality_correlations(
    chains: Iterable[CausalChain],
    verdicts: Mapping[str, ChainVerdicts],
    *,
    include_repaired: bool = False,
) -> CorrelationReport:
    """Correlations between chain shape and judged causality of its links.

    Computes, for one evaluator's verdicts:
      (a) chain length vs per-chain fraction of links judged causal, under
          both the forward and the reversed probe;
      (b) number of chains per CE pair vs the pooled fraction of causal
          links in those chains, under both probes;
      (c) number of chains per CE pair vs mean chain length.
    """
    eligible = _eligible(chains, include_repaired)
    report = CorrelationReport()

    def run(name: str, x: Sequence[float], y: Sequence[float]) -> None:
        try:
            report.results[name] = pearson_r(x, y)
        except (TooFewPoints, ZeroVariance, LengthMismatch) as exc:
            report.skipped[name] = f"{type(exc).__name__}: {exc}"

    if not eligible:
        for name in (
            "length_vs_causal_fraction_forward",
            "length_vs_causal_fraction_reversed",
            "chain_count_vs_causal_fraction_forward",
            "chain_count_vs_causal_fraction_reversed",
            "chain_count_vs_mean_length",
        ):
            report.skipped[name] = "EmptyInput: no eligible chains"
        return report

    for chain in eligible:
        if chain.id not in verdicts:
            raise MissingLinkVerdict(chain.id)

    lengths = [float(c.chain_length) for c in eligible]
    frac_fwd = [_causal_fraction(c, verdicts[c.id], reverse=False) for c in eligible]
    frac_rev = [_causal_fraction(c, verdicts[c.id], reverse=True) for c in eligible]
    run("length_vs_causal_fraction_forward", lengths, frac_fwd)
    run("length_vs_causal_fraction_reversed", lengths, frac_rev)

    groups: dict[str, list[CausalChain]] = {}
    for chain in eligible:
        groups.setdefault(chain.ce_pair_id, []).append(chain)

    counts: list[float] = []
    pooled_fwd: list[float] = []
    pooled_rev: list[float] = []
    mean_lengths: list[float] = []
    for ce_id in sorted(groups):
        group = groups[ce_id]
        total_links = sum(c.chain_length for c in group)
        fwd_hits = sum(
            1
            for c in group
            for t in range(c.chain_length)
            if verdicts[c.id][t].forward == Verdict.CAUSAL
        )
        rev_hits = sum(
            1
            for c in group
            for t in range(c.chain_length)
            if verdicts[c.id][t].reverse == Verdict.CAUSAL
        )
        counts.append(float(len(group)))
        pooled_fwd.append(fwd_hits / total_links)
        pooled_rev.append(rev_hits / total_links)
        mean_lengths.append(sum(c.chain_length for c in group) / len(group))

    run("chain_count_vs_causal_fraction_forward", counts, pooled_fwd)
    run("chain_count_vs_causal_fraction_reversed", counts, pooled_rev)
    run("chain_count_vs_mean_length", counts, mean_lengths)
    return report
