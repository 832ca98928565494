"""Runs the yes/no probes: render, call the gateway with caching, normalize.

Each pair is probed in isolation with no chain context. Invalid verdicts
(anything that does not start with yes/no) are first-class values, never
errors; downstream metrics count them conservatively.
"""

from __future__ import annotations

import re
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Iterable, Mapping

from .decompose import PairIndex, PairKey
from .gateway import CompletionRequest, ProviderGateway
from .model import ChainProbeError, IntermediatePair, ModelRef, ProbeKind, Verdict
from .prompts import render_probe_prompt_texts, template_version
from .store import VerdictCache, cache_key

PROBE_MAX_OUTPUT_TOKENS = 16

_LEADING_NOISE = re.compile(r"^[\s*_`#>•:;,.\"'()\[\]-]+")
_FIRST_WORD = re.compile(r"[a-z]+")


class PartialBatch(ChainProbeError):
    """Some probe combinations failed; carries failures and completed results."""

    def __init__(self, failed: list[tuple[PairKey, ProbeKind, str]], results: list["ProbeResult"]):
        keys = ", ".join(f"{k[0]}->{k[1]} [{kind.value}]" for k, kind, _ in failed[:5])
        more = f" (+{len(failed) - 5} more)" if len(failed) > 5 else ""
        super().__init__(f"{len(failed)} probe combination(s) failed: {keys}{more}")
        self.failed = failed
        self.results = results


def parse_verdict(raw: str) -> Verdict:
    """Map provider text to a verdict by its first word.

    Lowercases, trims, and strips leading markdown/punctuation; a first word
    of exactly "yes" means causal and "no" means non-causal. Anything else is
    Invalid (the raw answer is preserved by the caller).
    """
    stripped = _LEADING_NOISE.sub("", raw.strip().lower())
    match = _FIRST_WORD.match(stripped)
    word = match.group(0) if match else ""
    if word == "yes":
        return Verdict.CAUSAL
    if word == "no":
        return Verdict.NON_CAUSAL
    return Verdict.INVALID


@dataclass(frozen=True)
class ProbeResult:
    """One model's normalized answer to one probe on one unique pair."""

    pair_key: PairKey
    probe: ProbeKind
    evaluator_model: ModelRef
    verdict: Verdict
    raw_answer: str
    cached: bool

    def __post_init__(self) -> None:
        if parse_verdict(self.raw_answer) != self.verdict:
            raise ValueError(
                f"verdict {self.verdict.value} inconsistent with raw answer {self.raw_answer!r}"
            )

    def to_dict(self) -> dict[str, Any]:
        return {
            "pair_key": list(self.pair_key),
            "probe": self.probe.value,
            "evaluator_model": self.evaluator_model.to_dict(),
            "verdict": self.verdict.value,
            "raw_answer": self.raw_answer,
            "cached": self.cached,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ProbeResult":
        return cls(
            pair_key=(d["pair_key"][0], d["pair_key"][1]),
            probe=ProbeKind(d["probe"]),
            evaluator_model=ModelRef.from_dict(d["evaluator_model"]),
            verdict=Verdict(d["verdict"]),
            raw_answer=d["raw_answer"],
            cached=d["cached"],
        )


class ProbeEngine:
    """Probe executor bound to one gateway per provider plus a verdict cache."""

    def __init__(
        self,
        gateways: Mapping[str, ProviderGateway],
        cache: VerdictCache | None = None,
        *,
        max_output_tokens: int = PROBE_MAX_OUTPUT_TOKENS,
        temperature: float = 0.0,
    ):
        self._gateways = dict(gateways)
        self._cache = cache if cache is not None else VerdictCache()
        self._max_output_tokens = max_output_tokens
        self._temperature = temperature

    def _gateway_for(self, evaluator: ModelRef) -> ProviderGateway:
        try:
            return self._gateways[evaluator.provider]
        except KeyError:
            raise ChainProbeError(
                f"no gateway configured for provider {evaluator.provider!r}"
            ) from None

    def probe_pair_texts(
        self, evaluator: ModelRef, cause_text: str, effect_text: str, kind: ProbeKind
    ) -> ProbeResult:
        """Probe one unique pair by its normalized texts, cache first."""
        prompt = render_probe_prompt_texts(kind, cause_text, effect_text)
        key = cache_key(
            evaluator, template_version(prompt.template_id), cause_text, effect_text, kind
        )
        hit = self._cache.get(key)
        if hit is not None:
            return ProbeResult(
                pair_key=(cause_text, effect_text),
                probe=kind,
                evaluator_model=evaluator,
                verdict=Verdict(hit["verdict"]),
                raw_answer=hit["raw_answer"],
                cached=True,
            )
        request = CompletionRequest(
            model=evaluator,
            prompt=prompt,
            max_output_tokens=self._max_output_tokens,
            temperature=self._temperature,
        )
        response = self._gateway_for(evaluator).complete(request)
        verdict = parse_verdict(response.text)
        self._cache.put(key, response.text, verdict.value)
        return ProbeResult(
            pair_key=(cause_text, effect_text),
            probe=kind,
            evaluator_model=evaluator,
            verdict=verdict,
            raw_answer=response.text,
            cached=False,
        )

    def run_probe(self, evaluator: ModelRef, pair: IntermediatePair, kind: ProbeKind) -> ProbeResult:
        return self.probe_pair_texts(
            evaluator, pair.cause_event.normalized, pair.effect_event.normalized, kind
        )

    def run_probe_batch(
        self,
        evaluator: ModelRef,
        index: PairIndex,
        kinds: Iterable[ProbeKind],
        *,
        max_parallel: int | None = None,
        allow_partial: bool = False,
    ) -> list[ProbeResult]:
        """Probe every (unique pair, kind) combination exactly once.

        The result list is sorted by (pair key, kind) and therefore
        independent of the execution schedule. Failures raise PartialBatch
        (carrying the completed results) unless allow_partial is set.
        """
        combos = [(key, kind) for key in index.sorted_keys() for kind in sorted(kinds, key=lambda k: k.value)]
        if not combos:
            return []
        workers = max_parallel or self._gateway_for(evaluator).profile.max_parallel
        workers = max(1, min(workers, len(combos)))

        results: list[ProbeResult] = []
        failed: list[tuple[PairKey, ProbeKind, str]] = []
        lock = threading.Lock()

        def work(combo: tuple[PairKey, ProbeKind]) -> None:
            (cause_text, effect_text), kind = combo
            try:
                result = self.probe_pair_texts(evaluator, cause_text, effect_text, kind)
            except ChainProbeError as exc:
                with lock:
                    failed.append(((cause_text, effect_text), kind, str(exc)))
                return
            with lock:
                results.append(result)

        if workers == 1:
            for combo in combos:
                work(combo)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(work, combos))

        results.sort(key=lambda r: (r.pair_key, r.probe.value))
        if failed and not allow_partial:
            failed.sort(key=lambda f: (f[0], f[1].value))
            raise PartialBatch(failed, results)
        return results
