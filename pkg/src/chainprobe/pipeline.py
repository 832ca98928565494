"""End-to-end orchestration: generate, parse, decompose, probe, metrics.

Stages read their inputs from the run store and append only records that are
not already present, so a crashed or rerun stage never duplicates data and a
completed run re-executes without any provider call. Stage completion is
tracked in the manifest; resumption picks up at the first incomplete stage.
"""

from __future__ import annotations

import hashlib
import json
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from .decompose import PairIndex, build_pair_index
from .gateway import (
    CompletionRequest,
    ProviderGateway,
    ProviderProfile,
    ReplayFixture,
    replay_key,
    replay_profile,
)
from .model import CEPair, ChainProbeError, ModelRef, ProbeKind, content_digest
from .parser import ChainIssue, IssueCode, NoChainsFound, ParsedChainSet, parse_generation_output
from .probe import PartialBatch, ProbeEngine, ProbeResult
from .prompts import all_template_versions, render_generation_prompt, render_probe_prompt_texts
from .reporting import build_report, descriptive_text_table
from .store import ChainStore, RunManifest, VerdictCache, read_ce_pairs
from .metrics import IntegrityMatrix

GENERATION_MAX_TOKENS = 2048
PROBE_MAX_TOKENS = 16

STAGES = ("ingest", "generate", "parse", "decompose", "probe", "metrics")


@dataclass
class RunConfig:
    input_path: str
    store_root: str
    generators: list[ModelRef]
    evaluators: list[ModelRef]
    probe_kinds: list[ProbeKind] = field(
        default_factory=lambda: [
            ProbeKind.A1_ACTIVE,
            ProbeKind.A2_REVERSED_ACTIVE,
            ProbeKind.A1_PASSIVE,
            ProbeKind.A2_REVERSED_PASSIVE,
        ]
    )
    profiles: dict[str, ProviderProfile] = field(default_factory=dict)
    fixture_path: str | None = None
    seed: int = 0
    max_parallel: int = 4
    allow_partial: bool = False
    include_repaired: bool = False
    run_id: str | None = None
    generation_max_tokens: int = GENERATION_MAX_TOKENS
    probe_max_tokens: int = PROBE_MAX_TOKENS

    def __post_init__(self) -> None:
        if not self.generators:
            raise ValueError("at least one generator model is required")
        if not self.evaluators:
            raise ValueError("at least one evaluator model is required")

    def digest(self, input_digest: str, fixture_digest: str) -> str:
        """Config identity: everything that shapes outputs, no local paths."""
        return content_digest(
            {
                "generators": [m.to_dict() for m in self.generators],
                "evaluators": [m.to_dict() for m in self.evaluators],
                "probe_kinds": [k.value for k in self.probe_kinds],
                "profiles": {n: p.to_dict() for n, p in sorted(self.profiles.items())},
                "seed": self.seed,
                "include_repaired": self.include_repaired,
                "generation_max_tokens": self.generation_max_tokens,
                "probe_max_tokens": self.probe_max_tokens,
                "input_digest": input_digest,
                "fixture_digest": fixture_digest,
            }
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_path": self.input_path,
            "store_root": self.store_root,
            "generators": [m.to_dict() for m in self.generators],
            "evaluators": [m.to_dict() for m in self.evaluators],
            "probe_kinds": [k.value for k in self.probe_kinds],
            "profiles": {n: p.to_dict() for n, p in sorted(self.profiles.items())},
            "fixture_path": self.fixture_path,
            "seed": self.seed,
            "max_parallel": self.max_parallel,
            "allow_partial": self.allow_partial,
            "include_repaired": self.include_repaired,
            "run_id": self.run_id,
            "generation_max_tokens": self.generation_max_tokens,
            "probe_max_tokens": self.probe_max_tokens,
        }


def _file_digest(path: str | Path | None) -> str:
    if path is None:
        return ""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def build_gateways(config: RunConfig) -> dict[str, ProviderGateway]:
    """One gateway per provider named by the configured models."""
    fixture = ReplayFixture.load(config.fixture_path) if config.fixture_path else None
    providers = {m.provider for m in config.generators} | {m.provider for m in config.evaluators}
    gateways: dict[str, ProviderGateway] = {}
    for provider in sorted(providers):
        profile = config.profiles.get(provider)
        if profile is None:
            if provider == "replay":
                profile = replay_profile(max_parallel=config.max_parallel)
            else:
                raise ChainProbeError(
                    f"no provider profile configured for {provider!r} "
                    "(supply a profiles file or use the replay provider with --fixtures)"
                )
        gateways[provider] = ProviderGateway(
            profile, fixture=fixture if profile.is_replay else None
        )
    return gateways


# ---------------------------------------------------------------------------
# Stage implementations (idempotent: they only append missing records)
# ---------------------------------------------------------------------------


def stage_ingest(store: ChainStore, run_id: str, pairs: list[CEPair]) -> None:
    existing = {r["id"] for r in store.load_records(run_id, "ce_pairs").records}
    store.append_records(
        run_id, "ce_pairs", (p.to_dict() for p in pairs if p.id not in existing)
    )


def _load_pairs(store: ChainStore, run_id: str) -> list[CEPair]:
    return [CEPair.from_dict(r) for r in store.load_records(run_id, "ce_pairs").records]


def stage_generate(
    store: ChainStore, run_id: str, config: RunConfig, gateways: dict[str, ProviderGateway]
) -> None:
    pairs = _load_pairs(store, run_id)
    existing = {
        (r["ce_pair_id"], ModelRef.from_dict(r["generator_model"]).key())
        for r in store.load_records(run_id, "generations").records
    }
    todo = [
        (ce, generator)
        for generator in sorted(config.generators, key=lambda m: m.key())
        for ce in pairs
        if (ce.id, generator.key()) not in existing
    ]
    if not todo:
        return

    results: dict[tuple[str, str], str] = {}
    results_lock = threading.Lock()

    def work(job: tuple[CEPair, ModelRef]) -> None:
        ce, generator = job
        request = CompletionRequest(
            model=generator,
            prompt=render_generation_prompt(ce),
            max_output_tokens=config.generation_max_tokens,
            temperature=None,
        )
        response = gateways[generator.provider].complete(request)
        with results_lock:
            results[(ce.id, generator.key())] = response.text

    workers = max(1, min(config.max_parallel, len(todo)))
    if workers == 1:
        for job in todo:
            work(job)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(work, todo))

    records = [
        {
            "ce_pair_id": ce.id,
            "generator_model": generator.to_dict(),
            "text": results[(ce.id, generator.key())],
        }
        for ce, generator in todo
    ]
    records.sort(key=lambda r: (ModelRef.from_dict(r["generator_model"]).key(), r["ce_pair_id"]))
    store.append_records(run_id, "generations", records)


def stage_parse(store: ChainStore, run_id: str) -> None:
    pairs = {p.id: p for p in _load_pairs(store, run_id)}
    existing = {
        (r["ce_pair_id"], ModelRef.from_dict(r["generator_model"]).key())
        for r in store.load_records(run_id, "chains").records
    }
    new_sets: list[ParsedChainSet] = []
    for record in store.load_records(run_id, "generations").records:
        generator = ModelRef.from_dict(record["generator_model"])
        key = (record["ce_pair_id"], generator.key())
        if key in existing:
            continue
        ce = pairs[record["ce_pair_id"]]
        try:
            parsed = parse_generation_output(record["text"], ce, generator)
        except NoChainsFound as exc:
            parsed = ParsedChainSet(
                ce_pair_id=ce.id,
                generator_model=generator,
                chains=(),
                issues=(ChainIssue(IssueCode.UNPARSEABLE_SEGMENT, None, str(exc)),),
            )
        new_sets.append(parsed)
    new_sets.sort(key=lambda s: (s.generator_model.key(), s.ce_pair_id))
    store.append_records(run_id, "chains", (s.to_dict() for s in new_sets))


def load_chain_sets(store: ChainStore, run_id: str) -> list[ParsedChainSet]:
    return [ParsedChainSet.from_dict(r) for r in store.load_records(run_id, "chains").records]


def stage_decompose(store: ChainStore, run_id: str) -> None:
    chain_sets = load_chain_sets(store, run_id)
    existing = {
        (r["generator"], r["cause_text"], r["effect_text"])
        for r in store.load_records(run_id, "pairs").records
    }
    by_generator: dict[str, list] = {}
    for cs in chain_sets:
        by_generator.setdefault(cs.generator_model.key(), []).extend(cs.chains)
    records = []
    for generator_key in sorted(by_generator):
        index = build_pair_index(by_generator[generator_key])
        for record in index.to_records():
            if (generator_key, record["cause_text"], record["effect_text"]) in existing:
                continue
            records.append({"generator": generator_key, **record})
    store.append_records(run_id, "pairs", records)


def load_pair_indexes(store: ChainStore, run_id: str) -> dict[str, PairIndex]:
    by_generator: dict[str, list[dict[str, Any]]] = {}
    for record in store.load_records(run_id, "pairs").records:
        by_generator.setdefault(record["generator"], []).append(record)
    return {g: PairIndex.from_records(records) for g, records in by_generator.items()}


def stage_probe(
    store: ChainStore,
    run_id: str,
    config: RunConfig,
    gateways: dict[str, ProviderGateway],
    cache: VerdictCache,
) -> list[tuple]:
    """Probe every (evaluator, unique pair, kind); returns failure tuples."""
    indexes = load_pair_indexes(store, run_id)
    engine = ProbeEngine(gateways, cache, max_output_tokens=config.probe_max_tokens)
    existing = {
        (
            ModelRef.from_dict(r["evaluator_model"]).key(),
            (r["pair_key"][0], r["pair_key"][1]),
            r["probe"],
        )
        for r in store.load_records(run_id, "verdicts").records
    }
    new_results: dict[tuple[str, tuple[str, str], str], ProbeResult] = {}
    failures: list[tuple] = []
    for evaluator in sorted(config.evaluators, key=lambda m: m.key()):
        for generator_key in sorted(indexes):
            try:
                results = engine.run_probe_batch(
                    evaluator,
                    indexes[generator_key],
                    config.probe_kinds,
                    max_parallel=config.max_parallel,
                    allow_partial=False,
                )
            except PartialBatch as exc:
                failures.extend((evaluator.key(), k, kind.value, msg) for k, kind, msg in exc.failed)
                results = exc.results
            for result in results:
                row_key = (evaluator.key(), result.pair_key, result.probe.value)
                if row_key in existing or row_key in new_results:
                    continue
                new_results[row_key] = result
    if failures and not config.allow_partial:
        raise PartialBatch(
            [((f[1]), ProbeKind(f[2]), f[3]) for f in failures],
            list(new_results.values()),
        )
    rows = [new_results[k] for k in sorted(new_results)]
    store.append_records(run_id, "verdicts", (r.to_dict() for r in rows))
    return failures


def load_probe_results(store: ChainStore, run_id: str) -> dict[ModelRef, list[ProbeResult]]:
    results: dict[ModelRef, list[ProbeResult]] = {}
    for record in store.load_records(run_id, "verdicts").records:
        result = ProbeResult.from_dict(record)
        results.setdefault(result.evaluator_model, []).append(result)
    return results


def stage_metrics(store: ChainStore, run_id: str, config: RunConfig) -> dict[str, Any]:
    chain_sets = load_chain_sets(store, run_id)
    results_by_evaluator = load_probe_results(store, run_id)
    report = build_report(
        chain_sets,
        results_by_evaluator,
        include_repaired=config.include_repaired,
        ce_pairs=_load_pairs(store, run_id),
    )
    store.write_json_report(run_id, "report.json", report)
    store.write_report(run_id, "descriptive.txt", descriptive_text_table(report["descriptive"]))
    for dataset, section in report.get("descriptive_by_dataset", {}).items():
        store.write_report(run_id, f"descriptive_{dataset}.txt", descriptive_text_table(section))
    if report.get("integrity_matrix"):
        matrix = IntegrityMatrix(
            generators=tuple(ModelRef.from_dict(m) for m in report["integrity_matrix"]["generators"]),
            evaluators=tuple(ModelRef.from_dict(m) for m in report["integrity_matrix"]["evaluators"]),
            proportion_valid=tuple(
                tuple(row) for row in report["integrity_matrix"]["proportion_valid"]
            ),
            counts=tuple(
                tuple(tuple(c) if c else None for c in row)
                for row in report["integrity_matrix"]["counts"]
            ),
        )
        store.write_report(run_id, "integrity_matrix.csv", matrix.to_csv())
    return report


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------


def prepare_run(config: RunConfig, store: ChainStore) -> RunManifest:
    """Create or reopen the run determined by the config and input digests."""
    input_digest = _file_digest(config.input_path)
    fixture_digest = _file_digest(config.fixture_path)
    config_digest = config.digest(input_digest, fixture_digest)
    run_id = config.run_id or f"run-{config_digest[:12]}"
    if store.run_exists(run_id):
        return store.load_manifest(run_id)
    manifest = RunManifest(
        run_id=run_id,
        created_at=datetime.now(timezone.utc).isoformat(),
        config_digest=config_digest,
        template_versions=all_template_versions(),
        input_digest=input_digest,
        model_list=sorted(
            {m for m in config.generators} | {m for m in config.evaluators},
            key=lambda m: m.key(),
        ),
        seed=config.seed,
        stages={},
    )
    store.create_run(manifest)
    run_dir = store.run_dir(run_id)
    (run_dir / "config.json").write_text(
        json.dumps(config.to_dict(), sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    return manifest


def run_full_evaluation(config: RunConfig) -> RunManifest:
    """Execute all stages under one run id; failures are recorded per stage.

    A rerun with the same config reuses the same run id, skips completed
    stages, and therefore makes no provider calls.
    """
    store = ChainStore(config.store_root)
    manifest = prepare_run(config, store)
    run_id = manifest.run_id
    gateways = build_gateways(config)
    cache = VerdictCache(store.run_dir(run_id) / "verdict_cache.jsonl")
    pairs = read_ce_pairs(config.input_path)

    def run_stage(name: str, fn) -> Any:
        state = manifest.stages.get(name, {})
        if state.get("status") == "completed":
            return None
        try:
            outcome = fn()
        except Exception as exc:
            manifest.stages[name] = {
                "status": "failed",
                "error": f"{type(exc).__name__}: {exc}",
            }
            store.write_manifest(manifest)
            raise
        manifest.stages[name] = {"status": "completed"}
        if name == "probe" and outcome:
            manifest.stages[name]["failures"] = len(outcome)
        store.write_manifest(manifest)
        return outcome

    try:
        run_stage("ingest", lambda: stage_ingest(store, run_id, pairs))
        run_stage("generate", lambda: stage_generate(store, run_id, config, gateways))
        run_stage("parse", lambda: stage_parse(store, run_id))
        run_stage("decompose", lambda: stage_decompose(store, run_id))
        run_stage("probe", lambda: stage_probe(store, run_id, config, gateways, cache))
        run_stage("metrics", lambda: stage_metrics(store, run_id, config))
    finally:
        for gateway in gateways.values():
            gateway.close()
    return store.load_manifest(run_id)


# ---------------------------------------------------------------------------
# Fixture capture
# ---------------------------------------------------------------------------


def build_fixture_from_run(store: ChainStore, run_id: str) -> ReplayFixture:
    """Turn a run's recorded generations and verdicts into replay fixtures."""
    fixture = ReplayFixture()
    pairs = {p.id: p for p in _load_pairs(store, run_id)}
    for record in store.load_records(run_id, "generations").records:
        generator = ModelRef.from_dict(record["generator_model"])
        prompt = render_generation_prompt(pairs[record["ce_pair_id"]])
        fixture.record(replay_key(generator.model_name, prompt), record["text"])
    for record in store.load_records(run_id, "verdicts").records:
        result = ProbeResult.from_dict(record)
        prompt = render_probe_prompt_texts(result.probe, result.pair_key[0], result.pair_key[1])
        fixture.record(
            replay_key(result.evaluator_model.model_name, prompt), result.raw_answer
        )
    return fixture
