"""Command-line entry points for the full evaluation loop.

Every pipeline stage is independently re-runnable against a stored run, and
``run`` executes the whole loop. Exit codes: 0 success, 2 partial results
(probe failures under --allow-partial, or an eval sample smaller than
requested), 1 failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .gateway import ProviderProfile
from .humaneval import (
    DEFAULT_CE_SAMPLE_COUNT,
    DEFAULT_MAX_ITEMS_PER_ANNOTATOR,
    DEFAULT_RATERS_PER_CHAIN,
    assign_annotators,
    select_eval_sample,
)
from .metrics import chain_integrity, MissingLinkVerdict
from .model import ModelRef, ProbeKind
from .pipeline import (
    RunConfig,
    build_fixture_from_run,
    build_gateways,
    load_chain_sets,
    load_pair_indexes,
    load_probe_results,
    prepare_run,
    run_full_evaluation,
    stage_decompose,
    stage_generate,
    stage_ingest,
    stage_metrics,
    stage_parse,
    stage_probe,
)
from .reporting import chain_verdict_map, group_results
from .service import create_app, default_instructions, load_session_payload
from .store import ChainStore, VerdictCache, read_ce_pairs

_PROBE_ALIASES = {
    "A1": ProbeKind.A1_ACTIVE,
    "A2": ProbeKind.A2_REVERSED_ACTIVE,
    "A1P": ProbeKind.A1_PASSIVE,
    "A2P": ProbeKind.A2_REVERSED_PASSIVE,
}


def _parse_probes(spec: str) -> list[ProbeKind]:
    kinds = []
    for token in spec.split(","):
        token = token.strip()
        if not token:
            continue
        upper = token.upper()
        if upper in _PROBE_ALIASES:
            kinds.append(_PROBE_ALIASES[upper])
        else:
            kinds.append(ProbeKind(token))
    return kinds


def _parse_models(spec: str) -> list[ModelRef]:
    return [ModelRef.parse(token.strip()) for token in spec.split(",") if token.strip()]


def _load_profiles(path: str | None) -> dict[str, ProviderProfile]:
    if not path:
        return {}
    payload = json.loads(Path(path).read_text("utf-8"))
    return {name: ProviderProfile.from_dict({"name": name, **cfg}) for name, cfg in payload.items()}


def _config_options(fn):
    options = [
        click.option("--input", "input_path", required=True, help="CE pair CSV or JSONL file"),
        click.option("--store", "store_root", required=True, help="Store root directory"),
        click.option("--models", required=True, help="Generator models, provider:name[,...]"),
        click.option("--evaluators", required=True, help="Evaluator models, provider:name[,...]"),
        click.option("--probes", default="A1,A2,A1P,A2P", show_default=True),
        click.option("--fixtures", "fixture_path", default=None, help="Replay fixture JSONL"),
        click.option("--profiles", "profiles_path", default=None, help="Provider profiles JSON"),
        click.option("--seed", default=0, show_default=True, type=int),
        click.option("--max-parallel", default=4, show_default=True, type=int),
        click.option("--allow-partial", is_flag=True, default=False),
        click.option("--include-repaired", is_flag=True, default=False),
        click.option("--run-id", default=None, help="Override the derived run id"),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


def _build_config(**kwargs) -> RunConfig:
    return RunConfig(
        input_path=kwargs["input_path"],
        store_root=kwargs["store_root"],
        generators=_parse_models(kwargs["models"]),
        evaluators=_parse_models(kwargs["evaluators"]),
        probe_kinds=_parse_probes(kwargs["probes"]),
        profiles=_load_profiles(kwargs["profiles_path"]),
        fixture_path=kwargs["fixture_path"],
        seed=kwargs["seed"],
        max_parallel=kwargs["max_parallel"],
        allow_partial=kwargs["allow_partial"],
        include_repaired=kwargs["include_repaired"],
        run_id=kwargs["run_id"],
    )


def _stored_config(store_root: str, run_id: str) -> RunConfig:
    path = Path(store_root) / run_id / "config.json"
    if not path.exists():
        raise click.ClickException(f"run {run_id} has no config.json under {store_root}")
    d = json.loads(path.read_text("utf-8"))
    return RunConfig(
        input_path=d["input_path"],
        store_root=store_root,
        generators=[ModelRef.from_dict(m) for m in d["generators"]],
        evaluators=[ModelRef.from_dict(m) for m in d["evaluators"]],
        probe_kinds=[ProbeKind(k) for k in d["probe_kinds"]],
        profiles={n: ProviderProfile.from_dict(p) for n, p in d.get("profiles", {}).items()},
        fixture_path=d.get("fixture_path"),
        seed=d.get("seed", 0),
        max_parallel=d.get("max_parallel", 4),
        allow_partial=d.get("allow_partial", False),
        include_repaired=d.get("include_repaired", False),
        run_id=run_id,
        generation_max_tokens=d.get("generation_max_tokens", 2048),
        probe_max_tokens=d.get("probe_max_tokens", 16),
    )


@click.group()
def main() -> None:
    """Generate causal chains for CE pairs and evaluate them diagnostically."""


@main.command()
@_config_options
def run(**kwargs) -> None:
    """Run the full loop: ingest, generate, parse, decompose, probe, metrics."""
    config = _build_config(**kwargs)
    manifest = run_full_evaluation(config)
    click.echo(f"run {manifest.run_id} complete; reports under "
               f"{Path(config.store_root) / manifest.run_id / 'reports'}")
    probe_stage = manifest.stages.get("probe", {})
    if probe_stage.get("failures"):
        click.echo(f"warning: {probe_stage['failures']} probe call(s) failed", err=True)
        sys.exit(2)


def _single_stage(stage_name: str):
    @main.command(name=stage_name, help=f"Run only the {stage_name} stage of an existing run.")
    @click.option("--store", "store_root", required=True)
    @click.option("--run-id", required=True)
    def command(store_root: str, run_id: str) -> None:
        config = _stored_config(store_root, run_id)
        store = ChainStore(store_root)
        if stage_name == "ingest":
            stage_ingest(store, run_id, read_ce_pairs(config.input_path))
        elif stage_name == "generate":
            stage_generate(store, run_id, config, build_gateways(config))
        elif stage_name == "parse":
            stage_parse(store, run_id)
        elif stage_name == "decompose":
            stage_decompose(store, run_id)
        elif stage_name == "probe":
            cache = VerdictCache(store.run_dir(run_id) / "verdict_cache.jsonl")
            failures = stage_probe(store, run_id, config, build_gateways(config), cache)
            if failures:
                click.echo(f"{len(failures)} probe call(s) failed", err=True)
                sys.exit(2)
        elif stage_name == "metrics":
            stage_metrics(store, run_id, config)
        click.echo(f"stage {stage_name} done for {run_id}")

    return command


for _name in ("ingest", "generate", "parse", "decompose", "probe", "metrics"):
    _single_stage(_name)


@main.command(name="report")
@click.option("--store", "store_root", required=True)
@click.option("--run-id", required=True)
def report_cmd(store_root: str, run_id: str) -> None:
    """Regenerate reports from stored records (bit-identical to originals)."""
    config = _stored_config(store_root, run_id)
    stage_metrics(ChainStore(store_root), run_id, config)
    click.echo(f"reports regenerated under {Path(store_root) / run_id / 'reports'}")


@main.command(name="init-run")
@_config_options
def init_run(**kwargs) -> None:
    """Create the run directory and manifest without executing any stage."""
    config = _build_config(**kwargs)
    manifest = prepare_run(config, ChainStore(config.store_root))
    click.echo(manifest.run_id)


@main.command(name="replay-record")
@click.option("--store", "store_root", required=True)
@click.option("--run-id", required=True)
@click.option("--output", required=True, help="Fixture JSONL to write")
def replay_record(store_root: str, run_id: str, output: str) -> None:
    """Capture a run's recorded responses as replay fixtures."""
    fixture = build_fixture_from_run(ChainStore(store_root), run_id)
    fixture.save(output)
    click.echo(f"wrote {len(fixture)} fixture entries to {output}")


@main.command(name="select-human-eval")
@click.option("--store", "store_root", required=True)
@click.option("--run-id", required=True)
@click.option("--n-ce", default=DEFAULT_CE_SAMPLE_COUNT, show_default=True, type=int)
@click.option("--generator", "generator_key", default=None,
              help="Generator key to sample from (default: best by mean integrity)")
@click.option("--annotators", default=10, show_default=True, type=int)
@click.option("--per-chain", default=DEFAULT_RATERS_PER_CHAIN, show_default=True, type=int)
@click.option("--max-items", default=DEFAULT_MAX_ITEMS_PER_ANNOTATOR, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--include-repaired", is_flag=True, default=False,
              help="Admit anchor-repaired chains as candidates")
def select_human_eval(
    store_root: str,
    run_id: str,
    n_ce: int,
    generator_key: str | None,
    annotators: int,
    per_chain: int,
    max_items: int,
    seed: int,
    include_repaired: bool,
) -> None:
    """Curate the human-eval sample and emit a servable session payload."""
    store = ChainStore(store_root)
    chain_sets = load_chain_sets(store, run_id)
    indexes = load_pair_indexes(store, run_id)
    results_by_evaluator = load_probe_results(store, run_id)

    chains_by_generator: dict[str, list] = {}
    for cs in chain_sets:
        chains_by_generator.setdefault(cs.generator_model.key(), []).extend(cs.chains)

    # Integrity votes per chain per evaluator, from the stored verdicts.
    votes: dict[str, dict[str, bool]] = {}
    mean_integrity: dict[str, list[float]] = {}
    for gkey, chains in sorted(chains_by_generator.items()):
        index = indexes.get(gkey)
        if index is None:
            continue
        for evaluator, results in sorted(results_by_evaluator.items(), key=lambda kv: kv[0].key()):
            verdict_map = chain_verdict_map(index, group_results(results))
            valid = 0
            counted = 0
            for chain in chains:
                if not chain.is_structurally_valid or chain.id not in verdict_map:
                    continue
                if chain.anchor_repaired and not include_repaired:
                    continue
                try:
                    ok = chain_integrity(chain, verdict_map[chain.id])
                except MissingLinkVerdict:
                    continue
                votes.setdefault(chain.id, {})[evaluator.key()] = ok
                valid += ok
                counted += 1
            if counted:
                mean_integrity.setdefault(gkey, []).append(valid / counted)

    if generator_key is None:
        scored = {
            g: sum(values) / len(values) for g, values in mean_integrity.items() if values
        }
        if not scored:
            raise click.ClickException("no generator has integrity verdicts to rank by")
        generator_key = max(sorted(scored), key=lambda g: scored[g])
        click.echo(f"selected generator {generator_key} (mean integrity {scored[generator_key]:.3f})")

    candidate_chains = [
        c for c in chains_by_generator.get(generator_key, []) if c.id in votes
    ]
    selection = select_eval_sample(candidate_chains, votes, n_ce)
    annotator_ids = [f"annotator-{i:02d}" for i in range(1, annotators + 1)]
    plan = assign_annotators(
        selection.samples,
        annotator_ids,
        per_chain,
        max_items_per_annotator=max_items,
        seed=seed,
    )

    chain_views = {}
    for chain in candidate_chains:
        chain_views[chain.id] = {
            "chain_id": chain.id,
            "events": [e.text for e in chain.events],
        }
    payload = {
        "samples": [s.to_dict() for s in selection.samples],
        "plan": plan.to_dict(),
        "chains": {
            cid: chain_views[cid] for item in plan.items
            for cid in (item.sample.maintained_chain_id, item.sample.violated_chain_id)
        },
        "instructions": default_instructions(),
    }
    store.write_json_report(run_id, "human_eval_samples.json", [s.to_dict() for s in selection.samples])
    session_path = store.reports_dir(run_id) / "humaneval_session.json"
    session_path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    click.echo(f"{len(selection.samples)} samples ({2 * len(selection.samples)} chains); "
               f"session payload at {session_path}")
    if selection.insufficient:
        click.echo(
            f"warning: only {selection.eligible} eligible CE pairs of {n_ce} requested", err=True
        )
        sys.exit(2)


@main.command(name="serve-annotation")
@click.option("--session-file", default=None, help="Session payload JSON to preload")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8400, show_default=True, type=int)
def serve_annotation(session_file: str | None, host: str, port: int) -> None:
    """Serve the annotation HTTP API (consumed by the browser UI)."""
    import uvicorn

    app = create_app()
    if session_file:
        created = app.state.register_session(load_session_payload(session_file))
        click.echo(f"session {created['session_id']} with annotators: "
                   + ", ".join(created["annotators"]))
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
