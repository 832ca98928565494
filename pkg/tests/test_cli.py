from __future__ import annotations

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from chainprobe.cli import main
from chainprobe.gateway import ReplayFixture

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def runner():
    return CliRunner()


def run_args(store: Path, **extra) -> list[str]:
    args = [
        "run",
        "--input", str(FIXTURES / "ce_pairs_table1.csv"),
        "--store", str(store),
        "--models", "replay:mock-alpha,replay:mock-beta",
        "--evaluators", "replay:mock-alpha,replay:mock-beta",
        "--fixtures", str(FIXTURES / "table1_replay.jsonl"),
        "--seed", "7",
        "--max-parallel", "4",
    ]
    for key, value in extra.items():
        args += [key, value]
    return args


def run_id_in(store: Path) -> str:
    return next(p.name for p in store.iterdir() if p.is_dir())


def test_run_and_single_stage_commands(runner, tmp_path):
    store = tmp_path / "store"
    result = runner.invoke(main, run_args(store))
    assert result.exit_code == 0, result.output
    run_id = run_id_in(store)
    assert (store / run_id / "reports" / "report.json").exists()

    # Stage rerun against the stored config is a no-op but must succeed.
    for stage in ("ingest", "generate", "parse", "decompose", "probe", "metrics"):
        stage_result = runner.invoke(main, [stage, "--store", str(store), "--run-id", run_id])
        assert stage_result.exit_code == 0, stage_result.output

    report = runner.invoke(main, ["report", "--store", str(store), "--run-id", run_id])
    assert report.exit_code == 0


def test_missing_api_key_names_env_var(runner, tmp_path):
    profiles = tmp_path / "profiles.json"
    profiles.write_text(
        json.dumps(
            {
                "acme": {
                    "endpoint_url": "https://api.acme.test/v1/chat/completions",
                    "auth_env_var": "ACME_API_KEY",
                }
            }
        ),
        encoding="utf-8",
    )
    args = [
        "run",
        "--input", str(FIXTURES / "ce_pairs_table1.csv"),
        "--store", str(tmp_path / "store"),
        "--models", "acme:some-model",
        "--evaluators", "acme:some-model",
        "--profiles", str(profiles),
    ]
    result = runner.invoke(main, args)
    assert result.exit_code != 0
    assert "ACME_API_KEY" in str(result.exception)


def test_replay_record_round_trip(runner, tmp_path):
    store = tmp_path / "store"
    assert runner.invoke(main, run_args(store)).exit_code == 0
    run_id = run_id_in(store)
    out = tmp_path / "captured.jsonl"
    result = runner.invoke(
        main, ["replay-record", "--store", str(store), "--run-id", run_id, "--output", str(out)]
    )
    assert result.exit_code == 0, result.output
    captured = ReplayFixture.load(out)
    original = ReplayFixture.load(FIXTURES / "table1_replay.jsonl")
    # Every captured key/answer must agree with the source fixture.
    for key, text in captured._entries.items():
        assert original.lookup(key) == text


def test_select_human_eval_emits_session_payload(runner, tmp_path):
    store = tmp_path / "store"
    assert runner.invoke(main, run_args(store)).exit_code == 0
    run_id = run_id_in(store)
    result = runner.invoke(
        main,
        [
            "select-human-eval",
            "--store", str(store),
            "--run-id", run_id,
            "--n-ce", "2",
            "--annotators", "4",
            "--per-chain", "4",
            "--max-items", "6",
            "--seed", "3",
        ],
    )
    assert result.exit_code in (0, 2), result.output
    session_path = store / run_id / "reports" / "humaneval_session.json"
    assert session_path.exists()
    payload = json.loads(session_path.read_text("utf-8"))
    assert payload["samples"]
    assert payload["plan"]["items"]
    assert payload["instructions"]["text"]
    for item in payload["plan"]["items"]:
        for chain_id in (
            item["sample"]["maintained_chain_id"],
            item["sample"]["violated_chain_id"],
        ):
            assert chain_id in payload["chains"]
            assert payload["chains"][chain_id]["events"]


def test_probe_alias_parsing():
    from chainprobe.cli import _parse_probes
    from chainprobe.model import ProbeKind

    assert _parse_probes("A1,A2,A1P,A2P") == [
        ProbeKind.A1_ACTIVE,
        ProbeKind.A2_REVERSED_ACTIVE,
        ProbeKind.A1_PASSIVE,
        ProbeKind.A2_REVERSED_PASSIVE,
    ]
    assert _parse_probes("A1_Active") == [ProbeKind.A1_ACTIVE]
