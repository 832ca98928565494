from __future__ import annotations

import threading

import pytest

from chainprobe.model import (
    BeliefGroup,
    CEPair,
    Dataset,
    ModelRef,
    ProbeKind,
)
from chainprobe.store import (
    ChainStore,
    RunManifest,
    SerializationFailure,
    UnknownRecordKind,
    UnknownRun,
    VerdictCache,
    cache_key,
    read_ce_pairs,
)


@pytest.fixture
def store(tmp_path):
    return ChainStore(tmp_path / "store")


@pytest.fixture
def manifest():
    return RunManifest(
        run_id="run-test",
        created_at="2026-01-01T00:00:00+00:00",
        config_digest="cfg",
        template_versions={"Gen": "abc"},
        input_digest="inp",
        model_list=[ModelRef(provider="replay", model_name="m")],
        seed=7,
    )


class TestRunStore:
    def test_manifest_round_trip(self, store, manifest):
        store.create_run(manifest)
        loaded = store.load_manifest("run-test")
        assert loaded == manifest

    def test_unknown_run(self, store):
        with pytest.raises(UnknownRun):
            store.load_records("nope", "chains")

    def test_append_and_load_in_order(self, store, manifest):
        store.create_run(manifest)
        ids = [store.append_record("run-test", "chains", {"i": i}) for i in range(3)]
        outcome = store.load_records("run-test", "chains")
        assert [r["i"] for r in outcome.records] == [0, 1, 2]
        assert outcome.malformed == []
        offsets = [r.offset for r in ids]
        assert offsets == sorted(offsets) and len(set(offsets)) == 3

    def test_append_to_unknown_run(self, store):
        with pytest.raises(UnknownRun):
            store.append_record("nope", "chains", {})

    def test_unknown_kind(self, store, manifest):
        store.create_run(manifest)
        with pytest.raises(UnknownRecordKind):
            store.append_record("run-test", "bogus", {})

    def test_unserializable_record(self, store, manifest):
        store.create_run(manifest)
        with pytest.raises(SerializationFailure):
            store.append_record("run-test", "chains", {"x": object()})

    def test_corrupted_line_reported_others_returned(self, store, manifest):
        store.create_run(manifest)
        store.append_record("run-test", "chains", {"i": 0})
        path = store.run_dir("run-test") / "chains.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write("{broken json\n")
        store.append_record("run-test", "chains", {"i": 2})
        outcome = store.load_records("run-test", "chains")
        assert [r["i"] for r in outcome.records] == [0, 2]
        assert len(outcome.malformed) == 1
        assert outcome.malformed[0][0] == 2  # line number

    def test_empty_kind_file(self, store, manifest):
        store.create_run(manifest)
        assert store.load_records("run-test", "verdicts").records == []

    def test_reports(self, store, manifest):
        store.create_run(manifest)
        path = store.write_json_report("run-test", "report.json", {"a": 1})
        assert path.read_text("utf-8") == '{\n  "a": 1\n}\n'


class TestCacheKey:
    EVALUATOR = ModelRef(provider="replay", model_name="eval-a")

    def test_deterministic(self):
        a = cache_key(self.EVALUATOR, "v1", "x one", "y two", ProbeKind.A1_ACTIVE)
        b = cache_key(self.EVALUATOR, "v1", "x one", "y two", ProbeKind.A1_ACTIVE)
        assert a == b

    def test_kind_changes_key(self):
        a = cache_key(self.EVALUATOR, "v1", "x one", "y two", ProbeKind.A1_ACTIVE)
        b = cache_key(self.EVALUATOR, "v1", "x one", "y two", ProbeKind.A1_PASSIVE)
        assert a != b

    def test_direction_changes_key(self):
        a = cache_key(self.EVALUATOR, "v1", "x one", "y two", ProbeKind.A1_ACTIVE)
        b = cache_key(self.EVALUATOR, "v1", "y two", "x one", ProbeKind.A1_ACTIVE)
        assert a != b

    def test_template_version_changes_key(self):
        a = cache_key(self.EVALUATOR, "v1", "x one", "y two", ProbeKind.A1_ACTIVE)
        b = cache_key(self.EVALUATOR, "v2", "x one", "y two", ProbeKind.A1_ACTIVE)
        assert a != b


class TestVerdictCache:
    def test_put_get(self, tmp_path):
        cache = VerdictCache(tmp_path / "cache.jsonl")
        assert cache.get("k") is None
        assert cache.put("k", "Yes", "Causal") is True
        assert cache.get("k")["raw_answer"] == "Yes"

    def test_idempotent_insert(self, tmp_path):
        cache = VerdictCache(tmp_path / "cache.jsonl")
        assert cache.put("k", "Yes", "Causal") is True
        assert cache.put("k", "No", "NonCausal") is False
        assert cache.get("k")["verdict"] == "Causal"

    def test_persistence(self, tmp_path):
        path = tmp_path / "cache.jsonl"
        VerdictCache(path).put("k", "Yes", "Causal")
        reloaded = VerdictCache(path)
        assert reloaded.get("k")["verdict"] == "Causal"
        assert len(reloaded) == 1

    def test_concurrent_inserts_single_entry(self, tmp_path):
        cache = VerdictCache(tmp_path / "cache.jsonl")
        wins = []

        def insert(i):
            if cache.put("shared", f"answer-{i}", "Causal"):
                wins.append(i)

        threads = [threading.Thread(target=insert, args=(i,)) for i in range(16)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert len(wins) == 1
        assert len(VerdictCache(tmp_path / "cache.jsonl")) == 1

    def test_memory_only(self):
        cache = VerdictCache(None)
        cache.put("k", "no", "NonCausal")
        assert cache.get("k")["verdict"] == "NonCausal"


class TestReadCEPairs:
    def test_csv(self, tmp_path):
        path = tmp_path / "pairs.csv"
        path.write_text(
            "id,cause,effect,dataset,message,group\n"
            'ce-1,CO2 emissions,Ocean acidification,PolarIs4CAUS,"msg, with comma",skeptic\n'
            "ce-2,Business,Climate change,PolarIs4CAUS,,\n",
            encoding="utf-8",
        )
        pairs = read_ce_pairs(path)
        assert len(pairs) == 2
        assert pairs[0].group == BeliefGroup.SKEPTIC
        assert pairs[0].source_message == "msg, with comma"
        assert pairs[1].group is None
        assert pairs[1].dataset == Dataset.POLARIS4

    def test_csv_missing_columns(self, tmp_path):
        path = tmp_path / "pairs.csv"
        path.write_text("id,cause\nce-1,x\n", encoding="utf-8")
        with pytest.raises(ValueError, match="effect"):
            read_ce_pairs(path)

    def test_jsonl(self, tmp_path):
        path = tmp_path / "pairs.jsonl"
        pair = CEPair(id="ce-1", cause_text="Business", effect_text="Climate change")
        path.write_text(
            '{"id": "ce-1", "cause_text": "Business", "effect_text": "Climate change"}\n',
            encoding="utf-8",
        )
        assert read_ce_pairs(path) == [pair]
