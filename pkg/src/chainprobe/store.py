"""Append-only JSONL persistence for runs, plus the probe verdict cache.

Layout per run: <root>/<run_id>/{manifest.json, ce_pairs.jsonl,
generations.jsonl, chains.jsonl, pairs.jsonl, verdicts.jsonl, reports/}.
One JSON record per line, UTF-8, canonical key order, append-only. Volumes
are desk-scale, so plain files beat a database for diffing and releasing.
"""

from __future__ import annotations

import csv
import io
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from .model import (
    BeliefGroup,
    CEPair,
    ChainProbeError,
    Dataset,
    ModelRef,
    ProbeKind,
    canonical_json,
    content_digest,
)

RECORD_KINDS = ("ce_pairs", "generations", "chains", "pairs", "verdicts")


class UnknownRun(ChainProbeError):
    """The requested run id does not exist under the store root."""


class SerializationFailure(ChainProbeError):
    """A record could not be encoded as JSON."""


class UnknownRecordKind(ChainProbeError):
    """Record kind outside the documented list."""


@dataclass
class RunManifest:
    run_id: str
    created_at: str
    config_digest: str
    template_versions: dict[str, str]
    input_digest: str
    model_list: list[ModelRef]
    seed: int = 0
    stages: dict[str, dict[str, Any]] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "created_at": self.created_at,
            "config_digest": self.config_digest,
            "template_versions": dict(self.template_versions),
            "input_digest": self.input_digest,
            "model_list": [m.to_dict() for m in self.model_list],
            "seed": self.seed,
            "stages": self.stages,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "RunManifest":
        return cls(
            run_id=d["run_id"],
            created_at=d["created_at"],
            config_digest=d["config_digest"],
            template_versions=d.get("template_versions", {}),
            input_digest=d.get("input_digest", ""),
            model_list=[ModelRef.from_dict(m) for m in d.get("model_list", [])],
            seed=d.get("seed", 0),
            stages=d.get("stages", {}),
        )


@dataclass(frozen=True)
class RecordId:
    file: str
    offset: int


@dataclass
class LoadOutcome:
    """Read-back result: well-formed records plus line-level diagnostics."""

    records: list[dict[str, Any]]
    malformed: list[tuple[int, str]] = field(default_factory=list)


class ChainStore:
    """Single-writer-per-run store rooted at a directory."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def run_dir(self, run_id: str) -> Path:
        return self.root / run_id

    def _require_run(self, run_id: str) -> Path:
        run_dir = self.run_dir(run_id)
        if not (run_dir / "manifest.json").exists():
            raise UnknownRun(f"run {run_id} not found under {self.root}")
        return run_dir

    def run_exists(self, run_id: str) -> bool:
        return (self.run_dir(run_id) / "manifest.json").exists()

    def create_run(self, manifest: RunManifest) -> Path:
        run_dir = self.run_dir(manifest.run_id)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "reports").mkdir(exist_ok=True)
        self.write_manifest(manifest)
        return run_dir

    def write_manifest(self, manifest: RunManifest) -> None:
        path = self.run_dir(manifest.run_id) / "manifest.json"
        path.write_text(
            json.dumps(manifest.to_dict(), sort_keys=True, ensure_ascii=False, indent=2) + "\n",
            encoding="utf-8",
        )

    def load_manifest(self, run_id: str) -> RunManifest:
        run_dir = self._require_run(run_id)
        return RunManifest.from_dict(json.loads((run_dir / "manifest.json").read_text("utf-8")))

    def _kind_path(self, run_id: str, kind: str) -> Path:
        if kind not in RECORD_KINDS:
            raise UnknownRecordKind(f"record kind {kind!r} not in {RECORD_KINDS}")
        return self.run_dir(run_id) / f"{kind}.jsonl"

    def append_record(self, run_id: str, kind: str, record: dict[str, Any]) -> RecordId:
        self._require_run(run_id)
        path = self._kind_path(run_id, kind)
        try:
            line = canonical_json(record)
        except (TypeError, ValueError) as exc:
            raise SerializationFailure(f"cannot serialize {kind} record: {exc}") from exc
        with self._lock:
            with open(path, "a", encoding="utf-8") as fh:
                offset = fh.tell()
                fh.write(line + "\n")
        return RecordId(file=str(path), offset=offset)

    def append_records(self, run_id: str, kind: str, records: Iterable[dict[str, Any]]) -> int:
        count = 0
        for record in records:
            self.append_record(run_id, kind, record)
            count += 1
        return count

    def load_records(self, run_id: str, kind: str) -> LoadOutcome:
        self._require_run(run_id)
        path = self._kind_path(run_id, kind)
        outcome = LoadOutcome(records=[])
        if not path.exists():
            return outcome
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    outcome.records.append(json.loads(line))
                except json.JSONDecodeError as exc:
                    outcome.malformed.append((line_no, str(exc)))
        return outcome

    def record_count(self, run_id: str, kind: str) -> int:
        return len(self.load_records(run_id, kind).records)

    # -- reports ------------------------------------------------------------

    def reports_dir(self, run_id: str) -> Path:
        path = self._require_run(run_id) / "reports"
        path.mkdir(exist_ok=True)
        return path

    def write_report(self, run_id: str, name: str, content: str) -> Path:
        path = self.reports_dir(run_id) / name
        path.write_text(content, encoding="utf-8")
        return path

    def write_json_report(self, run_id: str, name: str, payload: Any) -> Path:
        return self.write_report(
            run_id, name, json.dumps(payload, sort_keys=True, ensure_ascii=False, indent=2) + "\n"
        )


# ---------------------------------------------------------------------------
# CE pair ingestion
# ---------------------------------------------------------------------------

_CSV_COLUMNS = ("id", "cause", "effect", "dataset", "message", "group")


def _pair_from_row(row: dict[str, str], line_no: int) -> CEPair:
    dataset = row.get("dataset") or "Other"
    group = (row.get("group") or "").strip()
    return CEPair(
        id=row.get("id") or f"ce-{line_no:04d}",
        cause_text=row["cause"],
        effect_text=row["effect"],
        dataset=Dataset(dataset),
        source_message=(row.get("message") or None),
        group=BeliefGroup(group) if group else None,
    )


def read_ce_pairs(path: str | Path) -> list[CEPair]:
    """Load CE pairs from CSV (id,cause,effect,dataset,message,group) or JSONL."""
    path = Path(path)
    text = path.read_text("utf-8")
    if path.suffix.lower() in (".jsonl", ".ndjson"):
        pairs = []
        for line in text.splitlines():
            if line.strip():
                pairs.append(CEPair.from_dict(json.loads(line)))
        return pairs
    reader = csv.DictReader(io.StringIO(text))
    missing = {"cause", "effect"} - set(reader.fieldnames or ())
    if missing:
        raise ValueError(f"CE pair CSV is missing columns: {sorted(missing)}")
    return [_pair_from_row(row, line_no) for line_no, row in enumerate(reader, start=1)]


# ---------------------------------------------------------------------------
# Probe verdict cache
# ---------------------------------------------------------------------------


def cache_key(
    evaluator: ModelRef,
    template_version: str,
    cause_text: str,
    effect_text: str,
    kind: ProbeKind,
) -> str:
    """Stable digest over everything that determines one probe answer."""
    return content_digest(
        {
            "evaluator": evaluator.key(),
            "template_version": template_version,
            "cause_text": cause_text,
            "effect_text": effect_text,
            "kind": kind.value,
        }
    )


class VerdictCache:
    """JSONL-backed idempotent cache of probe answers, keyed by cache_key.

    First insert per key wins; concurrent inserts of the same key are safe.
    With ``path=None`` the cache is memory-only.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._entries: dict[str, dict[str, Any]] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        record = json.loads(line)
                        self._entries.setdefault(record["key"], record)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, key: str) -> dict[str, Any] | None:
        return self._entries.get(key)

    def put(self, key: str, raw_answer: str, verdict: str) -> bool:
        """Insert if absent; returns True when this call stored the entry."""
        record = {"key": key, "raw_answer": raw_answer, "verdict": verdict}
        with self._lock:
            if key in self._entries:
                return False
            self._entries[key] = record
            if self.path:
                with open(self.path, "a", encoding="utf-8") as fh:
                    fh.write(canonical_json(record) + "\n")
        return True
