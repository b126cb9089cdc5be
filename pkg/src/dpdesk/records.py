"""Run records: the persistence unit of one experiment.

Records are stored one-per-line as JSON in append-only result files; each
run appends to its own file (named by config digest and seed) so concurrent
runs never interleave, and the report step merges files.

`canonical_bytes` is the record's deterministic identity: it excludes the
"timing" section (wall-clock noise) and serializes with sorted keys, so a
rerun with identical config and seed is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os


def config_digest(flat_config: dict) -> str:
    data = json.dumps(flat_config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(data.encode()).hexdigest()


def canonical_bytes(record: dict) -> bytes:
    core = {k: v for k, v in record.items() if k != "timing"}
    return json.dumps(core, sort_keys=True, separators=(",", ":")).encode()


def record_path(out_dir: str, record: dict) -> str:
    name = f"results-{record['config_digest'][:12]}-seed{record['seed']}.jsonl"
    return os.path.join(out_dir, name)


def append_record(out_dir: str, record: dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = record_path(out_dir, record)
    with open(path, "a") as f:
        f.write(json.dumps(record, sort_keys=True, separators=(",", ":")) + "\n")
    return path


def load_records(out_dir: str) -> list:
    """Merge every results file in a directory (report step)."""
    records = []
    for name in sorted(os.listdir(out_dir)):
        if name.startswith("results-") and name.endswith(".jsonl"):
            with open(os.path.join(out_dir, name)) as f:
                records.extend(json.loads(line) for line in f if line.strip())
    return records
