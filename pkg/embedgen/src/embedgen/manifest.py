"""JSONL utterance manifests: one object per line.

Only the fields embedgen touches are interpreted; everything else rides
along untouched so downstream consumers keep their metadata.
"""

from __future__ import annotations

import json

REQUIRED_FIELDS = ("id", "transcript")


class ManifestError(ValueError):
    pass


def read_manifest(path) -> list[dict]:
    records = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            for field in REQUIRED_FIELDS:
                if field not in record:
                    raise ManifestError(f"{path}:{lineno}: missing field {field!r}")
            if record["id"] in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate id {record['id']!r}")
            seen.add(record["id"])
            records.append(record)
    return records


def write_manifest(records, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")
