"""Small shared helpers: seed derivation and JSON Lines IO."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Iterable


def derived_seed(*parts: object) -> int:
    """Derive a stable 63-bit seed from arbitrary labeled parts.

    Every stage of the pipeline draws its seed as
    ``derived_seed(top_seed, stage_name, ...)`` so one top-level seed
    reproduces the whole run while stages stay statistically independent.
    """
    tag = ":".join(str(p) for p in parts)
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") >> 1


def dumps_canonical(obj: Any) -> str:
    """Serialize to JSON with a byte-stable layout (sorted keys, no spaces)."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=True)


def write_jsonl(path: str | Path, rows: Iterable[dict[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(dumps_canonical(row))
            fh.write("\n")


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows
