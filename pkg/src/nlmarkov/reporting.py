"""Shared report documents and CSV output.

Every verifier and CLI run produces the same JSON shape:

    {
      "schema": "nlmarkov.report/1",
      "kind": "<what ran>",
      "parameters": {...},
      "claims": [{"name": ..., "passed": ..., "witness": {...}}, ...],
      "passed": <all claims passed>,
      "details": {...}
    }

Documents contain no timestamps, floats serialize via repr (exact
round-trip), and keys are sorted, so a rerun with the same inputs is
byte-identical.  CSV files open with a schema comment line and print
floats with 17 significant digits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

REPORT_SCHEMA = "nlmarkov.report/1"
CSV_SCHEMA = "nlmarkov.csv/1"

__all__ = [
    "Claim",
    "report_document",
    "write_json_report",
    "write_csv",
    "format_float",
]


@dataclass(frozen=True)
class Claim:
    """One named pass/fail assertion with the numbers that back it."""

    name: str
    passed: bool
    witness: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "witness": _plain(self.witness),
        }


def _plain(value):
    """Recursively convert numpy scalars/arrays so json can emit them."""
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    return value


def report_document(
    kind: str,
    parameters: dict,
    claims: Sequence[Claim] = (),
    details: dict | None = None,
) -> dict:
    doc = {
        "schema": REPORT_SCHEMA,
        "kind": kind,
        "parameters": _plain(parameters),
        "claims": [c.to_dict() for c in claims],
        "passed": all(c.passed for c in claims),
    }
    if details is not None:
        doc["details"] = _plain(details)
    return doc


def write_json_report(path, doc: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_plain(doc), sort_keys=True, indent=2) + "\n")
    return path


def format_float(x) -> str:
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return str(x)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence],
              tag: str = "table") -> Path:
    """Write rows with a leading schema comment, e.g.

        # nlmarkov.csv/1 rate-report
        n,measured,bound
        0,2,2
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# {CSV_SCHEMA} {tag}", ",".join(columns)]
    for row in rows:
        lines.append(",".join(format_float(v) for v in row))
    path.write_text("\n".join(lines) + "\n")
    return path
