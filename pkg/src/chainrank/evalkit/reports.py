"""Evaluation report files: per-example JSONL, a summary record, CSV tables."""

from __future__ import annotations

import csv
import io
import json

from .._io import atomic_write_text, write_jsonl


def write_report(path, rows, summary):
    """Per-example rows to ``path`` (JSONL) and ``summary`` to ``<path>.summary.json``."""
    write_jsonl(path, rows)
    summary_path = f"{path}.summary.json"
    atomic_write_text(summary_path, json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return summary_path


def write_csv(path, rows, columns=None):
    rows = list(rows)
    columns = list(columns or (rows[0].keys() if rows else []))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=columns, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    atomic_write_text(path, buf.getvalue())


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
