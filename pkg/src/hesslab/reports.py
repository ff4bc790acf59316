"""Deterministic CSV / aligned-text writers and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np


def fmt(value) -> str:
    """Shortest round-trip text for numbers; plain str otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    return str(value)


def write_rows(path, rows: list[dict], columns: list[str] | None = None) -> Path:
    path = Path(path)
    columns = columns or (list(rows[0]) if rows else [])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([fmt(r.get(c, "")) for c in columns])
    return path


def write_matrix(path, columns: list[str], data: np.ndarray) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def write_key_values(path, items: dict) -> Path:
    return write_rows(path, [{"key": k, "value": v} for k, v in items.items()], ["key", "value"])


def aligned_table(rows: list[dict], columns: list[str] | None = None, digits: int = 6) -> str:
    """Fixed-width text table for humans."""
    if not rows:
        return ""
    columns = columns or list(rows[0])

    def cell(v):
        if isinstance(v, (float, np.floating)):
            return f"{float(v):.{digits}g}"
        return fmt(v)

    body = [[cell(r.get(c, "")) for c in columns] for r in rows]
    widths = [max(len(c), *(len(b[i]) for b in body)) for i, c in enumerate(columns)]
    line = lambda cells: "  ".join(s.rjust(w) for s, w in zip(cells, widths))  # noqa: E731
    out = [line(columns), line(["-" * w for w in widths])]
    out += [line(b) for b in body]
    return "\n".join(out) + "\n"


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(out_dir, command: str, files, config: dict, options: dict) -> Path:
    """``manifest.json`` listing every output (with checksum) and the
    configuration and options the run used.  No timestamps, so repeated
    runs produce identical manifests."""
    out_dir = Path(out_dir)
    entries = []
    for f in sorted({Path(f).resolve() for f in files}):
        entries.append({"file": f.relative_to(out_dir.resolve()).as_posix(),
                        "bytes": f.stat().st_size, "sha256": sha256(f)})
    manifest = {"command": command, "options": options, "config": config, "files": entries}
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n",
                    encoding="utf-8")
    return path


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON serialisable: {type(obj).__name__}")
